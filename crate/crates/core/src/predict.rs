//! Posterior-predictive survival curves and the empirical overlay.

use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hazardmodel::{survival, CovariateRow, HazardError, HazardParams};
use crate::inference::PosteriorChains;
use crate::stats;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("no covariate rows to predict for")]
    EmptyRows,
    #[error("posterior has no draws")]
    EmptyChains,
    #[error("requested {requested} draws but the posterior has {available}")]
    TooManyDraws { requested: usize, available: usize },
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("posterior columns must be log_lambda0, beta_success, beta_trust, eta")]
    BadNames,
    #[error(transparent)]
    Hazard(#[from] HazardError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Where a curve's values came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Provenance {
    /// Pooled posterior draw index and covariate row index.
    Posterior { draw: usize, row: usize },
    Empirical,
    /// Pointwise quantile across posterior curves.
    Band(f64),
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Posterior { draw, row } => write!(f, "draw={draw};row={row}"),
            Provenance::Empirical => f.write_str("empirical"),
            Provenance::Band(q) => write!(f, "q{:02}", (q * 100.0).round() as u32),
        }
    }
}

/// Survival values on a shared time grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

/// Band quantiles reported by [`posterior_survival_curves`].
pub const BAND_QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictiveCurves {
    pub grid: Vec<f64>,
    pub curves: Vec<SurvivalCurve>,
    pub q05: SurvivalCurve,
    pub q50: SurvivalCurve,
    pub q95: SurvivalCurve,
}

impl PredictiveCurves {
    pub const CURVES_HEADER: [&'static str; 4] = ["curve_id", "provenance", "t", "value"];
    pub const BAND_HEADER: [&'static str; 5] = ["t", "q05", "q50", "q95", "empirical"];

    /// Long format: one row per curve and grid point.
    pub fn write_curves_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CURVES_HEADER)?;
        for (id, c) in self.curves.iter().enumerate() {
            let prov = c.provenance.to_string();
            for (t, v) in self.grid.iter().zip(&c.values) {
                w.write_record([id.to_string(), prov.clone(), t.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// The band with the empirical curve alongside; `empirical` must be on
    /// the same grid.
    pub fn write_band_csv<W: Write>(&self, empirical: &SurvivalCurve, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::BAND_HEADER)?;
        for (i, t) in self.grid.iter().enumerate() {
            w.write_record([
                t.to_string(),
                self.q05.values[i].to_string(),
                self.q50.values[i].to_string(),
                self.q95.values[i].to_string(),
                empirical.values[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fraction of grid points where `empirical` lies within `[q05, q95]`.
    pub fn band_coverage(&self, empirical: &SurvivalCurve) -> f64 {
        let inside = (0..self.grid.len())
            .filter(|&i| {
                let v = empirical.values[i];
                self.q05.values[i] <= v && v <= self.q95.values[i]
            })
            .count();
        inside as f64 / self.grid.len() as f64
    }
}

/// `0, step, 2·step, …` up to and including `end`.
pub fn uniform_grid(end: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && end >= 0.0, "grid needs a positive step and non-negative end");
    let n = (end / step + 1e-9).floor() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

fn check_grid(grid: &[f64]) -> Result<(), PredictError> {
    if grid.is_empty() {
        return Err(PredictError::BadGrid("empty".into()));
    }
    if grid[0] != 0.0 {
        return Err(PredictError::BadGrid("must start at 0".into()));
    }
    if grid.len() > 1 {
        let step = grid[1] - grid[0];
        for (i, pair) in grid.windows(2).enumerate() {
            let d = pair[1] - pair[0];
            if !(d > 0.0) || (d - step).abs() > 1e-9 * step.max(pair[1].abs()) {
                return Err(PredictError::BadGrid(format!("not uniform at index {}", i + 1)));
            }
        }
    }
    Ok(())
}

/// Survival curves for `n_draws` posterior draws, sampled without
/// replacement, each paired with a uniformly chosen covariate row, plus the
/// pointwise 5/50/95% band across them.
pub fn posterior_survival_curves(
    chains: &PosteriorChains,
    rows: &[CovariateRow],
    grid: &[f64],
    n_draws: usize,
    seed: u64,
) -> Result<PredictiveCurves, PredictError> {
    if rows.is_empty() {
        return Err(PredictError::EmptyRows);
    }
    let available = chains.total_draws();
    if available == 0 || n_draws == 0 {
        return Err(PredictError::EmptyChains);
    }
    if n_draws > available {
        return Err(PredictError::TooManyDraws {
            requested: n_draws,
            available,
        });
    }
    if chains.names.len() != 4 || chains.names.iter().zip(HazardParams::NAMES).any(|(a, b)| a != b) {
        return Err(PredictError::BadNames);
    }
    check_grid(grid)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = index::sample(&mut rng, available, n_draws).into_vec();
    draws.sort_unstable();
    let pairs: Vec<(usize, usize)> = draws.into_iter().map(|d| (d, rng.random_range(0..rows.len()))).collect();

    let curves = pairs
        .par_iter()
        .map(|&(draw, row)| {
            let p = HazardParams::from_slice(chains.pooled_draw(draw));
            let values = grid
                .iter()
                .map(|&t| survival(&p, &rows[row], t))
                .collect::<Result<Vec<f64>, _>>()?;
            Ok(SurvivalCurve {
                values,
                provenance: Provenance::Posterior { draw, row },
            })
        })
        .collect::<Result<Vec<_>, PredictError>>()?;

    let band = |q: f64| {
        let values = (0..grid.len())
            .map(|i| {
                let mut col: Vec<f64> = curves.iter().map(|c| c.values[i]).collect();
                col.sort_by(f64::total_cmp);
                stats::quantile_sorted(&col, q)
            })
            .collect();
        SurvivalCurve {
            values,
            provenance: Provenance::Band(q),
        }
    };
    Ok(PredictiveCurves {
        grid: grid.to_vec(),
        q05: band(BAND_QUANTILES[0]),
        q50: band(BAND_QUANTILES[1]),
        q95: band(BAND_QUANTILES[2]),
        curves,
    })
}

/// `S(t) = #{tRT > t} / n` on the grid; constant 1 when there are no
/// rating times.
pub fn empirical_survival(rating_times: &[f64], grid: &[f64]) -> SurvivalCurve {
    if rating_times.is_empty() {
        log::warn!("no rating times; empirical survival is constant 1");
        return SurvivalCurve {
            values: vec![1.0; grid.len()],
            provenance: Provenance::Empirical,
        };
    }
    let mut sorted = rating_times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let values = grid
        .iter()
        .map(|&t| {
            let at_or_below = sorted.partition_point(|&v| v <= t);
            (sorted.len() - at_or_below) as f64 / n
        })
        .collect();
    SurvivalCurve {
        values,
        provenance: Provenance::Empirical,
    }
}
