//! Bayesian fitting of [`HazardParams`] to an interval table.

mod diagnostics;
mod optimize;
pub mod sampler;

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hazardmodel::likelihood as likelihood_internals;
use crate::hazardmodel::{
    Censoring, HazardError, HazardParams, IntervalTable, PoissonSummary,
    SurvivalRecord, N_PARAMS,
};
pub use diagnostics::{
    r_hat, split_r_hat, summarize, ParamRow, ParamSummary, RHat, INTERVAL_MASS, R_HAT_THRESHOLD,
};
use optimize::{maximize, Evaluation, Vector};
use sampler::{run_chain, LogDensity, ProposalShape, SamplerSettings};

/// Gradient max-norm at which the MAP search stops.
pub const MAP_TOLERANCE: f64 = 1e-8;

const INIT_RETRIES: usize = 100;
const MAP_MAX_ITER: usize = 500;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("no rated episodes to fit")]
    NoRatedEpisodes,
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("chain {chain}: no finite starting point after {INIT_RETRIES} prior draws")]
    InitFailed { chain: usize },
    #[error("optimizer did not converge (gradient max-norm {gradient_norm:e})")]
    NotConverged { gradient_norm: f64 },
    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,
    #[error("need at least 2 chains, got {0}")]
    TooFewChains(usize),
    #[error("need at least 4 draws per chain, got {0}")]
    TooFewDraws(usize),
    #[error("posterior file: {0}")]
    BadPosterior(String),
    #[error(transparent)]
    Hazard(#[from] HazardError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Prior on one unconstrained parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prior {
    Flat,
    Normal { mean: f64, sd: f64 },
}

impl Prior {
    fn log_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Flat => 0.0,
            Prior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z
            }
        }
    }

    fn gradient(&self, x: f64) -> f64 {
        match *self {
            Prior::Flat => 0.0,
            Prior::Normal { mean, sd } => -(x - mean) / (sd * sd),
        }
    }

    fn curvature(&self) -> f64 {
        match *self {
            Prior::Flat => 0.0,
            Prior::Normal { sd, .. } => -1.0 / (sd * sd),
        }
    }

    /// Starting-point draw; flat priors start from a standard normal.
    fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        match *self {
            Prior::Flat => z,
            Prior::Normal { mean, sd } => mean + sd * z,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub chains: usize,
    pub draws: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Priors on `(log_lambda0, beta_success, beta_trust, eta)`.
    pub priors: [Prior; N_PARAMS],
    pub target_accept: f64,
    pub proposal: ProposalShape,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            draws: 5_000,
            warmup: 2_000,
            seed: 0,
            priors: [Prior::Normal { mean: 0.0, sd: 2.0 }; N_PARAMS],
            target_accept: 0.30,
            proposal: ProposalShape::Dense,
        }
    }
}

impl FitConfig {
    pub fn flat() -> Self {
        Self {
            priors: [Prior::Flat; N_PARAMS],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::InvalidConfig(m.to_owned()));
        if self.chains < 2 {
            return bad("chains must be at least 2");
        }
        if self.draws < 4 {
            return bad("draws must be at least 4");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        for p in &self.priors {
            if let Prior::Normal { mean, sd } = p {
                if !(*sd > 0.0 && sd.is_finite() && mean.is_finite()) {
                    return bad("prior sd must be positive and finite");
                }
            }
        }
        Ok(())
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.priors.iter().zip(theta).map(|(p, x)| p.log_density(*x)).sum()
    }
}

/// Draws of one chain after warmup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    /// Row-major, one row of `dim` values per draw.
    pub draws: Vec<f64>,
    pub dim: usize,
    pub acceptance_rate: f64,
    pub seed: u64,
    pub stream: u64,
}

impl Chain {
    pub fn n_draws(&self) -> usize {
        self.draws.len() / self.dim
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column(&self, param: usize) -> Vec<f64> {
        self.draws.iter().skip(param).step_by(self.dim).copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChains {
    pub names: Vec<String>,
    pub chains: Vec<Chain>,
}

impl PosteriorChains {
    pub const CSV_PREFIX: [&'static str; 2] = ["chain", "draw"];

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(Chain::n_draws).sum()
    }

    /// Draw `i` of the pooled sequence (chain by chain).
    pub fn pooled_draw(&self, mut i: usize) -> &[f64] {
        for c in &self.chains {
            if i < c.n_draws() {
                return c.draw(i);
            }
            i -= c.n_draws();
        }
        panic!("draw index out of range");
    }

    /// Writes `chain,draw,<names...>` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = Self::CSV_PREFIX.iter().map(|s| s.to_string()).collect();
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (c, chain) in self.chains.iter().enumerate() {
            for d in 0..chain.n_draws() {
                let mut rec = vec![c.to_string(), d.to_string()];
                rec.extend(chain.draw(d).iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`PosteriorChains::write_csv`]. Sampler
    /// metadata (acceptance rate, seed) is not stored in the file and comes
    /// back as zero.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, InferenceError> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "chain" || &header[1] != "draw" {
            return Err(InferenceError::BadPosterior("header must start with chain,draw".into()));
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_owned).collect();
        let dim = names.len();
        let mut chains: Vec<Chain> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| -> Result<f64, InferenceError> {
                s.parse::<f64>()
                    .map_err(|e| InferenceError::BadPosterior(format!("row {}: {e}", line + 2)))
            };
            let c: usize = rec[0]
                .parse()
                .map_err(|e| InferenceError::BadPosterior(format!("row {}: {e}", line + 2)))?;
            if c > chains.len() {
                return Err(InferenceError::BadPosterior(format!("row {}: chain index skips", line + 2)));
            }
            if c == chains.len() {
                chains.push(Chain {
                    draws: Vec::new(),
                    dim,
                    acceptance_rate: 0.0,
                    seed: 0,
                    stream: c as u64,
                });
            }
            for k in 0..dim {
                chains[c].draws.push(parse(&rec[2 + k])?);
            }
        }
        Ok(Self { names, chains })
    }
}

/// Log posterior over the pooled sufficient statistics of a table.
struct HazardPosterior<'a> {
    summary: PoissonSummary,
    config: &'a FitConfig,
}

impl LogDensity for HazardPosterior<'_> {
    fn dim(&self) -> usize {
        N_PARAMS
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let theta: Vector = [x[0], x[1], x[2], x[3]];
        let v = self.summary.log_likelihood(&theta) + self.config.log_prior(x);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    }
}

fn prepare(table: &IntervalTable, config: &FitConfig) -> Result<PoissonSummary, InferenceError> {
    config.validate()?;
    if table.n_rated == 0 || !table.rows.iter().any(|r| r.d) {
        return Err(InferenceError::NoRatedEpisodes);
    }
    Ok(PoissonSummary::from_table(table)?)
}

/// Samples the posterior with independent adaptive-Metropolis chains.
///
/// Chain `k` draws from a ChaCha stream `k` keyed by `config.seed`, starts
/// from a draw of the priors, and runs on the rayon pool; output is
/// identical for identical inputs regardless of thread count.
pub fn fit(table: &IntervalTable, config: &FitConfig) -> Result<PosteriorChains, InferenceError> {
    let summary = prepare(table, config)?;
    let target = HazardPosterior { summary, config };
    let settings = SamplerSettings {
        draws: config.draws,
        warmup: config.warmup,
        target_accept: config.target_accept,
        shape: config.proposal,
    };
    let chains = (0..config.chains)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64);
            let init = (0..INIT_RETRIES)
                .map(|_| config.priors.map(|p| p.sample(&mut rng)))
                .find(|x| target.log_density(x).is_finite())
                .ok_or(InferenceError::InitFailed { chain: k })?;
            let run = run_chain(&target, &init, &settings, &mut rng);
            Ok(Chain {
                draws: run.draws,
                dim: N_PARAMS,
                acceptance_rate: run.acceptance_rate,
                seed: config.seed,
                stream: k as u64,
            })
        })
        .collect::<Result<Vec<_>, InferenceError>>()?;
    Ok(PosteriorChains {
        names: HazardParams::NAMES.iter().map(|s| s.to_string()).collect(),
        chains,
    })
}

fn add_prior(config: &FitConfig, theta: &Vector, e: &mut Evaluation) {
    for k in 0..N_PARAMS {
        let p = &config.priors[k];
        e.value += p.log_density(theta[k]);
        e.gradient[k] += p.gradient(theta[k]);
        e.hessian[k][k] += p.curvature();
    }
}

/// Starting point for the optimizer: the constant-hazard estimate for the
/// baseline, zero coefficients.
fn map_start(events: f64, exposure: f64) -> Vector {
    let rate = if events > 0.0 && exposure > 0.0 { events / exposure } else { 1.0 };
    [rate.ln(), 0.0, 0.0, 0.0]
}

/// Posterior mode on the expanded table, by damped Newton ascent with a
/// backtracking line search; converged when the gradient max-norm is below
/// [`MAP_TOLERANCE`].
pub fn map_estimate(table: &IntervalTable, config: &FitConfig) -> Result<HazardParams, InferenceError> {
    let summary = prepare(table, config)?;
    let exposure: f64 = table.rows.iter().map(|r| r.e).sum();
    let init = map_start(summary.n_events(), exposure);
    let theta = maximize(
        |t| {
            let mut e = Evaluation {
                value: summary.log_likelihood(t),
                gradient: summary.gradient(t),
                hessian: summary.hessian(t),
            };
            add_prior(config, t, &mut e);
            e.value.is_finite().then_some(e)
        },
        init,
        MAP_TOLERANCE,
        MAP_MAX_ITER,
    )?;
    Ok(HazardParams::from_array(theta))
}

/// Posterior mode of the piecewise-exponential likelihood evaluated directly
/// on the episodes, without interval expansion.
pub fn map_estimate_records(
    records: &[SurvivalRecord],
    censoring: Censoring,
    config: &FitConfig,
) -> Result<HazardParams, InferenceError> {
    config.validate()?;
    let events = records.iter().filter(|r| r.rating_time.is_some()).count() as f64;
    if events == 0.0 {
        return Err(InferenceError::NoRatedEpisodes);
    }
    let exposure: f64 = records
        .iter()
        .filter_map(|r| match (r.rating_time, censoring) {
            (Some(t), _) => Some(t),
            (None, Censoring::RightCensored) => Some(r.horizon),
            (None, Censoring::RatedOnly) => None,
        })
        .sum();
    let theta = maximize(
        |t| {
            let p = HazardParams::from_array(*t);
            let value = likelihood_internals::exact_log_likelihood(&p, records, censoring).ok()?;
            let gradient = likelihood_internals::exact_grad_log_likelihood(&p, records, censoring).ok()?;
            let hessian = likelihood_internals::exact_hessian_log_likelihood(&p, records, censoring);
            let mut e = Evaluation {
                value,
                gradient,
                hessian,
            };
            add_prior(config, t, &mut e);
            e.value.is_finite().then_some(e)
        },
        map_start(events, exposure),
        MAP_TOLERANCE,
        MAP_MAX_ITER,
    )?;
    Ok(HazardParams::from_array(theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazardmodel::{expand_to_intervals, Cohort, CovariateRow};

    fn one_episode(rating: f64) -> Vec<SurvivalRecord> {
        vec![SurvivalRecord {
            x: CovariateRow {
                x_success: 0.0,
                x_trust: 0.0,
                t_place: 100.0,
            },
            horizon: 100.0,
            rating_time: Some(rating),
            cohort: Cohort::Final,
        }]
    }

    #[test]
    fn flat_map_of_single_rating_is_inverse_exposure() {
        let table = expand_to_intervals(&one_episode(7.3), 0.5, Censoring::RatedOnly).unwrap();
        let p = map_estimate(&table, &FitConfig::flat()).unwrap();
        assert!((p.lambda0() - 1.0 / 7.3).abs() < 1e-9, "{}", p.lambda0());
        let q = map_estimate_records(&one_episode(7.3), Censoring::RatedOnly, &FitConfig::flat()).unwrap();
        assert!((q.lambda0() - 1.0 / 7.3).abs() < 1e-9);
    }

    #[test]
    fn tight_priors_pin_the_mode() {
        let table = expand_to_intervals(&one_episode(2.0), 0.5, Censoring::RatedOnly).unwrap();
        let target = [-1.0, 0.7, -0.3, 2.2];
        let config = FitConfig {
            priors: target.map(|m| Prior::Normal { mean: m, sd: 1e-3 }),
            ..FitConfig::default()
        };
        let p = map_estimate(&table, &config).unwrap();
        for (a, b) in p.to_array().iter().zip(target) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn fit_requires_ratings_and_valid_config() {
        let empty = IntervalTable::default();
        assert!(matches!(fit(&empty, &FitConfig::default()), Err(InferenceError::NoRatedEpisodes)));
        let table = expand_to_intervals(&one_episode(2.0), 0.5, Censoring::RatedOnly).unwrap();
        let bad = FitConfig {
            chains: 1,
            ..FitConfig::default()
        };
        assert!(matches!(fit(&table, &bad), Err(InferenceError::InvalidConfig(_))));
        let bad = FitConfig {
            priors: [Prior::Normal { mean: 0.0, sd: 0.0 }; 4],
            ..FitConfig::default()
        };
        assert!(matches!(fit(&table, &bad), Err(InferenceError::InvalidConfig(_))));
    }

    #[test]
    fn posterior_csv_round_trips() {
        let chains = PosteriorChains {
            names: HazardParams::NAMES.iter().map(|s| s.to_string()).collect(),
            chains: (0..2)
                .map(|c| Chain {
                    draws: (0..12).map(|i| (i * (c + 1)) as f64 * 0.1).collect(),
                    dim: 4,
                    acceptance_rate: 0.0,
                    seed: 0,
                    stream: c as u64,
                })
                .collect(),
        };
        let mut buf = Vec::new();
        chains.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("chain,draw,log_lambda0,beta_success,beta_trust,eta\n0,0,0,0.1,0.2"));
        assert_eq!(PosteriorChains::read_csv(&buf[..]).unwrap(), chains);
        assert_eq!(chains.pooled_draw(4), chains.chains[1].draw(1));
        assert_eq!(chains.pooled_draw(2), chains.chains[0].draw(2));
    }
}
