use std::collections::HashMap;

use super::{
    cumulative_hazard, hazard, Censoring, CovariateRow, HazardError, HazardParams, IntervalTable,
    SurvivalRecord, N_PARAMS,
};

type Vector = [f64; N_PARAMS];
type Matrix = [[f64; N_PARAMS]; N_PARAMS];

fn row_covariates(x_success: f64, x_trust: f64) -> CovariateRow {
    CovariateRow {
        x_success,
        x_trust,
        t_place: f64::NAN,
    }
}

/// Poisson log-likelihood of the expanded table, `Σ d·ln(e·λ) − e·λ`.
///
/// Cells with zero exposure and no rating contribute nothing; a rating in a
/// zero-exposure cell is an error.
pub fn log_likelihood(params: &HazardParams, table: &IntervalTable) -> Result<f64, HazardError> {
    let mut total = 0.0;
    for (k, r) in table.rows.iter().enumerate() {
        if r.e == 0.0 {
            if r.d {
                return Err(HazardError::ZeroExposureRating { row: k });
            }
            continue;
        }
        let mu = r.e * hazard(params, &row_covariates(r.x_success, r.x_trust), r.y);
        let term = if r.d { mu.ln() - mu } else { -mu };
        if !term.is_finite() {
            return Err(HazardError::NonFinite { row: k });
        }
        total += term;
    }
    Ok(total)
}

/// Gradient of [`log_likelihood`] with respect to
/// `(log_lambda0, beta_success, beta_trust, eta)`: `Σ (d − e·λ)·u`.
pub fn grad_log_likelihood(params: &HazardParams, table: &IntervalTable) -> Result<Vector, HazardError> {
    let mut g = [0.0; N_PARAMS];
    for (k, r) in table.rows.iter().enumerate() {
        if r.e == 0.0 && r.d {
            return Err(HazardError::ZeroExposureRating { row: k });
        }
        let x = row_covariates(r.x_success, r.x_trust);
        let mu = r.e * hazard(params, &x, r.y);
        if !mu.is_finite() {
            return Err(HazardError::NonFinite { row: k });
        }
        let resid = f64::from(u8::from(r.d)) - mu;
        for (gi, ui) in g.iter_mut().zip(x.design(r.y)) {
            *gi += resid * ui;
        }
    }
    Ok(g)
}

/// Log-likelihood of the piecewise-exponential model evaluated directly on
/// the episodes: `Σ ln λ(T) − Λ(T)` over rated episodes, plus `−Λ(horizon)`
/// for unrated ones when censoring is on. The rating contributes the hazard
/// in force just before it, so a rating exactly at placement uses `y = 0`.
pub fn exact_log_likelihood(
    params: &HazardParams,
    records: &[SurvivalRecord],
    censoring: Censoring,
) -> Result<f64, HazardError> {
    let mut total = 0.0;
    for (i, rec) in records.iter().enumerate() {
        let term = match (rec.rating_time, censoring) {
            (Some(t), _) => {
                let y = t > rec.x.t_place;
                hazard(params, &rec.x, y).ln() - cumulative_hazard(params, &rec.x, t)?
            }
            (None, Censoring::RightCensored) => -cumulative_hazard(params, &rec.x, rec.horizon)?,
            (None, Censoring::RatedOnly) => continue,
        };
        if !term.is_finite() {
            return Err(HazardError::NonFinite { row: i });
        }
        total += term;
    }
    Ok(total)
}

/// Exposure before and after placement for an episode observed up to `t`.
fn split_exposure(x: &CovariateRow, t: f64) -> (f64, f64) {
    (t.min(x.t_place), (t - x.t_place).max(0.0))
}

/// Analytic gradient of [`exact_log_likelihood`].
pub fn exact_grad_log_likelihood(
    params: &HazardParams,
    records: &[SurvivalRecord],
    censoring: Censoring,
) -> Result<Vector, HazardError> {
    let mut g = [0.0; N_PARAMS];
    for rec in records {
        let end = match (rec.rating_time, censoring) {
            (Some(t), _) => {
                for (gi, ui) in g.iter_mut().zip(rec.x.design(t > rec.x.t_place)) {
                    *gi += ui;
                }
                t
            }
            (None, Censoring::RightCensored) => rec.horizon,
            (None, Censoring::RatedOnly) => continue,
        };
        let (before, after) = split_exposure(&rec.x, end);
        let pre = hazard(params, &rec.x, false) * before;
        let post = hazard(params, &rec.x, true) * after;
        for (k, gi) in g.iter_mut().enumerate() {
            *gi -= pre * rec.x.design(false)[k] + post * rec.x.design(true)[k];
        }
    }
    Ok(g)
}

/// Hessian of [`exact_log_likelihood`]; the rating terms are linear in the
/// parameters so only the cumulative hazard contributes.
pub(crate) fn exact_hessian_log_likelihood(
    params: &HazardParams,
    records: &[SurvivalRecord],
    censoring: Censoring,
) -> Matrix {
    let mut h = [[0.0; N_PARAMS]; N_PARAMS];
    for rec in records {
        let end = match (rec.rating_time, censoring) {
            (Some(t), _) => t,
            (None, Censoring::RightCensored) => rec.horizon,
            (None, Censoring::RatedOnly) => continue,
        };
        let (before, after) = split_exposure(&rec.x, end);
        for (rate, y) in [
            (hazard(params, &rec.x, false) * before, false),
            (hazard(params, &rec.x, true) * after, true),
        ] {
            let u = rec.x.design(y);
            for a in 0..N_PARAMS {
                for b in 0..N_PARAMS {
                    h[a][b] -= rate * u[a] * u[b];
                }
            }
        }
    }
    h
}

/// One distinct covariate pattern of an interval table with its pooled
/// rating count and exposure.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Group {
    design: Vector,
    events: f64,
    exposure: f64,
}

/// Sufficient statistics of an interval table.
///
/// The Poisson log-likelihood depends on the cells only through the total
/// ratings and exposure per covariate pattern, plus the parameter-free term
/// `Σ d·ln e`. Pooling makes repeated evaluation (sampling, optimisation)
/// independent of the grid resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonSummary {
    groups: Vec<Group>,
    offset: f64,
    n_events: f64,
}

impl PoissonSummary {
    pub fn from_table(table: &IntervalTable) -> Result<Self, HazardError> {
        let mut index: HashMap<(u64, u64, bool), usize> = HashMap::new();
        let mut groups: Vec<Group> = Vec::new();
        let mut offset = 0.0;
        let mut n_events = 0.0;
        for (k, r) in table.rows.iter().enumerate() {
            if r.e == 0.0 {
                if r.d {
                    return Err(HazardError::ZeroExposureRating { row: k });
                }
                continue;
            }
            let d = f64::from(u8::from(r.d));
            if r.d {
                offset += r.e.ln();
                n_events += 1.0;
            }
            let key = (r.x_success.to_bits(), r.x_trust.to_bits(), r.y);
            let slot = *index.entry(key).or_insert_with(|| {
                groups.push(Group {
                    design: row_covariates(r.x_success, r.x_trust).design(r.y),
                    events: 0.0,
                    exposure: 0.0,
                });
                groups.len() - 1
            });
            groups[slot].events += d;
            groups[slot].exposure += r.e;
        }
        Ok(Self {
            groups,
            offset,
            n_events,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_events(&self) -> f64 {
        self.n_events
    }

    fn linear(design: &Vector, theta: &Vector) -> f64 {
        design.iter().zip(theta).map(|(u, t)| u * t).sum()
    }

    /// Same value as [`log_likelihood`] up to summation order.
    pub fn log_likelihood(&self, theta: &Vector) -> f64 {
        let mut total = self.offset;
        for g in &self.groups {
            let eta = Self::linear(&g.design, theta);
            total += g.events * eta - g.exposure * eta.exp();
        }
        total
    }

    pub fn gradient(&self, theta: &Vector) -> Vector {
        let mut out = [0.0; N_PARAMS];
        for g in &self.groups {
            let resid = g.events - g.exposure * Self::linear(&g.design, theta).exp();
            for (o, u) in out.iter_mut().zip(&g.design) {
                *o += resid * u;
            }
        }
        out
    }

    pub fn hessian(&self, theta: &Vector) -> Matrix {
        let mut h = [[0.0; N_PARAMS]; N_PARAMS];
        for g in &self.groups {
            let w = g.exposure * Self::linear(&g.design, theta).exp();
            for a in 0..N_PARAMS {
                for b in 0..N_PARAMS {
                    h[a][b] -= w * g.design[a] * g.design[b];
                }
            }
        }
        h
    }
}
