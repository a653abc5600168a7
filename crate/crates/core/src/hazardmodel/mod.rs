//! Proportional hazards with one time-varying covariate.
//!
//! The rating hazard of an episode is
//!
//! ```text
//! λ(t) = λ0 · exp(β_success·x_success + β_trust·x_trust + η·y(t))
//! ```
//!
//! where `y(t)` switches from 0 to 1 when the stowage is placed. With a
//! constant baseline the hazard is two-piece constant, so the cumulative
//! hazard, survival and CDF all have closed forms. Fitting goes through the
//! equivalent Poisson expansion in [`expand_to_intervals`].

mod intervals;
pub(crate) mod likelihood;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::GraspEpisode;

pub use intervals::{
    expand_to_intervals, Censoring, IntervalRow, IntervalTable, DEFAULT_INTERVAL_WIDTH,
    INTERVAL_TABLE_HEADER,
};
pub use likelihood::{
    exact_grad_log_likelihood, exact_log_likelihood, grad_log_likelihood, log_likelihood,
    PoissonSummary,
};

/// Number of free model parameters.
pub const N_PARAMS: usize = 4;

/// Hazard coefficients. The baseline rate is stored on the log scale so that
/// every coordinate is unconstrained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardParams {
    pub log_lambda0: f64,
    pub beta_success: f64,
    pub beta_trust: f64,
    pub eta: f64,
}

impl HazardParams {
    pub const NAMES: [&'static str; N_PARAMS] = ["log_lambda0", "beta_success", "beta_trust", "eta"];

    pub fn new(lambda0: f64, beta_success: f64, beta_trust: f64, eta: f64) -> Self {
        Self {
            log_lambda0: lambda0.ln(),
            beta_success,
            beta_trust,
            eta,
        }
    }

    pub fn lambda0(&self) -> f64 {
        self.log_lambda0.exp()
    }

    pub fn to_array(self) -> [f64; N_PARAMS] {
        [self.log_lambda0, self.beta_success, self.beta_trust, self.eta]
    }

    pub fn from_array(a: [f64; N_PARAMS]) -> Self {
        Self {
            log_lambda0: a[0],
            beta_success: a[1],
            beta_trust: a[2],
            eta: a[3],
        }
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Self::from_array([a[0], a[1], a[2], a[3]])
    }
}

/// Constant covariates of one episode plus its placement time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateRow {
    /// 1 if the impending grasp succeeds, else 0.
    pub x_success: f64,
    /// Slider level at pick, scaled to [0, 1].
    pub x_trust: f64,
    /// Seconds after pick at which `y` switches to 1.
    pub t_place: f64,
}

impl CovariateRow {
    pub fn new(success: bool, trust: f64, t_place: f64) -> Self {
        Self {
            x_success: if success { 1.0 } else { 0.0 },
            x_trust: trust / 100.0,
            t_place,
        }
    }

    pub fn from_episode(e: &GraspEpisode) -> Self {
        Self::new(e.success, e.trust_at_pick, e.t_place)
    }

    /// Covariate vector multiplying each parameter, for a given `y`.
    pub(crate) fn design(&self, y: bool) -> [f64; N_PARAMS] {
        [1.0, self.x_success, self.x_trust, if y { 1.0 } else { 0.0 }]
    }
}

/// Which grasps of a trial an analysis covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    /// Grasps followed by another grasp in the same trial.
    Early,
    /// The last grasp of each trial.
    Final,
}

impl Cohort {
    pub fn of(e: &GraspEpisode) -> Self {
        if e.is_final {
            Cohort::Final
        } else {
            Cohort::Early
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::Early => "early",
            Cohort::Final => "final",
        }
    }
}

impl std::str::FromStr for Cohort {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "early" => Ok(Cohort::Early),
            "final" => Ok(Cohort::Final),
            other => Err(format!("unknown cohort {other:?}")),
        }
    }
}

/// An episode reduced to what the survival model sees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurvivalRecord {
    pub x: CovariateRow,
    pub horizon: f64,
    pub rating_time: Option<f64>,
    pub cohort: Cohort,
}

impl SurvivalRecord {
    pub fn from_episode(e: &GraspEpisode) -> Self {
        Self {
            x: CovariateRow::from_episode(e),
            horizon: e.horizon,
            rating_time: e.trust_rating_time,
            cohort: Cohort::of(e),
        }
    }
}

/// Survival records of one cohort, in episode order.
pub fn cohort_records(episodes: &[GraspEpisode], cohort: Cohort) -> Vec<SurvivalRecord> {
    episodes
        .iter()
        .filter(|e| Cohort::of(e) == cohort)
        .map(SurvivalRecord::from_episode)
        .collect()
}

#[derive(Debug, Error)]
pub enum HazardError {
    #[error("interval width must be positive and finite, got {0}")]
    InvalidWidth(f64),
    #[error("episode {episode}: rating time {rating_time} outside [0, horizon {horizon}]")]
    RatingOutsideHorizon {
        episode: usize,
        rating_time: f64,
        horizon: f64,
    },
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("row {row}: rating with zero exposure")]
    ZeroExposureRating { row: usize },
    #[error("non-finite log-likelihood term at row {row}")]
    NonFinite { row: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Instantaneous rating rate for covariates `x` and placement state `y`.
pub fn hazard(params: &HazardParams, x: &CovariateRow, y: bool) -> f64 {
    let y = if y { 1.0 } else { 0.0 };
    (params.log_lambda0
        + params.beta_success * x.x_success
        + params.beta_trust * x.x_trust
        + params.eta * y)
        .exp()
}

/// Λ(t): the integral of the hazard from pick to `t`.
pub fn cumulative_hazard(params: &HazardParams, x: &CovariateRow, t: f64) -> Result<f64, HazardError> {
    if t.is_nan() || t < 0.0 {
        return Err(HazardError::NegativeTime(t));
    }
    let pre = hazard(params, x, false);
    let post = hazard(params, x, true);
    let before = t.min(x.t_place);
    let after = (t - x.t_place).max(0.0);
    // a zero rate times an infinite span contributes nothing
    let term = |rate: f64, span: f64| if rate == 0.0 { 0.0 } else { rate * span };
    Ok(term(pre, before) + term(post, after))
}

/// S(t) = exp(−Λ(t)).
pub fn survival(params: &HazardParams, x: &CovariateRow, t: f64) -> Result<f64, HazardError> {
    Ok((-cumulative_hazard(params, x, t)?).exp())
}

/// F(t) = 1 − S(t), the CDF of the rating time.
pub fn rating_time_cdf(params: &HazardParams, x: &CovariateRow, t: f64) -> Result<f64, HazardError> {
    Ok(-(-cumulative_hazard(params, x, t)?).exp_m1())
}
