//! Survival analysis of trust-rating times in supervised robot grasping.
//!
//! The pipeline runs from raw interaction logs to a fitted proportional
//! hazards model:
//!
//! - [`eventlog`] parses session logs, corrects for network latency and cuts
//!   sessions into grasp episodes;
//! - [`analytics`] computes descriptive trust-change statistics;
//! - [`hazardmodel`] expands episodes into a Poisson interval table and
//!   evaluates the hazard, likelihood and survival functions;
//! - [`inference`] samples the posterior with adaptive Metropolis and
//!   reports split-chain r-hat;
//! - [`predict`] turns posterior draws into survival curves and bands;
//! - [`simgen`] generates synthetic sessions with known ground truth.

pub mod analytics;
pub mod eventlog;
pub mod hazardmodel;
pub mod inference;
pub mod predict;
pub mod simgen;
pub mod stats;

pub use hazardmodel::{CovariateRow, HazardParams, IntervalTable};
pub use inference::{FitConfig, ParamSummary, PosteriorChains};

pub use eventlog::{Algorithm, EventLog, GraspEpisode};


