//! Shared fixtures for the benchmarks under `benches/`.

use hazardlab::eventlog::segment_grasps;
use hazardlab::hazardmodel::{cohort_records, Cohort, SurvivalRecord};
use hazardlab::simgen::{simulate_sessions, SimConfig};

/// Survival records of one cohort from a default simulation of `n_subjects`.
pub fn simulated_records(n_subjects: usize, cohort: Cohort) -> Vec<SurvivalRecord> {
    let config = SimConfig {
        n_subjects,
        ..SimConfig::default()
    };
    let (log, _) = simulate_sessions(&config).expect("default simulation config is valid");
    cohort_records(&segment_grasps(&log).episodes, cohort)
}
