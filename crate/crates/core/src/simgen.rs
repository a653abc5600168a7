//! Synthetic sessions with known hazard parameters.
//!
//! Each subject runs `trials_per_subject` trials of `grasps_per_trial`
//! grasps. A trial is Gamma or Echo with equal probability; Echo grasps fail
//! with `echo_failure_prob`. Each grasp is rated at most once, at a time drawn
//! from the hazard model, and a rating moves the slider up after a success
//! and down after a failure.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Open01};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{
    Algorithm, EventKind, EventLog, EventRecord, GraspEpisode, Rating, SubjectLog, DEFAULT_TRUST,
};
use crate::hazardmodel::{hazard, CovariateRow, HazardParams};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_subjects: usize,
    pub trials_per_subject: u32,
    pub grasps_per_trial: u8,
    pub echo_failure_prob: f64,
    /// Pick-to-place duration, normal and truncated to `(0, final_grasp_horizon)`.
    pub t_place_mean: f64,
    pub t_place_sd: f64,
    /// Seconds from a place to the next pick.
    pub inter_grasp_gap: f64,
    /// Seconds from the last pick of a trial to the trial end.
    pub final_grasp_horizon: f64,
    pub true_params: HazardParams,
    /// Slider points gained by a rating after a success.
    pub delta_up: f64,
    /// Slider points lost by a rating after a failure.
    pub delta_down: f64,
    pub initial_trust: f64,
    /// Round-trip time of each probe, normal and truncated at zero.
    pub rtt_ms_mean: f64,
    pub rtt_ms_sd: f64,
    pub probe_period: f64,
    /// Seconds from trial start to the first pick.
    pub pre_pick_delay: f64,
    /// Seconds from trial end to the next trial start.
    pub inter_trial_gap: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_subjects: 65,
            trials_per_subject: 10,
            grasps_per_trial: 4,
            echo_failure_prob: 0.5,
            t_place_mean: 10.0,
            t_place_sd: 1.0,
            inter_grasp_gap: 10.0,
            final_grasp_horizon: 60.0,
            true_params: HazardParams::new(0.02, 0.5, 0.0, 3.0),
            delta_up: 4.0,
            delta_down: 10.0,
            initial_trust: DEFAULT_TRUST,
            rtt_ms_mean: 0.0,
            rtt_ms_sd: 0.0,
            probe_period: 10.0,
            pre_pick_delay: 2.0,
            inter_trial_gap: 5.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        fn check(ok: bool, field: &'static str, message: &str) -> Result<(), SimError> {
            if ok {
                Ok(())
            } else {
                Err(SimError::InvalidConfig {
                    field,
                    message: message.to_owned(),
                })
            }
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        check(self.trials_per_subject >= 1, "trials_per_subject", "must be at least 1")?;
        check(self.grasps_per_trial >= 1, "grasps_per_trial", "must be at least 1")?;
        check(
            (0.0..=1.0).contains(&self.echo_failure_prob),
            "echo_failure_prob",
            "must lie in [0, 1]",
        )?;
        check(pos(self.t_place_mean), "t_place_mean", "must be positive")?;
        check(nonneg(self.t_place_sd), "t_place_sd", "must be non-negative")?;
        check(pos(self.inter_grasp_gap), "inter_grasp_gap", "must be positive")?;
        check(
            pos(self.final_grasp_horizon) && self.final_grasp_horizon > self.t_place_mean,
            "final_grasp_horizon",
            "must be positive and exceed t_place_mean",
        )?;
        let p = &self.true_params;
        check(
            !p.log_lambda0.is_nan() && p.log_lambda0 < f64::INFINITY,
            "true_params.log_lambda0",
            "must be finite or -inf",
        )?;
        check(p.beta_success.is_finite(), "true_params.beta_success", "must be finite")?;
        check(p.beta_trust.is_finite(), "true_params.beta_trust", "must be finite")?;
        check(p.eta.is_finite(), "true_params.eta", "must be finite")?;
        check(nonneg(self.delta_up), "delta_up", "must be non-negative")?;
        check(nonneg(self.delta_down), "delta_down", "must be non-negative")?;
        check(
            (0.0..=100.0).contains(&self.initial_trust),
            "initial_trust",
            "must lie in [0, 100]",
        )?;
        check(nonneg(self.rtt_ms_mean), "rtt_ms_mean", "must be non-negative")?;
        check(nonneg(self.rtt_ms_sd), "rtt_ms_sd", "must be non-negative")?;
        check(pos(self.probe_period), "probe_period", "must be positive")?;
        check(nonneg(self.pre_pick_delay), "pre_pick_delay", "must be non-negative")?;
        check(nonneg(self.inter_trial_gap), "inter_trial_gap", "must be non-negative")?;
        Ok(())
    }
}

/// Episodes as generated, before logging. Relative times are derived from
/// the absolute session times written to the log, so segmenting the log
/// reproduces them bit for bit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    pub episodes: Vec<GraspEpisode>,
}

impl GroundTruth {
    pub const CSV_HEADER: [&'static str; 9] = [
        "subject",
        "trial",
        "grasp",
        "algorithm",
        "success",
        "trust_at_pick",
        "t_place",
        "horizon",
        "tRT",
    ];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for e in &self.episodes {
            w.write_record([
                e.subject.clone(),
                e.trial.to_string(),
                e.grasp_number.to_string(),
                e.algorithm.to_string(),
                e.success.to_string(),
                e.trust_at_pick.to_string(),
                e.t_place.to_string(),
                e.horizon.to_string(),
                e.trust_rating_time.map(|t| t.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rating time for the uniform variate `u ∈ (0, 1]`: the `t` with
/// `S(t) = u`, or `None` when it falls after `horizon`.
pub fn rating_time_from_uniform(params: &HazardParams, x: &CovariateRow, horizon: f64, u: f64) -> Option<f64> {
    let target = -u.ln();
    let pre = hazard(params, x, false);
    let pre_total = if pre == 0.0 { 0.0 } else { pre * x.t_place };
    let t = if target <= pre_total {
        target / pre
    } else {
        let post = hazard(params, x, true);
        if post == 0.0 {
            return None;
        }
        x.t_place + (target - pre_total) / post
    };
    (t <= horizon).then_some(t)
}

/// Inverse-transform draw of a rating time; consumes exactly one uniform.
pub fn sample_rating_time<R: Rng + ?Sized>(
    params: &HazardParams,
    x: &CovariateRow,
    horizon: f64,
    rng: &mut R,
) -> Option<f64> {
    let u: f64 = Open01.sample(rng);
    rating_time_from_uniform(params, x, horizon, u)
}

/// Generates every subject's log and the matching ground truth. Subject
/// `i` uses ChaCha stream `i` keyed by `config.seed`, so output does not
/// depend on thread count.
pub fn simulate_sessions(config: &SimConfig) -> Result<(EventLog, GroundTruth), SimError> {
    config.validate()?;
    if config.n_subjects == 0 {
        log::warn!("n_subjects is 0; the log is empty");
    }
    let per_subject: Vec<(SubjectLog, Vec<GraspEpisode>)> = (0..config.n_subjects)
        .into_par_iter()
        .map(|i| simulate_subject(config, i))
        .collect();
    let mut log = EventLog::default();
    let mut truth = GroundTruth::default();
    for (s, eps) in per_subject {
        log.subjects.push(s);
        truth.episodes.extend(eps);
    }
    Ok((log, truth))
}

pub fn subject_id(index: usize) -> String {
    format!("S{:03}", index + 1)
}

fn simulate_subject(config: &SimConfig, index: usize) -> (SubjectLog, Vec<GraspEpisode>) {
    let subject = subject_id(index);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    // sd is validated, so the distribution is well formed
    let place_dist = Normal::new(config.t_place_mean, config.t_place_sd).expect("valid normal");

    let mut events: Vec<EventRecord> = Vec::new();
    let mut episodes = Vec::new();
    let mut slider = config.initial_trust;
    if slider != DEFAULT_TRUST {
        events.push(EventRecord::new(0.0, EventKind::Trust { value: slider }));
    }
    let mut t = 0.0;
    for trial in 1..=config.trials_per_subject {
        let algorithm = if rng.random_bool(0.5) { Algorithm::Gamma } else { Algorithm::Echo };
        events.push(EventRecord::new(t, EventKind::TrialStart { trial, algorithm }));
        let mut t_pick = t + config.pre_pick_delay;
        for grasp in 1..=config.grasps_per_trial {
            let is_final = grasp == config.grasps_per_trial;
            let success = match algorithm {
                Algorithm::Gamma => true,
                Algorithm::Echo => !rng.random_bool(config.echo_failure_prob),
            };
            let dt_place = loop {
                let v: f64 = place_dist.sample(&mut rng);
                if v > 0.0 && v < config.final_grasp_horizon {
                    break v;
                }
            };
            let window = if is_final { config.final_grasp_horizon } else { dt_place + config.inter_grasp_gap };
            let x = CovariateRow::new(success, slider, dt_place);
            let rating = sample_rating_time(&config.true_params, &x, window, &mut rng);

            let place_abs = t_pick + dt_place;
            let end_abs = t_pick + window;
            let trust_at_pick = slider;
            let mut ratings = Vec::new();
            events.push(EventRecord::new(t_pick, EventKind::Pick { grasp }));
            let place_event = EventRecord::new(place_abs, EventKind::Place { grasp, success });
            match rating {
                Some(r) => {
                    slider = if success {
                        (slider + config.delta_up).min(100.0)
                    } else {
                        (slider - config.delta_down).max(0.0)
                    };
                    let rating_abs = t_pick + r;
                    let trust_event = EventRecord::new(rating_abs, EventKind::Trust { value: slider });
                    if rating_abs < place_abs {
                        events.push(trust_event);
                        events.push(place_event);
                    } else {
                        events.push(place_event);
                        events.push(trust_event);
                    }
                    ratings.push(Rating {
                        t: rating_abs - t_pick,
                        value: slider,
                    });
                }
                None => events.push(place_event),
            }
            let mut episode = GraspEpisode {
                subject: subject.clone(),
                trial,
                grasp_number: grasp,
                is_final,
                algorithm,
                t_pick,
                t_place: place_abs - t_pick,
                success,
                trust_at_pick,
                horizon: end_abs - t_pick,
                ratings,
                trust_rating_time: None,
                trust_change: None,
            };
            episode.finalize_ratings();
            episodes.push(episode);
            t_pick = end_abs;
        }
        events.push(EventRecord::new(t_pick, EventKind::TrialEnd));
        t = t_pick + config.inter_trial_gap;
    }
    let session_end = events.last().map_or(0.0, |e| e.t);

    let rtt_dist = Normal::new(config.rtt_ms_mean, config.rtt_ms_sd).expect("valid normal");
    let n_probes = (session_end / config.probe_period).floor() as usize + 1;
    let probes: Vec<(f64, f64)> = (0..n_probes)
        .map(|k| (k as f64 * config.probe_period, rtt_dist.sample(&mut rng).max(0.0)))
        .collect();

    (
        SubjectLog {
            subject,
            events: merge_probes(events, &probes),
        },
        episodes,
    )
}

/// Delays each event by half the round-trip time of the nearest probe, keeps
/// the result non-decreasing, then merges the probes in at their own times.
fn merge_probes(events: Vec<EventRecord>, probes: &[(f64, f64)]) -> Vec<EventRecord> {
    let mut shifted = Vec::with_capacity(events.len() + probes.len());
    let mut floor = f64::NEG_INFINITY;
    for mut e in events {
        let nearest = probes
            .iter()
            .min_by(|a, b| (a.0 - e.t).abs().total_cmp(&(b.0 - e.t).abs()))
            .map_or(0.0, |p| p.1);
        if nearest > 0.0 {
            e.t += nearest / 2000.0;
        }
        e.t = e.t.max(floor);
        floor = e.t;
        shifted.push(e);
    }
    for &(t, rtt_ms) in probes {
        shifted.push(EventRecord::new(t, EventKind::Latency { rtt_ms }));
    }
    // stable: probes go after events logged at the same instant
    shifted.sort_by(|a, b| a.t.total_cmp(&b.t));
    shifted
}
