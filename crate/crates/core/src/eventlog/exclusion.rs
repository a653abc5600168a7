use serde::Serialize;

use super::{segment_grasps, EventKind, EventLog, EventLogError, SubjectLog};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Incomplete,
    LongTrials,
    HighLatency,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::Incomplete => "incomplete",
            ExclusionReason::LongTrials => "long_trials",
            ExclusionReason::HighLatency => "high_latency",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExclusionRules {
    /// Subjects whose median RTT exceeds this many milliseconds are excluded.
    pub latency_ms: f64,
    /// A trial longer than this multiple of the cross-subject median trial
    /// duration marks its subject as having unusually long trials.
    pub trial_duration_factor: f64,
    pub require_complete: bool,
    pub trials_per_subject: usize,
    pub grasps_per_trial: usize,
}

impl Default for ExclusionRules {
    fn default() -> Self {
        Self {
            latency_ms: 300.0,
            trial_duration_factor: 3.0,
            require_complete: true,
            trials_per_subject: 10,
            grasps_per_trial: 4,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ExclusionReport {
    pub included: Vec<String>,
    pub excluded: Vec<(String, ExclusionReason)>,
}

/// Start-to-end duration of every trial in the subject's log. A trial with no
/// `trial_end` ends at its last non-latency event.
fn trial_durations(subject: &SubjectLog) -> Vec<f64> {
    let mut out = Vec::new();
    let mut current: Option<(f64, f64)> = None;
    for e in &subject.events {
        match e.kind {
            EventKind::Latency { .. } => {}
            EventKind::TrialStart { .. } => {
                if let Some((s, last)) = current.take() {
                    out.push(last - s);
                }
                current = Some((e.t, e.t));
            }
            EventKind::TrialEnd => {
                if let Some((s, _)) = current.take() {
                    out.push(e.t - s);
                }
            }
            _ => {
                if let Some((_, last)) = current.as_mut() {
                    *last = e.t;
                }
            }
        }
    }
    if let Some((s, last)) = current {
        out.push(last - s);
    }
    out
}

/// Classifies every subject as included or excluded. The first matching
/// reason wins, checked in the order incomplete, long trials, high latency.
/// Subjects without latency probes cannot fail the latency rule.
pub fn apply_exclusions(
    log: &EventLog,
    rules: &ExclusionRules,
) -> Result<ExclusionReport, EventLogError> {
    if log.subjects.is_empty() {
        return Err(EventLogError::Empty);
    }
    let durations: Vec<Vec<f64>> = log.subjects.iter().map(trial_durations).collect();
    let pooled: Vec<f64> = durations.iter().flatten().copied().collect();
    let duration_limit = if pooled.is_empty() {
        f64::INFINITY
    } else {
        rules.trial_duration_factor * stats::median(&pooled)
    };

    let mut report = ExclusionReport::default();
    for (subject, durations) in log.subjects.iter().zip(&durations) {
        let single = EventLog {
            subjects: vec![subject.clone()],
        };
        let reason = if rules.require_complete && !is_complete(&single, durations, rules) {
            Some(ExclusionReason::Incomplete)
        } else if durations.iter().any(|&d| d > duration_limit) {
            Some(ExclusionReason::LongTrials)
        } else {
            match super::median_rtt(&single, &subject.subject) {
                Ok(m) if m > rules.latency_ms => Some(ExclusionReason::HighLatency),
                Ok(_) => None,
                Err(EventLogError::NoProbes(_)) => {
                    log::warn!("subject {}: no latency probes", subject.subject);
                    None
                }
                Err(e) => return Err(e),
            }
        };
        match reason {
            Some(r) => report.excluded.push((subject.subject.clone(), r)),
            None => report.included.push(subject.subject.clone()),
        }
    }
    Ok(report)
}

fn is_complete(single: &EventLog, durations: &[f64], rules: &ExclusionRules) -> bool {
    if durations.len() < rules.trials_per_subject {
        return false;
    }
    let episodes = segment_grasps(single).episodes.len();
    episodes >= rules.trials_per_subject * rules.grasps_per_trial
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::{Algorithm, EventRecord};

    /// A subject with `trials` trials of four 10 s grasps and probes of the
    /// given RTT every 10 s.
    fn subject(id: &str, trials: u32, rtt_ms: f64, trial_len: f64) -> SubjectLog {
        let mut events = Vec::new();
        let mut t = 0.0;
        for k in 1..=trials {
            let t0 = t;
            events.push(EventRecord::new(
                t,
                EventKind::TrialStart {
                    trial: k,
                    algorithm: Algorithm::Echo,
                },
            ));
            events.push(EventRecord::new(t, EventKind::Latency { rtt_ms }));
            for g in 1..=4u8 {
                events.push(EventRecord::new(t + 1.0, EventKind::Pick { grasp: g }));
                events.push(EventRecord::new(
                    t + 5.0,
                    EventKind::Place {
                        grasp: g,
                        success: true,
                    },
                ));
                t += 10.0;
            }
            events.push(EventRecord::new(t0 + trial_len, EventKind::TrialEnd));
            t = t0 + trial_len + 1.0;
        }
        SubjectLog {
            subject: id.into(),
            events,
        }
    }

    #[test]
    fn classifies_each_rule() {
        let log = EventLog {
            subjects: vec![
                subject("ok", 10, 50.0, 45.0),
                subject("laggy", 10, 350.0, 45.0),
                subject("short", 9, 50.0, 45.0),
                subject("slow", 10, 50.0, 200.0),
            ],
        };
        let report = apply_exclusions(&log, &ExclusionRules::default()).unwrap();
        assert_eq!(report.included, vec!["ok".to_string()]);
        assert_eq!(
            report.excluded,
            vec![
                ("laggy".to_string(), ExclusionReason::HighLatency),
                ("short".to_string(), ExclusionReason::Incomplete),
                ("slow".to_string(), ExclusionReason::LongTrials),
            ]
        );
    }

    #[test]
    fn incomplete_takes_precedence_over_latency() {
        let log = EventLog {
            subjects: vec![subject("a", 3, 900.0, 45.0), subject("b", 10, 10.0, 45.0)],
        };
        let report = apply_exclusions(&log, &ExclusionRules::default()).unwrap();
        assert_eq!(report.excluded, vec![("a".into(), ExclusionReason::Incomplete)]);
    }

    #[test]
    fn empty_input_is_an_error() {
        let err = apply_exclusions(&EventLog::default(), &ExclusionRules::default());
        assert!(matches!(err, Err(EventLogError::Empty)));
    }
}
