//! Session event logs: parsing, latency correction, grasp segmentation and
//! subject exclusion.
//!
//! A log is a line-delimited stream of JSON objects, one event per line:
//!
//! ```text
//! {"t":0.0,"subject":"S001","kind":"trial_start","trial":1,"algorithm":"gamma"}
//! {"t":2.0,"subject":"S001","kind":"pick","grasp":1}
//! {"t":5.5,"subject":"S001","kind":"trust","value":60.0}
//! {"t":12.0,"subject":"S001","kind":"place","grasp":1,"success":true}
//! ```

mod exclusion;
mod latency;
mod parse;
mod segment;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exclusion::{apply_exclusions, ExclusionReason, ExclusionReport, ExclusionRules};
pub use latency::{correct_latency, median_rtt, DEFAULT_MEDIAN_WINDOW};
pub use parse::{parse_event_log, write_event_log};
pub use segment::{
    segment_grasps, write_episode_table, GraspEpisode, Rating, Segmentation, DEFAULT_TRUST,
    EPISODE_TABLE_HEADER,
};

/// Robot reliability profile assigned to a trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Always places stowage correctly.
    Gamma,
    /// Misplaces stowage some fraction of the time.
    Echo,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Gamma => "gamma",
            Algorithm::Echo => "echo",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamma" => Ok(Algorithm::Gamma),
            "echo" => Ok(Algorithm::Echo),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Kind-specific payload of a logged event.
#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    TrialStart { trial: u32, algorithm: Algorithm },
    Pick { grasp: u8 },
    Place { grasp: u8, success: bool },
    Trust { value: f64 },
    Latency { rtt_ms: f64 },
    TrialEnd,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::TrialStart { .. } => "trial_start",
            EventKind::Pick { .. } => "pick",
            EventKind::Place { .. } => "place",
            EventKind::Trust { .. } => "trust",
            EventKind::Latency { .. } => "latency",
            EventKind::TrialEnd => "trial_end",
        }
    }

    pub fn is_latency(&self) -> bool {
        matches!(self, EventKind::Latency { .. })
    }
}

/// One timestamped event. Times are seconds on the subject's client clock.
#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub t: f64,
    pub kind: EventKind,
}

impl EventRecord {
    pub fn new(t: f64, kind: EventKind) -> Self {
        Self { t, kind }
    }
}

/// All events of one subject, non-decreasing in time.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectLog {
    pub subject: String,
    pub events: Vec<EventRecord>,
}

impl SubjectLog {
    pub fn latency_probes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.events.iter().filter_map(|e| match e.kind {
            EventKind::Latency { rtt_ms } => Some((e.t, rtt_ms)),
            _ => None,
        })
    }
}

/// Events grouped by subject, in order of each subject's first appearance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    pub subjects: Vec<SubjectLog>,
}

impl EventLog {
    pub fn subject(&self, id: &str) -> Option<&SubjectLog> {
        self.subjects.iter().find(|s| s.subject == id)
    }

    pub fn n_events(&self) -> usize {
        self.subjects.iter().map(|s| s.events.len()).sum()
    }

    /// Keeps only the listed subjects, preserving order.
    pub fn retain_subjects(&mut self, keep: &[String]) {
        self.subjects.retain(|s| keep.contains(&s.subject));
    }
}

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown event kind {kind:?}")]
    UnknownKind { line: usize, kind: String },
    #[error("line {line}: trust out of range [0, 100]: {value}")]
    TrustOutOfRange { line: usize, value: f64 },
    #[error("line {line}: negative rtt_ms {rtt_ms}")]
    NegativeRttLine { line: usize, rtt_ms: f64 },
    #[error("line {line}: timestamp {t} precedes previous event at {previous} for subject {subject}")]
    NonMonotone {
        line: usize,
        subject: String,
        t: f64,
        previous: f64,
    },
    #[error("rolling median window must be odd and positive, got {0}")]
    InvalidWindow(usize),
    #[error("subject {subject}: negative rtt_ms {rtt_ms}")]
    NegativeRtt { subject: String, rtt_ms: f64 },
    #[error("subject {0} has no latency probes")]
    NoProbes(String),
    #[error("unknown subject {0}")]
    UnknownSubject(String),
    #[error("no subjects to evaluate")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
