use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Algorithm, EventKind, EventLog, EventLogError, EventRecord, SubjectLog};

/// Flat on-disk form of one event line.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    t: f64,
    subject: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trial: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    algorithm: Option<Algorithm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grasp: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    success: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rtt_ms: Option<f64>,
}

impl WireRecord {
    fn from_event(subject: &str, event: &EventRecord) -> Self {
        let mut w = WireRecord {
            t: event.t,
            subject: subject.to_owned(),
            kind: event.kind.name().to_owned(),
            trial: None,
            algorithm: None,
            grasp: None,
            success: None,
            value: None,
            rtt_ms: None,
        };
        match event.kind {
            EventKind::TrialStart { trial, algorithm } => {
                w.trial = Some(trial);
                w.algorithm = Some(algorithm);
            }
            EventKind::Pick { grasp } => w.grasp = Some(grasp),
            EventKind::Place { grasp, success } => {
                w.grasp = Some(grasp);
                w.success = Some(success);
            }
            EventKind::Trust { value } => w.value = Some(value),
            EventKind::Latency { rtt_ms } => w.rtt_ms = Some(rtt_ms),
            EventKind::TrialEnd => {}
        }
        w
    }

    fn into_event(self, line: usize) -> Result<(String, EventRecord), EventLogError> {
        fn need<T>(v: Option<T>, field: &str, line: usize) -> Result<T, EventLogError> {
            v.ok_or_else(|| EventLogError::Malformed {
                line,
                message: format!("missing field `{field}`"),
            })
        }
        if !self.t.is_finite() {
            return Err(EventLogError::Malformed {
                line,
                message: format!("non-finite time {}", self.t),
            });
        }
        let kind = match self.kind.as_str() {
            "trial_start" => EventKind::TrialStart {
                trial: need(self.trial, "trial", line)?,
                algorithm: need(self.algorithm, "algorithm", line)?,
            },
            "pick" => EventKind::Pick {
                grasp: need(self.grasp, "grasp", line)?,
            },
            "place" => EventKind::Place {
                grasp: need(self.grasp, "grasp", line)?,
                success: need(self.success, "success", line)?,
            },
            "trust" => {
                let value = need(self.value, "value", line)?;
                if !(0.0..=100.0).contains(&value) {
                    return Err(EventLogError::TrustOutOfRange { line, value });
                }
                EventKind::Trust { value }
            }
            "latency" => {
                let rtt_ms = need(self.rtt_ms, "rtt_ms", line)?;
                if rtt_ms.is_nan() || rtt_ms < 0.0 {
                    return Err(EventLogError::NegativeRttLine { line, rtt_ms });
                }
                EventKind::Latency { rtt_ms }
            }
            "trial_end" => EventKind::TrialEnd,
            other => {
                return Err(EventLogError::UnknownKind {
                    line,
                    kind: other.to_owned(),
                })
            }
        };
        Ok((self.subject, EventRecord { t: self.t, kind }))
    }
}

/// Parses a line-delimited event stream. Blank lines are skipped; any
/// malformed line rejects the whole stream. Line numbers are 1-based.
pub fn parse_event_log<R: BufRead>(reader: R) -> Result<EventLog, EventLogError> {
    let mut log = EventLog::default();
    let mut index: HashMap<String, usize> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let wire: WireRecord =
            serde_json::from_str(trimmed).map_err(|e| EventLogError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let (subject, event) = wire.into_event(line_no)?;

        let slot = match index.get(&subject) {
            Some(&k) => k,
            None => {
                index.insert(subject.clone(), log.subjects.len());
                log.subjects.push(SubjectLog {
                    subject: subject.clone(),
                    events: Vec::new(),
                });
                log.subjects.len() - 1
            }
        };
        let events = &mut log.subjects[slot].events;
        if let Some(prev) = events.last() {
            if event.t < prev.t {
                return Err(EventLogError::NonMonotone {
                    line: line_no,
                    subject,
                    t: event.t,
                    previous: prev.t,
                });
            }
        }
        events.push(event);
    }
    Ok(log)
}

/// Writes the log in subject order, one JSON object per line.
pub fn write_event_log<W: Write>(log: &EventLog, mut out: W) -> Result<(), EventLogError> {
    for subject in &log.subjects {
        for event in &subject.events {
            let wire = WireRecord::from_event(&subject.subject, event);
            serde_json::to_writer(&mut out, &wire).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}
