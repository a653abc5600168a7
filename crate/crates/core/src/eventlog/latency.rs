use super::{EventLog, EventLogError, EventRecord, SubjectLog};
use crate::stats;

/// Rolling-median width, in probes, used when the caller has no preference.
pub const DEFAULT_MEDIAN_WINDOW: usize = 5;

/// Shifts every non-latency event earlier by half the rolling-median RTT of
/// its nearest latency probe.
///
/// The median window is centred on each probe and truncated at the ends of
/// the probe sequence. Latency events keep their logged time. Non-latency
/// events keep their original relative order (a later event is never moved
/// before an earlier one); the corrected stream is then merged with the
/// probes by time, ties resolved by original position.
pub fn correct_latency(log: &EventLog, window: usize) -> Result<EventLog, EventLogError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(EventLogError::InvalidWindow(window));
    }
    let subjects = log
        .subjects
        .iter()
        .map(|s| correct_subject(s, window))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EventLog { subjects })
}

fn correct_subject(subject: &SubjectLog, window: usize) -> Result<SubjectLog, EventLogError> {
    let probes: Vec<(f64, f64)> = subject.latency_probes().collect();
    if let Some(&(_, rtt_ms)) = probes.iter().find(|(_, r)| r.is_nan() || *r < 0.0) {
        return Err(EventLogError::NegativeRtt {
            subject: subject.subject.clone(),
            rtt_ms,
        });
    }
    if probes.is_empty() {
        log::warn!(
            "subject {}: no latency probes, timestamps left uncorrected",
            subject.subject
        );
        return Ok(subject.clone());
    }

    let rtts: Vec<f64> = probes.iter().map(|p| p.1).collect();
    let smoothed = rolling_median(&rtts, window);
    let probe_times: Vec<f64> = probes.iter().map(|p| p.0).collect();

    // (corrected time, original index, event)
    let mut shifted: Vec<(f64, usize, &EventRecord)> = Vec::with_capacity(subject.events.len());
    let mut floor = f64::NEG_INFINITY;
    for (i, e) in subject.events.iter().enumerate() {
        if e.kind.is_latency() {
            shifted.push((e.t, i, e));
            continue;
        }
        let k = nearest_index(&probe_times, e.t);
        let mut t = e.t - smoothed[k] / 2000.0;
        if t < floor {
            t = floor;
        }
        floor = t;
        shifted.push((t, i, e));
    }
    shifted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    Ok(SubjectLog {
        subject: subject.subject.clone(),
        events: shifted
            .into_iter()
            .map(|(t, _, e)| EventRecord {
                t,
                kind: e.kind.clone(),
            })
            .collect(),
    })
}

/// Centred rolling median, truncated at the boundaries.
fn rolling_median(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            stats::median(&values[lo..hi])
        })
        .collect()
}

/// Index of the probe closest in time; ties go to the earlier probe.
fn nearest_index(sorted_times: &[f64], t: f64) -> usize {
    let after = sorted_times.partition_point(|&p| p < t);
    if after == 0 {
        return 0;
    }
    if after == sorted_times.len() {
        return after - 1;
    }
    if t - sorted_times[after - 1] <= sorted_times[after] - t {
        after - 1
    } else {
        after
    }
}

/// Median of all of a subject's RTT probes, in milliseconds.
pub fn median_rtt(log: &EventLog, subject: &str) -> Result<f64, EventLogError> {
    let s = log
        .subject(subject)
        .ok_or_else(|| EventLogError::UnknownSubject(subject.to_owned()))?;
    let rtts: Vec<f64> = s.latency_probes().map(|p| p.1).collect();
    if rtts.is_empty() {
        return Err(EventLogError::NoProbes(subject.to_owned()));
    }
    Ok(stats::median(&rtts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::EventKind;

    fn subject(events: Vec<EventRecord>) -> EventLog {
        EventLog {
            subjects: vec![SubjectLog {
                subject: "s".into(),
                events,
            }],
        }
    }

    fn probe(t: f64, rtt_ms: f64) -> EventRecord {
        EventRecord::new(t, EventKind::Latency { rtt_ms })
    }

    fn pick(t: f64) -> EventRecord {
        EventRecord::new(t, EventKind::Pick { grasp: 1 })
    }

    #[test]
    fn middle_probe_uses_rolling_median() {
        let log = subject(vec![
            probe(0.0, 40.0),
            probe(10.0, 300.0),
            pick(11.0),
            probe(20.0, 42.0),
        ]);
        let out = correct_latency(&log, 3).unwrap();
        let p = out.subjects[0]
            .events
            .iter()
            .find(|e| matches!(e.kind, EventKind::Pick { .. }))
            .unwrap();
        assert!((p.t - (11.0 - 0.021)).abs() < 1e-12);
    }

    #[test]
    fn zero_rtt_moves_nothing() {
        let log = subject(vec![probe(0.0, 0.0), pick(3.0), pick(4.5)]);
        let out = correct_latency(&log, 5).unwrap();
        assert_eq!(out, log);
    }

    #[test]
    fn constant_rtt_shifts_everything_by_half() {
        let log = subject(vec![
            probe(0.0, 100.0),
            pick(1.0),
            probe(10.0, 100.0),
            pick(12.0),
            probe(20.0, 100.0),
        ]);
        let out = correct_latency(&log, 5).unwrap();
        let picks: Vec<f64> = out.subjects[0]
            .events
            .iter()
            .filter(|e| !e.kind.is_latency())
            .map(|e| e.t)
            .collect();
        assert!((picks[0] - 0.95).abs() < 1e-12);
        assert!((picks[1] - 11.95).abs() < 1e-12);
        let probes: Vec<f64> = out.subjects[0].latency_probes().map(|p| p.0).collect();
        assert_eq!(probes, vec![0.0, 10.0, 20.0]);
    }

    #[test]
    fn shifted_event_moves_before_probe_without_reordering_others() {
        // a pick logged 10 ms after a probe moves 50 ms earlier, ahead of it
        let log = subject(vec![probe(10.0, 100.0), pick(10.01)]);
        let out = correct_latency(&log, 1).unwrap();
        assert!(out.subjects[0].events[0].kind == EventKind::Pick { grasp: 1 });
        // non-latency events never invert even when medians jump
        let log = subject(vec![
            probe(0.0, 0.0),
            pick(4.99),
            EventRecord::new(5.01, EventKind::Trust { value: 10.0 }),
            probe(10.0, 1000.0),
        ]);
        let out = correct_latency(&log, 1).unwrap();
        let ts: Vec<f64> = out.subjects[0].events.iter().map(|e| e.t).collect();
        assert!(ts.windows(2).all(|w| w[0] <= w[1]), "{ts:?}");
        assert!(matches!(out.subjects[0].events[1].kind, EventKind::Pick { .. }));
    }

    #[test]
    fn window_and_rtt_validation() {
        let log = subject(vec![probe(0.0, 10.0)]);
        assert!(matches!(correct_latency(&log, 4), Err(EventLogError::InvalidWindow(4))));
        assert!(matches!(correct_latency(&log, 0), Err(EventLogError::InvalidWindow(0))));
        let bad = subject(vec![probe(0.0, -5.0)]);
        assert!(matches!(correct_latency(&bad, 3), Err(EventLogError::NegativeRtt { .. })));
    }

    #[test]
    fn subject_without_probes_passes_through() {
        let log = subject(vec![pick(1.0)]);
        assert_eq!(correct_latency(&log, 5).unwrap(), log);
    }

    #[test]
    fn median_rtt_examples() {
        let log = subject(vec![probe(0.0, 10.0)]);
        assert_eq!(median_rtt(&log, "s").unwrap(), 10.0);
        let log = subject(vec![probe(0.0, 100.0), probe(1.0, 400.0), probe(2.0, 200.0)]);
        assert_eq!(median_rtt(&log, "s").unwrap(), 200.0);
        let log = subject(vec![probe(0.0, 100.0), probe(1.0, 400.0)]);
        assert_eq!(median_rtt(&log, "s").unwrap(), 250.0);
        let log = subject(vec![pick(0.0)]);
        assert!(matches!(median_rtt(&log, "s"), Err(EventLogError::NoProbes(_))));
        assert!(matches!(median_rtt(&log, "x"), Err(EventLogError::UnknownSubject(_))));
    }

    #[test]
    fn nearest_probe_ties_go_earlier() {
        assert_eq!(nearest_index(&[0.0, 10.0], 5.0), 0);
        assert_eq!(nearest_index(&[0.0, 10.0], 5.1), 1);
        assert_eq!(nearest_index(&[0.0, 10.0], -3.0), 0);
        assert_eq!(nearest_index(&[0.0, 10.0], 30.0), 1);
    }
}
