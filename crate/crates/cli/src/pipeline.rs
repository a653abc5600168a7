use std::fs::File;
use std::io::BufReader;

use hazardlab::eventlog::{
    apply_exclusions, correct_latency, parse_event_log, segment_grasps, EventLog, EventLogError,
    ExclusionReport, ExclusionRules, Segmentation,
};

use crate::error::{CliError, Result};
use crate::EventsArgs;

pub struct Ingested {
    /// Latency-corrected log of the included subjects.
    pub log: EventLog,
    pub exclusions: Option<ExclusionReport>,
    pub segmentation: Segmentation,
}

/// Parses, corrects, screens and segments the event log named in `args`.
pub fn ingest(args: &EventsArgs) -> Result<Ingested> {
    let file = File::open(&args.events).map_err(CliError::io(&args.events))?;
    let raw = parse_event_log(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", args.events.display())))?;
    let mut log = correct_latency(&raw, args.window).map_err(|e| match e {
        EventLogError::InvalidWindow(_) => CliError::config(e),
        other => CliError::data(other),
    })?;

    let exclusions = if args.no_exclusions || log.subjects.is_empty() {
        None
    } else {
        let rules = ExclusionRules {
            latency_ms: args.latency_ms,
            trial_duration_factor: args.trial_factor,
            require_complete: !args.keep_incomplete,
            ..ExclusionRules::default()
        };
        let report = apply_exclusions(&log, &rules).map_err(CliError::data)?;
        for (subject, reason) in &report.excluded {
            log::info!("excluding subject {subject}: {}", reason.as_str());
        }
        log.retain_subjects(&report.included);
        Some(report)
    };
    if log.subjects.is_empty() {
        log::warn!("no subjects to analyze");
    }

    let segmentation = segment_grasps(&log);
    log::info!(
        "{} subjects, {} episodes ({} rated), {} picks dropped",
        log.subjects.len(),
        segmentation.episodes.len(),
        segmentation.episodes.iter().filter(|e| e.is_rated()).count(),
        segmentation.dropped_picks
    );
    Ok(Ingested {
        log,
        exclusions,
        segmentation,
    })
}
