use std::io::Write;

use super::{Algorithm, EventKind, EventLog, EventLogError, SubjectLog};

/// Slider position assumed before a subject first touches it (midpoint).
pub const DEFAULT_TRUST: f64 = 50.0;

/// Header of the episode table export.
pub const EPISODE_TABLE_HEADER: [&str; 11] = [
    "subject",
    "trial",
    "grasp",
    "is_final",
    "algorithm",
    "t_place",
    "success",
    "trust_at_pick",
    "horizon",
    "tRT",
    "trust_change",
];

/// A slider adjustment, timed relative to the episode's pick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub t: f64,
    pub value: f64,
}

/// One gripper-close to next-gripper-close window.
///
/// All times except `t_pick` are seconds since the pick.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspEpisode {
    pub subject: String,
    pub trial: u32,
    pub grasp_number: u8,
    /// Last grasp of its trial; the observation window runs to the trial end.
    pub is_final: bool,
    pub algorithm: Algorithm,
    /// Session time of the pick.
    pub t_pick: f64,
    pub t_place: f64,
    pub success: bool,
    pub trust_at_pick: f64,
    pub horizon: f64,
    pub ratings: Vec<Rating>,
    /// Trust rating time: time of the last rating in the episode.
    pub trust_rating_time: Option<f64>,
    pub trust_change: Option<f64>,
}

impl GraspEpisode {
    pub fn is_rated(&self) -> bool {
        self.trust_rating_time.is_some()
    }

    /// Fills `trust_rating_time` and `trust_change` from `ratings`.
    pub fn finalize_ratings(&mut self) {
        match self.ratings.last() {
            Some(last) => {
                self.trust_rating_time = Some(last.t);
                self.trust_change = Some(last.value - self.trust_at_pick);
            }
            None => {
                self.trust_rating_time = None;
                self.trust_change = None;
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Segmentation {
    pub episodes: Vec<GraspEpisode>,
    /// Picks that could not form an episode (no matching place, or a place
    /// outside the observation window).
    pub dropped_picks: usize,
    /// Place events with no open pick of the same grasp index.
    pub orphan_places: usize,
}

struct OpenEpisode {
    trial: u32,
    algorithm: Algorithm,
    grasp: u8,
    t_pick: f64,
    trust_at_pick: f64,
    place: Option<(f64, bool)>,
    ratings: Vec<Rating>,
}

struct Segmenter<'a> {
    subject: &'a str,
    out: Segmentation,
}

impl Segmenter<'_> {
    fn close(&mut self, open: Option<OpenEpisode>, end: f64, is_final: bool) {
        let Some(open) = open else { return };
        let Some((t_place_abs, success)) = open.place else {
            log::warn!(
                "subject {} trial {} grasp {}: pick without place, dropped",
                self.subject,
                open.trial,
                open.grasp
            );
            self.out.dropped_picks += 1;
            return;
        };
        let t_place = t_place_abs - open.t_pick;
        let horizon = end - open.t_pick;
        if !(t_place > 0.0 && t_place < horizon) {
            log::warn!(
                "subject {} trial {} grasp {}: place at {t_place}s outside (0, {horizon}), dropped",
                self.subject,
                open.trial,
                open.grasp
            );
            self.out.dropped_picks += 1;
            return;
        }
        let mut episode = GraspEpisode {
            subject: self.subject.to_owned(),
            trial: open.trial,
            grasp_number: open.grasp,
            is_final,
            algorithm: open.algorithm,
            t_pick: open.t_pick,
            t_place,
            success,
            trust_at_pick: open.trust_at_pick,
            horizon,
            ratings: open.ratings,
            trust_rating_time: None,
            trust_change: None,
        };
        episode.finalize_ratings();
        self.out.episodes.push(episode);
    }
}

/// Cuts each subject's log into grasp episodes.
///
/// An episode starts at a pick (t = 0). Its horizon is the next pick of the
/// same trial, or the trial's end (its `trial_end` event, else its last
/// non-latency event) when no further pick follows; such episodes are
/// final. Ratings are the trust events logged after the pick and up to the
/// horizon inclusive; a rating stamped exactly at the next pick belongs to
/// the episode it was logged in. The slider keeps its position across
/// episodes and trials, starting from [`DEFAULT_TRUST`].
pub fn segment_grasps(log: &EventLog) -> Segmentation {
    let mut total = Segmentation::default();
    for subject in &log.subjects {
        let seg = segment_subject(subject);
        total.episodes.extend(seg.episodes);
        total.dropped_picks += seg.dropped_picks;
        total.orphan_places += seg.orphan_places;
    }
    total
}

fn segment_subject(subject: &SubjectLog) -> Segmentation {
    let mut seg = Segmenter {
        subject: &subject.subject,
        out: Segmentation::default(),
    };
    let mut slider = DEFAULT_TRUST;
    let mut trial: Option<(u32, Algorithm)> = None;
    let mut open: Option<OpenEpisode> = None;
    let mut last_t: Option<f64> = None;

    for event in &subject.events {
        match event.kind {
            EventKind::Latency { .. } => continue,
            EventKind::TrialStart { trial: k, algorithm } => {
                if let Some(end) = last_t {
                    seg.close(open.take(), end, true);
                }
                trial = Some((k, algorithm));
            }
            EventKind::TrialEnd => {
                seg.close(open.take(), event.t, true);
                trial = None;
            }
            EventKind::Pick { grasp } => {
                seg.close(open.take(), event.t, false);
                match trial {
                    Some((k, algorithm)) => {
                        open = Some(OpenEpisode {
                            trial: k,
                            algorithm,
                            grasp,
                            t_pick: event.t,
                            trust_at_pick: slider,
                            place: None,
                            ratings: Vec::new(),
                        });
                    }
                    None => {
                        log::warn!("subject {}: pick outside a trial, dropped", subject.subject);
                        seg.out.dropped_picks += 1;
                    }
                }
            }
            EventKind::Place { grasp, success } => match open.as_mut() {
                Some(o) if o.grasp == grasp && o.place.is_none() => {
                    o.place = Some((event.t, success));
                }
                _ => {
                    log::warn!(
                        "subject {}: place for grasp {grasp} without an open pick",
                        subject.subject
                    );
                    seg.out.orphan_places += 1;
                }
            },
            EventKind::Trust { value } => {
                slider = value;
                if let Some(o) = open.as_mut() {
                    o.ratings.push(Rating {
                        t: event.t - o.t_pick,
                        value,
                    });
                }
            }
        }
        last_t = Some(event.t);
    }
    if let Some(end) = last_t {
        seg.close(open.take(), end, true);
    }
    seg.out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes episodes as CSV with [`EPISODE_TABLE_HEADER`]; absent optionals
/// are empty cells.
pub fn write_episode_table<W: Write>(
    episodes: &[GraspEpisode],
    out: W,
) -> Result<(), EventLogError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EPISODE_TABLE_HEADER)?;
    for e in episodes {
        w.write_record([
            e.subject.clone(),
            e.trial.to_string(),
            e.grasp_number.to_string(),
            e.is_final.to_string(),
            e.algorithm.to_string(),
            e.t_place.to_string(),
            e.success.to_string(),
            e.trust_at_pick.to_string(),
            e.horizon.to_string(),
            fmt_opt(e.trust_rating_time),
            fmt_opt(e.trust_change),
        ])?;
    }
    w.flush()?;
    Ok(())
}
