use std::io::Write;

use super::{Cohort, HazardError, SurvivalRecord};

/// Grid step, in seconds, when none is given.
pub const DEFAULT_INTERVAL_WIDTH: f64 = 0.5;

pub const INTERVAL_TABLE_HEADER: [&str; 8] =
    ["episode", "interval", "start", "e", "d", "x_success", "x_trust", "y"];

/// Whether unrated episodes enter the expansion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Censoring {
    /// Only rated episodes contribute.
    #[default]
    RatedOnly,
    /// Unrated episodes contribute exposure up to their horizon with no event.
    RightCensored,
}

/// One (episode, interval) cell of the Poisson expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalRow {
    /// Index of the source record in the slice given to the expansion.
    pub episode: usize,
    pub interval: usize,
    pub start: f64,
    /// Length of the grid cell, before truncation at the rating time.
    pub width: f64,
    /// Time at risk within the cell.
    pub e: f64,
    /// Whether the rating falls in this cell.
    pub d: bool,
    pub x_success: f64,
    pub x_trust: f64,
    /// Whether the stowage has been placed for the whole cell.
    pub y: bool,
    pub cohort: Cohort,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntervalTable {
    pub rows: Vec<IntervalRow>,
    pub n_episodes: usize,
    pub n_rated: usize,
}

impl IntervalTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HazardError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(INTERVAL_TABLE_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.episode.to_string(),
                r.interval.to_string(),
                r.start.to_string(),
                r.e.to_string(),
                u8::from(r.d).to_string(),
                r.x_success.to_string(),
                r.x_trust.to_string(),
                u8::from(r.y).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cell boundaries for one episode observed on `[0, end]`: multiples of
/// `width` up to the first one at or beyond `end`, plus the placement time.
fn boundaries(end: f64, t_place: f64, width: f64) -> Vec<f64> {
    let mut b = vec![0.0];
    let mut k = 1u64;
    loop {
        let g = k as f64 * width;
        b.push(g);
        if g >= end {
            break;
        }
        k += 1;
    }
    let last = *b.last().unwrap();
    if t_place > 0.0 && t_place < last && !b.contains(&t_place) {
        let pos = b.partition_point(|&v| v < t_place);
        b.insert(pos, t_place);
    }
    b
}

/// Expands episodes into Poisson cells on a uniform grid of step `width`,
/// additionally split at each episode's placement time so that `y` is
/// constant within every cell.
///
/// A rated episode contributes cells up to and including the one holding its
/// rating time, with cells closed on the right: the rating cell has `d = 1`
/// and exposure from its start to the rating. A rating at time zero yields a
/// single zero-exposure cell. Under [`Censoring::RightCensored`] an unrated
/// episode contributes cells up to its horizon with `d = 0`.
pub fn expand_to_intervals(
    records: &[SurvivalRecord],
    width: f64,
    censoring: Censoring,
) -> Result<IntervalTable, HazardError> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(HazardError::InvalidWidth(width));
    }
    let mut table = IntervalTable::default();
    for (i, rec) in records.iter().enumerate() {
        let (end, rated) = match rec.rating_time {
            Some(t) => {
                if !(t >= 0.0 && t <= rec.horizon) {
                    return Err(HazardError::RatingOutsideHorizon {
                        episode: i,
                        rating_time: t,
                        horizon: rec.horizon,
                    });
                }
                (t, true)
            }
            None => match censoring {
                Censoring::RatedOnly => continue,
                Censoring::RightCensored => (rec.horizon, false),
            },
        };
        table.n_episodes += 1;
        table.n_rated += usize::from(rated);

        let row = |interval: usize, start: f64, cell_end: f64, e: f64, d: bool| IntervalRow {
            episode: i,
            interval,
            start,
            width: cell_end - start,
            e,
            d,
            x_success: rec.x.x_success,
            x_trust: rec.x.x_trust,
            y: start >= rec.x.t_place,
            cohort: rec.cohort,
        };

        let b = boundaries(end, rec.x.t_place, width);
        if end == 0.0 {
            table.rows.push(row(0, 0.0, b[1], 0.0, rated));
            continue;
        }
        for (j, w) in b.windows(2).enumerate() {
            let (lo, hi) = (w[0], w[1]);
            if lo >= end {
                break;
            }
            let last = hi >= end;
            let e = if last { end - lo } else { hi - lo };
            table.rows.push(row(j, lo, hi, e, rated && last));
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazardmodel::CovariateRow;

    fn rec(rating: Option<f64>, t_place: f64, horizon: f64) -> SurvivalRecord {
        SurvivalRecord {
            x: CovariateRow {
                x_success: 1.0,
                x_trust: 0.4,
                t_place,
            },
            horizon,
            rating_time: rating,
            cohort: Cohort::Early,
        }
    }

    fn column<T>(t: &IntervalTable, f: impl Fn(&IntervalRow) -> T) -> Vec<T> {
        t.rows.iter().map(f).collect()
    }

    #[test]
    fn exposure_stops_at_rating() {
        let t = expand_to_intervals(&[rec(Some(3.2), 10.0, 20.0)], 1.0, Censoring::RatedOnly).unwrap();
        let e = column(&t, |r| r.e);
        assert_eq!(e.len(), 4);
        assert_eq!(&e[..3], &[1.0, 1.0, 1.0]);
        assert!((e[3] - 0.2).abs() < 1e-15);
        assert_eq!(column(&t, |r| r.d), vec![false, false, false, true]);
        assert_eq!(column(&t, |r| r.y), vec![false; 4]);
        assert_eq!(t.rows[3].width, 1.0);
    }

    #[test]
    fn rating_at_pick_is_a_single_zero_exposure_cell() {
        let t = expand_to_intervals(&[rec(Some(0.0), 10.0, 20.0)], 1.0, Censoring::RatedOnly).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].e, 0.0);
        assert!(t.rows[0].d);
    }

    #[test]
    fn grid_is_split_at_placement() {
        let t = expand_to_intervals(&[rec(Some(12.0), 10.0, 20.0)], 4.0, Censoring::RatedOnly).unwrap();
        assert_eq!(column(&t, |r| r.start), vec![0.0, 4.0, 8.0, 10.0]);
        assert_eq!(column(&t, |r| r.e), vec![4.0, 4.0, 2.0, 2.0]);
        assert_eq!(column(&t, |r| r.y), vec![false, false, false, true]);
        assert_eq!(column(&t, |r| r.d), vec![false, false, false, true]);
    }

    #[test]
    fn rating_on_a_grid_point_closes_that_cell() {
        let t = expand_to_intervals(&[rec(Some(3.0), 10.0, 20.0)], 1.0, Censoring::RatedOnly).unwrap();
        assert_eq!(column(&t, |r| r.e), vec![1.0, 1.0, 1.0]);
        assert!(t.rows[2].d);
    }

    #[test]
    fn unrated_episodes_skip_unless_censored() {
        let recs = [rec(None, 2.0, 5.0), rec(Some(1.5), 2.0, 5.0)];
        let t = expand_to_intervals(&recs, 1.0, Censoring::RatedOnly).unwrap();
        assert_eq!(t.n_episodes, 1);
        assert!(t.rows.iter().all(|r| r.episode == 1));

        let t = expand_to_intervals(&recs, 2.0, Censoring::RightCensored).unwrap();
        assert_eq!(t.n_episodes, 2);
        assert_eq!(t.n_rated, 1);
        let censored: Vec<_> = t.rows.iter().filter(|r| r.episode == 0).collect();
        assert_eq!(censored.iter().map(|r| r.e).sum::<f64>(), 5.0);
        assert!(censored.iter().all(|r| !r.d));
    }

    #[test]
    fn validation() {
        assert!(matches!(
            expand_to_intervals(&[], 0.0, Censoring::RatedOnly),
            Err(HazardError::InvalidWidth(_))
        ));
        assert!(matches!(
            expand_to_intervals(&[rec(Some(9.0), 2.0, 5.0)], 1.0, Censoring::RatedOnly),
            Err(HazardError::RatingOutsideHorizon { .. })
        ));
    }

    #[test]
    fn csv_export() {
        let t = expand_to_intervals(&[rec(Some(1.5), 1.0, 5.0)], 1.0, Censoring::RatedOnly).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "episode,interval,start,e,d,x_success,x_trust,y\n0,0,0,1,0,1,0.4,0\n0,1,1,0.5,1,1,0.4,1\n"
        );
    }
}
