//! Descriptive trust-change statistics.
//!
//! Every grasp is treated as an independent observation except in the
//! paired t-test, whose pairing unit is chosen by [`PairingUnit`].

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::eventlog::{Algorithm, GraspEpisode};
use crate::stats;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("paired t-test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("non-finite value in pair {0}")]
    NonFinite(usize),
    #[error("bin width must be positive and finite, got {0}")]
    InvalidBinWidth(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Box-plot statistics with type-7 quartiles. Whiskers reach the most
/// extreme data within 1.5 IQR of the box and never fall inside it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoxStats {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub lower_whisker: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub upper_whisker: f64,
    pub max: f64,
}

impl BoxStats {
    /// `None` for empty input.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = stats::quantile_sorted(&sorted, 0.25);
        let median = stats::quantile_sorted(&sorted, 0.5);
        let q3 = stats::quantile_sorted(&sorted, 0.75);
        let iqr = q3 - q1;
        let lo_fence = q1 - 1.5 * iqr;
        let hi_fence = q3 + 1.5 * iqr;
        let lower = sorted.iter().copied().find(|&v| v >= lo_fence).unwrap_or(q1);
        let upper = sorted.iter().rev().copied().find(|&v| v <= hi_fence).unwrap_or(q3);
        Some(Self {
            count: sorted.len(),
            mean: stats::mean(&sorted),
            sd: stats::sample_sd(&sorted),
            min: sorted[0],
            lower_whisker: lower.min(q1),
            q1,
            median,
            q3,
            upper_whisker: upper.max(q3),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Per-grasp trust change, by algorithm. An algorithm without rated grasps
/// has no statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrustChangeSummary {
    pub gamma: Option<BoxStats>,
    pub echo: Option<BoxStats>,
}

impl TrustChangeSummary {
    pub const CSV_HEADER: [&'static str; 11] = [
        "algorithm",
        "count",
        "mean",
        "sd",
        "min",
        "whisker_low",
        "q1",
        "median",
        "q3",
        "whisker_high",
        "max",
    ];

    pub fn get(&self, algorithm: Algorithm) -> Option<&BoxStats> {
        match algorithm {
            Algorithm::Gamma => self.gamma.as_ref(),
            Algorithm::Echo => self.echo.as_ref(),
        }
    }

    /// One row per algorithm; an empty summary has count 0 and blank cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for alg in [Algorithm::Gamma, Algorithm::Echo] {
            let row = match self.get(alg) {
                Some(b) => vec![
                    alg.to_string(),
                    b.count.to_string(),
                    b.mean.to_string(),
                    b.sd.to_string(),
                    b.min.to_string(),
                    b.lower_whisker.to_string(),
                    b.q1.to_string(),
                    b.median.to_string(),
                    b.q3.to_string(),
                    b.upper_whisker.to_string(),
                    b.max.to_string(),
                ],
                None => {
                    let mut r = vec![alg.to_string(), "0".to_owned()];
                    r.resize(Self::CSV_HEADER.len(), String::new());
                    r
                }
            };
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn trust_change_by_algorithm(episodes: &[GraspEpisode]) -> TrustChangeSummary {
    let changes = |alg: Algorithm| -> Vec<f64> {
        episodes
            .iter()
            .filter(|e| e.algorithm == alg)
            .filter_map(|e| e.trust_change)
            .collect()
    };
    TrustChangeSummary {
        gamma: BoxStats::from_values(&changes(Algorithm::Gamma)),
        echo: BoxStats::from_values(&changes(Algorithm::Echo)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TTestResult {
    pub n_pairs: usize,
    pub mean_diff: f64,
    /// `None` when the differences have zero variance.
    pub t_statistic: Option<f64>,
    pub df: usize,
    /// Two-sided; `None` when degenerate.
    pub p_value: Option<f64>,
    pub degenerate: bool,
}

impl TTestResult {
    pub const CSV_HEADER: [&'static str; 6] = ["n_pairs", "mean_diff", "t_statistic", "df", "p_value", "degenerate"];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        w.write_record([
            self.n_pairs.to_string(),
            self.mean_diff.to_string(),
            opt(self.t_statistic),
            self.df.to_string(),
            opt(self.p_value),
            self.degenerate.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Paired t-test on `a − b`, two-sided.
pub fn paired_t_test(pairs: &[(f64, f64)]) -> Result<TTestResult, AnalyticsError> {
    let n = pairs.len();
    if n < 2 {
        return Err(AnalyticsError::TooFewPairs(n));
    }
    if let Some(i) = pairs.iter().position(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(AnalyticsError::NonFinite(i));
    }
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let mean_diff = stats::mean(&diffs);
    let sd = stats::sample_sd(&diffs);
    let df = n - 1;
    if !(sd > 0.0) {
        return Ok(TTestResult {
            n_pairs: n,
            mean_diff,
            t_statistic: None,
            df,
            p_value: None,
            degenerate: true,
        });
    }
    let t = mean_diff / (sd / (n as f64).sqrt());
    Ok(TTestResult {
        n_pairs: n,
        mean_diff,
        t_statistic: Some(t),
        df,
        p_value: Some(stats::student_t_two_sided_p(t, df as f64)),
        degenerate: false,
    })
}

/// What one pair of the algorithm comparison averages over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingUnit {
    /// Each subject's mean Gamma change against their mean Echo change.
    #[default]
    Subject,
    /// As `Subject`, but separately for each grasp number.
    SubjectGrasp,
}

/// `(gamma mean, echo mean)` trust change per pairing unit, in subject
/// order. Units lacking rated grasps under either algorithm are skipped.
pub fn algorithm_pairs(episodes: &[GraspEpisode], unit: PairingUnit) -> Vec<(f64, f64)> {
    let mut order: Vec<(&str, u8)> = Vec::new();
    let mut sums: BTreeMap<(&str, u8), [(f64, usize); 2]> = BTreeMap::new();
    for e in episodes {
        let Some(change) = e.trust_change else { continue };
        let key = (
            e.subject.as_str(),
            match unit {
                PairingUnit::Subject => 0,
                PairingUnit::SubjectGrasp => e.grasp_number,
            },
        );
        let slot = sums.entry(key).or_insert_with(|| {
            order.push(key);
            [(0.0, 0); 2]
        });
        let k = match e.algorithm {
            Algorithm::Gamma => 0,
            Algorithm::Echo => 1,
        };
        slot[k].0 += change;
        slot[k].1 += 1;
    }
    order
        .into_iter()
        .filter_map(|key| {
            let [(gs, gn), (es, en)] = sums[&key];
            (gn > 0 && en > 0).then(|| (gs / gn as f64, es / en as f64))
        })
        .collect()
}

/// Counts over contiguous bins `[edges[i], edges[i+1])`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub total: usize,
}

impl Histogram {
    pub const CSV_HEADER: [&'static str; 3] = ["bin_low", "bin_high", "count"];

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([self.edges[i].to_string(), self.edges[i + 1].to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rated episodes by grasp number, one unit-wide bin per grasp from 1 to at
/// least 4.
pub fn rating_distribution_by_grasp(episodes: &[GraspEpisode]) -> Histogram {
    let max_grasp = episodes.iter().map(|e| e.grasp_number as usize).max().unwrap_or(0).max(4);
    let mut counts = vec![0usize; max_grasp];
    for e in episodes.iter().filter(|e| e.is_rated() && e.grasp_number >= 1) {
        counts[e.grasp_number as usize - 1] += 1;
    }
    Histogram {
        edges: (0..=max_grasp).map(|k| k as f64 + 0.5).collect(),
        total: counts.iter().sum(),
        counts,
    }
}

/// Time origin of the rating-time axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeCenter {
    /// Seconds since the pick.
    Pick,
    /// Seconds since the place; the pick sits at `−t_place`.
    #[default]
    Place,
}

/// Rating-time histograms of non-final and final grasps.
///
/// Both share bin edges at integer multiples of `bin_width`, spanning every
/// rated episode; with no ratings both are empty.
pub fn rating_time_histograms(
    episodes: &[GraspEpisode],
    bin_width: f64,
    center: TimeCenter,
) -> Result<(Histogram, Histogram), AnalyticsError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(AnalyticsError::InvalidBinWidth(bin_width));
    }
    let binned: Vec<(bool, i64)> = episodes
        .iter()
        .filter_map(|e| {
            let t = e.trust_rating_time?;
            let v = match center {
                TimeCenter::Pick => t,
                TimeCenter::Place => t - e.t_place,
            };
            Some((e.is_final, (v / bin_width).floor() as i64))
        })
        .collect();
    let (Some(lo), Some(hi)) = (
        binned.iter().map(|b| b.1).min(),
        binned.iter().map(|b| b.1).max(),
    ) else {
        return Ok((Histogram::default(), Histogram::default()));
    };
    let edges: Vec<f64> = (lo..=hi + 1).map(|k| k as f64 * bin_width).collect();
    let mut early = Histogram {
        edges: edges.clone(),
        counts: vec![0; (hi - lo + 1) as usize],
        total: 0,
    };
    let mut last = early.clone();
    for (is_final, k) in binned {
        let h = if is_final { &mut last } else { &mut early };
        h.counts[(k - lo) as usize] += 1;
        h.total += 1;
    }
    last.edges = edges;
    Ok((early, last))
}
