//! SVG figures built from the CSV tables already written to disk, so each
//! plot shows exactly the numbers in its table.

use std::path::Path;

use crate::error::{CliError, Result};
use crate::svg::{Panel, Svg};

const BLUE: &str = "#3b6ea8";
const ORANGE: &str = "#d9822b";
const GREY: &str = "#555";

/// A CSV file read as text cells, looked up by column name.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    path: String,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let header = r
            .headers()
            .map_err(CliError::data)?
            .iter()
            .map(str::to_owned)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_owned).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(Self {
            header,
            rows,
            path: path.display().to_string(),
        })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("{}: missing column {name}", self.path)))
    }

    /// Column `name` of every row; blank cells are `None`.
    fn floats(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let k = self.col(name)?;
        self.rows
            .iter()
            .map(|r| {
                let cell = r[k].trim();
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse()
                        .map(Some)
                        .map_err(|e| CliError::Data(format!("{}: column {name}: {e}", self.path)))
                }
            })
            .collect()
    }

    fn required(&self, name: &str) -> Result<Vec<f64>> {
        self.floats(name)?
            .into_iter()
            .map(|v| v.ok_or_else(|| CliError::Data(format!("{}: blank cell in {name}", self.path))))
            .collect()
    }

    fn strings(&self, name: &str) -> Result<Vec<String>> {
        let k = self.col(name)?;
        Ok(self.rows.iter().map(|r| r[k].clone()).collect())
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

/// Per-algorithm box plot of trust change.
pub fn trust_change_box(summary_csv: &Path) -> Result<String> {
    let t = Table::read(summary_csv)?;
    let names = t.strings("algorithm")?;
    let cols = ["min", "whisker_low", "q1", "median", "q3", "whisker_high", "max", "mean"];
    let values: Vec<Vec<Option<f64>>> = cols.iter().map(|c| t.floats(c)).collect::<Result<_>>()?;
    let present: Vec<usize> = (0..names.len()).filter(|&i| values.iter().all(|c| c[i].is_some())).collect();

    let mut svg = Svg::new(520.0, 420.0);
    svg.title("Change in trust per grasp");
    let (lo, hi) = present.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
        (lo.min(values[0][i].unwrap()), hi.max(values[6][i].unwrap()))
    });
    let y = if present.is_empty() { (-1.0, 1.0) } else { padded(lo, hi) };
    let mut p = Panel::new(&mut svg, (80.0, 40.0, 410.0, 320.0), (0.4, names.len() as f64 + 0.6), y);
    let categories: Vec<(f64, &str)> = names.iter().enumerate().map(|(i, n)| (i as f64 + 1.0, n.as_str())).collect();
    p.category_axes(&categories, "algorithm", "trust change (slider points)");
    if present.is_empty() {
        p.no_data();
    }
    for &i in &present {
        let v = |c: usize| values[c][i].unwrap();
        let x = i as f64 + 1.0;
        let color = if i == 0 { BLUE } else { ORANGE };
        p.line((x, v(1)), (x, v(2)), GREY, false);
        p.line((x, v(4)), (x, v(5)), GREY, false);
        p.line((x - 0.12, v(1)), (x + 0.12, v(1)), GREY, false);
        p.line((x - 0.12, v(5)), (x + 0.12, v(5)), GREY, false);
        p.rect(x - 0.25, x + 0.25, v(2), v(4), color, "#222");
        p.line((x - 0.25, v(3)), (x + 0.25, v(3)), "#111", false);
        p.marker(x, v(7), "white");
        if v(0) < v(1) {
            p.marker(x, v(0), GREY);
        }
        if v(6) > v(5) {
            p.marker(x, v(6), GREY);
        }
    }
    Ok(svg.finish())
}

fn histogram_bars(t: &Table) -> Result<Vec<(f64, f64, f64)>> {
    let lo = t.required("bin_low")?;
    let hi = t.required("bin_high")?;
    let n = t.required("count")?;
    Ok(lo.into_iter().zip(hi).zip(n).map(|((a, b), c)| (a, b, c)).collect())
}

/// Bar chart of rated episodes by grasp number.
pub fn grasp_distribution(hist_csv: &Path) -> Result<String> {
    let bars = histogram_bars(&Table::read(hist_csv)?)?;
    let mut svg = Svg::new(520.0, 420.0);
    svg.title("Trust ratings by grasp number");
    let top = bars.iter().map(|b| b.2).fold(0.0, f64::max);
    let x = (bars.first().map_or(0.5, |b| b.0), bars.last().map_or(4.5, |b| b.1));
    let mut p = Panel::new(&mut svg, (80.0, 40.0, 410.0, 320.0), x, (0.0, (top * 1.08).max(1.0)));
    let labels: Vec<String> = bars.iter().map(|b| format!("{}", (b.0 + b.1) / 2.0)).collect();
    let categories: Vec<(f64, &str)> = bars
        .iter()
        .zip(&labels)
        .map(|(b, l)| ((b.0 + b.1) / 2.0, l.as_str()))
        .collect();
    p.category_axes(&categories, "grasp number", "rated grasps");
    if top == 0.0 {
        p.no_data();
    }
    for &(a, b, c) in &bars {
        if c > 0.0 {
            p.rect(a + 0.1, b - 0.1, 0.0, c, BLUE, "#222");
        }
    }
    Ok(svg.finish())
}

/// Stacked histograms of rating times for non-final and final grasps.
pub fn rating_time_histograms(early_csv: &Path, final_csv: &Path, axis_label: &str) -> Result<String> {
    let early = histogram_bars(&Table::read(early_csv)?)?;
    let last = histogram_bars(&Table::read(final_csv)?)?;
    let mut svg = Svg::new(640.0, 620.0);
    svg.title("Trust rating time");
    let all = early.iter().chain(&last);
    let x = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(b.0), hi.max(b.1)));
    let x = if x.0.is_finite() { x } else { (-10.0, 10.0) };
    for (k, (bars, name, color)) in [(&early, "non-final grasps", BLUE), (&last, "final grasps", ORANGE)]
        .into_iter()
        .enumerate()
    {
        let top = bars.iter().map(|b| b.2).fold(0.0, f64::max);
        let mut p = Panel::new(
            &mut svg,
            (80.0, 45.0 + k as f64 * 290.0, 530.0, 220.0),
            x,
            (0.0, (top * 1.08).max(1.0)),
        );
        p.axes(axis_label, "ratings");
        p.label(8.0, 16.0, name, color);
        if top == 0.0 {
            p.no_data();
        }
        for &(a, b, c) in bars.iter() {
            if c > 0.0 {
                p.rect(a, b, 0.0, c, color, "white");
            }
        }
        if x.0 < 0.0 && x.1 > 0.0 {
            p.line((0.0, 0.0), (0.0, (top * 1.08).max(1.0)), "#222", true);
        }
    }
    Ok(svg.finish())
}

/// Posterior band, median curve and empirical survival.
pub fn survival_overlay(band_csv: &Path, title: &str) -> Result<String> {
    let t = Table::read(band_csv)?;
    let grid = t.required("t")?;
    let q05 = t.required("q05")?;
    let q50 = t.required("q50")?;
    let q95 = t.required("q95")?;
    let emp = t.required("empirical")?;
    let mut svg = Svg::new(640.0, 440.0);
    svg.title(title);
    let x = (0.0, grid.last().copied().unwrap_or(1.0));
    let mut p = Panel::new(&mut svg, (80.0, 40.0, 530.0, 330.0), x, (0.0, 1.0));
    p.axes("seconds since pick", "survival S(t)");
    if grid.is_empty() {
        p.no_data();
    } else {
        p.band(&grid, &q05, &q95, BLUE);
        let median: Vec<(f64, f64)> = grid.iter().copied().zip(q50).collect();
        p.polyline(&median, BLUE, 2.0);
        let empirical: Vec<(f64, f64)> = grid.iter().copied().zip(emp).collect();
        p.step(&empirical, ORANGE, 2.0);
        p.label(300.0, 20.0, "posterior 5-95% band and median", BLUE);
        p.label(300.0, 38.0, "empirical", ORANGE);
    }
    Ok(svg.finish())
}
