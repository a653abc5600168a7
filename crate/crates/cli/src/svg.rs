//! Minimal SVG drawing: panels with linear axes, rectangles, lines, step
//! curves and text.

use std::fmt::Write;

pub const FONT: &str = "font-family=\"Helvetica, Arial, sans-serif\"";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick positions covering `[lo, hi]` at a 1/2/5 × 10^k spacing.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        "0".to_owned()
    } else {
        format!("{r}")
    }
}

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn title(&mut self, text: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15" {FONT}>{}</text>"#,
            self.width / 2.0,
            escape(text)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// A plotting area at `(left, top)` of size `width × height` in pixels,
/// mapping data ranges `x` and `y` onto it.
pub struct Panel<'a> {
    svg: &'a mut Svg,
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl<'a> Panel<'a> {
    pub fn new(svg: &'a mut Svg, rect: (f64, f64, f64, f64), x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(a, b): (f64, f64)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        Self {
            svg,
            left: rect.0,
            top: rect.1,
            width: rect.2,
            height: rect.3,
            x: widen(x),
            y: widen(y),
        }
    }

    pub fn sx(&self, v: f64) -> f64 {
        self.left + (v - self.x.0) / (self.x.1 - self.x.0) * self.width
    }

    pub fn sy(&self, v: f64) -> f64 {
        self.top + self.height - (v - self.y.0) / (self.y.1 - self.y.0) * self.height
    }

    fn raw(&mut self, s: String) {
        self.svg.body.push_str(&s);
        self.svg.body.push('\n');
    }

    /// Frame, ticks, tick labels and axis labels.
    pub fn axes(&mut self, x_label: &str, y_label: &str) {
        let ticks: Vec<(f64, String)> = nice_ticks(self.x.0, self.x.1, 6)
            .into_iter()
            .map(|v| (v, fmt_tick(v)))
            .collect();
        self.axes_with(&ticks, x_label, y_label);
    }

    /// Like [`Panel::axes`] with named x positions instead of numeric ticks.
    pub fn category_axes(&mut self, categories: &[(f64, &str)], x_label: &str, y_label: &str) {
        let ticks: Vec<(f64, String)> = categories.iter().map(|(v, s)| (*v, s.to_string())).collect();
        self.axes_with(&ticks, x_label, y_label);
    }

    fn axes_with(&mut self, x_ticks: &[(f64, String)], x_label: &str, y_label: &str) {
        let (l, t, w, h) = (self.left, self.top, self.width, self.height);
        self.raw(format!(
            r##"<rect x="{l:.1}" y="{t:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#333"/>"##
        ));
        let bottom = t + h;
        for (v, text) in x_ticks {
            let px = self.sx(*v);
            self.raw(format!(
                r##"<line x1="{px:.1}" y1="{bottom:.1}" x2="{px:.1}" y2="{:.1}" stroke="#333"/><text x="{px:.1}" y="{:.1}" text-anchor="middle" font-size="11" {FONT}>{}</text>"##,
                bottom + 5.0,
                bottom + 18.0,
                escape(text)
            ));
        }
        for v in nice_ticks(self.y.0, self.y.1, 5) {
            let py = self.sy(v);
            self.raw(format!(
                r##"<line x1="{:.1}" y1="{py:.1}" x2="{l:.1}" y2="{py:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11" {FONT}>{}</text>"##,
                l - 5.0,
                l - 8.0,
                py + 4.0,
                fmt_tick(v)
            ));
        }
        self.raw(format!(
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12" {FONT}>{}</text>"#,
            l + w / 2.0,
            bottom + 36.0,
            escape(x_label)
        ));
        let (cx, cy) = (l - 44.0, t + h / 2.0);
        self.raw(format!(
            r#"<text x="{cx:.1}" y="{cy:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 {cx:.1} {cy:.1})" {FONT}>{}</text>"#,
            escape(y_label)
        ));
    }

    /// Text in pixel offsets from the panel's top-left corner.
    pub fn label(&mut self, dx: f64, dy: f64, text: &str, color: &str) {
        self.raw(format!(
            r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{color}" {FONT}>{}</text>"#,
            self.left + dx,
            self.top + dy,
            escape(text)
        ));
    }

    pub fn no_data(&mut self) {
        self.raw(format!(
            r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14" fill="#888" {FONT}>no data</text>"##,
            self.left + self.width / 2.0,
            self.top + self.height / 2.0
        ));
    }

    pub fn rect(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, fill: &str, stroke: &str) {
        let (a, b) = (self.sx(x0.min(x1)), self.sx(x0.max(x1)));
        let (c, d) = (self.sy(y0.max(y1)), self.sy(y0.min(y1)));
        self.raw(format!(
            r#"<rect x="{a:.2}" y="{c:.2}" width="{:.2}" height="{:.2}" fill="{fill}" stroke="{stroke}"/>"#,
            b - a,
            d - c
        ));
    }

    pub fn line(&mut self, from: (f64, f64), to: (f64, f64), stroke: &str, dashed: bool) {
        let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
        self.raw(format!(
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{stroke}" stroke-width="1.5"{dash}/>"#,
            self.sx(from.0),
            self.sy(from.1),
            self.sx(to.0),
            self.sy(to.1)
        ));
    }

    fn points(&self, pts: &[(f64, f64)]) -> String {
        pts.iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.sx(x), self.sy(y)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) {
        let p = self.points(pts);
        self.raw(format!(
            r#"<polyline points="{p}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#
        ));
    }

    /// Right-continuous step function through `pts`.
    pub fn step(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) {
        let mut path = Vec::with_capacity(2 * pts.len());
        for (i, &(x, y)) in pts.iter().enumerate() {
            if i > 0 {
                path.push((x, pts[i - 1].1));
            }
            path.push((x, y));
        }
        self.polyline(&path, stroke, width);
    }

    /// Filled area between `lower` and `upper` sampled at `xs`.
    pub fn band(&mut self, xs: &[f64], lower: &[f64], upper: &[f64], fill: &str) {
        let mut pts: Vec<(f64, f64)> = xs.iter().copied().zip(upper.iter().copied()).collect();
        pts.extend(xs.iter().copied().zip(lower.iter().copied()).rev());
        let p = self.points(&pts);
        self.raw(format!(
            r#"<polygon points="{p}" fill="{fill}" fill-opacity="0.35" stroke="none"/>"#
        ));
    }

    pub fn marker(&mut self, x: f64, y: f64, color: &str) {
        self.raw(format!(
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
            self.sx(x),
            self.sy(y)
        ));
    }
}
