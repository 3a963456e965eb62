//! Standalone SVG line and bar charts, and the figure set built from an
//! analysis report.

use std::fmt::Write as _;

use thiserror::Error;

use crate::class::ClassLabel;
use crate::metrics::{Property, RegionId};
use crate::report::AnalysisReport;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("nothing to plot: {0}")]
    EmptySpec(String),
    #[error("series {series:?} has negative value {value} at tick {index}")]
    NegativeValue {
        series: String,
        index: usize,
        value: f64,
    },
    #[error("invalid plot spec: {0}")]
    InvalidSpec(String),
}

/// Series colours; the first three follow the class order fake, real, synthetic.
pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#2ca02c", "#d62728", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegendPosition {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
    /// Per value: drawn with a hatch and marker in bar plots. Empty means no flags.
    pub flagged: Vec<bool>,
}

impl Series {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
            flagged: Vec::new(),
        }
    }

    fn is_flagged(&self, i: usize) -> bool {
        self.flagged.get(i).copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub ticks: Vec<String>,
    pub y_label: String,
    pub series: Vec<Series>,
    pub width: f64,
    pub height: f64,
    pub legend: LegendPosition,
}

impl PlotSpec {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
        ticks: Vec<String>,
    ) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            ticks,
            y_label: y_label.into(),
            series: Vec::new(),
            width: 720.0,
            height: 420.0,
            legend: LegendPosition::TopRight,
        }
    }

    pub fn with_series(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn validate(&self, min_ticks: usize) -> Result<(), RenderError> {
        if self.series.is_empty() {
            return Err(RenderError::EmptySpec(format!(
                "{:?} has no series",
                self.title
            )));
        }
        if self.ticks.len() < min_ticks {
            return Err(RenderError::EmptySpec(format!(
                "{:?} needs at least {min_ticks} ticks",
                self.title
            )));
        }
        if !(self.width >= 100.0 && self.height >= 100.0) {
            return Err(RenderError::InvalidSpec(format!(
                "dimensions {}x{} below 100x100",
                self.width, self.height
            )));
        }
        for s in &self.series {
            if s.values.len() != self.ticks.len() {
                return Err(RenderError::InvalidSpec(format!(
                    "series {:?} has {} values for {} ticks",
                    s.label,
                    s.values.len(),
                    self.ticks.len()
                )));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(RenderError::InvalidSpec(format!(
                    "series {:?} has a non-finite value",
                    s.label
                )));
            }
        }
        Ok(())
    }
}

const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 64.0;
const Y_TICKS: usize = 5;

/// Plot frame in SVG user units.
struct Frame {
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    lo: f64,
    hi: f64,
    n: usize,
}

impl Frame {
    fn new(spec: &PlotSpec, lo: f64, hi: f64) -> Self {
        Self {
            left: MARGIN_LEFT,
            right: spec.width - MARGIN_RIGHT,
            top: MARGIN_TOP,
            bottom: spec.height - MARGIN_BOTTOM,
            lo,
            hi,
            n: spec.ticks.len(),
        }
    }

    fn slot(&self) -> f64 {
        (self.right - self.left) / self.n as f64
    }

    fn x(&self, i: usize) -> f64 {
        self.left + (i as f64 + 0.5) * self.slot()
    }

    fn y(&self, v: f64) -> f64 {
        self.bottom - (v - self.lo) / (self.hi - self.lo) * (self.bottom - self.top)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn header(spec: &PlotSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#
    );
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="12">"#,
        w = spec.width,
        h = spec.height
    );
    let _ = writeln!(
        s,
        r#"<defs><pattern id="hatch" patternUnits="userSpaceOnUse" width="6" height="6" patternTransform="rotate(45)"><rect width="6" height="6" fill="white"/><line x1="0" y1="0" x2="0" y2="6" stroke="black" stroke-width="2"/></pattern></defs>"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{:.0}" height="{:.0}" fill="white"/>"#,
        spec.width, spec.height
    );
    let _ = writeln!(
        s,
        r#"<text class="title" x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        spec.width / 2.0,
        escape(&spec.title)
    );
    s
}

fn axes(s: &mut String, spec: &PlotSpec, f: &Frame) {
    let _ = writeln!(
        s,
        r#"<rect class="frame" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        f.left,
        f.top,
        f.right - f.left,
        f.bottom - f.top
    );
    for k in 0..Y_TICKS {
        let v = f.lo + (f.hi - f.lo) * k as f64 / (Y_TICKS - 1) as f64;
        let y = f.y(v);
        let _ = writeln!(
            s,
            r##"<line class="grid" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            f.left, f.right
        );
        let _ = writeln!(
            s,
            r#"<text class="ytick" x="{:.2}" y="{:.2}" text-anchor="end">{v:.4}</text>"#,
            f.left - 6.0,
            y + 4.0
        );
    }
    for (i, t) in spec.ticks.iter().enumerate() {
        let x = f.x(i);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            f.bottom,
            f.bottom + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text class="xtick" x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.bottom + 19.0,
            escape(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (f.left + f.right) / 2.0,
        spec.height - 14.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text class="ylabel" x="18" y="{y:.2}" text-anchor="middle" transform="rotate(-90 18 {y:.2})">{}</text>"#,
        escape(&spec.y_label),
        y = (f.top + f.bottom) / 2.0
    );
}

fn legend(s: &mut String, spec: &PlotSpec, f: &Frame) {
    let row = 16.0;
    let width = 20.0
        + 7.0
            * spec
                .series
                .iter()
                .map(|x| x.label.chars().count())
                .max()
                .unwrap_or(0) as f64
        + 24.0;
    let height = row * spec.series.len() as f64 + 8.0;
    let x = match spec.legend {
        LegendPosition::TopLeft | LegendPosition::BottomLeft => f.left + 8.0,
        LegendPosition::TopRight | LegendPosition::BottomRight => f.right - 8.0 - width,
    };
    let y = match spec.legend {
        LegendPosition::TopLeft | LegendPosition::TopRight => f.top + 8.0,
        LegendPosition::BottomLeft | LegendPosition::BottomRight => f.bottom - 8.0 - height,
    };
    let _ = writeln!(s, r#"<g class="legend">"#);
    let _ = writeln!(
        s,
        r#"<rect x="{x:.2}" y="{y:.2}" width="{width:.2}" height="{height:.2}" fill="white" fill-opacity="0.85" stroke="gray"/>"#
    );
    for (i, series) in spec.series.iter().enumerate() {
        let ly = y + 4.0 + row * (i as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="14" height="8" fill="{}"/>"#,
            x + 6.0,
            ly - 4.0,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 26.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    let _ = writeln!(s, "</g>");
}

/// One polyline per series over categorical ticks.
pub fn render_line_plot(spec: &PlotSpec) -> Result<String, RenderError> {
    spec.validate(2)?;
    let all = spec.series.iter().flat_map(|s| &s.values);
    let (min, max) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    let pad = if max > min {
        0.08 * (max - min)
    } else {
        (0.1 * max.abs()).max(1.0)
    };
    let frame = Frame::new(spec, min - pad, max + pad);

    let mut s = header(spec);
    axes(&mut s, spec, &frame);
    for (i, series) in spec.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = series
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| format!("{:.2},{:.2}", frame.x(k), frame.y(*v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-label="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            escape(&series.label),
            points.join(" ")
        );
        for (k, v) in series.values.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                frame.x(k),
                frame.y(*v)
            );
        }
    }
    legend(&mut s, spec, &frame);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Grouped bars from a zero baseline. Flagged values get a hatch fill and a
/// triangle marker above the bar.
pub fn render_bar_plot(spec: &PlotSpec) -> Result<String, RenderError> {
    spec.validate(1)?;
    for series in &spec.series {
        if let Some((index, &value)) = series.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(RenderError::NegativeValue {
                series: series.label.clone(),
                index,
                value,
            });
        }
    }
    let max = spec
        .series
        .iter()
        .flat_map(|s| &s.values)
        .fold(0.0f64, |a, &v| a.max(v));
    let hi = if max > 0.0 { max * 1.1 } else { 1.0 };
    let frame = Frame::new(spec, 0.0, hi);

    let mut s = header(spec);
    axes(&mut s, spec, &frame);
    let group = frame.slot() * 0.8;
    let bar_w = group / spec.series.len() as f64;
    for (i, series) in spec.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for (k, &v) in series.values.iter().enumerate() {
            let x = frame.x(k) - group / 2.0 + bar_w * i as f64;
            let y = frame.y(v);
            let flagged = series.is_flagged(k);
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-label="{}" x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{:.2}" fill="{}" stroke="{color}"/>"#,
                escape(&series.label),
                frame.bottom - y,
                if flagged { "url(#hatch)" } else { color }
            );
            if flagged {
                let cx = x + bar_w / 2.0;
                let _ = writeln!(
                    s,
                    r#"<path class="capped" d="M {:.2} {:.2} L {:.2} {:.2} L {:.2} {:.2} Z" fill="black"/>"#,
                    cx - 4.0,
                    y - 2.0,
                    cx + 4.0,
                    y - 2.0,
                    cx,
                    y - 9.0
                );
            }
        }
    }
    legend(&mut s, spec, &frame);
    s.push_str("</svg>\n");
    Ok(s)
}

fn class_series<F>(report_classes: &[ClassLabel], mut value: F, n: usize) -> Vec<Series>
where
    F: FnMut(ClassLabel, usize) -> Option<f64>,
{
    report_classes
        .iter()
        .filter_map(|&c| {
            let values: Option<Vec<f64>> = (0..n).map(|i| value(c, i)).collect();
            values.map(|v| Series::new(c.name(), v))
        })
        .collect()
}

/// Every figure derivable from `report`, as `(file name, svg)` pairs:
/// `lines_<property>.svg` and `pvalues_<property>.svg` across regions 1-9,
/// plus `lines_region0.svg` and `pvalues_region0.svg` for the whole image.
pub fn render_report_plots(report: &AnalysisReport) -> Result<Vec<(String, String)>, RenderError> {
    let mut out = Vec::new();
    let grid: Vec<_> = RegionId::grid().filter_map(|r| report.region(r)).collect();
    if grid.len() == 9 {
        let ticks: Vec<String> = RegionId::grid().map(|r| r.to_string()).collect();
        for p in Property::ALL {
            let cells: Option<Vec<_>> = grid.iter().map(|r| r.property(p)).collect();
            let Some(cells) = cells else { continue };
            let mut spec = PlotSpec::new(
                format!("Average {p} per facial region"),
                "region",
                format!("mean {p}"),
                ticks.clone(),
            );
            spec.series =
                class_series(&ClassLabel::ALL, |c, i| cells[i].class_mean(c), cells.len());
            out.push((format!("lines_{p}.svg"), render_line_plot(&spec)?));

            let mut bars = Series::new(
                "-log10 p",
                cells.iter().map(|c| c.anova.neg_log10_p).collect(),
            );
            bars.flagged = cells.iter().map(|c| c.anova.capped).collect();
            let spec = PlotSpec::new(
                format!("ANOVA -log10(p) for {p} per facial region"),
                "region",
                "-log10(p)",
                ticks.clone(),
            )
            .with_series(bars);
            out.push((format!("pvalues_{p}.svg"), render_bar_plot(&spec)?));
        }
    }
    if let Some(whole) = report.region(RegionId::WHOLE) {
        let cells: Vec<_> = Property::ALL
            .iter()
            .filter_map(|p| whole.property(*p))
            .collect();
        let ticks: Vec<String> = cells.iter().map(|c| c.property.to_string()).collect();
        let mut spec = PlotSpec::new(
            "Average property values, whole image",
            "property",
            "mean value",
            ticks.clone(),
        );
        spec.series = class_series(&ClassLabel::ALL, |c, i| cells[i].class_mean(c), cells.len());
        out.push(("lines_region0.svg".to_string(), render_line_plot(&spec)?));

        let mut bars = Series::new(
            "-log10 p",
            cells.iter().map(|c| c.anova.neg_log10_p).collect(),
        );
        bars.flagged = cells.iter().map(|c| c.anova.capped).collect();
        let spec = PlotSpec::new(
            "ANOVA -log10(p), whole image",
            "property",
            "-log10(p)",
            ticks,
        )
        .with_series(bars);
        out.push(("pvalues_region0.svg".to_string(), render_bar_plot(&spec)?));
    }
    if out.is_empty() {
        return Err(RenderError::EmptySpec(
            "report contains no plottable regions".into(),
        ));
    }
    Ok(out)
}
