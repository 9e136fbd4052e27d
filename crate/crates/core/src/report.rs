//! Cross-window aggregation and report output: the per-criterion table (text,
//! CSV, JSON) and the `L/L_rand` vs `C/C_rand` scatter (CSV, SVG).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{RandomBaseline, SmallWorldRatios, Verdict, VerdictThresholds};
use crate::graph::SimilarityCriterion;
use crate::metrics::GraphMetrics;
use crate::window::Window;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no complete window with defined metrics to aggregate")]
    NoValidWindows,
    #[error("malformed report document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("malformed bundled reference data: {0}")]
    Reference(String),
}

/// Metrics of one window and its random baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window: Window,
    pub metrics: GraphMetrics,
    pub baseline: RandomBaseline,
}

impl WindowResult {
    /// `(L, L_rand, C, C_rand)` when all four are defined.
    fn values(&self) -> Option<(f64, f64, f64, f64)> {
        Some((
            self.metrics.path_length_l?,
            self.baseline.path_length_l.mean?,
            self.metrics.clustering_c?,
            self.baseline.clustering_c.mean?,
        ))
    }
}

/// One table row: a criterion and window length, averaged over windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallWorldReport {
    pub label: String,
    pub criterion: SimilarityCriterion,
    pub window_seconds: u64,
    pub windows_analyzed: usize,
    pub partial_windows_excluded: usize,
    pub undefined_windows_excluded: usize,
    pub avg_n: f64,
    pub avg_n_nonisolated: f64,
    pub avg_links: f64,
    pub avg_l: f64,
    pub avg_l_rand: f64,
    pub avg_c: f64,
    pub avg_c_rand: f64,
    pub avg_c_rand_analytic: f64,
    /// `avg_l / avg_l_rand`.
    pub l_ratio: f64,
    /// `avg_c / avg_c_rand`.
    pub c_ratio: f64,
    /// Mean of the per-window `L / L_rand`.
    pub mean_window_l_ratio: f64,
    /// Mean of the per-window `C / C_rand`.
    pub mean_window_c_ratio: f64,
    pub verdict: Verdict,
    pub thresholds: VerdictThresholds,
}

/// `2min`, `30min`, `2h`, `7days`, `45s`.
pub fn format_duration(seconds: u64) -> String {
    match seconds {
        0 => "0s".to_string(),
        s if s % 86_400 == 0 => match s / 86_400 {
            1 => "1day".to_string(),
            d => format!("{d}days"),
        },
        s if s % 3600 == 0 => format!("{}h", s / 3600),
        s if s % 60 == 0 => format!("{}min", s / 60),
        s => format!("{s}s"),
    }
}

/// Row label such as `Web, m=1, T=2min`.
pub fn row_label(system: &str, criterion: &SimilarityCriterion, window_seconds: u64) -> String {
    format!("{system}, {criterion}, T={}", format_duration(window_seconds))
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Averages complete windows with defined metrics into one report row.
///
/// Ratios are taken between the averaged metrics; the per-window ratio
/// means are kept alongside.
pub fn aggregate(
    label: impl Into<String>,
    criterion: SimilarityCriterion,
    window_seconds: u64,
    results: &[WindowResult],
    thresholds: VerdictThresholds,
) -> Result<SmallWorldReport, ReportError> {
    let complete: Vec<&WindowResult> = results.iter().filter(|r| !r.window.partial).collect();
    let valid: Vec<_> = complete.iter().filter_map(|r| r.values().map(|v| (*r, v))).collect();
    if valid.is_empty() {
        return Err(ReportError::NoValidWindows);
    }

    let avg_l = mean(valid.iter().map(|(_, v)| v.0));
    let avg_l_rand = mean(valid.iter().map(|(_, v)| v.1));
    let avg_c = mean(valid.iter().map(|(_, v)| v.2));
    let avg_c_rand = mean(valid.iter().map(|(_, v)| v.3));
    let ratios = SmallWorldRatios::from_values(avg_l, avg_l_rand, avg_c, avg_c_rand, thresholds)
        .map_err(|_| ReportError::NoValidWindows)?;

    Ok(SmallWorldReport {
        label: label.into(),
        criterion,
        window_seconds,
        windows_analyzed: valid.len(),
        partial_windows_excluded: results.len() - complete.len(),
        undefined_windows_excluded: complete.len() - valid.len(),
        avg_n: mean(valid.iter().map(|(r, _)| r.metrics.n_total as f64)),
        avg_n_nonisolated: mean(valid.iter().map(|(r, _)| r.metrics.n_nonisolated as f64)),
        avg_links: mean(valid.iter().map(|(r, _)| r.metrics.links as f64)),
        avg_l,
        avg_l_rand,
        avg_c,
        avg_c_rand,
        avg_c_rand_analytic: mean(valid.iter().map(|(r, _)| r.baseline.analytic_c)),
        l_ratio: ratios.l_ratio,
        c_ratio: ratios.c_ratio,
        mean_window_l_ratio: mean(valid.iter().map(|(_, v)| v.0 / v.1)),
        mean_window_c_ratio: mean(valid.iter().map(|(_, v)| v.2 / v.3)),
        verdict: ratios.verdict,
        thresholds,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
    Text,
}

const TEXT_HEADER: [&str; 7] = ["Criterion", "# node", "# links", "L (DS)", "L (rand)", "C (DS)", "C (rand)"];

const CSV_HEADER: [&str; 20] = [
    "label",
    "granularity",
    "threshold",
    "window_seconds",
    "windows_analyzed",
    "partial_windows_excluded",
    "undefined_windows_excluded",
    "avg_n",
    "avg_n_nonisolated",
    "avg_links",
    "avg_l",
    "avg_l_rand",
    "avg_c",
    "avg_c_rand",
    "avg_c_rand_analytic",
    "l_ratio",
    "c_ratio",
    "mean_window_l_ratio",
    "mean_window_c_ratio",
    "verdict",
];

/// `38k` for 38 000 and above a thousand, plain count below.
fn abbreviate_count(x: f64) -> String {
    if x >= 1000.0 {
        format!("{:.0}k", x / 1000.0)
    } else {
        format!("{x:.0}")
    }
}

fn text_row(r: &SmallWorldReport) -> [String; 7] {
    [
        r.label.clone(),
        format!("{:.0}", r.avg_n),
        abbreviate_count(r.avg_links),
        format!("{:.2}", r.avg_l),
        format!("{:.2}", r.avg_l_rand),
        format!("{:.3}", r.avg_c),
        format!("{:.3}", r.avg_c_rand),
    ]
}

/// Renders the report table.
///
/// Text output rounds path lengths to 2 decimals and clustering to 3, with
/// link counts abbreviated; CSV and JSON keep full precision.
pub fn emit_table(reports: &[SmallWorldReport], format: TableFormat) -> String {
    match format {
        TableFormat::Text => {
            let rows: Vec<[String; 7]> = reports.iter().map(text_row).collect();
            let mut widths = TEXT_HEADER.map(str::len);
            for row in &rows {
                for (w, cell) in widths.iter_mut().zip(row) {
                    *w = (*w).max(cell.chars().count());
                }
            }
            let mut out = String::new();
            let header = TEXT_HEADER.map(str::to_string);
            for row in std::iter::once(&header).chain(&rows) {
                let cells: Vec<String> = row
                    .iter()
                    .zip(widths)
                    .enumerate()
                    .map(|(i, (cell, w))| if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
                    .collect();
                out.push_str(cells.join(" | ").trim_end());
                out.push('\n');
            }
            out
        }
        TableFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory write");
            for r in reports {
                let verdict = match r.verdict {
                    Verdict::SmallWorld => "small-world",
                    Verdict::NotSmallWorld => "not-small-world",
                };
                w.write_record([
                    r.label.clone(),
                    r.criterion.granularity.to_string(),
                    r.criterion.threshold.to_string(),
                    r.window_seconds.to_string(),
                    r.windows_analyzed.to_string(),
                    r.partial_windows_excluded.to_string(),
                    r.undefined_windows_excluded.to_string(),
                    r.avg_n.to_string(),
                    r.avg_n_nonisolated.to_string(),
                    r.avg_links.to_string(),
                    r.avg_l.to_string(),
                    r.avg_l_rand.to_string(),
                    r.avg_c.to_string(),
                    r.avg_c_rand.to_string(),
                    r.avg_c_rand_analytic.to_string(),
                    r.l_ratio.to_string(),
                    r.c_ratio.to_string(),
                    r.mean_window_l_ratio.to_string(),
                    r.mean_window_c_ratio.to_string(),
                    verdict.to_string(),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 fields")
        }
        TableFormat::Json => {
            let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
            s.push('\n');
            s
        }
    }
}

pub fn parse_reports_json(doc: &str) -> Result<Vec<SmallWorldReport>, ReportError> {
    Ok(serde_json::from_str(doc)?)
}

/// A published small-world graph, as ratios against its random counterpart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub name: String,
    pub l_ratio: f64,
    pub c_ratio: f64,
    pub source: String,
}

#[derive(Deserialize)]
struct RawReference {
    name: String,
    l: f64,
    l_rand: f64,
    c: f64,
    c_rand: f64,
    source: String,
}

const REFERENCE_DATA: &str = include_str!("../data/reference_points.json");

/// The bundled reference graphs.
pub fn reference_points() -> Vec<ReferencePoint> {
    parse_reference_points(REFERENCE_DATA).expect("bundled reference data is well formed")
}

pub fn parse_reference_points(doc: &str) -> Result<Vec<ReferencePoint>, ReportError> {
    let raw: Vec<RawReference> = serde_json::from_str(doc)?;
    raw.into_iter()
        .map(|r| {
            let point =
                ReferencePoint { name: r.name, l_ratio: r.l / r.l_rand, c_ratio: r.c / r.c_rand, source: r.source };
            if is_plottable(point.l_ratio, point.c_ratio) {
                Ok(point)
            } else {
                Err(ReportError::Reference(format!("non-positive ratio for {}", point.name)))
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub label: String,
    pub l_ratio: f64,
    pub c_ratio: f64,
    pub is_reference: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScatterDataset {
    pub rows: Vec<ScatterRow>,
    /// Entries dropped for an undefined or non-positive ratio.
    pub skipped: usize,
}

fn is_plottable(l: f64, c: f64) -> bool {
    l.is_finite() && c.is_finite() && l > 0.0 && c > 0.0
}

/// Measured rows first, then reference rows, each in input order.
pub fn emit_ratio_scatter(reports: &[SmallWorldReport], references: &[ReferencePoint]) -> ScatterDataset {
    let candidates = reports
        .iter()
        .map(|r| (r.label.as_str(), r.l_ratio, r.c_ratio, false))
        .chain(references.iter().map(|p| (p.name.as_str(), p.l_ratio, p.c_ratio, true)));
    let mut data = ScatterDataset::default();
    for (label, l_ratio, c_ratio, is_reference) in candidates {
        if is_plottable(l_ratio, c_ratio) {
            data.rows.push(ScatterRow { label: label.to_string(), l_ratio, c_ratio, is_reference });
        } else {
            data.skipped += 1;
        }
    }
    if data.skipped > 0 {
        log::warn!("{} scatter entries skipped for undefined ratios", data.skipped);
    }
    data
}

impl ScatterDataset {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(["label", "l_ratio", "c_ratio", "is_reference"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([r.label.clone(), r.l_ratio.to_string(), r.c_ratio.to_string(), r.is_reference.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 fields")
    }

    /// Self-contained SVG: linear `L/L_rand` axis, log-scaled `C/C_rand`
    /// axis. Measured points are filled circles, reference points hollow
    /// squares.
    pub fn to_svg(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 440.0;
        const LEFT: f64 = 70.0;
        const RIGHT: f64 = 200.0;
        const TOP: f64 = 30.0;
        const BOTTOM: f64 = 60.0;
        let plot_w = W - LEFT - RIGHT;
        let plot_h = H - TOP - BOTTOM;

        let max_l = self.rows.iter().map(|r| r.l_ratio).fold(0.0, f64::max);
        let x_max = ((max_l * 1.1) * 2.0).ceil().max(4.0) / 2.0;
        let logs = self.rows.iter().map(|r| r.c_ratio.log10());
        let (lo, hi) = logs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let (y_lo, y_hi) = if self.rows.is_empty() {
            (0.0, 4.0)
        } else {
            let lo = lo.floor().min(0.0);
            (lo, hi.ceil().max(lo + 1.0))
        };
        let px = |l: f64| LEFT + l / x_max * plot_w;
        let py = |c: f64| TOP + plot_h - (c.log10() - y_lo) / (y_hi - y_lo) * plot_h;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##
        );

        let x_step = if x_max > 6.0 { 1.0 } else { 0.5 };
        let mut tick = 0.0;
        while tick <= x_max + 1e-9 {
            let x = px(tick);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{tick:.1}</text>"##,
                TOP + plot_h,
                TOP + plot_h + 5.0,
                TOP + plot_h + 18.0
            );
            tick += x_step;
        }
        for decade in (y_lo as i32)..=(y_hi as i32) {
            let y = py(10f64.powi(decade));
            let label =
                if (0..=6).contains(&decade) { format!("{}", 10u64.pow(decade as u32)) } else { format!("1e{decade}") };
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
                LEFT - 5.0,
                LEFT - 8.0,
                y + 4.0
            );
        }
        if x_max >= 1.0 {
            let x = px(1.0);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
                TOP + plot_h
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">L / L_rand</text>"#,
            LEFT + plot_w / 2.0,
            H - 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 18 {:.2})">C / C_rand (log scale)</text>"#,
            TOP + plot_h / 2.0,
            TOP + plot_h / 2.0
        );

        for r in &self.rows {
            let (x, y) = (px(r.l_ratio), py(r.c_ratio));
            if r.is_reference {
                let _ = writeln!(
                    s,
                    r##"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="none" stroke="#777" stroke-width="1.5"><title>{}</title></rect>"##,
                    x - 4.0,
                    y - 4.0,
                    xml_escape(&r.label)
                );
            } else {
                let _ = writeln!(
                    s,
                    r##"<circle cx="{x:.2}" cy="{y:.2}" r="4.5" fill="#1f6fb2"><title>{}</title></circle>"##,
                    xml_escape(&r.label)
                );
            }
        }

        // Legend: one line per point, measured first.
        let legend_x = LEFT + plot_w + 15.0;
        for (i, r) in self.rows.iter().enumerate() {
            let y = TOP + 10.0 + i as f64 * 16.0;
            let marker = if r.is_reference {
                format!(
                    r##"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="none" stroke="#777" stroke-width="1.5"/>"##,
                    legend_x,
                    y - 4.0
                )
            } else {
                format!(r##"<circle cx="{:.2}" cy="{y:.2}" r="4.5" fill="#1f6fb2"/>"##, legend_x + 4.0)
            };
            let _ = writeln!(
                s,
                r#"{marker}<text x="{:.2}" y="{:.2}">{}</text>"#,
                legend_x + 14.0,
                y + 4.0,
                xml_escape(&r.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn xml_escape(s: &str) -> String {
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
