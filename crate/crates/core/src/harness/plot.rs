//! Deterministic SVG line charts of certification curves.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::accountant::FamilyKind;
use crate::cert::action::STABILITY_CSV_HEADER;
use crate::cert::policy::{read_policy_csv, PolicyCertRow, POLICY_CSV_HEADER};
use crate::error::{Error, Result};
use crate::harness::io::write_atomic;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn extent(values: impl Iterator<Item = f64>, floor_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if floor_zero {
        lo = lo.min(0.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    (lo, hi)
}

/// Line chart with labeled axes. `step` draws each series as a right-
/// continuous step function.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], step: bool) -> String {
    let (x0, x1) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), false);
    let (y0, y1) = extent(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)), true);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    let (bx, by) = (LEFT, TOP + plot_h);
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{bx:.2}" y1="{by:.2}" x2="{:.2}" y2="{by:.2}"/><line x1="{bx:.2}" y1="{by:.2}" x2="{bx:.2}" y2="{TOP:.2}"/></g>"#,
        LEFT + plot_w
    );
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            sx(xv),
            by + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="18" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if !s.points.is_empty() {
            let mut d = String::new();
            for (k, &(x, y)) in s.points.iter().enumerate() {
                if k == 0 {
                    let _ = write!(d, "M {:.2} {:.2}", sx(x), sy(y));
                } else {
                    if step {
                        let _ = write!(d, " L {:.2} {:.2}", sx(x), sy(s.points[k - 1].1));
                    }
                    let _ = write!(d, " L {:.2} {:.2}", sx(x), sy(y));
                }
            }
            let _ = writeln!(
                svg,
                r#"<path class="series" data-label="{}" d="{d}" stroke="{color}" stroke-width="2" fill="none"/>"#,
                escape(&s.label)
            );
        }
        let ly = TOP + 16.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{:.0}", v)
    } else {
        format!("{:.3}", v)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// `(r, J_certified)` per kind; radii without a guarantee are left out.
pub fn policy_svg(rows: &[PolicyCertRow]) -> String {
    let series: Vec<Series> = FamilyKind::BOTH
        .iter()
        .map(|&kind| {
            let mut points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.kind == kind)
                .filter_map(|r| r.j_certified.map(|j| (f64::from(r.r), j)))
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label: kind.as_str().to_string(), points }
        })
        .collect();
    line_chart("Certified lower bound on cumulative reward", "poisoning size r", "certified J", &series, false)
}

pub fn stability_svg(curves: &[(FamilyKind, Vec<(u32, f64)>)]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|(kind, c)| Series {
            label: kind.as_str().to_string(),
            points: c.iter().map(|&(t, r)| (f64::from(t), r)).collect(),
        })
        .collect();
    line_chart("Stability ratio", "tolerable poisoning threshold", "stability ratio", &series, true)
}

/// Stability curve per family kind.
pub type StabilityCurves = Vec<(FamilyKind, Vec<(u32, f64)>)>;

pub fn read_stability_csv<R: Read>(input: R) -> Result<StabilityCurves> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != STABILITY_CSV_HEADER {
        return Err(Error::Format(format!("stability header {header:?}")));
    }
    let mut out: StabilityCurves = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let th: u32 = rec[0].parse().map_err(|_| Error::Format(format!("threshold {:?}", &rec[0])))?;
        let ratio: f64 = rec[1].parse().map_err(|_| Error::Format(format!("ratio {:?}", &rec[1])))?;
        let kind = FamilyKind::parse(&rec[2])?;
        match out.iter_mut().find(|(k, _)| *k == kind) {
            Some((_, c)) => c.push((th, ratio)),
            None => out.push((kind, vec![(th, ratio)])),
        }
    }
    Ok(out)
}

/// Renders the CSV at `csv_path` (policy certificate or stability schema)
/// into an SVG at `svg_path`.
pub fn emit_plot(csv_path: &Path, svg_path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(csv_path)?;
    let header = text.lines().next().unwrap_or_default();
    let svg = if header == POLICY_CSV_HEADER.join(",") {
        policy_svg(&read_policy_csv(text.as_bytes())?)
    } else if header == STABILITY_CSV_HEADER.join(",") {
        stability_svg(&read_stability_csv(text.as_bytes())?)
    } else {
        return Err(Error::Format(format!("{} has no known plot schema", csv_path.display())));
    };
    write_atomic(svg_path, svg.as_bytes())
}
