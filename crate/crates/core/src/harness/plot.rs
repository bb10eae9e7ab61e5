//! SVG learning curves: mean line and ±1 std band per run group.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::agents::mean_std;
use crate::error::{Error, Result};
use crate::harness::metrics::{read_csv, MetricsRow};

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];
const PANEL_W: f64 = 520.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 56.0;

/// Per-epoch statistics of one run group.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(env_steps, mean, std)` for returns.
    pub returns: Vec<(f64, f64, f64)>,
    /// `(env_steps, mean, std)` for policy queries.
    pub queries: Vec<(f64, f64, f64)>,
}

/// Group label of a metrics file: its stem without a `_seed<k>` suffix.
pub fn group_label(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match stem.rfind("_seed") {
        Some(i) if stem[i + 5..].chars().all(|c| c.is_ascii_digit()) && i + 5 < stem.len() => {
            stem[..i].to_string()
        }
        _ => stem,
    }
}

/// Aggregates rows of several seeds by epoch.
pub fn series(label: &str, runs: &[Vec<MetricsRow>]) -> Series {
    let mut by_epoch: BTreeMap<usize, Vec<&MetricsRow>> = BTreeMap::new();
    for r in runs.iter().flatten() {
        by_epoch.entry(r.epoch).or_default().push(r);
    }
    let stat = |rows: &[&MetricsRow], f: fn(&MetricsRow) -> f64| {
        let xs: Vec<f64> = rows.iter().map(|r| f(r)).collect();
        let (m, s) = mean_std(&xs);
        (rows[0].env_steps as f64, m, s)
    };
    Series {
        label: label.to_string(),
        returns: by_epoch.values().map(|r| stat(r, |r| r.mean_return)).collect(),
        queries: by_epoch
            .values()
            .map(|r| stat(r, |r| r.mean_policy_queries))
            .collect(),
    }
}

/// Loads CSV files and groups them by [`group_label`].
pub fn load_series(paths: &[impl AsRef<Path>]) -> Result<Vec<Series>> {
    if paths.is_empty() {
        return Err(Error::usage("plot needs at least one metrics file"));
    }
    let mut groups: BTreeMap<String, Vec<Vec<MetricsRow>>> = BTreeMap::new();
    for p in paths {
        let p = p.as_ref();
        let rows = read_csv(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::config(format!("{}: {e}", p.display())))?;
        if rows.is_empty() {
            return Err(Error::usage(format!("{} has no metric rows", p.display())));
        }
        groups.entry(group_label(p)).or_default().push(rows);
    }
    Ok(groups.iter().map(|(k, v)| series(k, v)).collect())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn panel(
    out: &mut String,
    top: f64,
    title: &str,
    all: &[Series],
    pick: fn(&Series) -> &[(f64, f64, f64)],
) {
    let pts: Vec<&(f64, f64, f64)> = all.iter().flat_map(|s| pick(s).iter()).collect();
    let x_max = pts.iter().map(|p| p.0).fold(1.0f64, f64::max);
    let x_min = pts.iter().map(|p| p.0).fold(x_max, f64::min);
    let mut y_min = pts.iter().map(|p| p.1 - p.2).fold(f64::INFINITY, f64::min);
    let mut y_max = pts.iter().map(|p| p.1 + p.2).fold(f64::NEG_INFINITY, f64::max);
    if (y_max - y_min).abs() < 1e-9 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let x_span = (x_max - x_min).max(1.0);
    let sx = |x: f64| MARGIN + (x - x_min) / x_span * PANEL_W;
    let sy = |y: f64| top + PANEL_H - (y - y_min) / (y_max - y_min) * PANEL_H;

    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{}</text>"#,
        MARGIN + PANEL_W / 2.0,
        top - 8.0,
        escape(title)
    );
    for (v, anchor) in [(y_min, top + PANEL_H), (y_max, top + 10.0)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{anchor}" font-size="10" text-anchor="end">{v:.1}</text>"#,
            MARGIN - 4.0
        );
    }
    for (v, anchor) in [(x_min, "start"), (x_max, "end")] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="{anchor}">{v}</text>"#,
            sx(v),
            top + PANEL_H + 14.0
        );
    }
    for (i, s) in all.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let p = pick(s);
        let upper: Vec<String> = p.iter().map(|q| format!("{:.2},{:.2}", sx(q.0), sy(q.1 + q.2))).collect();
        let lower: Vec<String> = p.iter().rev().map(|q| format!("{:.2},{:.2}", sx(q.0), sy(q.1 - q.2))).collect();
        let _ = writeln!(
            out,
            r#"<polygon class="band" points="{} {}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = p.iter().map(|q| format!("{:.2},{:.2}", sx(q.0), sy(q.1))).collect();
        let _ = writeln!(
            out,
            r#"<polyline class="mean" data-series="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            escape(&s.label),
            line.join(" ")
        );
    }
}

/// Two stacked panels (returns, policy queries) with a shared legend.
pub fn render_svg(all: &[Series]) -> Result<String> {
    if all.is_empty() || all.iter().any(|s| s.returns.is_empty()) {
        return Err(Error::usage("nothing to plot"));
    }
    let width = PANEL_W + 2.0 * MARGIN + 160.0;
    let height = 2.0 * PANEL_H + 3.0 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    panel(&mut out, MARGIN, "mean return", all, |s| &s.returns);
    panel(&mut out, 2.0 * MARGIN + PANEL_H, "policy queries per episode", all, |s| &s.queries);
    for (i, s) in all.iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        let x = MARGIN + PANEL_W + 16.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="12" height="3" fill="{}"/><text class="legend" x="{}" y="{}" font-size="11">{}</text>"#,
            y - 4.0,
            COLORS[i % COLORS.len()],
            x + 16.0,
            y,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Reads metrics files and writes the SVG to `out`.
pub fn plot(paths: &[impl AsRef<Path>], out: &Path) -> Result<()> {
    let svg = render_svg(&load_series(paths)?)?;
    std::fs::write(out, svg)?;
    Ok(())
}
