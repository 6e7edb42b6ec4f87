//! SVG learning curves and the final-success bar chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::train::MetricsRow;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("no metrics to plot")]
    Empty,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One run's metrics, tagged with the figure (`group`) and line (`series`)
/// it belongs to. Runs sharing both tags are seeds of the same curve.
#[derive(Clone, Debug)]
pub struct CurveInput {
    pub group: String,
    pub series: String,
    pub rows: Vec<MetricsRow>,
}

/// Mean and min–max band of one series over its seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Aggregates success-rate curves that share evaluation points. Curves are
/// cut to the shortest one.
pub fn aggregate(runs: &[&[MetricsRow]]) -> Band {
    let len = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    let mut band = Band {
        x: Vec::with_capacity(len),
        mean: Vec::with_capacity(len),
        min: Vec::with_capacity(len),
        max: Vec::with_capacity(len),
    };
    for i in 0..len {
        let ys: Vec<f64> = runs.iter().map(|r| r[i].success).collect();
        band.x.push(runs[0][i].episodes as f64);
        band.mean.push(ys.iter().sum::<f64>() / ys.len() as f64);
        band.min.push(ys.iter().copied().fold(f64::INFINITY, f64::min));
        band.max.push(ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    band
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn curve_svg(title: &str, series: &[(String, Band)]) -> String {
    let x_max = series.iter().flat_map(|(_, b)| b.x.iter().copied()).fold(1.0, f64::max);
    let sx = |x: f64| PAD + x / x_max * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y.clamp(0.0, 1.0) * (H - 2.0 * PAD);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (x0, y0, x1, y1) = (sx(0.0), sy(0.0), sx(x_max), sy(1.0));
    let _ = writeln!(
        svg,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#
    );
    for tick in 0..=4 {
        let y = tick as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{y:.2}</text>"#,
            x0 - 5.0,
            sy(y) + 4.0
        );
        let x = x_max * tick as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{x:.0}</text>"#,
            sx(x),
            y0 + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">episodes</text>"#,
        W / 2.0,
        H - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">success rate</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (name, band)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if band.x.is_empty() {
            continue;
        }
        let mut area = String::new();
        for (j, (&x, &y)) in band.x.iter().zip(&band.max).enumerate() {
            let _ = write!(area, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sx(x), sy(y));
        }
        for (&x, &y) in band.x.iter().zip(&band.min).rev() {
            let _ = write!(area, "L{:.2},{:.2} ", sx(x), sy(y));
        }
        let _ = writeln!(
            svg,
            r#"<path d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            area
        );
        let points: Vec<String> = band
            .x
            .iter()
            .zip(&band.mean)
            .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            W - PAD - 110.0,
            ly,
            W - PAD - 94.0,
            ly + 5.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bar_svg(groups: &BTreeMap<String, BTreeMap<String, f64>>) -> String {
    let methods: Vec<&String> = {
        let mut m: Vec<&String> = groups.values().flat_map(|s| s.keys()).collect();
        m.sort();
        m.dedup();
        m
    };
    let slot = (W - 2.0 * PAD) / groups.len().max(1) as f64;
    let bar = slot * 0.8 / methods.len().max(1) as f64;
    let sy = |y: f64| H - PAD - y.clamp(0.0, 1.0) * (H - 2.0 * PAD);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle">final success rate</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD},{} L{PAD},{} L{},{}" stroke="black" fill="none"/>"#,
        sy(1.0),
        sy(0.0),
        W - PAD,
        sy(0.0)
    );
    for (g, (group, values)) in groups.iter().enumerate() {
        let left = PAD + slot * g as f64 + slot * 0.1;
        for (m, method) in methods.iter().enumerate() {
            if let Some(&v) = values.get(*method) {
                let color = PALETTE[m % PALETTE.len()];
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                    left + bar * m as f64,
                    sy(v),
                    bar,
                    sy(0.0) - sy(v)
                );
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            left + slot * 0.4,
            H - PAD + 16.0,
            escape(group)
        );
    }
    for (m, method) in methods.iter().enumerate() {
        let ly = PAD + 14.0 * m as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            W - PAD - 80.0,
            ly - 9.0,
            PALETTE[m % PALETTE.len()],
            W - PAD - 66.0,
            ly,
            escape(method)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes one `curves_<group>.svg` per group (mean line and min–max band
/// per series) and `summary.svg` with the mean final success per group and
/// series. Returns the written paths.
pub fn emit_curves(inputs: &[CurveInput], out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    if inputs.is_empty() || inputs.iter().all(|c| c.rows.is_empty()) {
        return Err(PlotError::Empty);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut grouped: BTreeMap<&str, BTreeMap<&str, Vec<&[MetricsRow]>>> = BTreeMap::new();
    for c in inputs.iter().filter(|c| !c.rows.is_empty()) {
        grouped
            .entry(&c.group)
            .or_default()
            .entry(&c.series)
            .or_default()
            .push(&c.rows);
    }
    let mut written = Vec::new();
    let mut finals: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (group, series) in &grouped {
        let bands: Vec<(String, Band)> = series
            .iter()
            .map(|(name, runs)| (name.to_string(), aggregate(runs)))
            .collect();
        for (name, runs) in series {
            let last: Vec<f64> = runs.iter().map(|r| r.last().unwrap().success).collect();
            finals
                .entry(group.to_string())
                .or_default()
                .insert(name.to_string(), last.iter().sum::<f64>() / last.len() as f64);
        }
        let path = out_dir.join(format!("curves_{}.svg", file_stem(group)));
        std::fs::write(&path, curve_svg(group, &bands))?;
        written.push(path);
    }
    let path = out_dir.join("summary.svg");
    std::fs::write(&path, bar_svg(&finals))?;
    written.push(path);
    Ok(written)
}
