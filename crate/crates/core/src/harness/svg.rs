//! Static SVG 1.1 line/scatter plots. Output depends only on the input
//! numbers, so identical tables give identical bytes.

use super::table::Table;
use anyhow::{bail, ensure};
use std::fmt::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Line,
    Scatter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    pub ys: Vec<String>,
    pub log_x: bool,
    pub log_y: bool,
    pub kind: PlotKind,
    pub title: String,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: &[f64], log: bool, name: &str) -> anyhow::Result<Self> {
        let mut tr = Vec::with_capacity(values.len());
        for &v in values {
            if log && v <= 0.0 {
                bail!("column {name:?} has nonpositive value {v} on a log-scale axis");
            }
            ensure!(v.is_finite(), "column {name:?} has non-finite value {v}");
            tr.push(if log { v.log10() } else { v });
        }
        let lo = tr.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi - lo > 1e-12 * hi.abs().max(1.0) {
            let pad = 0.04 * (hi - lo);
            (lo - pad, hi + pad)
        } else {
            (lo - 0.5, hi + 0.5)
        };
        Ok(Self { lo, hi, log })
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i64, self.hi.floor() as i64);
            let step = ((b - a) / 6 + 1).max(1);
            (a..=b)
                .step_by(step as usize)
                .map(|e| (e as f64, format!("1e{e}")))
                .collect()
        } else {
            let raw = (self.hi - self.lo) / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|m| m * mag)
                .find(|s| *s >= raw)
                .unwrap_or(10.0 * mag);
            let first = (self.lo / step).ceil() as i64;
            let last = (self.hi / step).floor() as i64;
            (first..=last)
                .map(|k| {
                    let v = k as f64 * step;
                    (v, format!("{}", (v / mag).round() * mag))
                })
                .map(|(v, s)| (v, trim_label(&s)))
                .collect()
        }
    }
}

fn trim_label(s: &str) -> String {
    match s.parse::<f64>() {
        Ok(v) if v.abs() < 1e-300 => "0".into(),
        Ok(v) if v.abs() >= 1e4 || v.abs() < 1e-3 => format!("{v:.1e}"),
        Ok(v) => {
            let t = format!("{v:.4}");
            t.trim_end_matches('0').trim_end_matches('.').to_string()
        }
        Err(_) => s.into(),
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_svg(table: &Table, spec: &PlotSpec) -> anyhow::Result<String> {
    ensure!(!spec.ys.is_empty(), "plot needs at least one y column");
    let xs = table.numeric_column(&spec.x)?;
    let ys = spec
        .ys
        .iter()
        .map(|c| table.numeric_column(c))
        .collect::<anyhow::Result<Vec<_>>>()?;
    ensure!(!xs.is_empty(), "table {} has no data rows", table.name);
    let xa = Axis::fit(&xs, spec.log_x, &spec.x)?;
    let all_y: Vec<f64> = ys.iter().flatten().copied().collect();
    let ya = Axis::fit(&all_y, spec.log_y, &spec.ys.join(","))?;
    for (name, y) in spec.ys.iter().zip(&ys) {
        Axis::fit(y, spec.log_y, name)?;
    }

    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let px = |v: f64| LEFT + xa.frac(v) * pw;
    let py = |v: f64| TOP + (1.0 - ya.frac(v)) * ph;

    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#)?;
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )?;
    writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#)?;
    writeln!(
        s,
        r#"<text x="{:.2}" y="22" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        esc(&spec.title)
    )?;
    writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )?;
    for (v, label) in xa.ticks() {
        let x = LEFT + (v - xa.lo) / (xa.hi - xa.lo) * pw;
        writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            TOP + ph,
            TOP + ph + 5.0
        )?;
        writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            TOP + ph + 18.0,
            esc(&label)
        )?;
    }
    for (v, label) in ya.ticks() {
        let y = TOP + (1.0 - (v - ya.lo) / (ya.hi - ya.lo)) * ph;
        writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#,
            LEFT - 5.0
        )?;
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            y + 4.0,
            esc(&label)
        )?;
    }
    let xunit = &table.columns[table.column_index(&spec.x)?].unit;
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{} [{}]</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        esc(&spec.x),
        esc(xunit)
    )?;

    for (k, (name, y)) in spec.ys.iter().zip(&ys).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = xs.iter().zip(y).map(|(&a, &b)| (px(a), py(b))).collect();
        if spec.kind == PlotKind::Line && pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
            writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            )?;
        } else {
            for (a, b) in &pts {
                writeln!(s, r#"<circle cx="{a:.2}" cy="{b:.2}" r="3" fill="{color}"/>"#)?;
            }
        }
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            LEFT + 8.0,
            TOP + 14.0 + 14.0 * k as f64,
            esc(name)
        )?;
    }
    writeln!(s, "</svg>")?;
    Ok(s)
}
