//! CSV emission and parsing, plus the standalone SVG plot.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use stochosc_core::integrator::{EnsembleSummary, Trajectory};
use stochosc_core::PhasePoint;

/// `t,x_1..x_n,v_1..v_n,escaped`. Floats use the shortest representation
/// that parses back to the same bits. `escaped` is 1 on the row where the
/// path left the escape ball.
pub fn trajectory_csv(tr: &Trajectory) -> String {
    let n = tr.states.first().map_or(0, PhasePoint::n);
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",x_{i}");
    }
    for i in 1..=n {
        let _ = write!(out, ",v_{i}");
    }
    out.push_str(",escaped\n");
    let last = tr.len().saturating_sub(1);
    for (k, (t, z)) in tr.times.iter().zip(&tr.states).enumerate() {
        let _ = write!(out, "{t}");
        for v in z.x.iter().chain(&z.y) {
            let _ = write!(out, ",{v}");
        }
        let escaped = tr.escaped && k == last;
        let _ = writeln!(out, ",{}", u8::from(escaped));
    }
    out
}

/// Rows of a trajectory CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRows {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub escaped: Vec<bool>,
}

pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryRows> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| anyhow!("empty CSV"))?.split(',').collect();
    if header.len() < 4 || header[0] != "t" || header[header.len() - 1] != "escaped" || (header.len() - 2) % 2 != 0 {
        bail!("unexpected CSV header");
    }
    let n = (header.len() - 2) / 2;
    let mut rows = TrajectoryRows {
        times: Vec::new(),
        states: Vec::new(),
        escaped: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            bail!("row {} has {} cells, expected {}", i + 1, cells.len(), header.len());
        }
        let nums = cells[..cells.len() - 1]
            .iter()
            .map(|c| c.parse::<f64>().with_context(|| format!("row {}: `{c}`", i + 1)))
            .collect::<Result<Vec<f64>>>()?;
        rows.times.push(nums[0]);
        rows.states.push(PhasePoint::from_flat(&nums[1..=2 * n]));
        rows.escaped.push(match cells[cells.len() - 1] {
            "0" => false,
            "1" => true,
            other => bail!("row {}: escaped flag `{other}`", i + 1),
        });
    }
    Ok(rows)
}

/// `t,count,mean_norm,var_norm` over the paths alive at each recorded time.
pub fn ensemble_csv(s: &EnsembleSummary) -> String {
    let mut out = String::from("t,count,mean_norm,var_norm\n");
    for i in 0..s.times.len() {
        let _ = writeln!(out, "{},{},{},{}", s.times[i], s.counts[i], s.mean_norm[i], s.var_norm[i]);
    }
    out
}

/// Fails unless every path can be opened for writing. Files created by the
/// probe are removed again.
pub fn ensure_writable<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for path in paths {
        let existed = path.exists();
        if path.is_dir() {
            bail!("output path {} is a directory", path.display());
        }
        OpenOptions::new()
            .append(true)
            .create(true)
            .open(path)
            .with_context(|| format!("output path {} is not writable", path.display()))?;
        if !existed {
            let _ = std::fs::remove_file(path);
        }
    }
    Ok(())
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 640.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const GAP: f64 = 60.0;
const BOTTOM: f64 = 50.0;
const MAX_POINTS: usize = 4000;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Two stacked panels, position and velocity against time.
pub fn render_svg(tr: &Trajectory, model: &str) -> Result<String> {
    if tr.is_empty() {
        bail!("cannot plot an empty trajectory");
    }
    let n = tr.states[0].n();
    let panel_h = (HEIGHT - TOP - GAP - BOTTOM) / 2.0;
    let plot_w = WIDTH - LEFT - RIGHT;

    let step = tr.len().div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..tr.len()).step_by(step).collect();
    if *idx.last().unwrap() != tr.len() - 1 {
        idx.push(tr.len() - 1);
    }
    let t0 = tr.times[0];
    let t1 = *tr.times.last().unwrap();
    let (t0, t1) = if t1 > t0 { (t0, t1) } else { (t0, t0 + 1.0) };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}, seed {}</text>"#,
        WIDTH / 2.0,
        escape(model),
        tr.seed_used
    );

    for (panel, label) in [(0usize, "x"), (1, "v")] {
        let top = TOP + panel as f64 * (panel_h + GAP);
        let component = |z: &PhasePoint, i: usize| if panel == 0 { z.x[i] } else { z.y[i] };
        let finite = idx
            .iter()
            .flat_map(|&k| (0..n).map(move |i| (k, i)))
            .map(|(k, i)| component(&tr.states[k], i))
            .filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (lo, hi) = if !lo.is_finite() {
            (-1.0, 1.0)
        } else if hi - lo < 1e-12 * (1.0 + lo.abs()) {
            (lo - 1.0, hi + 1.0)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        };
        let sx = |t: f64| LEFT + (t - t0) / (t1 - t0) * plot_w;
        let sy = |v: f64| top + (hi - v) / (hi - lo) * panel_h;

        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{top}" width="{plot_w}" height="{panel_h}" fill="none" stroke="black"/>"#
        );
        for k in 0..=5 {
            let t = t0 + (t1 - t0) * k as f64 / 5.0;
            let x = sx(t);
            let y = top + panel_h;
            let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y + 5.0);
            let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y + 18.0, tick(t));
        }
        for k in 0..=4 {
            let v = lo + (hi - lo) * k as f64 / 4.0;
            let y = sy(v);
            let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, tick(v));
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{label}</text>"#,
            LEFT - 55.0,
            top + panel_h / 2.0,
            LEFT - 55.0,
            top + panel_h / 2.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t</text>"#,
            LEFT + plot_w / 2.0,
            top + panel_h + 36.0
        );

        for i in 0..n {
            let mut d = String::new();
            let mut pen_down = false;
            for &k in &idx {
                let v = component(&tr.states[k], i);
                if !v.is_finite() {
                    pen_down = false;
                    continue;
                }
                let cmd = if pen_down { 'L' } else { 'M' };
                let _ = write!(d, "{cmd}{:.2} {:.2} ", sx(tr.times[k]), sy(v));
                pen_down = true;
            }
            let _ = writeln!(
                svg,
                r#"<path class="{label}_{}" d="{}" fill="none" stroke="{}" stroke-width="1"/>"#,
                i + 1,
                d.trim_end(),
                COLORS[i % COLORS.len()]
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
