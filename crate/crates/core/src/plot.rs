//! SVG rendering of run and grid outputs.
//!
//! Every plot is computed from files in a run or grid directory, so plots can
//! be regenerated without simulating again.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evolution::{GenerationRecord, GENERATIONS_CSV};
use crate::experiment::{
    read_aggregate, read_config, read_generations, read_run_rows, AggregateRow, AGGREGATE_CSV, BEST_BODY_FILE,
    BEST_TRAJECTORY_FILE, CONFIG_FILE, GRID_SUMMARY_CSV,
};
use crate::morphology::{BodyPhenotype, ModuleKind, Rotation};
use crate::sim::Trajectory;
use crate::tasks::Task;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Linear map from data space into the plot area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(xs: impl IntoIterator<Item = f64>, ys: impl IntoIterator<Item = f64>) -> Self {
        Frame {
            x: padded(xs),
            y: padded(ys),
        }
    }

    /// Equal scale on both axes, for spatial plots.
    fn square(xs: impl IntoIterator<Item = f64>, ys: impl IntoIterator<Item = f64>) -> Self {
        let (x, y) = (padded(xs), padded(ys));
        let sx = (x.1 - x.0) / (WIDTH - 2.0 * MARGIN);
        let sy = (y.1 - y.0) / (HEIGHT - 2.0 * MARGIN);
        let s = sx.max(sy);
        let grow = |r: (f64, f64), span: f64| {
            let c = (r.0 + r.1) / 2.0;
            (c - span / 2.0, c + span / 2.0)
        };
        Frame {
            x: grow(x, s * (WIDTH - 2.0 * MARGIN)),
            y: grow(y, s * (HEIGHT - 2.0 * MARGIN)),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn padded(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.into_iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = if hi > lo { (hi - lo) * 0.05 } else { lo.abs().max(1.0) * 0.5 };
    (lo - pad, hi + pad)
}

/// Roughly five round tick values covering `range`.
fn ticks(range: (f64, f64)) -> Vec<f64> {
    let raw = (range.1 - range.0) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (range.0 / step).ceil() * step;
    let mut out = Vec::new();
    while t <= range.1 + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    s
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<g class="axes" stroke="black" fill="none"><path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}"/></g>"#);
    for t in ticks(f.x) {
        let x = f.px(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/>"#, y0 + 4.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, y0 + 17.0, fmt_tick(t));
    }
    for t in ticks(f.y) {
        let y = f.py(t);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn legend(s: &mut String, entries: &[(String, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN + 4.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 200.0;
        let _ = writeln!(s, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, x + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x + 24.0, y + 4.0, escape(label));
    }
}

fn polyline(s: &mut String, class: &str, color: &str, points: &[(f64, f64)]) {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        s,
        r#"<polyline class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
        pts.join(" ")
    );
}

fn markers(s: &mut String, color: &str, points: &[(f64, f64)]) {
    for (x, y) in points {
        let _ = writeln!(s, r#"<circle class="point" cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
    }
}

/// Mean and best fitness of one run per generation.
pub fn fitness_curve_svg(records: &[GenerationRecord], title: &str) -> String {
    let f = Frame::new(
        records.iter().map(|r| r.generation as f64),
        records.iter().flat_map(|r| [r.mean_fitness, r.max_fitness]),
    );
    let mut s = open(title);
    axes(&mut s, &f, "generation", "fitness");
    type Getter = fn(&GenerationRecord) -> f64;
    let series: [(&str, Getter); 2] = [("mean", |r| r.mean_fitness), ("best", |r| r.max_fitness)];
    for (k, (_, get)) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = records.iter().map(|r| (f.px(r.generation as f64), f.py(get(r)))).collect();
        if pts.len() > 1 {
            polyline(&mut s, "series", PALETTE[k], &pts);
        }
        markers(&mut s, PALETTE[k], &pts);
    }
    legend(&mut s, &[("mean".into(), PALETTE[0]), ("best".into(), PALETTE[1])]);
    s.push_str("</svg>\n");
    s
}

/// Which aggregate series a grid curve shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    Best,
}

/// One line per cell with a `mean ± 1.96 SE` band across repetitions.
pub fn grid_curves_svg(series: &[(String, Vec<AggregateRow>)], stat: Statistic, title: &str) -> String {
    let get = |r: &AggregateRow| match stat {
        Statistic::Mean => (r.mean_of_mean, r.ci_of_mean),
        Statistic::Best => (r.mean_of_max, r.ci_of_max),
    };
    let f = Frame::new(
        series.iter().flat_map(|(_, rows)| rows.iter().map(|r| r.generation as f64)),
        series.iter().flat_map(|(_, rows)| {
            rows.iter().flat_map(move |r| {
                let (m, ci) = get(r);
                [m - ci, m + ci]
            })
        }),
    );
    let mut s = open(title);
    axes(&mut s, &f, "generation", "fitness");
    let mut entries = Vec::new();
    for (k, (label, rows)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let has_band = rows.len() > 1 && rows.iter().any(|r| get(r).1 > 0.0);
        if has_band {
            let upper = rows.iter().map(|r| (f.px(r.generation as f64), f.py(get(r).0 + get(r).1)));
            let lower = rows.iter().rev().map(|r| (f.px(r.generation as f64), f.py(get(r).0 - get(r).1)));
            let pts: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                pts.join(" ")
            );
        }
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (f.px(r.generation as f64), f.py(get(r).0))).collect();
        if pts.len() > 1 {
            polyline(&mut s, "series", color, &pts);
        } else {
            markers(&mut s, color, &pts);
        }
        entries.push((label.clone(), color));
    }
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    s
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Box (quartiles), whiskers (min/max) and a mean marker per group.
pub fn boxplot_svg(groups: &[(String, Vec<f64>)], title: &str) -> String {
    let f = Frame::new([-0.5, groups.len() as f64 - 0.5], groups.iter().flat_map(|(_, v)| v.iter().copied()));
    let mut s = open(title);
    axes_y_only(&mut s, &f, "final best fitness");
    let half = (f.px(0.3) - f.px(0.0)).abs();
    for (k, (label, values)) in groups.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let x = f.px(k as f64);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
            HEIGHT - MARGIN + 16.0,
            escape(label)
        );
        if values.is_empty() {
            continue;
        }
        let mut v = values.clone();
        v.sort_by(f64::total_cmp);
        let (q1, med, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let _ = writeln!(
            s,
            r#"<line class="whisker" x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            f.py(v[0]),
            f.py(v[v.len() - 1])
        );
        let _ = writeln!(
            s,
            r#"<rect class="box" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.5" stroke="black"/>"#,
            x - half,
            f.py(q3),
            2.0 * half,
            (f.py(q1) - f.py(q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line class="median" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            x - half,
            f.py(med),
            x + half,
            f.py(med)
        );
        let (mx, my) = (x, f.py(mean));
        let _ = writeln!(
            s,
            r#"<path class="mean" d="M{:.2},{my:.2} L{mx:.2},{:.2} L{:.2},{my:.2} L{mx:.2},{:.2} Z" fill="white" stroke="black"/>"#,
            mx - 5.0,
            my - 5.0,
            mx + 5.0,
            my + 5.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn axes_y_only(s: &mut String, f: &Frame, ylabel: &str) {
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<g class="axes" stroke="black" fill="none"><path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}"/></g>"#);
    for t in ticks(f.y) {
        let y = f.py(t);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
}

/// Top-down paths with a square at the start and circles at the targets.
pub fn trajectory_svg(paths: &[(String, Trajectory)], targets: &[[f64; 2]], title: &str) -> String {
    let xs = paths
        .iter()
        .flat_map(|(_, t)| t.positions().map(|p| p[0]))
        .chain(targets.iter().map(|t| t[0]))
        .chain([0.0]);
    let ys = paths
        .iter()
        .flat_map(|(_, t)| t.positions().map(|p| p[1]))
        .chain(targets.iter().map(|t| t[1]))
        .chain([0.0]);
    let f = Frame::square(xs.collect::<Vec<_>>(), ys.collect::<Vec<_>>());
    let mut s = open(title);
    axes(&mut s, &f, "x (m)", "y (m)");
    let mut entries = Vec::new();
    for (k, (label, traj)) in paths.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if traj.path_length() > 0.0 {
            let pts: Vec<(f64, f64)> = traj.positions().map(|p| (f.px(p[0]), f.py(p[1]))).collect();
            polyline(&mut s, "path", color, &pts);
        }
        entries.push((label.clone(), color));
    }
    for (i, t) in targets.iter().enumerate() {
        let (x, y) = (f.px(t[0]), f.py(t[1]));
        let _ = writeln!(s, r#"<circle class="target" cx="{x:.2}" cy="{y:.2}" r="7" fill="none" stroke="black" stroke-width="2"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">P{}</text>"#, x + 9.0, y - 9.0, i + 1);
    }
    let _ = writeln!(
        s,
        r#"<rect class="start" x="{:.2}" y="{:.2}" width="10" height="10" fill="black"/>"#,
        f.px(0.0) - 5.0,
        f.py(0.0) - 5.0
    );
    if paths.len() > 1 {
        legend(&mut s, &entries);
    }
    s.push_str("</svg>\n");
    s
}

/// Top-down view of the module grid. Modules above or below the plane are
/// drawn as smaller squares offset inside their column's cell.
pub fn morphology_svg(body: &BodyPhenotype, title: &str) -> String {
    let xs: Vec<f64> = body.modules().iter().map(|m| m.grid_pos[0] as f64).collect();
    let ys: Vec<f64> = body.modules().iter().map(|m| m.grid_pos[1] as f64).collect();
    let f = Frame::square(xs.iter().map(|x| x - 0.5).chain(xs.iter().map(|x| x + 0.5)), ys.iter().map(|y| y - 0.5).chain(ys.iter().map(|y| y + 0.5)));
    let cell = f.px(1.0) - f.px(0.0);
    let mut s = open(title);
    let mut edges = String::new();
    for m in body.modules() {
        if let Some(p) = m.parent {
            let parent = &body.modules()[p.0];
            let _ = writeln!(
                edges,
                r#"<line class="edge" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-width="2"/>"#,
                f.px(parent.grid_pos[0] as f64),
                f.py(parent.grid_pos[1] as f64),
                f.px(m.grid_pos[0] as f64),
                f.py(m.grid_pos[1] as f64)
            );
        }
    }
    s.push_str(&edges);
    for m in body.modules() {
        let (color, class, letter) = match m.kind {
            ModuleKind::Core => ("#f2c14e", "core", "C"),
            ModuleKind::Brick => ("#4e79a7", "brick", "B"),
            ModuleKind::ActiveHinge => ("#e15759", "hinge", "H"),
        };
        let z = m.grid_pos[2];
        let size = if z == 0 { cell * 0.8 } else { cell * 0.45 };
        let cx = f.px(m.grid_pos[0] as f64) + if z == 0 { 0.0 } else { cell * 0.2 * z.signum() as f64 };
        let cy = f.py(m.grid_pos[1] as f64) - if z == 0 { 0.0 } else { cell * 0.2 * z.signum() as f64 };
        let rotated = if m.rotation == Rotation::Deg90 { "'" } else { "" };
        let _ = writeln!(
            s,
            r#"<rect class="{class}" x="{:.2}" y="{:.2}" width="{size:.2}" height="{size:.2}" fill="{color}" stroke="black"/>"#,
            cx - size / 2.0,
            cy - size / 2.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" fill="white">{letter}{rotated}{}</text>"#,
            cy + 4.0,
            if z == 0 { String::new() } else { format!(" z{z}") }
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write_svg(path: &Path, svg: &str) -> Result<PathBuf> {
    fs::write(path, svg).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Renders `fitness.svg`, `trajectory.svg` and `morphology.svg` for a run.
pub fn plot_run(dir: &Path) -> Result<Vec<PathBuf>> {
    let records = read_generations(&dir.join(GENERATIONS_CSV))?;
    let config = read_config(&dir.join(CONFIG_FILE))?;
    let traj = Trajectory::load_csv(&dir.join(BEST_TRAJECTORY_FILE))?;
    let body_path = dir.join(BEST_BODY_FILE);
    let body_text = fs::read_to_string(&body_path).map_err(|e| Error::io(&body_path, e))?;
    let body = BodyPhenotype::from_json(&body_text).map_err(|e| Error::parse(&body_path, e.to_string()))?;
    let targets = match &config.task {
        Task::PointNavigation(t) => t.targets.clone(),
        Task::Rotation(_) => Vec::new(),
    };
    let label = format!("{} / {} / {} / seed {}", config.task.name(), config.brain_mode.name(), config.inheritance.name(), config.seed);
    Ok(vec![
        write_svg(&dir.join("fitness.svg"), &fitness_curve_svg(&records, &label))?,
        write_svg(&dir.join("trajectory.svg"), &trajectory_svg(&[("best".into(), traj)], &targets, &label))?,
        write_svg(&dir.join("morphology.svg"), &morphology_svg(&body, &label))?,
    ])
}

/// Renders per-task curves, boxplots and best-run trajectory overlays for a
/// grid output directory.
pub fn plot_grid(dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_run_rows(&dir.join(GRID_SUMMARY_CSV))?;
    let mut by_task: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in &rows {
        let cells = by_task.entry(r.task.clone()).or_default();
        if !cells.contains(&r.cell) {
            cells.push(r.cell.clone());
        }
    }
    let mut written = Vec::new();
    for (task, cells) in &by_task {
        let short = |cell: &str| cell.strip_prefix(&format!("{task}-")).unwrap_or(cell).to_string();
        let mut series = Vec::new();
        let mut finals = Vec::new();
        let mut overlays = Vec::new();
        let mut targets = Vec::new();
        for cell in cells {
            series.push((short(cell), read_aggregate(&dir.join(cell).join(AGGREGATE_CSV))?));
            let runs: Vec<_> = rows.iter().filter(|r| &r.cell == cell).collect();
            finals.push((short(cell), runs.iter().map(|r| r.final_max_fitness).collect()));
            let best = runs
                .iter()
                .max_by(|a, b| a.final_max_fitness.total_cmp(&b.final_max_fitness).then(b.repetition.cmp(&a.repetition)))
                .expect("cells come from rows");
            let run_dir = dir.join(cell).join(format!("rep{:02}", best.repetition));
            overlays.push((short(cell), Trajectory::load_csv(&run_dir.join(BEST_TRAJECTORY_FILE))?));
            if let Task::PointNavigation(t) = read_config(&run_dir.join(CONFIG_FILE))?.task {
                targets = t.targets;
            }
        }
        written.push(write_svg(
            &dir.join(format!("{task}_fitness_mean.svg")),
            &grid_curves_svg(&series, Statistic::Mean, &format!("{task}: mean fitness, 95% CI")),
        )?);
        written.push(write_svg(
            &dir.join(format!("{task}_fitness_best.svg")),
            &grid_curves_svg(&series, Statistic::Best, &format!("{task}: best fitness, 95% CI")),
        )?);
        written.push(write_svg(
            &dir.join(format!("{task}_final_boxplot.svg")),
            &boxplot_svg(&finals, &format!("{task}: final generation")),
        )?);
        written.push(write_svg(
            &dir.join(format!("{task}_trajectories.svg")),
            &trajectory_svg(&overlays, &targets, &format!("{task}: best robot per cell")),
        )?);
    }
    Ok(written)
}
