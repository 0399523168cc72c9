//! Markdown, CSV and SVG emission. Numbers are printed with fixed precision
//! in Markdown and full round-trip precision in CSV.

use std::fmt::Write as _;

use manifold_gauge::geometry::{GroupStats, ScatterPoint, Statistic};
use manifold_gauge::plot::{render_svg, Chart, ReferenceLine, Series, SeriesKind};
use manifold_gauge::{Group, LayerTrajectory, Level};

/// Scatter plots keep at most this many points per series (evenly strided).
pub const MAX_SCATTER_POINTS: usize = 4000;

const SAME_COLOR: &str = "#1f77b4";
const CROSS_COLOR: &str = "#d62728";
const SAME_FADED: &str = "#9ecae1";
const CROSS_FADED: &str = "#fcae91";

pub fn f4(v: f64) -> String {
    format!("{v:.4}")
}

pub fn stat(s: &Statistic) -> String {
    s.to_string()
}

pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header).expect("in-memory write");
    for row in rows {
        wtr.write_record(&row).expect("in-memory write");
    }
    wtr.into_inner().expect("in-memory flush")
}

/// Markdown table; `rows` are already formatted cells.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out
}

pub const SUMMARY_HEADER: [&str; 9] = [
    "Level",
    "Type",
    "Attribute",
    "Pearson r (same)",
    "Pearson r (cross)",
    "Mean U_sim (same)",
    "Mean U_sim (cross)",
    "Mean C_ij (same)",
    "Mean C_ij (cross)",
];

/// One row in the layout of the core-metrics table: Pearson r of `U_sim`
/// against `S_base`, then mean `U_sim`, then mean symmetrised `C_ij`.
pub fn summary_row(level: Level, attribute: &str, u: &GroupStats, c: &GroupStats) -> Vec<String> {
    vec![
        level.to_string(),
        level.description().to_string(),
        attribute.to_string(),
        stat(&u.same.pearson),
        stat(&u.cross.pearson),
        f4(u.same.mean),
        f4(u.cross.mean),
        f4(c.same.mean),
        f4(c.cross.mean),
    ]
}

fn thin(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if points.len() <= MAX_SCATTER_POINTS {
        return points;
    }
    let stride = points.len().div_ceil(MAX_SCATTER_POINTS);
    points.into_iter().step_by(stride).collect()
}

fn group_points(points: &[ScatterPoint], group: Group) -> Vec<(f64, f64)> {
    thin(
        points
            .iter()
            .filter(|p| p.group == group)
            .map(|p| (p.s_base, p.u_sim))
            .collect(),
    )
}

/// `U_sim` against `S_base`, one colour per mask.
pub fn scatter_svg(title: &str, points: &[ScatterPoint]) -> String {
    render_svg(&Chart {
        title: title.to_string(),
        x_label: "S_base".into(),
        y_label: "U_sim".into(),
        series: vec![
            Series::new("same class", SAME_COLOR, SeriesKind::Scatter, group_points(points, Group::Same)),
            Series::new("cross class", CROSS_COLOR, SeriesKind::Scatter, group_points(points, Group::Cross)),
        ],
        references: vec![ReferenceLine::Diagonal, ReferenceLine::Zero],
    })
}

/// Pre-patch points faded, post-patch points solid.
pub fn ablation_svg(title: &str, pre: &[ScatterPoint], post: &[ScatterPoint]) -> String {
    render_svg(&Chart {
        title: title.to_string(),
        x_label: "S_base".into(),
        y_label: "U_sim".into(),
        series: vec![
            Series::new("same, pre", SAME_FADED, SeriesKind::Scatter, group_points(pre, Group::Same)),
            Series::new("cross, pre", CROSS_FADED, SeriesKind::Scatter, group_points(pre, Group::Cross)),
            Series::new("same, post", SAME_COLOR, SeriesKind::Scatter, group_points(post, Group::Same)),
            Series::new("cross, post", CROSS_COLOR, SeriesKind::Scatter, group_points(post, Group::Cross)),
        ],
        references: vec![ReferenceLine::Diagonal, ReferenceLine::Zero],
    })
}

fn by_layer(layers: &[u32], ys: &[f64]) -> Vec<(f64, f64)> {
    layers.iter().zip(ys).map(|(&l, &y)| (f64::from(l), y)).collect()
}

/// Mean `U_sim` (solid) and mean `C_ij` (faded) per layer for both masks.
pub fn trajectory_svg(t: &LayerTrajectory) -> String {
    render_svg(&Chart {
        title: format!("{} {}: group means by layer", t.level, t.attribute),
        x_label: "layer".into(),
        y_label: "mean".into(),
        series: vec![
            Series::new("U_sim same", SAME_COLOR, SeriesKind::Line, by_layer(&t.layers, &t.same_u)),
            Series::new("U_sim cross", CROSS_COLOR, SeriesKind::Line, by_layer(&t.layers, &t.cross_u)),
            Series::new("C_ij same", SAME_FADED, SeriesKind::Line, by_layer(&t.layers, &t.same_c)),
            Series::new("C_ij cross", CROSS_FADED, SeriesKind::Line, by_layer(&t.layers, &t.cross_c)),
        ],
        references: vec![ReferenceLine::Zero],
    })
}

/// Phase portrait: `C_ij` on x, `U_sim` on y, one path per mask.
pub fn portrait_svg(t: &LayerTrajectory) -> String {
    let path = |c: &[f64], u: &[f64]| c.iter().copied().zip(u.iter().copied()).collect();
    render_svg(&Chart {
        title: format!("{} {}: phase portrait", t.level, t.attribute),
        x_label: "mean C_ij".into(),
        y_label: "mean U_sim".into(),
        series: vec![
            Series::new("same class", SAME_COLOR, SeriesKind::Line, path(&t.same_c, &t.same_u)),
            Series::new("cross class", CROSS_COLOR, SeriesKind::Line, path(&t.cross_c, &t.cross_u)),
        ],
        references: vec![ReferenceLine::Zero],
    })
}
