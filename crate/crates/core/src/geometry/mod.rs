//! Interference decomposition, rotation equivalence, similarity evolution,
//! the pairwise trend law and class-masked metric statistics.
//!
//! All arithmetic is 64-bit. Every operation accepts a [`Metric`]; the
//! standard Euclidean inner product is the default.

mod decompose;
mod matrices;
mod metric;
mod report;
mod stats;

pub use decompose::{
    gram_schmidt, pair_trend, rotation_params, s_new_expanded, unit, Decomposition, PairTrend, EPS_COLLINEAR, EPS_INTERFERENCE,
    EPS_NORM,
};
pub use matrices::{
    base_similarity, center, cross_gram, gram, interference, max_asymmetry, metric_matrices, unit_rows,
};
pub use metric::{weighted_inner, Metric, MetricKind};
pub use report::{analyze, GeometryReport, ReportSummary, ScatterPoint, TrendMeans};
pub use stats::{
    class_masks, group_stats, masks_from_classes, mean, ols, pearson, Group, GroupStats, MaskPair, MaskStats,
    Statistic,
};
