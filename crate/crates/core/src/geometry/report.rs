//! Full per-(level, attribute) pipeline: interference, centering,
//! decomposition, metric matrices and masked statistics.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::decompose::{gram_schmidt, pair_trend, Decomposition};
use super::matrices::{center, gram, interference, max_asymmetry, metric_matrices};
use super::metric::{Metric, MetricKind};
use super::stats::{class_masks, group_stats, mean, Group, GroupStats, MaskPair};
use crate::error::{Error, Result};
use crate::types::{Attribute, Labels};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendMeans {
    pub lambda: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    pub attribute: Attribute,
    pub metric: MetricKind,
    pub n_samples: usize,
    /// Input rows kept after the collinearity guard; matrices are indexed by
    /// position in this list.
    pub retained: Vec<usize>,
    /// Input rows whose specific interference was collinear with the concept.
    pub excluded: Vec<usize>,
    pub v_task: Array1<f64>,
    /// Specific interference for every input row.
    pub delta_specific: Array2<f64>,
    pub decompositions: Vec<Decomposition>,
    pub s_base: Array2<f64>,
    pub u_sim: Array2<f64>,
    pub c_matrix: Array2<f64>,
    pub masks: MaskPair,
    pub s_stats: GroupStats,
    pub u_stats: GroupStats,
    /// Statistics of the symmetrised `C`.
    pub c_stats: GroupStats,
    /// Mean per-pair slope/intercept of the exact trend law, per group.
    pub pair_trend_same: TrendMeans,
    pub pair_trend_cross: TrendMeans,
    pub max_orthogonality_residual: f64,
    pub max_c_asymmetry: f64,
    pub max_trend_residual: f64,
}

/// Flat, serialisable view of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub attribute: Attribute,
    pub metric: MetricKind,
    pub n_samples: usize,
    pub n_retained: usize,
    pub n_excluded_collinear: usize,
    pub v_task_norm: f64,
    pub s_base: GroupStats,
    pub u_sim: GroupStats,
    pub c_sym: GroupStats,
    pub pair_trend_same: TrendMeans,
    pub pair_trend_cross: TrendMeans,
    pub max_orthogonality_residual: f64,
    pub max_c_asymmetry: f64,
    pub max_trend_residual: f64,
}

/// Runs the pipeline on baseline activations `x_base` and task activations
/// `x_task` (same rows, same order).
///
/// Samples whose specific interference is collinear with their concept
/// direction have no innovation direction; they are dropped from every
/// matrix and counted in `excluded`.
pub fn analyze(
    x_base: ArrayView2<'_, f64>,
    x_task: ArrayView2<'_, f64>,
    labels: &[Labels],
    attribute: Attribute,
    metric: &Metric,
) -> Result<GeometryReport> {
    if labels.len() != x_base.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            x_base.nrows()
        )));
    }
    metric.check_dim(x_base.ncols())?;
    let delta = interference(x_task, x_base)?;
    let (v_task, delta_specific) = center(delta.view())?;

    let mut retained = Vec::new();
    let mut excluded = Vec::new();
    let mut decompositions = Vec::new();
    for (i, (x, v)) in x_base.rows().into_iter().zip(delta_specific.rows()).enumerate() {
        match gram_schmidt(x, v, metric) {
            Ok(d) => {
                retained.push(i);
                decompositions.push(d);
            }
            Err(Error::Collinear { .. }) => excluded.push(i),
            Err(Error::DegenerateVector { norm, threshold, .. }) => {
                return Err(Error::DegenerateVector {
                    context: format!("baseline row {i}"),
                    norm,
                    threshold,
                })
            }
            Err(e) => return Err(e),
        }
    }
    if !excluded.is_empty() {
        log::warn!(
            "{} of {} samples have collinear specific interference and are excluded",
            excluded.len(),
            x_base.nrows()
        );
    }
    if retained.len() < 2 {
        return Err(Error::UndefinedStatistic(format!(
            "only {} of {} samples have a defined innovation direction",
            retained.len(),
            x_base.nrows()
        )));
    }

    let d = x_base.ncols();
    let stack = |f: &dyn Fn(&Decomposition) -> &Array1<f64>| {
        let mut m = Array2::<f64>::zeros((decompositions.len(), d));
        for (mut row, dec) in m.axis_iter_mut(Axis(0)).zip(&decompositions) {
            row.assign(f(dec));
        }
        m
    };
    let x_hat = stack(&|dec| &dec.x_hat);
    let u_hat = stack(&|dec| &dec.u_hat);

    let s_base = gram(x_hat.view(), metric);
    let (u_sim, c_matrix) = metric_matrices(x_hat.view(), u_hat.view(), metric)?;
    let kept_labels: Vec<Labels> = retained.iter().map(|&i| labels[i]).collect();
    let masks = class_masks(&kept_labels, attribute);

    let s_stats = group_stats(&s_base, &s_base, &masks)?;
    let u_stats = group_stats(&u_sim, &s_base, &masks)?;
    let c_stats = group_stats(&c_matrix, &s_base, &masks)?;

    let mut max_trend_residual = 0.0f64;
    let mut trend_means = |group: Group| -> Result<TrendMeans> {
        let pairs = masks.pairs(group);
        let mut lambdas = Vec::with_capacity(pairs.len());
        let mut ks = Vec::with_capacity(pairs.len());
        for (a, b) in pairs {
            let t = pair_trend(
                &decompositions[a],
                &decompositions[b],
                delta_specific.row(retained[a]),
                delta_specific.row(retained[b]),
                metric,
            )?;
            max_trend_residual = max_trend_residual.max((t.predict(s_base[[a, b]]) - u_sim[[a, b]]).abs());
            lambdas.push(t.lambda);
            ks.push(t.k);
        }
        Ok(TrendMeans {
            lambda: mean(&lambdas).unwrap_or(0.0),
            k: mean(&ks).unwrap_or(0.0),
        })
    };
    let pair_trend_same = trend_means(Group::Same)?;
    let pair_trend_cross = trend_means(Group::Cross)?;

    let max_orthogonality_residual = decompositions
        .iter()
        .map(|dec| metric.inner(dec.x_hat.view(), dec.u_hat.view()).abs())
        .fold(0.0, f64::max);

    Ok(GeometryReport {
        attribute,
        metric: metric.kind(),
        n_samples: x_base.nrows(),
        retained,
        excluded,
        v_task,
        delta_specific,
        decompositions,
        max_c_asymmetry: max_asymmetry(&c_matrix),
        s_base,
        u_sim,
        c_matrix,
        masks,
        s_stats,
        u_stats,
        c_stats,
        pair_trend_same,
        pair_trend_cross,
        max_orthogonality_residual,
        max_trend_residual,
    })
}

impl GeometryReport {
    pub fn summary(&self, metric: &Metric) -> ReportSummary {
        ReportSummary {
            attribute: self.attribute,
            metric: self.metric,
            n_samples: self.n_samples,
            n_retained: self.retained.len(),
            n_excluded_collinear: self.excluded.len(),
            v_task_norm: metric.norm(self.v_task.view()),
            s_base: self.s_stats.clone(),
            u_sim: self.u_stats.clone(),
            c_sym: self.c_stats.clone(),
            pair_trend_same: self.pair_trend_same,
            pair_trend_cross: self.pair_trend_cross,
            max_orthogonality_residual: self.max_orthogonality_residual,
            max_c_asymmetry: self.max_c_asymmetry,
            max_trend_residual: self.max_trend_residual,
        }
    }

    /// Per-pair scatter rows `(i, j, group, s_base, u_sim, c_sym)` using input
    /// row indices, ordered by group then `(i, j)`.
    pub fn scatter(&self) -> Vec<ScatterPoint> {
        let mut out = Vec::new();
        for group in Group::BOTH {
            for (a, b) in self.masks.pairs(group) {
                out.push(ScatterPoint {
                    i: self.retained[a],
                    j: self.retained[b],
                    group,
                    s_base: self.s_base[[a, b]],
                    u_sim: self.u_sim[[a, b]],
                    c_sym: 0.5 * (self.c_matrix[[a, b]] + self.c_matrix[[b, a]]),
                });
            }
        }
        out
    }

    /// True when the cross- and same-class `U_sim` means are within `delta`.
    pub fn entangled(&self, delta: f64) -> bool {
        self.u_stats.gap() < delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub i: usize,
    pub j: usize,
    pub group: Group,
    pub s_base: f64,
    pub u_sim: f64,
    pub c_sym: f64,
}
