//! Per-class specific vectors, the direct and orthogonal healing operators,
//! and the geometric check of the patched manifold.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{analyze, base_similarity, center, interference, GeometryReport, Metric, EPS_NORM};
use crate::store::{self, label_key, PatchFile, PatchMode};
use crate::types::{Attribute, LayerId, Labels, Level};

/// Default absolute `U_sim` mean gap below which a manifold counts as
/// entangled.
pub const DEFAULT_DELTA: f64 = 0.1;

/// Mean specific-interference vector per attribute value.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVectors {
    pub attribute: Attribute,
    pub vectors: BTreeMap<bool, Array1<f64>>,
    pub counts: BTreeMap<bool, usize>,
}

impl ClassVectors {
    pub fn get(&self, label: bool) -> Result<&Array1<f64>> {
        self.vectors.get(&label).ok_or_else(|| {
            Error::MissingData(format!("no class vector for {}={}", self.attribute, label_key(label)))
        })
    }
}

/// `v_label` = mean of the rows of `delta_specific` carrying that label.
/// Both attribute values must be present.
pub fn class_vectors(delta_specific: ArrayView2<'_, f64>, labels: &[Labels], attribute: Attribute) -> Result<ClassVectors> {
    if labels.len() != delta_specific.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {} specific rows",
            labels.len(),
            delta_specific.nrows()
        )));
    }
    let mut vectors = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for label in [false, true] {
        let mut sum = Array1::<f64>::zeros(delta_specific.ncols());
        let mut count = 0usize;
        for (row, l) in delta_specific.rows().into_iter().zip(labels) {
            if l.get(attribute) == label {
                sum += &row;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::MissingData(format!(
                "no samples with {attribute}={}",
                label_key(label)
            )));
        }
        sum.mapv_inplace(|s| s / count as f64);
        vectors.insert(label, sum);
        counts.insert(label, count);
    }
    Ok(ClassVectors { attribute, vectors, counts })
}

/// `x - v_label`.
pub fn ablate_direct(x: ArrayView1<'_, f64>, v_label: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if x.len() != v_label.len() {
        return Err(Error::ShapeMismatch(format!(
            "state has length {} but patch vector has length {}",
            x.len(),
            v_label.len()
        )));
    }
    Ok(&x - &v_label)
}

/// `x - (v - <v, x_hat> x_hat)`: removes only the part of `v_label` normal to
/// the current state, leaving its radial component alone.
pub fn ablate_ortho(x: ArrayView1<'_, f64>, v_label: ArrayView1<'_, f64>, metric: &Metric) -> Result<Array1<f64>> {
    if x.len() != v_label.len() {
        return Err(Error::ShapeMismatch(format!(
            "state has length {} but patch vector has length {}",
            x.len(),
            v_label.len()
        )));
    }
    metric.check_dim(x.len())?;
    let norm = metric.norm(x);
    if !(norm > EPS_NORM) {
        return Err(Error::DegenerateVector {
            context: "ablate_ortho state".into(),
            norm,
            threshold: EPS_NORM,
        });
    }
    let x_hat = x.mapv(|c| c / norm);
    let p = metric.inner(v_label, x_hat.view());
    let mut out = &x - &v_label;
    out.scaled_add(p, &x_hat);
    Ok(out)
}

/// Applies the class patch of each row's label to every row of `x`.
pub fn patch_rows(
    x: ArrayView2<'_, f64>,
    labels: &[Labels],
    vectors: &ClassVectors,
    mode: PatchMode,
    metric: &Metric,
) -> Result<Array2<f64>> {
    if labels.len() != x.nrows() {
        return Err(Error::ShapeMismatch(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    let rows: Vec<Array1<f64>> = (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let v = vectors.get(labels[i].get(vectors.attribute))?;
            match mode {
                PatchMode::Direct => ablate_direct(x.row(i), v.view()),
                PatchMode::Ortho => ablate_ortho(x.row(i), v.view(), metric).map_err(|e| match e {
                    Error::DegenerateVector { norm, threshold, .. } => Error::DegenerateVector {
                        context: format!("task row {i}"),
                        norm,
                        threshold,
                    },
                    other => other,
                }),
            }
        })
        .collect::<Result<_>>()?;
    let mut out = Array2::<f64>::zeros(x.dim());
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(&rows) {
        dst.assign(src);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HealingVerdict {
    /// Divergent before, entangled after.
    Healed,
    /// Already entangled before patching: there was no class boundary.
    NoBoundaryToHeal,
    /// Still divergent after patching.
    NotHealed,
}

impl HealingVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            HealingVerdict::Healed => "healed",
            HealingVerdict::NoBoundaryToHeal => "no boundary to heal",
            HealingVerdict::NotHealed => "not healed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HealingReport {
    pub pre_report: GeometryReport,
    pub post_report: GeometryReport,
    pub delta: f64,
    pub entangled_pre: bool,
    pub entangled_post: bool,
    /// Mean `|S(X_pre) - S(X_base)|` over pairs `i < j`.
    pub s_drift_pre: f64,
    /// Mean `|S(X_post) - S(X_base)|` over pairs `i < j`.
    pub s_drift_post: f64,
    pub verdict: HealingVerdict,
}

impl HealingReport {
    /// `0 < cross mean < same mean` for the patched `U_sim`.
    pub fn in_entanglement_zone(&self) -> bool {
        let u = &self.post_report.u_stats;
        0.0 < u.cross.mean && u.cross.mean < u.same.mean
    }
}

fn mean_abs_offdiag_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += (a[[i, j]] - b[[i, j]]).abs();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Re-runs the full geometry on `(X_post vs X_base)` and compares it with
/// `(X_pre vs X_base)`.
pub fn healing_report(
    x_pre: ArrayView2<'_, f64>,
    x_post: ArrayView2<'_, f64>,
    x_base: ArrayView2<'_, f64>,
    labels: &[Labels],
    attribute: Attribute,
    metric: &Metric,
    delta: f64,
) -> Result<HealingReport> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("entanglement delta must be positive, got {delta}")));
    }
    if x_pre.dim() != x_post.dim() {
        return Err(Error::ShapeMismatch(format!(
            "pre-patch states {:?} vs post-patch states {:?}",
            x_pre.dim(),
            x_post.dim()
        )));
    }
    let pre_report = analyze(x_base, x_pre, labels, attribute, metric)?;
    let post_report = analyze(x_base, x_post, labels, attribute, metric)?;
    let s_base = base_similarity(x_base, metric)?;
    let s_drift_pre = mean_abs_offdiag_diff(&base_similarity(x_pre, metric)?, &s_base);
    let s_drift_post = mean_abs_offdiag_diff(&base_similarity(x_post, metric)?, &s_base);
    let entangled_pre = pre_report.entangled(delta);
    let entangled_post = post_report.entangled(delta);
    let verdict = if entangled_pre {
        HealingVerdict::NoBoundaryToHeal
    } else if entangled_post {
        HealingVerdict::Healed
    } else {
        HealingVerdict::NotHealed
    };
    Ok(HealingReport {
        pre_report,
        post_report,
        delta,
        entangled_pre,
        entangled_post,
        s_drift_pre,
        s_drift_post,
        verdict,
    })
}

/// Row-wise agreement between direct- and ortho-patched states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchAgreement {
    pub mean_cosine: f64,
    pub min_cosine: f64,
    /// Largest `|v_label| / |x|` over the rows.
    pub max_omega: f64,
}

pub fn patch_agreement(
    x: ArrayView2<'_, f64>,
    direct: ArrayView2<'_, f64>,
    ortho: ArrayView2<'_, f64>,
    labels: &[Labels],
    vectors: &ClassVectors,
    metric: &Metric,
) -> Result<PatchAgreement> {
    let n = x.nrows();
    if n == 0 || direct.dim() != x.dim() || ortho.dim() != x.dim() || labels.len() != n {
        return Err(Error::ShapeMismatch("patch agreement needs equally shaped, non-empty inputs".into()));
    }
    let mut sum = 0.0;
    let mut min_cosine = f64::INFINITY;
    let mut max_omega = 0.0f64;
    for (i, label) in labels.iter().enumerate() {
        let (a, b) = (direct.row(i), ortho.row(i));
        let (na, nb) = (metric.norm(a), metric.norm(b));
        if !(na > EPS_NORM && nb > EPS_NORM) {
            return Err(Error::DegenerateVector {
                context: format!("patched row {i}"),
                norm: na.min(nb),
                threshold: EPS_NORM,
            });
        }
        let cos = metric.inner(a, b) / (na * nb);
        sum += cos;
        min_cosine = min_cosine.min(cos);
        let v = vectors.get(label.get(vectors.attribute))?;
        max_omega = max_omega.max(metric.norm(v.view()) / metric.norm(x.row(i)));
    }
    Ok(PatchAgreement {
        mean_cosine: sum / n as f64,
        min_cosine,
        max_omega,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub mode: PatchMode,
    pub class_vectors: ClassVectors,
    pub patched: Array2<f64>,
    pub healing: HealingReport,
    /// Direct vs ortho agreement; both modes are always computed.
    pub agreement: PatchAgreement,
}

impl AblationResult {
    /// Mean cosine between direct- and ortho-patched states.
    pub fn healing_similarity(&self) -> f64 {
        self.agreement.mean_cosine
    }
}

/// Computes class vectors from `(x_task - x_base)`, patches `x_task` with
/// `mode` and evaluates the patched manifold.
pub fn ablate(
    x_base: ArrayView2<'_, f64>,
    x_task: ArrayView2<'_, f64>,
    labels: &[Labels],
    attribute: Attribute,
    metric: &Metric,
    mode: PatchMode,
    delta: f64,
) -> Result<AblationResult> {
    let (_, specific) = center(interference(x_task, x_base)?.view())?;
    let vectors = class_vectors(specific.view(), labels, attribute)?;
    let direct = patch_rows(x_task, labels, &vectors, PatchMode::Direct, metric)?;
    let ortho = patch_rows(x_task, labels, &vectors, PatchMode::Ortho, metric)?;
    let agreement = patch_agreement(x_task, direct.view(), ortho.view(), labels, &vectors, metric)?;
    let patched = match mode {
        PatchMode::Direct => direct,
        PatchMode::Ortho => ortho,
    };
    let healing = healing_report(x_task, patched.view(), x_base, labels, attribute, metric, delta)?;
    Ok(AblationResult {
        mode,
        class_vectors: vectors,
        patched,
        healing,
        agreement,
    })
}

/// Writes the class vectors as a patch file (and index entry) in the store.
pub fn export_patch(
    vectors: &ClassVectors,
    level: Level,
    layer: LayerId,
    mode: PatchMode,
    dir: &Path,
) -> Result<PatchFile> {
    if vectors.vectors.is_empty() {
        return Err(Error::InvalidArgument("no class vectors to export".into()));
    }
    let entries = vectors
        .vectors
        .iter()
        .map(|(&label, v)| (label_key(label).to_string(), v.iter().map(|&c| c as f32).collect()))
        .collect();
    let patch = PatchFile {
        level,
        layer,
        mode,
        attribute: vectors.attribute,
        entries,
    };
    store::write_patch(dir, &patch)?;
    Ok(patch)
}
