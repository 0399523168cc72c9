//! Per-sample orthogonal decomposition of an interference vector and the
//! equivalent rotation it induces on the normalisation sphere.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::metric::Metric;
use crate::error::{Error, Result};

/// Norms at or below this are treated as zero.
pub const EPS_NORM: f64 = 1e-12;
/// Relative orthogonal length below which `v` counts as collinear with `x`.
pub const EPS_COLLINEAR: f64 = 1e-10;
/// `|v| / |x|` at or below this is rounding residue, not interference.
pub const EPS_INTERFERENCE: f64 = 1e-12;

pub fn unit(v: ArrayView1<'_, f64>, metric: &Metric) -> Result<Array1<f64>> {
    metric.check_dim(v.len())?;
    let norm = metric.norm(v);
    if !(norm > EPS_NORM) {
        return Err(Error::DegenerateVector {
            context: "unit".into(),
            norm,
            threshold: EPS_NORM,
        });
    }
    Ok(v.mapv(|c| c / norm))
}

/// `v = p * x_hat + q * u_hat` with `u_hat` orthogonal to `x_hat`, plus the
/// rotation `(omega, phi, N, alpha)` that normalising `x + v` amounts to.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub x_hat: Array1<f64>,
    pub u_hat: Array1<f64>,
    pub x_norm: f64,
    pub v_norm: f64,
    /// Signed projection length `<v, x_hat>`.
    pub p: f64,
    /// Orthogonal length `|v - p x_hat|`.
    pub q: f64,
    /// Relative conflict intensity `|v| / |x|`.
    pub omega: f64,
    /// Interference angle between `v` and `x_hat`, in `[0, pi]`.
    pub phi: f64,
    /// Norm scaling `sqrt(1 + 2 omega cos(phi) + omega^2)`.
    pub n_coef: f64,
    pub cos_alpha: f64,
    pub sin_alpha: f64,
}

impl Decomposition {
    /// `cos(alpha) x_hat + sin(alpha) u_hat`, the normalised updated state.
    pub fn rotated(&self) -> Array1<f64> {
        &self.x_hat * self.cos_alpha + &self.u_hat * self.sin_alpha
    }

    /// `p x_hat + q u_hat`.
    pub fn reconstruct(&self) -> Array1<f64> {
        &self.x_hat * self.p + &self.u_hat * self.q
    }

    pub fn alpha(&self) -> f64 {
        self.sin_alpha.atan2(self.cos_alpha)
    }
}

/// Gram-Schmidt step of `v` against `x`, with one re-orthogonalisation pass
/// so the residual `<x_hat, u_hat>` stays at rounding level even when `v` is
/// nearly parallel to `x`.
pub fn gram_schmidt(x: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>, metric: &Metric) -> Result<Decomposition> {
    if x.len() != v.len() {
        return Err(Error::ShapeMismatch(format!(
            "gram_schmidt: x has length {} but v has length {}",
            x.len(),
            v.len()
        )));
    }
    metric.check_dim(x.len())?;
    let x_norm = metric.norm(x);
    if !(x_norm > EPS_NORM) {
        return Err(Error::DegenerateVector {
            context: "gram_schmidt base vector".into(),
            norm: x_norm,
            threshold: EPS_NORM,
        });
    }
    let x_hat = x.mapv(|c| c / x_norm);

    let mut p = metric.inner(v, x_hat.view());
    let mut r = v.to_owned();
    r.scaled_add(-p, &x_hat);
    let correction = metric.inner(r.view(), x_hat.view());
    r.scaled_add(-correction, &x_hat);
    p += correction;

    let q = metric.norm(r.view());
    let v_norm = metric.norm(v);
    let threshold = EPS_COLLINEAR * v_norm;
    if !(v_norm > EPS_INTERFERENCE * x_norm) {
        return Err(Error::Collinear {
            context: "gram_schmidt: vanishing interference".into(),
            q,
            threshold: EPS_INTERFERENCE * x_norm,
        });
    }
    if !(q > threshold) || q == 0.0 {
        return Err(Error::Collinear {
            context: "gram_schmidt".into(),
            q,
            threshold,
        });
    }
    r.mapv_inplace(|c| c / q);

    let omega = v_norm / x_norm;
    let cos_phi = p / v_norm;
    let sin_phi = q / v_norm;
    let n_coef = (1.0 + 2.0 * omega * cos_phi + omega * omega).sqrt();
    Ok(Decomposition {
        x_hat,
        u_hat: r,
        x_norm,
        v_norm,
        p,
        q,
        omega,
        phi: q.atan2(p),
        n_coef,
        cos_alpha: (1.0 + omega * cos_phi) / n_coef,
        sin_alpha: omega * sin_phi / n_coef,
    })
}

/// Rotation parameters of the update `x -> x + delta`. Same decomposition as
/// [`gram_schmidt`]; named separately for call sites that reason about the
/// rotation rather than the projection.
pub fn rotation_params(x: ArrayView1<'_, f64>, delta: ArrayView1<'_, f64>, metric: &Metric) -> Result<Decomposition> {
    gram_schmidt(x, delta, metric)
}

/// Four-term expansion of the post-update similarity
/// `<normalize(x_i + d_i), normalize(x_j + d_j)>`.
pub fn s_new_expanded(di: &Decomposition, dj: &Decomposition, metric: &Metric) -> f64 {
    let s_base = metric.inner(di.x_hat.view(), dj.x_hat.view());
    let c_ij = metric.inner(di.x_hat.view(), dj.u_hat.view());
    let c_ji = metric.inner(di.u_hat.view(), dj.x_hat.view());
    let u_sim = metric.inner(di.u_hat.view(), dj.u_hat.view());
    di.cos_alpha * dj.cos_alpha * s_base
        + di.cos_alpha * dj.sin_alpha * c_ij
        + di.sin_alpha * dj.cos_alpha * c_ji
        + di.sin_alpha * dj.sin_alpha * u_sim
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTrend {
    pub lambda: f64,
    pub k: f64,
}

impl PairTrend {
    pub fn predict(&self, s_base: f64) -> f64 {
        self.lambda * s_base + self.k
    }
}

/// Slope and intercept of the exact pairwise law `U_sim = lambda * S_base + k`
/// for specific-interference vectors `v_i`, `v_j` decomposed in `di`, `dj`.
pub fn pair_trend(
    di: &Decomposition,
    dj: &Decomposition,
    v_i: ArrayView1<'_, f64>,
    v_j: ArrayView1<'_, f64>,
    metric: &Metric,
) -> Result<PairTrend> {
    for (d, name) in [(di, "i"), (dj, "j")] {
        if !(d.q > EPS_COLLINEAR * d.v_norm) || d.q == 0.0 {
            return Err(Error::Collinear {
                context: format!("pair_trend sample {name}"),
                q: d.q,
                threshold: EPS_COLLINEAR * d.v_norm,
            });
        }
    }
    let qq = di.q * dj.q;
    let vv = metric.inner(v_i, v_j);
    let vi_xj = metric.inner(v_i, dj.x_hat.view());
    let xi_vj = metric.inner(di.x_hat.view(), v_j);
    Ok(PairTrend {
        lambda: di.p * dj.p / qq,
        k: (vv - dj.p * vi_xj - di.p * xi_vj) / qq,
    })
}
