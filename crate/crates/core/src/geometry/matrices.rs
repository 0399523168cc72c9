use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::decompose::EPS_NORM;
use super::metric::Metric;
use crate::error::{Error, Result};

/// Normalises every row, naming the first degenerate one.
pub fn unit_rows(x: ArrayView2<'_, f64>, metric: &Metric) -> Result<Array2<f64>> {
    metric.check_dim(x.ncols())?;
    let mut out = x.to_owned();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let norm = metric.norm(row.view());
        if !(norm > EPS_NORM) {
            return Err(Error::DegenerateVector {
                context: format!("row {i}"),
                norm,
                threshold: EPS_NORM,
            });
        }
        row.mapv_inplace(|c| c / norm);
    }
    Ok(out)
}

/// `out[i][j] = <a_i, b_j>`. Rows are computed in parallel; every entry is a
/// single fixed-order reduction, so the result does not depend on scheduling.
pub fn cross_gram(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, metric: &Metric) -> Array2<f64> {
    debug_assert_eq!(a.ncols(), b.ncols());
    let (n, m) = (a.nrows(), b.nrows());
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let ai = a.row(i);
            (0..m).map(move |j| metric.inner(ai, b.row(j)))
        })
        .collect();
    Array2::from_shape_vec((n, m), values).expect("n x m values")
}

/// Symmetric Gram matrix; the lower triangle mirrors the upper one exactly.
pub fn gram(a: ArrayView2<'_, f64>, metric: &Metric) -> Array2<f64> {
    let mut g = cross_gram(a, a, metric);
    let n = g.nrows();
    for i in 0..n {
        for j in 0..i {
            g[[i, j]] = g[[j, i]];
        }
    }
    g
}

/// Cosine matrix of the rows of `x`.
pub fn base_similarity(x: ArrayView2<'_, f64>, metric: &Metric) -> Result<Array2<f64>> {
    let x_hat = unit_rows(x, metric)?;
    Ok(gram(x_hat.view(), metric))
}

/// Row-wise `x_task - x_base`.
pub fn interference(x_task: ArrayView2<'_, f64>, x_base: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x_task.dim() != x_base.dim() {
        return Err(Error::ShapeMismatch(format!(
            "task activations {:?} vs baseline {:?}",
            x_task.dim(),
            x_base.dim()
        )));
    }
    Ok(&x_task - &x_base)
}

/// Splits interference into the shared task vector (column mean) and the
/// per-sample specific part.
pub fn center(delta: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    if delta.nrows() == 0 {
        return Err(Error::InvalidArgument("cannot center an empty interference matrix".into()));
    }
    let n = delta.nrows() as f64;
    let mut v_task = Array1::<f64>::zeros(delta.ncols());
    for row in delta.rows() {
        v_task += &row;
    }
    v_task.mapv_inplace(|s| s / n);
    let specific = &delta - &v_task;
    Ok((v_task, specific))
}

/// `(u_sim, c_matrix)` with `u_sim[i][j] = <u_i, u_j>` and
/// `c_matrix[i][j] = <x_hat_i, u_j>` (not symmetric in general).
pub fn metric_matrices(
    x_hat: ArrayView2<'_, f64>,
    u_hat: ArrayView2<'_, f64>,
    metric: &Metric,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if x_hat.dim() != u_hat.dim() {
        return Err(Error::ShapeMismatch(format!(
            "unit rows {:?} vs innovation rows {:?}",
            x_hat.dim(),
            u_hat.dim()
        )));
    }
    metric.check_dim(x_hat.ncols())?;
    Ok((gram(u_hat, metric), cross_gram(x_hat, u_hat, metric)))
}

/// Largest `|C_ij - C_ji|`.
pub fn max_asymmetry(c: &Array2<f64>) -> f64 {
    let n = c.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((c[[i, j]] - c[[j, i]]).abs());
        }
    }
    worst
}
