use std::sync::Arc;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inner product used by every geometric operation.
///
/// `Weighted(g)` is `<a, b>_G = sum_k g_k^2 a_k b_k`, the metric induced by the
/// affine weights of an RMS normalisation. With `g = 1` it multiplies by an
/// exact 1.0 per term, so it reproduces `Standard` bit for bit.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Metric {
    #[default]
    Standard,
    Weighted(Arc<[f64]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Standard,
    GMetric,
}

impl Metric {
    pub fn weighted(g: impl Into<Arc<[f64]>>) -> Result<Self> {
        let g: Arc<[f64]> = g.into();
        if g.is_empty() || g.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("metric weights must be finite and non-empty".into()));
        }
        Ok(Metric::Weighted(g))
    }

    pub fn kind(&self) -> MetricKind {
        match self {
            Metric::Standard => MetricKind::Standard,
            Metric::Weighted(_) => MetricKind::GMetric,
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self {
            Metric::Weighted(g) if g.len() != d => Err(Error::ShapeMismatch(format!(
                "metric weights have length {} but vectors have dimension {d}",
                g.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Callers guarantee equal lengths (checked by `check_dim` at entry points).
    #[inline]
    pub fn inner(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Standard => a.iter().zip(b.iter()).map(|(x, y)| x * y).sum(),
            Metric::Weighted(g) => {
                debug_assert_eq!(g.len(), a.len());
                a.iter()
                    .zip(b.iter())
                    .zip(g.iter())
                    .map(|((x, y), w)| w * w * x * y)
                    .sum()
            }
        }
    }

    #[inline]
    pub fn norm(&self, a: ArrayView1<'_, f64>) -> f64 {
        self.inner(a, a).sqrt()
    }
}

/// `sum_k g_k^2 a_k b_k`.
pub fn weighted_inner(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, g: ArrayView1<'_, f64>) -> Result<f64> {
    if a.len() != b.len() || a.len() != g.len() {
        return Err(Error::ShapeMismatch(format!(
            "weighted_inner lengths {}, {}, {}",
            a.len(),
            b.len(),
            g.len()
        )));
    }
    let metric = Metric::Weighted(g.to_vec().into());
    Ok(metric.inner(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn weighted_inner_examples() {
        let a = array![1.0, 2.0, 3.0];
        let b = array![4.0, -1.0, 0.5];
        let ones = array![1.0, 1.0, 1.0];
        assert_eq!(weighted_inner(a.view(), b.view(), ones.view()).unwrap(), 1.0 * 4.0 - 2.0 + 1.5);
        let g = array![2.0, 0.0, 1.0];
        assert_eq!(weighted_inner(a.view(), b.view(), g.view()).unwrap(), 4.0 * 4.0 + 1.5);
        let short = array![1.0];
        assert!(weighted_inner(a.view(), b.view(), short.view()).is_err());
    }

    #[test]
    fn unit_weights_match_standard_bitwise() {
        let a = array![0.1, -0.7, 1e-3, 5.5];
        let b = array![3.3, 0.2, -9.0, 1.0 / 3.0];
        let w = Metric::weighted(vec![1.0; 4]).unwrap();
        assert_eq!(w.inner(a.view(), b.view()).to_bits(), Metric::Standard.inner(a.view(), b.view()).to_bits());
    }

    #[test]
    fn weight_validation() {
        assert!(Metric::weighted(Vec::<f64>::new()).is_err());
        assert!(Metric::weighted(vec![1.0, f64::NAN]).is_err());
        let m = Metric::weighted(vec![1.0, 2.0]).unwrap();
        assert!(m.check_dim(3).is_err());
        assert!(m.check_dim(2).is_ok());
    }
}
