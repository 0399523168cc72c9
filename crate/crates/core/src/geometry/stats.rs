//! Class masks and masked pair statistics.

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Attribute, Labels};

/// Same-class and cross-class pair masks. Both are symmetric with a false
/// diagonal; together with the diagonal they cover every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub same: Array2<bool>,
    pub cross: Array2<bool>,
    pub attribute: Attribute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Same,
    Cross,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Same, Group::Cross];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Same => "same",
            Group::Cross => "cross",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl MaskPair {
    pub fn len(&self) -> usize {
        self.same.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mask(&self, group: Group) -> &Array2<bool> {
        match group {
            Group::Same => &self.same,
            Group::Cross => &self.cross,
        }
    }

    /// Unordered pairs `(i, j)`, `i < j`, selected by `group`, in row-major order.
    pub fn pairs(&self, group: Group) -> Vec<(usize, usize)> {
        let m = self.mask(group);
        let n = m.nrows();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if m[[i, j]] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn group_of(&self, i: usize, j: usize) -> Option<Group> {
        if self.same[[i, j]] {
            Some(Group::Same)
        } else if self.cross[[i, j]] {
            Some(Group::Cross)
        } else {
            None
        }
    }
}

pub fn class_masks(labels: &[Labels], attribute: Attribute) -> MaskPair {
    let classes: Vec<bool> = labels.iter().map(|l| l.get(attribute)).collect();
    masks_from_classes(&classes, attribute)
}

pub fn masks_from_classes(classes: &[bool], attribute: Attribute) -> MaskPair {
    let n = classes.len();
    let same = Array2::from_shape_fn((n, n), |(i, j)| i != j && classes[i] == classes[j]);
    let cross = Array2::from_shape_fn((n, n), |(i, j)| i != j && classes[i] != classes[j]);
    MaskPair { same, cross, attribute }
}

/// A statistic that may be mathematically undefined (zero variance, too few
/// points). Never encoded as NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Defined(f64),
    Undefined(String),
}

impl Statistic {
    pub fn value(&self) -> Option<f64> {
        match self {
            Statistic::Defined(v) => Some(*v),
            Statistic::Undefined(_) => None,
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::Defined(v) => write!(f, "{v:.4}"),
            Statistic::Undefined(_) => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskStats {
    pub pairs: usize,
    pub mean: f64,
    /// Pearson r between the `S_base` entry and the matrix entry over the mask.
    pub pearson: Statistic,
    /// OLS fit `matrix ~ slope * S_base + intercept` over the mask.
    pub slope: Statistic,
    pub intercept: Statistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub same: MaskStats,
    pub cross: MaskStats,
}

impl GroupStats {
    pub fn get(&self, group: Group) -> &MaskStats {
        match group {
            Group::Same => &self.same,
            Group::Cross => &self.cross,
        }
    }

    /// `|cross mean - same mean|`.
    pub fn gap(&self) -> f64 {
        (self.cross.mean - self.same.mean).abs()
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

struct Moments {
    mean_x: f64,
    mean_y: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

fn moments(xs: &[f64], ys: &[f64]) -> Moments {
    let mean_x = mean(xs).unwrap_or(0.0);
    let mean_y = mean(ys).unwrap_or(0.0);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    Moments { mean_x, mean_y, sxx, syy, sxy }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Statistic {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Statistic::Undefined("fewer than two points".into());
    }
    let m = moments(xs, ys);
    if m.sxx == 0.0 || m.syy == 0.0 {
        return Statistic::Undefined("zero variance".into());
    }
    Statistic::Defined((m.sxy / (m.sxx.sqrt() * m.syy.sqrt())).clamp(-1.0, 1.0))
}

/// Least-squares `(slope, intercept)` of `ys` on `xs`.
pub fn ols(xs: &[f64], ys: &[f64]) -> (Statistic, Statistic) {
    if xs.len() != ys.len() || xs.len() < 2 {
        let why = Statistic::Undefined("fewer than two points".into());
        return (why.clone(), why);
    }
    let m = moments(xs, ys);
    if m.sxx == 0.0 {
        let why = Statistic::Undefined("zero variance in S_base".into());
        return (why.clone(), why);
    }
    let slope = m.sxy / m.sxx;
    (Statistic::Defined(slope), Statistic::Defined(m.mean_y - slope * m.mean_x))
}

/// Masked means, Pearson r and OLS fit against `s_base`.
///
/// Each unordered off-diagonal pair is counted once using the symmetrised
/// value `(m_ij + m_ji) / 2`, which leaves symmetric matrices unchanged.
/// An empty mask is an error rather than a zero.
pub fn group_stats(matrix: &Array2<f64>, s_base: &Array2<f64>, masks: &MaskPair) -> Result<GroupStats> {
    let n = masks.len();
    if matrix.dim() != (n, n) || s_base.dim() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "matrix {:?} / s_base {:?} vs masks {n}x{n}",
            matrix.dim(),
            s_base.dim()
        )));
    }
    let stats_for = |group: Group| -> Result<MaskStats> {
        let pairs = masks.pairs(group);
        if pairs.is_empty() {
            return Err(Error::UndefinedStatistic(format!(
                "no {group}-class pairs for attribute {}",
                masks.attribute
            )));
        }
        let xs: Vec<f64> = pairs.iter().map(|&(i, j)| 0.5 * (s_base[[i, j]] + s_base[[j, i]])).collect();
        let ys: Vec<f64> = pairs.iter().map(|&(i, j)| 0.5 * (matrix[[i, j]] + matrix[[j, i]])).collect();
        let (slope, intercept) = ols(&xs, &ys);
        Ok(MaskStats {
            pairs: pairs.len(),
            mean: mean(&ys).expect("non-empty"),
            pearson: pearson(&xs, &ys),
            slope,
            intercept,
        })
    };
    Ok(GroupStats {
        same: stats_for(Group::Same)?,
        cross: stats_for(Group::Cross)?,
    })
}
