//! Group means of `U_sim` and `C` across depth, basin detection, phase
//! classification and phase-portrait data.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{analyze, Group, Metric};
use crate::store::{self, load_pair, read_manifest};
use crate::types::{Attribute, LayerId, Level};

pub const DEFAULT_EPSILON_BASIN: f64 = 0.02;
/// Gap between the series that counts as early differentiation.
pub const EARLY_GAP: f64 = 0.05;
/// Layers inspected for early differentiation.
pub const EARLY_LAYERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsOptions {
    pub epsilon_basin: f64,
    /// Centred moving-average window applied to every series before basin
    /// and phase detection; `None` leaves the series untouched.
    pub smoothing: Option<usize>,
    pub knowledge_filter: bool,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        DynamicsOptions {
            epsilon_basin: DEFAULT_EPSILON_BASIN,
            smoothing: None,
            knowledge_filter: true,
        }
    }
}

impl DynamicsOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_basin >= 0.0) || !self.epsilon_basin.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "epsilon_basin must be a non-negative number, got {}",
                self.epsilon_basin
            )));
        }
        if let Some(w) = self.smoothing {
            if w == 0 || w % 2 == 0 {
                return Err(Error::InvalidArgument(format!("smoothing window must be odd and positive, got {w}")));
            }
        }
        Ok(())
    }
}

/// Layer ids in each phase. Together they partition the trajectory layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phases {
    /// Layers before cross-class `U_sim` first drops below `-epsilon`.
    pub extraction: Vec<u32>,
    /// From that first drop through the basin.
    pub computation_basin: Vec<u32>,
    /// Every layer after the basin.
    pub rebound: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseClassification {
    Phases(Phases),
    NoPhases { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrajectory {
    pub level: Level,
    pub attribute: Attribute,
    pub layers: Vec<u32>,
    pub same_u: Vec<f64>,
    pub cross_u: Vec<f64>,
    pub same_c: Vec<f64>,
    pub cross_c: Vec<f64>,
    /// Samples dropped by the collinearity guard, per layer.
    pub excluded: Vec<usize>,
    pub basin_layer: Option<u32>,
    pub phases: PhaseClassification,
}

/// Per-layer group means before basin/phase detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerMeans {
    pub layer: u32,
    pub same_u: f64,
    pub cross_u: f64,
    pub same_c: f64,
    pub cross_c: f64,
    pub excluded: usize,
}

/// Centred moving average; the window shrinks at the ends.
pub fn smooth(series: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(series.len());
            series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

impl LayerTrajectory {
    /// Assembles a trajectory from per-layer means (sorted by layer) and runs
    /// basin and phase detection.
    pub fn from_means(level: Level, attribute: Attribute, mut means: Vec<LayerMeans>, opts: &DynamicsOptions) -> Result<Self> {
        opts.validate()?;
        if means.is_empty() {
            return Err(Error::InvalidArgument("trajectory needs at least one layer".into()));
        }
        means.sort_by_key(|m| m.layer);
        if means.windows(2).any(|w| w[0].layer == w[1].layer) {
            return Err(Error::InvalidArgument("duplicate layer in trajectory".into()));
        }
        let pick = |f: fn(&LayerMeans) -> f64| -> Vec<f64> {
            let raw: Vec<f64> = means.iter().map(f).collect();
            match opts.smoothing {
                Some(w) => smooth(&raw, w),
                None => raw,
            }
        };
        let mut traj = LayerTrajectory {
            level,
            attribute,
            layers: means.iter().map(|m| m.layer).collect(),
            same_u: pick(|m| m.same_u),
            cross_u: pick(|m| m.cross_u),
            same_c: pick(|m| m.same_c),
            cross_c: pick(|m| m.cross_c),
            excluded: means.iter().map(|m| m.excluded).collect(),
            basin_layer: None,
            phases: PhaseClassification::NoPhases { reason: String::new() },
        };
        traj.basin_layer = find_basin(&traj, opts.epsilon_basin);
        traj.phases = classify_phases(&traj, opts.epsilon_basin);
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Largest `|same_u - cross_u|` over the layers.
    pub fn max_gap(&self) -> f64 {
        self.same_u
            .iter()
            .zip(&self.cross_u)
            .map(|(s, c)| (s - c).abs())
            .fold(0.0, f64::max)
    }

    /// Whether the series already separate by more than [`EARLY_GAP`]
    /// within the first [`EARLY_LAYERS`] layer indices.
    pub fn early_differentiation(&self) -> bool {
        self.layers
            .iter()
            .zip(self.same_u.iter().zip(&self.cross_u))
            .any(|(&l, (s, c))| (l as usize) < EARLY_LAYERS && (s - c).abs() > EARLY_GAP)
    }
}

/// Layer of the minimum cross-class `U_sim` (earliest on ties), or `None`
/// when that minimum is not below `-epsilon`.
pub fn find_basin(traj: &LayerTrajectory, epsilon: f64) -> Option<u32> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in traj.cross_u.iter().enumerate() {
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    let (i, v) = best?;
    (v < -epsilon).then(|| traj.layers[i])
}

pub fn classify_phases(traj: &LayerTrajectory, epsilon: f64) -> PhaseClassification {
    let Some(basin) = traj.basin_layer else {
        return PhaseClassification::NoPhases {
            reason: "no basin: cross-class U_sim never drops below -epsilon".into(),
        };
    };
    if traj.len() < 3 {
        return PhaseClassification::NoPhases {
            reason: format!("{} layers are too few to separate three phases", traj.len()),
        };
    }
    let b = traj.layers.iter().position(|&l| l == basin).expect("basin is a trajectory layer");
    let first_drop = traj
        .cross_u
        .iter()
        .position(|&v| v < -epsilon)
        .expect("the basin itself is below -epsilon");
    PhaseClassification::Phases(Phases {
        extraction: traj.layers[..first_drop].to_vec(),
        computation_basin: traj.layers[first_drop..=b].to_vec(),
        rebound: traj.layers[b + 1..].to_vec(),
    })
}

/// Group means for one `(level, layer)` of a store.
pub fn layer_means(
    dir: &Path,
    manifest: &store::Manifest,
    level: Level,
    layer: u32,
    attribute: Attribute,
    metric: &Metric,
    knowledge_filter: bool,
) -> Result<LayerMeans> {
    let pair = load_pair(dir, manifest, level, LayerId::Index(layer), knowledge_filter)?;
    let report = analyze(pair.base.view(), pair.task.view(), &pair.labels, attribute, metric)?;
    if !report.excluded.is_empty() {
        log::info!(
            "{level} layer {layer}: {} collinear samples excluded",
            report.excluded.len()
        );
    }
    Ok(LayerMeans {
        layer,
        same_u: report.u_stats.same.mean,
        cross_u: report.u_stats.cross.mean,
        same_c: report.c_stats.same.mean,
        cross_c: report.c_stats.cross.mean,
        excluded: report.excluded.len(),
    })
}

/// Runs the geometry pipeline at every indexed layer of `level`. Layers are
/// processed in parallel and merged in layer order.
pub fn sweep(
    dir: &Path,
    level: Level,
    attribute: Attribute,
    metric: &Metric,
    opts: &DynamicsOptions,
) -> Result<LayerTrajectory> {
    opts.validate()?;
    let manifest = read_manifest(dir)?;
    let layers = store::indexed_layers(dir, &manifest, level);
    if layers.len() < 2 {
        return Err(Error::MissingData(format!(
            "layer sweep needs at least 2 captured layers for {level}, found {}",
            layers.len()
        )));
    }
    if let Some(&missing) = layers.iter().find(|&&l| !store::has_set(dir, Level::L1, LayerId::Index(l))) {
        return Err(Error::MissingData(format!(
            "baseline level L1 is missing at layer {missing}"
        )));
    }
    let means: Vec<LayerMeans> = layers
        .par_iter()
        .map(|&l| layer_means(dir, &manifest, level, l, attribute, metric, opts.knowledge_filter))
        .collect::<Result<_>>()?;
    LayerTrajectory::from_means(level, attribute, means, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortraitPoint {
    pub level: Level,
    pub group: Group,
    pub layer: u32,
    pub c_mean: f64,
    pub u_mean: f64,
}

/// Same-class series then cross-class series, each ordered by layer.
pub fn phase_portrait(traj: &LayerTrajectory) -> Vec<PortraitPoint> {
    let mut out = Vec::with_capacity(2 * traj.len());
    for group in Group::BOTH {
        let (c, u) = match group {
            Group::Same => (&traj.same_c, &traj.same_u),
            Group::Cross => (&traj.cross_c, &traj.cross_u),
        };
        for (i, &layer) in traj.layers.iter().enumerate() {
            out.push(PortraitPoint {
                level: traj.level,
                group,
                layer,
                c_mean: c[i],
                u_mean: u[i],
            });
        }
    }
    out
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header).expect("in-memory write");
    for row in rows {
        wtr.write_record(&row).expect("in-memory write");
    }
    wtr.into_inner().expect("in-memory flush")
}

/// CSV with columns `level,group,layer,c_mean,u_mean`.
pub fn portrait_csv(points: &[PortraitPoint]) -> Vec<u8> {
    csv_bytes(
        &["level", "group", "layer", "c_mean", "u_mean"],
        points.iter().map(|p| {
            vec![
                p.level.to_string(),
                p.group.to_string(),
                p.layer.to_string(),
                p.c_mean.to_string(),
                p.u_mean.to_string(),
            ]
        }),
    )
}

/// CSV with one row per layer.
pub fn trajectory_csv(traj: &LayerTrajectory) -> Vec<u8> {
    csv_bytes(
        &["level", "attribute", "layer", "same_u", "cross_u", "same_c", "cross_c", "excluded"],
        (0..traj.len()).map(|i| {
            vec![
                traj.level.to_string(),
                traj.attribute.to_string(),
                traj.layers[i].to_string(),
                traj.same_u[i].to_string(),
                traj.cross_u[i].to_string(),
                traj.same_c[i].to_string(),
                traj.cross_c[i].to_string(),
                traj.excluded[i].to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn means(cross_u: &[f64]) -> Vec<LayerMeans> {
        cross_u
            .iter()
            .enumerate()
            .map(|(i, &c)| LayerMeans {
                layer: i as u32,
                same_u: 0.5,
                cross_u: c,
                same_c: 0.3,
                cross_c: 0.3,
                excluded: 0,
            })
            .collect()
    }

    fn traj(cross_u: &[f64], opts: &DynamicsOptions) -> LayerTrajectory {
        LayerTrajectory::from_means(Level::L2, Attribute::IsLarge, means(cross_u), opts).unwrap()
    }

    fn canonical(n: usize, basin: usize) -> Vec<f64> {
        (0..n)
            .map(|l| {
                if l <= basin {
                    0.2 - 0.6 * (l as f64 / basin as f64).powi(2)
                } else {
                    let r = (n - 1 - l) as f64 / (n - 1 - basin) as f64;
                    -0.4 + 0.3 * (1.0 - r * r)
                }
            })
            .collect()
    }

    #[test]
    fn planted_minimum_is_found() {
        let mut c = vec![0.1; 32];
        c[19] = -0.4;
        assert_eq!(traj(&c, &DynamicsOptions::default()).basin_layer, Some(19));
    }

    #[test]
    fn positive_series_has_no_basin() {
        let t = traj(&[0.35, 0.3, 0.32, 0.31], &DynamicsOptions::default());
        assert_eq!(t.basin_layer, None);
        assert!(matches!(t.phases, PhaseClassification::NoPhases { .. }));
        // Slightly negative but within epsilon is still no basin.
        assert_eq!(traj(&[0.1, -0.01, 0.0], &DynamicsOptions::default()).basin_layer, None);
    }

    #[test]
    fn ties_take_the_earliest_layer() {
        let t = traj(&[0.0, -0.3, 0.1, -0.3, 0.2], &DynamicsOptions::default());
        assert_eq!(t.basin_layer, Some(1));
    }

    #[test]
    fn two_layers_have_no_phases() {
        let t = traj(&[0.1, -0.3], &DynamicsOptions::default());
        assert_eq!(t.len(), 2);
        assert_eq!(t.basin_layer, Some(1));
        assert!(matches!(t.phases, PhaseClassification::NoPhases { .. }));
    }

    #[test]
    fn canonical_template_partitions_layers() {
        let t = traj(&canonical(32, 21), &DynamicsOptions::default());
        let PhaseClassification::Phases(p) = &t.phases else { panic!("{:?}", t.phases) };
        assert!(!p.extraction.is_empty() && !p.rebound.is_empty());
        assert_eq!(*p.computation_basin.last().unwrap(), 21);
        let all: Vec<u32> = p
            .extraction
            .iter()
            .chain(&p.computation_basin)
            .chain(&p.rebound)
            .copied()
            .collect();
        assert_eq!(all, t.layers);
    }

    #[test]
    fn monotone_descent_has_empty_rebound() {
        let c: Vec<f64> = (0..10).map(|l| 0.1 - 0.05 * l as f64).collect();
        let t = traj(&c, &DynamicsOptions::default());
        assert_eq!(t.basin_layer, Some(9));
        let PhaseClassification::Phases(p) = &t.phases else { panic!() };
        assert!(p.rebound.is_empty());
    }

    #[test]
    fn smoothed_boundaries_are_stable_under_jitter() {
        let clean = canonical(32, 19);
        let opts = DynamicsOptions {
            smoothing: Some(3),
            ..DynamicsOptions::default()
        };
        let reference = traj(&clean, &DynamicsOptions::default());
        let PhaseClassification::Phases(ref_p) = &reference.phases else { panic!() };
        for seed in 0..20u64 {
            let noisy: Vec<f64> = clean
                .iter()
                .enumerate()
                .map(|(i, &v)| v + 0.01 * crate::prng::RowStream::new(seed, 7, i as u64).normal())
                .collect();
            let t = traj(&noisy, &opts);
            let PhaseClassification::Phases(p) = &t.phases else { panic!() };
            let first = |v: &Vec<u32>| v.first().copied().unwrap() as i64;
            let last = |v: &Vec<u32>| v.last().copied().unwrap() as i64;
            assert!((first(&p.computation_basin) - first(&ref_p.computation_basin)).abs() <= 1, "seed {seed}");
            assert!((last(&p.computation_basin) - last(&ref_p.computation_basin)).abs() <= 1, "seed {seed}");
        }
    }

    #[test]
    fn portrait_mirrors_trajectory() {
        let t = traj(&canonical(8, 5), &DynamicsOptions::default());
        let pts = phase_portrait(&t);
        assert_eq!(pts.len(), 16);
        for (i, p) in pts[..8].iter().enumerate() {
            assert_eq!((p.group, p.layer, p.u_mean, p.c_mean), (Group::Same, t.layers[i], t.same_u[i], t.same_c[i]));
        }
        for (i, p) in pts[8..].iter().enumerate() {
            assert_eq!((p.group, p.layer, p.u_mean, p.c_mean), (Group::Cross, t.layers[i], t.cross_u[i], t.cross_c[i]));
        }
        let single = traj(&[0.2], &DynamicsOptions::default());
        assert_eq!(phase_portrait(&single).len(), 2);
        let csv = String::from_utf8(portrait_csv(&pts)).unwrap();
        assert!(csv.starts_with("level,group,layer,c_mean,u_mean\n"));
        assert_eq!(csv.lines().count(), 17);
    }

    #[test]
    fn diagnostics() {
        let t = traj(&canonical(32, 24), &DynamicsOptions::default());
        assert!(t.max_gap() > 0.5);
        assert!(t.early_differentiation());
        let flat = traj(&[0.5; 12], &DynamicsOptions::default());
        assert!(!flat.early_differentiation());
        assert_eq!(flat.max_gap(), 0.0);
    }

    #[test]
    fn smoothing_window_validation() {
        let bad = DynamicsOptions {
            smoothing: Some(2),
            ..DynamicsOptions::default()
        };
        assert!(LayerTrajectory::from_means(Level::L2, Attribute::IsLarge, means(&[0.0, 0.1]), &bad).is_err());
        assert_eq!(smooth(&[0.0, 3.0, 0.0], 3), vec![1.5, 1.0, 1.5]);
    }
}
