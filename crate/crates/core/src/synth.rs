//! Activation sets with analytically known geometry.
//!
//! Orthonormal frame (`e_k` is the k-th standard basis vector):
//!
//! * `e0` shared concept direction, `e1`/`e2` the latent plane,
//! * `e3` the class divergence direction `w+` (`w- = -w+`),
//! * `e4`, `e5`, `e6` baseline encodings of parity, magnitude and primality,
//! * `e_{d-1}` the orthogonal part of the task vector.
//!
//! Baseline row `i` (value `i + 1`, latent angle `theta_i = pi * i / (n - 1)`,
//! attribute signs `a_k = +-1`):
//!
//! ```text
//! x_i = base_norm * (e0 + s * (cos theta_i e1 + sin theta_i e2)) / sqrt(1 + s^2)
//!     + class_offset * base_norm * (a_even e4 + a_large e5 + a_prime e6)
//!     + (sigma / sqrt(d)) * xi_i
//! ```
//!
//! so `S_base` falls smoothly from 1 to `(1 - s^2) / (1 + s^2)` with `|i - j|`.
//! Task interference for row `i` of class `c`:
//!
//! ```text
//! delta_i = V_task - coupling * P x_hat_i + gain * w_c + (sigma / sqrt(d)) * xi'_i
//! V_task  = omega * base_norm * (cos phi e0 + sin phi e_{d-1})
//! ```
//!
//! with `P` the projection onto `e0..e2`. The contraction term gives every
//! sample an innovation component pointing toward the manifold centroid
//! (class-agnostic, positive `C`, `U_sim` correlated with `S_base`); the
//! `w_c` term pushes the two classes in antipodal directions. The attribute
//! encodings are left out of the contraction so they reach `U_sim` only
//! through the projection onto each `x_hat`.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::EPS_NORM;
use crate::prng::{domain, RowStream};
use crate::store::{self, ActivationSet, Manifest, SampleMeta};
use crate::types::{Attribute, Labels, LayerId, Level, Modality};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub d_model: usize,
    pub seed: u64,
    /// Latent-plane radius `s` relative to the shared direction.
    pub base_latent_scale: f64,
    /// Per-attribute baseline encoding strength, relative to `base_norm`.
    pub class_offset: f64,
    /// Expected norm of a baseline row.
    pub base_norm: f64,
    /// Task-vector length relative to `base_norm`.
    pub omega_mean: f64,
    /// Angle of the task vector against `e0`, radians.
    pub phi_mean: f64,
    /// Strength of the class-agnostic contraction along `x_hat`.
    pub coupling_gain: f64,
    /// Length of the antipodal class push.
    pub divergence_gain: f64,
    /// Expected norm of each isotropic noise vector.
    pub noise_sigma: f64,
    pub attribute: Attribute,
    /// Extra key for the interference noise streams so different levels drawn
    /// from one seed are independent.
    pub stream: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 200,
            d_model: 512,
            seed: 0,
            base_latent_scale: 1.0,
            class_offset: 0.2,
            base_norm: 4.0,
            omega_mean: 0.3,
            phi_mean: 1.2,
            coupling_gain: 1.0,
            divergence_gain: 1.0,
            noise_sigma: 0.1,
            attribute: Attribute::IsEven,
            stream: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be positive".into()));
        }
        if self.d_model < 8 {
            return Err(Error::InvalidArgument(format!("d_model must be at least 8, got {}", self.d_model)));
        }
        if self.stream >= 1 << 12 {
            return Err(Error::InvalidArgument("stream must be below 4096".into()));
        }
        let finite = [
            self.base_latent_scale,
            self.class_offset,
            self.base_norm,
            self.omega_mean,
            self.phi_mean,
            self.coupling_gain,
            self.divergence_gain,
            self.noise_sigma,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("synthetic parameters must be finite".into()));
        }
        if self.base_norm <= 0.0 || self.noise_sigma < 0.0 || self.divergence_gain < 0.0 {
            return Err(Error::InvalidArgument(
                "base_norm must be positive; noise_sigma and divergence_gain non-negative".into(),
            ));
        }
        Ok(())
    }

    fn noise_scale(&self) -> f64 {
        self.noise_sigma / (self.d_model as f64).sqrt()
    }

    pub fn values(&self) -> Vec<u32> {
        (1..=self.n_samples as u32).collect()
    }

    pub fn labels(&self) -> Vec<Labels> {
        self.values().into_iter().map(Labels::for_value).collect()
    }

    /// Unit divergence direction `w+`.
    pub fn w_plus(&self) -> Array1<f64> {
        basis(self.d_model, 3)
    }

    /// The planted task vector.
    pub fn v_task(&self) -> Array1<f64> {
        let scale = self.omega_mean * self.base_norm;
        basis(self.d_model, 0) * (scale * self.phi_mean.cos())
            + basis(self.d_model, self.d_model - 1) * (scale * self.phi_mean.sin())
    }
}

fn basis(d: usize, k: usize) -> Array1<f64> {
    let mut e = Array1::zeros(d);
    e[k] = 1.0;
    e
}

fn layer_domain(base: u64, layer: Option<u32>) -> u64 {
    base + layer.map_or(0, |l| domain::LAYER_STRIDE * (u64::from(l) + 1))
}

/// Baseline rows and their labels (values `1..=n`).
pub fn gen_base(cfg: &SynthConfig) -> Result<(Array2<f64>, Vec<Labels>)> {
    gen_base_at(cfg, None)
}

fn gen_base_at(cfg: &SynthConfig, layer: Option<u32>) -> Result<(Array2<f64>, Vec<Labels>)> {
    cfg.validate()?;
    let (n, d) = (cfg.n_samples, cfg.d_model);
    let s = cfg.base_latent_scale;
    let radial = cfg.base_norm / (1.0 + s * s).sqrt();
    let noise = cfg.noise_scale();
    let dom = layer_domain(domain::BASE_NOISE, layer);
    let mut x = Array2::<f64>::zeros((n, d));
    for (i, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        let theta = if n > 1 {
            std::f64::consts::PI * i as f64 / (n - 1) as f64
        } else {
            0.0
        };
        if noise > 0.0 {
            let mut rng = RowStream::new(cfg.seed, dom, i as u64);
            rng.fill_normal(row.as_slice_mut().expect("standard layout"), noise);
        }
        row[0] += radial;
        row[1] += radial * s * theta.cos();
        row[2] += radial * s * theta.sin();
        let labels = Labels::for_value(i as u32 + 1);
        let offset = cfg.class_offset * cfg.base_norm;
        for (k, attr) in [(4, Attribute::IsEven), (5, Attribute::IsLarge), (6, Attribute::IsPrime)] {
            row[k] += if labels.get(attr) { offset } else { -offset };
        }
    }
    Ok((x, cfg.labels()))
}

/// What `inject` planted.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectTruth {
    pub v_task: Array1<f64>,
    pub w_plus: Array1<f64>,
    /// Divergence gain actually applied.
    pub gain: f64,
    /// Expected sign of the same-class and cross-class mean `U_sim` when the
    /// gain dominates the noise; `None` when no divergence was planted.
    pub expected_same_sign: Option<f64>,
    pub expected_cross_sign: Option<f64>,
}

pub fn inject(cfg: &SynthConfig, x: &Array2<f64>, labels: &[Labels]) -> Result<(Array2<f64>, InjectTruth)> {
    inject_at(cfg, x, labels, cfg.divergence_gain, None)
}

fn inject_at(
    cfg: &SynthConfig,
    x: &Array2<f64>,
    labels: &[Labels],
    gain: f64,
    layer: Option<u32>,
) -> Result<(Array2<f64>, InjectTruth)> {
    cfg.validate()?;
    if x.dim() != (labels.len(), cfg.d_model) {
        return Err(Error::ShapeMismatch(format!(
            "inject: x is {:?}, expected ({}, {})",
            x.dim(),
            labels.len(),
            cfg.d_model
        )));
    }
    let v_task = cfg.v_task();
    let w_plus = cfg.w_plus();
    let noise = cfg.noise_scale();
    let dom = layer_domain(domain::INTERFERENCE_NOISE + (cfg.stream << 4), layer);
    let mut out = x.clone();
    let mut scratch = vec![0.0; cfg.d_model];
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let x_norm = row.dot(&row).sqrt();
        if !(x_norm > EPS_NORM) {
            return Err(Error::DegenerateVector {
                context: format!("inject row {i}"),
                norm: x_norm,
                threshold: EPS_NORM,
            });
        }
        let contraction = cfg.coupling_gain / x_norm;
        let sign = if labels[i].get(cfg.attribute) { 1.0 } else { -1.0 };
        if noise > 0.0 {
            RowStream::new(cfg.seed, dom, i as u64).fill_normal(&mut scratch, noise);
        }
        for k in 0..cfg.d_model {
            let latent = if k < 3 { row[k] } else { 0.0 };
            let delta = v_task[k] - contraction * latent + gain * sign * w_plus[k] + scratch[k];
            row[k] += delta;
        }
    }
    let planted = gain > 0.0;
    Ok((
        out,
        InjectTruth {
            v_task,
            w_plus,
            gain,
            expected_same_sign: planted.then_some(1.0),
            expected_cross_sign: planted.then_some(-1.0),
        },
    ))
}

/// Per-layer divergence gain, as a fraction of `divergence_gain`.
///
/// Rises quadratically from 0 at layer 0 to 1 at the basin, then decays
/// quadratically to 0.3 at the last layer. A flat schedule is 0 everywhere.
pub fn divergence_profile(layer: usize, n_layers: usize, basin_layer: Option<usize>) -> f64 {
    const TAIL: f64 = 0.3;
    let Some(b) = basin_layer else { return 0.0 };
    if layer <= b {
        if b == 0 {
            1.0
        } else {
            (layer as f64 / b as f64).powi(2)
        }
    } else {
        let span = (n_layers - 1 - b) as f64;
        let remaining = (n_layers - 1 - layer) as f64 / span;
        TAIL + (1.0 - TAIL) * remaining * remaining
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerPair {
    pub layer: u32,
    pub base: Array2<f64>,
    pub task: Array2<f64>,
    pub gain: f64,
}

/// Baseline/task pairs for layers `0..n_layers` following
/// [`divergence_profile`]. `basin_layer = None` gives the flat schedule.
pub fn layered_trajectory(cfg: &SynthConfig, n_layers: usize, basin_layer: Option<usize>) -> Result<Vec<LayerPair>> {
    if n_layers == 0 {
        return Err(Error::InvalidArgument("n_layers must be positive".into()));
    }
    if let Some(b) = basin_layer {
        if b >= n_layers {
            return Err(Error::InvalidArgument(format!(
                "basin layer {b} outside 0..{n_layers}"
            )));
        }
    }
    (0..n_layers)
        .map(|l| {
            let layer = l as u32;
            let (base, labels) = gen_base_at(cfg, Some(layer))?;
            let gain = cfg.divergence_gain * divergence_profile(l, n_layers, basin_layer);
            let (task, _) = inject_at(cfg, &base, &labels, gain, Some(layer))?;
            Ok(LayerPair { layer, base, task, gain })
        })
        .collect()
}

/// Rows with an exactly planted trend law: every same-class pair satisfies
/// `U_sim = lambda * S_base + k` with no noise.
///
/// Requires `0 < lambda`, `d >= n + 5`, and a feasible `(lambda, k)`; see
/// [`planted_trend`] for the construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTrend {
    pub base: Array2<f64>,
    /// Specific interference rows `v_i` (already centred by construction).
    pub specific: Array2<f64>,
    pub lambda: f64,
    pub k: f64,
}

/// `x_hat_i = c0 e0 + c1 z_i` with `z_i` on the unit circle in `(e1, e2)`;
/// `u_hat_i = a z'_i + b e3 + c f_i` with `z'_i` the same circle in `(e4, e5)`
/// and private unit directions `f_i`. For `i != j`:
/// `<u_i, u_j> = (a^2 / c1^2) S_base + b^2 - a^2 c0^2 / c1^2`.
///
/// `c0^2` is chosen so the private weight `c^2` is positive; `v_i` is
/// `p x_hat_i + q u_hat_i` with fixed `p`, `q` and a per-row norm for `x`.
pub fn planted_trend(n: usize, d: usize, lambda: f64, k: f64) -> Result<PlantedTrend> {
    if n < 2 || d < n + 6 {
        return Err(Error::InvalidArgument(format!("planted_trend needs n >= 2 and d >= n + 6 (n={n}, d={d})")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("planted lambda must be positive".into()));
    }
    // a^2 = lambda c1^2 and b^2 = k + lambda c0^2; pick the largest c0^2 that
    // keeps a^2 + b^2 <= 0.9 (leaving private weight >= 0.1).
    // a^2 + b^2 = lambda (1 - c0^2) + k + lambda c0^2 = lambda + k.
    let shared = lambda + k;
    if !(shared > 0.0 && shared <= 0.9) {
        return Err(Error::InvalidArgument(format!(
            "lambda + k must lie in (0, 0.9], got {shared}"
        )));
    }
    let c0_sq = ((-k / lambda).max(0.0) + 0.5 * (1.0 - (-k / lambda).max(0.0))).min(0.95);
    let c1_sq = 1.0 - c0_sq;
    let a_sq = lambda * c1_sq;
    let b_sq = k + lambda * c0_sq;
    if a_sq < 0.0 || b_sq < 0.0 {
        return Err(Error::InvalidArgument("infeasible planted trend".into()));
    }
    let (c0, c1, a, b) = (c0_sq.sqrt(), c1_sq.sqrt(), a_sq.sqrt(), b_sq.sqrt());
    let c = (1.0 - a_sq - b_sq).sqrt();

    let mut base = Array2::<f64>::zeros((n, d));
    let mut specific = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        let theta = std::f64::consts::PI * i as f64 / (n - 1) as f64;
        let norm = 2.0 + 0.5 * (i % 3) as f64;
        let (ct, st) = (theta.cos(), theta.sin());
        let x_hat = [(0, c0), (1, c1 * ct), (2, c1 * st)];
        let u_hat = [(4, a * ct), (5, a * st), (3, b), (6 + i, c)];
        for &(k, v) in &x_hat {
            base[[i, k]] = norm * v;
        }
        // p = 0.4, q = 1.3
        for &(k, v) in &x_hat {
            specific[[i, k]] += 0.4 * v;
        }
        for &(k, v) in &u_hat {
            specific[[i, k]] += 1.3 * v;
        }
    }
    Ok(PlantedTrend { base, specific, lambda, k })
}

/// Level layout of a synthetic store: each task level gets its own attribute
/// and noise stream; `L5` carries no class divergence.
pub fn level_config(cfg: &SynthConfig, level: Level) -> SynthConfig {
    let mut c = cfg.clone();
    c.attribute = level.default_attribute().unwrap_or(cfg.attribute);
    c.stream = cfg.stream.wrapping_mul(8) % (1 << 12) + level as u64;
    if level == Level::L5 {
        c.divergence_gain = 0.0;
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStoreSpec {
    pub config: SynthConfig,
    pub levels: Vec<Level>,
    /// Per-layer captures `0..n_layers` in addition to `FINAL`; 0 for none.
    pub n_layers: usize,
    /// Basin layer for divergent levels; `None` plants a flat schedule.
    pub basin_layer: Option<usize>,
}

/// Stand-in RMS-norm affine weights, uniform on `[0.5, 1.5)`, so `g_metric`
/// runs work on synthetic stores.
pub fn norm_weights(seed: u64, d_model: usize) -> Vec<f32> {
    let mut rng = RowStream::new(seed, domain::NORM_WEIGHTS, 0);
    (0..d_model).map(|_| (0.5 + rng.uniform()) as f32).collect()
}

/// Writes an activation-store directory with `model_id = "synthetic"`.
pub fn write_synthetic_store(dir: &Path, spec: &SyntheticStoreSpec) -> Result<Manifest> {
    let cfg = &spec.config;
    cfg.validate()?;
    let samples: Vec<SampleMeta> = cfg
        .values()
        .into_iter()
        .enumerate()
        .map(|(i, v)| SampleMeta::new(i as u64, v, Modality::Arabic))
        .collect();
    let mut manifest = Manifest::new("synthetic", cfg.d_model, samples);
    manifest.capture_point = Some("synthetic".into());

    let (base, labels) = gen_base(cfg)?;
    store::write_set(&ActivationSet::from_f64(Level::L1, LayerId::Final, &base), &manifest, dir)?;
    store::write_norm_weights(dir, &norm_weights(cfg.seed, cfg.d_model))?;
    for &level in spec.levels.iter().filter(|&&l| l != Level::L1) {
        let lc = level_config(cfg, level);
        let (task, _) = inject(&lc, &base, &labels)?;
        store::write_set(&ActivationSet::from_f64(level, LayerId::Final, &task), &manifest, dir)?;
    }

    if spec.n_layers > 0 {
        let mut wrote_baseline = false;
        for &level in spec.levels.iter().filter(|&&l| l != Level::L1) {
            let lc = level_config(cfg, level);
            let basin = if lc.divergence_gain > 0.0 { spec.basin_layer } else { None };
            for pair in layered_trajectory(&lc, spec.n_layers, basin)? {
                let layer = LayerId::Index(pair.layer);
                if !wrote_baseline {
                    store::write_set(&ActivationSet::from_f64(Level::L1, layer, &pair.base), &manifest, dir)?;
                }
                store::write_set(&ActivationSet::from_f64(level, layer, &pair.task), &manifest, dir)?;
            }
            wrote_baseline = true;
        }
    }
    store::read_manifest(dir)
}
