//! Residual-stream geometry toolkit.
//!
//! Given baseline (`L1`) and task activations for the same concepts, the
//! crate splits each sample's interference into a shared task vector and a
//! specific part, decomposes the specific part against the concept direction,
//! and measures how the resulting innovation directions line up within and
//! across attribute classes. Around that core sit a prompt-corpus generator,
//! an on-disk activation store, a synthetic generator with known geometry,
//! specific-vector ablation and a layer-by-layer sweep.

// `!(x > eps)` is the NaN-rejecting form used by every guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablation;
pub mod dataset;
pub mod error;
pub mod fsutil;
pub mod geometry;
pub mod layers;
pub mod plot;
pub mod prng;
pub mod store;
pub mod synth;
pub mod types;

pub use ablation::{AblationResult, ClassVectors, HealingReport, HealingVerdict};
pub use error::{Error, ErrorKind, Result};
pub use geometry::{GeometryReport, Group, Metric, MetricKind};
pub use layers::{DynamicsOptions, LayerTrajectory, PhaseClassification, Phases};
pub use store::{Manifest, PatchMode};
pub use synth::SynthConfig;
pub use types::{Attribute, Labels, LayerId, Level, Modality};
