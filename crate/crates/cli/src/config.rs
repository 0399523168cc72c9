//! Run configuration: an optional TOML file overlaid by command-line flags.
//! Everything is validated here, before any store is touched.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use manifold_gauge::ablation::DEFAULT_DELTA;
use manifold_gauge::layers::DEFAULT_EPSILON_BASIN;
use manifold_gauge::{Attribute, DynamicsOptions, Error, LayerId, Level, MetricKind, PatchMode, SynthConfig};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Markdown,
    Csv,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Standard,
    #[value(name = "g_metric")]
    GMetric,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Standard => MetricKind::Standard,
            MetricArg::GMetric => MetricKind::GMetric,
        }
    }
}

/// Layout of a synthetic store beyond the generator parameters.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreLayout {
    pub levels: Option<Vec<Level>>,
    pub n_layers: Option<usize>,
    pub basin_layer: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub range_lo: Option<u32>,
    pub range_hi: Option<u32>,
    pub modalities: Option<Vec<String>>,
    pub template_set: Option<String>,
    pub templates: Option<PathBuf>,
}

/// Contents of a `--config` file. Every key is optional; flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub store: Option<PathBuf>,
    pub levels: Option<Vec<Level>>,
    pub attribute: Option<Attribute>,
    pub metric: Option<MetricKind>,
    pub mode: Option<PatchMode>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub emit: Option<Vec<Emit>>,
    pub delta: Option<f64>,
    pub epsilon_basin: Option<f64>,
    pub layer: Option<LayerId>,
    pub smooth: Option<usize>,
    pub knowledge_filter: Option<bool>,
    pub synth: Option<SynthConfig>,
    pub synth_store: Option<StoreLayout>,
    pub dataset: Option<DatasetConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; command-line flags override its keys.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Activation-store directory.
    #[arg(long, value_name = "DIR")]
    pub store: Option<PathBuf>,
    /// Task level(s), comma separated. Defaults to every task level in the store.
    #[arg(long = "level", value_delimiter = ',', value_name = "L2,..")]
    pub levels: Vec<Level>,
    /// Class split; defaults to the attribute each level asks about.
    #[arg(long)]
    pub attribute: Option<Attribute>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// Patch operator for ablation.
    #[arg(long)]
    pub mode: Option<PatchMode>,
    /// Output directory for artifacts.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Artifact kinds to write (JSON summaries are always written).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub emit: Vec<Emit>,
    /// Entanglement threshold on the U_sim group gap.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Depth below zero that counts as a divergence basin.
    #[arg(long)]
    pub epsilon_basin: Option<f64>,
    /// Capture point analysed by analyze/ablate: a block index or FINAL.
    #[arg(long)]
    pub layer: Option<LayerId>,
    /// Odd moving-average window applied to layer trajectories.
    #[arg(long)]
    pub smooth: Option<usize>,
    /// Use every row, not only rows that passed the knowledge filter.
    #[arg(long)]
    pub no_knowledge_filter: bool,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct Settings {
    pub store: Option<PathBuf>,
    pub levels: Vec<Level>,
    pub attribute: Option<Attribute>,
    pub metric: MetricKind,
    pub mode: PatchMode,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub emit: BTreeSet<Emit>,
    pub delta: f64,
    pub dynamics: DynamicsOptions,
    pub layer: LayerId,
    pub file: RunConfig,
}

impl Settings {
    pub fn resolve(args: &CommonArgs) -> Result<Self, Error> {
        let file = match &args.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let mut levels = if args.levels.is_empty() {
            file.levels.clone().unwrap_or_default()
        } else {
            args.levels.clone()
        };
        levels.sort();
        levels.dedup();
        let emit: BTreeSet<Emit> = if !args.emit.is_empty() {
            args.emit.iter().copied().collect()
        } else if let Some(e) = &file.emit {
            e.iter().copied().collect()
        } else {
            [Emit::Markdown, Emit::Csv, Emit::Svg].into_iter().collect()
        };
        let delta = args.delta.or(file.delta).unwrap_or(DEFAULT_DELTA);
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Config(format!("delta must be a positive number, got {delta}")));
        }
        let epsilon_basin = args.epsilon_basin.or(file.epsilon_basin).unwrap_or(DEFAULT_EPSILON_BASIN);
        if !(epsilon_basin.is_finite() && epsilon_basin >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon_basin must be a non-negative number, got {epsilon_basin}"
            )));
        }
        let dynamics = DynamicsOptions {
            epsilon_basin,
            smoothing: args.smooth.or(file.smooth),
            knowledge_filter: !args.no_knowledge_filter && file.knowledge_filter.unwrap_or(true),
        };
        dynamics.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(Settings {
            store: args.store.clone().or_else(|| file.store.clone()),
            levels,
            attribute: args.attribute.or(file.attribute),
            metric: args.metric.map(MetricKind::from).or(file.metric).unwrap_or(MetricKind::Standard),
            mode: args.mode.or(file.mode).unwrap_or(PatchMode::Direct),
            out: args.out.clone().or_else(|| file.out.clone()),
            seed: args.seed.or(file.seed).unwrap_or(0),
            emit,
            delta,
            dynamics,
            layer: args.layer.or(file.layer).unwrap_or(LayerId::Final),
            file,
        })
    }

    pub fn store(&self) -> Result<&Path, Error> {
        self.store
            .as_deref()
            .ok_or_else(|| Error::Config("--store is required for this command".into()))
    }

    pub fn out(&self) -> Result<&Path, Error> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("--out is required for this command".into()))
    }

    pub fn emits(&self, kind: Emit) -> bool {
        self.emit.contains(&kind)
    }

    /// Explicit task levels; `L1` is the baseline and cannot be analysed on its own.
    pub fn task_levels(&self) -> Result<&[Level], Error> {
        if self.levels.contains(&Level::L1) {
            return Err(Error::Config(
                "L1 is the identity baseline; choose task levels L2..L5".into(),
            ));
        }
        Ok(&self.levels)
    }

    pub fn attribute_for(&self, level: Level) -> Attribute {
        self.attribute
            .or(level.default_attribute())
            .unwrap_or(Attribute::IsEven)
    }
}
