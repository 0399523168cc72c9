use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use manifold_gauge::ablation::{ablate, export_patch, AblationResult, PatchAgreement};
use manifold_gauge::dataset::{self, TemplateFile, DEFAULT_TEMPLATE_SET, MAX_VALUE, MIN_VALUE};
use manifold_gauge::geometry::{analyze, GeometryReport, ReportSummary, ScatterPoint};
use manifold_gauge::layers::{phase_portrait, portrait_csv, sweep, trajectory_csv};
use manifold_gauge::store::{self, LoadedPair};
use manifold_gauge::synth::{write_synthetic_store, SyntheticStoreSpec};
use manifold_gauge::{
    fsutil, Attribute, Error, HealingVerdict, LayerId, LayerTrajectory, Level, Manifest, Metric, MetricKind,
    Modality, PatchMode, PhaseClassification,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Emit, Settings};
use crate::render::{self, f4, table};

#[derive(Debug, Clone, Default, Args)]
pub struct DatasetArgs {
    /// Smallest concept value.
    #[arg(long)]
    pub range_lo: Option<u32>,
    /// Largest concept value.
    #[arg(long)]
    pub range_hi: Option<u32>,
    /// Surface forms, comma separated (arabic, english_word).
    #[arg(long, value_delimiter = ',')]
    pub modalities: Vec<Modality>,
    /// Named template set in the template file.
    #[arg(long)]
    pub template_set: Option<String>,
    /// Template JSON file replacing the bundled templates.
    #[arg(long, value_name = "FILE")]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub divergence_gain: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Per-layer captures 0..N in addition to FINAL.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Layer where cross-class divergence peaks; omit for a flat schedule.
    #[arg(long)]
    pub basin: Option<usize>,
}

fn write(out: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fsutil::write_atomic(&out.join(name), bytes)?;
    log::info!("wrote {}", out.join(name).display());
    Ok(())
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    fsutil::write_json_atomic(&out.join(name), value)?;
    log::info!("wrote {}", out.join(name).display());
    Ok(())
}

fn load_metric(dir: &Path, manifest: &Manifest, kind: MetricKind) -> Result<Metric> {
    Ok(match kind {
        MetricKind::Standard => Metric::Standard,
        MetricKind::GMetric => Metric::weighted(store::read_norm_weights(dir, manifest.d_model)?)?,
    })
}

/// Explicit levels, or every task level the store holds at `layer`.
fn levels_at(s: &Settings, dir: &Path, manifest: &Manifest, layer: LayerId) -> Result<Vec<Level>> {
    let explicit = s.task_levels()?;
    if !explicit.is_empty() {
        return Ok(explicit.to_vec());
    }
    let found: Vec<Level> = manifest
        .levels
        .iter()
        .copied()
        .filter(|&l| l != Level::L1 && store::has_set(dir, l, layer))
        .collect();
    if found.is_empty() {
        return Err(Error::MissingData(format!("the store holds no task level (L2..L5) at layer {layer}")).into());
    }
    Ok(found)
}

fn context_line(manifest: &Manifest, s: &Settings, layer: &str) -> String {
    format!(
        "Model `{}`, d_model {}, layer {layer}, metric {}, knowledge filter {}.\n",
        manifest.model_id,
        manifest.d_model,
        metric_name(s.metric),
        if s.dynamics.knowledge_filter { "on" } else { "off" }
    )
}

fn metric_name(kind: MetricKind) -> &'static str {
    match kind {
        MetricKind::Standard => "standard",
        MetricKind::GMetric => "g_metric",
    }
}

// ---------------------------------------------------------------- synth-dataset

pub fn synth_dataset(s: &Settings, args: &DatasetArgs) -> Result<()> {
    let out = s.out()?;
    let file = s.file.dataset.clone().unwrap_or_default();
    let lo = args.range_lo.or(file.range_lo).unwrap_or(MIN_VALUE);
    let hi = args.range_hi.or(file.range_hi).unwrap_or(MAX_VALUE);
    let modalities: BTreeSet<Modality> = if !args.modalities.is_empty() {
        args.modalities.iter().copied().collect()
    } else if let Some(names) = &file.modalities {
        names.iter().map(|n| n.parse()).collect::<Result<_, Error>>()?
    } else {
        [Modality::Arabic, Modality::EnglishWord].into_iter().collect()
    };
    let templates = match args.templates.as_ref().or(file.templates.as_ref()) {
        Some(p) => TemplateFile::load(p)?,
        None => TemplateFile::bundled(),
    };
    let set = args
        .template_set
        .clone()
        .or(file.template_set)
        .unwrap_or_else(|| DEFAULT_TEMPLATE_SET.to_string());
    let levels = if s.levels.is_empty() { Level::ALL.to_vec() } else { s.levels.clone() };
    let corpus = dataset::generate_corpus(lo, hi, &modalities)?;
    let mut prompts = Vec::with_capacity(corpus.len() * levels.len());
    for level in levels {
        prompts.extend(dataset::render_prompts(&corpus, level, &templates, &set)?);
    }
    write(out, "prompts.jsonl", &dataset::prompts_to_jsonl(&prompts))?;
    println!("{} prompts ({} concepts) -> {}", prompts.len(), corpus.len(), out.join("prompts.jsonl").display());
    Ok(())
}

// ---------------------------------------------------------------- synth-manifold

#[derive(Serialize)]
struct SynthRecord<'a> {
    config: &'a manifold_gauge::SynthConfig,
    levels: &'a [Level],
    n_layers: usize,
    basin_layer: Option<usize>,
}

pub fn synth_manifold(s: &Settings, args: &SynthArgs) -> Result<()> {
    let dir = s.store()?;
    let mut cfg = s.file.synth.clone().unwrap_or_default();
    let layout = s.file.synth_store.clone().unwrap_or_default();
    cfg.seed = s.seed;
    if let Some(n) = args.samples {
        cfg.n_samples = n;
    }
    if let Some(d) = args.d_model {
        cfg.d_model = d;
    }
    if let Some(g) = args.divergence_gain {
        cfg.divergence_gain = g;
    }
    if let Some(n) = args.noise_sigma {
        cfg.noise_sigma = n;
    }
    cfg.validate()?;
    let mut levels = if !s.levels.is_empty() {
        s.levels.clone()
    } else {
        layout.levels.clone().unwrap_or_else(|| Level::ALL.to_vec())
    };
    levels.sort();
    levels.dedup();
    let n_layers = args.layers.or(layout.n_layers).unwrap_or(0);
    let basin_layer = args.basin.or(layout.basin_layer);
    if let Some(b) = basin_layer {
        if b >= n_layers {
            return Err(Error::Config(format!("basin layer {b} must be below the layer count {n_layers}")).into());
        }
    }
    let labels = cfg.labels();
    for &level in &levels {
        if let Some(attr) = level.default_attribute() {
            if labels.iter().all(|l| l.get(attr) == labels[0].get(attr)) {
                log::warn!("{level} splits on {attr}, but values 1..={} all fall in one class", cfg.n_samples);
            }
        }
    }
    let spec = SyntheticStoreSpec {
        config: cfg,
        levels,
        n_layers,
        basin_layer,
    };
    let manifest = write_synthetic_store(dir, &spec)?;
    write_json(
        dir,
        "synthetic.json",
        &SynthRecord {
            config: &spec.config,
            levels: &spec.levels,
            n_layers,
            basin_layer,
        },
    )?;
    println!(
        "synthetic store: {} samples, d_model {}, levels {:?}, {} layers -> {}",
        manifest.n_samples(),
        manifest.d_model,
        manifest.levels,
        manifest.layers.len(),
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- analyze

struct LevelAnalysis {
    level: Level,
    attribute: Attribute,
    pair: LoadedPair,
    report: GeometryReport,
}

#[derive(Serialize)]
struct AnalysisEntry {
    level: Level,
    description: &'static str,
    layer: LayerId,
    summary: ReportSummary,
    /// Manifest row indices dropped by the collinearity guard.
    excluded_rows: Vec<usize>,
}

fn analyze_level(dir: &Path, manifest: &Manifest, s: &Settings, metric: &Metric, level: Level) -> Result<LevelAnalysis> {
    let pair = store::load_pair(dir, manifest, level, s.layer, s.dynamics.knowledge_filter)?;
    let attribute = s.attribute_for(level);
    let report = analyze(pair.base.view(), pair.task.view(), &pair.labels, attribute, metric)
        .with_context(|| format!("analysing {level} ({attribute}) at layer {}", s.layer))?;
    Ok(LevelAnalysis { level, attribute, pair, report })
}

fn analyze_all(dir: &Path, manifest: &Manifest, s: &Settings, metric: &Metric) -> Result<Vec<LevelAnalysis>> {
    let levels = levels_at(s, dir, manifest, s.layer)?;
    // Every level needs the same baseline; report its absence once, up front.
    if !store::has_set(dir, Level::L1, s.layer) {
        return Err(Error::MissingData(format!(
            "baseline level L1 is required at layer {} but {} is absent",
            s.layer,
            store::blob_path(dir, Level::L1, s.layer).display()
        ))
        .into());
    }
    levels.par_iter().map(|&l| analyze_level(dir, manifest, s, metric, l)).collect()
}

fn entry(a: &LevelAnalysis, layer: LayerId, metric: &Metric) -> AnalysisEntry {
    AnalysisEntry {
        level: a.level,
        description: a.level.description(),
        layer,
        summary: a.report.summary(metric),
        excluded_rows: a.report.excluded.iter().map(|&i| a.pair.rows[i]).collect(),
    }
}

fn summary_table(analyses: &[LevelAnalysis]) -> String {
    let rows: Vec<Vec<String>> = analyses
        .iter()
        .map(|a| render::summary_row(a.level, a.attribute.as_str(), &a.report.u_stats, &a.report.c_stats))
        .collect();
    table(&render::SUMMARY_HEADER, &rows)
}

fn scatter_csv(points: &[ScatterPoint], pair: &LoadedPair, manifest: &Manifest) -> Vec<u8> {
    let value = |i: usize| manifest.samples[pair.rows[i]].value.to_string();
    render::csv_bytes(
        &["i", "j", "value_i", "value_j", "group", "s_base", "u_sim", "c_sym"],
        points.iter().map(|p| {
            vec![
                pair.rows[p.i].to_string(),
                pair.rows[p.j].to_string(),
                value(p.i),
                value(p.j),
                p.group.to_string(),
                p.s_base.to_string(),
                p.u_sim.to_string(),
                p.c_sym.to_string(),
            ]
        }),
    )
}

pub fn analyze_cmd(s: &Settings) -> Result<()> {
    let (dir, out) = (s.store()?, s.out()?);
    s.task_levels()?;
    let manifest = store::read_manifest(dir)?;
    let metric = load_metric(dir, &manifest, s.metric)?;
    let analyses = analyze_all(dir, &manifest, s, &metric)?;

    let entries: Vec<AnalysisEntry> = analyses.iter().map(|a| entry(a, s.layer, &metric)).collect();
    write_json(out, "analysis.json", &entries)?;

    if s.emits(Emit::Markdown) {
        let mut md = String::from("# Core geometric metrics\n\n");
        md.push_str(&context_line(&manifest, s, &s.layer.to_string()));
        md.push_str("Pearson r is computed between S_base and U_sim over each mask. C_ij is symmetrised.\n\n");
        md.push_str(&summary_table(&analyses));
        md.push_str("\n## Checks\n\n");
        let rows: Vec<Vec<String>> = analyses
            .iter()
            .map(|a| {
                let r = &a.report;
                vec![
                    a.level.to_string(),
                    r.n_samples.to_string(),
                    r.excluded.len().to_string(),
                    f4(metric.norm(r.v_task.view())),
                    format!("{:.2e}", r.max_orthogonality_residual),
                    format!("{:.2e}", r.max_trend_residual),
                    format!("{:.2e}", r.max_c_asymmetry),
                ]
            })
            .collect();
        md.push_str(&table(
            &["Level", "n", "Excluded (collinear)", "|V_task|", "max |<x_hat, u_hat>|", "max trend residual", "max C asymmetry"],
            &rows,
        ));
        write(out, "analysis.md", md.as_bytes())?;
    }
    for a in &analyses {
        let stem = format!("scatter_{}_{}", a.level, a.attribute);
        let points = a.report.scatter();
        if s.emits(Emit::Csv) {
            write(out, &format!("{stem}.csv"), &scatter_csv(&points, &a.pair, &manifest))?;
        }
        if s.emits(Emit::Svg) {
            let svg = render::scatter_svg(&format!("{} {}: U_sim vs S_base", a.level, a.attribute), &points);
            write(out, &format!("{stem}.svg"), svg.as_bytes())?;
        }
    }
    print!("{}", summary_table(&analyses));
    Ok(())
}

// ---------------------------------------------------------------- ablate

#[derive(Serialize)]
struct Phase {
    u_same: f64,
    u_cross: f64,
    u_gap: f64,
    c_same: f64,
    c_cross: f64,
    s_drift: f64,
    entangled: bool,
}

#[derive(Serialize)]
struct AblationEntry {
    level: Level,
    attribute: Attribute,
    layer: LayerId,
    mode: PatchMode,
    delta: f64,
    class_counts: Vec<(bool, usize)>,
    class_vector_norms: Vec<(bool, f64)>,
    pre: Phase,
    post: Phase,
    in_entanglement_zone: bool,
    verdict: HealingVerdict,
    direct_vs_ortho: PatchAgreement,
    patch_file: Option<String>,
}

fn phase(r: &GeometryReport, drift: f64, entangled: bool) -> Phase {
    Phase {
        u_same: r.u_stats.same.mean,
        u_cross: r.u_stats.cross.mean,
        u_gap: r.u_stats.gap(),
        c_same: r.c_stats.same.mean,
        c_cross: r.c_stats.cross.mean,
        s_drift: drift,
        entangled,
    }
}

fn ablation_entry(level: Level, s: &Settings, metric: &Metric, r: &AblationResult, patch_file: Option<String>) -> AblationEntry {
    let h = &r.healing;
    AblationEntry {
        level,
        attribute: r.class_vectors.attribute,
        layer: s.layer,
        mode: r.mode,
        delta: h.delta,
        class_counts: r.class_vectors.counts.iter().map(|(&k, &v)| (k, v)).collect(),
        class_vector_norms: r.class_vectors.vectors.iter().map(|(&k, v)| (k, metric.norm(v.view()))).collect(),
        pre: phase(&h.pre_report, h.s_drift_pre, h.entangled_pre),
        post: phase(&h.post_report, h.s_drift_post, h.entangled_post),
        in_entanglement_zone: h.in_entanglement_zone(),
        verdict: h.verdict,
        direct_vs_ortho: r.agreement,
        patch_file,
    }
}

fn run_ablation(dir: &Path, manifest: &Manifest, s: &Settings, metric: &Metric, level: Level) -> Result<(Attribute, LoadedPair, AblationResult)> {
    let pair = store::load_pair(dir, manifest, level, s.layer, s.dynamics.knowledge_filter)?;
    let attribute = s.attribute_for(level);
    let r = ablate(pair.base.view(), pair.task.view(), &pair.labels, attribute, metric, s.mode, s.delta)
        .with_context(|| format!("ablating {level} ({attribute}) at layer {}", s.layer))?;
    Ok((attribute, pair, r))
}

fn ablation_markdown(e: &AblationEntry) -> String {
    let mut md = format!(
        "# Specific-vector ablation: {} {} ({} mode)\n\nLayer {}, entanglement threshold delta = {}.\n\n",
        e.level, e.attribute, e.mode, e.layer, e.delta
    );
    let row = |name: &str, p: &Phase| {
        vec![
            name.to_string(),
            f4(p.u_same),
            f4(p.u_cross),
            f4(p.u_gap),
            f4(p.c_same),
            f4(p.c_cross),
            f4(p.s_drift),
            if p.entangled { "yes".into() } else { "no".into() },
        ]
    };
    md.push_str(&table(
        &["State", "Mean U_sim (same)", "Mean U_sim (cross)", "U_sim gap", "Mean C_ij (same)", "Mean C_ij (cross)", "S drift", "Entangled"],
        &[row("pre", &e.pre), row("post", &e.post)],
    ));
    md.push_str(&format!(
        "\nVerdict: **{}**. Post-patch means in the 0 < cross < same zone: {}.\n\n",
        e.verdict.as_str(),
        if e.in_entanglement_zone { "yes" } else { "no" }
    ));
    md.push_str(&format!(
        "Direct vs orthogonal patched states: mean cosine {}, min cosine {}, max omega {}.\n",
        f4(e.direct_vs_ortho.mean_cosine),
        f4(e.direct_vs_ortho.min_cosine),
        f4(e.direct_vs_ortho.max_omega)
    ));
    let counts: Vec<String> = e.class_counts.iter().map(|(k, n)| format!("{}={k}: {n}", e.attribute)).collect();
    md.push_str(&format!("\nClass sizes: {}.\n", counts.join(", ")));
    if let Some(f) = &e.patch_file {
        md.push_str(&format!("\nPatch vectors exported to `patches/{f}`.\n"));
    }
    md
}

fn ablation_scatter_csv(pre: &[ScatterPoint], post: &[ScatterPoint], pair: &LoadedPair) -> Vec<u8> {
    let rows = [("pre", pre), ("post", post)].into_iter().flat_map(|(state, pts)| {
        pts.iter().map(move |p| {
            vec![
                state.to_string(),
                pair.rows[p.i].to_string(),
                pair.rows[p.j].to_string(),
                p.group.to_string(),
                p.s_base.to_string(),
                p.u_sim.to_string(),
            ]
        })
    });
    render::csv_bytes(&["state", "i", "j", "group", "s_base", "u_sim"], rows)
}

pub fn ablate_cmd(s: &Settings) -> Result<()> {
    let (dir, out) = (s.store()?, s.out()?);
    s.task_levels()?;
    let manifest = store::read_manifest(dir)?;
    let metric = load_metric(dir, &manifest, s.metric)?;
    let levels = levels_at(s, dir, &manifest, s.layer)?;
    let results: Vec<_> = levels
        .par_iter()
        .map(|&l| run_ablation(dir, &manifest, s, &metric, l))
        .collect::<Result<_>>()?;
    let mut summary = Vec::new();
    // Patch files share one index; export sequentially.
    for (&level, (attribute, pair, r)) in levels.iter().zip(&results) {
        export_patch(&r.class_vectors, level, s.layer, s.mode, dir)?;
        let e = ablation_entry(level, s, &metric, r, Some(store::patch_file_name(level, s.layer, s.mode)));
        let stem = format!("ablation_{level}_{attribute}_{}", s.mode);
        write_json(out, &format!("{stem}.json"), &e)?;
        if s.emits(Emit::Markdown) {
            write(out, &format!("{stem}.md"), ablation_markdown(&e).as_bytes())?;
        }
        let (pre, post) = (r.healing.pre_report.scatter(), r.healing.post_report.scatter());
        let scatter_stem = format!("ablation_scatter_{level}_{attribute}_{}", s.mode);
        if s.emits(Emit::Csv) {
            write(out, &format!("{scatter_stem}.csv"), &ablation_scatter_csv(&pre, &post, pair))?;
        }
        if s.emits(Emit::Svg) {
            let title = format!("{level} {attribute}: U_sim before and after {} ablation", s.mode);
            write(out, &format!("{scatter_stem}.svg"), render::ablation_svg(&title, &pre, &post).as_bytes())?;
        }
        summary.push(vec![
            level.to_string(),
            attribute.to_string(),
            f4(e.pre.u_cross),
            f4(e.post.u_same),
            f4(e.post.u_cross),
            e.verdict.as_str().to_string(),
        ]);
    }
    print!(
        "{}",
        table(&["Level", "Attribute", "U_sim cross (pre)", "U_sim same (post)", "U_sim cross (post)", "Verdict"], &summary)
    );
    Ok(())
}

// ---------------------------------------------------------------- layerwise

#[derive(Serialize)]
struct LayerwiseEntry<'a> {
    #[serde(flatten)]
    trajectory: &'a LayerTrajectory,
    epsilon_basin: f64,
    smoothing: Option<usize>,
    max_gap: f64,
    early_differentiation: bool,
}

fn layered_levels(s: &Settings, dir: &Path, manifest: &Manifest) -> Result<Vec<Level>> {
    let explicit = s.task_levels()?;
    if !explicit.is_empty() {
        return Ok(explicit.to_vec());
    }
    let found: Vec<Level> = manifest
        .levels
        .iter()
        .copied()
        .filter(|&l| l != Level::L1 && store::indexed_layers(dir, manifest, l).len() >= 2)
        .collect();
    if found.is_empty() {
        return Err(Error::MissingData("the store holds no task level with two or more per-layer captures".into()).into());
    }
    Ok(found)
}

fn phase_text(p: &PhaseClassification) -> String {
    let span = |v: &[u32]| match (v.first(), v.last()) {
        (Some(a), Some(b)) if a == b => a.to_string(),
        (Some(a), Some(b)) => format!("{a}-{b}"),
        _ => "none".into(),
    };
    match p {
        PhaseClassification::Phases(ph) => format!(
            "extraction {}, computation/basin {}, rebound {}",
            span(&ph.extraction),
            span(&ph.computation_basin),
            span(&ph.rebound)
        ),
        PhaseClassification::NoPhases { reason } => format!("no phases ({reason})"),
    }
}

fn basin_cell(t: &LayerTrajectory) -> String {
    match t.basin_layer {
        Some(b) => b.to_string(),
        None => "none".into(),
    }
}

fn layerwise_markdown(t: &LayerTrajectory, s: &Settings) -> String {
    let mut md = format!("# Layer dynamics: {} {}\n\n", t.level, t.attribute);
    md.push_str(&format!(
        "Basin layer: {} (epsilon {}). Phases: {}.\n\nMax same/cross U_sim gap {}; early differentiation (layers < 10): {}.\n\n",
        basin_cell(t),
        s.dynamics.epsilon_basin,
        phase_text(&t.phases),
        f4(t.max_gap()),
        if t.early_differentiation() { "yes" } else { "no" }
    ));
    let rows: Vec<Vec<String>> = (0..t.len())
        .map(|i| {
            vec![
                t.layers[i].to_string(),
                f4(t.same_u[i]),
                f4(t.cross_u[i]),
                f4(t.same_c[i]),
                f4(t.cross_c[i]),
                t.excluded[i].to_string(),
            ]
        })
        .collect();
    md.push_str(&table(
        &["Layer", "Mean U_sim (same)", "Mean U_sim (cross)", "Mean C_ij (same)", "Mean C_ij (cross)", "Excluded"],
        &rows,
    ));
    md
}

fn sweep_levels(dir: &Path, manifest: &Manifest, s: &Settings, levels: &[Level]) -> Result<Vec<LayerTrajectory>> {
    let metric = load_metric(dir, manifest, s.metric)?;
    levels
        .iter()
        .map(|&l| {
            let attribute = s.attribute_for(l);
            sweep(dir, l, attribute, &metric, &s.dynamics)
                .with_context(|| format!("layer sweep of {l} ({attribute})"))
        })
        .collect()
}

pub fn layerwise_cmd(s: &Settings) -> Result<()> {
    let (dir, out) = (s.store()?, s.out()?);
    s.task_levels()?;
    let manifest = store::read_manifest(dir)?;
    let levels = layered_levels(s, dir, &manifest)?;
    let trajectories = sweep_levels(dir, &manifest, s, &levels)?;
    let mut summary = Vec::new();
    for t in &trajectories {
        let stem = format!("{}_{}", t.level, t.attribute);
        write_json(
            out,
            &format!("layerwise_{stem}.json"),
            &LayerwiseEntry {
                trajectory: t,
                epsilon_basin: s.dynamics.epsilon_basin,
                smoothing: s.dynamics.smoothing,
                max_gap: t.max_gap(),
                early_differentiation: t.early_differentiation(),
            },
        )?;
        if s.emits(Emit::Csv) {
            write(out, &format!("trajectory_{stem}.csv"), &trajectory_csv(t))?;
            write(out, &format!("portrait_{stem}.csv"), &portrait_csv(&phase_portrait(t)))?;
        }
        if s.emits(Emit::Markdown) {
            write(out, &format!("layerwise_{stem}.md"), layerwise_markdown(t, s).as_bytes())?;
        }
        if s.emits(Emit::Svg) {
            write(out, &format!("trajectory_{stem}.svg"), render::trajectory_svg(t).as_bytes())?;
            write(out, &format!("portrait_{stem}.svg"), render::portrait_svg(t).as_bytes())?;
        }
        summary.push(vec![t.level.to_string(), t.attribute.to_string(), basin_cell(t), phase_text(&t.phases)]);
    }
    print!("{}", table(&["Level", "Attribute", "Basin layer", "Phases"], &summary));
    Ok(())
}

// ---------------------------------------------------------------- report

#[derive(Serialize)]
struct CombinedReport {
    model_id: String,
    d_model: usize,
    layer: LayerId,
    metric: &'static str,
    knowledge_filter: bool,
    analysis: Vec<AnalysisEntry>,
    ablation: Vec<AblationEntry>,
    layer_dynamics: Vec<LayerDynamicsSummary>,
}

#[derive(Serialize)]
struct LayerDynamicsSummary {
    level: Level,
    attribute: Attribute,
    n_layers: usize,
    basin_layer: Option<u32>,
    phases: PhaseClassification,
    max_gap: f64,
    early_differentiation: bool,
}

pub fn report_cmd(s: &Settings) -> Result<()> {
    let (dir, out) = (s.store()?, s.out()?);
    s.task_levels()?;
    let manifest = store::read_manifest(dir)?;
    let metric = load_metric(dir, &manifest, s.metric)?;
    let analyses = analyze_all(dir, &manifest, s, &metric)?;
    let analysis: Vec<AnalysisEntry> = analyses.iter().map(|a| entry(a, s.layer, &metric)).collect();

    // Read-only: ablation is evaluated but no patch files are written.
    let ablations: Vec<AblationEntry> = analyses
        .par_iter()
        .map(|a| {
            let r = ablate(a.pair.base.view(), a.pair.task.view(), &a.pair.labels, a.attribute, &metric, s.mode, s.delta)
                .with_context(|| format!("ablating {} ({})", a.level, a.attribute))?;
            Ok(ablation_entry(a.level, s, &metric, &r, None))
        })
        .collect::<Result<_>>()?;

    let layered: Vec<Level> = analyses
        .iter()
        .map(|a| a.level)
        .filter(|&l| store::indexed_layers(dir, &manifest, l).len() >= 2)
        .collect();
    let dynamics: Vec<LayerDynamicsSummary> = sweep_levels(dir, &manifest, s, &layered)?
        .into_iter()
        .map(|t| LayerDynamicsSummary {
            level: t.level,
            attribute: t.attribute,
            n_layers: t.len(),
            max_gap: t.max_gap(),
            early_differentiation: t.early_differentiation(),
            basin_layer: t.basin_layer,
            phases: t.phases,
        })
        .collect();

    let mut md = String::from("# Residual-stream geometry report\n\n");
    md.push_str(&context_line(&manifest, s, &s.layer.to_string()));
    md.push_str("\n## Core geometric metrics\n\n");
    md.push_str(&summary_table(&analyses));
    md.push_str(&format!("\n## Specific-vector ablation ({} mode, delta {})\n\n", s.mode, s.delta));
    let rows: Vec<Vec<String>> = ablations
        .iter()
        .map(|e| {
            vec![
                e.level.to_string(),
                e.attribute.to_string(),
                f4(e.pre.u_same),
                f4(e.pre.u_cross),
                f4(e.post.u_same),
                f4(e.post.u_cross),
                f4(e.direct_vs_ortho.mean_cosine),
                e.verdict.as_str().to_string(),
            ]
        })
        .collect();
    md.push_str(&table(
        &["Level", "Attribute", "U_sim same (pre)", "U_sim cross (pre)", "U_sim same (post)", "U_sim cross (post)", "Direct/ortho cosine", "Verdict"],
        &rows,
    ));
    md.push_str("\n## Layer dynamics\n\n");
    if dynamics.is_empty() {
        md.push_str("No level has two or more per-layer captures.\n");
    } else {
        let rows: Vec<Vec<String>> = dynamics
            .iter()
            .map(|d| {
                vec![
                    d.level.to_string(),
                    d.attribute.to_string(),
                    d.n_layers.to_string(),
                    d.basin_layer.map_or_else(|| "none".into(), |b| b.to_string()),
                    phase_text(&d.phases),
                    f4(d.max_gap),
                    if d.early_differentiation { "yes".into() } else { "no".into() },
                ]
            })
            .collect();
        md.push_str(&table(
            &["Level", "Attribute", "Layers", "Basin layer", "Phases", "Max U_sim gap", "Early differentiation"],
            &rows,
        ));
    }

    write_json(
        out,
        "report.json",
        &CombinedReport {
            model_id: manifest.model_id.clone(),
            d_model: manifest.d_model,
            layer: s.layer,
            metric: metric_name(s.metric),
            knowledge_filter: s.dynamics.knowledge_filter,
            analysis,
            ablation: ablations,
            layer_dynamics: dynamics,
        },
    )?;
    if s.emits(Emit::Markdown) {
        write(out, "report.md", md.as_bytes())?;
    }
    print!("{}", summary_table(&analyses));
    Ok(())
}
