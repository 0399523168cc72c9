//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use manifold_gauge::ablation::ablate;
use manifold_gauge::geometry::{analyze, gram_schmidt, pair_trend, rotation_params, s_new_expanded, Metric};
use manifold_gauge::layers::sweep;
use manifold_gauge::prng::RowStream;
use manifold_gauge::synth::{gen_base, inject, write_synthetic_store, SynthConfig, SyntheticStoreSpec};
use manifold_gauge::{Attribute, DynamicsOptions, Level, PatchMode};
use ndarray::Array1;

const DIMS: [usize; 4] = [2, 8, 512, 3584];
const STD: Metric = Metric::Standard;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn draw(seed: u64, tag: u64, d: usize, scale: f64) -> Array1<f64> {
    let mut v = vec![0.0; d];
    RowStream::new(seed, tag, 0).fill_normal(&mut v, scale);
    Array1::from(v)
}

/// Log-uniform scale in `[10^lo, 10^hi)` from an independent stream.
fn log_scale(seed: u64, tag: u64, lo: f64, hi: f64) -> f64 {
    10f64.powf(lo + (hi - lo) * RowStream::new(seed, tag, 1).uniform())
}

fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for k in 0..a.len() {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

fn max_abs(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn core_identity() -> Outcome {
    let n = 10_000u64;
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for draw_id in 0..n {
        let d = DIMS[(draw_id % 4) as usize];
        let seed = 1_000_000 + draw_id;
        let (xi, xj) = (draw(seed, 1, d, 1.0), draw(seed, 2, d, 1.0));
        let di_raw = draw(seed, 3, d, log_scale(seed, 5, -3.0, 1.5));
        let dj_raw = draw(seed, 4, d, log_scale(seed, 6, -3.0, 1.5));
        let (Ok(di), Ok(dj)) = (rotation_params(xi.view(), di_raw.view(), &STD), rotation_params(xj.view(), dj_raw.view(), &STD)) else {
            skipped += 1;
            continue;
        };
        let direct = cosine(&(&xi + &di_raw), &(&xj + &dj_raw));
        worst = worst.max((s_new_expanded(&di, &dj, &STD) - direct).abs());
    }
    outcome(
        worst < 1e-10 && skipped == 0,
        format!("{n} draws over d in {DIMS:?}, max |expanded - direct| = {worst:.2e}, collinear skips {skipped}"),
    )
}

fn default_set() -> (ndarray::Array2<f64>, ndarray::Array2<f64>, Vec<manifold_gauge::Labels>, SynthConfig) {
    let cfg = SynthConfig::default();
    let (x, labels) = gen_base(&cfg).expect("default config is valid");
    let (xt, _) = inject(&cfg, &x, &labels).expect("default config is valid");
    (x, xt, labels, cfg)
}

fn gram_schmidt_residual() -> Outcome {
    let mut worst = 0.0f64;
    for id in 0..2_000u64 {
        let d = DIMS[(id % 4) as usize];
        let seed = 2_000_000 + id;
        let x = draw(seed, 1, d, 1.0);
        let v = draw(seed, 2, d, log_scale(seed, 3, -8.0, 3.0));
        match gram_schmidt(x.view(), v.view(), &STD) {
            Ok(dec) => worst = worst.max(cosine(&dec.x_hat, &dec.u_hat).abs()),
            Err(e) => return outcome(false, format!("random draw {id}: {e}")),
        }
    }
    let (x, xt, labels, cfg) = default_set();
    let synthetic = match analyze(x.view(), xt.view(), &labels, cfg.attribute, &STD) {
        Ok(r) => r.max_orthogonality_residual,
        Err(e) => return outcome(false, format!("synthetic set: {e}")),
    };
    outcome(
        worst < 1e-9 && synthetic < 1e-9,
        format!("max |<x_hat, u_hat>| random {worst:.2e}, synthetic {synthetic:.2e}"),
    )
}

fn rotation_closure() -> Outcome {
    let mut worst_norm = 0.0f64;
    let mut worst_recon = 0.0f64;
    let mut check = |x: &Array1<f64>, delta: &Array1<f64>| -> Result<(), String> {
        let dec = rotation_params(x.view(), delta.view(), &STD).map_err(|e| e.to_string())?;
        worst_norm = worst_norm.max((dec.cos_alpha.powi(2) + dec.sin_alpha.powi(2) - 1.0).abs());
        let updated = x + delta;
        let expected = &updated / updated.dot(&updated).sqrt();
        worst_recon = worst_recon.max(max_abs(&dec.rotated(), &expected));
        Ok(())
    };
    for id in 0..2_000u64 {
        let d = DIMS[(id % 4) as usize];
        let seed = 3_000_000 + id;
        let x = draw(seed, 1, d, 1.0);
        let delta = draw(seed, 2, d, log_scale(seed, 3, -8.0, 3.0));
        if let Err(e) = check(&x, &delta) {
            return outcome(false, format!("random draw {id}: {e}"));
        }
    }
    for omega in [1e-8, 1.0, 1e3] {
        for d in DIMS {
            let x = draw(7, 1, d, 1.0);
            let dir = draw(7, 2, d, 1.0);
            let delta = &dir * (omega * x.dot(&x).sqrt() / dir.dot(&dir).sqrt());
            if let Err(e) = check(&x, &delta) {
                return outcome(false, format!("omega {omega}, d {d}: {e}"));
            }
        }
    }
    outcome(
        worst_norm < 1e-9 && worst_recon < 1e-9,
        format!("max |cos^2 + sin^2 - 1| = {worst_norm:.2e}, max reconstruction error = {worst_recon:.2e}, incl. omega in {{1e-8, 1, 1e3}}"),
    )
}

fn trend_identity() -> Outcome {
    let mut worst = 0.0f64;
    for id in 0..2_000u64 {
        let d = DIMS[1 + (id % 3) as usize];
        let seed = 4_000_000 + id;
        let (xi, xj) = (draw(seed, 1, d, 1.0), draw(seed, 2, d, 1.0));
        let shared = draw(seed, 3, d, 0.5);
        let vi = &draw(seed, 4, d, 0.3) + &shared;
        let vj = &draw(seed, 5, d, 0.3) + &shared;
        let (Ok(di), Ok(dj)) = (gram_schmidt(xi.view(), vi.view(), &STD), gram_schmidt(xj.view(), vj.view(), &STD)) else {
            return outcome(false, format!("random draw {id} is collinear"));
        };
        let t = match pair_trend(&di, &dj, vi.view(), vj.view(), &STD) {
            Ok(t) => t,
            Err(e) => return outcome(false, format!("random draw {id}: {e}")),
        };
        let s_base = cosine(&xi, &xj);
        worst = worst.max((t.predict(s_base) - di.u_hat.dot(&dj.u_hat)).abs());
    }
    let (x, xt, labels, cfg) = default_set();
    let synthetic = match analyze(x.view(), xt.view(), &labels, cfg.attribute, &STD) {
        Ok(r) => r.max_trend_residual,
        Err(e) => return outcome(false, format!("synthetic set: {e}")),
    };
    outcome(
        worst < 1e-9 && synthetic < 1e-9,
        format!("max |lambda S_base + k - U_sim| random {worst:.2e}, synthetic (all pairs) {synthetic:.2e}"),
    )
}

fn synthetic_reproduction() -> Outcome {
    let start = Instant::now();
    let cfg = SynthConfig::default();
    let configured = (cfg.n_samples, cfg.d_model, cfg.divergence_gain, cfg.noise_sigma) == (200, 512, 1.0, 0.1);
    let (x, xt, labels, _) = default_set();
    let r = match analyze(x.view(), xt.view(), &labels, cfg.attribute, &STD) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let (u, c) = (&r.u_stats, &r.c_stats);
    let pearson = u.same.pearson.value().unwrap_or(f64::NAN);
    let c_in = |m: f64| (0.0..=0.6).contains(&m);
    let pass = configured
        && u.same.mean > 0.3
        && u.cross.mean < -0.1
        && c_in(c.same.mean)
        && c_in(c.cross.mean)
        && c.gap() < 0.05
        && pearson > 0.6
        && elapsed < Duration::from_secs(30);
    outcome(
        pass,
        format!(
            "U_sim same {:.4} cross {:.4}; C same {:.4} cross {:.4} (gap {:.4}); Pearson same {pearson:.4}; {:.2} s",
            u.same.mean,
            u.cross.mean,
            c.same.mean,
            c.cross.mean,
            c.gap(),
            elapsed.as_secs_f64()
        ),
    )
}

fn ablation_healing() -> Outcome {
    let (x, xt, labels, cfg) = default_set();
    let r = match ablate(x.view(), xt.view(), &labels, cfg.attribute, &STD, PatchMode::Direct, 0.1) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let (pre, post) = (&r.healing.pre_report.u_stats, &r.healing.post_report.u_stats);
    let a = r.agreement;
    let pass = pre.cross.mean < -0.1
        && post.cross.mean > 0.0
        && (post.cross.mean - post.same.mean).abs() < 0.1
        && a.max_omega <= 0.3
        && a.min_cosine > 0.98;
    outcome(
        pass,
        format!(
            "cross U_sim {:.4} -> {:.4} (same {:.4}); direct/ortho min cosine {:.6} at max omega {:.4}",
            pre.cross.mean, post.cross.mean, post.same.mean, a.min_cosine, a.max_omega
        ),
    )
}

fn layered_store(dir: &Path, basin: Option<usize>, n_layers: usize) -> manifold_gauge::Result<()> {
    let spec = SyntheticStoreSpec {
        config: SynthConfig { n_samples: 100, d_model: 128, ..SynthConfig::default() },
        levels: vec![Level::L1, Level::L3, Level::L5],
        n_layers,
        basin_layer: basin,
    };
    write_synthetic_store(dir, &spec).map(|_| ())
}

fn basin_recovery() -> Outcome {
    let opts = DynamicsOptions::default();
    let mut found = Vec::new();
    let mut entangled_basins = Vec::new();
    for planted in [19usize, 21, 24] {
        let dir = tempfile::tempdir().expect("tempdir");
        if let Err(e) = layered_store(dir.path(), Some(planted), 32) {
            return outcome(false, e.to_string());
        }
        match (
            sweep(dir.path(), Level::L3, Attribute::IsEven, &STD, &opts),
            sweep(dir.path(), Level::L5, Attribute::IsEven, &STD, &opts),
        ) {
            (Ok(t), Ok(l5)) => {
                found.push((planted, t.basin_layer));
                entangled_basins.push(l5.basin_layer);
            }
            (Err(e), _) | (_, Err(e)) => return outcome(false, e.to_string()),
        }
    }
    let dir = tempfile::tempdir().expect("tempdir");
    if let Err(e) = layered_store(dir.path(), None, 8) {
        return outcome(false, e.to_string());
    }
    let flat = match sweep(dir.path(), Level::L3, Attribute::IsEven, &STD, &opts) {
        Ok(t) => t.basin_layer,
        Err(e) => return outcome(false, e.to_string()),
    };
    let exact = found.iter().all(|&(p, f)| f == Some(p as u32));
    let pass = exact && flat.is_none() && entangled_basins.iter().all(Option::is_none);
    outcome(
        pass,
        format!("planted -> found {found:?}; flat store {flat:?}; entangled level {entangled_basins:?}"),
    )
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, std::fs::read(&path).expect("readable file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    if root.is_dir() {
        walk(root, root, &mut out);
    }
    out
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_manifold-gauge");
    let work = tempfile::tempdir().expect("tempdir");
    let commands: [&[&str]; 6] = [
        &["synth-dataset", "--out", "{out}", "--seed", "11"],
        &["synth-manifold", "--store", "{store}", "--seed", "11", "--samples", "200", "--d-model", "32", "--layers", "8", "--basin", "5"],
        &["analyze", "--store", "{store}", "--out", "{out}", "--seed", "11"],
        &["ablate", "--store", "{store}", "--out", "{out}", "--seed", "11", "--mode", "ortho"],
        &["layerwise", "--store", "{store}", "--out", "{out}", "--seed", "11", "--smooth", "3"],
        &["report", "--store", "{store}", "--out", "{out}", "--seed", "11", "--metric", "g_metric"],
    ];
    let mut files = 0;
    for run in ["a", "b"] {
        let store = work.path().join(run).join("store");
        for (i, cmd) in commands.iter().enumerate() {
            let out = work.path().join(run).join(format!("out{i}"));
            let args: Vec<String> = cmd
                .iter()
                .map(|a| a.replace("{out}", out.to_str().unwrap()).replace("{store}", store.to_str().unwrap()))
                .collect();
            let status = Command::new(bin).args(&args).env_remove("MANIFOLD_GAUGE_THREADS").output().expect("binary runs");
            if !status.status.success() {
                return outcome(false, format!("{} failed: {}", cmd[0], String::from_utf8_lossy(&status.stderr)));
            }
        }
    }
    let mut differing = Vec::new();
    for sub in ["store", "out0", "out1", "out2", "out3", "out4", "out5"] {
        let (a, b) = (tree(&work.path().join("a").join(sub)), tree(&work.path().join("b").join(sub)));
        if sub != "out1" && a.is_empty() {
            differing.push(format!("{sub} (empty)"));
        }
        if a != b {
            differing.push(sub.to_string());
        }
        files += a.len();
    }
    outcome(
        differing.is_empty(),
        format!("6 commands run twice, {files} files compared, differing: {differing:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("core identity (expanded similarity = direct cosine)", core_identity),
        ("Gram-Schmidt orthogonality residual", gram_schmidt_residual),
        ("rotation closure", rotation_closure),
        ("trend identity", trend_identity),
        ("H1-H4 synthetic reproduction", synthetic_reproduction),
        ("H5 ablation healing and direct/ortho agreement", ablation_healing),
        ("basin recovery", basin_recovery),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        // The identity suite has its own time budget.
        let o = if i == 0 && secs >= 60.0 {
            outcome(false, format!("{} (too slow)", o.detail))
        } else {
            o
        };
        if !o.pass {
            failed += 1;
        }
        println!("{} [{}] {name}: {} ({secs:.2} s)", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
