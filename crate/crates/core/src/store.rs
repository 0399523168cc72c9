//! On-disk activation store.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/blobs/{level}_{layer}.f32              n_samples x d_model, row-major
//! <dir>/patches/{level}_{layer}_{mode}.f32     one row per label value
//! <dir>/patches/index.json                     label -> row offset
//! <dir>/norm_weights.f32                       optional, d_model affine norm weights
//! ```
//!
//! Floats are IEEE-754 binary32 little-endian. JSON integers are decimal.
//! Every file is replaced through write-temp-then-rename.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::types::{Attribute, Labels, LayerId, Level, Modality};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_DIR: &str = "blobs";
pub const PATCH_DIR: &str = "patches";
pub const PATCH_INDEX_FILE: &str = "index.json";
pub const NORM_WEIGHTS_FILE: &str = "norm_weights.f32";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sample_id: u64,
    pub value: u32,
    pub modality: Modality,
    pub labels: Labels,
    pub knowledge_pass: bool,
}

impl SampleMeta {
    pub fn new(sample_id: u64, value: u32, modality: Modality) -> Self {
        SampleMeta {
            sample_id,
            value,
            modality,
            labels: Labels::for_value(value),
            knowledge_pass: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model_id: String,
    pub d_model: usize,
    pub levels: Vec<Level>,
    pub layers: Vec<LayerId>,
    pub samples: Vec<SampleMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_point: Option<String>,
    /// Keys written by other producers (e.g. `position`, filtering rule) are
    /// carried through unchanged.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(model_id: impl Into<String>, d_model: usize, samples: Vec<SampleMeta>) -> Self {
        Manifest {
            format_version: FORMAT_VERSION,
            model_id: model_id.into(),
            d_model,
            levels: Vec::new(),
            layers: Vec::new(),
            samples,
            capture_point: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn labels(&self) -> Vec<Labels> {
        self.samples.iter().map(|s| s.labels).collect()
    }

    /// Row indices whose `knowledge_pass` flag is set.
    pub fn knowledge_rows(&self) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.knowledge_pass)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                supported: FORMAT_VERSION,
            });
        }
        if self.d_model == 0 {
            return Err(Error::Format("manifest d_model must be positive".into()));
        }
        let mut ids: Vec<u64> = self.samples.iter().map(|s| s.sample_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Format("manifest sample_id values are not unique".into()));
        }
        Ok(())
    }

    fn register(&mut self, level: Level, layer: LayerId) {
        if !self.levels.contains(&level) {
            self.levels.push(level);
            self.levels.sort();
        }
        if !self.layers.contains(&layer) {
            self.layers.push(layer);
            self.layers.sort();
        }
    }
}

/// One `(level, layer)` capture: row `i` belongs to `Manifest::samples[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    pub level: Level,
    pub layer: LayerId,
    pub data: Array2<f32>,
}

impl ActivationSet {
    pub fn new(level: Level, layer: LayerId, data: Array2<f32>) -> Self {
        ActivationSet { level, layer, data }
    }

    pub fn from_f64(level: Level, layer: LayerId, data: &Array2<f64>) -> Self {
        ActivationSet::new(level, layer, data.mapv(|v| v as f32))
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn d_model(&self) -> usize {
        self.data.ncols()
    }

    /// Analysis works in 64-bit.
    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }
}

pub fn blob_file_name(level: Level, layer: LayerId) -> String {
    format!("{level}_{layer}.f32")
}

pub fn blob_path(dir: &Path, level: Level, layer: LayerId) -> PathBuf {
    dir.join(BLOB_DIR).join(blob_file_name(level, layer))
}

fn f32_le_bytes<'a>(values: impl Iterator<Item = &'a f32>) -> Vec<u8> {
    values.flat_map(|v| v.to_le_bytes()).collect()
}

fn f32_from_le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path.display().to_string())
        } else {
            Error::io(path, e)
        }
    })
}

/// Reads and version-checks `manifest.json` before decoding the rest.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let raw: serde_json::Value = fsutil::read_json(&path)?;
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Format(format!("{}: missing integer format_version", path.display())))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::Version {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported: FORMAT_VERSION,
        });
    }
    let manifest: Manifest =
        serde_json::from_value(raw).map_err(|source| Error::Json { path: path.clone(), source })?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    manifest.validate()?;
    fsutil::write_json_atomic(&dir.join(MANIFEST_FILE), manifest)
}

/// Writes one blob and registers its level/layer in the manifest.
///
/// If a manifest already exists it must describe the same model, width and
/// sample order; level/layer lists are merged.
pub fn write_set(set: &ActivationSet, manifest: &Manifest, dir: &Path) -> Result<()> {
    manifest.validate()?;
    if set.d_model() != manifest.d_model {
        return Err(Error::Format(format!(
            "set has d_model {} but manifest declares {}",
            set.d_model(),
            manifest.d_model
        )));
    }
    if set.n_samples() != manifest.n_samples() {
        return Err(Error::Format(format!(
            "set has {} rows but manifest lists {} samples",
            set.n_samples(),
            manifest.n_samples()
        )));
    }

    let mut merged = match read_manifest(dir) {
        Ok(existing) => {
            if existing.d_model != manifest.d_model
                || existing.samples != manifest.samples
                || existing.model_id != manifest.model_id
            {
                return Err(Error::Format(format!(
                    "{} describes a different model, width or sample order",
                    dir.join(MANIFEST_FILE).display()
                )));
            }
            let mut m = manifest.clone();
            for &l in &existing.levels {
                if !m.levels.contains(&l) {
                    m.levels.push(l);
                }
            }
            for &l in &existing.layers {
                if !m.layers.contains(&l) {
                    m.layers.push(l);
                }
            }
            m.levels.sort();
            m.layers.sort();
            m
        }
        Err(Error::NotFound(_)) => manifest.clone(),
        Err(e) => return Err(e),
    };
    merged.register(set.level, set.layer);

    let bytes = match set.data.as_slice() {
        Some(s) => f32_le_bytes(s.iter()),
        None => f32_le_bytes(set.data.iter()),
    };
    fsutil::write_atomic(&blob_path(dir, set.level, set.layer), &bytes)?;
    write_manifest(dir, &merged)
}

/// Loads and validates one blob. Knowledge filtering is left to the caller.
pub fn read_set(dir: &Path, level: Level, layer: LayerId) -> Result<ActivationSet> {
    let manifest = read_manifest(dir)?;
    read_set_with(dir, &manifest, level, layer)
}

pub fn read_set_with(dir: &Path, manifest: &Manifest, level: Level, layer: LayerId) -> Result<ActivationSet> {
    let path = blob_path(dir, level, layer);
    let bytes = read_file(&path)?;
    let (n, d) = (manifest.n_samples(), manifest.d_model);
    let expected = n * d * 4;
    if bytes.len() != expected {
        return Err(Error::Integrity {
            path,
            detail: format!("blob has {} bytes, expected {n} x {d} x 4 = {expected}", bytes.len()),
        });
    }
    let values = f32_from_le(&bytes);
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Integrity {
            path,
            detail: format!("non-finite value {} at row {}, column {}", values[pos], pos / d, pos % d),
        });
    }
    let data = Array2::from_shape_vec((n, d), values).expect("length checked above");
    Ok(ActivationSet::new(level, layer, data))
}

pub fn has_set(dir: &Path, level: Level, layer: LayerId) -> bool {
    blob_path(dir, level, layer).is_file()
}

/// Block-index layers (FINAL excluded) for which `level` has a blob, ascending.
pub fn indexed_layers(dir: &Path, manifest: &Manifest, level: Level) -> Vec<u32> {
    manifest
        .layers
        .iter()
        .filter_map(|l| l.index())
        .filter(|&i| has_set(dir, level, LayerId::Index(i)))
        .collect()
}

/// Baseline (`L1`) and task activations for one layer as 64-bit matrices,
/// optionally restricted to knowledge-filtered rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPair {
    pub base: Array2<f64>,
    pub task: Array2<f64>,
    pub labels: Vec<Labels>,
    /// Manifest row index of every loaded row.
    pub rows: Vec<usize>,
}

pub fn load_pair(
    dir: &Path,
    manifest: &Manifest,
    level: Level,
    layer: LayerId,
    knowledge_filter: bool,
) -> Result<LoadedPair> {
    if !has_set(dir, Level::L1, layer) {
        return Err(Error::MissingData(format!(
            "baseline level L1 is required at layer {layer} but {} is absent",
            blob_path(dir, Level::L1, layer).display()
        )));
    }
    let base = read_set_with(dir, manifest, Level::L1, layer)?.to_f64();
    let task = read_set_with(dir, manifest, level, layer)?.to_f64();
    let rows: Vec<usize> = if knowledge_filter {
        manifest.knowledge_rows()
    } else {
        (0..manifest.n_samples()).collect()
    };
    let labels = rows.iter().map(|&i| manifest.samples[i].labels).collect();
    if rows.len() == manifest.n_samples() {
        return Ok(LoadedPair { base, task, labels, rows });
    }
    Ok(LoadedPair {
        base: base.select(Axis(0), &rows),
        task: task.select(Axis(0), &rows),
        labels,
        rows,
    })
}

pub fn write_norm_weights(dir: &Path, weights: &[f32]) -> Result<()> {
    fsutil::write_atomic(&dir.join(NORM_WEIGHTS_FILE), &f32_le_bytes(weights.iter()))
}

pub fn read_norm_weights(dir: &Path, d_model: usize) -> Result<Vec<f64>> {
    let path = dir.join(NORM_WEIGHTS_FILE);
    let bytes = read_file(&path)?;
    if bytes.len() != d_model * 4 {
        return Err(Error::Integrity {
            path,
            detail: format!("expected {} bytes for d_model {d_model}, found {}", d_model * 4, bytes.len()),
        });
    }
    let values = f32_from_le(&bytes);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integrity {
            path,
            detail: "non-finite norm weight".into(),
        });
    }
    Ok(values.into_iter().map(f64::from).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchMode {
    Direct,
    Ortho,
}

impl PatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PatchMode::Direct => "direct",
            PatchMode::Ortho => "ortho",
        }
    }
}

impl fmt::Display for PatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "direct" => Ok(PatchMode::Direct),
            "ortho" => Ok(PatchMode::Ortho),
            other => Err(Error::InvalidArgument(format!("unknown patch mode {other:?}"))),
        }
    }
}

/// Label key used in patch files for a binary attribute value.
pub fn label_key(value: bool) -> &'static str {
    if value {
        "true"
    } else {
        "false"
    }
}

/// Per-label patch vectors for one `(level, layer, mode)`. For `ortho` the
/// consumer projects each vector onto the normal plane of the live state.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFile {
    pub level: Level,
    pub layer: LayerId,
    pub mode: PatchMode,
    pub attribute: Attribute,
    pub entries: BTreeMap<String, Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchIndexEntry {
    pub level: Level,
    pub layer: LayerId,
    pub mode: PatchMode,
    pub attribute: Attribute,
    pub file: String,
    pub rows: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchIndex {
    pub format_version: u32,
    pub d_model: usize,
    pub patches: Vec<PatchIndexEntry>,
}

pub fn patch_file_name(level: Level, layer: LayerId, mode: PatchMode) -> String {
    format!("{level}_{layer}_{mode}.f32")
}

pub fn read_patch_index(dir: &Path) -> Result<PatchIndex> {
    let index: PatchIndex = fsutil::read_json(&dir.join(PATCH_DIR).join(PATCH_INDEX_FILE))?;
    if index.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: index.format_version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(index)
}

pub fn write_patch(dir: &Path, patch: &PatchFile) -> Result<()> {
    if patch.entries.is_empty() {
        return Err(Error::InvalidArgument("patch has no label vectors".into()));
    }
    let d_model = match read_manifest(dir) {
        Ok(m) => m.d_model,
        Err(Error::NotFound(_)) => patch.entries.values().next().map_or(0, Vec::len),
        Err(e) => return Err(e),
    };
    if d_model == 0 {
        return Err(Error::Format("patch vectors are empty".into()));
    }
    if let Some((label, v)) = patch.entries.iter().find(|(_, v)| v.len() != d_model) {
        return Err(Error::Format(format!(
            "patch vector for label {label:?} has length {} but d_model is {d_model}",
            v.len()
        )));
    }
    if let Some((label, _)) = patch.entries.iter().find(|(_, v)| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::Format(format!("patch vector for label {label:?} is not finite")));
    }

    let patch_dir = dir.join(PATCH_DIR);
    let mut index = match read_patch_index(dir) {
        Ok(idx) if idx.d_model == d_model => idx,
        Ok(idx) => {
            return Err(Error::Format(format!(
                "patch index declares d_model {} but vectors have {d_model}",
                idx.d_model
            )))
        }
        Err(Error::NotFound(_)) => PatchIndex {
            format_version: FORMAT_VERSION,
            d_model,
            patches: Vec::new(),
        },
        Err(e) => return Err(e),
    };

    let file = patch_file_name(patch.level, patch.layer, patch.mode);
    let bytes = f32_le_bytes(patch.entries.values().flatten());
    fsutil::write_atomic(&patch_dir.join(&file), &bytes)?;

    let entry = PatchIndexEntry {
        level: patch.level,
        layer: patch.layer,
        mode: patch.mode,
        attribute: patch.attribute,
        file,
        rows: patch.entries.keys().enumerate().map(|(i, k)| (k.clone(), i)).collect(),
    };
    index
        .patches
        .retain(|e| (e.level, e.layer, e.mode) != (entry.level, entry.layer, entry.mode));
    index.patches.push(entry);
    index.patches.sort_by_key(|e| (e.level, e.layer, e.mode));
    fsutil::write_json_atomic(&patch_dir.join(PATCH_INDEX_FILE), &index)
}

pub fn read_patch(dir: &Path, level: Level, layer: LayerId, mode: PatchMode) -> Result<PatchFile> {
    let index = read_patch_index(dir)?;
    let entry = index
        .patches
        .iter()
        .find(|e| e.level == level && e.layer == layer && e.mode == mode)
        .ok_or_else(|| Error::NotFound(format!("patch {level}/{layer}/{mode} in {}", dir.display())))?;
    let path = dir.join(PATCH_DIR).join(&entry.file);
    let bytes = read_file(&path)?;
    let d = index.d_model;
    if bytes.len() != entry.rows.len() * d * 4 {
        return Err(Error::Integrity {
            path,
            detail: format!("expected {} rows of {d} floats", entry.rows.len()),
        });
    }
    let values = f32_from_le(&bytes);
    let mut entries = BTreeMap::new();
    for (label, &row) in &entry.rows {
        if row >= entry.rows.len() {
            return Err(Error::Integrity {
                path,
                detail: format!("row offset {row} for label {label:?} out of range"),
            });
        }
        entries.insert(label.clone(), values[row * d..(row + 1) * d].to_vec());
    }
    Ok(PatchFile {
        level,
        layer,
        mode,
        attribute: entry.attribute,
        entries,
    })
}

/// Plain numeric CSV, one matrix row per line, shortest round-trip formatting.
pub fn write_matrix_csv(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in matrix.rows() {
        wtr.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|source| Error::Csv { path: path.to_path_buf(), source })?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    fsutil::write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prng::RowStream;

    fn samples(n: usize) -> Vec<SampleMeta> {
        (0..n).map(|i| SampleMeta::new(i as u64, i as u32 + 1, Modality::Arabic)).collect()
    }

    #[test]
    fn small_blob_round_trips_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let data = Array2::from_shape_vec((2, 4), vec![1.0f32, -2.5, 3.25, 0.0, 1e-30, -0.0, 7.0, 1e30]).unwrap();
        let set = ActivationSet::new(Level::L1, LayerId::Final, data.clone());
        write_set(&set, &Manifest::new("test", 4, samples(2)), dir.path()).unwrap();

        let bytes = std::fs::read(blob_path(dir.path(), Level::L1, LayerId::Final)).unwrap();
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[4..8], &(-2.5f32).to_le_bytes());

        let back = read_set(dir.path(), Level::L1, LayerId::Final).unwrap();
        for (a, b) in back.data.iter().zip(data.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let m = read_manifest(dir.path()).unwrap();
        assert_eq!(m.levels, vec![Level::L1]);
        assert_eq!(m.layers, vec![LayerId::Final]);
    }

    #[test]
    fn empty_sample_list() {
        let dir = tempfile::tempdir().unwrap();
        let set = ActivationSet::new(Level::L3, LayerId::Index(0), Array2::zeros((0, 8)));
        write_set(&set, &Manifest::new("test", 8, vec![]), dir.path()).unwrap();
        assert_eq!(std::fs::metadata(blob_path(dir.path(), Level::L3, LayerId::Index(0))).unwrap().len(), 0);
        let back = read_set(dir.path(), Level::L3, LayerId::Index(0)).unwrap();
        assert_eq!(back.data.dim(), (0, 8));
    }

    #[test]
    fn large_random_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let (n, d) = (100, 3584);
        let mut values = Vec::with_capacity(n * d);
        for row in 0..n {
            let mut s = RowStream::new(11, 0, row as u64);
            values.extend((0..d).map(|_| (s.normal() * 3.0) as f32));
        }
        let data = Array2::from_shape_vec((n, d), values).unwrap();
        let set = ActivationSet::new(Level::L4, LayerId::Index(27), data.clone());
        write_set(&set, &Manifest::new("test", d, samples(n)), dir.path()).unwrap();
        let back = read_set(dir.path(), Level::L4, LayerId::Index(27)).unwrap();
        assert!(back.data.iter().zip(data.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn dimension_mismatch_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let set = ActivationSet::new(Level::L1, LayerId::Final, Array2::zeros((3, 4)));
        let err = write_set(&set, &Manifest::new("test", 5, samples(3)), dir.path()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        let err = write_set(&set, &Manifest::new("test", 4, samples(2)), dir.path()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn conflicting_manifest_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let set = ActivationSet::new(Level::L1, LayerId::Final, Array2::zeros((3, 4)));
        write_set(&set, &Manifest::new("test", 4, samples(3)), dir.path()).unwrap();
        let mut reordered = samples(3);
        reordered.swap(0, 1);
        let set2 = ActivationSet::new(Level::L2, LayerId::Final, Array2::zeros((3, 4)));
        assert!(write_set(&set2, &Manifest::new("test", 4, reordered), dir.path()).is_err());
    }

    #[test]
    fn truncated_blob_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let set = ActivationSet::new(Level::L1, LayerId::Final, Array2::ones((2, 4)));
        write_set(&set, &Manifest::new("test", 4, samples(2)), dir.path()).unwrap();
        let path = blob_path(dir.path(), Level::L1, LayerId::Final);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..30]).unwrap();
        assert!(matches!(
            read_set(dir.path(), Level::L1, LayerId::Final),
            Err(Error::Integrity { .. })
        ));
    }

    #[test]
    fn nan_is_reported_with_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = Array2::<f32>::ones((3, 4));
        data[[2, 1]] = f32::NAN;
        let set = ActivationSet::new(Level::L1, LayerId::Final, data);
        write_set(&set, &Manifest::new("test", 4, samples(3)), dir.path()).unwrap();
        match read_set(dir.path(), Level::L1, LayerId::Final) {
            Err(Error::Integrity { detail, .. }) => assert!(detail.contains("row 2"), "{detail}"),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn missing_blob_and_unknown_version() {
        let dir = tempfile::tempdir().unwrap();
        let set = ActivationSet::new(Level::L1, LayerId::Final, Array2::ones((1, 4)));
        write_set(&set, &Manifest::new("test", 4, samples(1)), dir.path()).unwrap();
        assert!(matches!(
            read_set(dir.path(), Level::L2, LayerId::Final),
            Err(Error::NotFound(_))
        ));

        let path = dir.path().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            read_set(dir.path(), Level::L1, LayerId::Final),
            Err(Error::Version { found: 9, .. })
        ));
    }

    #[test]
    fn extra_manifest_keys_survive() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new("model-a", 4, samples(1));
        m.capture_point = Some("post_block".into());
        m.extra.insert("position".into(), serde_json::json!("last"));
        let set = ActivationSet::new(Level::L1, LayerId::Final, Array2::ones((1, 4)));
        write_set(&set, &m, dir.path()).unwrap();
        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(back.capture_point.as_deref(), Some("post_block"));
        assert_eq!(back.extra["position"], serde_json::json!("last"));
    }

    #[test]
    fn concurrent_readers_agree() {
        let dir = tempfile::tempdir().unwrap();
        let data = Array2::from_shape_fn((20, 16), |(i, j)| (i * 16 + j) as f32 * 0.5);
        let set = ActivationSet::new(Level::L2, LayerId::Final, data);
        write_set(&set, &Manifest::new("test", 16, samples(20)), dir.path()).unwrap();
        let results: Vec<ActivationSet> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8)
                .map(|_| s.spawn(|| read_set(dir.path(), Level::L2, LayerId::Final).unwrap()))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert!(results.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn patch_round_trip_and_index() {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = BTreeMap::new();
        entries.insert("true".to_string(), vec![1.0f32, 2.0, 3.0]);
        entries.insert("false".to_string(), vec![-1.0f32, -2.0, -3.0]);
        let patch = PatchFile {
            level: Level::L3,
            layer: LayerId::Final,
            mode: PatchMode::Direct,
            attribute: Attribute::IsEven,
            entries,
        };
        write_patch(dir.path(), &patch).unwrap();
        assert_eq!(read_patch(dir.path(), Level::L3, LayerId::Final, PatchMode::Direct).unwrap(), patch);
        assert!(dir.path().join("patches/L3_FINAL_direct.f32").is_file());
        let index = read_patch_index(dir.path()).unwrap();
        assert_eq!(index.patches[0].rows["false"], 0);
        assert_eq!(index.patches[0].rows["true"], 1);

        let mut ortho = patch.clone();
        ortho.mode = PatchMode::Ortho;
        write_patch(dir.path(), &ortho).unwrap();
        write_patch(dir.path(), &patch).unwrap();
        assert_eq!(read_patch_index(dir.path()).unwrap().patches.len(), 2);
    }

    #[test]
    fn bad_patches_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let empty = PatchFile {
            level: Level::L3,
            layer: LayerId::Final,
            mode: PatchMode::Direct,
            attribute: Attribute::IsEven,
            entries: BTreeMap::new(),
        };
        assert!(matches!(write_patch(dir.path(), &empty), Err(Error::InvalidArgument(_))));

        let set = ActivationSet::new(Level::L1, LayerId::Final, Array2::ones((1, 4)));
        write_set(&set, &Manifest::new("test", 4, samples(1)), dir.path()).unwrap();
        let mut wrong = empty.clone();
        wrong.entries.insert("true".into(), vec![0.0; 3]);
        assert!(matches!(write_patch(dir.path(), &wrong), Err(Error::Format(_))));
    }

    #[test]
    fn norm_weights_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        write_norm_weights(dir.path(), &[0.5, 1.5, 2.0]).unwrap();
        assert_eq!(read_norm_weights(dir.path(), 3).unwrap(), vec![0.5, 1.5, 2.0]);
        assert!(read_norm_weights(dir.path(), 4).is_err());
    }
}
