//! On-disk zoo format.
//!
//! A tensor is a raw little-endian blob `<name>.bin` next to a JSON sidecar
//! `<name>.json`:
//!
//! ```json
//! {"shape": [c, x, y, z], "dtype": "f32", "order": "cxyz"}
//! {"shape": [x, y, z], "dtype": "i32", "order": "xyz"}
//! ```
//!
//! Layout is row-major over the listed axes (last axis fastest). Feature maps
//! are `f32` channels-first, label volumes `i32`.
//!
//! The manifest `zoo.json` names the task, its cases (one label volume per
//! case) and, per model, one stage file per `(role, index, case)`:
//!
//! ```json
//! {
//!   "task": {"name": "demo", "num_classes": 2, "cases": ["labels/case0.bin"]},
//!   "models": [
//!     {"id": "m0", "dice": 0.81, "stages": [
//!       {"role": "decoder", "index": 0, "case": 0, "path": "m0/dec0_case0.bin"},
//!       {"role": "encoder", "index": 0, "case": 0, "path": "m0/enc0_case0.bin"}
//!     ]}
//!   ]
//! }
//! ```
//!
//! `case` defaults to 0 and `dice` is optional. Relative paths resolve against
//! the manifest's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{FeatureTensor, LabelVolume, StageRole};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {}: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },
    #[error("duplicate model id {0:?}")]
    DuplicateModelId(String),
    #[error("model {model:?}: {reason}")]
    InvalidModel { model: String, reason: String },
    #[error("shape mismatch: {what} has spatial shape {found:?}, labels have {expected:?}")]
    ShapeMismatch {
        what: String,
        expected: [usize; 3],
        found: [usize; 3],
    },
    #[error("label {label} in {} is out of range for {num_classes} classes", path.display())]
    LabelOutOfRange {
        path: PathBuf,
        label: i64,
        num_classes: usize,
    },
    #[error("task declares {declared} classes but labels span {found}")]
    ClassCountMismatch { declared: usize, found: usize },
    #[error("model {model:?} has no {stage} dump for case {case}")]
    MissingStage {
        model: String,
        stage: StageRole,
        case: usize,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> IngestError {
    IngestError::Malformed {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    I32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub order: String,
}

/// `foo/bar.bin` -> `foo/bar.json`.
pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

fn require_file(path: &Path) -> Result<(), IngestError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(IngestError::MissingFile(path.to_path_buf()))
    }
}

pub fn read_sidecar(bin: &Path) -> Result<Sidecar, IngestError> {
    let path = sidecar_path(bin);
    require_file(&path)?;
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let sc: Sidecar =
        serde_json::from_str(&text).map_err(|e| malformed(&path, e.to_string()))?;
    let ok = matches!(
        (sc.dtype, sc.order.as_str(), sc.shape.len()),
        (DType::F32, "cxyz", 4) | (DType::I32, "xyz", 3)
    );
    if !ok {
        return Err(malformed(
            &path,
            format!(
                "unsupported dtype/order/rank combination {:?}/{}/{}",
                sc.dtype,
                sc.order,
                sc.shape.len()
            ),
        ));
    }
    Ok(sc)
}

fn read_words(bin: &Path, expected: usize) -> Result<Vec<[u8; 4]>, IngestError> {
    require_file(bin)?;
    let bytes = fs::read(bin).map_err(io_err(bin))?;
    if bytes.len() != expected * 4 {
        return Err(malformed(
            bin,
            format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| [c[0], c[1], c[2], c[3]])
        .collect())
}

pub fn read_tensor(bin: &Path) -> Result<FeatureTensor, IngestError> {
    let sc = read_sidecar(bin)?;
    if sc.dtype != DType::F32 {
        return Err(malformed(bin, "feature tensor must be f32 cxyz"));
    }
    let (channels, shape) = (sc.shape[0], [sc.shape[1], sc.shape[2], sc.shape[3]]);
    let n = channels * shape.iter().product::<usize>();
    let data: Vec<f32> = read_words(bin, n)?
        .into_iter()
        .map(f32::from_le_bytes)
        .collect();
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(malformed(bin, format!("non-finite value at element {k}")));
    }
    Ok(FeatureTensor::new(channels, shape, data))
}

/// Reads a label volume; values must lie in `0..num_classes` when given.
pub fn read_labels(bin: &Path, num_classes: Option<usize>) -> Result<LabelVolume, IngestError> {
    let sc = read_sidecar(bin)?;
    if sc.dtype != DType::I32 {
        return Err(malformed(bin, "label volume must be i32 xyz"));
    }
    let shape = [sc.shape[0], sc.shape[1], sc.shape[2]];
    let raw: Vec<i32> = read_words(bin, shape.iter().product())?
        .into_iter()
        .map(i32::from_le_bytes)
        .collect();
    let limit = num_classes.map(|n| n as i64).unwrap_or(i64::from(u32::MAX) + 1);
    let mut data = Vec::with_capacity(raw.len());
    for v in raw {
        if v < 0 || i64::from(v) >= limit {
            return Err(IngestError::LabelOutOfRange {
                path: bin.to_path_buf(),
                label: i64::from(v),
                num_classes: num_classes.unwrap_or(0),
            });
        }
        data.push(v as u32);
    }
    Ok(LabelVolume::new(shape, data))
}

fn write_blob(bin: &Path, sidecar: &Sidecar, words: impl Iterator<Item = [u8; 4]>) -> Result<(), IngestError> {
    if let Some(dir) = bin.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let bytes: Vec<u8> = words.flatten().collect();
    fs::write(bin, bytes).map_err(io_err(bin))?;
    let side = sidecar_path(bin);
    let text = serde_json::to_string(sidecar).expect("sidecar serializes");
    fs::write(&side, text + "\n").map_err(io_err(&side))
}

pub fn write_tensor(bin: &Path, t: &FeatureTensor) -> Result<(), IngestError> {
    let sc = Sidecar {
        shape: vec![t.channels, t.shape[0], t.shape[1], t.shape[2]],
        dtype: DType::F32,
        order: "cxyz".into(),
    };
    write_blob(bin, &sc, t.data.iter().map(|v| v.to_le_bytes()))
}

pub fn write_labels(bin: &Path, v: &LabelVolume) -> Result<(), IngestError> {
    let sc = Sidecar {
        shape: v.shape.to_vec(),
        dtype: DType::I32,
        order: "xyz".into(),
    };
    write_blob(bin, &sc, v.data.iter().map(|&y| (y as i32).to_le_bytes()))
}

/// Spatial grids are compatible when every axis pair is related by an
/// integer factor (either grid may be the coarser one).
pub fn grids_compatible(labels: [usize; 3], stage: [usize; 3]) -> bool {
    labels.iter().zip(&stage).all(|(&a, &b)| {
        a > 0 && b > 0 && (a % b == 0 || b % a == 0)
    })
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub task: TaskFile,
    pub models: Vec<ModelFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub name: String,
    pub num_classes: usize,
    pub cases: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dice: Option<f64>,
    pub stages: Vec<StageFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageFile {
    pub role: RoleName,
    pub index: usize,
    #[serde(default)]
    pub case: usize,
    pub path: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleName {
    Decoder,
    Encoder,
}

impl StageFile {
    pub fn stage(&self) -> StageRole {
        match self.role {
            RoleName::Decoder => StageRole::Decoder(self.index),
            RoleName::Encoder => StageRole::Encoder(self.index),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskDescriptor {
    pub name: String,
    pub num_classes: usize,
    pub label_volume_paths: Vec<PathBuf>,
}

impl TaskDescriptor {
    pub fn num_cases(&self) -> usize {
        self.label_volume_paths.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageDumpRef {
    pub stage: StageRole,
    pub case: usize,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelEntry {
    pub model_id: String,
    pub stage_dumps: Vec<StageDumpRef>,
    pub ground_truth_performance: Option<f64>,
}

impl ModelEntry {
    /// Distinct stages, decoder stages first.
    pub fn stages(&self) -> Vec<StageRole> {
        let set: BTreeSet<StageRole> = self.stage_dumps.iter().map(|s| s.stage).collect();
        set.into_iter().collect()
    }

    pub fn dump_path(&self, stage: StageRole, case: usize) -> Option<&Path> {
        self.stage_dumps
            .iter()
            .find(|s| s.stage == stage && s.case == case)
            .map(|s| s.path.as_path())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZooManifest {
    pub models: Vec<ModelEntry>,
    pub task: TaskDescriptor,
}

impl ZooManifest {
    pub fn ground_truth(&self) -> BTreeMap<String, f64> {
        self.models
            .iter()
            .filter_map(|m| m.ground_truth_performance.map(|d| (m.model_id.clone(), d)))
            .collect()
    }
}

/// A stage's feature map together with the label volume of its case.
/// `tensor` may live on a coarser or finer grid than `labels`.
#[derive(Clone, Debug, PartialEq)]
pub struct StageFeatureDump {
    pub tensor: FeatureTensor,
    pub labels: LabelVolume,
    pub stage: StageRole,
    pub num_classes: usize,
}

impl StageFeatureDump {
    pub fn feature_dim(&self) -> usize {
        self.tensor.channels
    }
}

/// Parses and eagerly validates a manifest: ids, stage coverage, file
/// existence, sidecar shapes and label ranges.
pub fn load_manifest(path: &Path) -> Result<ZooManifest, IngestError> {
    require_file(path)?;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: ManifestFile =
        serde_json::from_str(&text).map_err(|e| malformed(path, e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let task_file = &file.task;
    if task_file.num_classes == 0 {
        return Err(malformed(path, "task.num_classes must be >= 1"));
    }
    if task_file.cases.is_empty() {
        return Err(malformed(path, "task.cases must list at least one label volume"));
    }
    let label_paths: Vec<PathBuf> = task_file.cases.iter().map(|c| resolve(c)).collect();

    // labels: existence, range, and class count
    let mut label_shapes = Vec::with_capacity(label_paths.len());
    let mut max_label = 0u32;
    for lp in &label_paths {
        require_file(lp)?;
        let vol = read_labels(lp, Some(task_file.num_classes))?;
        max_label = max_label.max(vol.max_label().unwrap_or(0));
        label_shapes.push(vol.shape);
    }
    if max_label as usize + 1 != task_file.num_classes {
        return Err(IngestError::ClassCountMismatch {
            declared: task_file.num_classes,
            found: max_label as usize + 1,
        });
    }

    let mut seen = BTreeSet::new();
    let mut models = Vec::with_capacity(file.models.len());
    for m in &file.models {
        if !seen.insert(m.id.clone()) {
            return Err(IngestError::DuplicateModelId(m.id.clone()));
        }
        let invalid = |reason: String| IngestError::InvalidModel {
            model: m.id.clone(),
            reason,
        };
        if let Some(d) = m.dice {
            if !(0.0..=1.0).contains(&d) {
                return Err(invalid(format!("dice {d} outside [0, 1]")));
            }
        }
        let mut dumps = Vec::with_capacity(m.stages.len());
        let mut keys = BTreeSet::new();
        for s in &m.stages {
            if s.case >= label_paths.len() {
                return Err(invalid(format!("stage refers to case {} of {}", s.case, label_paths.len())));
            }
            if !keys.insert((s.stage(), s.case)) {
                return Err(invalid(format!("{} listed twice for case {}", s.stage(), s.case)));
            }
            let p = resolve(&s.path);
            require_file(&p)?;
            let sc = read_sidecar(&p)?;
            if sc.dtype != DType::F32 {
                return Err(malformed(&p, "feature tensor must be f32 cxyz"));
            }
            let grid = [sc.shape[1], sc.shape[2], sc.shape[3]];
            let expected = label_shapes[s.case];
            if !grids_compatible(expected, grid) {
                return Err(IngestError::ShapeMismatch {
                    what: p.display().to_string(),
                    expected,
                    found: grid,
                });
            }
            dumps.push(StageDumpRef {
                stage: s.stage(),
                case: s.case,
                path: p,
            });
        }
        let entry = ModelEntry {
            model_id: m.id.clone(),
            stage_dumps: dumps,
            ground_truth_performance: m.dice,
        };
        let stages = entry.stages();
        if !stages.iter().any(StageRole::is_decoder) || !stages.iter().any(StageRole::is_encoder) {
            return Err(invalid("needs at least one decoder and one encoder stage".into()));
        }
        for &stage in &stages {
            for case in 0..label_paths.len() {
                if entry.dump_path(stage, case).is_none() {
                    return Err(IngestError::MissingStage {
                        model: m.id.clone(),
                        stage,
                        case,
                    });
                }
            }
        }
        models.push(entry);
    }

    Ok(ZooManifest {
        models,
        task: TaskDescriptor {
            name: task_file.name.clone(),
            num_classes: task_file.num_classes,
            label_volume_paths: label_paths,
        },
    })
}

pub fn load_case_labels(task: &TaskDescriptor, case: usize) -> Result<LabelVolume, IngestError> {
    read_labels(&task.label_volume_paths[case], Some(task.num_classes))
}

/// Loads one stage of one case, re-checking shapes and label range.
pub fn load_stage_dump(
    entry: &ModelEntry,
    stage: StageRole,
    case: usize,
    task: &TaskDescriptor,
) -> Result<StageFeatureDump, IngestError> {
    let path = entry
        .dump_path(stage, case)
        .ok_or_else(|| IngestError::MissingStage {
            model: entry.model_id.clone(),
            stage,
            case,
        })?;
    let labels = load_case_labels(task, case)?;
    let tensor = read_tensor(path)?;
    assemble_dump(tensor, labels, stage, task.num_classes, &path.display().to_string())
}

/// Pairs a tensor with its labels after checking grid compatibility and
/// label range.
pub fn assemble_dump(
    tensor: FeatureTensor,
    labels: LabelVolume,
    stage: StageRole,
    num_classes: usize,
    what: &str,
) -> Result<StageFeatureDump, IngestError> {
    if !grids_compatible(labels.shape, tensor.shape) {
        return Err(IngestError::ShapeMismatch {
            what: what.to_string(),
            expected: labels.shape,
            found: tensor.shape,
        });
    }
    if let Some(max) = labels.max_label() {
        if max as usize >= num_classes {
            return Err(IngestError::LabelOutOfRange {
                path: PathBuf::from(what),
                label: i64::from(max),
                num_classes,
            });
        }
    }
    Ok(StageFeatureDump {
        tensor,
        labels,
        stage,
        num_classes,
    })
}

pub fn write_manifest(path: &Path, manifest: &ManifestFile) -> Result<(), IngestError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}
