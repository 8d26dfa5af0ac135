//! Shared domain types: labeled feature points, sample sets, stage roles,
//! voxel volumes and per-model scores.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Spatial position `(x, y, z)` in voxel units.
pub type VoxelIndex = [usize; 3];

/// Which part of the network a feature map was taken from.
///
/// Decoder stages feed the global score, encoder stages feed the boundary
/// score. Ordering is decoder-before-encoder, then by index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "role", content = "index", rename_all = "lowercase")]
pub enum StageRole {
    Decoder(usize),
    Encoder(usize),
}

impl StageRole {
    pub fn index(&self) -> usize {
        match *self {
            StageRole::Decoder(i) | StageRole::Encoder(i) => i,
        }
    }

    pub fn is_decoder(&self) -> bool {
        matches!(self, StageRole::Decoder(_))
    }

    pub fn is_encoder(&self) -> bool {
        matches!(self, StageRole::Encoder(_))
    }

    /// Stable small integer used when deriving per-stage seeds.
    pub(crate) fn tag(&self) -> u64 {
        match *self {
            StageRole::Decoder(i) => (i as u64) << 1,
            StageRole::Encoder(i) => ((i as u64) << 1) | 1,
        }
    }
}

impl fmt::Display for StageRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageRole::Decoder(i) => write!(f, "decoder{i}"),
            StageRole::Encoder(i) => write!(f, "encoder{i}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub features: Vec<f64>,
    pub label: u32,
    pub voxel_index: VoxelIndex,
    pub stage: StageRole,
}

/// An ordered collection of labeled feature points sharing one feature space.
///
/// `SampleSet::new` sorts points by `(stage, voxel_index)` with insertion order
/// breaking remaining ties, so every downstream tie-break is reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub points: Vec<LabeledPoint>,
    pub feature_dim: usize,
    pub num_classes: usize,
}

impl SampleSet {
    pub fn new(mut points: Vec<LabeledPoint>, feature_dim: usize, num_classes: usize) -> Self {
        // stable sort keeps insertion order among equal keys
        points.sort_by_key(|p| (p.stage, p.voxel_index));
        SampleSet {
            points,
            feature_dim,
            num_classes,
        }
    }

    /// Like [`SampleSet::new`] but rejects sets that violate a point invariant.
    pub fn try_new(
        points: Vec<LabeledPoint>,
        feature_dim: usize,
        num_classes: usize,
    ) -> Result<Self, ValidationError> {
        let set = Self::new(points, feature_dim, num_classes);
        validate_sample_set(&set)?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.points.iter().map(|p| p.label)
    }

    /// Number of distinct labels present.
    pub fn distinct_labels(&self) -> usize {
        let mut seen: Vec<u32> = self.labels().collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("sample set declares feature_dim 0")]
    ZeroDimension,
    #[error("sample set declares zero classes")]
    NoClasses,
    #[error("point {index}: feature length {found} does not match feature_dim {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("point {index}: non-finite feature value at component {component}")]
    NonFiniteFeature { index: usize, component: usize },
    #[error("point {index}: label {label} out of range for {num_classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: u32,
        num_classes: usize,
    },
}

/// Checks every point invariant, reporting the first violation.
pub fn validate_sample_set(set: &SampleSet) -> Result<(), ValidationError> {
    if set.feature_dim == 0 {
        return Err(ValidationError::ZeroDimension);
    }
    if set.num_classes == 0 {
        return Err(ValidationError::NoClasses);
    }
    for (index, p) in set.points.iter().enumerate() {
        if p.features.len() != set.feature_dim {
            return Err(ValidationError::DimensionMismatch {
                index,
                expected: set.feature_dim,
                found: p.features.len(),
            });
        }
        if let Some(component) = p.features.iter().position(|v| !v.is_finite()) {
            return Err(ValidationError::NonFiniteFeature { index, component });
        }
        if p.label as usize >= set.num_classes {
            return Err(ValidationError::LabelOutOfRange {
                index,
                label: p.label,
                num_classes: set.num_classes,
            });
        }
    }
    Ok(())
}

/// Dense 3-D label field, row-major with `z` fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVolume {
    pub shape: [usize; 3],
    pub data: Vec<u32>,
}

impl LabelVolume {
    pub fn new(shape: [usize; 3], data: Vec<u32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "label volume size");
        LabelVolume { shape, data }
    }

    pub fn filled(shape: [usize; 3], label: u32) -> Self {
        Self::new(shape, vec![label; shape.iter().product()])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn linear(&self, idx: VoxelIndex) -> usize {
        (idx[0] * self.shape[1] + idx[1]) * self.shape[2] + idx[2]
    }

    #[inline]
    pub fn unravel(&self, linear: usize) -> VoxelIndex {
        let z = linear % self.shape[2];
        let rest = linear / self.shape[2];
        [rest / self.shape[1], rest % self.shape[1], z]
    }

    #[inline]
    pub fn get(&self, idx: VoxelIndex) -> u32 {
        self.data[self.linear(idx)]
    }

    pub fn set(&mut self, idx: VoxelIndex, label: u32) {
        let i = self.linear(idx);
        self.data[i] = label;
    }

    pub fn max_label(&self) -> Option<u32> {
        self.data.iter().copied().max()
    }
}

/// Channels-first feature map, `data[((c * X + x) * Y + y) * Z + z]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    pub channels: usize,
    pub shape: [usize; 3],
    pub data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(channels: usize, shape: [usize; 3], data: Vec<f32>) -> Self {
        assert_eq!(
            channels * shape.iter().product::<usize>(),
            data.len(),
            "feature tensor size"
        );
        FeatureTensor {
            channels,
            shape,
            data,
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Feature vector at a grid position, promoted to `f64`.
    pub fn features_at(&self, idx: VoxelIndex) -> Vec<f64> {
        let plane = self.voxel_count();
        let base = (idx[0] * self.shape[1] + idx[1]) * self.shape[2] + idx[2];
        (0..self.channels)
            .map(|c| f64::from(self.data[c * plane + base]))
            .collect()
    }
}

/// Per-model transferability record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferabilityScore {
    pub model_id: String,
    pub grtd: f64,
    pub lbtc: f64,
    pub alpha: f64,
    pub fused: f64,
}

/// Total order on `f64` used where a deterministic comparison is required.
#[inline]
pub(crate) fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}
