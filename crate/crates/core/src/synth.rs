//! Synthetic model zoos with a known quality ordering.
//!
//! A task is a cubic label volume of spherical components. A model's
//! features at a voxel are its class centroid plus isotropic Gaussian noise;
//! at boundary voxels the feature may instead be drawn around a neighbouring
//! class's centroid ("mixing").
//!
//! Per model with quality `q`:
//!
//! ```text
//! sigma = noise_sigma * (1 - q) * global_factor + sigma_min
//! p_mix = mixing * (1 - q) * local_factor
//! dice  = 0.5 + 0.4 * q
//! ```
//!
//! The factors are drawn per model from `U(nuisance_floor, 1)` on one axis and
//! fixed to 1 on the other: Fragmented tasks perturb the global axis,
//! Structured tasks the local one. Ground truth therefore follows boundary
//! fidelity exactly on lesion-like tasks and cluster tightness exactly on
//! organ-like tasks.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, IngestError, ManifestFile, ModelFile, RoleName, StageFeatureDump, StageFile, TaskFile};
use crate::lbtc::{extract_boundary_anchors, Connectivity};
use crate::sampling::{derive_seed, seeded_rng};
use crate::types::{FeatureTensor, LabelVolume, StageRole};

const TAG_TASK: u64 = 0x7461_736b;
const TAG_ZOO: u64 = 0x007a_6f6f;
const TAG_FEATURES: u64 = 0x6665_6174;
const MAX_PLACEMENT_ATTEMPTS: usize = 20_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("volume size {0} is too small (need >= 8 and room for the largest component)")]
    DegenerateVolume(usize),
    #[error("invalid regime: {0}")]
    InvalidRegime(String),
    #[error("could not place {wanted} disjoint components (placed {placed})")]
    Placement { wanted: usize, placed: usize },
    #[error("zoo needs at least 2 models, got {0}")]
    TooFewModels(usize),
    #[error("zoo needs at least 1 case")]
    NoCases,
    #[error(transparent)]
    Io(#[from] IngestError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeKind {
    Fragmented,
    Structured,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthRegime {
    pub kind: RegimeKind,
    pub num_classes: u32,
    /// Number of foreground spheres (lesions or organs).
    pub component_count: usize,
    pub radius_min: usize,
    pub radius_max: usize,
    pub noise_sigma: f64,
    pub sigma_min: f64,
    /// Distance between any two class centroids.
    pub separation: f64,
    pub mixing: f64,
    pub nuisance_floor: f64,
    pub volume_size: usize,
    pub feature_dim: usize,
}

impl SynthRegime {
    pub fn fragmented() -> Self {
        SynthRegime {
            kind: RegimeKind::Fragmented,
            num_classes: 2,
            component_count: 16,
            radius_min: 1,
            radius_max: 2,
            noise_sigma: 1.0,
            sigma_min: 0.05,
            separation: 8.0,
            mixing: 0.5,
            nuisance_floor: 0.2,
            volume_size: 32,
            feature_dim: 16,
        }
    }

    pub fn structured() -> Self {
        SynthRegime {
            kind: RegimeKind::Structured,
            num_classes: 4,
            component_count: 3,
            radius_min: 6,
            radius_max: 8,
            ..Self::fragmented()
        }
    }

    pub fn for_kind(kind: RegimeKind) -> Self {
        match kind {
            RegimeKind::Fragmented => Self::fragmented(),
            RegimeKind::Structured => Self::structured(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidRegime(m.to_string()));
        if self.volume_size < 8 || 2 * self.radius_max + 3 > self.volume_size {
            return Err(SynthError::DegenerateVolume(self.volume_size));
        }
        if self.num_classes < 2 {
            return bad("num_classes must be >= 2");
        }
        if self.num_classes as usize > self.feature_dim {
            return bad("num_classes must not exceed feature_dim");
        }
        if self.component_count == 0 {
            return bad("component_count must be >= 1");
        }
        if self.radius_min == 0 || self.radius_max < self.radius_min {
            return bad("need 1 <= radius_min <= radius_max");
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.noise_sigma) || !finite_nonneg(self.sigma_min) {
            return bad("noise parameters must be finite and >= 0");
        }
        if !(self.separation.is_finite() && self.separation > 0.0) {
            return bad("separation must be > 0");
        }
        if !(0.0..=1.0).contains(&self.mixing) || !(0.0..=1.0).contains(&self.nuisance_floor) {
            return bad("mixing and nuisance_floor must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthModelSpec {
    pub model_id: String,
    pub quality: f64,
    pub global_factor: f64,
    pub local_factor: f64,
}

impl SynthModelSpec {
    pub fn ground_truth(&self) -> f64 {
        0.5 + 0.4 * self.quality
    }

    pub fn sigma(&self, regime: &SynthRegime) -> f64 {
        regime.noise_sigma * (1.0 - self.quality) * self.global_factor + regime.sigma_min
    }

    pub fn mixing_probability(&self, regime: &SynthRegime) -> f64 {
        regime.mixing * (1.0 - self.quality) * self.local_factor
    }
}

/// Places the regime's spheres in a cubic volume. Components never touch,
/// even diagonally; component `k` gets class `1 + k mod (|C| - 1)`.
pub fn generate_task(regime: &SynthRegime, seed: u64) -> Result<LabelVolume, SynthError> {
    regime.validate()?;
    let s = regime.volume_size;
    let mut rng = seeded_rng(derive_seed(seed, &[TAG_TASK]));
    let mut placed: Vec<([usize; 3], usize)> = Vec::with_capacity(regime.component_count);
    let mut attempts = 0;
    while placed.len() < regime.component_count {
        attempts += 1;
        if attempts > MAX_PLACEMENT_ATTEMPTS {
            return Err(SynthError::Placement {
                wanted: regime.component_count,
                placed: placed.len(),
            });
        }
        let r = rng.random_range(regime.radius_min..=regime.radius_max);
        let c = [0; 3].map(|_| rng.random_range(r + 1..s - r - 1));
        let clear = placed.iter().all(|&(o, ro)| {
            let d2: usize = (0..3).map(|a| c[a].abs_diff(o[a]).pow(2)).sum();
            d2 > (r + ro + 2).pow(2)
        });
        if clear {
            placed.push((c, r));
        }
    }

    let mut vol = LabelVolume::filled([s; 3], 0);
    let fg = regime.num_classes as usize - 1;
    for (k, &(c, r)) in placed.iter().enumerate() {
        let class = 1 + (k % fg) as u32;
        for x in c[0] - r..=c[0] + r {
            for y in c[1] - r..=c[1] + r {
                for z in c[2] - r..=c[2] + r {
                    let d2 = x.abs_diff(c[0]).pow(2) + y.abs_diff(c[1]).pow(2) + z.abs_diff(c[2]).pow(2);
                    if d2 <= r * r {
                        vol.set([x, y, z], class);
                    }
                }
            }
        }
    }
    Ok(vol)
}

/// Qualities `k / (n - 1)`, with nuisance factors drawn per the regime.
pub fn zoo_specs(regime: &SynthRegime, num_models: usize, seed: u64) -> Result<Vec<SynthModelSpec>, SynthError> {
    if num_models < 2 {
        return Err(SynthError::TooFewModels(num_models));
    }
    let mut rng = seeded_rng(derive_seed(seed, &[TAG_ZOO]));
    let floor = regime.nuisance_floor;
    Ok((0..num_models)
        .map(|k| {
            let nuisance = if floor < 1.0 { rng.random_range(floor..=1.0) } else { 1.0 };
            let (global_factor, local_factor) = match regime.kind {
                RegimeKind::Fragmented => (nuisance, 1.0),
                RegimeKind::Structured => (1.0, nuisance),
            };
            SynthModelSpec {
                model_id: format!("model{k}"),
                quality: k as f64 / (num_models - 1) as f64,
                global_factor,
                local_factor,
            }
        })
        .collect())
}

fn centroid(class: u32, separation: f64, dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    c[class as usize] = separation / std::f64::consts::SQRT_2;
    c
}

/// Full-resolution features for one stage of one case.
pub fn generate_model_features(
    regime: &SynthRegime,
    labels: &LabelVolume,
    spec: &SynthModelSpec,
    stage: StageRole,
    seed: u64,
) -> StageFeatureDump {
    let dim = regime.feature_dim;
    let centroids: Vec<Vec<f64>> = (0..regime.num_classes)
        .map(|k| centroid(k, regime.separation, dim))
        .collect();
    let mut others: Vec<Vec<u32>> = vec![Vec::new(); labels.len()];
    for a in extract_boundary_anchors(labels, Connectivity::Face6) {
        let own = labels.get(a.voxel_index);
        others[labels.linear(a.voxel_index)] = a.classes_adjacent.into_iter().filter(|&c| c != own).collect();
    }

    let sigma = spec.sigma(regime);
    let p = spec.mixing_probability(regime);
    let mut rng = seeded_rng(seed);
    let plane = labels.len();
    let mut data = vec![0f32; dim * plane];
    for (lin, &y) in labels.data.iter().enumerate() {
        let mut class = y;
        if !others[lin].is_empty() && rng.random_bool(p) {
            class = others[lin][rng.random_range(0..others[lin].len())];
        }
        for (c, mu) in centroids[class as usize].iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            data[c * plane + lin] = (mu + sigma * z) as f32;
        }
    }
    StageFeatureDump {
        tensor: FeatureTensor::new(dim, labels.shape, data),
        labels: labels.clone(),
        stage,
        num_classes: regime.num_classes as usize,
    }
}

/// Stages emitted for every synthetic model.
pub const SYNTH_STAGES: [StageRole; 2] = [StageRole::Decoder(0), StageRole::Encoder(0)];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthZoo {
    pub regime: SynthRegime,
    pub seed: u64,
    pub cases: Vec<LabelVolume>,
    pub models: Vec<SynthModelSpec>,
}

impl SynthZoo {
    pub fn generate(regime: &SynthRegime, num_models: usize, num_cases: usize, seed: u64) -> Result<Self, SynthError> {
        if num_cases == 0 {
            return Err(SynthError::NoCases);
        }
        let cases = (0..num_cases)
            .map(|c| generate_task(regime, derive_seed(seed, &[c as u64])))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SynthZoo {
            regime: regime.clone(),
            seed,
            models: zoo_specs(regime, num_models, seed)?,
            cases,
        })
    }

    /// All stage dumps of one model for one case, in [`SYNTH_STAGES`] order.
    pub fn dumps(&self, model: usize, case: usize) -> Vec<StageFeatureDump> {
        SYNTH_STAGES
            .iter()
            .map(|&stage| {
                let seed = derive_seed(self.seed, &[TAG_FEATURES, model as u64, stage.tag(), case as u64]);
                generate_model_features(&self.regime, &self.cases[case], &self.models[model], stage, seed)
            })
            .collect()
    }

    pub fn task_name(&self) -> String {
        match self.regime.kind {
            RegimeKind::Fragmented => "synthetic-fragmented".into(),
            RegimeKind::Structured => "synthetic-structured".into(),
        }
    }

    /// Writes labels, stage tensors and `zoo.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<ManifestFile, SynthError> {
        let mut cases = Vec::with_capacity(self.cases.len());
        for (c, vol) in self.cases.iter().enumerate() {
            let rel = format!("labels/case{c}.bin");
            ingest::write_labels(&dir.join(&rel), vol)?;
            cases.push(rel);
        }
        let mut models = Vec::with_capacity(self.models.len());
        for (m, spec) in self.models.iter().enumerate() {
            let mut stages = Vec::new();
            for c in 0..self.cases.len() {
                for dump in self.dumps(m, c) {
                    let rel = format!("{}/{}_case{c}.bin", spec.model_id, dump.stage);
                    ingest::write_tensor(&dir.join(&rel), &dump.tensor)?;
                    let (role, index) = match dump.stage {
                        StageRole::Decoder(i) => (RoleName::Decoder, i),
                        StageRole::Encoder(i) => (RoleName::Encoder, i),
                    };
                    stages.push(StageFile { role, index, case: c, path: rel });
                }
            }
            models.push(ModelFile {
                id: spec.model_id.clone(),
                dice: Some(spec.ground_truth()),
                stages,
            });
        }
        let manifest = ManifestFile {
            task: TaskFile {
                name: self.task_name(),
                num_classes: self.regime.num_classes as usize,
                cases,
            },
            models,
        };
        ingest::write_manifest(&dir.join("zoo.json"), &manifest)?;
        Ok(manifest)
    }
}
