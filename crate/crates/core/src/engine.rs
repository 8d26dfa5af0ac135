//! Zoo-level scoring: sampling, GRTD and LBTC per model, then fusion.
//!
//! Sample positions depend on `(seed, case, stage)` only, so every model is
//! probed at the same voxels. Models are scored independently and in
//! parallel; each model's computation is sequential, which keeps results
//! identical for any thread count.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{fuse, FusionConfig, ModelMetrics, ZooScores, DEFAULT_BETA, DEFAULT_GAMMA};
use crate::grtd::{self, GrtdConfig, GrtdError, GrtdResult, LambdaMode};
use crate::ingest::StageFeatureDump;
use crate::lbtc::{lbtc_score, score_from_leakages, Connectivity, LbtcConfig, LbtcError, PatchLeakage};
use crate::sampling::{derive_seed, stratified_sample, SamplingConfig, DEFAULT_BUDGET, DEFAULT_FOREGROUND_FRACTION};
use crate::types::{SampleSet, StageRole, TransferabilityScore};

const TAG_SAMPLE: u64 = 0x7361_6d70;
const TAG_PATCH: u64 = 0x7061_7463;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub seed: u64,
    pub budget: usize,
    pub foreground_fraction: f64,
    pub lambda: LambdaMode,
    pub standardize: bool,
    pub decoder_stages: Vec<usize>,
    pub encoder_stages: Vec<usize>,
    pub num_patches: usize,
    pub radius: usize,
    pub connectivity: Connectivity,
    pub gamma: f64,
    pub beta: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        let lbtc = LbtcConfig::default();
        ScoringConfig {
            seed: 0,
            budget: DEFAULT_BUDGET,
            foreground_fraction: DEFAULT_FOREGROUND_FRACTION,
            lambda: LambdaMode::default(),
            standardize: false,
            decoder_stages: vec![0],
            encoder_stages: lbtc.stages,
            num_patches: lbtc.num_patches,
            radius: lbtc.radius,
            connectivity: lbtc.connectivity,
            gamma: DEFAULT_GAMMA,
            beta: DEFAULT_BETA,
        }
    }
}

impl ScoringConfig {
    pub fn sampling(&self, case: usize, stage: StageRole) -> SamplingConfig {
        SamplingConfig {
            budget: self.budget,
            foreground_fraction: self.foreground_fraction,
            seed: derive_seed(self.seed, &[TAG_SAMPLE, case as u64, stage.tag()]),
        }
    }

    pub fn grtd(&self) -> GrtdConfig {
        GrtdConfig {
            lambda: self.lambda,
            stages: self.decoder_stages.clone(),
            standardize: self.standardize,
        }
    }

    pub fn lbtc(&self, case: usize) -> LbtcConfig {
        LbtcConfig {
            num_patches: self.num_patches,
            radius: self.radius,
            connectivity: self.connectivity,
            stages: self.encoder_stages.clone(),
            seed: derive_seed(self.seed, &[TAG_PATCH, case as u64]),
        }
    }

    pub fn fusion(&self, num_classes: u32) -> FusionConfig {
        FusionConfig {
            gamma: self.gamma,
            beta: self.beta,
            num_classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model_id: String,
    /// Mean of the per-case GRTD scores.
    pub grtd: f64,
    /// One minus the mean leakage over every retained patch of every case.
    pub lbtc: f64,
    pub grtd_cases: Vec<GrtdResult>,
    pub lbtc_patches: usize,
}

impl ModelScore {
    pub fn metrics(&self) -> ModelMetrics {
        ModelMetrics {
            model_id: self.model_id.clone(),
            grtd: self.grtd,
            lbtc: self.lbtc,
        }
    }
}

fn decoder_sets(
    model_id: &str,
    case: usize,
    dumps: &[StageFeatureDump],
    cfg: &ScoringConfig,
) -> Result<BTreeMap<usize, SampleSet>> {
    let mut sets = BTreeMap::new();
    for &s in &cfg.decoder_stages {
        let stage = StageRole::Decoder(s);
        let dump = dumps.iter().find(|d| d.stage == stage).ok_or_else(|| Error::Grtd {
            model: model_id.to_string(),
            case,
            source: GrtdError::MissingStage(s),
        })?;
        let set = stratified_sample(dump, &cfg.sampling(case, stage)).map_err(|source| Error::Sampling {
            model: model_id.to_string(),
            source,
        })?;
        sets.insert(s, set);
    }
    Ok(sets)
}

/// Scores one model. `cases[c]` holds every stage dump of case `c`.
pub fn score_model(model_id: &str, cases: &[Vec<StageFeatureDump>], cfg: &ScoringConfig) -> Result<ModelScore> {
    let mut grtd_cases = Vec::with_capacity(cases.len());
    let mut patches: Vec<PatchLeakage> = Vec::new();
    for (case, dumps) in cases.iter().enumerate() {
        let sets = decoder_sets(model_id, case, dumps, cfg)?;
        let g = grtd::grtd_score(&sets, &cfg.grtd()).map_err(|source| Error::Grtd {
            model: model_id.to_string(),
            case,
            source,
        })?;
        grtd_cases.push(g);

        let refs: Vec<&StageFeatureDump> = dumps.iter().collect();
        match lbtc_score(&refs, &cfg.lbtc(case)) {
            Ok(r) => patches.extend(r.per_patch),
            // a case without usable boundary contributes no patches
            Err(LbtcError::NoValidPatch) => {}
            Err(source) => {
                return Err(Error::Lbtc {
                    model: model_id.to_string(),
                    source,
                })
            }
        }
    }
    if patches.is_empty() {
        return Err(Error::Lbtc {
            model: model_id.to_string(),
            source: LbtcError::NoValidPatch,
        });
    }
    let rhos: Vec<f64> = patches.iter().map(|p| p.rho).collect();
    Ok(ModelScore {
        model_id: model_id.to_string(),
        grtd: grtd_cases.iter().map(|g| g.score).sum::<f64>() / grtd_cases.len() as f64,
        lbtc: score_from_leakages(&rhos),
        lbtc_patches: patches.len(),
        grtd_cases,
    })
}

/// Scores every model, loading its dumps on demand. Output follows `ids`
/// order; the first failing model (in that order) determines the error.
pub fn score_zoo<F>(ids: &[String], load: F, cfg: &ScoringConfig) -> Result<Vec<ModelScore>>
where
    F: Fn(usize) -> Result<Vec<Vec<StageFeatureDump>>> + Sync,
{
    let results: Vec<Result<ModelScore>> = (0..ids.len())
        .into_par_iter()
        .map(|m| score_model(&ids[m], &load(m)?, cfg))
        .collect();
    results.into_iter().collect()
}

pub fn fuse_scores(scores: &[ModelScore], cfg: &ScoringConfig, num_classes: u32) -> Result<ZooScores> {
    let metrics: Vec<ModelMetrics> = scores.iter().map(ModelScore::metrics).collect();
    Ok(fuse(&metrics, &cfg.fusion(num_classes))?)
}

pub fn transferability(zoo: &ZooScores) -> Vec<TransferabilityScore> {
    zoo.entries
        .iter()
        .zip(&zoo.fused)
        .map(|(m, f)| TransferabilityScore {
            model_id: m.model_id.clone(),
            grtd: m.grtd,
            lbtc: m.lbtc,
            alpha: zoo.alpha,
            fused: f.score,
        })
        .collect()
}

/// Writes the feature and semantic MST edge lists of every configured
/// decoder stage of one model.
pub fn dump_msts(model_id: &str, cases: &[Vec<StageFeatureDump>], cfg: &ScoringConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (case, dumps) in cases.iter().enumerate() {
        for (stage, set) in decoder_sets(model_id, case, dumps, cfg)? {
            let (_, feat, sem) =
                grtd::stage_trees(&set, cfg.lambda, stage, cfg.standardize).map_err(|source| Error::Grtd {
                    model: model_id.to_string(),
                    case,
                    source,
                })?;
            for (kind, tree) in [("feature", feat), ("semantic", sem)] {
                let path = dir.join(format!("{model_id}_case{case}_decoder{stage}_{kind}.txt"));
                let io = |source| Error::Io {
                    path: path.clone(),
                    source,
                };
                let file = fs::File::create(&path).map_err(io)?;
                tree.write_edge_list(std::io::BufWriter::new(file)).map_err(io)?;
            }
        }
    }
    Ok(())
}
