//! Global representation topology divergence.
//!
//! For each decoder stage the native feature MST and the semantic
//! (label-induced) MST are built over the same samples; the stage divergence
//! is `-|W_feat - W_sem|` and the score is the uniform mean over stages.
//! Scores are `<= 0`, closer to 0 meaning the feature geometry already
//! respects the class structure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{self, euclidean, GraphError, SpanningTree};
use crate::types::{cmp_f64, SampleSet};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    Fixed(f64),
    /// Median Euclidean distance over all inter-class pairs of the stage.
    #[default]
    MedianInterClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrtdConfig {
    pub lambda: LambdaMode,
    /// Decoder stage indices to aggregate over.
    pub stages: Vec<usize>,
    /// Z-score features per stage before building graphs.
    pub standardize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageDivergence {
    pub stage: usize,
    pub lambda: f64,
    pub feat_weight: f64,
    pub sem_weight: f64,
    pub divergence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrtdResult {
    pub per_stage: Vec<StageDivergence>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrtdError {
    #[error("no decoder stages configured")]
    NoStages,
    #[error("no sample set for decoder stage {0}")]
    MissingStage(usize),
    #[error("stage {stage}: {source}")]
    Graph {
        stage: usize,
        #[source]
        source: GraphError,
    },
    #[error("stage {0}: no inter-class pair to derive lambda from")]
    NoInterClassPair(usize),
    #[error("stage {stage}: lambda resolved to {lambda}, must be > 0")]
    DegenerateLambda { stage: usize, lambda: f64 },
}

/// Median of the inter-class pairwise distances; mean of the two middle
/// values for an even count.
pub fn median_inter_class_distance(set: &SampleSet) -> Option<f64> {
    let pts = &set.points;
    let mut d = Vec::new();
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            if pts[i].label != pts[j].label {
                d.push(euclidean(&pts[i].features, &pts[j].features));
            }
        }
    }
    if d.is_empty() {
        return None;
    }
    let mid = d.len() / 2;
    let (_, &mut upper, _) = d.select_nth_unstable_by(mid, |a, b| cmp_f64(*a, *b));
    if d.len() % 2 == 1 {
        Some(upper)
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(0.5 * (lower + upper))
    }
}

pub fn resolve_lambda(set: &SampleSet, mode: LambdaMode, stage: usize) -> Result<f64, GrtdError> {
    let lambda = match mode {
        LambdaMode::Fixed(v) => v,
        LambdaMode::MedianInterClass => {
            median_inter_class_distance(set).ok_or(GrtdError::NoInterClassPair(stage))?
        }
    };
    if lambda.is_finite() && lambda > 0.0 {
        Ok(lambda)
    } else {
        Err(GrtdError::DegenerateLambda { stage, lambda })
    }
}

/// Resolved lambda and the feature and semantic MSTs of one stage.
pub fn stage_trees(
    set: &SampleSet,
    lambda: LambdaMode,
    stage: usize,
    standardize: bool,
) -> Result<(f64, SpanningTree, SpanningTree), GrtdError> {
    let scaled;
    let set = if standardize {
        scaled = graph::standardize(set);
        &scaled
    } else {
        set
    };
    let lambda = resolve_lambda(set, lambda, stage)?;
    let wrap = |source| GrtdError::Graph { stage, source };
    let feat = graph::native_mst(set).map_err(wrap)?;
    let sem = graph::semantic_mst(set, lambda).map_err(wrap)?;
    Ok((lambda, feat, sem))
}

/// Divergence of a single stage's sample set.
pub fn stage_divergence(
    set: &SampleSet,
    lambda: LambdaMode,
    stage: usize,
    standardize: bool,
) -> Result<StageDivergence, GrtdError> {
    let (lambda, feat, sem) = stage_trees(set, lambda, stage, standardize)?;
    Ok(StageDivergence {
        stage,
        lambda,
        feat_weight: feat.total_weight,
        sem_weight: sem.total_weight,
        divergence: -(feat.total_weight - sem.total_weight).abs(),
    })
}

/// Averages stage divergences over the configured decoder stages, reduced in
/// ascending stage order.
pub fn grtd_score(sets: &BTreeMap<usize, SampleSet>, cfg: &GrtdConfig) -> Result<GrtdResult, GrtdError> {
    let mut stages = cfg.stages.clone();
    stages.sort_unstable();
    stages.dedup();
    if stages.is_empty() {
        return Err(GrtdError::NoStages);
    }
    let per_stage = stages
        .iter()
        .map(|&s| {
            let set = sets.get(&s).ok_or(GrtdError::MissingStage(s))?;
            stage_divergence(set, cfg.lambda, s, cfg.standardize)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(per_stage))
}

pub(crate) fn aggregate(per_stage: Vec<StageDivergence>) -> GrtdResult {
    let score = per_stage.iter().map(|s| s.divergence).sum::<f64>() / per_stage.len() as f64;
    GrtdResult { per_stage, score }
}
