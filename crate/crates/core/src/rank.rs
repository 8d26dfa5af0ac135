//! Ranking quality: weighted Kendall's tau against ground-truth performance.
//!
//! Weights are additive hyperbolic, `1/(r_i + 1) + 1/(r_j + 1)`, where `r` is
//! the 0-based rank of an item when ground truth is sorted best-first. Items
//! with tied ground truth share the smallest rank of their tie group.
//!
//! With `s = sign(score_i - score_j) * sign(truth_i - truth_j)`:
//!
//! ```text
//! tau_w = sum w_ij s_ij / sqrt(sum_{score not tied} w_ij * sum_{truth not tied} w_ij)
//! ```
//!
//! A pair tied in either list contributes nothing to the numerator and its
//! weight is dropped from the factor of the list it is tied in. Without ties
//! this reduces to `sum w s / sum w`. Pairs are visited in ascending `(i, j)`
//! index order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::ZooScores;
use crate::types::cmp_f64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankError {
    #[error("length mismatch: {scores} scores vs {truths} truths")]
    LengthMismatch { scores: usize, truths: usize },
    #[error("need at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("correlation undefined: every {0} value is tied")]
    Undefined(&'static str),
    #[error("no ground truth for model {0:?}")]
    MissingTruth(String),
}

/// 0-based best-first ranks; ties share the smallest rank of their group.
pub fn truth_ranks(truths: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..truths.len()).collect();
    order.sort_by(|&a, &b| cmp_f64(truths[b], truths[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; truths.len()];
    for (pos, &item) in order.iter().enumerate() {
        ranks[item] = if pos > 0 && truths[order[pos - 1]] == truths[item] {
            ranks[order[pos - 1]]
        } else {
            pos
        };
    }
    ranks
}

fn check(scores: &[f64], truths: &[f64]) -> Result<(), RankError> {
    if scores.len() != truths.len() {
        return Err(RankError::LengthMismatch {
            scores: scores.len(),
            truths: truths.len(),
        });
    }
    if scores.len() < 2 {
        return Err(RankError::TooFewItems(scores.len()));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(RankError::NonFinite("scores"));
    }
    if truths.iter().any(|v| !v.is_finite()) {
        return Err(RankError::NonFinite("truths"));
    }
    Ok(())
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn tau_with<W: Fn(usize, usize) -> f64>(scores: &[f64], truths: &[f64], weight: W) -> Result<f64, RankError> {
    check(scores, truths)?;
    let n = scores.len();
    let (mut num, mut score_mass, mut truth_mass) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = weight(i, j);
            let ds = sign(scores[i] - scores[j]);
            let dt = sign(truths[i] - truths[j]);
            num += w * ds * dt;
            if ds != 0.0 {
                score_mass += w;
            }
            if dt != 0.0 {
                truth_mass += w;
            }
        }
    }
    if truth_mass == 0.0 {
        return Err(RankError::Undefined("truth"));
    }
    if score_mass == 0.0 {
        return Err(RankError::Undefined("score"));
    }
    Ok((num / (score_mass * truth_mass).sqrt()).clamp(-1.0, 1.0))
}

/// Hyperbolic-weighted Kendall's tau, ranks taken from `truths`.
pub fn weighted_kendall_tau(scores: &[f64], truths: &[f64]) -> Result<f64, RankError> {
    check(scores, truths)?;
    let ranks = truth_ranks(truths);
    tau_with(scores, truths, |i, j| {
        1.0 / (ranks[i] as f64 + 1.0) + 1.0 / (ranks[j] as f64 + 1.0)
    })
}

/// Unweighted Kendall's tau-b.
pub fn kendall_tau(scores: &[f64], truths: &[f64]) -> Result<f64, RankError> {
    tau_with(scores, truths, |_, _| 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub model_id: String,
    pub score: f64,
    pub ground_truth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub pairs: Vec<RankedPair>,
    pub tau_w: f64,
    pub tau_plain: f64,
}

/// Correlates the fused scores of a zoo with ground truth.
pub fn evaluate_zoo(zoo: &ZooScores, truths: &BTreeMap<String, f64>) -> Result<RankingReport, RankError> {
    let scores: Vec<(String, f64)> = zoo.fused.iter().map(|f| (f.model_id.clone(), f.score)).collect();
    evaluate_scores(&scores, truths)
}

/// Correlates arbitrary per-model scores with ground truth. Every scored
/// model must have a truth value.
pub fn evaluate_scores(
    scores: &[(String, f64)],
    truths: &BTreeMap<String, f64>,
) -> Result<RankingReport, RankError> {
    let pairs = scores
        .iter()
        .map(|(id, s)| {
            let t = truths
                .get(id)
                .copied()
                .ok_or_else(|| RankError::MissingTruth(id.clone()))?;
            Ok(RankedPair {
                model_id: id.clone(),
                score: *s,
                ground_truth: t,
            })
        })
        .collect::<Result<Vec<_>, RankError>>()?;
    let s: Vec<f64> = pairs.iter().map(|p| p.score).collect();
    let t: Vec<f64> = pairs.iter().map(|p| p.ground_truth).collect();
    Ok(RankingReport {
        tau_w: weighted_kendall_tau(&s, &t)?,
        tau_plain: kendall_tau(&s, &t)?,
        pairs,
    })
}
