//! Task-adaptive fusion of the global and local metrics.
//!
//! `alpha = sigmoid(gamma * ln|C| + beta)` and, per model,
//! `S = alpha * N(grtd) + (1 - alpha) * N(lbtc)` where `N` is min-max
//! normalisation over the zoo.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rank::{weighted_kendall_tau, RankError};

pub const DEFAULT_GAMMA: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 0.0;
/// Task complexity uses the natural logarithm of the class count.
pub const COMPLEXITY_LOG: &str = "natural";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("need at least 2 models, got {0}")]
    TooFewModels(usize),
    #[error("num_classes must be at least 1")]
    NoClasses,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("calibration grid is empty")]
    EmptyGrid,
    #[error("no ground truth for pilot model {0:?}")]
    MissingGroundTruth(String),
    #[error("pilot ranking: {0}")]
    Rank(#[from] RankError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub gamma: f64,
    pub beta: f64,
    pub num_classes: u32,
}

impl FusionConfig {
    pub fn new(gamma: f64, beta: f64, num_classes: u32) -> Result<Self, FusionError> {
        let cfg = Self { gamma, beta, num_classes };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_defaults(num_classes: u32) -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            beta: DEFAULT_BETA,
            num_classes,
        }
    }

    fn validate(&self) -> Result<(), FusionError> {
        if self.num_classes == 0 {
            return Err(FusionError::NoClasses);
        }
        if !self.gamma.is_finite() {
            return Err(FusionError::NonFinite("gamma"));
        }
        if !self.beta.is_finite() {
            return Err(FusionError::NonFinite("beta"));
        }
        Ok(())
    }
}

pub fn task_complexity(num_classes: u32) -> f64 {
    (num_classes as f64).ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gating factor in (0, 1). Saturates to exactly 0 or 1 only for extreme logits.
pub fn gate(cfg: &FusionConfig) -> f64 {
    sigmoid(cfg.gamma * task_complexity(cfg.num_classes) + cfg.beta)
}

/// Maps values onto [0, 1]; a constant column maps to 0.5 everywhere.
pub fn minmax_normalize(values: &[f64]) -> Result<Vec<f64>, FusionError> {
    if values.len() < 2 {
        return Err(FusionError::TooFewModels(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FusionError::NonFinite("metric value"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.5; values.len()]);
    }
    Ok(values.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model_id: String,
    pub grtd: f64,
    pub lbtc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusedScore {
    pub model_id: String,
    pub grtd_normalized: f64,
    pub lbtc_normalized: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZooScores {
    pub entries: Vec<ModelMetrics>,
    pub fused: Vec<FusedScore>,
    pub alpha: f64,
}

pub fn fuse(zoo: &[ModelMetrics], cfg: &FusionConfig) -> Result<ZooScores, FusionError> {
    cfg.validate()?;
    if zoo.len() < 2 {
        return Err(FusionError::TooFewModels(zoo.len()));
    }
    let g = minmax_normalize(&zoo.iter().map(|m| m.grtd).collect::<Vec<_>>())?;
    let l = minmax_normalize(&zoo.iter().map(|m| m.lbtc).collect::<Vec<_>>())?;
    let alpha = gate(cfg);
    let fused = zoo
        .iter()
        .zip(g.iter().zip(&l))
        .map(|(m, (&gn, &ln))| FusedScore {
            model_id: m.model_id.clone(),
            grtd_normalized: gn,
            lbtc_normalized: ln,
            score: alpha * gn + (1.0 - alpha) * ln,
        })
        .collect();
    Ok(ZooScores {
        entries: zoo.to_vec(),
        fused,
        alpha,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotEntry {
    pub model_id: String,
    pub grtd: f64,
    pub lbtc: f64,
    pub ground_truth: Option<f64>,
}

/// The default 5 x 5 grid over gamma, beta in {-2, -1, 0, 1, 2}.
pub fn default_grid() -> Vec<(f64, f64)> {
    let steps = [-2.0, -1.0, 0.0, 1.0, 2.0];
    steps
        .iter()
        .flat_map(|&g| steps.iter().map(move |&b| (g, b)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEvaluation {
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
    pub tau_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub selected: FusionConfig,
    pub tau_w: f64,
    pub grid: Vec<GridEvaluation>,
}

fn pilot_tau(pilot: &[PilotEntry], cfg: &FusionConfig) -> Result<f64, FusionError> {
    let metrics: Vec<ModelMetrics> = pilot
        .iter()
        .map(|p| ModelMetrics {
            model_id: p.model_id.clone(),
            grtd: p.grtd,
            lbtc: p.lbtc,
        })
        .collect();
    let truths: Vec<f64> = pilot
        .iter()
        .map(|p| p.ground_truth.ok_or_else(|| FusionError::MissingGroundTruth(p.model_id.clone())))
        .collect::<Result<_, _>>()?;
    let zoo = fuse(&metrics, cfg)?;
    let scores: Vec<f64> = zoo.fused.iter().map(|f| f.score).collect();
    match weighted_kendall_tau(&scores, &truths) {
        // a fused column with no spread carries no ranking information
        Err(RankError::Undefined("score")) => Ok(0.0),
        other => Ok(other?),
    }
}

fn better(a: &GridEvaluation, b: &GridEvaluation) -> bool {
    let dist = |e: &GridEvaluation| (e.gamma - DEFAULT_GAMMA).powi(2) + (e.beta - DEFAULT_BETA).powi(2);
    a.tau_w
        .total_cmp(&b.tau_w)
        .then_with(|| dist(b).total_cmp(&dist(a)))
        .then_with(|| b.gamma.total_cmp(&a.gamma))
        .then_with(|| b.beta.total_cmp(&a.beta))
        .is_gt()
}

/// Picks the grid point maximising weighted tau on one pilot zoo.
pub fn calibrate_pilot(
    pilot: &[PilotEntry],
    grid: &[(f64, f64)],
    num_classes: u32,
) -> Result<Calibration, FusionError> {
    calibrate_pilot_multi(std::slice::from_ref(&pilot.to_vec()), grid, num_classes)
}

/// Picks the grid point maximising the mean weighted tau over several pilot
/// zoos of the same task. Ties go to the point nearest (1, 0), then to the
/// lexicographically smallest (gamma, beta).
pub fn calibrate_pilot_multi(
    pilots: &[Vec<PilotEntry>],
    grid: &[(f64, f64)],
    num_classes: u32,
) -> Result<Calibration, FusionError> {
    if grid.is_empty() {
        return Err(FusionError::EmptyGrid);
    }
    if pilots.is_empty() {
        return Err(FusionError::TooFewModels(0));
    }
    let mut evals = Vec::with_capacity(grid.len());
    for &(gamma, beta) in grid {
        let cfg = FusionConfig::new(gamma, beta, num_classes)?;
        let mut sum = 0.0;
        for pilot in pilots {
            sum += pilot_tau(pilot, &cfg)?;
        }
        evals.push(GridEvaluation {
            gamma,
            beta,
            alpha: gate(&cfg),
            tau_w: sum / pilots.len() as f64,
        });
    }
    let mut best = &evals[0];
    for e in &evals[1..] {
        if better(e, best) {
            best = e;
        }
    }
    Ok(Calibration {
        selected: FusionConfig::new(best.gamma, best.beta, num_classes)?,
        tau_w: best.tau_w,
        grid: evals,
    })
}
