//! Local boundary-aware topological consistency.
//!
//! Boundary anchors are the voxels whose label differs from at least one
//! neighbour (the morphological gradient of the label field). Around a
//! sample of anchors, a cubic window of voxels is gathered, the native MST of
//! their features is built and the fraction of class-crossing tree edges is
//! the patch's leakage rate. The score is one minus the mean leakage.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph;
use crate::ingest::StageFeatureDump;
use crate::sampling::{point_at, seeded_rng};
use crate::types::{LabelVolume, SampleSet, StageRole, VoxelIndex};

pub const DEFAULT_PATCHES: usize = 64;
pub const DEFAULT_RADIUS: usize = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours only (6-neighbourhood cross element).
    #[default]
    Face6,
    /// Face, edge and corner neighbours.
    Full26,
}

impl Connectivity {
    fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dx in -1isize..=1 {
            for dy in -1isize..=1 {
                for dz in -1isize..=1 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Face6 => manhattan == 1,
                        Connectivity::Full26 => manhattan >= 1,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    pub fn neighbour_count(self) -> usize {
        match self {
            Connectivity::Face6 => 6,
            Connectivity::Full26 => 26,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryAnchor {
    pub voxel_index: VoxelIndex,
    /// Sorted distinct labels of the anchor and its differing neighbours.
    pub classes_adjacent: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalPatch {
    pub anchor: BoundaryAnchor,
    pub points: SampleSet,
    pub radius: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbtcConfig {
    pub num_patches: usize,
    pub radius: usize,
    pub connectivity: Connectivity,
    /// Encoder stage indices to probe.
    pub stages: Vec<usize>,
    pub seed: u64,
}

impl Default for LbtcConfig {
    fn default() -> Self {
        LbtcConfig {
            num_patches: DEFAULT_PATCHES,
            radius: DEFAULT_RADIUS,
            connectivity: Connectivity::Face6,
            stages: vec![0],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchLeakage {
    pub stage: StageRole,
    pub anchor: VoxelIndex,
    pub points: usize,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbtcResult {
    pub per_patch: Vec<PatchLeakage>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LbtcError {
    #[error("num_patches must be >= 1")]
    NoPatchesRequested,
    #[error("radius must be >= 1")]
    ZeroRadius,
    #[error("no boundary anchors to sample from")]
    NoAnchors,
    #[error("no valid patch (>= 2 points and >= 2 labels) could be formed")]
    NoValidPatch,
    #[error("patch has {0} points, need at least 2")]
    TooFewPoints(usize),
    #[error("no encoder stage dump matches the configured stages")]
    NoStageDumps,
}

fn neighbour(idx: VoxelIndex, off: [isize; 3], shape: [usize; 3]) -> Option<VoxelIndex> {
    let mut out = [0usize; 3];
    for a in 0..3 {
        let v = idx[a] as isize + off[a];
        if v < 0 || v >= shape[a] as isize {
            return None;
        }
        out[a] = v as usize;
    }
    Some(out)
}

/// Every voxel with a differently-labelled neighbour, in voxel-index order.
pub fn extract_boundary_anchors(labels: &LabelVolume, connectivity: Connectivity) -> Vec<BoundaryAnchor> {
    let offsets = connectivity.offsets();
    let mut anchors = Vec::new();
    for lin in 0..labels.len() {
        let idx = labels.unravel(lin);
        let own = labels.data[lin];
        let mut classes: Vec<u32> = offsets
            .iter()
            .filter_map(|&o| neighbour(idx, o, labels.shape))
            .map(|n| labels.get(n))
            .filter(|&y| y != own)
            .collect();
        if classes.is_empty() {
            continue;
        }
        classes.push(own);
        classes.sort_unstable();
        classes.dedup();
        anchors.push(BoundaryAnchor {
            voxel_index: idx,
            classes_adjacent: classes,
        });
    }
    anchors
}

/// All label-grid voxels within Chebyshev `radius` of `anchor`, clipped to the
/// volume, with features mapped from the stage grid.
pub fn gather_patch(anchor: &BoundaryAnchor, dump: &StageFeatureDump, radius: usize) -> LocalPatch {
    let shape = dump.labels.shape;
    let c = anchor.voxel_index;
    let lo = |a: usize| c[a].saturating_sub(radius);
    let hi = |a: usize| (c[a] + radius).min(shape[a] - 1);
    let mut points = Vec::new();
    for x in lo(0)..=hi(0) {
        for y in lo(1)..=hi(1) {
            for z in lo(2)..=hi(2) {
                points.push(point_at(dump, [x, y, z]));
            }
        }
    }
    LocalPatch {
        anchor: anchor.clone(),
        points: SampleSet::new(points, dump.feature_dim(), dump.num_classes),
        radius,
    }
}

/// Draws anchors uniformly without replacement (seeded shuffle) and keeps the
/// first `num_patches` whose window holds >= 2 points and >= 2 labels.
pub fn sample_patches(
    anchors: &[BoundaryAnchor],
    dump: &StageFeatureDump,
    cfg: &LbtcConfig,
) -> Result<Vec<LocalPatch>, LbtcError> {
    if cfg.num_patches == 0 {
        return Err(LbtcError::NoPatchesRequested);
    }
    if cfg.radius == 0 {
        return Err(LbtcError::ZeroRadius);
    }
    if anchors.is_empty() {
        return Err(LbtcError::NoAnchors);
    }
    let mut order: Vec<usize> = (0..anchors.len()).collect();
    order.shuffle(&mut seeded_rng(cfg.seed));

    let mut patches = Vec::with_capacity(cfg.num_patches.min(anchors.len()));
    for k in order {
        let patch = gather_patch(&anchors[k], dump, cfg.radius);
        if patch.points.len() >= 2 && patch.points.distinct_labels() >= 2 {
            patches.push(patch);
            if patches.len() == cfg.num_patches {
                break;
            }
        }
    }
    if patches.is_empty() {
        return Err(LbtcError::NoValidPatch);
    }
    patches.sort_by_key(|p| p.anchor.voxel_index);
    Ok(patches)
}

/// Fraction of the patch's native MST edges that join different classes.
pub fn leakage_rate(patch: &LocalPatch) -> Result<f64, LbtcError> {
    let n = patch.points.len();
    if n < 2 {
        return Err(LbtcError::TooFewPoints(n));
    }
    let tree = graph::native_mst(&patch.points).map_err(|_| LbtcError::TooFewPoints(n))?;
    let pts = &patch.points.points;
    let crossing = tree
        .edges
        .iter()
        .filter(|e| pts[e.i].label != pts[e.j].label)
        .count();
    Ok(crossing as f64 / (n - 1) as f64)
}

pub fn score_from_leakages(rhos: &[f64]) -> f64 {
    1.0 - rhos.iter().sum::<f64>() / rhos.len() as f64
}

/// Scores every configured encoder stage dump (across cases) and aggregates
/// all retained patches into one score.
pub fn lbtc_score(dumps: &[&StageFeatureDump], cfg: &LbtcConfig) -> Result<LbtcResult, LbtcError> {
    let selected: Vec<&StageFeatureDump> = dumps
        .iter()
        .copied()
        .filter(|d| matches!(d.stage, StageRole::Encoder(i) if cfg.stages.contains(&i)))
        .collect();
    if selected.is_empty() {
        return Err(LbtcError::NoStageDumps);
    }
    let mut per_patch = Vec::new();
    for dump in selected {
        let anchors = extract_boundary_anchors(&dump.labels, cfg.connectivity);
        let patches = match sample_patches(&anchors, dump, cfg) {
            Ok(p) => p,
            Err(LbtcError::NoAnchors | LbtcError::NoValidPatch) => continue,
            Err(e) => return Err(e),
        };
        for patch in &patches {
            per_patch.push(PatchLeakage {
                stage: dump.stage,
                anchor: patch.anchor.voxel_index,
                points: patch.points.len(),
                rho: leakage_rate(patch)?,
            });
        }
    }
    if per_patch.is_empty() {
        return Err(LbtcError::NoValidPatch);
    }
    let rhos: Vec<f64> = per_patch.iter().map(|p| p.rho).collect();
    Ok(LbtcResult {
        score: score_from_leakages(&rhos),
        per_patch,
    })
}
