//! Stratified voxel sampling from a stage feature dump.
//!
//! Strata are background (label 0) and one stratum per present foreground
//! class. Strata are defined on the label grid, so the selected voxels depend
//! only on the labels and the seed; every model sees the same positions.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::StageFeatureDump;
use crate::types::{LabeledPoint, SampleSet, VoxelIndex};

/// Identifier of the generator behind every sampled selection.
pub const PRNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64";

pub const DEFAULT_BUDGET: usize = 1000;
pub const DEFAULT_FOREGROUND_FRACTION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub budget: usize,
    pub foreground_fraction: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            budget: DEFAULT_BUDGET,
            foreground_fraction: DEFAULT_FOREGROUND_FRACTION,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplingError {
    #[error("label volume is empty")]
    EmptyVolume,
    #[error("budget must be at least 2, got {0}")]
    BudgetTooSmall(usize),
    #[error("foreground fraction must lie in (0, 1), got {0}")]
    InvalidForegroundFraction(f64),
}

/// SplitMix64 finalizer; mixes `tags` into `base` to derive independent seeds.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(base), |acc, &t| mix(acc ^ mix(t)))
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Nearest-neighbour mapping of one axis coordinate from a grid of `from`
/// cells onto a grid of `to` cells. Cell centres are scaled proportionally;
/// exact half-way ties go to the lower index.
pub fn map_axis(p: usize, from: usize, to: usize) -> usize {
    if from == to {
        return p;
    }
    // centre of p on the target grid: ((2p + 1) * to - from) / (2 * from)
    let num = (2 * p as i64 + 1) * to as i64 - from as i64;
    let den = 2 * from as i64;
    // nearest integer with ties down: ceil((2 num - den) / (2 den))
    let a = 2 * num - den;
    let b = 2 * den;
    let k = (a + b - 1).div_euclid(b);
    k.clamp(0, to as i64 - 1) as usize
}

pub fn map_index(idx: VoxelIndex, from: [usize; 3], to: [usize; 3]) -> VoxelIndex {
    [
        map_axis(idx[0], from[0], to[0]),
        map_axis(idx[1], from[1], to[1]),
        map_axis(idx[2], from[2], to[2]),
    ]
}

/// Builds a labeled point for a label-grid voxel, reading features from the
/// stage grid through [`map_index`].
pub(crate) fn point_at(dump: &StageFeatureDump, idx: VoxelIndex) -> LabeledPoint {
    let feat_idx = map_index(idx, dump.labels.shape, dump.tensor.shape);
    LabeledPoint {
        features: dump.tensor.features_at(feat_idx),
        label: dump.labels.get(idx),
        voxel_index: idx,
        stage: dump.stage,
    }
}

/// Per-class sample counts for a stratified draw. `counts[c]` is the number of
/// voxels of class `c`; the result has the same length.
pub fn stratum_quotas(counts: &[usize], budget: usize, foreground_fraction: f64) -> Vec<usize> {
    let mut take = vec![0usize; counts.len()];
    let total: usize = counts.iter().sum();
    if total <= budget {
        take.copy_from_slice(counts);
        return take;
    }

    // rarest first, ties by class id
    let mut fg: Vec<usize> = (1..counts.len()).filter(|&c| counts[c] > 0).collect();
    fg.sort_by_key(|&c| (counts[c], c));

    let fg_quota = if fg.is_empty() {
        0
    } else {
        ((budget as f64 * foreground_fraction).round() as usize).min(budget)
    };
    // equal split, remainder to the rarest classes; a class short of its
    // share gives the difference to background
    if !fg.is_empty() {
        let share = fg_quota / fg.len();
        let extra = fg_quota % fg.len();
        for (rank, &c) in fg.iter().enumerate() {
            let want = share + usize::from(rank < extra);
            take[c] = want.min(counts[c]);
        }
    }

    let bg_available = counts.first().copied().unwrap_or(0);
    let fg_taken: usize = take.iter().sum();
    let bg_quota = budget - fg_taken;
    if !counts.is_empty() {
        take[0] = bg_quota.min(bg_available);
    }

    // background could not absorb its share: hand the rest back to foreground
    let leftover = bg_quota - take.first().copied().unwrap_or(0);
    spread(&fg, counts, &mut take, leftover);
    take
}

/// Water-fills `amount` extra samples over `classes` (already ordered rarest
/// first) in equal shares, remainder to the earliest classes, capped by supply.
fn spread(classes: &[usize], counts: &[usize], take: &mut [usize], mut amount: usize) {
    loop {
        let open: Vec<usize> = classes
            .iter()
            .copied()
            .filter(|&c| take[c] < counts[c])
            .collect();
        if amount == 0 || open.is_empty() {
            return;
        }
        let share = amount / open.len();
        let mut extra = amount % open.len();
        for &c in &open {
            let mut want = share;
            if extra > 0 {
                want += 1;
                extra -= 1;
            }
            let got = want.min(counts[c] - take[c]);
            take[c] += got;
            amount -= got;
        }
    }
}

/// Draws a class-balanced sample of voxels from `dump`.
pub fn stratified_sample(
    dump: &StageFeatureDump,
    cfg: &SamplingConfig,
) -> Result<SampleSet, SamplingError> {
    if cfg.budget < 2 {
        return Err(SamplingError::BudgetTooSmall(cfg.budget));
    }
    if !(cfg.foreground_fraction > 0.0 && cfg.foreground_fraction < 1.0) {
        return Err(SamplingError::InvalidForegroundFraction(cfg.foreground_fraction));
    }
    let labels = &dump.labels;
    if labels.is_empty() {
        return Err(SamplingError::EmptyVolume);
    }

    let num_classes = dump.num_classes.max(labels.max_label().unwrap_or(0) as usize + 1);
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (lin, &y) in labels.data.iter().enumerate() {
        strata[y as usize].push(lin);
    }
    let counts: Vec<usize> = strata.iter().map(Vec::len).collect();
    let quotas = stratum_quotas(&counts, cfg.budget, cfg.foreground_fraction);

    let mut rng = seeded_rng(cfg.seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(quotas.iter().sum());
    for (members, &q) in strata.iter().zip(&quotas) {
        if q == members.len() {
            chosen.extend_from_slice(members);
        } else if q > 0 {
            chosen.extend(
                index::sample(&mut rng, members.len(), q)
                    .into_iter()
                    .map(|k| members[k]),
            );
        }
    }
    chosen.sort_unstable();

    let points = chosen
        .into_iter()
        .map(|lin| point_at(dump, labels.unravel(lin)))
        .collect();
    Ok(SampleSet::new(points, dump.tensor.channels, dump.num_classes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{FeatureTensor, LabelVolume, StageRole};

    fn dump_from_labels(labels: LabelVolume, num_classes: usize) -> StageFeatureDump {
        let n = labels.len();
        let data: Vec<f32> = (0..2 * n).map(|k| k as f32).collect();
        StageFeatureDump {
            tensor: FeatureTensor::new(2, labels.shape, data),
            labels,
            stage: StageRole::Decoder(0),
            num_classes,
        }
    }

    fn line(labels: &[u32]) -> LabelVolume {
        LabelVolume::new([1, 1, labels.len()], labels.to_vec())
    }

    fn counts_of(set: &SampleSet, classes: usize) -> Vec<usize> {
        let mut c = vec![0; classes];
        for y in set.labels() {
            c[y as usize] += 1;
        }
        c
    }

    #[test]
    fn quota_example_balances_foreground() {
        // exhaustive quota arithmetic: fg = round(20 * 0.5) = 10, class 1 has
        // exactly 10 voxels, background takes the remaining 10
        assert_eq!(stratum_quotas(&[100, 10], 20, 0.5), vec![10, 10]);
        let mut labels = vec![0u32; 100];
        labels.extend(std::iter::repeat_n(1u32, 10));
        let dump = dump_from_labels(line(&labels), 2);
        let cfg = SamplingConfig { budget: 20, foreground_fraction: 0.5, seed: 7 };
        let set = stratified_sample(&dump, &cfg).unwrap();
        assert_eq!(counts_of(&set, 2), vec![10, 10]);
    }

    #[test]
    fn all_background_volume() {
        let dump = dump_from_labels(line(&[0; 30]), 2);
        let cfg = SamplingConfig { budget: 8, foreground_fraction: 0.5, seed: 1 };
        let set = stratified_sample(&dump, &cfg).unwrap();
        assert_eq!(counts_of(&set, 2), vec![8, 0]);
    }

    #[test]
    fn budget_one_rejected() {
        let dump = dump_from_labels(line(&[0; 4]), 1);
        let cfg = SamplingConfig { budget: 1, ..Default::default() };
        assert_eq!(stratified_sample(&dump, &cfg), Err(SamplingError::BudgetTooSmall(1)));
    }

    #[test]
    fn empty_volume_rejected() {
        let dump = dump_from_labels(LabelVolume::new([0, 0, 0], vec![]), 1);
        assert_eq!(
            stratified_sample(&dump, &SamplingConfig::default()),
            Err(SamplingError::EmptyVolume)
        );
    }

    #[test]
    fn shortfall_goes_to_background_and_back() {
        // class 1 rare: shortfall to background
        assert_eq!(stratum_quotas(&[50, 3, 40], 20, 0.5), vec![12, 3, 5]);
        // remainder to the rarest foreground class first
        assert_eq!(stratum_quotas(&[50, 30, 20], 11, 0.5), vec![5, 3, 3]);
        assert_eq!(stratum_quotas(&[50, 20, 30], 11, 0.5), vec![5, 3, 3]);
        assert_eq!(stratum_quotas(&[50, 30, 20], 9, 0.5), vec![4, 2, 3]);
        // background too small: its leftover returns to foreground
        assert_eq!(stratum_quotas(&[2, 40, 40], 20, 0.5), vec![2, 9, 9]);
        // no background at all
        assert_eq!(stratum_quotas(&[0, 40], 10, 0.5), vec![0, 10]);
        // fewer voxels than budget: take everything
        assert_eq!(stratum_quotas(&[3, 2], 10, 0.5), vec![3, 2]);
    }

    #[test]
    fn axis_mapping_rule() {
        for p in 0..8 {
            assert_eq!(map_axis(p, 8, 8), p);
        }
        let down: Vec<usize> = (0..8).map(|p| map_axis(p, 8, 4)).collect();
        assert_eq!(down, vec![0, 0, 1, 1, 2, 2, 3, 3]);
        // upsampling: centre of cell 0 lands exactly between 0 and 1 -> lower
        let up: Vec<usize> = (0..4).map(|p| map_axis(p, 4, 8)).collect();
        assert_eq!(up, vec![0, 2, 4, 6]);
        let odd: Vec<usize> = (0..5).map(|p| map_axis(p, 5, 2)).collect();
        // centres: -0.3, 0.1, 0.5, 0.9, 1.3 -> 0, 0, 0 (tie down), 1, 1
        assert_eq!(odd, vec![0, 0, 0, 1, 1]);
    }

    #[test]
    fn features_follow_coarse_grid() {
        let labels = LabelVolume::new([1, 1, 4], vec![0, 0, 1, 1]);
        let dump = StageFeatureDump {
            tensor: FeatureTensor::new(1, [1, 1, 2], vec![10.0, 20.0]),
            labels,
            stage: StageRole::Encoder(1),
            num_classes: 2,
        };
        let feats: Vec<f64> = (0..4).map(|z| point_at(&dump, [0, 0, z]).features[0]).collect();
        assert_eq!(feats, vec![10.0, 10.0, 20.0, 20.0]);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
        assert_eq!(derive_seed(9, &[3, 4]), derive_seed(9, &[3, 4]));
    }

    fn random_labels(seed: u64, n: usize, classes: u32) -> Vec<u32> {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        // skewed: background dominates
        (0..n)
            .map(|_| {
                if rng.random_bool(0.8) {
                    0
                } else {
                    rng.random_range(1..classes.max(2))
                }
            })
            .collect()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn quota_conservation_and_coverage(
            seed in 0u64..500, n in 1usize..300, classes in 1u32..5, budget in 2usize..120,
            frac in 0.05f64..0.95,
        ) {
            let labels = random_labels(seed, n, classes);
            let dump = dump_from_labels(line(&labels), classes.max(2) as usize);
            let cfg = SamplingConfig { budget, foreground_fraction: frac, seed };
            let set = stratified_sample(&dump, &cfg).unwrap();
            proptest::prop_assert_eq!(set.len(), budget.min(n));

            let mut counts = vec![0usize; classes.max(2) as usize];
            for &y in &labels { counts[y as usize] += 1; }
            let quotas = stratum_quotas(&counts, budget, frac);
            let got = counts_of(&set, counts.len());
            proptest::prop_assert_eq!(&got, &quotas);
            for c in 0..counts.len() {
                if counts[c] > 0 && quotas[c] > 0 {
                    proptest::prop_assert!(got[c] > 0);
                }
            }
            // deterministic
            proptest::prop_assert_eq!(stratified_sample(&dump, &cfg).unwrap(), set);
        }

        #[test]
        fn seeds_change_selection(seed in 0u64..500) {
            let labels = random_labels(seed, 200, 3);
            let dump = dump_from_labels(line(&labels), 3);
            let a = stratified_sample(&dump, &SamplingConfig { budget: 20, foreground_fraction: 0.5, seed }).unwrap();
            let b = stratified_sample(&dump, &SamplingConfig { budget: 20, foreground_fraction: 0.5, seed: seed + 1 }).unwrap();
            proptest::prop_assert_ne!(a, b);
        }
    }
}
