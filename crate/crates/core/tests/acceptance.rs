//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topo_transfer::engine::{self, ScoringConfig};
use topo_transfer::fusion::{self, calibrate_pilot_multi, fuse, gate, FusionConfig, ModelMetrics, PilotEntry};
use topo_transfer::graph::{self, Edge, EdgeList, GraphKind};
use topo_transfer::grtd::{grtd_score, GrtdConfig, LambdaMode};
use topo_transfer::ingest::StageFeatureDump;
use topo_transfer::lbtc::{
    extract_boundary_anchors, lbtc_score, leakage_rate, sample_patches, BoundaryAnchor, LbtcConfig, LbtcError,
    LocalPatch,
};
use topo_transfer::rank::weighted_kendall_tau;
use topo_transfer::synth::{RegimeKind, SynthRegime, SynthZoo};
use topo_transfer::types::{FeatureTensor, LabelVolume, LabeledPoint, SampleSet, StageRole};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, elapsed: Duration, limit: Option<Duration>, outcome: Outcome) -> bool {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = outcome.pass && in_time;
    let budget = limit.map(|l| format!(" (limit {}s)", l.as_secs())).unwrap_or_default();
    println!(
        "criterion {id} [{name}]: {} | {} | {:.2}s{budget}",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64()
    );
    pass
}

// Independent oracles
// ---------------------------------------------------------------------------

/// Minimum total weight over every (n-1)-edge subset that forms a tree.
fn enumerate_min_spanning_weight(n: usize, edges: &[Edge]) -> f64 {
    fn find(p: &mut [usize], x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    if n == 1 {
        return 0.0;
    }
    let m = edges.len();
    let k = n - 1;
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut parent: Vec<usize> = (0..n).collect();
        let mut acyclic = true;
        for &e in &idx {
            let (a, b) = (find(&mut parent, edges[e].i), find(&mut parent, edges[e].j));
            if a == b {
                acyclic = false;
                break;
            }
            parent[a] = b;
        }
        if acyclic {
            best = best.min(idx.iter().map(|&e| edges[e].w).sum());
        }
        // next k-combination of 0..m
        let mut p = k;
        while p > 0 && idx[p - 1] == m - k + p - 1 {
            p -= 1;
        }
        if p == 0 {
            return best;
        }
        idx[p - 1] += 1;
        for q in p..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Hyperbolic weighted tau from its definition, rank = number of strictly
/// better truths.
fn tau_oracle(scores: &[f64], truths: &[f64]) -> f64 {
    let n = scores.len();
    let rank = |i: usize| truths.iter().filter(|&&t| t > truths[i]).count() as f64;
    let (mut num, mut ws, mut wt) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i >= j {
                continue;
            }
            let w = 1.0 / (rank(i) + 1.0) + 1.0 / (rank(j) + 1.0);
            let cs = (scores[i] - scores[j]).signum() * f64::from(u8::from(scores[i] != scores[j]));
            let ct = (truths[i] - truths[j]).signum() * f64::from(u8::from(truths[i] != truths[j]));
            num += w * cs * ct;
            ws += w * cs.abs();
            wt += w * ct.abs();
        }
    }
    num / (ws * wt).sqrt()
}

/// O(n^3) Prim on the complete Euclidean graph; returns crossing-edge count.
fn crossing_edges(points: &[(Vec<f64>, u32)]) -> usize {
    let n = points.len();
    let dist = |a: usize, b: usize| {
        points[a].0.iter().zip(&points[b].0).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    let mut crossing = 0;
    for _ in 1..n {
        let mut best = (f64::INFINITY, 0, 0);
        for a in (0..n).filter(|&a| in_tree[a]) {
            for b in (0..n).filter(|&b| !in_tree[b]) {
                let d = dist(a, b);
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        in_tree[best.2] = true;
        if points[best.1].1 != points[best.2].1 {
            crossing += 1;
        }
    }
    crossing
}

fn sigmoid_oracle(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// Criteria
// ---------------------------------------------------------------------------

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut mismatches = 0;
    let graphs = 240;
    for g in 0..graphs {
        let n = 2 + g % 6;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                // a third of the graphs use small integer weights to force ties
                let w = if g % 3 == 0 {
                    f64::from(rng.random_range(0..4u8))
                } else {
                    rng.random_range(0.0..10.0)
                };
                edges.push(Edge { i, j, w });
            }
        }
        let oracle = enumerate_min_spanning_weight(n, &edges);
        let mut shuffled = edges.clone();
        shuffled.shuffle(&mut rng);
        let kruskal = graph::minimum_spanning_tree(&EdgeList {
            n,
            edges: shuffled,
            kind: GraphKind::Native,
        })
        .unwrap()
        .total_weight;
        let lookup = |i: usize, j: usize| {
            let (i, j) = (i.min(j), i.max(j));
            edges.iter().find(|e| e.i == i && e.j == j).unwrap().w
        };
        let prim = graph::dense_mst(n, lookup).total_weight;
        for got in [kruskal, prim] {
            let rel = (got - oracle).abs() / oracle.abs().max(1.0);
            worst = worst.max(rel);
            if rel > 1e-12 {
                mismatches += 1;
            }
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{graphs} graphs (n = 2..7), {mismatches} mismatches, worst relative error {worst:.1e}"),
    }
}

fn criterion_2() -> Outcome {
    let points = [0.0, 1.0, 10.0]
        .iter()
        .zip([0u32, 0, 1])
        .enumerate()
        .map(|(k, (&x, y))| LabeledPoint {
            features: vec![x],
            label: y,
            voxel_index: [0, 0, k],
            stage: StageRole::Decoder(0),
        })
        .collect();
    let sets = BTreeMap::from([(0, SampleSet::new(points, 1, 2))]);
    let cfg = GrtdConfig {
        lambda: LambdaMode::Fixed(4.0),
        stages: vec![0],
        standardize: false,
    };
    let score = grtd_score(&sets, &cfg).unwrap().score;
    Outcome {
        pass: (score + 6.0).abs() <= 1e-12,
        detail: format!("score {score:.17e}, expected -6"),
    }
}

fn random_patch(rng: &mut ChaCha8Rng, n: usize, classes: u32, dim: usize) -> LocalPatch {
    let mut labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let points = labels
        .into_iter()
        .enumerate()
        .map(|(k, y)| LabeledPoint {
            features: (0..dim).map(|_| rng.random_range(-1.0..1.0) + f64::from(y)).collect(),
            label: y,
            voxel_index: [0, k / 16, k % 16],
            stage: StageRole::Encoder(0),
        })
        .collect();
    LocalPatch {
        anchor: BoundaryAnchor {
            voxel_index: [0, 0, 0],
            classes_adjacent: vec![0, 1],
        },
        points: SampleSet::new(points, dim, classes as usize),
        radius: 1,
    }
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    let trials = 600;
    for _ in 0..trials {
        let n = rng.random_range(2..60);
        let classes = rng.random_range(2..5);
        let dim = rng.random_range(1..5);
        let patch = random_patch(&mut rng, n, classes, dim);
        let rho = leakage_rate(&patch).unwrap();
        let lo = 1.0 / (n - 1) as f64;
        if !(rho >= lo - 1e-15 && rho <= 1.0) {
            violations += 1;
        }
    }

    // Single-class windows: a hand-placed anchor in a uniform region next to
    // the real boundary anchors must never be scored.
    let mut labels = LabelVolume::filled([12, 12, 12], 0);
    for x in 0..4 {
        for y in 0..12 {
            for z in 0..12 {
                labels.set([x, y, z], 1);
            }
        }
    }
    let n = labels.len();
    let tensor = FeatureTensor::new(1, labels.shape, (0..n).map(|k| (k % 7) as f32).collect());
    let dump = StageFeatureDump {
        tensor,
        labels: labels.clone(),
        stage: StageRole::Encoder(0),
        num_classes: 2,
    };
    let mut anchors = extract_boundary_anchors(&labels, Default::default());
    anchors.push(BoundaryAnchor {
        voxel_index: [10, 6, 6],
        classes_adjacent: vec![0],
    });
    let cfg = LbtcConfig {
        num_patches: anchors.len(),
        ..LbtcConfig::default()
    };
    let patches = sample_patches(&anchors, &dump, &cfg).unwrap();
    let single_scored = patches.iter().any(|p| p.points.distinct_labels() < 2);
    let uniform = StageFeatureDump {
        labels: LabelVolume::filled([6, 6, 6], 1),
        tensor: FeatureTensor::new(1, [6, 6, 6], vec![0.0; 216]),
        stage: StageRole::Encoder(0),
        num_classes: 2,
    };
    let uniform_rejected = matches!(lbtc_score(&[&uniform], &LbtcConfig::default()), Err(LbtcError::NoValidPatch));
    Outcome {
        pass: violations == 0 && !single_scored && uniform_rejected && patches.len() == anchors.len() - 1,
        detail: format!(
            "{trials} multi-class patches, {violations} outside [1/(n-1), 1]; single-class window discarded: {}; uniform volume rejected: {uniform_rejected}",
            !single_scored
        ),
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // LBTC on a random volume with boundary-correlated features
    let shape = [10, 10, 10];
    let mut labels = LabelVolume::filled(shape, 0);
    for lin in 0..labels.len() {
        let [x, y, z] = labels.unravel(lin);
        let y_label = u32::from(x + y / 3 > 6) + u32::from(z > 6 && x < 4);
        labels.set([x, y, z], y_label);
    }
    let dim = 3;
    let n = labels.len();
    let mut data = vec![0f32; dim * n];
    for lin in 0..n {
        let y = labels.data[lin];
        for c in 0..dim {
            data[c * n + lin] = (rng.random_range(-1.0..1.0) + if c as u32 == y { 1.2 } else { 0.0 }) as f32;
        }
    }
    let dump = StageFeatureDump {
        tensor: FeatureTensor::new(dim, shape, data.clone()),
        labels: labels.clone(),
        stage: StageRole::Encoder(0),
        num_classes: 3,
    };
    let cfg = LbtcConfig {
        num_patches: 40,
        seed: 17,
        ..LbtcConfig::default()
    };
    let res = lbtc_score(&[&dump], &cfg).unwrap();
    let mut rho_sum = 0.0;
    let mut rho_err: f64 = 0.0;
    for p in &res.per_patch {
        let [ax, ay, az] = p.anchor;
        let r = cfg.radius;
        let mut pts = Vec::new();
        for x in ax.saturating_sub(r)..=(ax + r).min(shape[0] - 1) {
            for y in ay.saturating_sub(r)..=(ay + r).min(shape[1] - 1) {
                for z in az.saturating_sub(r)..=(az + r).min(shape[2] - 1) {
                    let lin = labels.linear([x, y, z]);
                    let f: Vec<f64> = (0..dim).map(|c| f64::from(data[c * n + lin])).collect();
                    pts.push((f, labels.data[lin]));
                }
            }
        }
        let rho = crossing_edges(&pts) as f64 / (pts.len() - 1) as f64;
        rho_err = rho_err.max((rho - p.rho).abs());
        rho_sum += rho;
    }
    let lbtc_oracle = 1.0 - rho_sum / res.per_patch.len() as f64;
    let lbtc_err = (lbtc_oracle - res.score).abs();

    // Fusion on random zoos
    let mut fuse_err: f64 = 0.0;
    for _ in 0..200 {
        let m = rng.random_range(2..10);
        let zoo: Vec<ModelMetrics> = (0..m)
            .map(|k| ModelMetrics {
                model_id: format!("m{k}"),
                grtd: rng.random_range(-100.0..0.0),
                lbtc: rng.random_range(0.0..1.0),
            })
            .collect();
        let cfg = FusionConfig::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(1..40)).unwrap();
        let got = fuse(&zoo, &cfg).unwrap();
        let alpha = sigmoid_oracle(cfg.gamma * f64::from(cfg.num_classes).ln() + cfg.beta);
        let norm = |v: Vec<f64>| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            v.iter().map(|x| (x - lo) / (hi - lo)).collect::<Vec<_>>()
        };
        let g = norm(zoo.iter().map(|z| z.grtd).collect());
        let l = norm(zoo.iter().map(|z| z.lbtc).collect());
        fuse_err = fuse_err.max((alpha - got.alpha).abs());
        for k in 0..m {
            let s = alpha * g[k] + (1.0 - alpha) * l[k];
            fuse_err = fuse_err.max((s - got.fused[k].score).abs());
        }
    }
    Outcome {
        pass: rho_err <= 1e-12 && lbtc_err <= 1e-12 && fuse_err <= 1e-12,
        detail: format!(
            "{} patches: max |rho diff| {rho_err:.1e}, |LBTC diff| {lbtc_err:.1e}; 200 random zoos: max |S diff| {fuse_err:.1e}",
            res.per_patch.len()
        ),
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn criterion_5() -> Outcome {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut top_ok = true;
    let mut top_detail = Vec::new();
    for n in 2..=6 {
        // distinct, unevenly spaced truths plus a tied variant
        let distinct: Vec<f64> = (0..n).map(|k| 0.5 + 0.07 * (k * k) as f64).collect();
        let mut tied = distinct.clone();
        tied[0] = tied[1];
        let variants: Vec<&Vec<f64>> = if n >= 3 { vec![&distinct, &tied] } else { vec![&distinct] };
        for truths in variants {
            for perm in permutations(n) {
                let scores: Vec<f64> = perm.iter().map(|&p| p as f64).collect();
                let got = weighted_kendall_tau(&scores, truths).unwrap();
                worst = worst.max((got - tau_oracle(&scores, truths)).abs());
                checked += 1;
            }
        }
        if n >= 3 {
            // truths descending: item 0 is best
            let truths: Vec<f64> = (0..n).map(|k| (n - k) as f64).collect();
            let mut top = truths.clone();
            top.swap(0, 1);
            let mut bottom = truths.clone();
            bottom.swap(n - 2, n - 1);
            let t_top = weighted_kendall_tau(&top, &truths).unwrap();
            let t_bot = weighted_kendall_tau(&bottom, &truths).unwrap();
            top_ok &= t_top < t_bot;
            top_detail.push(format!("n={n}: {t_top:.4} < {t_bot:.4}"));
        }
    }
    Outcome {
        pass: worst <= 1e-12 && top_ok,
        detail: format!(
            "{checked} permutations, max |diff| {worst:.1e}; top swap vs bottom swap {} (n = 2 has a single pair)",
            top_detail.join(", ")
        ),
    }
}

struct RegimeRun {
    fused: Vec<f64>,
    grtd: Vec<f64>,
    lbtc: Vec<f64>,
    gamma: f64,
    beta: f64,
    elapsed: Duration,
}

const MODELS: usize = 7;
const EVAL_SEEDS: u64 = 20;
const PILOT_ZOOS: u64 = 10;
const PILOT_SEED_BASE: u64 = 10_000;

fn zoo_metrics(regime: &SynthRegime, seed: u64) -> (Vec<ModelMetrics>, Vec<f64>) {
    let zoo = SynthZoo::generate(regime, MODELS, 1, seed).unwrap();
    let ids: Vec<String> = zoo.models.iter().map(|m| m.model_id.clone()).collect();
    let cfg = ScoringConfig {
        seed,
        ..ScoringConfig::default()
    };
    let scores = engine::score_zoo(&ids, |m| Ok(vec![zoo.dumps(m, 0)]), &cfg).unwrap();
    let truths = zoo.models.iter().map(|m| m.ground_truth()).collect();
    (scores.iter().map(|s| s.metrics()).collect(), truths)
}

fn tau_or_zero(scores: &[f64], truths: &[f64]) -> f64 {
    weighted_kendall_tau(scores, truths).unwrap_or(0.0)
}

fn run_regime(kind: RegimeKind) -> RegimeRun {
    let start = Instant::now();
    let regime = SynthRegime::for_kind(kind);
    let pilots: Vec<Vec<PilotEntry>> = (0..PILOT_ZOOS)
        .map(|k| {
            let (metrics, truths) = zoo_metrics(&regime, PILOT_SEED_BASE + k);
            metrics
                .into_iter()
                .zip(truths)
                .map(|(m, t)| PilotEntry {
                    model_id: m.model_id,
                    grtd: m.grtd,
                    lbtc: m.lbtc,
                    ground_truth: Some(t),
                })
                .collect()
        })
        .collect();
    let cal = calibrate_pilot_multi(&pilots, &fusion::default_grid(), regime.num_classes).unwrap();
    let (mut fused, mut grtd, mut lbtc) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..EVAL_SEEDS {
        let (metrics, truths) = zoo_metrics(&regime, seed);
        let z = fuse(&metrics, &cal.selected).unwrap();
        let col = |f: &dyn Fn(&ModelMetrics) -> f64| metrics.iter().map(f).collect::<Vec<_>>();
        fused.push(tau_or_zero(&z.fused.iter().map(|f| f.score).collect::<Vec<_>>(), &truths));
        grtd.push(tau_or_zero(&col(&|m| m.grtd), &truths));
        lbtc.push(tau_or_zero(&col(&|m| m.lbtc), &truths));
    }
    RegimeRun {
        fused,
        grtd,
        lbtc,
        gamma: cal.selected.gamma,
        beta: cal.selected.beta,
        elapsed: start.elapsed(),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_6(runs: &[(RegimeKind, RegimeRun)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, r) in runs {
        let hits = r.fused.iter().filter(|&&t| t >= 0.9).count();
        let in_time = r.elapsed <= Duration::from_secs(120);
        pass &= hits >= 18 && in_time;
        parts.push(format!(
            "{kind:?}: {hits}/20 seeds with fused tau_w >= 0.9 (min {:.3}), {:.1}s incl. calibration",
            r.fused.iter().cloned().fold(f64::INFINITY, f64::min),
            r.elapsed.as_secs_f64()
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_7(runs: &[(RegimeKind, RegimeRun)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, r) in runs {
        let (f, g, l) = (mean(&r.fused), mean(&r.grtd), mean(&r.lbtc));
        let ordered = match kind {
            RegimeKind::Fragmented => l > g,
            RegimeKind::Structured => g > l,
        };
        let close = f >= g.max(l) - 0.05;
        pass &= ordered && close;
        parts.push(format!(
            "{kind:?}: mean tau_w grtd {g:.3}, lbtc {l:.3}, fused {f:.3} (gamma {}, beta {})",
            r.gamma, r.beta
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn run_pipeline(bin: &str, dir: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    let step = |args: &[&str]| {
        let out = Command::new(bin)
            .current_dir(dir)
            .args(["--threads", threads])
            .args(args)
            .output()
            .expect("binary runs");
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    step(&["synth", "--regime", "structured", "--models", "7", "--seed", "5", "--out", "zoo"]);
    step(&["rank", "--zoo", "zoo/zoo.json", "--seed", "5", "--out", "rank.json"]);
    step(&["eval", "--zoo", "zoo/zoo.json", "--scores", "rank.json", "--out", "eval.json"]);
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn criterion_8() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_topo-transfer");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let one = run_pipeline(bin, a.path(), "1");
    let eight = run_pipeline(bin, b.path(), "8");
    let again = run_pipeline(bin, c.path(), "1");
    let json = one.iter().filter(|(n, _)| n.ends_with(".json")).count();
    let same = one == eight && one == again;
    Outcome {
        pass: same && json >= 4,
        detail: format!(
            "{} artifacts ({json} JSON) byte-identical across runs and --threads 1 vs 8: {same}",
            one.len()
        ),
    }
}

fn criterion_9() -> Outcome {
    let mut monotone = true;
    for gamma in [0.1, 0.5, 1.0, 2.0] {
        for beta in [-2.0, 0.0, 2.0] {
            let alphas: Vec<f64> = (1..=32).map(|c| gate(&FusionConfig::new(gamma, beta, c).unwrap())).collect();
            monotone &= alphas.windows(2).all(|w| w[1] > w[0]);
        }
    }
    let a2 = gate(&FusionConfig::new(1.0, 0.0, 2).unwrap());
    Outcome {
        pass: monotone && (a2 - 2.0 / 3.0).abs() <= 1e-12,
        detail: format!("strictly increasing over |C| = 1..32: {monotone}; alpha(1, 0, 2) = {a2:.17}"),
    }
}

fn timed<F: FnOnce() -> Outcome>(f: F) -> (Duration, Outcome) {
    let t = Instant::now();
    let o = f();
    (t.elapsed(), o)
}

fn main() {
    let mut all = true;
    let secs = Duration::from_secs;

    let (t, o) = timed(criterion_1);
    all &= report(1, "MST oracle equivalence", t, Some(secs(10)), o);
    let (t, o) = timed(criterion_2);
    all &= report(2, "GRTD closed form", t, None, o);
    let (t, o) = timed(criterion_3);
    all &= report(3, "leakage bounds", t, Some(secs(10)), o);
    let (t, o) = timed(criterion_4);
    all &= report(4, "LBTC and fusion arithmetic", t, None, o);
    let (t, o) = timed(criterion_5);
    all &= report(5, "weighted tau oracle", t, Some(secs(5)), o);

    let start = Instant::now();
    let runs: Vec<(RegimeKind, RegimeRun)> = [RegimeKind::Fragmented, RegimeKind::Structured]
        .into_iter()
        .map(|k| (k, run_regime(k)))
        .collect();
    let total = start.elapsed();
    all &= report(6, "synthetic ranking fidelity", total, Some(secs(240)), criterion_6(&runs));
    all &= report(7, "regime dissociation", total, Some(secs(300)), criterion_7(&runs));

    let (t, o) = timed(criterion_8);
    all &= report(8, "determinism", t, None, o);
    let (t, o) = timed(criterion_9);
    all &= report(9, "gate monotonicity", t, None, o);

    println!("acceptance: {}", if all { "ALL PASS" } else { "FAILURES PRESENT" });
    if !all {
        std::process::exit(1);
    }
}
