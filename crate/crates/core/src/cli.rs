//! Command-line surface. Machine-readable results go to `--out` or stdout;
//! logs and tables go to stderr.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;
use serde_json::Value;

use crate::engine::{self, ModelScore, ScoringConfig};
use crate::error::{Error, Result};
use crate::fusion::{self, Calibration, FusionConfig, PilotEntry, DEFAULT_BETA, DEFAULT_GAMMA};
use crate::grtd::LambdaMode;
use crate::ingest::{self, StageFeatureDump, ZooManifest};
use crate::lbtc::{Connectivity, DEFAULT_PATCHES, DEFAULT_RADIUS};
use crate::output;
use crate::rank::{self, RankingReport};
use crate::synth::{RegimeKind, SynthRegime, SynthZoo};

#[derive(Parser, Debug)]
#[command(name = "topo-transfer", version, about = "Training-free transferability ranking of segmentation encoders")]
pub struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Increase log verbosity on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-model GRTD, LBTC and fused scores in manifest order.
    Score(ScoreArgs),
    /// Models sorted by the selected metric, best first.
    Rank(ScoreArgs),
    /// Weighted Kendall tau of a score file against manifest Dice.
    Eval(EvalArgs),
    /// Grid search of the gate parameters on a pilot zoo with Dice.
    Calibrate(CalibrateArgs),
    /// Generate a synthetic zoo with known quality ordering.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Fused,
    Grtd,
    Lbtc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Fragmented,
    Structured,
}

#[derive(Args, Debug, Clone)]
pub struct ScoringArgs {
    /// Zoo manifest (zoo.json).
    #[arg(long)]
    pub zoo: PathBuf,
    /// Base seed for voxel and patch sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Voxels sampled per decoder stage and case.
    #[arg(long, default_value_t = crate::sampling::DEFAULT_BUDGET)]
    pub budget: usize,
    /// Share of the budget reserved for foreground classes.
    #[arg(long = "fg-frac", default_value_t = crate::sampling::DEFAULT_FOREGROUND_FRACTION)]
    pub fg_frac: f64,
    /// Semantic clipping distance: `median` (of inter-class distances per stage) or a positive number.
    #[arg(long, default_value = "median")]
    pub lambda: String,
    /// Z-score features per stage before building graphs.
    #[arg(long)]
    pub zscore: bool,
    /// Decoder stages for GRTD, comma separated (default: every decoder stage in the manifest).
    #[arg(long = "decoder-stages", value_delimiter = ',')]
    pub decoder_stages: Option<Vec<usize>>,
    /// Encoder stages for LBTC, comma separated (default: every encoder stage in the manifest).
    #[arg(long = "encoder-stages", value_delimiter = ',')]
    pub encoder_stages: Option<Vec<usize>>,
    /// Boundary patches per encoder stage and case.
    #[arg(long, default_value_t = DEFAULT_PATCHES)]
    pub patches: usize,
    /// Chebyshev radius of a boundary patch.
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: usize,
    /// Neighbourhood defining boundary voxels: 6 or 26.
    #[arg(long, default_value_t = 6)]
    pub connectivity: u8,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub scoring: ScoringArgs,
    /// Gate slope on ln|C|.
    #[arg(long, default_value_t = DEFAULT_GAMMA, allow_negative_numbers = true)]
    pub gamma: f64,
    /// Gate offset.
    #[arg(long, default_value_t = DEFAULT_BETA, allow_negative_numbers = true)]
    pub beta: f64,
    /// Metric reported as `score` and used for ordering.
    #[arg(long, value_enum, default_value_t = Metric::Fused)]
    pub metric: Metric,
    /// Write every decoder-stage MST edge list into this directory.
    #[arg(long = "dump-mst")]
    pub dump_mst: Option<PathBuf>,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Zoo manifest providing per-model Dice.
    #[arg(long)]
    pub zoo: PathBuf,
    /// Output of `score` or `rank`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::Fused)]
    pub metric: Metric,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub scoring: ScoringArgs,
    /// `default` (gamma, beta in {-2..2}) or a JSON file holding a list of [gamma, beta] pairs.
    #[arg(long, default_value = "default")]
    pub grid: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub regime: RegimeArg,
    /// Zoo size; qualities are evenly spaced in [0, 1].
    #[arg(long, default_value_t = 7)]
    pub models: usize,
    /// Label volumes (cases) per task.
    #[arg(long, default_value_t = 1)]
    pub cases: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Edge length of the cubic volume.
    #[arg(long = "volume-size", default_value_t = 32)]
    pub volume_size: usize,
    /// Output directory (receives zoo.json, labels and stage tensors).
    #[arg(long)]
    pub out: PathBuf,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn parse_lambda(s: &str) -> Result<LambdaMode> {
    if s == "median" {
        return Ok(LambdaMode::MedianInterClass);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(LambdaMode::Fixed(v)),
        _ => Err(usage(format!("--lambda must be `median` or a positive number, got {s:?}"))),
    }
}

fn parse_connectivity(c: u8) -> Result<Connectivity> {
    match c {
        6 => Ok(Connectivity::Face6),
        26 => Ok(Connectivity::Full26),
        _ => Err(usage(format!("--connectivity must be 6 or 26, got {c}"))),
    }
}

fn stages_of(manifest: &ZooManifest, decoder: bool) -> Vec<usize> {
    let mut out: Vec<usize> = manifest
        .models
        .iter()
        .flat_map(|m| m.stages())
        .filter(|s| s.is_decoder() == decoder)
        .map(|s| s.index())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn resolve_config(a: &ScoringArgs, manifest: &ZooManifest, gamma: f64, beta: f64) -> Result<ScoringConfig> {
    if !(a.fg_frac > 0.0 && a.fg_frac < 1.0) {
        return Err(usage(format!("--fg-frac must lie in (0, 1), got {}", a.fg_frac)));
    }
    if a.patches == 0 || a.radius == 0 {
        return Err(usage("--patches and --radius must be >= 1"));
    }
    if !gamma.is_finite() || !beta.is_finite() {
        return Err(usage("--gamma and --beta must be finite"));
    }
    let pick = |given: &Option<Vec<usize>>, decoder: bool| {
        let mut v = given.clone().unwrap_or_else(|| stages_of(manifest, decoder));
        v.sort_unstable();
        v.dedup();
        v
    };
    Ok(ScoringConfig {
        seed: a.seed,
        budget: a.budget,
        foreground_fraction: a.fg_frac,
        lambda: parse_lambda(&a.lambda)?,
        standardize: a.zscore,
        decoder_stages: pick(&a.decoder_stages, true),
        encoder_stages: pick(&a.encoder_stages, false),
        num_patches: a.patches,
        radius: a.radius,
        connectivity: parse_connectivity(a.connectivity)?,
        gamma,
        beta,
    })
}

fn load_model(manifest: &ZooManifest, m: usize) -> Result<Vec<Vec<StageFeatureDump>>> {
    let entry = &manifest.models[m];
    (0..manifest.task.num_cases())
        .map(|case| {
            entry
                .stages()
                .into_iter()
                .map(|stage| Ok(ingest::load_stage_dump(entry, stage, case, &manifest.task)?))
                .collect()
        })
        .collect()
}

fn score_manifest(manifest: &ZooManifest, cfg: &ScoringConfig) -> Result<Vec<ModelScore>> {
    let ids: Vec<String> = manifest.models.iter().map(|m| m.model_id.clone()).collect();
    info!("scoring {} models over {} case(s)", ids.len(), manifest.task.num_cases());
    engine::score_zoo(&ids, |m| load_model(manifest, m), cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|source| Error::Io {
                    path: dir.to_path_buf(),
                    source,
                })?;
            }
            fs::write(path, text).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ScoredModel {
    model_id: String,
    grtd: f64,
    lbtc: f64,
    alpha: f64,
    fused: f64,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank: Option<usize>,
}

#[derive(Serialize)]
struct ScoreResult {
    metric: Metric,
    num_classes: usize,
    alpha: f64,
    models: Vec<ScoredModel>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    details: Vec<ModelScore>,
}

#[derive(Serialize)]
struct ConfigRecord<'a, T: Serialize> {
    zoo: String,
    #[serde(flatten)]
    args: &'a T,
}

fn metric_value(metric: Metric, grtd: f64, lbtc: f64, fused: f64) -> f64 {
    match metric {
        Metric::Fused => fused,
        Metric::Grtd => grtd,
        Metric::Lbtc => lbtc,
    }
}

fn run_score(args: &ScoreArgs, ranked: bool) -> Result<()> {
    let manifest = ingest::load_manifest(&args.scoring.zoo)?;
    let cfg = resolve_config(&args.scoring, &manifest, args.gamma, args.beta)?;
    if manifest.models.len() < 2 {
        return Err(fusion::FusionError::TooFewModels(manifest.models.len()).into());
    }
    let scores = score_manifest(&manifest, &cfg)?;
    if let Some(dir) = &args.dump_mst {
        for (m, s) in scores.iter().enumerate() {
            engine::dump_msts(&s.model_id, &load_model(&manifest, m)?, &cfg, dir)?;
        }
    }
    let zoo = engine::fuse_scores(&scores, &cfg, manifest.task.num_classes as u32)?;
    let mut models: Vec<ScoredModel> = engine::transferability(&zoo)
        .into_iter()
        .map(|t| ScoredModel {
            score: metric_value(args.metric, t.grtd, t.lbtc, t.fused),
            model_id: t.model_id,
            grtd: t.grtd,
            lbtc: t.lbtc,
            alpha: t.alpha,
            fused: t.fused,
            rank: None,
        })
        .collect();
    let command = if ranked { "rank" } else { "score" };
    let details = if ranked {
        models.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.model_id.cmp(&b.model_id)));
        for (k, m) in models.iter_mut().enumerate() {
            m.rank = Some(k + 1);
        }
        for m in &models {
            eprintln!("{:>3}  {:<24} {}", m.rank.unwrap_or(0), m.model_id, output::format_float(m.score));
        }
        Vec::new()
    } else {
        scores
    };
    let result = ScoreResult {
        metric: args.metric,
        num_classes: manifest.task.num_classes,
        alpha: zoo.alpha,
        models,
        details,
    };
    let record = ConfigRecord {
        zoo: args.scoring.zoo.display().to_string(),
        args: &ConfigWithMetric { scoring: &cfg, metric: args.metric },
    };
    emit(args.out.as_deref(), &output::document(command, &record, &result))
}

#[derive(Serialize)]
struct ConfigWithMetric<'a> {
    #[serde(flatten)]
    scoring: &'a ScoringConfig,
    metric: Metric,
}

fn read_scores(path: &Path, metric: Metric) -> Result<Vec<(String, f64)>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |reason: &str| {
        Error::Ingest(ingest::IngestError::Malformed {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        })
    };
    let doc: Value = serde_json::from_str(&text).map_err(|e| bad(&e.to_string()))?;
    let models = doc["result"]["models"]
        .as_array()
        .ok_or_else(|| bad("missing result.models array"))?;
    let key = match metric {
        Metric::Fused => "fused",
        Metric::Grtd => "grtd",
        Metric::Lbtc => "lbtc",
    };
    models
        .iter()
        .map(|m| {
            let id = m["model_id"].as_str().ok_or_else(|| bad("entry without model_id"))?;
            let v = m[key].as_f64().ok_or_else(|| bad(&format!("entry {id:?} without numeric {key}")))?;
            Ok((id.to_string(), v))
        })
        .collect()
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let manifest = ingest::load_manifest(&args.zoo)?;
    let scores = read_scores(&args.scores, args.metric)?;
    let report: RankingReport = rank::evaluate_scores(&scores, &manifest.ground_truth())?;
    eprintln!("{:<24} {:>24} {:>24}", "model", "score", "dice");
    for p in &report.pairs {
        eprintln!(
            "{:<24} {:>24} {:>24}",
            p.model_id,
            output::format_float(p.score),
            output::format_float(p.ground_truth)
        );
    }
    eprintln!("tau_w = {}", output::format_float(report.tau_w));
    eprintln!("tau   = {}", output::format_float(report.tau_plain));
    #[derive(Serialize)]
    struct EvalConfig {
        zoo: String,
        scores: String,
        metric: Metric,
    }
    let cfg = EvalConfig {
        zoo: args.zoo.display().to_string(),
        scores: args.scores.display().to_string(),
        metric: args.metric,
    };
    emit(args.out.as_deref(), &output::document("eval", &cfg, &report))
}

fn read_grid(spec: &str) -> Result<Vec<(f64, f64)>> {
    if spec == "default" {
        return Ok(fusion::default_grid());
    }
    let path = Path::new(spec);
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let grid: Vec<(f64, f64)> = serde_json::from_str(&text).map_err(|e| {
        Error::Ingest(ingest::IngestError::Malformed {
            path: path.to_path_buf(),
            reason: format!("grid must be a list of [gamma, beta] pairs: {e}"),
        })
    })?;
    if grid.iter().any(|(g, b)| !g.is_finite() || !b.is_finite()) {
        return Err(usage("grid values must be finite"));
    }
    Ok(grid)
}

#[derive(Serialize)]
struct CalibrateResult {
    calibrated: bool,
    selected: FusionConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration: Option<Calibration>,
}

fn run_calibrate(args: &CalibrateArgs) -> Result<()> {
    let manifest = ingest::load_manifest(&args.scoring.zoo)?;
    let cfg = resolve_config(&args.scoring, &manifest, DEFAULT_GAMMA, DEFAULT_BETA)?;
    let grid = read_grid(&args.grid)?;
    let num_classes = manifest.task.num_classes as u32;
    let truths = manifest.ground_truth();
    let result = if truths.len() < manifest.models.len() || manifest.models.len() < 2 {
        warn!("pilot zoo lacks Dice for some models; keeping default gate parameters");
        CalibrateResult {
            calibrated: false,
            selected: FusionConfig::with_defaults(num_classes),
            calibration: None,
        }
    } else {
        let scores = score_manifest(&manifest, &cfg)?;
        let pilot: Vec<PilotEntry> = scores
            .iter()
            .map(|s| PilotEntry {
                model_id: s.model_id.clone(),
                grtd: s.grtd,
                lbtc: s.lbtc,
                ground_truth: truths.get(&s.model_id).copied(),
            })
            .collect();
        let cal = fusion::calibrate_pilot(&pilot, &grid, num_classes)?;
        info!("selected gamma={} beta={} tau_w={}", cal.selected.gamma, cal.selected.beta, cal.tau_w);
        CalibrateResult {
            calibrated: true,
            selected: cal.selected,
            calibration: Some(cal),
        }
    };
    #[derive(Serialize)]
    struct CalConfig<'a> {
        zoo: String,
        grid: Vec<(f64, f64)>,
        scoring: &'a ScoringConfig,
    }
    let record = CalConfig {
        zoo: args.scoring.zoo.display().to_string(),
        grid,
        scoring: &cfg,
    };
    emit(args.out.as_deref(), &output::document("calibrate", &record, &result))
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let kind = match args.regime {
        RegimeArg::Fragmented => RegimeKind::Fragmented,
        RegimeArg::Structured => RegimeKind::Structured,
    };
    let regime = SynthRegime {
        volume_size: args.volume_size,
        ..SynthRegime::for_kind(kind)
    };
    let zoo = SynthZoo::generate(&regime, args.models, args.cases, args.seed)?;
    info!("writing {} models to {}", zoo.models.len(), args.out.display());
    zoo.write(&args.out)?;
    #[derive(Serialize)]
    struct SynthConfig<'a> {
        regime: &'a SynthRegime,
        models: usize,
        cases: usize,
        seed: u64,
    }
    #[derive(Serialize)]
    struct SynthResult<'a> {
        manifest: String,
        models: &'a [crate::synth::SynthModelSpec],
        ground_truth: BTreeMap<String, f64>,
    }
    let cfg = SynthConfig {
        regime: &regime,
        models: args.models,
        cases: args.cases,
        seed: args.seed,
    };
    let result = SynthResult {
        manifest: "zoo.json".into(),
        models: &zoo.models,
        ground_truth: zoo.models.iter().map(|m| (m.model_id.clone(), m.ground_truth())).collect(),
    };
    emit(Some(&args.out.join("synth.json")), &output::document("synth", &cfg, &result))
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Score(a) => run_score(a, false),
        Command::Rank(a) => run_score(a, true),
        Command::Eval(a) => run_eval(a),
        Command::Calibrate(a) => run_calibrate(a),
        Command::Synth(a) => run_synth(a),
    }
}

/// Runs `cli` on a dedicated pool of `cli.threads` workers.
pub fn run_with_threads(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| usage(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run(cli))
}
