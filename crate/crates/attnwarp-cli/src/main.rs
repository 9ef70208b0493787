//! Command-line pipeline for learned time warping: synthetic data
//! generation, DTW-guided pre-training, contrastive training, evaluation
//! (learned metric or DTW baseline), and warp-matrix export. Every command
//! writes a run manifest first and finalizes it with artifact checksums.

mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use attnwarp::core::{MatchRatio, TrainingConfig, UNetArch, UNetParams};
use attnwarp::data::synth::{generate_synthetic, is_forgery, SynthConfig};
use attnwarp::data::{load_dataset, normalize, save_dataset, Dataset, NormalizeMode};
use attnwarp::dtw::{dtw_align, dtw_target, local_cost_matrix};
use attnwarp::eval::{
    classification_report, verification_report, DtwMetric, EvalReport, ModelMetric, PairMetric,
};
use attnwarp::train::{pretrain, train_contrastive, LogRecord, PretrainConfig, TrainState, ValMetric};
use attnwarp::warpnet::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use attnwarp::warpnet::{make_paths, outer_concat, unet_forward, warp};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "attnwarp", version)]
#[command(about = "Learned time warping for multivariate time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    Generate(GenerateArgs),
    /// DTW-guided pre-training of the warping network.
    Pretrain(PretrainArgs),
    /// Contrastive training with validation-based model selection.
    Train(TrainArgs),
    /// Evaluate a checkpoint (classification accuracy or verification EER).
    Eval(EvalArgs),
    /// Evaluate the non-parametric DTW baseline on the same protocols.
    Dtw(DtwArgs),
    /// Export alignment matrices for one pair as CSV blocks.
    ExportWarp(ExportWarpArgs),
}

/// One-flag reproduction of the two hyperparameter regimes at desk scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// W=64 (resampled from 50), K=2, small net, batch 512, uniform pairs.
    UnipenLike,
    /// W=256, K=64, large net, batch 15, 1:2 matching ratio, 5 references.
    McytLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormalizeArg {
    None,
    Zscore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ArchArg {
    /// Seven encoder / seven decoder convolutions.
    Small,
    /// Eight encoder / eight decoder convolutions.
    Large,
    /// Two-level net for smoke tests.
    Tiny,
}

impl ArchArg {
    fn build(self, input_channels: usize) -> UNetArch {
        match self {
            ArchArg::Small => UNetArch::small(input_channels),
            ArchArg::Large => UNetArch::large(input_channels),
            ArchArg::Tiny => UNetArch::tiny(input_channels),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Classify,
    Verify,
}

#[derive(Args)]
struct GenerateArgs {
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long = "per-class")]
    per_class: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "warp-strength")]
    warp_strength: Option<f64>,
    #[arg(long = "noise-std")]
    noise_std: Option<f64>,
    #[arg(long = "reorder-fraction")]
    reorder_fraction: Option<f64>,
    #[arg(long = "forgeries-per-class")]
    forgeries_per_class: Option<usize>,
    #[arg(long = "forgery-strength")]
    forgery_strength: Option<f64>,
    #[arg(long = "train-frac")]
    train_frac: Option<f64>,
    #[arg(long = "val-frac")]
    val_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-dimension z-score (train-split statistics) or none.
    #[arg(long, value_enum, default_value = "zscore")]
    normalize: NormalizeArg,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV; defaults to `<out>.log.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum)]
    arch: Option<ArchArg>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Matching:non-matching ratio, e.g. `1:2`, or `uniform`.
    #[arg(long)]
    ratio: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "probe-pairs")]
    probe_pairs: Option<usize>,
    #[arg(long = "plateau-window")]
    plateau_window: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// `he` or `pretrained:<checkpoint path>`.
    #[arg(long, default_value = "he")]
    init: String,
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV; defaults to `<out>.log.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Architecture for `--init he`.
    #[arg(long, value_enum)]
    arch: Option<ArchArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "steps-per-epoch")]
    steps_per_epoch: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    ratio: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Validation metric; by default verification data selects by EER and
    /// classification data by k-NN accuracy.
    #[arg(long = "val-metric")]
    val_metric: Option<TaskArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    refs: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    refs: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    /// Report file.
    #[arg(long)]
    out: PathBuf,
    /// Histogram CSV; defaults to `<out>.hist.csv`.
    #[arg(long)]
    hist: Option<PathBuf>,
}

#[derive(Args)]
struct DtwArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    refs: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    hist: Option<PathBuf>,
}

#[derive(Args)]
struct ExportWarpArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Dataset index of series A.
    #[arg(long = "index-a")]
    index_a: usize,
    /// Dataset index of series B.
    #[arg(long = "index-b")]
    index_b: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> Result<()> {
    if let Ok(threads) = std::env::var("ATTNWARP_THREADS") {
        let n: usize = threads
            .parse()
            .context("ATTNWARP_THREADS must be an integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    match Cli::parse().command {
        Command::Generate(args) => cmd_generate(args),
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Dtw(args) => cmd_dtw(args),
        Command::ExportWarp(args) => cmd_export_warp(args),
    }
}

fn require(ok: bool, flag: &str, why: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        bail!("invalid {flag}: {why}");
    }
}

fn parse_ratio(s: &str) -> Result<Option<MatchRatio>> {
    if s == "uniform" {
        return Ok(None);
    }
    let (m, n) = s
        .split_once(':')
        .with_context(|| format!("invalid --ratio '{s}': expected M:N or 'uniform'"))?;
    let m: u32 = m.parse().with_context(|| format!("invalid --ratio '{s}'"))?;
    let n: u32 = n.parse().with_context(|| format!("invalid --ratio '{s}'"))?;
    Ok(Some(MatchRatio::new(m, n)?))
}

fn write_log(path: &Path, history: &[LogRecord]) -> Result<()> {
    let mut out = String::from("epoch,step,loss,val_metric\n");
    for r in history {
        let val = r.val_metric.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", r.epoch, r.step, r.loss, val).unwrap();
    }
    fs::write(path, out).with_context(|| format!("writing log {}", path.display()))?;
    Ok(())
}

fn load_data(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn dataset_is_verification(ds: &Dataset) -> bool {
    ds.items().iter().any(|it| is_forgery(&it.label))
}

fn write_report(report: &EvalReport, out: &Path, hist: &Path) -> Result<()> {
    fs::write(out, report.to_kv_string())
        .with_context(|| format!("writing report {}", out.display()))?;
    fs::write(hist, report.histogram_csv())
        .with_context(|| format!("writing histogram {}", hist.display()))?;
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let base = SynthConfig::default_classification();
    let (preset_w, preset_k) = match args.preset {
        Some(Preset::UnipenLike) => (Some(64), Some(2)),
        Some(Preset::McytLike) => (Some(256), Some(64)),
        None => (None, None),
    };
    let cfg = SynthConfig {
        n_classes: args.classes.unwrap_or(base.n_classes),
        samples_per_class: args.per_class.unwrap_or(base.samples_per_class),
        w: args.w.or(preset_w).unwrap_or(base.w),
        k: args.k.or(preset_k).unwrap_or(base.k),
        warp_strength: args.warp_strength.unwrap_or(base.warp_strength),
        noise_std: args.noise_std.unwrap_or(base.noise_std),
        reorder_fraction: args.reorder_fraction.unwrap_or(base.reorder_fraction),
        forgeries_per_class: args.forgeries_per_class.unwrap_or(0),
        forgery_strength: args.forgery_strength.unwrap_or(base.forgery_strength),
        split_fractions: (
            args.train_frac.unwrap_or(base.split_fractions.0),
            args.val_frac.unwrap_or(base.split_fractions.1),
        ),
        seed: args.seed.unwrap_or(base.seed),
    };
    require(cfg.n_classes >= 1, "--classes", "must be >= 1")?;
    require(cfg.samples_per_class >= 1, "--per-class", "must be >= 1")?;
    require(cfg.w >= 2, "--w", "must be >= 2")?;
    require(cfg.k >= 1, "--k", "must be >= 1")?;
    require(
        (0.0..=1.0).contains(&cfg.warp_strength),
        "--warp-strength",
        "must be in [0, 1]",
    )?;
    require(cfg.noise_std >= 0.0, "--noise-std", "must be >= 0")?;
    require(
        (0.0..=1.0).contains(&cfg.reorder_fraction),
        "--reorder-fraction",
        "must be in [0, 1]",
    )?;
    require(
        cfg.split_fractions.0 >= 0.0
            && cfg.split_fractions.1 >= 0.0
            && cfg.split_fractions.0 + cfg.split_fractions.1 <= 1.0,
        "--train-frac/--val-frac",
        "must be >= 0 and sum to <= 1",
    )?;

    let manifest_path = RunManifest::path_for(&args.out);
    let mut manifest = RunManifest::new(
        "generate",
        json!({
            "synth": format!("{cfg:?}"),
            "normalize": format!("{:?}", args.normalize),
        }),
        Some(cfg.seed),
        vec![],
        vec![args.out.clone()],
    );
    manifest.write_initial(&manifest_path)?;

    let ds = generate_synthetic(&cfg)?;
    let mode = match args.normalize {
        NormalizeArg::None => NormalizeMode::None,
        NormalizeArg::Zscore => NormalizeMode::ZScore,
    };
    let ds = normalize(&ds, mode)?;
    save_dataset(&ds, &args.out)?;
    manifest.finalize(&manifest_path)?;
    eprintln!(
        "generate: {} items ({} classes) -> {}",
        ds.len(),
        cfg.n_classes,
        args.out.display()
    );
    Ok(())
}

fn cmd_pretrain(args: PretrainArgs) -> Result<()> {
    let ds = load_data(&args.data)?;
    let arch_arg = args.arch.unwrap_or(match args.preset {
        Some(Preset::McytLike) => ArchArg::Large,
        _ => ArchArg::Small,
    });
    let arch = arch_arg.build(2 * ds.k());
    require(
        ds.w() % arch.divisor() == 0,
        "--arch",
        &format!(
            "dataset length {} is not divisible by the net's pooling factor {}",
            ds.w(),
            arch.divisor()
        ),
    )?;
    let defaults = PretrainConfig::default();
    let cfg = PretrainConfig {
        steps: args.steps.unwrap_or(defaults.steps),
        batch_size: args.batch_size.unwrap_or(match args.preset {
            Some(Preset::McytLike) => 15,
            _ => defaults.batch_size,
        }),
        learning_rate: args.lr.unwrap_or(defaults.learning_rate),
        match_ratio: match &args.ratio {
            Some(r) => parse_ratio(r)?,
            None => match args.preset {
                Some(Preset::McytLike) => Some(MatchRatio::new(1, 2)?),
                _ => None,
            },
        },
        seed: args.seed.unwrap_or(0),
        probe_pairs: args.probe_pairs.unwrap_or(defaults.probe_pairs),
        plateau_window: args.plateau_window.unwrap_or(defaults.plateau_window),
        ..defaults
    };
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("log.csv"));

    let manifest_path = RunManifest::path_for(&args.out);
    let mut manifest = RunManifest::new(
        "pretrain",
        json!({
            "arch": format!("{arch:?}"),
            "config": format!("{cfg:?}"),
        }),
        Some(cfg.seed),
        vec![args.data.clone()],
        vec![args.out.clone(), log_path.clone()],
    );
    manifest.write_initial(&manifest_path)?;

    let params = UNetParams::he_init(arch, cfg.seed)?;
    let mut state = TrainState::new(params, cfg.seed);
    let report = pretrain(&mut state, &ds, &cfg)?;
    save_checkpoint(&args.out, &state.params, state.seed, state.step)?;
    write_log(&log_path, &report.history)?;
    manifest.finalize(&manifest_path)?;
    eprintln!(
        "pretrain: {} steps, probe loss {} -> {}",
        report.steps_run, report.initial_probe_loss, report.final_probe_loss
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let ds = load_data(&args.data)?;
    let seed = args.seed.unwrap_or(0);

    let (params, init_desc) = if args.init == "he" {
        let arch_arg = args.arch.unwrap_or(match args.preset {
            Some(Preset::McytLike) => ArchArg::Large,
            _ => ArchArg::Small,
        });
        let arch = arch_arg.build(2 * ds.k());
        (UNetParams::he_init(arch, seed)?, "he".to_string())
    } else if let Some(path) = args.init.strip_prefix("pretrained:") {
        let Checkpoint { params, .. } = load_checkpoint(Path::new(path))
            .with_context(|| format!("loading pretrained checkpoint {path}"))?;
        (params, format!("pretrained:{path}"))
    } else {
        bail!("invalid --init '{}': expected 'he' or 'pretrained:<path>'", args.init);
    };
    require(
        params.arch.input_channels == 2 * ds.k(),
        "--init",
        &format!(
            "checkpoint expects {} input channels, dataset provides {}",
            params.arch.input_channels,
            2 * ds.k()
        ),
    )?;
    require(
        ds.w() % params.arch.divisor() == 0,
        "--data",
        "dataset length is not divisible by the net's pooling factor",
    )?;

    let defaults = TrainingConfig::default();
    let cfg = TrainingConfig {
        margin: args.margin.unwrap_or(defaults.margin),
        learning_rate: args.lr.unwrap_or(defaults.learning_rate),
        batch_size: args.batch_size.unwrap_or(match args.preset {
            Some(Preset::McytLike) => 15,
            Some(Preset::UnipenLike) => 512,
            None => 16,
        }),
        max_epochs: args.epochs.unwrap_or(defaults.max_epochs),
        match_ratio: match &args.ratio {
            Some(r) => parse_ratio(r)?,
            None => match args.preset {
                Some(Preset::McytLike) => Some(MatchRatio::new(1, 2)?),
                _ => None,
            },
        },
        steps_per_epoch: args.steps_per_epoch,
        seed,
        adam: defaults.adam,
    };
    let bins = args.bins.unwrap_or(20);
    let val = match args.val_metric {
        Some(TaskArg::Classify) => ValMetric::KnnAccuracy {
            k: args.k.unwrap_or(3),
            bins,
        },
        Some(TaskArg::Verify) => ValMetric::VerificationEer {
            n_refs: args.refs.unwrap_or(5),
            bins,
        },
        None => {
            if matches!(args.preset, Some(Preset::McytLike)) || dataset_is_verification(&ds) {
                ValMetric::VerificationEer {
                    n_refs: args.refs.unwrap_or(5),
                    bins,
                }
            } else {
                ValMetric::KnnAccuracy {
                    k: args.k.unwrap_or(3),
                    bins,
                }
            }
        }
    };
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("log.csv"));

    let manifest_path = RunManifest::path_for(&args.out);
    let mut manifest = RunManifest::new(
        "train",
        json!({
            "init": init_desc,
            "config": format!("{cfg:?}"),
            "val": format!("{val:?}"),
        }),
        Some(seed),
        vec![args.data.clone()],
        vec![args.out.clone(), log_path.clone()],
    );
    manifest.write_initial(&manifest_path)?;

    let mut state = TrainState::new(params, seed);
    if cfg.max_epochs == 0 {
        // No training requested: the checkpoint is the initialization.
        save_checkpoint(&args.out, &state.params, state.seed, state.step)?;
        write_log(&log_path, &[])?;
        manifest.finalize(&manifest_path)?;
        eprintln!("train: 0 epochs requested, checkpoint equals initialization");
        return Ok(());
    }
    let report = train_contrastive(&mut state, &ds, &cfg, val)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    save_checkpoint(&args.out, &state.params, state.seed, state.step)?;
    write_log(&log_path, &report.history)?;
    manifest.finalize(&manifest_path)?;
    eprintln!(
        "train: best validation {:?} at epoch {}",
        report.best_val, report.best_epoch
    );
    Ok(())
}

fn eval_with_metric(
    command: &str,
    metric: &dyn PairMetric,
    data: &Path,
    checkpoint: Option<&Path>,
    preset: Option<Preset>,
    task: Option<TaskArg>,
    k: Option<usize>,
    refs: Option<usize>,
    bins: Option<usize>,
    out: &Path,
    hist: Option<PathBuf>,
) -> Result<()> {
    let ds = load_data(data)?;
    let task = task.unwrap_or(match preset {
        Some(Preset::McytLike) => TaskArg::Verify,
        Some(Preset::UnipenLike) => TaskArg::Classify,
        None => {
            if dataset_is_verification(&ds) {
                TaskArg::Verify
            } else {
                TaskArg::Classify
            }
        }
    });
    let k = k.unwrap_or(3);
    let refs = refs.unwrap_or(5);
    let bins = bins.unwrap_or(20);
    let hist_path = hist.unwrap_or_else(|| out.with_extension("hist.csv"));

    let manifest_path = RunManifest::path_for(out);
    let mut inputs = vec![data.to_path_buf()];
    if let Some(c) = checkpoint {
        inputs.push(c.to_path_buf());
    }
    let mut manifest = RunManifest::new(
        command,
        json!({
            "metric": metric.id(),
            "task": format!("{task:?}"),
            "k": k,
            "refs": refs,
            "bins": bins,
        }),
        None,
        inputs,
        vec![out.to_path_buf(), hist_path.clone()],
    );
    manifest.write_initial(&manifest_path)?;

    let report = match task {
        TaskArg::Classify => classification_report(&ds, metric, k, bins)?,
        TaskArg::Verify => verification_report(&ds, metric, refs, bins)?,
    };
    write_report(&report, out, &hist_path)?;
    manifest.finalize(&manifest_path)?;
    eprintln!(
        "{command}: {} = {}",
        report.summary().metric,
        report.value
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let metric = ModelMetric { params: &ck.params };
    eval_with_metric(
        "eval",
        &metric,
        &args.data,
        Some(&args.checkpoint),
        args.preset,
        args.task,
        args.k,
        args.refs,
        args.bins,
        &args.out,
        args.hist,
    )
}

fn cmd_dtw(args: DtwArgs) -> Result<()> {
    eval_with_metric(
        "dtw",
        &DtwMetric,
        &args.data,
        None,
        args.preset,
        args.task,
        args.k,
        args.refs,
        args.bins,
        &args.out,
        args.hist,
    )
}

fn push_block(out: &mut String, name: &str, values: &ndarray::Array2<f64>) {
    let (rows, cols) = values.dim();
    writeln!(out, "# block={name} rows={rows} cols={cols}").unwrap();
    for row in values.rows() {
        let line = row
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&line);
        out.push('\n');
    }
}

fn cmd_export_warp(args: ExportWarpArgs) -> Result<()> {
    let ck = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let ds = load_data(&args.data)?;
    for (flag, idx) in [("--index-a", args.index_a), ("--index-b", args.index_b)] {
        require(
            idx < ds.len(),
            flag,
            &format!("index {idx} out of range (dataset has {} items)", ds.len()),
        )?;
    }
    let a = &ds.items()[args.index_a].series;
    let b = &ds.items()[args.index_b].series;

    let manifest_path = RunManifest::path_for(&args.out);
    let mut manifest = RunManifest::new(
        "export-warp",
        json!({
            "index_a": args.index_a,
            "index_b": args.index_b,
        }),
        None,
        vec![args.checkpoint.clone(), args.data.clone()],
        vec![args.out.clone()],
    );
    manifest.write_initial(&manifest_path)?;

    let cost = local_cost_matrix(a, b)?;
    let aligned = dtw_align(&cost)?;
    let p_dtw = dtw_target(a, b)?;
    let x = outer_concat(a, b)?;
    let p_raw = unet_forward(&x, &ck.params)?;
    let (p_s, p_t) = make_paths(&p_raw)?;
    let warped_b = warp(&p_s, b)?;
    let warped_a = warp(&p_t, a)?;

    let mut out = String::new();
    push_block(&mut out, "A", a.values());
    push_block(&mut out, "B", b.values());
    push_block(&mut out, "DM", &cost);
    push_block(&mut out, "P_DTW", p_dtw.entries());
    push_block(&mut out, "P", &p_raw);
    push_block(&mut out, "P_s", p_s.entries());
    push_block(&mut out, "P_t", p_t.entries());
    push_block(&mut out, "PsB", warped_b.values());
    push_block(&mut out, "PtA", warped_a.values());
    let _ = aligned;
    fs::write(&args.out, out).with_context(|| format!("writing {}", args.out.display()))?;
    manifest.finalize(&manifest_path)?;
    eprintln!("export-warp: 9 blocks -> {}", args.out.display());
    Ok(())
}
