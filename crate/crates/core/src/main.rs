use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pointmix::mixup::LambdaPolicy;
use pointmix::pipeline::{self, GapReference, PipelineConfig, RunRecord};
use pointmix::{Error, Result, SplitTag};

#[derive(Parser)]
#[command(name = "pointmix", version, about = "Two-stage CutMix/MixUp dataset generation for LiDAR domain adaptation")]
struct Cli {
    /// TOML config; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed and POINTMIX_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, short = 'o', global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Labeled,
    Unlabeled,
}

#[derive(Args)]
struct AugmentFlags {
    /// Skip intensity normalisation, cropping, GT sampling and world augmentation.
    #[arg(long)]
    no_augment: bool,
    /// GT database directory written by `gtdb`.
    #[arg(long)]
    gtdb: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Tag every round(1/fraction)-th frame of a target manifest as labeled.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Render synthetic 64-beam source and 32-beam target datasets.
    Synth {
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        objects: Option<usize>,
    },
    /// Build a GT database from the real labels of a manifest.
    Gtdb {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
    },
    /// Stage one: CutMix source frames into labeled target frames.
    Stage1 {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        apply_probability: Option<f64>,
        #[arg(long)]
        emissions: Option<usize>,
        #[command(flatten)]
        augment: AugmentFlags,
    },
    /// Perturb ground truth into scored prediction files (teacher stand-in).
    NoisyPreds {
        #[arg(long)]
        input: PathBuf,
    },
    /// Keep predictions above the score threshold as pseudo labels.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        score_threshold: Option<f64>,
    },
    /// Stage two: MixUp labeled and pseudo-labeled target frames.
    Stage2 {
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        pseudo: PathBuf,
        #[arg(long)]
        apply_probability: Option<f64>,
        /// Fixed mixing ratio.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        emissions: Option<usize>,
        #[command(flatten)]
        augment: AugmentFlags,
    },
    /// Centre-distance AP, optionally with the closed gap.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        class: Option<String>,
        /// Source-only AP in percent.
        #[arg(long, requires = "oracle_ap")]
        source_only_ap: Option<f64>,
        /// Oracle AP in percent.
        #[arg(long, requires = "source_only_ap")]
        oracle_ap: Option<f64>,
        /// Externally computed NDS of the evaluated model, with its references.
        #[arg(long, requires_all = ["source_only_nds", "oracle_nds"])]
        nds: Option<f64>,
        #[arg(long)]
        source_only_nds: Option<f64>,
        #[arg(long)]
        oracle_nds: Option<f64>,
        #[arg(long)]
        raw_pr_integration: bool,
    },
    /// Point, box and range histograms as CSV.
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let env = std::env::var(pipeline::SEED_ENV).ok();
    cfg.seed = pipeline::resolve_seed(cfg.seed, env.as_deref(), cli.seed)?;
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.output_dir.is_some() {
        cfg.output_dir = cli.output_dir.clone();
    }
    match &cli.command {
        Command::Split { fraction, .. } => set(&mut cfg.split.fraction, *fraction),
        Command::Synth { scenes, objects } => {
            set(&mut cfg.synth.scenes, *scenes);
            set(&mut cfg.synth.objects_per_scene, *objects);
        }
        Command::Stage1 {
            apply_probability,
            emissions,
            augment,
            ..
        } => {
            set(&mut cfg.cutmix.apply_probability, *apply_probability);
            if emissions.is_some() {
                cfg.cutmix.emissions = *emissions;
            }
            cfg.augment.enabled &= !augment.no_augment;
        }
        Command::Filter { score_threshold, .. } => set(&mut cfg.mixup.score_threshold, *score_threshold),
        Command::Stage2 {
            apply_probability,
            lambda,
            emissions,
            augment,
            ..
        } => {
            set(&mut cfg.mixup.apply_probability, *apply_probability);
            if let Some(l) = lambda {
                cfg.mixup.lambda = LambdaPolicy::Fixed(*l);
            }
            if emissions.is_some() {
                cfg.mixup.emissions = *emissions;
            }
            cfg.augment.enabled &= !augment.no_augment;
        }
        Command::Eval {
            class,
            raw_pr_integration,
            ..
        } => {
            set(&mut cfg.eval.class, class.clone());
            cfg.eval.raw_pr_integration |= raw_pr_integration;
        }
        Command::Gtdb { .. } | Command::NoisyPreds { .. } | Command::Stats { .. } => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: &Cli) -> Result<(PathBuf, RunRecord)> {
    let cfg = load_config(cli)?;
    let out: PathBuf = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory: pass --output-dir or set output_dir".into()))?;
    let out_dir = out.clone();
    let out = out.as_path();
    let gtdb = |f: &AugmentFlags| f.gtdb.clone();
    pipeline::with_workers(cfg.workers, || match &cli.command {
        Command::Split { input, .. } => pipeline::run_split(&cfg, input, out),
        Command::Synth { .. } => pipeline::run_synth(&cfg, out),
        Command::Gtdb { input, split } => {
            let tag = split.map(|s| match s {
                SplitArg::Labeled => SplitTag::Labeled,
                SplitArg::Unlabeled => SplitTag::Unlabeled,
            });
            pipeline::run_gtdb(&cfg, input, tag, out)
        }
        Command::Stage1 {
            source, target, augment, ..
        } => pipeline::run_stage1(&cfg, source, target, gtdb(augment).as_deref(), out),
        Command::NoisyPreds { input } => pipeline::run_noisy_preds(&cfg, input, out),
        Command::Filter { input, predictions, .. } => pipeline::run_filter(&cfg, input, predictions, out),
        Command::Stage2 {
            labeled, pseudo, augment, ..
        } => pipeline::run_stage2(&cfg, labeled, pseudo, gtdb(augment).as_deref(), out),
        Command::Eval {
            gt,
            predictions,
            source_only_ap,
            oracle_ap,
            nds,
            source_only_nds,
            oracle_nds,
            ..
        } => {
            let gap = source_only_ap.zip(*oracle_ap).map(|(s, o)| GapReference {
                source_only_ap: s,
                oracle_ap: o,
            });
            let nds = nds.zip(source_only_nds.zip(*oracle_nds)).map(|(v, (s, o))| {
                (
                    v,
                    GapReference {
                        source_only_ap: s,
                        oracle_ap: o,
                    },
                )
            });
            let (output, record) = pipeline::run_eval(&cfg, gt, predictions, gap, nds, out)?;
            println!("{}", serde_json::to_string_pretty(&output)?);
            Ok(record)
        }
        Command::Stats { input } => pipeline::run_stats(&cfg, input, out),
    })?
    .map(|r| (out_dir, r))
}

fn report(out: &Path, record: &RunRecord) {
    let summary = serde_json::json!({
        "command": record.command,
        "counts": record.counts,
        "run_record": out.join(pipeline::RUN_RECORD),
    });
    eprintln!("{summary}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok((out, record)) => {
            report(&out, &record);
            ExitCode::SUCCESS
        }
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}
