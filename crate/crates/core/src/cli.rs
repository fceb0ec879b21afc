//! The `agos` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure
//! (non-finite values, failed gradient check), 3 I/O error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::autodiff::BackwardFault;
use crate::data::{export_heatmap, split_dataset, Dataset};
use crate::error::{Error, Result};
use crate::mbmir::InstanceRepr;
use crate::model::predict_batch;
use crate::tensor::{DType, Real};
use crate::train::experiments::{experiment_dataset, run_experiment, ExperimentKind};
use crate::train::report::{fmt_sig, Report};
use crate::train::trainer::{run_seed, Metrics, RunSummary, TrainState};
use crate::train::{evaluate, gradcheck, load_checkpoint, train_until, GradcheckConfig, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "agos", version, about = "Multi-grain multiple-instance scene classification")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, value_parser = ["single", "double"])]
    precision: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Directory-of-classes dataset (default: synthetic scenes).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes a checkpoint and test metrics to the output directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on its test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare analytic gradients with finite differences on a tiny model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Ablation of the model components.
    Ablate {
        #[command(flatten)]
        common: Common,
    },
    /// OA as a function of the number of grains.
    SweepGrains {
        #[command(flatten)]
        common: Common,
    },
    /// OA as a function of the alignment loss weight.
    SweepAlpha {
        #[command(flatten)]
        common: Common,
    },
    /// Differencing and dilation switched on and off.
    DdcVariants {
        #[command(flatten)]
        common: Common,
    },
    /// Alternative fusion of the trained per-grain scores.
    FusionCompare {
        #[command(flatten)]
        common: Common,
    },
    /// Test-set covariance matrices of the bag distributions per variant.
    Covariance {
        #[command(flatten)]
        common: Common,
    },
    /// Instance heatmaps of test images as PGM files.
    ExportHeatmaps {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Class channel, or -1 for the channel average.
        #[arg(long, default_value_t = -1, allow_hyphen_values = true)]
        class: i64,
        #[arg(long, default_value_t = 8)]
        limit: usize,
    },
}

fn resolve(common: &Common, base: TrainConfig) -> Result<TrainConfig> {
    let mut c = base;
    if let Some(path) = &common.config {
        c.apply_text(&std::fs::read_to_string(path)?)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        c.set(k, v)?;
    }
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(r) = common.runs {
        c.runs = r;
    }
    if let Some(p) = &common.precision {
        c.set("run.precision", p)?;
    }
    if let Some(d) = &common.data {
        c.data_root = Some(d.clone());
    }
    c.validate()?;
    Ok(c)
}

fn test_split(config: &TrainConfig) -> Result<(Dataset, Dataset)> {
    let data = experiment_dataset(config)?;
    split_dataset(&data, config.train_ratios[0], config.seed)
}

fn write_metrics(path: &Path, m: &Metrics, classes: &[String]) -> Result<()> {
    let mut r = Report::new(["class", "accuracy"]);
    r.push(vec!["overall".into(), fmt_sig(m.overall_accuracy)])?;
    for (name, acc) in classes.iter().zip(&m.per_class_accuracy) {
        r.push(vec![name.clone(), fmt_sig(*acc)])?;
    }
    r.write(path)
}

fn cmd_train<T: Real>(config: &TrainConfig, out: &Path, resume: Option<&Path>) -> Result<()> {
    let (train_set, test_set) = test_split(config)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.txt"), config.snapshot())?;
    let ckpt = out.join("checkpoint");
    let mut all = Vec::new();
    for i in 0..config.runs {
        let seed = run_seed(config, i);
        let mut state = match (i, resume) {
            (0, Some(dir)) => load_checkpoint::<T>(dir)?.0,
            _ => TrainState::<T>::init(config, &train_set, seed)?,
        };
        let dir = (i == 0).then_some(ckpt.as_path());
        train_until(&mut state, &train_set, config, seed, config.epochs, dir)?;
        let mut m = evaluate(&state.params, &state.model, &test_set, config.batch_size)?;
        println!("run {i} (seed {seed}): OA {:.4}", m.overall_accuracy);
        if i == 0 {
            write_metrics(&out.join("metrics.csv"), &m, &test_set.classes)?;
            let mut h = Report::new(["epoch", "lr", "total", "cls", "sealig", "l2"]);
            for r in &state.history {
                h.push(vec![
                    r.epoch.to_string(),
                    fmt_sig(r.lr),
                    fmt_sig(r.loss.total),
                    fmt_sig(r.loss.cls),
                    fmt_sig(r.loss.sealig),
                    fmt_sig(r.loss.l2),
                ])?;
            }
            h.write(out.join("history.csv"))?;
        }
        m.history = state.history;
        all.push(m);
    }
    let summary = RunSummary::from_metrics(&all, 0.0);
    let shown = Metrics {
        runs: summary.oa.clone(),
        ..Default::default()
    };
    println!("OA over {} run(s): {}", config.runs, shown.oa_string());
    Ok(())
}

fn cmd_eval<T: Real>(checkpoint: &Path, common: &Common, out: &Path) -> Result<()> {
    let (state, stored) = load_checkpoint::<T>(checkpoint)?;
    let config = resolve(common, stored)?;
    let (_, test_set) = test_split(&config)?;
    let m = evaluate(&state.params, &state.model, &test_set, config.batch_size)?;
    std::fs::create_dir_all(out)?;
    write_metrics(&out.join("eval.csv"), &m, &test_set.classes)?;
    println!("OA {:.4} ({}/{})", m.overall_accuracy, m.correct, m.total);
    for (name, acc) in test_set.classes.iter().zip(&m.per_class_accuracy) {
        println!("  {name:<12} {acc:.4}");
    }
    Ok(())
}

fn cmd_heatmaps<T: Real>(checkpoint: &Path, common: &Common, out: &Path, class: i64, limit: usize) -> Result<()> {
    let (state, stored) = load_checkpoint::<T>(checkpoint)?;
    let config = resolve(common, stored)?;
    let (_, test_set) = test_split(&config)?;
    let dir = out.join("heatmaps");
    std::fs::create_dir_all(&dir)?;
    let mut written = 0;
    for i in 0..test_set.len().min(limit) {
        let (x, _) = test_set.batch::<T>(&[i])?;
        let p = predict_batch(&state.params, &state.model, &x)?;
        for (t, map) in p.instances.into_iter().enumerate() {
            let inst = InstanceRepr { map, grain: t };
            export_heatmap(&inst, 0, class, dir.join(format!("sample{i:04}_grain{t}.pgm")))?;
            written += 1;
        }
    }
    println!("wrote {written} heatmaps to {}", dir.display());
    Ok(())
}

fn checkpoint_precision(dir: &Path) -> Result<DType> {
    Ok(TrainConfig::from_file(dir.join("config.txt"))?.precision)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train { common, resume } => {
            let config = resolve(&common, TrainConfig::default())?;
            match config.precision {
                DType::F32 => cmd_train::<f32>(&config, &common.out_dir, resume.as_deref())?,
                DType::F64 => cmd_train::<f64>(&config, &common.out_dir, resume.as_deref())?,
            }
        }
        Command::Eval { common, checkpoint } => match checkpoint_precision(&checkpoint)? {
            DType::F32 => cmd_eval::<f32>(&checkpoint, &common, &common.out_dir)?,
            DType::F64 => cmd_eval::<f64>(&checkpoint, &common, &common.out_dir)?,
        },
        Command::ExportHeatmaps {
            common,
            checkpoint,
            class,
            limit,
        } => match checkpoint_precision(&checkpoint)? {
            DType::F32 => cmd_heatmaps::<f32>(&checkpoint, &common, &common.out_dir, class, limit)?,
            DType::F64 => cmd_heatmaps::<f64>(&checkpoint, &common, &common.out_dir, class, limit)?,
        },
        Command::Gradcheck { common, corrupt } => {
            let config = resolve(&common, TrainConfig::default())?;
            let gc = GradcheckConfig {
                loss: config.loss,
                seed: config.seed,
                ..GradcheckConfig::default()
            };
            let fault = corrupt.then_some(BackwardFault::ScaleConvWeightGrad(1.001));
            let report = gradcheck(&gc, fault)?;
            println!("{report}");
            if !report.passed() {
                return Ok(2);
            }
        }
        Command::Synth { common } => {
            let mut config = resolve(&common, TrainConfig::default())?;
            if let Some(s) = common.seed {
                config.synth_seed = s;
            }
            let synth = crate::data::synth_generate(&config.synth, config.synth_seed)?;
            let manifest = synth.write(&common.out_dir)?;
            println!(
                "wrote {} images ({} classes, {}x{}x{}) to {}",
                manifest.len(),
                manifest.classes.len(),
                manifest.height,
                manifest.width,
                manifest.channels,
                common.out_dir.display()
            );
        }
        Command::Ablate { common } => experiment(ExperimentKind::Ablate, &common)?,
        Command::SweepGrains { common } => experiment(ExperimentKind::SweepGrains, &common)?,
        Command::SweepAlpha { common } => experiment(ExperimentKind::SweepAlpha, &common)?,
        Command::DdcVariants { common } => experiment(ExperimentKind::DdcVariants, &common)?,
        Command::FusionCompare { common } => experiment(ExperimentKind::FusionCompare, &common)?,
        Command::Covariance { common } => experiment(ExperimentKind::Covariance, &common)?,
    }
    Ok(0)
}

fn experiment(kind: ExperimentKind, common: &Common) -> Result<()> {
    let config = resolve(common, TrainConfig::default())?;
    let data = experiment_dataset(&config)?;
    let report = run_experiment(kind, &config, &data, &common.out_dir)?;
    println!("{}", report.header.join(","));
    for row in &report.rows {
        println!("{}", row.join(","));
    }
    Ok(())
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        2
    } else if e.is_io() {
        3
    } else {
        1
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
