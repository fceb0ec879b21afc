//! Ablations, sensitivity sweeps, fusion comparison and covariance export.
//!
//! Every experiment writes `<out_dir>/<name>.csv` with one row per variant:
//! the variant label, the number of runs, OA mean and population std for each
//! configured train ratio, and the wall-clock seconds spent on the row.

use std::path::Path;
use std::time::Instant;

use super::config::TrainConfig;
use super::report::{fmt_sig, write_psd_matrix, Report};
use super::trainer::{predict_dataset, repeated_runs, repeated_runs_with, run_seed, train, Metrics, RunSummary};
use crate::data::{split_dataset, synth_generate, Dataset, DatasetManifest};
use crate::error::{Error, Result};
use crate::mbmir::predict;
use crate::mgp::DdcMode;
use crate::mil::{covariance_matrix, fit_least_squares, fuse, FusionKind, FusionStrategy, DEFAULT_RIDGE};
use crate::model::Variant;
use crate::tensor::{DType, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Ablate,
    SweepGrains,
    SweepAlpha,
    DdcVariants,
    FusionCompare,
    Covariance,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Ablate,
        ExperimentKind::SweepGrains,
        ExperimentKind::SweepAlpha,
        ExperimentKind::DdcVariants,
        ExperimentKind::FusionCompare,
        ExperimentKind::Covariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Ablate => "ablate",
            ExperimentKind::SweepGrains => "sweep-grains",
            ExperimentKind::SweepAlpha => "sweep-alpha",
            ExperimentKind::DdcVariants => "ddc-variants",
            ExperimentKind::FusionCompare => "fusion-compare",
            ExperimentKind::Covariance => "covariance",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown experiment '{name}'")))
    }
}

/// `5·10^x` for `x = -2..=-5`.
pub const ALPHA_GRID: [f64; 4] = [5e-2, 5e-3, 5e-4, 5e-5];
pub const GRAIN_GRID: [usize; 6] = [0, 1, 2, 3, 4, 5];

fn with(base: &TrainConfig, f: impl FnOnce(&mut TrainConfig)) -> TrainConfig {
    let mut c = base.clone();
    f(&mut c);
    c
}

/// Rows of the ablation table.
pub fn ablation_variants(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let mut rows: Vec<(String, TrainConfig)> = [
        Variant::BackboneOnly,
        Variant::MgpFused,
        Variant::MgpMbmir,
        Variant::MgpSsf,
        Variant::Full,
    ]
    .into_iter()
    .map(|v| (v.label().to_string(), with(base, |c| c.model.variant = v)))
    .collect();
    rows.push((
        "AGOS (L_cls only)".into(),
        with(base, |c| {
            c.model.variant = Variant::Full;
            c.loss.enable_sealig = false;
        }),
    ));
    rows
}

pub fn grain_variants(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    GRAIN_GRID
        .iter()
        .map(|&t| (format!("T={t}"), with(base, |c| c.model.mgp.grains = t)))
        .collect()
}

pub fn alpha_variants(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    ALPHA_GRID
        .iter()
        .map(|&a| (format!("alpha={}", fmt_sig(a)), with(base, |c| c.loss.alpha = a)))
        .collect()
}

pub fn ddc_variants(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    [DdcMode::Plain, DdcMode::NoDilation, DdcMode::NoDifference, DdcMode::Ddc]
        .into_iter()
        .map(|m| (m.label().to_string(), with(base, |c| c.model.mgp.mode = m)))
        .collect()
}

/// The configured dataset, or a synthetic one when no root is set.
pub fn experiment_dataset(config: &TrainConfig) -> Result<Dataset> {
    match &config.data_root {
        Some(root) => DatasetManifest::scan(root)?.load(),
        None => Ok(synth_generate(&config.synth, config.synth_seed)?.dataset),
    }
}

/// Train/test splits for every configured ratio, all drawn with `config.seed`.
pub fn ratio_splits(config: &TrainConfig, data: &Dataset) -> Result<Vec<(f64, Dataset, Dataset)>> {
    config
        .train_ratios
        .iter()
        .map(|&r| split_dataset(data, r, config.seed).map(|(a, b)| (r, a, b)))
        .collect()
}

pub fn report_header(ratios: &[f64]) -> Vec<String> {
    let mut h = vec!["variant".to_string(), "runs".to_string()];
    for r in ratios {
        h.push(format!("oa_mean@{}", fmt_sig(*r)));
        h.push(format!("oa_std@{}", fmt_sig(*r)));
    }
    h.push("runtime_s".into());
    h
}

fn summary_row(label: &str, runs: usize, summaries: &[RunSummary], seconds: f64) -> Vec<String> {
    let mut row = vec![label.to_string(), runs.to_string()];
    for s in summaries {
        row.push(fmt_sig(s.mean));
        row.push(fmt_sig(s.std));
    }
    row.push(fmt_sig(seconds));
    row
}

fn run_variants(variants: Vec<(String, TrainConfig)>, config: &TrainConfig, data: &Dataset) -> Result<Report> {
    let splits = ratio_splits(config, data)?;
    let mut report = Report::new(report_header(&config.train_ratios));
    for (label, cfg) in variants {
        log::info!("variant {label}");
        let start = Instant::now();
        let summaries = splits
            .iter()
            .map(|(_, tr, te)| repeated_runs(tr, te, &cfg))
            .collect::<Result<Vec<_>>>()?;
        report.push(summary_row(&label, cfg.runs, &summaries, start.elapsed().as_secs_f64()))?;
    }
    Ok(report)
}

/// Label of the model's own sum fusion in the fusion comparison.
pub const NATIVE_FUSION: &str = "Sum (AGOS)";

fn fusion_compare<T: Real>(config: &TrainConfig, data: &Dataset) -> Result<Report> {
    let cfg = with(config, |c| c.model.variant = Variant::Full);
    let splits = ratio_splits(&cfg, data)?;
    let labels: Vec<&str> = std::iter::once(NATIVE_FUSION)
        .chain(FusionKind::ALL.iter().map(|k| k.label()))
        .collect();
    // accuracy[row][ratio][run], seconds[row]
    let mut acc = vec![vec![Vec::new(); splits.len()]; labels.len()];
    let mut seconds = vec![0.0; labels.len()];
    for (ri, (_, tr, te)) in splits.iter().enumerate() {
        for i in 0..cfg.runs {
            let start = Instant::now();
            let state = train::<T>(tr, &cfg, run_seed(&cfg, i), None)?;
            let train_pred = predict_dataset(&state.params, &state.model, tr, cfg.batch_size)?;
            let test_pred = predict_dataset(&state.params, &state.model, te, cfg.batch_size)?;
            let shared = start.elapsed().as_secs_f64();
            let native = Metrics::from_predictions(&test_pred.predicted(), &test_pred.labels, te.num_classes());
            acc[0][ri].push(native.overall_accuracy);
            seconds[0] += shared;
            let weights = fit_least_squares(&train_pred.grain_scores, &train_pred.labels, DEFAULT_RIDGE)?;
            for (k, kind) in FusionKind::ALL.into_iter().enumerate() {
                let start = Instant::now();
                let strategy = match kind {
                    FusionKind::LeastSquares => FusionStrategy::least_squares(weights.clone()),
                    other => FusionStrategy::new(other),
                };
                let predicted = test_pred
                    .grain_scores
                    .iter()
                    .map(|g| fuse(g, &strategy).map(|d| predict(&d)))
                    .collect::<Result<Vec<_>>>()?;
                let m = Metrics::from_predictions(&predicted, &test_pred.labels, te.num_classes());
                acc[k + 1][ri].push(m.overall_accuracy);
                seconds[k + 1] += shared + start.elapsed().as_secs_f64();
            }
        }
    }
    let mut report = Report::new(report_header(&cfg.train_ratios));
    for (row, label) in labels.iter().enumerate() {
        let summaries: Vec<RunSummary> = acc[row]
            .iter()
            .map(|oa| {
                let ms: Vec<Metrics> = oa
                    .iter()
                    .map(|&a| Metrics {
                        overall_accuracy: a,
                        ..Default::default()
                    })
                    .collect();
                RunSummary::from_metrics(&ms, 0.0)
            })
            .collect();
        report.push(summary_row(label, cfg.runs, &summaries, seconds[row]))?;
    }
    Ok(report)
}

/// File-name friendly form of a variant label.
pub fn slug(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    s.split('_').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("_")
}

fn covariance<T: Real>(config: &TrainConfig, data: &Dataset, out_dir: &Path) -> Result<Report> {
    let splits = ratio_splits(config, data)?;
    let mut header = report_header(&config.train_ratios);
    header.insert(header.len() - 1, "matrices".into());
    let mut report = Report::new(header);
    for (label, cfg) in ablation_variants(config) {
        let start = Instant::now();
        let mut summaries = Vec::new();
        let mut files = Vec::new();
        for (ratio, tr, te) in &splits {
            let file = format!("covariance_{}@{}.csv", slug(&label), fmt_sig(*ratio));
            let path = out_dir.join(&file);
            let s = repeated_runs_with::<T>(tr, te, &cfg, |i, _, preds| {
                if i == 0 {
                    write_psd_matrix(&path, &covariance_matrix(&preds.fused)?)?;
                }
                Ok(())
            })?;
            summaries.push(s);
            files.push(file);
        }
        let mut row = summary_row(&label, cfg.runs, &summaries, start.elapsed().as_secs_f64());
        row.insert(row.len() - 1, files.join(";"));
        report.push(row)?;
    }
    Ok(report)
}

/// Runs one experiment on `data` and writes `<out_dir>/<name>.csv`.
pub fn run_experiment(kind: ExperimentKind, config: &TrainConfig, data: &Dataset, out_dir: &Path) -> Result<Report> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let report = match kind {
        ExperimentKind::Ablate => run_variants(ablation_variants(config), config, data)?,
        ExperimentKind::SweepGrains => run_variants(grain_variants(config), config, data)?,
        ExperimentKind::SweepAlpha => run_variants(alpha_variants(config), config, data)?,
        ExperimentKind::DdcVariants => run_variants(ddc_variants(config), config, data)?,
        ExperimentKind::FusionCompare => match config.precision {
            DType::F32 => fusion_compare::<f32>(config, data)?,
            DType::F64 => fusion_compare::<f64>(config, data)?,
        },
        ExperimentKind::Covariance => match config.precision {
            DType::F32 => covariance::<f32>(config, data, out_dir)?,
            DType::F64 => covariance::<f64>(config, data, out_dir)?,
        },
    };
    report.write(out_dir.join(format!("{}.csv", kind.name())))?;
    Ok(report)
}
