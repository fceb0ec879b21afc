//! Training and evaluation loops and repeated-run statistics.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::save_checkpoint;
use super::config::TrainConfig;
use super::optim::{adam_step, lr_schedule, AdamConfig, AdamState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mbmir::{self, BagDistribution};
use crate::model::{init_params, loss_and_grads, predict_batch, ModelConfig};
use crate::params::ModelParams;
use crate::ssf::LossBreakdown;
use crate::tensor::{DType, Real};

/// Mean loss terms of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

/// Everything needed to continue training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub model: ModelConfig,
    pub params: ModelParams<T>,
    pub adam: AdamState<T>,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl<T: Real> TrainState<T> {
    /// Fresh parameters for `data`, initialised from `seed`.
    pub fn init(config: &TrainConfig, data: &Dataset, seed: u64) -> Result<Self> {
        let shape = data
            .image_shape()
            .ok_or_else(|| Error::Dataset("empty training set".into()))?;
        let model = config.model_for(shape.c, data.num_classes());
        let params = init_params(&model, seed)?;
        Ok(TrainState {
            model,
            adam: AdamState::zeros_like(&params),
            params,
            epoch: 0,
            history: Vec::new(),
        })
    }
}

/// Generator for one epoch: the shuffling order and dropout masks depend only
/// on the run seed and the epoch index, so a resumed run replays exactly.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn with_context(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite(what) => Error::NonFinite(format!("{what} (epoch {epoch}, batch {batch})")),
        Error::NonFiniteGradient(name) => {
            Error::NonFiniteGradient(format!("{name} (epoch {epoch}, batch {batch})"))
        }
        other => other,
    }
}

/// Trains `state` until `until_epoch` epochs are complete.
///
/// With `checkpoint_dir` set a checkpoint is written every
/// `checkpoint_every` epochs and after the last one.
pub fn train_until<T: Real>(
    state: &mut TrainState<T>,
    data: &Dataset,
    config: &TrainConfig,
    seed: u64,
    until_epoch: usize,
    checkpoint_dir: Option<&Path>,
) -> Result<()> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    if data.num_classes() != state.model.classes {
        return Err(Error::Dataset(format!(
            "model has {} classes, dataset has {}",
            state.model.classes,
            data.num_classes()
        )));
    }
    let adam = AdamConfig::from_train(config);
    let n = data.len();
    while state.epoch < until_epoch {
        let epoch = state.epoch;
        let lr = lr_schedule(epoch, config);
        let mut rng = epoch_rng(seed, epoch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut mean = LossBreakdown::default();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = data.batch::<T>(chunk)?;
            let (loss, grads) = loss_and_grads(&state.params, &state.model, &config.loss, &x, &y, true, &mut rng)
                .map_err(|e| with_context(e, epoch, b))?;
            adam_step(&mut state.params, &grads, &mut state.adam, lr, &adam)?;
            mean.add_scaled(&loss, chunk.len() as f64 / n as f64);
        }
        log::debug!("epoch {epoch}: lr {lr:e}, loss {:.6}", mean.total);
        state.history.push(EpochRecord {
            epoch,
            lr,
            loss: mean,
        });
        state.epoch += 1;
        if let Some(dir) = checkpoint_dir {
            let periodic = config.checkpoint_every > 0 && state.epoch.is_multiple_of(config.checkpoint_every);
            if periodic || state.epoch == until_epoch {
                save_checkpoint(dir, state, config)?;
            }
        }
    }
    Ok(())
}

/// Full training run from fresh parameters.
pub fn train<T: Real>(
    data: &Dataset,
    config: &TrainConfig,
    seed: u64,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainState<T>> {
    let mut state = TrainState::init(config, data, seed)?;
    train_until(&mut state, data, config, seed, config.epochs, checkpoint_dir)?;
    Ok(state)
}

/// Per-sample eval-mode outputs over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPredictions {
    pub fused: Vec<BagDistribution>,
    /// Per sample, the raw score vector of each grain (empty for variants
    /// without instance branches).
    pub grain_scores: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<usize>,
}

impl DatasetPredictions {
    pub fn predicted(&self) -> Vec<usize> {
        self.fused.iter().map(mbmir::predict).collect()
    }
}

/// Number of classes the parameters were built for.
pub fn param_classes<T: Real>(params: &ModelParams<T>) -> Option<usize> {
    ["head.bias", "mbmir.branch0.bias", "mbmir.shared.bias"]
        .iter()
        .find_map(|n| params.get(n).ok().map(|t| t.len()))
}

pub fn predict_dataset<T: Real>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    data: &Dataset,
    batch_size: usize,
) -> Result<DatasetPredictions> {
    let classes = param_classes(params).unwrap_or(model.classes);
    if classes != data.num_classes() || model.classes != data.num_classes() {
        return Err(Error::Dataset(format!(
            "parameters predict {classes} classes, dataset has {}",
            data.num_classes()
        )));
    }
    let mut out = DatasetPredictions {
        fused: Vec::with_capacity(data.len()),
        grain_scores: Vec::with_capacity(data.len()),
        labels: data.labels.clone(),
    };
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, _) = data.batch::<T>(chunk)?;
        let p = predict_batch(params, model, &x)?;
        out.fused.extend(p.fused);
        out.grain_scores.extend(p.grain_scores);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub overall_accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub correct: usize,
    pub total: usize,
    pub history: Vec<EpochRecord>,
    /// OA of every run, for repeated-run summaries.
    pub runs: Vec<f64>,
}

impl Metrics {
    /// Accuracy from predicted and true labels. Classes without test samples
    /// get accuracy 0.
    pub fn from_predictions(predicted: &[usize], labels: &[usize], classes: usize) -> Self {
        let mut hit = vec![0usize; classes];
        let mut seen = vec![0usize; classes];
        for (&p, &l) in predicted.iter().zip(labels) {
            seen[l] += 1;
            if p == l {
                hit[l] += 1;
            }
        }
        let correct: usize = hit.iter().sum();
        let total = labels.len();
        Metrics {
            overall_accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            per_class_accuracy: hit
                .iter()
                .zip(&seen)
                .map(|(&h, &s)| if s == 0 { 0.0 } else { h as f64 / s as f64 })
                .collect(),
            correct,
            total,
            history: Vec::new(),
            runs: Vec::new(),
        }
    }

    /// `"mean±std"` of the run accuracies in percent.
    pub fn oa_string(&self) -> String {
        let runs = if self.runs.is_empty() {
            vec![self.overall_accuracy]
        } else {
            self.runs.clone()
        };
        let (m, s) = mean_std(&runs);
        format!("{:.2}±{:.2}", 100.0 * m, 100.0 * s)
    }
}

pub fn evaluate<T: Real>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    data: &Dataset,
    batch_size: usize,
) -> Result<Metrics> {
    let p = predict_dataset(params, model, data, batch_size)?;
    Ok(Metrics::from_predictions(&p.predicted(), &p.labels, data.num_classes()))
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Outcome of `runs` train+evaluate repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub oa: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub per_class_mean: Vec<f64>,
    pub seconds: f64,
}

impl RunSummary {
    pub fn from_metrics(all: &[Metrics], seconds: f64) -> Self {
        let oa: Vec<f64> = all.iter().map(|m| m.overall_accuracy).collect();
        let (mean, std) = mean_std(&oa);
        let classes = all.first().map_or(0, |m| m.per_class_accuracy.len());
        let per_class_mean = (0..classes)
            .map(|k| all.iter().map(|m| m.per_class_accuracy[k]).sum::<f64>() / all.len() as f64)
            .collect();
        RunSummary {
            oa,
            mean,
            std,
            per_class_mean,
            seconds,
        }
    }
}

/// Seed of run `i`.
pub fn run_seed(config: &TrainConfig, i: usize) -> u64 {
    config.seed.wrapping_add(i as u64)
}

/// Trains and evaluates `config.runs` times with seeds `seed + i`, calling
/// `inspect` with each run's test predictions.
pub fn repeated_runs_with<T: Real>(
    train_set: &Dataset,
    test_set: &Dataset,
    config: &TrainConfig,
    mut inspect: impl FnMut(usize, &TrainState<T>, &DatasetPredictions) -> Result<()>,
) -> Result<RunSummary> {
    let start = Instant::now();
    let mut all = Vec::with_capacity(config.runs);
    for i in 0..config.runs {
        let seed = run_seed(config, i);
        let state = train::<T>(train_set, config, seed, None)?;
        let preds = predict_dataset(&state.params, &state.model, test_set, config.batch_size)?;
        let mut m = Metrics::from_predictions(&preds.predicted(), &preds.labels, test_set.num_classes());
        m.history = state.history.clone();
        log::info!("run {i} (seed {seed}): OA {:.4}", m.overall_accuracy);
        inspect(i, &state, &preds)?;
        all.push(m);
    }
    Ok(RunSummary::from_metrics(&all, start.elapsed().as_secs_f64()))
}

/// [`repeated_runs_with`] at the configured precision.
pub fn repeated_runs(train_set: &Dataset, test_set: &Dataset, config: &TrainConfig) -> Result<RunSummary> {
    match config.precision {
        DType::F32 => repeated_runs_with::<f32>(train_set, test_set, config, |_, _, _| Ok(())),
        DType::F64 => repeated_runs_with::<f64>(train_set, test_set, config, |_, _, _| Ok(())),
    }
}
