//! Multi-branch multi-instance representation.
//!
//! Each grain map `X_{d,t}` is turned into an instance map `I_t` with `C`
//! channels by a 1×1 convolution; every spatial cell is one instance and its
//! `C` values are per-class scores. Mean pooling gives the grain score `Y_t`,
//! and the bag distribution is `softmax(Σ_t Y_t)`.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::functional::ConvKernel;
use crate::mgp::GrainFeatureSet;
use crate::ops;
use crate::params::{ConvHandle, ModelParams};
use crate::tensor::{Real, Shape, Tensor};

/// Instance scores of one grain: `N×H'×W'×C`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRepr<T> {
    pub map: Tensor<T>,
    pub grain: usize,
}

impl<T: Real> InstanceRepr<T> {
    pub fn classes(&self) -> usize {
        self.map.shape().c
    }

    /// Score vector of the instance at `(y, x)` in batch item `n`.
    pub fn instance(&self, n: usize, y: usize, x: usize) -> &[T] {
        let s = self.map.shape();
        let i = s.index(n, y, x, 0);
        &self.map.data()[i..i + s.c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BagSource {
    Fused,
    Grain(usize),
    Diff,
}

/// Probability vector over the scene categories of one bag.
#[derive(Debug, Clone, PartialEq)]
pub struct BagDistribution {
    pub probs: Vec<f64>,
    pub source: BagSource,
}

impl BagDistribution {
    pub fn new(probs: Vec<f64>, source: BagSource) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("bag distribution entries must lie in [0, 1]"));
        }
        Ok(BagDistribution { probs, source })
    }

    /// Splits an `N×1×1×C` probability tensor into rows.
    pub fn rows<T: Real>(probs: &Tensor<T>, source: BagSource) -> Vec<BagDistribution> {
        let s = probs.shape();
        (0..s.n)
            .map(|n| BagDistribution {
                probs: probs.batch_item(n).iter().map(|v| v.as_f64()).collect(),
                source,
            })
            .collect()
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }
}

/// Highest-probability class; ties go to the lowest index.
pub fn predict(dist: &BagDistribution) -> usize {
    ops::argmax(&dist.probs)
}

pub fn branch_name(t: usize) -> String {
    format!("mbmir.branch{t}")
}

pub const SHARED_BRANCH: &str = "mbmir.shared";

/// Per-grain 1×1 branches `C1 -> C`, or one shared branch when `shared`.
pub fn init_mbmir<T: Real, R: Rng + ?Sized>(
    params: &mut ModelParams<T>,
    grains: usize,
    channels: usize,
    classes: usize,
    shared: bool,
    std: f64,
    rng: &mut R,
) -> Result<()> {
    let shape = Shape::new(1, 1, channels, classes);
    if shared {
        params.init_conv(SHARED_BRANCH, shape, std, rng)
    } else {
        (0..=grains).try_for_each(|t| params.init_conv(&branch_name(t), shape, std, rng))
    }
}

/// Tape values produced by [`mbmir_forward`].
#[derive(Debug, Clone)]
pub struct MbmirOutput {
    /// `softmax(Σ_t Y_t)`, `N×1×1×C`.
    pub fused: Var,
    /// `Σ_t Y_t` before the softmax.
    pub logits: Var,
    /// `Y_t` per grain.
    pub grain_scores: Vec<Var>,
    /// `I_t` per grain.
    pub instances: Vec<Var>,
}

/// Instance transform, mean aggregation and fusion for every grain.
pub fn mbmir_forward<T: Real>(
    tape: &mut Tape<T>,
    grains: &GrainFeatureSet<Var>,
    branches: &[ConvHandle],
) -> Result<MbmirOutput> {
    if grains.len() != branches.len() {
        return Err(Error::invalid(format!(
            "{} grain maps but {} branch kernels",
            grains.len(),
            branches.len()
        )));
    }
    if grains.is_empty() {
        return Err(Error::invalid("no grain maps"));
    }
    let mut instances = Vec::with_capacity(grains.len());
    let mut grain_scores = Vec::with_capacity(grains.len());
    for (&x, branch) in grains.features.iter().zip(branches) {
        let wshape = tape.shape(branch.weight);
        if (wshape.n, wshape.h) != (1, 1) {
            return Err(Error::invalid("branch kernels must be 1x1"));
        }
        let inst = branch.apply(tape, x, 1)?;
        grain_scores.push(tape.global_avg_pool(inst)?);
        instances.push(inst);
    }
    let logits = tape.add(&grain_scores)?;
    let fused = tape.softmax(logits)?;
    Ok(MbmirOutput {
        fused,
        logits,
        grain_scores,
        instances,
    })
}

/// `I_t = conv1x1(X_{d,t})`.
pub fn instance_transform<T: Real>(
    x_dt: &Tensor<T>,
    branch_kernel: &ConvKernel<T>,
    grain: usize,
) -> Result<InstanceRepr<T>> {
    Ok(InstanceRepr {
        map: crate::functional::conv1x1(x_dt, branch_kernel)?,
        grain,
    })
}

/// Raw grain score `Y_t`: the spatial mean of every class channel.
pub fn aggregate_mean<T: Real>(inst: &InstanceRepr<T>) -> Result<Tensor<T>> {
    crate::functional::global_avg_pool(&inst.map)
}

/// `softmax(Σ_t Y_t)` for one bag; grains are summed in order.
pub fn bag_distribution(grain_scores: &[Vec<f64>]) -> Result<BagDistribution> {
    let first = grain_scores
        .first()
        .ok_or_else(|| Error::invalid("no grain scores"))?;
    let mut sum = vec![0.0; first.len()];
    for s in grain_scores {
        if s.len() != first.len() {
            return Err(Error::invalid("grain score lengths differ"));
        }
        sum.iter_mut().zip(s).for_each(|(a, &b)| *a += b);
    }
    BagDistribution::new(ops::softmax_rows(1, sum.len(), &sum), BagSource::Fused)
}

/// Value-level pipeline: one fused distribution per batch item plus every `I_t`.
pub fn mbmir_forward_values<T: Real>(
    grains: &GrainFeatureSet<Tensor<T>>,
    branch_kernels: &[ConvKernel<T>],
) -> Result<(Vec<BagDistribution>, Vec<InstanceRepr<T>>)> {
    let mut tape = Tape::new();
    let features = grains.features.iter().map(|g| tape.leaf(g.clone())).collect();
    let branches: Vec<_> = branch_kernels
        .iter()
        .map(|k| ConvHandle::constant(&mut tape, k))
        .collect();
    let out = mbmir_forward(&mut tape, &GrainFeatureSet { features }, &branches)?;
    let dists = BagDistribution::rows(tape.value(out.fused), BagSource::Fused);
    let instances = out
        .instances
        .iter()
        .enumerate()
        .map(|(t, &v)| InstanceRepr {
            map: tape.value(v).clone(),
            grain: t,
        })
        .collect();
    Ok((dists, instances))
}
