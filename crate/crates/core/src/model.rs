//! Full model wiring: backbone → multi-grain perception → per-grain MIL
//! branches → fused bag distribution, plus the ablation variants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradients, Tape, Var};
use crate::backbone::{backbone_forward, init_backbone, BackboneConfig};
use crate::error::{Error, Result};
use crate::mbmir::{self, branch_name, BagDistribution, BagSource, MbmirOutput, SHARED_BRANCH};
use crate::mgp::{init_mgp, mgp_forward, MgpConfig};
use crate::params::{is_weight_name, ModelParams};
use crate::ssf::{self, LossBreakdown, LossConfig};
use crate::tensor::{Real, Shape, Tensor};

/// Architecture variants used by the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Backbone, global average pooling and a linear classifier.
    BackboneOnly,
    /// Grain maps summed, pooled and classified by one linear layer.
    MgpFused,
    /// Per-grain instance branches fused by summation; no alignment loss.
    MgpMbmir,
    /// One instance branch shared by every grain, with the alignment loss.
    MgpSsf,
    /// Per-grain branches with the alignment loss.
    #[default]
    Full,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::BackboneOnly => "backbone",
            Variant::MgpFused => "backbone+MGP",
            Variant::MgpMbmir => "backbone+MGP+MBMIR",
            Variant::MgpSsf => "backbone+MGP+SSF",
            Variant::Full => "AGOS",
        }
    }

    pub fn uses_mgp(self) -> bool {
        self != Variant::BackboneOnly
    }

    /// Whether the model produces per-grain instance maps.
    pub fn has_instances(self) -> bool {
        matches!(self, Variant::MgpMbmir | Variant::MgpSsf | Variant::Full)
    }

    pub fn uses_sealig(self) -> bool {
        matches!(self, Variant::MgpSsf | Variant::Full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub mgp: MgpConfig,
    pub classes: usize,
    pub variant: Variant,
    /// Standard deviation of the random init of every non-backbone weight.
    pub head_init_std: f64,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: BackboneConfig::default(),
            mgp: MgpConfig::default(),
            classes: 3,
            variant: Variant::Full,
            head_init_std: 1e-3,
            dropout: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.classes < 2 {
            return Err(Error::Config("model.classes must be >= 2".into()));
        }
        if self.mgp.channels == 0 {
            return Err(Error::Config("mgp.channels must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Shape of the instance grid for an image of `h×w`.
    pub fn feature_grid(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let s = self.backbone.output_shape(Shape::new(1, h, w, self.backbone.in_channels))?;
        Ok((s.h, s.w))
    }
}

/// Randomly initialised parameters for `config`, reproducible from `seed`.
pub fn init_params<T: Real>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::new();
    init_backbone(&mut params, &config.backbone, &mut rng)?;
    let c1_in = config.backbone.out_channels;
    let std = config.head_init_std;
    match config.variant {
        Variant::BackboneOnly => {
            params.init_conv("head", Shape::new(1, 1, c1_in, config.classes), std, &mut rng)?;
        }
        Variant::MgpFused => {
            init_mgp(&mut params, &config.mgp, c1_in, std, &mut rng)?;
            params.init_conv(
                "head",
                Shape::new(1, 1, config.mgp.channels, config.classes),
                std,
                &mut rng,
            )?;
        }
        v => {
            init_mgp(&mut params, &config.mgp, c1_in, std, &mut rng)?;
            mbmir::init_mbmir(
                &mut params,
                config.mgp.grains,
                config.mgp.channels,
                config.classes,
                v == Variant::MgpSsf,
                std,
                &mut rng,
            )?;
        }
    }
    Ok(params)
}

/// Tape values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Bag distribution, `N×1×1×C`.
    pub fused: Var,
    /// Pre-softmax fused scores.
    pub logits: Var,
    /// Raw per-grain scores `Y_t` (empty for variants without instance branches).
    pub grain_scores: Vec<Var>,
    /// Instance maps `I_t`.
    pub instances: Vec<Var>,
    /// Difference distribution `Y_d`, when the variant and grain count allow it.
    pub diff: Option<Var>,
}

pub fn forward<T: Real, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    images: Var,
    training: bool,
    rng: &mut R,
) -> Result<ForwardOutput> {
    let x1 = backbone_forward(tape, images, params, &config.backbone, training, config.dropout, rng)?;
    if config.variant == Variant::BackboneOnly {
        let pooled = tape.global_avg_pool(x1)?;
        return linear_head(tape, params, pooled);
    }
    let grains = mgp_forward(tape, x1, params, &config.mgp)?;
    if config.variant == Variant::MgpFused {
        let sum = tape.add(&grains.features)?;
        let pooled = tape.global_avg_pool(sum)?;
        return linear_head(tape, params, pooled);
    }
    let branches = (0..grains.len())
        .map(|t| {
            let name = if config.variant == Variant::MgpSsf {
                SHARED_BRANCH.to_string()
            } else {
                branch_name(t)
            };
            params.register_conv(tape, &name, 1)
        })
        .collect::<Result<Vec<_>>>()?;
    let MbmirOutput {
        fused,
        logits,
        grain_scores,
        instances,
    } = mbmir::mbmir_forward(tape, &grains, &branches)?;
    let diff = if config.variant.uses_sealig() {
        ssf::diff_distribution_on_tape(tape, &instances)?
    } else {
        None
    };
    Ok(ForwardOutput {
        fused,
        logits,
        grain_scores,
        instances,
        diff,
    })
}

fn linear_head<T: Real>(tape: &mut Tape<T>, params: &ModelParams<T>, pooled: Var) -> Result<ForwardOutput> {
    let head = params.register_conv(tape, "head", 1)?;
    let logits = head.apply(tape, pooled, 1)?;
    let fused = tape.softmax(logits)?;
    Ok(ForwardOutput {
        fused,
        logits,
        grain_scores: Vec::new(),
        instances: Vec::new(),
        diff: None,
    })
}

/// Loss configuration actually applied to a variant.
pub fn effective_loss(config: &ModelConfig, loss: &LossConfig) -> LossConfig {
    LossConfig {
        enable_sealig: loss.enable_sealig && config.variant.uses_sealig(),
        ..*loss
    }
}

/// Builds the forward pass and the objective on `tape`.
pub fn build_loss<T: Real, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    loss: &LossConfig,
    images: &Tensor<T>,
    labels: &[usize],
    training: bool,
    rng: &mut R,
) -> Result<(ForwardOutput, ssf::LossTerms)> {
    let x = tape.leaf(images.clone());
    let out = forward(tape, params, config, x, training, rng)?;
    let weights: Vec<Var> = params
        .iter()
        .filter(|(n, _)| is_weight_name(n))
        .map(|(n, t)| tape.param(n, t))
        .collect();
    let terms = ssf::total_loss_on_tape(
        tape,
        out.fused,
        out.diff,
        labels,
        &weights,
        &effective_loss(config, loss),
    )?;
    Ok((out, terms))
}

/// Loss value and parameter gradients for one batch.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grads<T: Real, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    loss: &LossConfig,
    images: &Tensor<T>,
    labels: &[usize],
    training: bool,
    rng: &mut R,
) -> Result<(LossBreakdown, Gradients<T>)> {
    let mut tape = Tape::new();
    let (_, terms) = build_loss(&mut tape, params, config, loss, images, labels, training, rng)?;
    let breakdown = terms.breakdown(&tape);
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let grads = tape.backward(terms.total)?;
    Ok((breakdown, grads))
}

/// Loss value only, in eval mode.
pub fn loss_value<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    loss: &LossConfig,
    images: &Tensor<T>,
    labels: &[usize],
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, terms) = build_loss(&mut tape, params, config, loss, images, labels, false, &mut rng)?;
    Ok(terms.breakdown(&tape))
}

/// Eval-mode outputs for a batch, as plain values.
#[derive(Debug, Clone)]
pub struct Prediction<T> {
    pub fused: Vec<BagDistribution>,
    /// Per batch item, the raw score vector of each grain.
    pub grain_scores: Vec<Vec<Vec<f64>>>,
    /// `I_t` maps for the whole batch.
    pub instances: Vec<Tensor<T>>,
    pub diff: Option<Vec<BagDistribution>>,
}

pub fn predict_batch<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    images: &Tensor<T>,
) -> Result<Prediction<T>> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = tape.leaf(images.clone());
    let out = forward(&mut tape, params, config, x, false, &mut rng)?;
    let n = images.shape().n;
    let grain_scores = (0..n)
        .map(|i| {
            out.grain_scores
                .iter()
                .map(|&v| tape.value(v).batch_item(i).iter().map(|x| x.as_f64()).collect())
                .collect()
        })
        .collect();
    Ok(Prediction {
        fused: BagDistribution::rows(tape.value(out.fused), BagSource::Fused),
        grain_scores,
        instances: out.instances.iter().map(|&v| tape.value(v).clone()).collect(),
        diff: out
            .diff
            .map(|d| BagDistribution::rows(tape.value(d), BagSource::Diff)),
    })
}
