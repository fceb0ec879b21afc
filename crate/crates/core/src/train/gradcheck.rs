//! Analytic gradients of the full objective against central differences.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{BackwardFault, Tape};
use crate::backbone::BackboneConfig;
use crate::error::Result;
use crate::finite_diff::{finite_diff_grad, DEFAULT_EPS};
use crate::mgp::MgpConfig;
use crate::model::{build_loss, init_params, loss_value, ModelConfig, Variant};
use crate::params::ModelParams;
use crate::ssf::LossConfig;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub eps: f64,
    pub tolerance: f64,
    /// Magnitudes below this are compared absolutely.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            model: ModelConfig {
                backbone: BackboneConfig {
                    in_channels: 1,
                    stem_channels: 4,
                    num_blocks: 1,
                    downsample: 2,
                    out_channels: 4,
                },
                mgp: MgpConfig {
                    grains: 2,
                    channels: 4,
                    ..MgpConfig::default()
                },
                classes: 3,
                variant: Variant::Full,
                head_init_std: 0.5,
                dropout: 0.0,
            },
            loss: LossConfig::default(),
            batch: 2,
            height: 8,
            width: 8,
            eps: DEFAULT_EPS,
            tolerance: 1e-5,
            abs_floor: 1e-6,
            seed: 7,
        }
    }
}

/// Worst disagreement inside one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub values: usize,
    pub max_rel: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub groups: Vec<GroupError>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel < self.tolerance)
    }

    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28} {:>6} {:>12} {:>12}", "parameter", "values", "max_rel", "max_abs")?;
        for g in &self.groups {
            let flag = if g.max_rel < self.tolerance { "" } else { "  FAIL" };
            writeln!(
                f,
                "{:<28} {:>6} {:>12.3e} {:>12.3e}{flag}",
                g.name, g.values, g.max_rel, g.max_abs
            )?;
        }
        write!(
            f,
            "worst {:.3e} (tolerance {:.0e}): {}",
            self.worst(),
            self.tolerance,
            if self.passed() { "ok" } else { "FAILED" }
        )
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Random inputs and labels for the check.
pub fn gradcheck_inputs(config: &GradcheckConfig) -> (Tensor<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let shape = Shape::new(
        config.batch,
        config.height,
        config.width,
        config.model.backbone.in_channels,
    );
    let data = (0..shape.numel()).map(|_| rng.random::<f64>()).collect();
    let labels = (0..config.batch).map(|i| i % config.model.classes).collect();
    (Tensor::new(shape, data).expect("finite"), labels)
}

/// Compares every parameter's gradient; `fault` corrupts one backward rule.
pub fn gradcheck(config: &GradcheckConfig, fault: Option<BackwardFault>) -> Result<GradcheckReport> {
    let params: ModelParams<f64> = init_params(&config.model, config.seed)?;
    let (x, labels) = gradcheck_inputs(config);
    let mut tape = Tape::new();
    if let Some(f) = fault {
        tape.inject_fault(f);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (_, terms) = build_loss(&mut tape, &params, &config.model, &config.loss, &x, &labels, false, &mut rng)?;
    let grads = tape.backward(terms.total)?;
    let mut groups = Vec::new();
    for name in params.names() {
        let analytic = grads
            .param(name)
            .ok_or_else(|| crate::Error::UnknownParam(name.to_string()))?;
        let numeric = finite_diff_grad(
            |p| Ok(loss_value(p, &config.model, &config.loss, &x, &labels)?.total),
            &params,
            name,
            config.eps,
        )?;
        let mut g = GroupError {
            name: name.to_string(),
            values: analytic.len(),
            max_rel: 0.0,
            max_abs: 0.0,
        };
        for (&a, &n) in analytic.data().iter().zip(&numeric) {
            g.max_abs = g.max_abs.max((a - n).abs());
            g.max_rel = g.max_rel.max(relative_error(a, n, config.abs_floor));
        }
        groups.push(g);
    }
    Ok(GradcheckReport {
        groups,
        tolerance: config.tolerance,
    })
}
