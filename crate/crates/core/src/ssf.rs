//! Self-aligned semantic fusion and the training objective.
//!
//! The difference maps `I_{d,t} = |I_t - I_0|` (t ≥ 1) are mean pooled and
//! summed into `Y_d = softmax(Σ_t Y_{d,t})`. The semantic-aligning loss is
//! the classification cross-entropy applied to `Y_d`, and the total
//! objective is `L_cls + α·L_sealig + λ·Σ‖W‖²`.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::functional;
use crate::mbmir::{BagDistribution, BagSource, InstanceRepr};
use crate::ops;
use crate::params::ModelParams;
use crate::tensor::Real;

/// Default weight of the semantic-aligning term.
pub const DEFAULT_ALPHA: f64 = 5e-4;
/// Default L2 coefficient on weights.
pub const DEFAULT_WEIGHT_DECAY: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub weight_decay: f64,
    pub enable_sealig: bool,
    /// When false the L2 penalty is left to the optimiser (gradient-coupled
    /// decay); its value is still reported.
    pub l2_in_loss: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: DEFAULT_ALPHA,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            enable_sealig: true,
            l2_in_loss: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub cls: f64,
    pub sealig: f64,
    /// Already scaled by λ.
    pub l2: f64,
    pub total: f64,
    pub alpha: f64,
}

impl LossBreakdown {
    pub fn from_parts(cls: f64, sealig: f64, l2: f64, alpha: f64) -> Self {
        LossBreakdown {
            cls,
            sealig,
            l2,
            total: cls + alpha * sealig + l2,
            alpha,
        }
    }

    /// Running mean helper: `self + other * w`.
    pub fn add_scaled(&mut self, other: &LossBreakdown, w: f64) {
        self.cls += other.cls * w;
        self.sealig += other.sealig * w;
        self.l2 += other.l2 * w;
        self.total += other.total * w;
        self.alpha = other.alpha;
    }
}

/// `I_{d,t} = |I_t - I_0|`.
pub fn instance_diff<T: Real>(i_t: &InstanceRepr<T>, i_0: &InstanceRepr<T>) -> Result<InstanceRepr<T>> {
    if i_t.grain == 0 {
        return Err(Error::invalid("instance_diff needs a grain index >= 1"));
    }
    Ok(InstanceRepr {
        map: functional::abs_diff(&i_t.map, &i_0.map)?,
        grain: i_t.grain,
    })
}

/// `Y_d` per batch item from `I_0..I_T`.
pub fn diff_distribution<T: Real>(instance_reprs: &[InstanceRepr<T>]) -> Result<Vec<BagDistribution>> {
    let mut tape = Tape::new();
    let vars: Vec<_> = instance_reprs
        .iter()
        .map(|r| tape.leaf(r.map.clone()))
        .collect();
    let y_d = diff_distribution_on_tape(&mut tape, &vars)?
        .ok_or_else(|| Error::invalid("difference distribution needs at least two grains"))?;
    Ok(BagDistribution::rows(tape.value(y_d), BagSource::Diff))
}

/// Tape version of [`diff_distribution`]; `None` when there is only the base grain.
pub fn diff_distribution_on_tape<T: Real>(tape: &mut Tape<T>, instances: &[Var]) -> Result<Option<Var>> {
    let Some((&base, rest)) = instances.split_first() else {
        return Err(Error::invalid("no instance representations"));
    };
    if rest.is_empty() {
        return Ok(None);
    }
    let mut scores = Vec::with_capacity(rest.len());
    for &inst in rest {
        let d = tape.abs_diff(inst, base)?;
        scores.push(tape.global_avg_pool(d)?);
    }
    let sum = tape.add(&scores)?;
    Ok(Some(tape.softmax(sum)?))
}

/// Classification loss on the fused distribution.
pub fn loss_cls(fused: &BagDistribution, class_index: usize) -> Result<f64> {
    functional::cross_entropy(&fused.probs, class_index, fused.classes())
}

/// Semantic-aligning loss: the same cross-entropy on the difference distribution.
pub fn loss_sealig(y_d: &BagDistribution, class_index: usize) -> Result<f64> {
    if y_d.source != BagSource::Diff {
        return Err(Error::invalid("sealig loss expects a difference distribution"));
    }
    functional::cross_entropy(&y_d.probs, class_index, y_d.classes())
}

/// Value-level objective for one bag.
pub fn total_loss<T: Real>(
    fused: &BagDistribution,
    y_d: Option<&BagDistribution>,
    class_index: usize,
    params: &ModelParams<T>,
    config: &LossConfig,
) -> Result<LossBreakdown> {
    let cls = loss_cls(fused, class_index)?;
    let sealig = match (config.enable_sealig, y_d) {
        (true, Some(d)) => loss_sealig(d, class_index)?,
        (true, None) => return Err(Error::invalid("sealig enabled but no difference distribution")),
        (false, _) => 0.0,
    };
    let alpha = if config.enable_sealig { config.alpha } else { 0.0 };
    let l2 = config.weight_decay * params.weight_sq_norm();
    Ok(LossBreakdown::from_parts(cls, sealig, l2, alpha))
}

/// Loss nodes on a tape.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub total: Var,
    pub cls: Var,
    pub sealig: Option<Var>,
    pub l2: Option<Var>,
    alpha: f64,
    l2_value: f64,
}

impl LossTerms {
    pub fn breakdown<T: Real>(&self, tape: &Tape<T>) -> LossBreakdown {
        let cls = tape.value(self.cls).item().as_f64();
        let sealig = self.sealig.map_or(0.0, |v| tape.value(v).item().as_f64());
        LossBreakdown::from_parts(cls, sealig, self.l2_value, self.alpha)
    }
}

/// Builds `L_cls + α·L_sealig + λ·Σ‖W‖²` over a batch.
///
/// `weights` are the tape handles of every weight parameter. With the
/// semantic-aligning term enabled but no difference distribution (a model
/// with only the base grain) the term is taken as zero.
pub fn total_loss_on_tape<T: Real>(
    tape: &mut Tape<T>,
    fused: Var,
    y_d: Option<Var>,
    labels: &[usize],
    weights: &[Var],
    config: &LossConfig,
) -> Result<LossTerms> {
    let cls = tape.cross_entropy(fused, labels)?;
    let mut terms = vec![cls];
    let mut alpha = 0.0;
    let mut sealig = None;
    if config.enable_sealig {
        match y_d {
            Some(d) => {
                let s = tape.cross_entropy(d, labels)?;
                terms.push(tape.scale(s, T::from_f64(config.alpha)));
                sealig = Some(s);
                alpha = config.alpha;
            }
            None => log::debug!("semantic-aligning loss needs T >= 1; using 0"),
        }
    }
    let mut l2 = None;
    let mut l2_value = 0.0;
    if config.weight_decay > 0.0 && !weights.is_empty() {
        let sq: Vec<_> = weights.iter().map(|&w| tape.sum_squares(w)).collect();
        let sum = tape.add(&sq)?;
        let scaled = tape.scale(sum, T::from_f64(config.weight_decay));
        l2_value = tape.value(scaled).item().as_f64();
        if config.l2_in_loss {
            terms.push(scaled);
        }
        l2 = Some(scaled);
    }
    let total = if terms.len() == 1 { cls } else { tape.add(&terms)? };
    Ok(LossTerms {
        total,
        cls,
        sealig,
        l2,
        alpha,
        l2_value,
    })
}

/// Closed form of the cross-entropy of a uniform distribution over `classes`.
pub fn uniform_cross_entropy(classes: usize) -> f64 {
    let c = classes as f64;
    let p = vec![1.0 / c; classes];
    ops::cross_entropy_row(&p, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tensor};

    fn repr(v: &[f64], shape: Shape, grain: usize) -> InstanceRepr<f64> {
        InstanceRepr {
            map: Tensor::from_f64(shape, v).unwrap(),
            grain,
        }
    }

    #[test]
    fn instance_diff_cases() {
        let s = Shape::new(1, 1, 2, 2);
        let a = repr(&[1., 2., 3., 4.], s, 0);
        let b = repr(&[1., 2., 3., 4.], s, 1);
        assert!(instance_diff(&b, &a).unwrap().map.data().iter().all(|&v| v == 0.0));
        let c = repr(&[-1.5, -0.5, 0.5, 1.5], s, 2);
        let a0 = repr(&[1., 2., 3., 4.], s, 0);
        assert!(instance_diff(&c, &a0).unwrap().map.data().iter().all(|&v| v == 2.5));
        assert!(instance_diff(&a0, &a0).is_err());
    }

    #[test]
    fn identical_grains_give_uniform_diff() {
        let s = Shape::new(1, 2, 2, 3);
        let v: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let reps = vec![repr(&v, s, 0), repr(&v, s, 1), repr(&v, s, 2)];
        let d = diff_distribution(&reps).unwrap();
        assert!(d[0].probs.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        let l = loss_sealig(&d[0], 1).unwrap();
        assert!((l - uniform_cross_entropy(3)).abs() < 1e-15);
    }

    #[test]
    fn one_grain_constant_diff() {
        let s = Shape::new(1, 2, 1, 2);
        let i0 = repr(&[0.0, 0.0, 0.0, 0.0], s, 0);
        let i1 = repr(&[0.3, -1.2, -0.3, 1.2], s, 1);
        let d = diff_distribution(&[i0, i1]).unwrap();
        let expected = functional::softmax_vec(&[0.3, 1.2]);
        for (a, b) in d[0].probs.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn base_only_has_no_diff() {
        let s = Shape::new(1, 1, 1, 2);
        assert!(diff_distribution(&[repr(&[0.0, 1.0], s, 0)]).is_err());
    }

    #[test]
    fn uniform_closed_form() {
        let expected = (3f64.ln() + 2.0 * 1.5f64.ln()) / 3.0;
        assert!((uniform_cross_entropy(3) - expected).abs() < 1e-15);
    }

    #[test]
    fn total_loss_switches() {
        let mut params = ModelParams::<f64>::new();
        params.insert("a.weight", Tensor::full(Shape::vector(1, 2), 1.0));
        let fused = BagDistribution::new(vec![0.2, 0.8], BagSource::Fused).unwrap();
        let yd = BagDistribution::new(vec![0.5, 0.5], BagSource::Diff).unwrap();
        let cfg = LossConfig::default();
        let b = total_loss(&fused, Some(&yd), 1, &params, &cfg).unwrap();
        assert!((b.total - (b.cls + b.alpha * b.sealig + b.l2)).abs() < 1e-12);
        assert!((b.l2 - 2.0 * 5e-4).abs() < 1e-15);
        assert!(total_loss(&fused, None, 1, &params, &cfg).is_err());
        let off = LossConfig {
            alpha: 0.0,
            ..cfg
        };
        let b0 = total_loss(&fused, Some(&yd), 1, &params, &off).unwrap();
        assert!((b0.total - (b0.cls + b0.l2)).abs() < 1e-15);
        assert!(loss_sealig(&fused, 0).is_err());
    }
}
