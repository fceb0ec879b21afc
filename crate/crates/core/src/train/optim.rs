//! Adam with bias correction and the step learning-rate schedule.

use crate::autodiff::Gradients;
use crate::error::{Error, Result};
use crate::params::{is_weight_name, ModelParams};
use crate::tensor::{Real, Tensor};

use super::config::TrainConfig;

/// `lr0 · factor^⌊epoch / every⌋`.
pub fn lr_schedule(epoch: usize, config: &TrainConfig) -> f64 {
    config.lr0 * config.lr_decay_factor.powi((epoch / config.lr_decay_every) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// When set, `λ·2w` is added to weight gradients before the moment update.
    pub coupled_weight_decay: Option<f64>,
}

impl AdamConfig {
    pub fn from_train(config: &TrainConfig) -> Self {
        AdamConfig {
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            coupled_weight_decay: (!config.loss.l2_in_loss).then_some(config.loss.weight_decay),
        }
    }
}

/// First and second moments, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn zeros_like(params: &ModelParams<T>) -> Self {
        let mut m = ModelParams::new();
        for (name, t) in params.iter() {
            m.insert(name, Tensor::zeros(t.shape()));
        }
        AdamState {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter that has a gradient.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    lr: f64,
    config: &AdamConfig,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (name, p) in params.iter_mut() {
        let Some(g) = grads.param(name) else {
            continue;
        };
        let decay = match config.coupled_weight_decay {
            Some(l) if is_weight_name(name) => 2.0 * l,
            _ => 0.0,
        };
        let m = state.m.get_mut(name)?.data_mut();
        let v = state.v.get_mut(name)?.data_mut();
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            let g = gi.as_f64() + decay * w.as_f64();
            let m_new = b1 * mi.as_f64() + (1.0 - b1) * g;
            let v_new = b2 * vi.as_f64() + (1.0 - b2) * g * g;
            *mi = T::from_f64(m_new);
            *vi = T::from_f64(v_new);
            let update = lr * (m_new / c1) / ((v_new / c2).sqrt() + config.eps);
            *w = T::from_f64(w.as_f64() - update);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::tensor::Shape;

    fn adam() -> AdamConfig {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            coupled_weight_decay: None,
        }
    }

    fn grads_for(params: &ModelParams<f64>, scale: f64) -> Gradients<f64> {
        let mut tape = Tape::new();
        let w = tape.param("w.weight", params.get("w.weight").unwrap());
        let s = tape.sum(w);
        let l = tape.scale(s, scale);
        tape.backward(l).unwrap()
    }

    #[test]
    fn schedule() {
        let c = TrainConfig::default();
        assert_eq!(lr_schedule(0, &c), 1e-4);
        assert_eq!(lr_schedule(29, &c), 1e-4);
        assert_eq!(lr_schedule(30, &c), 5e-5);
        assert_eq!(lr_schedule(60, &c), 2.5e-5);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = ModelParams::new();
        p.insert("w.weight", Tensor::full(Shape::vector(1, 3), 0.5));
        let before = p.clone();
        let g = grads_for(&p, 0.0);
        let mut st = AdamState::zeros_like(&p);
        adam_step(&mut p, &g, &mut st, 1e-3, &adam()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = ModelParams::new();
        p.insert("w.weight", Tensor::full(Shape::scalar(), 0.0));
        let g = grads_for(&p, 1.0);
        let mut st = AdamState::zeros_like(&p);
        adam_step(&mut p, &g, &mut st, 1e-4, &adam()).unwrap();
        // m̂ = 1, v̂ = 1: update = lr / (1 + eps)
        let moved = -p.get("w.weight").unwrap().item();
        assert!((moved - 1e-4 / (1.0 + 1e-8)).abs() < 1e-18);
        assert!(adam_step(&mut p, &g, &mut st, 0.0, &adam()).is_err());
    }

    #[test]
    fn coupled_decay_only_touches_weights() {
        let mut p = ModelParams::new();
        p.insert("w.weight", Tensor::full(Shape::scalar(), 1.0));
        p.insert("w.bias", Tensor::full(Shape::scalar(), 1.0));
        let mut tape = Tape::new();
        let w = tape.param("w.weight", p.get("w.weight").unwrap());
        let b = tape.param("w.bias", p.get("w.bias").unwrap());
        let s = tape.add(&[w, b]).unwrap();
        let zero = tape.scale(s, 0.0);
        let g = tape.backward(zero).unwrap();
        let mut st = AdamState::zeros_like(&p);
        let cfg = AdamConfig {
            coupled_weight_decay: Some(5e-4),
            ..adam()
        };
        adam_step(&mut p, &g, &mut st, 1e-3, &cfg).unwrap();
        assert!(p.get("w.weight").unwrap().item() < 1.0);
        assert_eq!(p.get("w.bias").unwrap().item(), 1.0);
    }
}
