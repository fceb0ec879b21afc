//! Named learnable parameters.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::functional::ConvKernel;
use crate::tensor::{Real, Shape, Tensor};

/// Every learnable tensor of a model, addressed by a stable dotted name such
/// as `mgp.dilated2.weight`. Names ending in `.weight` are weights (subject to
/// L2 regularisation); names ending in `.bias` are biases.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

pub fn is_weight_name(name: &str) -> bool {
    name.ends_with(".weight")
}

impl<T: Real> ModelParams<T> {
    pub fn new() -> Self {
        ModelParams {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries.
    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// The `<prefix>.weight` / `<prefix>.bias` pair as a kernel.
    pub fn kernel(&self, prefix: &str, dilation: usize) -> Result<ConvKernel<T>> {
        ConvKernel::new(
            self.get(&format!("{prefix}.weight"))?.clone(),
            self.get(&format!("{prefix}.bias"))?.clone(),
            dilation,
        )
    }

    pub fn insert_kernel(&mut self, prefix: &str, kernel: ConvKernel<T>) {
        self.insert(format!("{prefix}.weight"), kernel.weight);
        self.insert(format!("{prefix}.bias"), kernel.bias);
    }

    /// Inserts a `Kh×Kw×Cin×Cout` kernel with N(0, std²) weights and zero bias.
    pub fn init_conv<R: Rng + ?Sized>(
        &mut self,
        prefix: &str,
        shape: Shape,
        std: f64,
        rng: &mut R,
    ) -> Result<()> {
        let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
        let weight = (0..shape.numel())
            .map(|_| T::from_f64(normal.sample(rng)))
            .collect();
        self.insert(format!("{prefix}.weight"), Tensor::from_raw(shape, weight));
        self.insert(format!("{prefix}.bias"), Tensor::zeros(Shape::vector(1, shape.c)));
        Ok(())
    }

    /// Registers `<prefix>.weight` / `<prefix>.bias` on the tape.
    pub fn register_conv(&self, tape: &mut Tape<T>, prefix: &str, dilation: usize) -> Result<ConvHandle> {
        let wname = format!("{prefix}.weight");
        let bname = format!("{prefix}.bias");
        let weight = tape.param(&wname, self.get(&wname)?);
        let bias = tape.param(&bname, self.get(&bname)?);
        Ok(ConvHandle {
            weight,
            bias,
            dilation,
        })
    }

    /// Writes gradients into each parameter's gradient slot.
    pub fn accumulate_grads(&mut self, grads: &Gradients<T>) -> Result<()> {
        for (name, g) in grads.params() {
            self.get_mut(name)?.accumulate_grad(g.data())?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.tensors.values_mut().for_each(Tensor::zero_grad);
    }

    /// `Σ‖W‖²` over weights only.
    pub fn weight_sq_norm(&self) -> f64 {
        self.iter()
            .filter(|(n, _)| is_weight_name(n))
            .flat_map(|(_, t)| t.data().iter().map(|v| v.as_f64() * v.as_f64()))
            .sum()
    }
}

/// A kernel whose weight and bias live on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvHandle {
    pub weight: Var,
    pub bias: Var,
    pub dilation: usize,
}

impl ConvHandle {
    /// Puts a plain kernel on the tape as constant leaves.
    pub fn constant<T: Real>(tape: &mut Tape<T>, kernel: &ConvKernel<T>) -> Self {
        ConvHandle {
            weight: tape.leaf(kernel.weight.clone()),
            bias: tape.leaf(kernel.bias.clone()),
            dilation: kernel.dilation,
        }
    }

    pub fn with_dilation(self, dilation: usize) -> Self {
        ConvHandle { dilation, ..self }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, x: Var, stride: usize) -> Result<Var> {
        tape.conv2d(x, self.weight, self.bias, self.dilation, stride)
    }
}
