//! Value-level versions of the differentiable operations, for callers that do
//! not need gradients.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::{self, ConvGeometry};
use crate::tensor::{Real, Shape, Tensor};

/// A convolution kernel: `Kh×Kw×Cin×Cout` weights, `Cout` biases and a dilation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub dilation: usize,
}

impl<T: Real> ConvKernel<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, dilation: usize) -> Result<Self> {
        let ws = weight.shape();
        if bias.len() != ws.c {
            return Err(Error::InvalidShape {
                op: "conv kernel",
                msg: format!("{} biases for {} output channels", bias.len(), ws.c),
            });
        }
        if dilation == 0 {
            return Err(Error::invalid("dilation must be >= 1"));
        }
        Ok(ConvKernel {
            weight,
            bias,
            dilation,
        })
    }

    pub fn zeros(kh: usize, kw: usize, cin: usize, cout: usize, dilation: usize) -> Self {
        ConvKernel {
            weight: Tensor::zeros(Shape::new(kh, kw, cin, cout)),
            bias: Tensor::zeros(Shape::vector(1, cout)),
            dilation,
        }
    }

    /// 1×1 kernel whose weights are the identity matrix.
    pub fn identity_1x1(channels: usize) -> Self {
        let mut k = Self::zeros(1, 1, channels, channels, 1);
        for c in 0..channels {
            k.weight.data_mut()[c * channels + c] = T::one();
        }
        k
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().w
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().c
    }

    /// Side length of the dilated footprint of this kernel, `d·(K-1)+1`.
    pub fn footprint(&self) -> usize {
        self.dilation * (self.weight.shape().n - 1) + 1
    }
}

/// Stride-1 convolution with "same" zero padding.
pub fn conv2d<T: Real>(input: &Tensor<T>, kernel: &ConvKernel<T>) -> Result<Tensor<T>> {
    let geom = ConvGeometry::new(input.shape(), kernel.weight.shape(), kernel.dilation, 1)?;
    if !input.all_finite() {
        return Err(Error::NonFinite("conv2d input".into()));
    }
    if !kernel.weight.all_finite() || !kernel.bias.all_finite() {
        return Err(Error::NonFinite("conv2d kernel".into()));
    }
    let out = ops::conv2d_forward(&geom, input.data(), kernel.weight.data(), kernel.bias.data());
    Ok(Tensor::from_raw(geom.output(), out))
}

/// Per-position affine map across channels.
pub fn conv1x1<T: Real>(input: &Tensor<T>, kernel: &ConvKernel<T>) -> Result<Tensor<T>> {
    let ks = kernel.weight.shape();
    if ks.n != 1 || ks.h != 1 {
        return Err(Error::InvalidShape {
            op: "conv1x1",
            msg: format!("kernel is {}x{}, expected 1x1", ks.n, ks.h),
        });
    }
    conv2d(input, kernel)
}

pub fn abs_diff<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "abs_diff",
            expected: a.shape(),
            got: b.shape(),
        });
    }
    let out = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs())
        .collect();
    Ok(Tensor::from_raw(a.shape(), out))
}

pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.spatial() == 0 {
        return Err(Error::InvalidShape {
            op: "global_avg_pool",
            msg: "empty spatial extent".into(),
        });
    }
    Ok(Tensor::from_raw(
        Shape::vector(s.n, s.c),
        ops::global_avg_pool(s, x.data()),
    ))
}

/// Softmax of each batch row of an `N×1×1×C` tensor.
pub fn softmax<T: Real>(v: &Tensor<T>) -> Result<Tensor<T>> {
    let s = v.shape();
    if s.spatial() != 1 {
        return Err(Error::InvalidShape {
            op: "softmax",
            msg: format!("expected N×1×1×C, got {s}"),
        });
    }
    if !v.all_finite() {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    Ok(Tensor::from_raw(s, ops::softmax_rows(s.n, s.c, v.data())))
}

/// Softmax of a plain vector.
pub fn softmax_vec(v: &[f64]) -> Vec<f64> {
    ops::softmax_rows(1, v.len(), v)
}

/// Per-class binary cross-entropy of one distribution against a class index.
pub fn cross_entropy(pred: &[f64], class_index: usize, num_classes: usize) -> Result<f64> {
    if pred.len() != num_classes {
        return Err(Error::invalid(format!(
            "{} probabilities for {num_classes} classes",
            pred.len()
        )));
    }
    if class_index >= num_classes {
        return Err(Error::ClassOutOfRange {
            index: class_index,
            classes: num_classes,
        });
    }
    Ok(ops::cross_entropy_row(pred, class_index))
}

/// Inverted dropout; identity in eval mode.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    x: &Tensor<T>,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} not in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let out = x
        .data()
        .iter()
        .map(|&v| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                v * keep
            }
        })
        .collect();
    Ok(Tensor::from_raw(x.shape(), out))
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::from_raw(
        x.shape(),
        x.data().iter().map(|&v| v.max(T::zero())).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv1x1_zero_weights_emit_bias() {
        let x = Tensor::<f64>::full(Shape::new(1, 3, 3, 2), 7.0);
        let mut k = ConvKernel::zeros(1, 1, 2, 3, 1);
        k.bias = Tensor::from_f64(Shape::vector(1, 3), &[1.0, -2.0, 0.5]).unwrap();
        let y = conv1x1(&x, &k).unwrap();
        for p in 0..9 {
            assert_eq!(&y.data()[p * 3..p * 3 + 3], &[1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn conv1x1_identity() {
        let x = Tensor::<f64>::from_f64(Shape::new(1, 1, 2, 2), &[1., 2., 3., 4.]).unwrap();
        let y = conv1x1(&x, &ConvKernel::identity_1x1(2)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv1x1_rejects_3x3() {
        let x = Tensor::<f64>::zeros(Shape::new(1, 2, 2, 1));
        assert!(conv1x1(&x, &ConvKernel::zeros(3, 3, 1, 1, 1)).is_err());
    }

    #[test]
    fn conv_channel_mismatch() {
        let x = Tensor::<f64>::zeros(Shape::new(1, 4, 4, 2));
        let err = conv2d(&x, &ConvKernel::zeros(3, 3, 3, 1, 1)).unwrap_err();
        assert!(matches!(err, Error::InvalidShape { .. }));
    }

    #[test]
    fn abs_diff_direct() {
        let a = Tensor::<f64>::from_f64(Shape::vector(1, 2), &[1., -2.]).unwrap();
        let b = Tensor::<f64>::from_f64(Shape::vector(1, 2), &[-1., 1.]).unwrap();
        assert_eq!(abs_diff(&a, &b).unwrap().data(), &[2., 3.]);
        assert!(abs_diff(&a, &a).unwrap().data().iter().all(|&v| v == 0.0));
        let c = Tensor::<f64>::zeros(Shape::vector(1, 3));
        assert!(abs_diff(&a, &c).is_err());
    }

    #[test]
    fn gap_constant_and_empty() {
        let x = Tensor::<f64>::full(Shape::new(2, 3, 3, 2), 4.25);
        assert!(global_avg_pool(&x).unwrap().data().iter().all(|&v| v == 4.25));
        let e = Tensor::<f64>::zeros(Shape::new(1, 0, 3, 2));
        assert!(global_avg_pool(&e).is_err());
    }

    #[test]
    fn cross_entropy_perfect_and_uniform() {
        assert!(cross_entropy(&[0.0, 1.0, 0.0], 1, 3).unwrap() <= 1e-10);
        let u = cross_entropy(&[1.0 / 3.0; 3], 2, 3).unwrap();
        let expected = (3f64.ln() + 2.0 * 1.5f64.ln()) / 3.0;
        assert!((u - expected).abs() < 1e-12);
        assert!(cross_entropy(&[0.5, 0.5], 2, 2).is_err());
    }
}
