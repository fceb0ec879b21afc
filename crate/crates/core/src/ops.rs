//! Raw forward/backward kernels on flat buffers.
//!
//! The tape and the value-level API in [`crate::functional`] both call into
//! these; shape validation happens before a kernel is reached.

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape};

/// Geometry of a stride-`s`, dilation-`d` convolution with "same" zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub input: Shape,
    /// Kernel shape as `Kh×Kw×Cin×Cout`.
    pub kernel: Shape,
    pub dilation: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn new(input: Shape, kernel: Shape, dilation: usize, stride: usize) -> Result<Self> {
        if dilation == 0 || stride == 0 {
            return Err(Error::invalid(format!(
                "conv2d: dilation {dilation} and stride {stride} must be >= 1"
            )));
        }
        if kernel.n.is_multiple_of(2) || kernel.h.is_multiple_of(2) {
            return Err(Error::InvalidShape {
                op: "conv2d",
                msg: format!("kernel {}x{} must have odd extent", kernel.n, kernel.h),
            });
        }
        if input.c != kernel.w {
            return Err(Error::InvalidShape {
                op: "conv2d",
                msg: format!(
                    "input has {} channels but kernel expects {}",
                    input.c, kernel.w
                ),
            });
        }
        if !input.h.is_multiple_of(stride) || !input.w.is_multiple_of(stride) {
            return Err(Error::InvalidShape {
                op: "conv2d",
                msg: format!("spatial size {}x{} not divisible by stride {stride}", input.h, input.w),
            });
        }
        Ok(ConvGeometry {
            input,
            kernel,
            dilation,
            stride,
        })
    }

    pub fn pad_y(&self) -> usize {
        self.dilation * (self.kernel.n - 1) / 2
    }

    pub fn pad_x(&self) -> usize {
        self.dilation * (self.kernel.h - 1) / 2
    }

    pub fn output(&self) -> Shape {
        Shape::new(
            self.input.n,
            self.input.h / self.stride,
            self.input.w / self.stride,
            self.kernel.c,
        )
    }

    /// Input coordinate read by output row `o` through kernel tap `k`, if inside the map.
    #[inline]
    fn source(&self, o: usize, k: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k * self.dilation) as isize - pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + a * xv;
    }
}

pub fn conv2d_forward<T: Real>(g: &ConvGeometry, x: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let out_shape = g.output();
    let (kh, kw, cin, cout) = (g.kernel.n, g.kernel.h, g.kernel.w, g.kernel.c);
    let (py, px) = (g.pad_y(), g.pad_x());
    let mut out = vec![T::zero(); out_shape.numel()];
    for n in 0..out_shape.n {
        for oy in 0..out_shape.h {
            for ox in 0..out_shape.w {
                let o = out_shape.index(n, oy, ox, 0);
                let acc = &mut out[o..o + cout];
                acc.copy_from_slice(b);
                for ky in 0..kh {
                    let Some(iy) = g.source(oy, ky, py, g.input.h) else {
                        continue;
                    };
                    for kx in 0..kw {
                        let Some(ix) = g.source(ox, kx, px, g.input.w) else {
                            continue;
                        };
                        let xi = g.input.index(n, iy, ix, 0);
                        let xin = &x[xi..xi + cin];
                        let wk = &w[(ky * kw + kx) * cin * cout..(ky * kw + kx + 1) * cin * cout];
                        for (ci, &a) in xin.iter().enumerate() {
                            if a != T::zero() {
                                axpy(acc, a, &wk[ci * cout..(ci + 1) * cout]);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a convolution. `dx` is skipped when `None`.
pub fn conv2d_backward<T: Real>(
    g: &ConvGeometry,
    x: &[T],
    w: &[T],
    dout: &[T],
    mut dx: Option<&mut [T]>,
    dw: &mut [T],
    db: &mut [T],
) {
    let out_shape = g.output();
    let (kh, kw, cin, cout) = (g.kernel.n, g.kernel.h, g.kernel.w, g.kernel.c);
    let (py, px) = (g.pad_y(), g.pad_x());

    // Kh×Kw×Cout×Cin copy so the input-gradient scatter is contiguous in Cin.
    let wt: Vec<T> = if dx.is_some() {
        let mut wt = vec![T::zero(); w.len()];
        for k in 0..kh * kw {
            for ci in 0..cin {
                for co in 0..cout {
                    wt[(k * cout + co) * cin + ci] = w[(k * cin + ci) * cout + co];
                }
            }
        }
        wt
    } else {
        Vec::new()
    };

    for n in 0..out_shape.n {
        for oy in 0..out_shape.h {
            for ox in 0..out_shape.w {
                let o = out_shape.index(n, oy, ox, 0);
                let grow = &dout[o..o + cout];
                for (d, &gv) in db.iter_mut().zip(grow) {
                    *d = *d + gv;
                }
                for ky in 0..kh {
                    let Some(iy) = g.source(oy, ky, py, g.input.h) else {
                        continue;
                    };
                    for kx in 0..kw {
                        let Some(ix) = g.source(ox, kx, px, g.input.w) else {
                            continue;
                        };
                        let k = ky * kw + kx;
                        let xi = g.input.index(n, iy, ix, 0);
                        let xin = &x[xi..xi + cin];
                        let dwk = &mut dw[k * cin * cout..(k + 1) * cin * cout];
                        for (ci, &a) in xin.iter().enumerate() {
                            if a != T::zero() {
                                axpy(&mut dwk[ci * cout..(ci + 1) * cout], a, grow);
                            }
                        }
                        if let Some(dx) = dx.as_deref_mut() {
                            let dxin = &mut dx[xi..xi + cin];
                            let wtk = &wt[k * cout * cin..(k + 1) * cout * cin];
                            for (co, &gv) in grow.iter().enumerate() {
                                if gv != T::zero() {
                                    axpy(dxin, gv, &wtk[co * cin..(co + 1) * cin]);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Neumaier-compensated mean over the spatial positions of each (n, c).
pub fn global_avg_pool<T: Real>(shape: Shape, x: &[T]) -> Vec<T> {
    let hw = shape.spatial();
    let mut out = Vec::with_capacity(shape.n * shape.c);
    let mut sum = vec![0.0f64; shape.c];
    let mut comp = vec![0.0f64; shape.c];
    for n in 0..shape.n {
        sum.iter_mut().for_each(|v| *v = 0.0);
        comp.iter_mut().for_each(|v| *v = 0.0);
        for p in 0..hw {
            let row = &x[(n * hw + p) * shape.c..(n * hw + p + 1) * shape.c];
            for c in 0..shape.c {
                let v = row[c].as_f64();
                let t = sum[c] + v;
                if sum[c].abs() >= v.abs() {
                    comp[c] += (sum[c] - t) + v;
                } else {
                    comp[c] += (v - t) + sum[c];
                }
                sum[c] = t;
            }
        }
        for c in 0..shape.c {
            out.push(T::from_f64((sum[c] + comp[c]) / hw as f64));
        }
    }
    out
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Real>(rows: usize, cols: usize, x: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let o = &mut out[r * cols..(r + 1) * cols];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for (ov, &v) in o.iter_mut().zip(row) {
            *ov = (v - max).exp();
            total = total + *ov;
        }
        for ov in o.iter_mut() {
            *ov = *ov / total;
        }
    }
    out
}

/// Lower clamp for probabilities fed to a logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Per-class binary cross-entropy against a one-hot target, averaged over classes:
/// `-(1/C) Σ_i [t_i log p_i + (1 - t_i) log(1 - p_i)]` with `p` clamped to `[ε, 1-ε]`.
pub fn cross_entropy_row<T: Real>(p: &[T], class: usize) -> T {
    let eps = T::from_f64(LOG_CLAMP);
    let one = T::one();
    let mut total = T::zero();
    for (i, &pi) in p.iter().enumerate() {
        let pc = pi.max(eps).min(one - eps);
        total = total
            + if i == class {
                pc.ln()
            } else {
                (one - pc).ln()
            };
    }
    -total / T::from_f64(p.len() as f64)
}

/// dL/dp for [`cross_entropy_row`]; zero where the clamp is active.
pub fn cross_entropy_row_grad<T: Real>(p: &[T], class: usize, scale: T, out: &mut [T]) {
    let eps = T::from_f64(LOG_CLAMP);
    let one = T::one();
    let inv_c = one / T::from_f64(p.len() as f64);
    for (i, (&pi, o)) in p.iter().zip(out.iter_mut()).enumerate() {
        if pi < eps || pi > one - eps {
            continue;
        }
        let d = if i == class {
            -one / pi
        } else {
            one / (one - pi)
        };
        *o = *o + scale * inv_c * d;
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax_rows(1, 3, &[0.0f64, 0.0, 0.0]);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax_rows(1, 2, &[1000.0f64, 999.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] + p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[1.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn stride_must_divide() {
        let r = ConvGeometry::new(Shape::new(1, 5, 5, 1), Shape::new(3, 3, 1, 1), 1, 2);
        assert!(r.is_err());
        let g = ConvGeometry::new(Shape::new(1, 6, 6, 1), Shape::new(3, 3, 1, 2), 1, 2).unwrap();
        assert_eq!(g.output(), Shape::new(1, 3, 3, 2));
    }

    #[test]
    fn gap_mean_of_four() {
        let v = global_avg_pool(Shape::new(1, 2, 2, 1), &[1.0f64, 2.0, 3.0, 4.0]);
        assert_eq!(v, vec![2.5]);
    }
}
