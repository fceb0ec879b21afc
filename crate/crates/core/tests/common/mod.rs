#![allow(dead_code)]

use agos::data::SyntheticSceneSpec;
use agos::train::TrainConfig;
use agos::{Shape, Tensor};

/// Nested-loop "same" convolution, stride 1, written independently of the
/// library kernels.
pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], d: usize) -> Vec<f64> {
    let s = x.shape();
    let k = w.shape(); // kh, kw, cin, cout
    let (kh, kw, cin, cout) = (k.n, k.h, k.w, k.c);
    let (py, px) = ((d * (kh - 1) / 2) as isize, (d * (kw - 1) / 2) as isize);
    let mut out = vec![0.0; s.n * s.h * s.w * cout];
    for n in 0..s.n {
        for y in 0..s.h {
            for xx in 0..s.w {
                for co in 0..cout {
                    let mut acc = b[co];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = y as isize + (ky * d) as isize - py;
                            let ix = xx as isize + (kx * d) as isize - px;
                            if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                acc += x.get(n, iy as usize, ix as usize, ci) * w.get(ky, kx, ci, co);
                            }
                        }
                    }
                    out[((n * s.h + y) * s.w + xx) * cout + co] = acc;
                }
            }
        }
    }
    out
}

pub fn random_tensor(rng: &mut impl rand::Rng, shape: Shape) -> Tensor<f64> {
    let data = (0..shape.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape, data).unwrap()
}

/// A very small synthetic configuration that trains in well under a second.
pub fn tiny_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.synth = SyntheticSceneSpec {
        height: 32,
        width: 32,
        object_size: (8, 16),
        samples_per_class: 10,
        ..SyntheticSceneSpec::default()
    };
    c.model.backbone.stem_channels = 8;
    c.model.backbone.out_channels = 8;
    c.model.mgp.channels = 8;
    c.model.mgp.grains = 2;
    c.epochs = 2;
    c.batch_size = 8;
    c.lr0 = 1e-3;
    c.runs = 2;
    c
}
