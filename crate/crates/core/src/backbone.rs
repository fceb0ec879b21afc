//! Small convolutional feature extractor producing the feature map fed to the
//! multi-grain module.
//!
//! Layout: `log2(downsample)` stride-2 3×3 "stem" convolutions followed by
//! `num_blocks` stride-1 3×3 convolutions, each followed by a rectifier.
//! Dropout is applied to the final map in training mode.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::tensor::{Real, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneConfig {
    /// Image channels, 1 or 3.
    pub in_channels: usize,
    pub stem_channels: usize,
    pub num_blocks: usize,
    /// Power of two.
    pub downsample: usize,
    pub out_channels: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            in_channels: 1,
            stem_channels: 16,
            num_blocks: 1,
            downsample: 4,
            out_channels: 32,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.downsample.is_power_of_two() {
            return Err(Error::Config(format!(
                "backbone.downsample = {} is not a power of two",
                self.downsample
            )));
        }
        if self.stem_channels == 0 || self.out_channels == 0 || self.num_blocks == 0 {
            return Err(Error::Config("backbone sizes must be positive".into()));
        }
        if !matches!(self.in_channels, 1 | 3) {
            return Err(Error::Config(format!(
                "images must have 1 or 3 channels, got {}",
                self.in_channels
            )));
        }
        Ok(())
    }

    fn stem_convs(&self) -> usize {
        self.downsample.trailing_zeros() as usize
    }

    /// `(name, in, out, stride)` for every convolution, in application order.
    pub fn layers(&self) -> Vec<(String, usize, usize, usize)> {
        let stems = self.stem_convs();
        let mut layers = Vec::new();
        let mut cin = self.in_channels;
        for i in 0..stems {
            let cout = if i + 1 == stems {
                self.out_channels
            } else {
                self.stem_channels
            };
            layers.push((format!("backbone.stem{i}"), cin, cout, 2));
            cin = cout;
        }
        for j in 0..self.num_blocks {
            layers.push((format!("backbone.block{j}"), cin, self.out_channels, 1));
            cin = self.out_channels;
        }
        layers
    }

    /// Output shape for an input image shape.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if !input.h.is_multiple_of(self.downsample) || !input.w.is_multiple_of(self.downsample) {
            return Err(Error::InvalidShape {
                op: "backbone",
                msg: format!(
                    "image {}x{} not divisible by downsample factor {}",
                    input.h, input.w, self.downsample
                ),
            });
        }
        Ok(Shape::new(
            input.n,
            input.h / self.downsample,
            input.w / self.downsample,
            self.out_channels,
        ))
    }
}

/// He-style initialisation, `N(0, 2/fan_in)`, zero biases.
pub fn init_backbone<T: Real, R: Rng + ?Sized>(
    params: &mut ModelParams<T>,
    config: &BackboneConfig,
    rng: &mut R,
) -> Result<()> {
    config.validate()?;
    for (name, cin, cout, _) in config.layers() {
        let std = (2.0 / (9 * cin) as f64).sqrt();
        params.init_conv(&name, Shape::new(3, 3, cin, cout), std, rng)?;
    }
    Ok(())
}

/// Computes the backbone feature map for a batch of images.
pub fn backbone_forward<T: Real, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    image: Var,
    params: &ModelParams<T>,
    config: &BackboneConfig,
    training: bool,
    dropout: f64,
    rng: &mut R,
) -> Result<Var> {
    config.output_shape(tape.shape(image))?;
    let mut x = image;
    for (name, _, _, stride) in config.layers() {
        let conv = params.register_conv(tape, &name, 1)?;
        let y = conv.apply(tape, x, stride)?;
        x = tape.relu(y);
    }
    tape.dropout(x, dropout, training, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(config: &BackboneConfig, input: Tensor<f32>, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::new();
        init_backbone(&mut params, config, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(input);
        let y = backbone_forward(&mut tape, x, &params, config, true, 0.2, &mut rng).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn shape_arithmetic() {
        let cfg = BackboneConfig {
            in_channels: 3,
            out_channels: 32,
            downsample: 4,
            ..Default::default()
        };
        let y = run(&cfg, Tensor::full(Shape::new(1, 64, 64, 3), 0.5), 1);
        assert_eq!(y.shape(), Shape::new(1, 16, 16, 32));
    }

    #[test]
    fn zero_input_zero_output() {
        let cfg = BackboneConfig::default();
        let y = run(&cfg, Tensor::zeros(Shape::new(2, 16, 16, 1)), 3);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic() {
        let cfg = BackboneConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img: Vec<f32> = (0..32 * 32).map(|_| rng.random()).collect();
        let img = Tensor::new(Shape::new(1, 32, 32, 1), img).unwrap();
        let a = run(&cfg, img.clone(), 11);
        let b = run(&cfg, img, 11);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn indivisible_input() {
        let cfg = BackboneConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = ModelParams::<f64>::new();
        init_backbone(&mut params, &cfg, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(Shape::new(1, 10, 12, 1)));
        let r = backbone_forward(&mut tape, x, &params, &cfg, false, 0.0, &mut rng);
        assert!(r.is_err());
    }

    #[test]
    fn no_downsampling_is_blocks_only() {
        let cfg = BackboneConfig {
            downsample: 1,
            num_blocks: 2,
            ..Default::default()
        };
        let names: Vec<_> = cfg.layers().into_iter().map(|l| l.0).collect();
        assert_eq!(names, vec!["backbone.block0", "backbone.block1"]);
    }
}
