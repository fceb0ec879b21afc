//! Multi-grain perception.
//!
//! The backbone map `X1` is refined by a 1×1 convolution into the base
//! representation `X_{d,0}` and passed through 3×3 convolutions `D_0..D_T`,
//! where `D_t` has dilation `2t-1` (`D_0` is an ordinary convolution). Grain
//! `t >= 1` is the elementwise absolute difference of adjacent responses,
//! `X_{d,t} = |D_t(X1) - D_{t-1}(X1)|`.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::functional::ConvKernel;
use crate::params::{ConvHandle, ModelParams};
use crate::tensor::{Real, Shape, Tensor};

/// Which parts of the differential dilated convolution are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DdcMode {
    /// Dilated convolutions, adjacent grains differenced.
    #[default]
    Ddc,
    /// Dilated convolutions used directly, no differencing.
    NoDifference,
    /// Differencing of ordinary (dilation 1) convolutions.
    NoDilation,
    /// Ordinary convolutions, no differencing.
    Plain,
}

impl DdcMode {
    pub fn differencing(self) -> bool {
        matches!(self, DdcMode::Ddc | DdcMode::NoDilation)
    }

    pub fn dilated(self) -> bool {
        matches!(self, DdcMode::Ddc | DdcMode::NoDifference)
    }

    /// Short label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            DdcMode::Ddc => "DDC",
            DdcMode::NoDifference => "D#DC",
            DdcMode::NoDilation => "DD#C",
            DdcMode::Plain => "C",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MgpConfig {
    /// Number of dilated grains `T`; the module emits `T+1` maps.
    pub grains: usize,
    /// Output channels `C1` of every grain map.
    pub channels: usize,
    pub tie_weights: bool,
    pub mode: DdcMode,
}

impl Default for MgpConfig {
    fn default() -> Self {
        MgpConfig {
            grains: 3,
            channels: 32,
            tie_weights: false,
            mode: DdcMode::Ddc,
        }
    }
}

impl MgpConfig {
    /// Dilation used by `D_t` under this configuration.
    pub fn kernel_dilation(&self, t: usize) -> usize {
        if t == 0 || !self.mode.dilated() {
            1
        } else {
            2 * t - 1
        }
    }

    /// Parameter prefix of `D_t`.
    pub fn kernel_name(&self, t: usize) -> String {
        if self.tie_weights {
            "mgp.dilated".to_string()
        } else {
            format!("mgp.dilated{t}")
        }
    }

    /// Grain indices whose kernel is actually used.
    fn used_kernels(&self) -> std::ops::RangeInclusive<usize> {
        let first = if self.mode.differencing() { 0 } else { 1 };
        first..=self.grains
    }
}

/// Dilation rate of grain `t >= 1`: `2t - 1`.
pub fn dilation_rate(t: usize) -> Result<usize> {
    if t < 1 {
        return Err(Error::invalid("grain index must be >= 1"));
    }
    Ok(2 * t - 1)
}

/// Maps `X_{d,0}..X_{d,T}`, all of one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GrainFeatureSet<V> {
    pub features: Vec<V>,
}

impl<V> GrainFeatureSet<V> {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

pub fn init_mgp<T: Real, R: Rng + ?Sized>(
    params: &mut ModelParams<T>,
    config: &MgpConfig,
    in_channels: usize,
    std: f64,
    rng: &mut R,
) -> Result<()> {
    params.init_conv(
        "mgp.base",
        Shape::new(1, 1, in_channels, config.channels),
        std,
        rng,
    )?;
    for t in config.used_kernels() {
        let name = config.kernel_name(t);
        if !params.contains(&format!("{name}.weight")) {
            params.init_conv(&name, Shape::new(3, 3, in_channels, config.channels), std, rng)?;
        }
    }
    Ok(())
}

fn grains_core<T: Real>(
    tape: &mut Tape<T>,
    x1: Var,
    base: ConvHandle,
    kernels: &[Option<ConvHandle>],
    differencing: bool,
) -> Result<GrainFeatureSet<Var>> {
    let mut features = vec![base.apply(tape, x1, 1)?];
    let grains = kernels.len().saturating_sub(1);
    let mut prev = match (differencing, kernels.first().copied().flatten()) {
        (true, Some(k0)) => Some(k0.apply(tape, x1, 1)?),
        (true, None) if grains > 0 => {
            return Err(Error::invalid("differencing requires the grain-0 kernel"))
        }
        _ => None,
    };
    for t in 1..=grains {
        let k = kernels[t].ok_or_else(|| Error::invalid(format!("missing kernel for grain {t}")))?;
        let response = k.apply(tape, x1, 1)?;
        let feature = match prev {
            Some(p) if differencing => tape.abs_diff(response, p)?,
            _ => response,
        };
        features.push(feature);
        prev = Some(response);
    }
    Ok(GrainFeatureSet { features })
}

/// Multi-grain maps of `x1` on the tape, using the model's named parameters.
pub fn mgp_forward<T: Real>(
    tape: &mut Tape<T>,
    x1: Var,
    params: &ModelParams<T>,
    config: &MgpConfig,
) -> Result<GrainFeatureSet<Var>> {
    let base = params.register_conv(tape, "mgp.base", 1)?;
    let used = config.used_kernels();
    let mut kernels = Vec::with_capacity(config.grains + 1);
    for t in 0..=config.grains {
        kernels.push(if used.contains(&t) {
            Some(params.register_conv(tape, &config.kernel_name(t), config.kernel_dilation(t))?)
        } else {
            None
        });
    }
    grains_core(tape, x1, base, &kernels, config.mode.differencing())
}

/// Explicit multi-grain kernels for value-level evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MgpParams<T> {
    /// 1×1 kernel `C1_in -> C1` producing the base representation.
    pub base: ConvKernel<T>,
    /// `D_0..D_T`; `D_0` has dilation 1 and `D_t` dilation `2t-1`.
    pub dilated: Vec<ConvKernel<T>>,
    pub tie_weights: bool,
}

impl<T: Real> MgpParams<T> {
    /// Reads the kernels of a DDC-mode model.
    pub fn from_model(params: &ModelParams<T>, config: &MgpConfig) -> Result<Self> {
        let dilated = (0..=config.grains)
            .map(|t| params.kernel(&config.kernel_name(t), config.kernel_dilation(t)))
            .collect::<Result<_>>()?;
        Ok(MgpParams {
            base: params.kernel("mgp.base", 1)?,
            dilated,
            tie_weights: config.tie_weights,
        })
    }

    pub fn grains(&self) -> usize {
        self.dilated.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bs = self.base.weight.shape();
        if (bs.n, bs.h) != (1, 1) {
            return Err(Error::invalid("base kernel must be 1x1"));
        }
        for (t, k) in self.dilated.iter().enumerate() {
            let expected = if t == 0 { 1 } else { dilation_rate(t)? };
            if k.dilation != expected {
                return Err(Error::invalid(format!(
                    "D_{t} has dilation {}, expected {expected}",
                    k.dilation
                )));
            }
            if k.out_channels() != self.base.out_channels() || k.in_channels() != self.base.in_channels() {
                return Err(Error::invalid(format!("D_{t} channels differ from the base kernel")));
            }
            if self.tie_weights && k.weight != self.dilated[0].weight {
                return Err(Error::invalid("tie_weights set but dilated weights differ"));
            }
        }
        Ok(())
    }
}

/// Value-level multi-grain maps of `x1`.
pub fn mgp_forward_values<T: Real>(
    x1: &Tensor<T>,
    params: &MgpParams<T>,
) -> Result<GrainFeatureSet<Tensor<T>>> {
    params.validate()?;
    if x1.shape().c != params.base.in_channels() {
        return Err(Error::InvalidShape {
            op: "mgp_forward",
            msg: format!(
                "input has {} channels, kernels expect {}",
                x1.shape().c,
                params.base.in_channels()
            ),
        });
    }
    let mut tape = Tape::new();
    let x = tape.leaf(x1.clone());
    let base = ConvHandle::constant(&mut tape, &params.base);
    let kernels: Vec<_> = params
        .dilated
        .iter()
        .map(|k| Some(ConvHandle::constant(&mut tape, k)))
        .collect();
    let set = grains_core(&mut tape, x, base, &kernels, true)?;
    Ok(GrainFeatureSet {
        features: set.features.iter().map(|&v| tape.value(v).clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dilation_schedule() {
        assert_eq!(dilation_rate(1).unwrap(), 1);
        assert_eq!(dilation_rate(2).unwrap(), 3);
        assert_eq!(dilation_rate(3).unwrap(), 5);
        assert!(dilation_rate(0).is_err());
    }

    #[test]
    fn modes_pick_dilations() {
        let mut cfg = MgpConfig::default();
        assert_eq!(
            (0..=3).map(|t| cfg.kernel_dilation(t)).collect::<Vec<_>>(),
            vec![1, 1, 3, 5]
        );
        cfg.mode = DdcMode::NoDilation;
        assert!((0..=3).all(|t| cfg.kernel_dilation(t) == 1));
    }

    #[test]
    fn zero_grains_is_base_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = MgpConfig {
            grains: 0,
            channels: 3,
            ..Default::default()
        };
        let mut params = ModelParams::<f64>::new();
        init_mgp(&mut params, &cfg, 2, 0.1, &mut rng).unwrap();
        let mgp = MgpParams::from_model(&params, &cfg).unwrap();
        let x = Tensor::full(Shape::new(1, 4, 4, 2), 1.0);
        let set = mgp_forward_values(&x, &mgp).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.features[0].shape(), Shape::new(1, 4, 4, 3));
    }

    #[test]
    fn unused_kernels_are_not_created() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = MgpConfig {
            grains: 2,
            channels: 3,
            mode: DdcMode::NoDifference,
            ..Default::default()
        };
        let mut params = ModelParams::<f64>::new();
        init_mgp(&mut params, &cfg, 2, 0.1, &mut rng).unwrap();
        assert!(!params.contains("mgp.dilated0.weight"));
        assert!(params.contains("mgp.dilated2.weight"));
    }

    #[test]
    fn rejects_wrong_dilation() {
        let mut p = MgpParams::<f64> {
            base: ConvKernel::zeros(1, 1, 2, 2, 1),
            dilated: vec![ConvKernel::zeros(3, 3, 2, 2, 1), ConvKernel::zeros(3, 3, 2, 2, 2)],
            tie_weights: false,
        };
        assert!(p.validate().is_err());
        p.dilated[1].dilation = 1;
        assert!(p.validate().is_ok());
    }
}
