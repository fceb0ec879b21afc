//! Training configuration and its `key = value` text form.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::backbone::BackboneConfig;
use crate::data::SyntheticSceneSpec;
use crate::error::{Error, Result};
use crate::mgp::DdcMode;
use crate::model::{ModelConfig, Variant};
use crate::ssf::LossConfig;
use crate::tensor::DType;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Epoch interval between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub loss: LossConfig,
    pub model: ModelConfig,
    pub seed: u64,
    pub runs: usize,
    pub precision: DType,
    /// Directory-of-classes dataset; when absent a synthetic set is generated.
    pub data_root: Option<PathBuf>,
    pub train_ratios: Vec<f64>,
    pub synth: SyntheticSceneSpec,
    pub synth_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-4,
            lr_decay_factor: 0.5,
            lr_decay_every: 30,
            epochs: 120,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            checkpoint_every: 0,
            loss: LossConfig::default(),
            model: ModelConfig::default(),
            seed: 0,
            runs: 10,
            precision: DType::F32,
            data_root: None,
            train_ratios: vec![0.5],
            synth: SyntheticSceneSpec::default(),
            synth_seed: 1,
        }
    }
}

fn parse_variant(s: &str) -> Option<Variant> {
    Some(match s {
        "backbone" => Variant::BackboneOnly,
        "mgp" | "backbone+mgp" => Variant::MgpFused,
        "mgp+mbmir" | "backbone+mgp+mbmir" => Variant::MgpMbmir,
        "mgp+ssf" | "backbone+mgp+ssf" => Variant::MgpSsf,
        "full" | "agos" => Variant::Full,
        _ => return None,
    })
}

fn variant_key(v: Variant) -> &'static str {
    match v {
        Variant::BackboneOnly => "backbone",
        Variant::MgpFused => "mgp",
        Variant::MgpMbmir => "mgp+mbmir",
        Variant::MgpSsf => "mgp+ssf",
        Variant::Full => "full",
    }
}

fn parse_mode(s: &str) -> Option<DdcMode> {
    Some(match s.to_ascii_uppercase().as_str() {
        "DDC" => DdcMode::Ddc,
        "D#DC" => DdcMode::NoDifference,
        "DD#C" => DdcMode::NoDilation,
        "C" => DdcMode::Plain,
        _ => return None,
    })
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

/// Drops a `#` comment. A `#` inside a value (as in `D#DC`) is kept; a
/// comment starts at the line start or after whitespace.
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return &line[..i];
        }
    }
    line
}

impl TrainConfig {
    /// Channel and grain counts used in the original experiments.
    pub fn full_scale() -> Self {
        let mut c = TrainConfig::default();
        c.model.backbone.out_channels = 256;
        c.model.mgp.channels = 256;
        c.synth.height = 256;
        c.synth.width = 256;
        c.synth.object_size = (24, 96);
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr0 > 0.0) || !(self.lr_decay_factor > 0.0) || !(self.eps > 0.0) {
            return bad("learning rate, decay factor and eps must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("Adam betas must lie in (0, 1)");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.lr_decay_every == 0 {
            return bad("epochs, batch size and decay interval must be positive");
        }
        if self.runs == 0 {
            return bad("run.runs must be positive");
        }
        if !(self.loss.alpha >= 0.0) || !(self.loss.weight_decay >= 0.0) {
            return bad("loss.alpha and loss.weight_decay must be non-negative");
        }
        if self.train_ratios.is_empty() || self.train_ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return bad("data.train_ratios must be fractions in (0, 1)");
        }
        self.model.backbone.validate()?;
        if self.model.mgp.channels == 0 {
            return bad("mgp.channels must be positive");
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return bad("train.dropout must be in [0, 1)");
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "optim.lr0" => self.lr0 = num(key, v)?,
            "optim.lr_decay_factor" => self.lr_decay_factor = num(key, v)?,
            "optim.lr_decay_every" => self.lr_decay_every = num(key, v)?,
            "optim.beta1" => self.beta1 = num(key, v)?,
            "optim.beta2" => self.beta2 = num(key, v)?,
            "optim.eps" => self.eps = num(key, v)?,
            "train.epochs" => self.epochs = num(key, v)?,
            "train.batch_size" => self.batch_size = num(key, v)?,
            "train.dropout" => self.model.dropout = num(key, v)?,
            "train.checkpoint_every" => self.checkpoint_every = num(key, v)?,
            "loss.alpha" => self.loss.alpha = num(key, v)?,
            "loss.weight_decay" => self.loss.weight_decay = num(key, v)?,
            "loss.enable_sealig" => self.loss.enable_sealig = boolean(key, v)?,
            "loss.l2_in_loss" => self.loss.l2_in_loss = boolean(key, v)?,
            "mgp.grains" => self.model.mgp.grains = num(key, v)?,
            "mgp.channels" => self.model.mgp.channels = num(key, v)?,
            "mgp.tie_weights" => self.model.mgp.tie_weights = boolean(key, v)?,
            "mgp.mode" => {
                self.model.mgp.mode =
                    parse_mode(v).ok_or_else(|| Error::Config(format!("mgp.mode: unknown mode '{v}'")))?
            }
            "backbone.stem_channels" => self.model.backbone.stem_channels = num(key, v)?,
            "backbone.num_blocks" => self.model.backbone.num_blocks = num(key, v)?,
            "backbone.downsample" => self.model.backbone.downsample = num(key, v)?,
            "backbone.out_channels" => self.model.backbone.out_channels = num(key, v)?,
            "model.classes" => self.model.classes = num(key, v)?,
            "model.variant" => {
                self.model.variant = parse_variant(&v.to_ascii_lowercase())
                    .ok_or_else(|| Error::Config(format!("model.variant: unknown variant '{v}'")))?
            }
            "model.head_init_std" => self.model.head_init_std = num(key, v)?,
            "run.seed" => self.seed = num(key, v)?,
            "run.runs" => self.runs = num(key, v)?,
            "run.precision" => {
                self.precision = match v {
                    "single" | "f32" => DType::F32,
                    "double" | "f64" => DType::F64,
                    _ => return Err(Error::Config(format!("run.precision: expected single or double, got '{v}'"))),
                }
            }
            "data.root" => self.data_root = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.train_ratios" => {
                self.train_ratios = v
                    .split(',')
                    .map(|r| num::<f64>(key, r.trim()))
                    .collect::<Result<_>>()?
            }
            "synth.classes" => self.synth.num_classes = num(key, v)?,
            "synth.height" => self.synth.height = num(key, v)?,
            "synth.width" => self.synth.width = num(key, v)?,
            "synth.channels" => self.synth.channels = num(key, v)?,
            "synth.object_min" => self.synth.object_size.0 = num(key, v)?,
            "synth.object_max" => self.synth.object_size.1 = num(key, v)?,
            "synth.objects_min" => self.synth.objects_per_image.0 = num(key, v)?,
            "synth.objects_max" => self.synth.objects_per_image.1 = num(key, v)?,
            "synth.distractors_min" => self.synth.distractors.0 = num(key, v)?,
            "synth.distractors_max" => self.synth.distractors.1 = num(key, v)?,
            "synth.noise_std" => self.synth.noise_std = num(key, v)?,
            "synth.samples_per_class" => self.synth.samples_per_class = num(key, v)?,
            "synth.cell_size" => self.synth.cell_size = num(key, v)?,
            "synth.seed" => self.synth_seed = num(key, v)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies every setting of a config text. Blank lines and `#` comments
    /// are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = strip_comment(line).trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Every key with its current value, in the order [`TrainConfig::set`] accepts.
    pub fn snapshot(&self) -> String {
        let b = &self.model.backbone;
        let m = &self.model.mgp;
        let s = &self.synth;
        let ratios: Vec<String> = self.train_ratios.iter().map(|r| r.to_string()).collect();
        let entries: Vec<(&str, String)> = vec![
            ("optim.lr0", self.lr0.to_string()),
            ("optim.lr_decay_factor", self.lr_decay_factor.to_string()),
            ("optim.lr_decay_every", self.lr_decay_every.to_string()),
            ("optim.beta1", self.beta1.to_string()),
            ("optim.beta2", self.beta2.to_string()),
            ("optim.eps", self.eps.to_string()),
            ("train.epochs", self.epochs.to_string()),
            ("train.batch_size", self.batch_size.to_string()),
            ("train.dropout", self.model.dropout.to_string()),
            ("train.checkpoint_every", self.checkpoint_every.to_string()),
            ("loss.alpha", self.loss.alpha.to_string()),
            ("loss.weight_decay", self.loss.weight_decay.to_string()),
            ("loss.enable_sealig", self.loss.enable_sealig.to_string()),
            ("loss.l2_in_loss", self.loss.l2_in_loss.to_string()),
            ("mgp.grains", m.grains.to_string()),
            ("mgp.channels", m.channels.to_string()),
            ("mgp.tie_weights", m.tie_weights.to_string()),
            ("mgp.mode", m.mode.label().to_string()),
            ("backbone.stem_channels", b.stem_channels.to_string()),
            ("backbone.num_blocks", b.num_blocks.to_string()),
            ("backbone.downsample", b.downsample.to_string()),
            ("backbone.out_channels", b.out_channels.to_string()),
            ("model.classes", self.model.classes.to_string()),
            ("model.variant", variant_key(self.model.variant).to_string()),
            ("model.head_init_std", self.model.head_init_std.to_string()),
            ("run.seed", self.seed.to_string()),
            ("run.runs", self.runs.to_string()),
            ("run.precision", self.precision.to_string()),
            (
                "data.root",
                self.data_root
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("data.train_ratios", ratios.join(",")),
            ("synth.classes", s.num_classes.to_string()),
            ("synth.height", s.height.to_string()),
            ("synth.width", s.width.to_string()),
            ("synth.channels", s.channels.to_string()),
            ("synth.object_min", s.object_size.0.to_string()),
            ("synth.object_max", s.object_size.1.to_string()),
            ("synth.objects_min", s.objects_per_image.0.to_string()),
            ("synth.objects_max", s.objects_per_image.1.to_string()),
            ("synth.distractors_min", s.distractors.0.to_string()),
            ("synth.distractors_max", s.distractors.1.to_string()),
            ("synth.noise_std", s.noise_std.to_string()),
            ("synth.samples_per_class", s.samples_per_class.to_string()),
            ("synth.cell_size", s.cell_size.to_string()),
            ("synth.seed", self.synth_seed.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// The model configuration adapted to a dataset's channels and classes.
    pub fn model_for(&self, channels: usize, classes: usize) -> ModelConfig {
        ModelConfig {
            backbone: BackboneConfig {
                in_channels: channels,
                ..self.model.backbone
            },
            classes,
            ..self.model
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_settings() {
        let c = TrainConfig::default();
        assert_eq!(c.lr0, 1e-4);
        assert_eq!(c.batch_size, 32);
        assert_eq!((c.beta1, c.beta2), (0.9, 0.999));
        assert_eq!(c.model.dropout, 0.2);
        assert_eq!(c.model.mgp.grains, 3);
        assert_eq!(c.loss.alpha, 5e-4);
        assert_eq!(c.loss.weight_decay, 5e-4);
        assert_eq!(c.runs, 10);
        assert_eq!(TrainConfig::full_scale().model.mgp.channels, 256);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut c = TrainConfig::default();
        c.apply_text(
            "# comment\nloss.alpha = 0.05\nmgp.mode = D#DC  # trailing\n\nmodel.variant = mgp+ssf\n\
             data.train_ratios = 0.2, 0.5\nrun.precision = double\n",
        )
        .unwrap();
        assert_eq!(c.model.mgp.mode, DdcMode::NoDifference);
        let back = TrainConfig::from_text(&c.snapshot()).unwrap();
        assert_eq!(back, c);
        let snap = TrainConfig::default().snapshot();
        assert!(snap.contains("loss.alpha = 0.0005\n"));
        assert!(snap.contains("loss.weight_decay = 0.0005\n"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TrainConfig::from_text("nope = 1").is_err());
        assert!(TrainConfig::from_text("optim.lr0").is_err());
        assert!(TrainConfig::from_text("train.epochs = x").is_err());
        let mut c = TrainConfig::default();
        c.beta1 = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.lr0 = 0.0;
        assert!(c.validate().is_err());
    }
}
