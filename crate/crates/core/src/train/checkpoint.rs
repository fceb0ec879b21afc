//! Checkpoints: a directory holding `params.bin` (concatenated AGT1
//! records), `params.index` (one `name offset shape` line per record),
//! `config.txt` (the config snapshot) and `history.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::TrainConfig;
use super::optim::AdamState;
use super::report::Report;
use super::trainer::{EpochRecord, TrainState};
use crate::data::image::{decode_agt, encode_agt};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::ssf::LossBreakdown;
use crate::tensor::Real;

const BIN: &str = "params.bin";
const INDEX: &str = "params.index";
const CONFIG: &str = "config.txt";
const HISTORY: &str = "history.csv";

pub fn save_checkpoint<T: Real>(dir: impl AsRef<Path>, state: &TrainState<T>, config: &TrainConfig) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut bin = Vec::new();
    let mut index = String::new();
    let _ = writeln!(
        index,
        "# epoch={} step={} in_channels={} classes={}",
        state.epoch, state.adam.step, state.model.backbone.in_channels, state.model.classes
    );
    let groups = [
        ("", &state.params),
        ("adam.m.", &state.adam.m),
        ("adam.v.", &state.adam.v),
    ];
    for (prefix, params) in groups {
        for (name, t) in params.iter() {
            let _ = writeln!(index, "{prefix}{name} {} {}", bin.len(), t.shape());
            bin.extend_from_slice(&encode_agt(t));
        }
    }
    fs::write(dir.join(BIN), bin)?;
    fs::write(dir.join(INDEX), index)?;
    let mut snapshot = config.clone();
    snapshot.model.classes = state.model.classes;
    fs::write(dir.join(CONFIG), snapshot.snapshot())?;
    let mut h = Report::new(["epoch", "lr", "total", "cls", "sealig", "l2", "alpha"]);
    for r in &state.history {
        h.push(vec![
            r.epoch.to_string(),
            r.lr.to_string(),
            r.loss.total.to_string(),
            r.loss.cls.to_string(),
            r.loss.sealig.to_string(),
            r.loss.l2.to_string(),
            r.loss.alpha.to_string(),
        ])?;
    }
    h.write(dir.join(HISTORY))?;
    Ok(())
}

fn header_field(line: &str, key: &str, path: &Path) -> Result<u64> {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::format(path, format!("missing {key} in index header")))
}

/// Loads a checkpoint written by [`save_checkpoint`]. Tensors stored at the
/// other precision are converted.
pub fn load_checkpoint<T: Real>(dir: impl AsRef<Path>) -> Result<(TrainState<T>, TrainConfig)> {
    let dir = dir.as_ref();
    let config = TrainConfig::from_file(dir.join(CONFIG))?;
    let index_path = dir.join(INDEX);
    let index = fs::read_to_string(&index_path)?;
    let bin_path = dir.join(BIN);
    let bin = fs::read(&bin_path)?;
    let mut lines = index.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(&index_path, "empty index"))?;
    let epoch = header_field(header, "epoch", &index_path)? as usize;
    let step = header_field(header, "step", &index_path)?;
    let in_channels = header_field(header, "in_channels", &index_path)? as usize;
    let classes = header_field(header, "classes", &index_path)? as usize;
    let mut params = ModelParams::new();
    let mut m = ModelParams::new();
    let mut v = ModelParams::new();
    for line in lines.filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
        let mut parts = line.split_whitespace();
        let (Some(name), Some(offset), Some(shape)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::format(&index_path, format!("bad index line '{line}'")));
        };
        let offset: usize = offset
            .parse()
            .map_err(|_| Error::format(&index_path, format!("bad offset in '{line}'")))?;
        let (t, _) = decode_agt(
            bin.get(offset..)
                .ok_or_else(|| Error::format(&bin_path, "offset past end of file"))?,
            &bin_path,
        )?;
        if t.shape().to_string() != shape {
            return Err(Error::format(&bin_path, format!("{name}: shape {} != index {shape}", t.shape())));
        }
        let t = t.cast::<T>();
        if let Some(n) = name.strip_prefix("adam.m.") {
            m.insert(n, t);
        } else if let Some(n) = name.strip_prefix("adam.v.") {
            v.insert(n, t);
        } else {
            params.insert(name, t);
        }
    }
    let history = read_history(&dir.join(HISTORY))?;
    let model = config.model_for(in_channels, classes);
    Ok((
        TrainState {
            model,
            params,
            adam: AdamState { m, v, step },
            epoch,
            history,
        },
        config,
    ))
}

fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let r = Report::read(path)?;
    let col = |n: &str| r.numeric_column(n);
    let (epoch, lr, total, cls, sealig, l2, alpha) = (
        col("epoch")?,
        col("lr")?,
        col("total")?,
        col("cls")?,
        col("sealig")?,
        col("l2")?,
        col("alpha")?,
    );
    Ok((0..r.rows.len())
        .map(|i| EpochRecord {
            epoch: epoch[i] as usize,
            lr: lr[i],
            loss: LossBreakdown {
                cls: cls[i],
                sealig: sealig[i],
                l2: l2[i],
                total: total[i],
                alpha: alpha[i],
            },
        })
        .collect())
}
