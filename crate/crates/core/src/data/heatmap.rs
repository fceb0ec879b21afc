//! Instance heatmaps as 8-bit PGM at the native feature-grid resolution.

use std::path::Path;

use super::image::{encode_pnm_samples, PnmHeader};
use crate::error::{Error, Result};
use crate::mbmir::InstanceRepr;
use crate::tensor::Real;

/// Selects one class channel (or the mean over channels for `class_index = -1`)
/// of batch item `item` and min-max scales it to `0..=255`. A constant map
/// gives all zeros.
pub fn heatmap_pixels<T: Real>(inst: &InstanceRepr<T>, item: usize, class_index: i64) -> Result<Vec<u8>> {
    let s = inst.map.shape();
    if item >= s.n {
        return Err(Error::invalid(format!("batch item {item} out of range for {}", s.n)));
    }
    if class_index != -1 && !(0..s.c as i64).contains(&class_index) {
        return Err(Error::ClassOutOfRange {
            index: class_index.max(0) as usize,
            classes: s.c,
        });
    }
    let values: Vec<f64> = inst
        .map
        .batch_item(item)
        .chunks_exact(s.c)
        .map(|cell| match class_index {
            -1 => cell.iter().map(|v| v.as_f64()).sum::<f64>() / s.c as f64,
            k => cell[k as usize].as_f64(),
        })
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    Ok(values
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - lo) / range * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect())
}

/// Writes [`heatmap_pixels`] as a binary P5 file of `H'×W'` pixels.
pub fn export_heatmap<T: Real>(
    inst: &InstanceRepr<T>,
    item: usize,
    class_index: i64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let s = inst.map.shape();
    let pixels = heatmap_pixels(inst, item, class_index)?;
    let samples: Vec<u16> = pixels.into_iter().map(u16::from).collect();
    let bytes = encode_pnm_samples(
        PnmHeader {
            channels: 1,
            width: s.w,
            height: s.h,
            maxval: 255,
        },
        &samples,
    )?;
    std::fs::write(path, bytes)?;
    Ok(())
}
