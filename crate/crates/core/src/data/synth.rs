//! Synthetic multi-grain scenes with weak instance labels.
//!
//! Every class is defined by one shape kind. An image of class `k` holds one
//! or more class-`k` objects at random sizes and positions, plus small
//! distractors (dots and thin line segments) drawn from a distribution shared
//! by all classes, plus Gaussian pixel noise. Pixel values are quantised to
//! multiples of 1/255, so writing the images as 8-bit PGM/PPM is lossless.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{Dataset, DatasetManifest};
use crate::error::{Error, Result};
use crate::mil::WeakInstanceLabels;
use crate::tensor::{Shape, Tensor};

/// Shape kinds in class order.
pub const SHAPE_NAMES: [&str; 8] = [
    "square", "ring", "cross", "triangle", "disk", "frame", "stripes", "saltire",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSpec {
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
    /// 1 (grey) or 3 (colour).
    pub channels: usize,
    /// Inclusive side-length range of class objects, in pixels.
    pub object_size: (usize, usize),
    pub objects_per_image: (usize, usize),
    pub distractors: (usize, usize),
    pub noise_std: f64,
    pub samples_per_class: usize,
    /// Side of one weak-label cell in pixels; the backbone's downsampling factor.
    pub cell_size: usize,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        SyntheticSceneSpec {
            num_classes: 3,
            height: 64,
            width: 64,
            channels: 1,
            object_size: (10, 26),
            objects_per_image: (1, 2),
            distractors: (2, 6),
            noise_std: 0.05,
            samples_per_class: 200,
            cell_size: 4,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=SHAPE_NAMES.len()).contains(&self.num_classes) {
            return bad(format!("synth.classes must be in 1..={}", SHAPE_NAMES.len()));
        }
        if self.channels != 1 && self.channels != 3 {
            return bad("synth.channels must be 1 or 3".into());
        }
        for (name, (lo, hi)) in [
            ("object_size", self.object_size),
            ("objects_per_image", self.objects_per_image),
            ("distractors", self.distractors),
        ] {
            if lo > hi {
                return bad(format!("synth.{name}: min {lo} > max {hi}"));
            }
        }
        if self.object_size.0 < 3 {
            return bad("synth.object_size minimum is 3 pixels".into());
        }
        if self.objects_per_image.0 == 0 {
            return bad("every image needs at least one object".into());
        }
        if self.object_size.1 > self.height.min(self.width) {
            return Err(Error::invalid(format!(
                "object size {} does not fit a {}x{} image",
                self.object_size.1, self.height, self.width
            )));
        }
        if self.cell_size == 0 || !self.height.is_multiple_of(self.cell_size) || !self.width.is_multiple_of(self.cell_size) {
            return bad("image size must be a multiple of synth.cell_size".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("synth.noise_std must be non-negative".into());
        }
        if self.samples_per_class == 0 {
            return bad("synth.samples_per_class must be positive".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.cell_size, self.width / self.cell_size)
    }
}

/// Whether local pixel `(v, u)` of an `s×s` box belongs to the shape.
fn shape_mask(kind: usize, s: usize, v: usize, u: usize) -> bool {
    let sf = s as f64;
    let c = (sf - 1.0) / 2.0;
    let (dy, dx) = (v as f64 - c, u as f64 - c);
    let th = (s / 4).max(2) as f64;
    match kind {
        0 => true,
        1 => {
            let r = (dy * dy + dx * dx).sqrt();
            let outer = sf / 2.0;
            r <= outer && r >= outer - (s / 5).max(2) as f64
        }
        2 => dy.abs() < th / 2.0 || dx.abs() < th / 2.0,
        3 => dx.abs() <= (v as f64 + 1.0) / 2.0,
        4 => (dy * dy + dx * dx).sqrt() <= sf / 2.0,
        5 => {
            let b = (s / 5).max(2);
            v < b || u < b || v >= s - b || u >= s - b
        }
        6 => (v / (s / 5).max(2)).is_multiple_of(2),
        7 => (dy - dx).abs() < th / 2.0 || (dy + dx).abs() < th / 2.0,
        _ => unreachable!("shape kind validated"),
    }
}

fn range<R: Rng>(rng: &mut R, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

fn colour<R: Rng>(rng: &mut R, channels: usize, lo: f64, hi: f64) -> Vec<f64> {
    let level = rng.random_range(lo..hi);
    if channels == 1 {
        vec![level]
    } else {
        (0..channels).map(|_| level * rng.random_range(0.5..1.0)).collect()
    }
}

/// Generated images with their weak instance labels on the cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    /// Labels for each image's own class.
    pub weak_labels: Vec<WeakInstanceLabels>,
    pub grid: (usize, usize),
}

impl SyntheticDataset {
    /// Instance labels of sample `i` with respect to `class`: the stored
    /// cells for the image's own class, all zeros otherwise.
    pub fn labels_for(&self, i: usize, class: usize) -> WeakInstanceLabels {
        let own = &self.weak_labels[i];
        if own.bag_category == class {
            own.clone()
        } else {
            WeakInstanceLabels {
                labels: vec![0; own.labels.len()],
                bag_category: class,
            }
        }
    }

    /// Writes the images and `weak_labels.csv` under `root`.
    pub fn write(&self, root: impl AsRef<Path>) -> Result<DatasetManifest> {
        let root = root.as_ref();
        let manifest = self.dataset.write_to_dir(root)?;
        let mut w = csv::Writer::from_path(root.join("weak_labels.csv"))?;
        w.write_record(["path", "class", "grid_h", "grid_w", "labels"])?;
        for ((path, k), wl) in manifest.samples.iter().zip(&self.weak_labels) {
            let rel = path.strip_prefix(root).unwrap_or(path);
            let bits: String = wl.labels.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect();
            w.write_record([
                rel.to_string_lossy().as_ref(),
                &k.to_string(),
                &self.grid.0.to_string(),
                &self.grid.1.to_string(),
                &bits,
            ])?;
        }
        w.flush()?;
        Ok(manifest)
    }
}

/// Generates `samples_per_class` images per class, classes in order, from one
/// seeded generator.
pub fn synth_generate(spec: &SyntheticSceneSpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).map_err(|e| Error::invalid(e.to_string()))?;
    let (h, w, ch) = (spec.height, spec.width, spec.channels);
    let (gh, gw) = spec.grid();
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut weak = Vec::new();
    for class in 0..spec.num_classes {
        for _ in 0..spec.samples_per_class {
            let mut px = vec![0.1; h * w * ch];
            let mut cells = vec![0u8; gh * gw];
            for _ in 0..range(&mut rng, spec.distractors) {
                let col = colour(&mut rng, ch, 0.4, 0.9);
                let (len, thick, vertical) = if rng.random_bool(0.5) {
                    (rng.random_range(2..=3), 0, false)
                } else {
                    (rng.random_range(4..=10), 1, rng.random_bool(0.5))
                };
                let (bh, bw) = match (thick, vertical) {
                    (0, _) => (len, len),
                    (_, true) => (len, 1),
                    (_, false) => (1, len),
                };
                let y0 = rng.random_range(0..=h - bh.min(h));
                let x0 = rng.random_range(0..=w - bw.min(w));
                for y in y0..(y0 + bh).min(h) {
                    for x in x0..(x0 + bw).min(w) {
                        px[(y * w + x) * ch..][..ch].copy_from_slice(&col);
                    }
                }
            }
            for _ in 0..range(&mut rng, spec.objects_per_image) {
                let s = range(&mut rng, spec.object_size);
                let col = colour(&mut rng, ch, 0.6, 1.0);
                let y0 = rng.random_range(0..=h - s);
                let x0 = rng.random_range(0..=w - s);
                for v in 0..s {
                    for u in 0..s {
                        if shape_mask(class, s, v, u) {
                            let (y, x) = (y0 + v, x0 + u);
                            px[(y * w + x) * ch..][..ch].copy_from_slice(&col);
                            cells[(y / spec.cell_size) * gw + x / spec.cell_size] = 1;
                        }
                    }
                }
            }
            for p in px.iter_mut() {
                let v = if spec.noise_std > 0.0 {
                    *p + noise.sample(&mut rng)
                } else {
                    *p
                };
                *p = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
            }
            images.push(Tensor::new(Shape::new(1, h, w, ch), px)?);
            labels.push(class);
            weak.push(WeakInstanceLabels::new(cells, class)?);
        }
    }
    let classes = (0..spec.num_classes).map(|k| SHAPE_NAMES[k].to_string()).collect();
    Ok(SyntheticDataset {
        dataset: Dataset::new(classes, images, labels)?,
        weak_labels: weak,
        grid: (gh, gw),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mil::classic_bag_label;

    fn small() -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            height: 32,
            width: 32,
            object_size: (6, 12),
            samples_per_class: 4,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = synth_generate(&small(), 3).unwrap();
        let b = synth_generate(&small(), 3).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&small(), 4).unwrap();
        assert_ne!(a.dataset.images, c.dataset.images);
    }

    #[test]
    fn single_object_cells() {
        let spec = SyntheticSceneSpec {
            distractors: (0, 0),
            objects_per_image: (1, 1),
            object_size: (8, 8),
            noise_std: 0.0,
            num_classes: 1,
            samples_per_class: 1,
            ..small()
        };
        let d = synth_generate(&spec, 11).unwrap();
        let img = &d.dataset.images[0];
        let (gh, gw) = d.grid;
        for gy in 0..gh {
            for gx in 0..gw {
                let mut lit = false;
                for y in gy * 4..gy * 4 + 4 {
                    for x in gx * 4..gx * 4 + 4 {
                        lit |= img.get(0, y, x, 0) > 0.2;
                    }
                }
                assert_eq!(d.weak_labels[0].labels[gy * gw + gx] == 1, lit);
            }
        }
    }

    #[test]
    fn bag_label_consistency() {
        let d = synth_generate(&small(), 5).unwrap();
        for i in 0..d.dataset.len() {
            for k in 0..3 {
                let bag = classic_bag_label(&d.labels_for(i, k)).unwrap();
                assert_eq!(bag == 1, d.dataset.labels[i] == k);
            }
        }
    }

    #[test]
    fn rejects_oversized_objects() {
        let spec = SyntheticSceneSpec {
            object_size: (10, 40),
            ..small()
        };
        assert!(matches!(synth_generate(&spec, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn colour_images() {
        let spec = SyntheticSceneSpec {
            channels: 3,
            ..small()
        };
        let d = synth_generate(&spec, 0).unwrap();
        assert_eq!(d.dataset.image_shape().unwrap(), Shape::new(1, 32, 32, 3));
    }
}
