//! Directory-of-classes datasets and stratified splitting.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::image::{load_image, save_pnm};
use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

const EXTENSIONS: [&str; 3] = ["pgm", "ppm", "agt"];

/// Files of a `root/<class>/<sample>.{pgm,ppm,agt}` tree.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub samples: Vec<(PathBuf, usize)>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl DatasetManifest {
    /// Scans `root`. Classes are sorted directory names, samples sorted by
    /// file name inside each class; every image is parsed to check its size.
    pub fn scan(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
        for entry in fs::read_dir(root)? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                let name = entry.file_name().to_string_lossy().into_owned();
                class_dirs.push((name, entry.path()));
            }
        }
        class_dirs.sort();
        if class_dirs.is_empty() {
            return Err(Error::Dataset(format!("no class directories in {}", root.display())));
        }
        let mut samples = Vec::new();
        let mut dims: Option<(usize, usize, usize)> = None;
        for (k, (name, dir)) in class_dirs.iter().enumerate() {
            let mut files: Vec<PathBuf> = fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                })
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::Dataset(format!("class '{name}' has no samples")));
            }
            for path in files {
                let s = load_image(&path)?.shape();
                match dims {
                    None => dims = Some((s.h, s.w, s.c)),
                    Some(d) if d != (s.h, s.w, s.c) => {
                        return Err(Error::format(
                            &path,
                            format!("image is {}x{}x{}, expected {}x{}x{}", s.h, s.w, s.c, d.0, d.1, d.2),
                        ))
                    }
                    Some(_) => {}
                }
                samples.push((path, k));
            }
        }
        let (height, width, channels) = dims.expect("at least one sample");
        Ok(DatasetManifest {
            classes: class_dirs.into_iter().map(|(n, _)| n).collect(),
            samples,
            height,
            width,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|(_, k)| *k).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        DatasetManifest {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.clone()
        }
    }

    /// Reads every image into memory.
    pub fn load(&self) -> Result<Dataset> {
        let images = self
            .samples
            .iter()
            .map(|(p, _)| load_image(p))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.classes.clone(), images, self.labels())
    }
}

/// Images held in memory as `1×H×W×C` double-precision tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub images: Vec<Tensor<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(classes: Vec<String>, images: Vec<Tensor<f64>>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Dataset("image and label counts differ".into()));
        }
        if let Some(&k) = labels.iter().find(|&&k| k >= classes.len()) {
            return Err(Error::ClassOutOfRange {
                index: k,
                classes: classes.len(),
            });
        }
        if let Some(first) = images.first() {
            let s = first.shape();
            if s.n != 1 || images.iter().any(|im| im.shape() != s) {
                return Err(Error::Dataset("images must share one 1xHxWxC shape".into()));
            }
        }
        Ok(Dataset {
            classes,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// `1×H×W×C` shape of one image.
    pub fn image_shape(&self) -> Option<Shape> {
        self.images.first().map(Tensor::shape)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        self.labels.iter().for_each(|&k| counts[k] += 1);
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Dataset {
            classes: self.classes.clone(),
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Stacks the chosen images into one batch tensor and returns their labels.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let items: Vec<&Tensor<f64>> = indices.iter().map(|&i| &self.images[i]).collect();
        let x = Tensor::stack(&items)?.cast();
        Ok((x, indices.iter().map(|&i| self.labels[i]).collect()))
    }

    /// Writes the images as PGM/PPM (8-bit) under `root/<class>/NNNNN.ext`.
    pub fn write_to_dir(&self, root: impl AsRef<Path>) -> Result<DatasetManifest> {
        let root = root.as_ref();
        let shape = self
            .image_shape()
            .ok_or_else(|| Error::Dataset("cannot write an empty dataset".into()))?;
        let ext = match shape.c {
            1 => "pgm",
            3 => "ppm",
            c => return Err(Error::Dataset(format!("cannot write {c}-channel images as PNM"))),
        };
        for class in &self.classes {
            fs::create_dir_all(root.join(class))?;
        }
        let mut samples = Vec::with_capacity(self.len());
        for (i, (img, &k)) in self.images.iter().zip(&self.labels).enumerate() {
            let path = root.join(&self.classes[k]).join(format!("{i:05}.{ext}"));
            save_pnm(&path, img, 255)?;
            samples.push((path, k));
        }
        Ok(DatasetManifest {
            classes: self.classes.clone(),
            samples,
            height: shape.h,
            width: shape.w,
            channels: shape.c,
        })
    }
}

/// Stratified split of sample indices.
///
/// Each class's indices are shuffled with one seeded generator (classes in
/// index order) and the first `⌈ratio·n_c⌉` go to training. Both halves are
/// returned in ascending order.
pub fn split_indices(labels: &[usize], classes: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("train ratio must be in (0, 1), got {ratio}")));
    }
    let mut per_class = vec![Vec::new(); classes];
    for (i, &k) in labels.iter().enumerate() {
        per_class
            .get_mut(k)
            .ok_or(Error::ClassOutOfRange { index: k, classes })?
            .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (k, mut idx) in per_class.into_iter().enumerate() {
        if idx.is_empty() {
            return Err(Error::Dataset(format!("class {k} has no samples")));
        }
        idx.shuffle(&mut rng);
        // guard against 0.3 * 10 = 3.0000000000000004
        let n_train = ((ratio * idx.len() as f64) - 1e-9).ceil() as usize;
        let n_train = n_train.min(idx.len());
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_dataset(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (tr, te) = split_indices(&dataset.labels, dataset.num_classes(), ratio, seed)?;
    Ok((dataset.subset(&tr), dataset.subset(&te)))
}

pub fn split_manifest(
    manifest: &DatasetManifest,
    ratio: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    let (tr, te) = split_indices(&manifest.labels(), manifest.classes.len(), ratio, seed)?;
    Ok((manifest.subset(&tr), manifest.subset(&te)))
}
