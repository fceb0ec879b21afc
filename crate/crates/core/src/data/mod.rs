//! Image files, datasets, synthetic scenes and heatmaps.

pub mod dataset;
pub mod heatmap;
pub mod image;
pub mod synth;

pub use dataset::{split_dataset, split_indices, split_manifest, Dataset, DatasetManifest};
pub use heatmap::{export_heatmap, heatmap_pixels};
pub use image::{
    decode_agt, decode_pnm, decode_pnm_samples, encode_agt, encode_pnm, encode_pnm_samples, load_agt, load_image, save_agt,
    save_pnm, AnyTensor, PnmHeader, AGT_MAGIC,
};
pub use synth::{synth_generate, SyntheticDataset, SyntheticSceneSpec};
