//! Trains briefly, then writes per-grain instance heatmaps of a few test
//! images as PGM files.
//!
//! ```text
//! cargo run --release --example heatmaps -- /tmp/heatmaps
//! ```

use agos::data::{export_heatmap, split_dataset, synth_generate};
use agos::mbmir::InstanceRepr;
use agos::model::predict_batch;
use agos::train::{train, TrainConfig};

fn main() -> agos::Result<()> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "heatmaps".into()));
    std::fs::create_dir_all(&out)?;
    let mut cfg = TrainConfig::default();
    cfg.synth.samples_per_class = 30;
    cfg.epochs = 5;
    cfg.lr0 = 1e-3;
    cfg.batch_size = 16;
    let data = synth_generate(&cfg.synth, cfg.synth_seed)?.dataset;
    let (tr, te) = split_dataset(&data, 0.5, cfg.seed)?;
    let state = train::<f32>(&tr, &cfg, cfg.seed, None)?;

    for i in 0..4 {
        let (x, y) = te.batch::<f32>(&[i])?;
        let p = predict_batch(&state.params, &state.model, &x)?;
        for (t, map) in p.instances.into_iter().enumerate() {
            let path = out.join(format!("sample{i}_grain{t}.pgm"));
            export_heatmap(&InstanceRepr { map, grain: t }, 0, y[0] as i64, &path)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
