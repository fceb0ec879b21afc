//! Trains the full model on synthetic scenes, checkpoints it and evaluates
//! the reloaded parameters.
//!
//! ```text
//! cargo run --release --example train_eval
//! ```

use agos::data::{split_dataset, synth_generate};
use agos::train::{evaluate, load_checkpoint, save_checkpoint, train, TrainConfig};

fn main() -> agos::Result<()> {
    let mut cfg = TrainConfig::default();
    cfg.synth.samples_per_class = 100;
    cfg.epochs = 15;
    cfg.lr0 = 1e-3;
    cfg.batch_size = 16;

    let data = synth_generate(&cfg.synth, cfg.synth_seed)?.dataset;
    let (train_set, test_set) = split_dataset(&data, 0.5, cfg.seed)?;
    let state = train::<f32>(&train_set, &cfg, cfg.seed, None)?;
    for r in &state.history {
        println!(
            "epoch {:>3}  lr {:.1e}  loss {:.4} (cls {:.4}, sealig {:.4})",
            r.epoch, r.lr, r.loss.total, r.loss.cls, r.loss.sealig
        );
    }

    let dir = std::env::temp_dir().join("agos-train-eval");
    save_checkpoint(&dir, &state, &cfg)?;
    let (restored, _) = load_checkpoint::<f32>(&dir)?;
    let m = evaluate(&restored.params, &restored.model, &test_set, cfg.batch_size)?;
    println!("test OA {:.4} ({}/{})", m.overall_accuracy, m.correct, m.total);
    for (name, acc) in test_set.classes.iter().zip(&m.per_class_accuracy) {
        println!("  {name:<10} {acc:.3}");
    }
    Ok(())
}
