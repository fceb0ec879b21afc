//! Runs the component ablation and the grain sweep on a small synthetic set
//! and prints the CSV reports.
//!
//! ```text
//! cargo run --release --example ablation -- /tmp/ablation
//! ```

use agos::data::synth_generate;
use agos::train::{run_experiment, ExperimentKind, TrainConfig};

fn main() -> agos::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "ablation".into());
    let mut cfg = TrainConfig::default();
    cfg.synth.samples_per_class = 20;
    cfg.synth.height = 32;
    cfg.synth.width = 32;
    cfg.synth.object_size = (8, 16);
    cfg.model.mgp.channels = 16;
    cfg.epochs = 4;
    cfg.lr0 = 1e-3;
    cfg.batch_size = 8;
    cfg.runs = 2;
    cfg.train_ratios = vec![0.2, 0.5];

    let data = synth_generate(&cfg.synth, cfg.synth_seed)?.dataset;
    for kind in [ExperimentKind::Ablate, ExperimentKind::SweepGrains] {
        let report = run_experiment(kind, &cfg, &data, out.as_ref())?;
        println!("# {}", kind.name());
        println!("{}", report.header.join(","));
        for row in &report.rows {
            println!("{}", row.join(","));
        }
        println!();
    }
    Ok(())
}
