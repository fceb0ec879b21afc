//! Generates a small synthetic scene dataset, writes it as a directory of
//! classes and scans it back.
//!
//! ```text
//! cargo run --release --example synthetic_scenes -- /tmp/scenes
//! ```

use agos::data::{synth_generate, DatasetManifest, SyntheticSceneSpec};

fn main() -> agos::Result<()> {
    let root = std::env::args().nth(1).unwrap_or_else(|| "scenes".into());
    let spec = SyntheticSceneSpec {
        samples_per_class: 20,
        ..SyntheticSceneSpec::default()
    };
    let synth = synth_generate(&spec, 1)?;
    synth.write(&root)?;

    let manifest = DatasetManifest::scan(&root)?;
    println!(
        "{} images of {}x{}x{} in {root}",
        manifest.len(),
        manifest.height,
        manifest.width,
        manifest.channels
    );
    for (k, name) in manifest.classes.iter().enumerate() {
        let n = manifest.labels().iter().filter(|&&l| l == k).count();
        println!("  {name:<10} {n}");
    }

    // weak instance labels: which grid cells of image 0 hold its object
    let (gh, gw) = synth.grid;
    let cells = synth.labels_for(0, synth.dataset.labels[0]);
    for row in cells.labels.chunks(gw) {
        let line: String = row.iter().map(|&l| if l == 1 { '#' } else { '.' }).collect();
        println!("  {line}");
    }
    println!("  ({gh}x{gw} cells)");
    Ok(())
}
