//! Checks every parameter gradient of a tiny model against central differences.
//!
//! ```text
//! cargo run --release --example gradcheck
//! ```

use agos::train::{gradcheck, GradcheckConfig};

fn main() -> agos::Result<()> {
    for alpha in [5e-4, 1.0] {
        let mut cfg = GradcheckConfig::default();
        cfg.loss.alpha = alpha;
        println!("alpha = {alpha}");
        println!("{}\n", gradcheck(&cfg, None)?);
    }
    Ok(())
}
