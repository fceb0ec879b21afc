//! Fuses per-grain score vectors with each strategy and fits least-squares
//! grain weights.
//!
//! ```text
//! cargo run --example fusion
//! ```

use agos::mbmir::{bag_distribution, predict};
use agos::mil::{covariance_matrix, fit_least_squares, fuse, FusionKind, FusionStrategy, DEFAULT_RIDGE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> agos::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (grains, classes) = (4, 3);
    // grain t is informative with strength t
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for s in 0..60 {
        let label = s % classes;
        let sample: Vec<Vec<f64>> = (0..grains)
            .map(|t| {
                (0..classes)
                    .map(|c| rng.random_range(-1.0..1.0) + if c == label { t as f64 * 0.5 } else { 0.0 })
                    .collect()
            })
            .collect();
        scores.push(sample);
        labels.push(label);
    }

    let weights = fit_least_squares(&scores, &labels, DEFAULT_RIDGE)?;
    println!("least-squares grain weights: {weights:.3?}");

    let mut native = Vec::new();
    let hit = |d: &agos::mbmir::BagDistribution, l: usize| usize::from(predict(d) == l);
    let mut correct = vec![0; FusionKind::ALL.len() + 1];
    for (s, &l) in scores.iter().zip(&labels) {
        let d = bag_distribution(s)?;
        correct[0] += hit(&d, l);
        native.push(d);
        for (k, kind) in FusionKind::ALL.into_iter().enumerate() {
            let strategy = match kind {
                FusionKind::LeastSquares => FusionStrategy::least_squares(weights.clone()),
                other => FusionStrategy::new(other),
            };
            correct[k + 1] += hit(&fuse(s, &strategy)?, l);
        }
    }
    println!("{:<14} {}/{}", "sum", correct[0], labels.len());
    for (k, kind) in FusionKind::ALL.into_iter().enumerate() {
        println!("{:<14} {}/{}", kind.label(), correct[k + 1], labels.len());
    }

    println!("covariance of the summed distributions:");
    for row in covariance_matrix(&native)? {
        println!("  {row:+.5?}");
    }
    Ok(())
}
