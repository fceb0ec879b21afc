//! Classic multiple-instance utilities, alternative grain fusion strategies
//! and the covariance diagnostic of bag distributions.

use crate::error::{Error, Result};
use crate::mbmir::{BagDistribution, BagSource};
use crate::ops;

/// Binary instance labels of one bag for one category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakInstanceLabels {
    pub labels: Vec<u8>,
    pub bag_category: usize,
}

impl WeakInstanceLabels {
    pub fn new(labels: Vec<u8>, bag_category: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("empty instance label list"));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("instance labels must be 0 or 1"));
        }
        Ok(WeakInstanceLabels {
            labels,
            bag_category,
        })
    }
}

/// A bag is negative iff every instance is negative.
pub fn classic_bag_label(labels: &WeakInstanceLabels) -> Result<u8> {
    if labels.labels.is_empty() {
        return Err(Error::invalid("empty instance label list"));
    }
    Ok(u8::from(labels.labels.iter().any(|&l| l != 0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionKind {
    Mean,
    Max,
    MajorityVote,
    LeastSquares,
}

impl FusionKind {
    pub const ALL: [FusionKind; 4] = [
        FusionKind::Mean,
        FusionKind::Max,
        FusionKind::MajorityVote,
        FusionKind::LeastSquares,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FusionKind::Mean => "mean",
            FusionKind::Max => "max",
            FusionKind::MajorityVote => "majority-vote",
            FusionKind::LeastSquares => "least-squares",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionStrategy {
    pub kind: FusionKind,
    /// Per-grain weights, present once least squares has been fitted.
    pub ls_weights: Option<Vec<f64>>,
}

impl FusionStrategy {
    pub fn new(kind: FusionKind) -> Self {
        FusionStrategy {
            kind,
            ls_weights: None,
        }
    }

    pub fn least_squares(weights: Vec<f64>) -> Self {
        FusionStrategy {
            kind: FusionKind::LeastSquares,
            ls_weights: Some(weights),
        }
    }
}

fn check_scores(grain_scores: &[Vec<f64>]) -> Result<usize> {
    let first = grain_scores
        .first()
        .ok_or_else(|| Error::invalid("no grain scores to fuse"))?;
    if first.is_empty() || grain_scores.iter().any(|s| s.len() != first.len()) {
        return Err(Error::invalid("grain score vectors must share a nonzero length"));
    }
    Ok(first.len())
}

/// Combines raw per-grain score vectors of one bag into a distribution.
pub fn fuse(grain_scores: &[Vec<f64>], strategy: &FusionStrategy) -> Result<BagDistribution> {
    let classes = check_scores(grain_scores)?;
    let grains = grain_scores.len() as f64;
    let logits: Vec<f64> = match strategy.kind {
        FusionKind::Mean => (0..classes)
            .map(|c| grain_scores.iter().map(|s| s[c]).sum::<f64>() / grains)
            .collect(),
        FusionKind::Max => (0..classes)
            .map(|c| grain_scores.iter().map(|s| s[c]).fold(f64::NEG_INFINITY, f64::max))
            .collect(),
        FusionKind::MajorityVote => {
            let winner = majority_vote(grain_scores, classes);
            let mut probs = vec![0.0; classes];
            probs[winner] = 1.0;
            return BagDistribution::new(probs, BagSource::Fused);
        }
        FusionKind::LeastSquares => {
            let w = strategy
                .ls_weights
                .as_ref()
                .ok_or_else(|| Error::invalid("least-squares fusion used before fitting"))?;
            if w.len() != grain_scores.len() {
                return Err(Error::invalid(format!(
                    "{} fitted weights for {} grains",
                    w.len(),
                    grain_scores.len()
                )));
            }
            (0..classes)
                .map(|c| grain_scores.iter().zip(w).map(|(s, wt)| wt * s[c]).sum())
                .collect()
        }
    };
    BagDistribution::new(ops::softmax_rows(1, classes, &logits), BagSource::Fused)
}

/// Plurality of per-grain argmaxes; ties go to the largest summed raw score,
/// then to the lowest class index.
fn majority_vote(grain_scores: &[Vec<f64>], classes: usize) -> usize {
    let mut votes = vec![0usize; classes];
    for s in grain_scores {
        votes[ops::argmax(s)] += 1;
    }
    let top = *votes.iter().max().expect("classes > 0");
    let totals: Vec<f64> = (0..classes)
        .map(|c| grain_scores.iter().map(|s| s[c]).sum())
        .collect();
    let mut best: Option<usize> = None;
    for c in (0..classes).filter(|&c| votes[c] == top) {
        match best {
            Some(b) if totals[c] <= totals[b] => {}
            _ => best = Some(c),
        }
    }
    best.expect("at least one class has the top vote")
}

/// Ridge-regularised least squares for per-grain scalar weights:
/// Ridge added to the normal equations of [`fit_least_squares`] by default.
pub const DEFAULT_RIDGE: f64 = 1e-6;

/// `min_w Σ_samples ‖Σ_t w_t Y_t - onehot‖² + ridge·‖w‖²`.
///
/// `train_scores[s][t]` is the score vector of grain `t` for sample `s`.
pub fn fit_least_squares(
    train_scores: &[Vec<Vec<f64>>],
    train_labels: &[usize],
    ridge: f64,
) -> Result<Vec<f64>> {
    if train_scores.is_empty() || train_scores.len() != train_labels.len() {
        return Err(Error::invalid("least squares needs one label per sample and >= 1 sample"));
    }
    if !(ridge > 0.0) {
        return Err(Error::invalid("ridge must be > 0"));
    }
    let grains = train_scores[0].len();
    let classes = check_scores(&train_scores[0])?;
    let mut gram = vec![0.0; grains * grains];
    let mut rhs = vec![0.0; grains];
    for (sample, &label) in train_scores.iter().zip(train_labels) {
        if sample.len() != grains || check_scores(sample)? != classes {
            return Err(Error::invalid("inconsistent grain score layout"));
        }
        if label >= classes {
            return Err(Error::ClassOutOfRange {
                index: label,
                classes,
            });
        }
        for a in 0..grains {
            rhs[a] += sample[a][label];
            for b in 0..grains {
                gram[a * grains + b] += sample[a]
                    .iter()
                    .zip(&sample[b])
                    .map(|(x, y)| x * y)
                    .sum::<f64>();
            }
        }
    }
    for a in 0..grains {
        gram[a * grains + a] += ridge;
    }
    solve_dense(grains, gram, rhs)
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(n: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if a[pivot * n + col].abs() <= 1e-14 * scale {
            return Err(Error::Numeric("least-squares system is singular".into()));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("least-squares solution is not finite".into()));
    }
    Ok(x)
}

/// Unbiased sample covariance of the probability vectors, `C×C` row-major.
pub fn covariance_matrix(distributions: &[BagDistribution]) -> Result<Vec<Vec<f64>>> {
    if distributions.len() < 2 {
        return Err(Error::invalid("covariance needs at least two samples"));
    }
    let c = distributions[0].classes();
    if distributions.iter().any(|d| d.classes() != c) {
        return Err(Error::invalid("distributions have different class counts"));
    }
    let n = distributions.len() as f64;
    // shifted by the first sample, which keeps identical inputs exactly zero
    let shift = &distributions[0].probs;
    let centred: Vec<Vec<f64>> = distributions
        .iter()
        .map(|d| d.probs.iter().zip(shift).map(|(p, k)| p - k).collect())
        .collect();
    let sums: Vec<f64> = (0..c).map(|k| centred.iter().map(|d| d[k]).sum()).collect();
    let mut cov = vec![vec![0.0; c]; c];
    for i in 0..c {
        for j in i..c {
            let s: f64 = centred.iter().map(|d| d[i] * d[j]).sum();
            cov[i][j] = (s - sums[i] * sums[j] / n) / (n - 1.0);
            cov[j][i] = cov[i][j];
        }
    }
    Ok(cov)
}
