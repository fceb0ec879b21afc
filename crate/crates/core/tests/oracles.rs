//! Library kernels checked against independent references: nested loops,
//! nalgebra linear algebra, two-pass statistics and central differences.

mod common;

use agos::autodiff::Tape;
use agos::finite_diff::central_difference;
use agos::functional::{conv1x1, conv2d, cross_entropy, global_avg_pool, softmax_vec, ConvKernel};
use agos::mbmir::{BagDistribution, BagSource};
use agos::mil::{covariance_matrix, fit_least_squares, fuse, FusionKind, FusionStrategy};
use agos::{Shape, Tensor};
use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn conv2d_matches_nested_loops_for_5x5_kernels() {
    let mut r = rng(11);
    for d in [1, 2, 3] {
        let x = common::random_tensor(&mut r, Shape::new(2, 9, 7, 3));
        let w = common::random_tensor(&mut r, Shape::new(5, 5, 3, 2));
        let b = common::random_tensor(&mut r, Shape::vector(1, 2));
        let expect = common::naive_conv(&x, &w, b.data(), d);
        let got = conv2d(&x, &ConvKernel::new(w, b, d).unwrap()).unwrap();
        for (a, e) in got.data().iter().zip(&expect) {
            assert!((a - e).abs() <= 1e-12);
        }
    }
}

#[test]
fn conv1x1_is_a_per_position_matmul() {
    let mut r = rng(12);
    let x = common::random_tensor(&mut r, Shape::new(2, 3, 4, 5));
    let w = common::random_tensor(&mut r, Shape::new(1, 1, 5, 3));
    let b = common::random_tensor(&mut r, Shape::vector(1, 3));
    let rows = 2 * 3 * 4;
    let xm = DMatrix::from_row_slice(rows, 5, x.data());
    let wm = DMatrix::from_row_slice(5, 3, w.data());
    let mut expect = xm * wm;
    for mut row in expect.row_iter_mut() {
        for (v, bias) in row.iter_mut().zip(b.data()) {
            *v += bias;
        }
    }
    let got = conv1x1(&x, &ConvKernel::new(w, b, 1).unwrap()).unwrap();
    for i in 0..rows {
        for k in 0..3 {
            assert_relative_eq!(got.data()[i * 3 + k], expect[(i, k)], epsilon = 1e-12);
        }
    }
}

#[test]
fn least_squares_matches_normal_equations() {
    let mut r = rng(13);
    let (samples, grains, classes) = (40, 4, 3);
    let scores: Vec<Vec<Vec<f64>>> = (0..samples)
        .map(|_| {
            (0..grains)
                .map(|_| (0..classes).map(|_| r.random_range(-2.0..2.0)).collect())
                .collect()
        })
        .collect();
    let labels: Vec<usize> = (0..samples).map(|s| s % classes).collect();
    let ridge = 1e-3;
    // design matrix: one row per (sample, class), one column per grain
    let a = DMatrix::from_fn(samples * classes, grains, |row, t| scores[row / classes][t][row % classes]);
    let y = DVector::from_fn(samples * classes, |row, _| f64::from(labels[row / classes] == row % classes));
    let lhs = a.transpose() * &a + DMatrix::identity(grains, grains) * ridge;
    let expect = lhs.cholesky().unwrap().solve(&(a.transpose() * y));
    let got = fit_least_squares(&scores, &labels, ridge).unwrap();
    for (g, e) in got.iter().zip(expect.iter()) {
        assert_relative_eq!(*g, *e, epsilon = 1e-10, max_relative = 1e-9);
    }
}

#[test]
fn covariance_matches_two_pass_and_is_psd() {
    let mut r = rng(14);
    let classes = 5;
    let dists: Vec<BagDistribution> = (0..50)
        .map(|_| {
            let v: Vec<f64> = (0..classes).map(|_| r.random_range(-3.0..3.0)).collect();
            BagDistribution::new(softmax_vec(&v), BagSource::Fused).unwrap()
        })
        .collect();
    let n = dists.len() as f64;
    let mean: Vec<f64> = (0..classes)
        .map(|k| dists.iter().map(|d| d.probs[k]).sum::<f64>() / n)
        .collect();
    let got = covariance_matrix(&dists).unwrap();
    for i in 0..classes {
        for j in 0..classes {
            let two_pass = dists
                .iter()
                .map(|d| (d.probs[i] - mean[i]) * (d.probs[j] - mean[j]))
                .sum::<f64>()
                / (n - 1.0);
            assert!((got[i][j] - two_pass).abs() <= 1e-10);
            assert_eq!(got[i][j], got[j][i]);
        }
    }
    let m = DMatrix::from_fn(classes, classes, |i, j| got[i][j]);
    assert!(m.symmetric_eigen().eigenvalues.min() >= -1e-10);
}

#[test]
fn fusion_oracles() {
    let scores = vec![vec![1.0, -1.0, 0.5], vec![3.0, 0.0, -2.0]];
    let mean = fuse(&scores, &FusionStrategy::new(FusionKind::Mean)).unwrap();
    let expect = softmax_vec(&[2.0, -0.5, -0.75]);
    for (a, b) in mean.probs.iter().zip(&expect) {
        assert_relative_eq!(*a, *b, epsilon = 1e-15);
    }
    let max = fuse(&scores, &FusionStrategy::new(FusionKind::Max)).unwrap();
    for (a, b) in max.probs.iter().zip(&softmax_vec(&[3.0, 0.0, 0.5])) {
        assert_relative_eq!(*a, *b, epsilon = 1e-15);
    }
    let ls = fuse(&scores, &FusionStrategy::least_squares(vec![2.0, -1.0])).unwrap();
    for (a, b) in ls.probs.iter().zip(&softmax_vec(&[-1.0, -2.0, 3.0])) {
        assert_relative_eq!(*a, *b, epsilon = 1e-15);
    }
    assert!(fuse(&scores, &FusionStrategy::new(FusionKind::LeastSquares)).is_err());
}

#[test]
fn majority_vote_breaks_ties_by_summed_score() {
    // one vote each for classes 0 and 2; class 2 has the larger total
    let scores = vec![vec![1.0, 0.0, 0.9], vec![0.0, 0.1, 2.0]];
    let d = fuse(&scores, &FusionStrategy::new(FusionKind::MajorityVote)).unwrap();
    assert_eq!(d.probs, vec![0.0, 0.0, 1.0]);
    let three = vec![vec![0.0, 1.0], vec![0.0, 1.0], vec![5.0, 0.0]];
    let d = fuse(&three, &FusionStrategy::new(FusionKind::MajorityVote)).unwrap();
    assert_eq!(d.probs, vec![0.0, 1.0]);
}

#[test]
fn pooling_and_cross_entropy_closed_forms() {
    let mut r = rng(15);
    let x = common::random_tensor(&mut r, Shape::new(2, 3, 3, 2));
    let pooled = global_avg_pool(&x).unwrap();
    for n in 0..2 {
        for c in 0..2 {
            let mut s = 0.0;
            for y in 0..3 {
                for xx in 0..3 {
                    s += x.get(n, y, xx, c);
                }
            }
            assert_relative_eq!(pooled.data()[n * 2 + c], s / 9.0, epsilon = 1e-15);
        }
    }
    let p = [0.7, 0.2, 0.1];
    let expect = -(0.7f64.ln() + 0.8f64.ln() + 0.9f64.ln()) / 3.0;
    assert_relative_eq!(cross_entropy(&p, 0, 3).unwrap(), expect, epsilon = 1e-15);
}

#[test]
fn tape_conv_gradients_match_central_differences() {
    let mut r = rng(16);
    let x = common::random_tensor(&mut r, Shape::new(1, 6, 4, 2));
    let w = common::random_tensor(&mut r, Shape::new(3, 3, 2, 3));
    let b = common::random_tensor(&mut r, Shape::vector(1, 3));
    for (d, stride) in [(1, 1), (2, 1), (1, 2)] {
        let loss = |x: &Tensor<f64>, w: &Tensor<f64>| -> f64 {
            let mut t = Tape::new();
            let (xv, wv, bv) = (t.leaf(x.clone()), t.leaf(w.clone()), t.leaf(b.clone()));
            let y = t.conv2d(xv, wv, bv, d, stride).unwrap();
            let s = t.sum_squares(y);
            t.value(s).item()
        };
        let mut t = Tape::new();
        let xv = t.leaf_with_grad(x.clone());
        let wv = t.param("w", &w);
        let bv = t.leaf(b.clone());
        let y = t.conv2d(xv, wv, bv, d, stride).unwrap();
        let s = t.sum_squares(y);
        let g = t.backward(s).unwrap();
        let gx = g.leaf(xv).unwrap();
        let gw = g.param("w").unwrap();
        for i in 0..x.len() {
            let numeric = central_difference(
                |v| {
                    let mut xp = x.clone();
                    xp.data_mut()[i] = v;
                    loss(&xp, &w)
                },
                x.data()[i],
                1e-5,
            );
            assert_relative_eq!(gx.data()[i], numeric, epsilon = 1e-6, max_relative = 1e-6);
        }
        for i in 0..w.len() {
            let numeric = central_difference(
                |v| {
                    let mut wp = w.clone();
                    wp.data_mut()[i] = v;
                    loss(&x, &wp)
                },
                w.data()[i],
                1e-5,
            );
            assert_relative_eq!(gw.data()[i], numeric, epsilon = 1e-6, max_relative = 1e-6);
        }
    }
}
