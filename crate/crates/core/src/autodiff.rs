//! Reverse-mode differentiation over an append-only tape.
//!
//! A [`Tape`] records every operation of one forward pass. [`Tape::backward`]
//! walks the records in strict reverse order and accumulates gradients for
//! every node that depends on a parameter or a gradient-tracking leaf.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::{self, ConvGeometry};
use crate::tensor::{Real, Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Param,
    Conv2d,
    AbsDiff,
    Add,
    Relu,
    Dropout,
    GlobalAvgPool,
    Softmax,
    CrossEntropy,
    Sum,
    SumSquares,
    Scale,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(String),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeometry,
    },
    AbsDiff(Var, Var),
    Add(Vec<Var>),
    Relu(Var),
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    GlobalAvgPool(Var),
    Softmax(Var),
    CrossEntropy {
        p: Var,
        labels: Vec<usize>,
    },
    Sum(Var),
    SumSquares(Var),
    Scale(Var, T),
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Param(_) => OpKind::Param,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::AbsDiff(..) => OpKind::AbsDiff,
            Op::Add(_) => OpKind::Add,
            Op::Relu(_) => OpKind::Relu,
            Op::Dropout { .. } => OpKind::Dropout,
            Op::GlobalAvgPool(_) => OpKind::GlobalAvgPool,
            Op::Softmax(_) => OpKind::Softmax,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
            Op::Sum(_) => OpKind::Sum,
            Op::SumSquares(_) => OpKind::SumSquares,
            Op::Scale(..) => OpKind::Scale,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Param(_) => vec![],
            Op::Conv2d { x, w, b, .. } => vec![*x, *w, *b],
            Op::AbsDiff(a, b) => vec![*a, *b],
            Op::Add(v) => v.clone(),
            Op::Relu(x)
            | Op::GlobalAvgPool(x)
            | Op::Softmax(x)
            | Op::Sum(x)
            | Op::SumSquares(x)
            | Op::Scale(x, _) => vec![*x],
            Op::Dropout { x, .. } => vec![*x],
            Op::CrossEntropy { p, .. } => vec![*p],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
}

/// Read-only view of one tape record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapeNode {
    pub kind: OpKind,
    pub inputs: Vec<Var>,
    /// Parameter name for [`OpKind::Param`] records.
    pub name: Option<String>,
}

/// Deliberate corruption of one backward rule, used as a negative control
/// for gradient checking.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackwardFault {
    ScaleConvWeightGrad(f64),
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    params: BTreeMap<String, Tensor<T>>,
    leaves: BTreeMap<Var, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn leaf(&self, var: Var) -> Option<&Tensor<T>> {
        self.leaves.get(&var)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: BTreeMap<String, Var>,
    consumed: bool,
    fault: Option<BackwardFault>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: BTreeMap::new(),
            consumed: false,
            fault: None,
        }
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: BackwardFault) {
        self.fault = Some(fault);
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let tracked = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            other => other.inputs().iter().any(|v| self.nodes[v.0].tracked),
        };
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Input whose gradient is reported in [`Gradients::leaf`].
    pub fn leaf_with_grad(&mut self, value: Tensor<T>) -> Var {
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].tracked = true;
        v
    }

    /// Registers a named parameter. Registering the same name twice returns
    /// the first handle, so shared weights accumulate into one gradient.
    pub fn param(&mut self, name: &str, value: &Tensor<T>) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.push(value.clone(), Op::Param(name.to_string()));
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> TapeNode {
        let op = &self.nodes[v.0].op;
        TapeNode {
            kind: op.kind(),
            inputs: op.inputs(),
            name: match op {
                Op::Param(n) => Some(n.clone()),
                _ => None,
            },
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                expected: sa,
                got: sb,
            });
        }
        Ok(sa)
    }

    /// Convolution with "same" zero padding. `w` is `Kh×Kw×Cin×Cout`, `b` is `1×1×1×Cout`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, dilation: usize, stride: usize) -> Result<Var> {
        let geom = ConvGeometry::new(self.shape(x), self.shape(w), dilation, stride)?;
        if self.shape(b).numel() != geom.kernel.c {
            return Err(Error::InvalidShape {
                op: "conv2d",
                msg: format!("bias {} for {} output channels", self.shape(b), geom.kernel.c),
            });
        }
        for (v, what) in [(x, "conv2d input"), (w, "conv2d kernel"), (b, "conv2d bias")] {
            if !self.value(v).all_finite() {
                return Err(Error::NonFinite(what.into()));
            }
        }
        let out = ops::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        Ok(self.push(
            Tensor::from_raw(geom.output(), out),
            Op::Conv2d { x, w, b, geom },
        ))
    }

    /// Elementwise `|a - b|`.
    pub fn abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("abs_diff", a, b)?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| (x - y).abs())
            .collect();
        Ok(self.push(Tensor::from_raw(shape, out), Op::AbsDiff(a, b)))
    }

    /// Elementwise sum of one or more same-shaped values, accumulated in argument order.
    pub fn add(&mut self, terms: &[Var]) -> Result<Var> {
        let first = *terms
            .first()
            .ok_or_else(|| Error::invalid("add of zero terms"))?;
        let mut out = self.value(first).data().to_vec();
        for &t in &terms[1..] {
            self.same_shape("add", first, t)?;
            for (o, &v) in out.iter_mut().zip(self.value(t).data()) {
                *o = *o + v;
            }
        }
        let shape = self.shape(first);
        Ok(self.push(Tensor::from_raw(shape, out), Op::Add(terms.to_vec())))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = t.data().iter().map(|&v| v.max(T::zero())).collect();
        let shape = t.shape();
        self.push(Tensor::from_raw(shape, out), Op::Relu(x))
    }

    /// Inverted dropout: zeroes with probability `rate`, scales survivors by `1/(1-rate)`.
    /// Identity when `training` is false or `rate` is zero.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} not in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let t = self.value(x);
        let out = t.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = t.shape();
        Ok(self.push(Tensor::from_raw(shape, out), Op::Dropout { x, mask }))
    }

    /// `N×H×W×C -> N×1×1×C` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.spatial() == 0 {
            return Err(Error::InvalidShape {
                op: "global_avg_pool",
                msg: "empty spatial extent".into(),
            });
        }
        let out = ops::global_avg_pool(s, self.value(x).data());
        Ok(self.push(
            Tensor::from_raw(Shape::vector(s.n, s.c), out),
            Op::GlobalAvgPool(x),
        ))
    }

    /// Softmax over the channel axis of an `N×1×1×C` value.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.spatial() != 1 {
            return Err(Error::InvalidShape {
                op: "softmax",
                msg: format!("expected N×1×1×C, got {s}"),
            });
        }
        if !self.value(x).all_finite() {
            return Err(Error::NonFinite("softmax logits".into()));
        }
        let out = ops::softmax_rows(s.n, s.c, self.value(x).data());
        Ok(self.push(Tensor::from_raw(s, out), Op::Softmax(x)))
    }

    /// Batch mean of [`ops::cross_entropy_row`]; yields a scalar.
    pub fn cross_entropy(&mut self, p: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(p);
        if s.spatial() != 1 || s.n != labels.len() {
            return Err(Error::InvalidShape {
                op: "cross_entropy",
                msg: format!("{s} probabilities for {} labels", labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= s.c) {
            return Err(Error::ClassOutOfRange {
                index: bad,
                classes: s.c,
            });
        }
        let data = self.value(p).data();
        let total = labels
            .iter()
            .enumerate()
            .map(|(n, &l)| ops::cross_entropy_row(&data[n * s.c..(n + 1) * s.c], l))
            .fold(T::zero(), |a, b| a + b);
        let loss = total / T::from_f64(s.n as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                p,
                labels: labels.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self
            .value(x)
            .data()
            .iter()
            .fold(T::zero(), |a, &b| a + b);
        self.push(Tensor::scalar(total), Op::Sum(x))
    }

    /// `Σ x²` as a scalar.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let total = self
            .value(x)
            .data()
            .iter()
            .fold(T::zero(), |a, &b| a + b * b);
        self.push(Tensor::scalar(total), Op::SumSquares(x))
    }

    pub fn scale(&mut self, x: Var, k: T) -> Var {
        let t = self.value(x);
        let out = t.data().iter().map(|&v| v * k).collect();
        let shape = t.shape();
        self.push(Tensor::from_raw(shape, out), Op::Scale(x, k))
    }

    /// Propagates gradients of the scalar `loss` to every tracked node.
    ///
    /// Parameters that do not influence `loss` receive zero gradients.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.shape(loss).numel() != 1 {
            return Err(Error::InvalidShape {
                op: "backward",
                msg: format!("loss must be a scalar, got {}", self.shape(loss)),
            });
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let mut params = BTreeMap::new();
        for (name, &v) in &self.params {
            let shape = self.shape(v);
            let g = grads[v.0]
                .take()
                .unwrap_or_else(|| vec![T::zero(); shape.numel()]);
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
            params.insert(name.clone(), Tensor::from_raw(shape, g));
        }
        let mut leaves = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.tracked {
                let shape = node.value.shape();
                let g = grads[i]
                    .take()
                    .unwrap_or_else(|| vec![T::zero(); shape.numel()]);
                leaves.insert(Var(i), Tensor::from_raw(shape, g));
            }
        }
        Ok(Gradients { params, leaves })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].tracked {
            return;
        }
        let buf = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.len()]);
        f(buf);
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Conv2d { x, w, b, geom } => {
                let wv = self.value(*w).data();
                let mut dw = vec![T::zero(); wv.len()];
                let mut db = vec![T::zero(); geom.kernel.c];
                let mut dx = self.nodes[x.0]
                    .tracked
                    .then(|| vec![T::zero(); self.value(*x).len()]);
                ops::conv2d_backward(
                    geom,
                    self.value(*x).data(),
                    wv,
                    g,
                    dx.as_deref_mut(),
                    &mut dw,
                    &mut db,
                );
                if let Some(BackwardFault::ScaleConvWeightGrad(k)) = self.fault {
                    let k = T::from_f64(k);
                    dw.iter_mut().for_each(|v| *v = *v * k);
                }
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, |buf| add_into(buf, &dx));
                }
                self.accumulate(grads, *w, |buf| add_into(buf, &dw));
                self.accumulate(grads, *b, |buf| add_into(buf, &db));
            }
            Op::AbsDiff(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                // sign(a - b), with the subgradient at a tie defined as zero.
                let sign: Vec<T> = av
                    .iter()
                    .zip(bv)
                    .zip(g)
                    .map(|((&x, &y), &gv)| {
                        if x > y {
                            gv
                        } else if x < y {
                            -gv
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                self.accumulate(grads, *a, |buf| add_into(buf, &sign));
                self.accumulate(grads, *b, |buf| {
                    buf.iter_mut().zip(&sign).for_each(|(o, &s)| *o = *o - s)
                });
            }
            Op::Add(terms) => {
                for &t in terms {
                    self.accumulate(grads, t, |buf| add_into(buf, g));
                }
            }
            Op::Relu(x) => {
                let y = node.value.data();
                self.accumulate(grads, *x, |buf| {
                    for ((o, &yv), &gv) in buf.iter_mut().zip(y).zip(g) {
                        if yv > T::zero() {
                            *o = *o + gv;
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                self.accumulate(grads, *x, |buf| {
                    for ((o, &m), &gv) in buf.iter_mut().zip(mask).zip(g) {
                        *o = *o + m * gv;
                    }
                });
            }
            Op::GlobalAvgPool(x) => {
                let s = self.shape(*x);
                let inv = T::one() / T::from_f64(s.spatial() as f64);
                self.accumulate(grads, *x, |buf| {
                    for n in 0..s.n {
                        for p in 0..s.spatial() {
                            let row = &mut buf[(n * s.spatial() + p) * s.c..][..s.c];
                            for (o, &gv) in row.iter_mut().zip(&g[n * s.c..(n + 1) * s.c]) {
                                *o = *o + gv * inv;
                            }
                        }
                    }
                });
            }
            Op::Softmax(x) => {
                let s = node.value.shape();
                let p = node.value.data();
                self.accumulate(grads, *x, |buf| {
                    for n in 0..s.n {
                        let pr = &p[n * s.c..(n + 1) * s.c];
                        let gr = &g[n * s.c..(n + 1) * s.c];
                        let dot = pr.iter().zip(gr).fold(T::zero(), |a, (&pv, &gv)| a + pv * gv);
                        for ((o, &pv), &gv) in buf[n * s.c..(n + 1) * s.c].iter_mut().zip(pr).zip(gr) {
                            *o = *o + pv * (gv - dot);
                        }
                    }
                });
            }
            Op::CrossEntropy { p, labels } => {
                let s = self.shape(*p);
                let probs = self.value(*p).data();
                let scale = g[0] / T::from_f64(s.n as f64);
                self.accumulate(grads, *p, |buf| {
                    for (n, &l) in labels.iter().enumerate() {
                        ops::cross_entropy_row_grad(
                            &probs[n * s.c..(n + 1) * s.c],
                            l,
                            scale,
                            &mut buf[n * s.c..(n + 1) * s.c],
                        );
                    }
                });
            }
            Op::Sum(x) => {
                self.accumulate(grads, *x, |buf| buf.iter_mut().for_each(|o| *o = *o + g[0]));
            }
            Op::SumSquares(x) => {
                let xv = self.value(*x).data();
                let two = T::from_f64(2.0) * g[0];
                self.accumulate(grads, *x, |buf| {
                    buf.iter_mut().zip(xv).for_each(|(o, &v)| *o = *o + two * v)
                });
            }
            Op::Scale(x, k) => {
                self.accumulate(grads, *x, |buf| {
                    buf.iter_mut().zip(g).for_each(|(o, &gv)| *o = *o + *k * gv)
                });
            }
        }
    }
}

fn add_into<T: Real>(buf: &mut [T], src: &[T]) {
    buf.iter_mut().zip(src).for_each(|(o, &v)| *o = *o + v);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: Shape, v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf_with_grad(t(Shape::new(1, 2, 2, 1), &[1., -2., 3., 4.]));
        let l = tape.sum(x);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.leaf(x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn abs_diff_of_self_has_zero_grad() {
        let mut tape = Tape::new();
        let x = tape.leaf_with_grad(t(Shape::vector(1, 3), &[1., 2., 3.]));
        let d = tape.abs_diff(x, x).unwrap();
        let l = tape.sum(d);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.leaf(x).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn second_backward_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf_with_grad(Tensor::<f64>::scalar(2.0));
        let l = tape.sum_squares(x);
        tape.backward(l).unwrap();
        assert!(matches!(tape.backward(l), Err(Error::TapeConsumed)));
    }

    #[test]
    fn unreachable_param_gets_zero_grad() {
        let mut tape = Tape::new();
        let a = tape.param("a", &Tensor::<f64>::scalar(3.0));
        let _b = tape.param("b", &Tensor::<f64>::full(Shape::vector(1, 2), 1.0));
        let l = tape.scale(a, 2.0);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.param("a").unwrap().data(), &[2.0]);
        assert_eq!(g.param("b").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn shared_param_accumulates() {
        let mut tape = Tape::new();
        let a = tape.param("w", &Tensor::<f64>::scalar(3.0));
        let a2 = tape.param("w", &Tensor::<f64>::scalar(100.0));
        assert_eq!(a, a2);
        let s = tape.add(&[a, a2]).unwrap();
        let l = tape.sum(s);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.param("w").unwrap().data(), &[2.0]);
    }

    #[test]
    fn tape_records_in_order() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        let y = tape.relu(x);
        assert_eq!(tape.node(y).kind, OpKind::Relu);
        assert_eq!(tape.node(y).inputs, vec![x]);
        assert!(y.index() > x.index());
    }

    #[test]
    fn dropout_eval_and_zero_rate_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(Shape::vector(1, 8), 2.0));
        assert_eq!(tape.dropout(x, 0.5, false, &mut rng).unwrap(), x);
        assert_eq!(tape.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert!(tape.dropout(x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let mut tape = Tape::<f64>::new();
        let p = tape.leaf(t(Shape::vector(1, 3), &[0.2, 0.3, 0.5]));
        assert!(matches!(
            tape.cross_entropy(p, &[3]),
            Err(Error::ClassOutOfRange { index: 3, classes: 3 })
        ));
    }

    #[test]
    fn conv_rejects_non_finite() {
        let mut tape = Tape::<f64>::new();
        let mut xv = Tensor::zeros(Shape::new(1, 3, 3, 1));
        xv.data_mut()[4] = f64::INFINITY;
        let x = tape.leaf(xv);
        let w = tape.leaf(Tensor::zeros(Shape::new(3, 3, 1, 1)));
        let b = tape.leaf(Tensor::zeros(Shape::vector(1, 1)));
        assert!(matches!(tape.conv2d(x, w, b, 1, 1), Err(Error::NonFinite(_))));
    }
}
