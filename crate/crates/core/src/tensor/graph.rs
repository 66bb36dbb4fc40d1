use rand::Rng;

use super::kernels::{self, Conv1dGeom, Conv2dGeom};
use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, geom: Conv2dGeom },
    Conv1d { x: Var, w: Var, b: Var, geom: Conv1dGeom },
    Dense { x: Var, w: Var, b: Var },
    Relu(Var),
    Dropout { x: Var, mask: Vec<S> },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Sum(Var),
    GlobalAvgPool(Var),
    LastStep { x: Var, lengths: Vec<usize> },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<S> },
}

#[derive(Debug, Clone)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
}

/// A recording of forward computations. Nodes are appended in evaluation
/// order, which is also a valid topological order for the backward sweep.
#[derive(Debug, Clone, Default)]
pub struct Graph<S: Element = f32> {
    nodes: Vec<Node<S>>,
}

/// Gradients of a scalar with respect to every node of a graph.
#[derive(Debug, Clone)]
pub struct Gradients<S: Element = f32> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Element> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(msg: String) -> Error {
    Error::Shape(msg)
}

impl<S: Element> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Result<Var> {
        if cfg!(debug_assertions) && !value.all_finite() {
            return Err(Error::Invalid(format!("non-finite value produced by {}", op_name(&op))));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Registers a constant input or a parameter.
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Cross-correlation of `x: N×C×H×W` with `w: O×C×k×k` plus bias `b: O`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 4 || ws.len() != 4 || bs.len() != 1 {
            return Err(shape_err(format!(
                "conv2d expects input N×C×H×W, weights O×C×k×k, bias O; got {xs:?}, {ws:?}, {bs:?}"
            )));
        }
        let geom = Conv2dGeom {
            n: xs[0],
            c: xs[1],
            h: xs[2],
            w: xs[3],
            o: ws[0],
            k: ws[2],
            stride,
            pad,
        };
        if ws[1] != geom.c || ws[3] != geom.k || bs[0] != geom.o {
            return Err(shape_err(format!(
                "conv2d input channels {} vs weight {:?} and bias {:?}",
                geom.c, ws, bs
            )));
        }
        if stride == 0 || geom.h + 2 * pad < geom.k || geom.w + 2 * pad < geom.k {
            return Err(shape_err(format!(
                "conv2d kernel {} with pad {pad} and stride {stride} does not fit input {}×{}",
                geom.k, geom.h, geom.w
            )));
        }
        let out = kernels::conv2d_forward(self.value(x).data(), self.value(w).data(), self.value(b).data(), &geom);
        let value = Tensor::new(&[geom.n, geom.o, geom.out_h(), geom.out_w()], out)?;
        self.push(value, Op::Conv2d { x, w, b, geom })
    }

    /// Causal dilated convolution of `x: N×C×L` with `w: O×C×k`:
    /// `y[t] = Σ_i w[i] · x[t − dilation·i]`, zero-padded on the left.
    pub fn conv1d_causal(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 3 || ws.len() != 3 || bs.len() != 1 {
            return Err(shape_err(format!(
                "conv1d expects input N×C×L, weights O×C×k, bias O; got {xs:?}, {ws:?}, {bs:?}"
            )));
        }
        if ws[1] != xs[1] || bs[0] != ws[0] {
            return Err(shape_err(format!("conv1d input channels {} vs weight {ws:?} and bias {bs:?}", xs[1])));
        }
        if dilation == 0 {
            return Err(Error::Invalid("dilation must be at least 1".into()));
        }
        let geom = Conv1dGeom {
            n: xs[0],
            c: xs[1],
            l: xs[2],
            o: ws[0],
            k: ws[2],
            dilation,
        };
        let out = kernels::conv1d_forward(self.value(x).data(), self.value(w).data(), self.value(b).data(), &geom);
        let value = Tensor::new(&[geom.n, geom.o, geom.l], out)?;
        self.push(value, Op::Conv1d { x, w, b, geom })
    }

    /// `x: N×F` times `w: F×O` plus `b: O`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[0] || ws[1] != bs[0] {
            return Err(shape_err(format!(
                "dense expects N×F, F×O, O; got {xs:?}, {ws:?}, {bs:?}"
            )));
        }
        let (n, f, o) = (xs[0], xs[1], ws[1]);
        let out = kernels::dense_forward(self.value(x).data(), self.value(w).data(), self.value(b).data(), n, f, o);
        let value = Tensor::new(&[n, o], out)?;
        self.push(value, Op::Dense { x, w, b })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let out = Tensor::new(v.shape(), v.data().iter().map(|&a| a.max(S::zero())).collect())?;
        self.push(out, Op::Relu(x))
    }

    /// Inverted dropout: in training, zeroes each element with probability
    /// `p` and scales survivors by `1 / (1 − p)`; identity otherwise.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Invalid(format!("dropout probability must be in [0, 1), got {p}")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = S::from_f64(1.0 / (1.0 - p));
        let v = self.value(x);
        let mask: Vec<S> = (0..v.len())
            .map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep })
            .collect();
        let out = Tensor::new(v.shape(), v.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect())?;
        self.push(out, Op::Dropout { x, mask })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(format!("add of {:?} and {:?}", va.shape(), vb.shape())));
        }
        let out = Tensor::new(va.shape(), va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect())?;
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(format!("mul of {:?} and {:?}", va.shape(), vb.shape())));
        }
        let out = Tensor::new(va.shape(), va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect())?;
        self.push(out, Op::Mul(a, b))
    }

    /// Multiplication by a constant that receives no gradient.
    pub fn scale(&mut self, x: Var, c: S) -> Result<Var> {
        let v = self.value(x);
        let out = Tensor::new(v.shape(), v.data().iter().map(|&a| a * c).collect())?;
        self.push(out, Op::Scale(x, c))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).data().iter().fold(0.0f64, |acc, v| acc + v.as_f64());
        self.push(Tensor::scalar(S::from_f64(total)), Op::Sum(x))
    }

    /// Mean over the spatial axes: `N×C×H×W → N×C`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(shape_err(format!("global_avg_pool expects N×C×H×W, got {s:?}")));
        }
        let plane = s[2] * s[3];
        let inv = 1.0 / plane as f64;
        let out: Vec<S> = self
            .value(x)
            .data()
            .chunks_exact(plane)
            .map(|c| S::from_f64(c.iter().fold(0.0f64, |a, v| a + v.as_f64()) * inv))
            .collect();
        self.push(Tensor::new(&[s[0], s[1]], out)?, Op::GlobalAvgPool(x))
    }

    /// Picks `x[n, :, lengths[n] − 1]`: `N×C×L → N×C`.
    pub fn last_step(&mut self, x: Var, lengths: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || lengths.len() != s[0] {
            return Err(shape_err(format!(
                "last_step expects N×C×L with N lengths; got {s:?} and {} lengths",
                lengths.len()
            )));
        }
        if let Some(&bad) = lengths.iter().find(|&&l| l == 0 || l > s[2]) {
            return Err(Error::Invalid(format!("sequence length {bad} outside 1..={}", s[2])));
        }
        let (c, l) = (s[1], s[2]);
        let v = self.value(x).data();
        let mut out = Vec::with_capacity(s[0] * c);
        for (n, &len) in lengths.iter().enumerate() {
            for ci in 0..c {
                out.push(v[(n * c + ci) * l + len - 1]);
            }
        }
        self.push(
            Tensor::new(&[s[0], c], out)?,
            Op::LastStep {
                x,
                lengths: lengths.to_vec(),
            },
        )
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits)`.
    /// Accumulates in `f64` and subtracts the row maximum for stability.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(shape_err(format!(
                "softmax_cross_entropy expects N×K logits with N labels; got {s:?} and {} labels",
                labels.len()
            )));
        }
        let k = s[1];
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::Invalid(format!("label {bad} out of range for {k} classes")));
        }
        let mut probs = Vec::with_capacity(s[0] * k);
        let mut total = 0.0f64;
        for (row, &y) in self.value(logits).data().chunks_exact(k).zip(labels) {
            let p = softmax_row(row);
            total -= p[y].ln();
            probs.extend(p.iter().map(|&v| S::from_f64(v)));
        }
        let loss = total / labels.len() as f64;
        self.push(
            Tensor::scalar(S::from_f64(loss)),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        )
    }

    /// Probabilities stored by a cross-entropy node, `N×K` row-major.
    pub fn probabilities(&self, v: Var) -> Option<&[S]> {
        match &self.nodes[v.0].op {
            Op::SoftmaxCrossEntropy { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Reverse sweep from a scalar. Each call starts from fresh zero
    /// gradients, so repeated calls on the same graph agree exactly.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), S::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d { x, w, b, geom } => {
                    let (dx, dw, db) =
                        kernels::conv2d_backward(self.value(*x).data(), self.value(*w).data(), g.data(), geom);
                    accumulate(&mut grads, *x, self.shape(*x), dx);
                    accumulate(&mut grads, *w, self.shape(*w), dw);
                    accumulate(&mut grads, *b, self.shape(*b), db);
                }
                Op::Conv1d { x, w, b, geom } => {
                    let (dx, dw, db) =
                        kernels::conv1d_backward(self.value(*x).data(), self.value(*w).data(), g.data(), geom);
                    accumulate(&mut grads, *x, self.shape(*x), dx);
                    accumulate(&mut grads, *w, self.shape(*w), dw);
                    accumulate(&mut grads, *b, self.shape(*b), db);
                }
                Op::Dense { x, w, b } => {
                    let xs = self.shape(*x);
                    let (n, f, o) = (xs[0], xs[1], self.shape(*w)[1]);
                    let (dx, dw, db) =
                        kernels::dense_backward(self.value(*x).data(), self.value(*w).data(), g.data(), n, f, o);
                    accumulate(&mut grads, *x, self.shape(*x), dx);
                    accumulate(&mut grads, *w, self.shape(*w), dw);
                    accumulate(&mut grads, *b, self.shape(*b), db);
                }
                Op::Relu(x) => {
                    let d = self
                        .value(*x)
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&a, &gv)| if a > S::zero() { gv } else { S::zero() })
                        .collect();
                    accumulate(&mut grads, *x, self.shape(*x), d);
                }
                Op::Dropout { x, mask } => {
                    let d = g.data().iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
                    accumulate(&mut grads, *x, self.shape(*x), d);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, self.shape(*a), g.data().to_vec());
                    accumulate(&mut grads, *b, self.shape(*b), g.data().to_vec());
                }
                Op::Mul(a, b) => {
                    let da = g.data().iter().zip(self.value(*b).data()).map(|(&gv, &v)| gv * v).collect();
                    let db = g.data().iter().zip(self.value(*a).data()).map(|(&gv, &v)| gv * v).collect();
                    accumulate(&mut grads, *a, self.shape(*a), da);
                    accumulate(&mut grads, *b, self.shape(*b), db);
                }
                Op::Scale(x, c) => {
                    let d = g.data().iter().map(|&gv| gv * *c).collect();
                    accumulate(&mut grads, *x, self.shape(*x), d);
                }
                Op::Sum(x) => {
                    let d = vec![g.item(); self.value(*x).len()];
                    accumulate(&mut grads, *x, self.shape(*x), d);
                }
                Op::GlobalAvgPool(x) => {
                    let s = self.shape(*x);
                    let plane = s[2] * s[3];
                    let inv = S::from_f64(1.0 / plane as f64);
                    let d = g.data().iter().flat_map(|&gv| std::iter::repeat_n(gv * inv, plane)).collect();
                    accumulate(&mut grads, *x, s, d);
                }
                Op::LastStep { x, lengths } => {
                    let s = self.shape(*x);
                    let (c, l) = (s[1], s[2]);
                    let mut d = vec![S::zero(); self.value(*x).len()];
                    for (n, &len) in lengths.iter().enumerate() {
                        for ci in 0..c {
                            d[(n * c + ci) * l + len - 1] = g.data()[n * c + ci];
                        }
                    }
                    accumulate(&mut grads, *x, s, d);
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let k = self.shape(*logits)[1];
                    let scale = g.item() / S::from_f64(labels.len() as f64);
                    let mut d: Vec<S> = probs.iter().map(|&p| p * scale).collect();
                    for (n, &y) in labels.iter().enumerate() {
                        d[n * k + y] = d[n * k + y] - scale;
                    }
                    accumulate(&mut grads, *logits, self.shape(*logits), d);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<S: Element>(grads: &mut [Option<Tensor<S>>], v: Var, shape: &[usize], d: Vec<S>) {
    let t = Tensor::new(shape, d).expect("gradient shape matches its node");
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&t),
        slot @ None => *slot = Some(t),
    }
}

fn op_name<S>(op: &Op<S>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Conv2d { .. } => "conv2d",
        Op::Conv1d { .. } => "conv1d_causal",
        Op::Dense { .. } => "dense",
        Op::Relu(_) => "relu",
        Op::Dropout { .. } => "dropout",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::Sum(_) => "sum",
        Op::GlobalAvgPool(_) => "global_avg_pool",
        Op::LastStep { .. } => "last_step",
        Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
    }
}

/// Numerically stable softmax of one row, evaluated in `f64`.
pub(crate) fn softmax_row<S: Element>(row: &[S]) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
    let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
