//! Reverse-mode differentiation over a per-batch recorded computation graph.
//!
//! A [`Tape`] is a Wengert list of matrix-valued nodes. Values are dense
//! `Array2<f64>` with the batch on rows. Callers record the forward pass
//! through the op-builder methods, then call [`Tape::backward`] on a scalar
//! (1x1) loss node to get gradients for every recorded node that requires
//! them. Gradient flow is pruned at nodes whose ancestors are all constants,
//! so frozen networks can sit on the differentiation path for free.

use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Differentiable input (parameters, reparameterized noise carriers).
    Leaf,
    /// Non-differentiable input (data, targets, frozen values).
    Constant,
    /// `y = x ? w^T + b` with `w: (out, in)` and `b: (1, out)` broadcast
    /// over rows.
    Linear { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `y = mul * x + add`, elementwise.
    Affine { p: Var, mul: f64 },
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Square(Var),
    /// Elementwise clamp; gradient passes only strictly inside the bounds.
    Clamp { p: Var, lo: f64, hi: f64 },
    /// Horizontal concatenation `[a | b]`.
    HCat(Var, Var),
    /// Columns `start..end` of the parent.
    SliceCols { p: Var, start: usize, end: usize },
    /// Row-wise sum: `(B, n) -> (B, 1)`.
    SumRows(Var),
    /// Sum of all entries: `(B, n) -> (1, 1)`.
    SumAll(Var),
    /// Mean of all entries: `(B, n) -> (1, 1)`.
    MeanAll(Var),
    /// `y[i, k] = x[i, k] - v[i, 0]` for a column vector `v`.
    SubColBroadcast { x: Var, v: Var },
    /// Row-wise log-sum-exp: `(B, K) -> (B, 1)`, numerically stable.
    LogSumExpRows(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation graph for one batch.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`. Zero matrices are
    /// materialized lazily, so a node off the loss path returns `None`.
    pub fn get(&self, var: Var) -> Option<&Array2<f64>> {
        self.grads[var.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, var: Var) -> &Array2<f64> {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn child_requires(&self, parents: &[Var]) -> bool {
        parents.iter().any(|p| self.nodes[p.0].requires_grad)
    }

    /// Differentiable input node.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable input node.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// `x ? w^T + b` with `w: (out, in)`, `b: (1, out)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xr, xc) = self.value(x).dim();
        let (wo, wi) = self.value(w).dim();
        let (br, bo) = self.value(b).dim();
        assert_eq!(xc, wi, "linear: input width {xc} vs weight fan-in {wi}");
        assert_eq!((br, bo), (1, wo), "linear: bias shape ({br},{bo})");
        let mut y = self.value(x).dot(&self.value(w).t());
        y += &self.value(b).broadcast((xr, wo)).unwrap();
        let req = self.child_requires(&[x, w, b]);
        self.push(y, Op::Linear { x, w, b }, req)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add: shape");
        let y = self.value(a) + self.value(b);
        let req = self.child_requires(&[a, b]);
        self.push(y, Op::Add(a, b), req)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "sub: shape");
        let y = self.value(a) - self.value(b);
        let req = self.child_requires(&[a, b]);
        self.push(y, Op::Sub(a, b), req)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "mul: shape");
        let y = self.value(a) * self.value(b);
        let req = self.child_requires(&[a, b]);
        self.push(y, Op::Mul(a, b), req)
    }

    pub fn affine(&mut self, p: Var, mul: f64, add: f64) -> Var {
        let y = self.value(p).mapv(|v| mul * v + add);
        let req = self.child_requires(&[p]);
        self.push(y, Op::Affine { p, mul }, req)
    }

    pub fn scale(&mut self, p: Var, c: f64) -> Var {
        self.affine(p, c, 0.0)
    }

    pub fn tanh(&mut self, p: Var) -> Var {
        let y = self.value(p).mapv(f64::tanh);
        let req = self.child_requires(&[p]);
        self.push(y, Op::Tanh(p), req)
    }

    pub fn relu(&mut self, p: Var) -> Var {
        let y = self.value(p).mapv(|v| v.max(0.0));
        let req = self.child_requires(&[p]);
        self.push(y, Op::Relu(p), req)
    }

    pub fn exp(&mut self, p: Var) -> Var {
        let y = self.value(p).mapv(f64::exp);
        let req = self.child_requires(&[p]);
        self.push(y, Op::Exp(p), req)
    }

    pub fn square(&mut self, p: Var) -> Var {
        let y = self.value(p).mapv(|v| v * v);
        let req = self.child_requires(&[p]);
        self.push(y, Op::Square(p), req)
    }

    pub fn clamp(&mut self, p: Var, lo: f64, hi: f64) -> Var {
        let y = self.value(p).mapv(|v| v.clamp(lo, hi));
        let req = self.child_requires(&[p]);
        self.push(y, Op::Clamp { p, lo, hi }, req)
    }

    pub fn hcat(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.value(a).dim();
        let (br, bc) = self.value(b).dim();
        assert_eq!(ar, br, "hcat: row counts {ar} vs {br}");
        let mut y = Array2::zeros((ar, ac + bc));
        y.slice_mut(s![.., ..ac]).assign(self.value(a));
        y.slice_mut(s![.., ac..]).assign(self.value(b));
        let req = self.child_requires(&[a, b]);
        self.push(y, Op::HCat(a, b), req)
    }

    pub fn slice_cols(&mut self, p: Var, start: usize, end: usize) -> Var {
        let (_, c) = self.value(p).dim();
        assert!(start < end && end <= c, "slice_cols: {start}..{end} of {c}");
        let y = self.value(p).slice(s![.., start..end]).to_owned();
        let req = self.child_requires(&[p]);
        self.push(y, Op::SliceCols { p, start, end }, req)
    }

    pub fn sum_rows(&mut self, p: Var) -> Var {
        let y = self.value(p).sum_axis(Axis(1)).insert_axis(Axis(1));
        let req = self.child_requires(&[p]);
        self.push(y, Op::SumRows(p), req)
    }

    pub fn sum_all(&mut self, p: Var) -> Var {
        let y = Array2::from_elem((1, 1), self.value(p).sum());
        let req = self.child_requires(&[p]);
        self.push(y, Op::SumAll(p), req)
    }

    pub fn mean_all(&mut self, p: Var) -> Var {
        let n = self.value(p).len() as f64;
        let y = Array2::from_elem((1, 1), self.value(p).sum() / n);
        let req = self.child_requires(&[p]);
        self.push(y, Op::MeanAll(p), req)
    }

    pub fn sub_col_broadcast(&mut self, x: Var, v: Var) -> Var {
        let (xr, _) = self.value(x).dim();
        let (vr, vc) = self.value(v).dim();
        assert_eq!((vr, vc), (xr, 1), "sub_col_broadcast: column shape");
        let y = self.value(x) - &self.value(v).broadcast(self.value(x).dim()).unwrap();
        let req = self.child_requires(&[x, v]);
        self.push(y, Op::SubColBroadcast { x, v }, req)
    }

    pub fn log_sum_exp_rows(&mut self, p: Var) -> Var {
        let x = self.value(p);
        let (rows, _) = x.dim();
        let mut y = Array2::zeros((rows, 1));
        for (i, row) in x.outer_iter().enumerate() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let s: f64 = row.iter().map(|&v| (v - m).exp()).sum();
            y[[i, 0]] = m + s.ln();
        }
        let req = self.child_requires(&[p]);
        self.push(y, Op::LogSumExpRows(p), req)
    }

    /// Reverse pass from a scalar loss node. Errors if `loss` is not 1x1.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).dim() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss node, got shape {:?}",
                self.value(loss).dim()
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Array2::from_elem((1, 1), 1.0));

        for i in (0..=loss.0).rev() {
            if grads[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let gy = grads[i].take().unwrap();
            self.propagate(i, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(grads: &mut [Option<Array2<f64>>], var: Var, delta: Array2<f64>) {
        match &mut grads[var.0] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    fn wants(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn propagate(&self, i: usize, gy: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        match self.nodes[i].op {
            Op::Leaf | Op::Constant => {}
            Op::Linear { x, w, b } => {
                if self.wants(x) {
                    Self::accumulate(grads, x, gy.dot(self.value(w)));
                }
                if self.wants(w) {
                    Self::accumulate(grads, w, gy.t().dot(self.value(x)));
                }
                if self.wants(b) {
                    Self::accumulate(grads, b, gy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Add(a, b) => {
                if self.wants(a) {
                    Self::accumulate(grads, a, gy.clone());
                }
                if self.wants(b) {
                    Self::accumulate(grads, b, gy.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(a) {
                    Self::accumulate(grads, a, gy.clone());
                }
                if self.wants(b) {
                    Self::accumulate(grads, b, -gy);
                }
            }
            Op::Mul(a, b) => {
                if self.wants(a) {
                    Self::accumulate(grads, a, gy * self.value(b));
                }
                if self.wants(b) {
                    Self::accumulate(grads, b, gy * self.value(a));
                }
            }
            Op::Affine { p, mul, .. } => {
                if self.wants(p) {
                    Self::accumulate(grads, p, gy.mapv(|v| v * mul));
                }
            }
            Op::Tanh(p) => {
                if self.wants(p) {
                    let y = &self.nodes[i].value;
                    Self::accumulate(grads, p, gy * &y.mapv(|v| 1.0 - v * v));
                }
            }
            Op::Relu(p) => {
                if self.wants(p) {
                    let mask = self.value(p).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    Self::accumulate(grads, p, gy * &mask);
                }
            }
            Op::Exp(p) => {
                if self.wants(p) {
                    Self::accumulate(grads, p, gy * &self.nodes[i].value);
                }
            }
            Op::Square(p) => {
                if self.wants(p) {
                    Self::accumulate(grads, p, gy * &self.value(p).mapv(|v| 2.0 * v));
                }
            }
            Op::Clamp { p, lo, hi } => {
                if self.wants(p) {
                    let mask = self
                        .value(p)
                        .mapv(|v| if v > lo && v < hi { 1.0 } else { 0.0 });
                    Self::accumulate(grads, p, gy * &mask);
                }
            }
            Op::HCat(a, b) => {
                let ac = self.value(a).dim().1;
                if self.wants(a) {
                    Self::accumulate(grads, a, gy.slice(s![.., ..ac]).to_owned());
                }
                if self.wants(b) {
                    Self::accumulate(grads, b, gy.slice(s![.., ac..]).to_owned());
                }
            }
            Op::SliceCols { p, start, end } => {
                if self.wants(p) {
                    let mut d = Array2::zeros(self.value(p).dim());
                    d.slice_mut(s![.., start..end]).assign(gy);
                    Self::accumulate(grads, p, d);
                }
            }
            Op::SumRows(p) => {
                if self.wants(p) {
                    let dim = self.value(p).dim();
                    Self::accumulate(grads, p, gy.broadcast(dim).unwrap().to_owned());
                }
            }
            Op::SumAll(p) => {
                if self.wants(p) {
                    let dim = self.value(p).dim();
                    Self::accumulate(grads, p, Array2::from_elem(dim, gy[[0, 0]]));
                }
            }
            Op::MeanAll(p) => {
                if self.wants(p) {
                    let dim = self.value(p).dim();
                    let n = (dim.0 * dim.1) as f64;
                    Self::accumulate(grads, p, Array2::from_elem(dim, gy[[0, 0]] / n));
                }
            }
            Op::SubColBroadcast { x, v } => {
                if self.wants(x) {
                    Self::accumulate(grads, x, gy.clone());
                }
                if self.wants(v) {
                    let d = gy.sum_axis(Axis(1)).insert_axis(Axis(1));
                    Self::accumulate(grads, v, -d);
                }
            }
            Op::LogSumExpRows(p) => {
                if self.wants(p) {
                    let x = self.value(p);
                    let y = &self.nodes[i].value;
                    let softmax = x - &y.broadcast(x.dim()).unwrap();
                    let softmax = softmax.mapv(f64::exp);
                    Self::accumulate(grads, p, &gy.broadcast(x.dim()).unwrap() * &softmax);
                }
            }
        }
    }
}
