//! Dense 2-D tensors with reverse-mode differentiation.
//!
//! Every tensor is a matrix (scalars are 1x1, vectors are 1xN or Nx1) holding
//! row-major `f64` data. Differentiable ops record their parents and a
//! backward closure; [`Tensor::backward`] walks the graph in reverse creation
//! order and accumulates gradients into every node with `requires_grad`.
//! Repeated backward calls accumulate; leaves are re-created per step.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::HashSet;
use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};

thread_local! {
    static NEXT_ID: RefCell<u64> = const { RefCell::new(0) };
}

fn fresh_id() -> u64 {
    NEXT_ID.with(|c| {
        let mut v = c.borrow_mut();
        *v += 1;
        *v
    })
}

type BackwardFn = Box<dyn Fn(&[f64], &[f64])>;

struct Op {
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Node {
    id: u64,
    rows: usize,
    cols: usize,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    op: Option<Op>,
}

/// A 2-D matrix node in the computation graph.
#[derive(Clone)]
pub struct Tensor {
    node: Rc<Node>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &(self.rows(), self.cols()))
            .field("requires_grad", &self.requires_grad())
            .finish()
    }
}

impl Tensor {
    fn make(rows: usize, cols: usize, data: Vec<f64>, requires_grad: bool, op: Option<Op>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match shape {}x{}",
            data.len(),
            rows,
            cols
        );
        Tensor {
            node: Rc::new(Node {
                id: fresh_id(),
                rows,
                cols,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                op,
            }),
        }
    }

    /// Non-differentiable tensor holding fixed values.
    pub fn constant(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::make(rows, cols, data, false, None)
    }

    /// Differentiable leaf; gradients accumulate here.
    pub fn leaf(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::make(rows, cols, data, true, None)
    }

    pub fn scalar(v: f64) -> Self {
        Self::constant(1, 1, vec![v])
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(rows, cols, vec![0.0; rows * cols])
    }

    pub fn full(rows: usize, cols: usize, v: f64) -> Self {
        Self::constant(rows, cols, vec![v; rows * cols])
    }

    pub fn randn<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| gauss(rng) * std).collect();
        Self::constant(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.node.rows
    }

    pub fn cols(&self) -> usize {
        self.node.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.node.rows, self.node.cols)
    }

    pub fn len(&self) -> usize {
        self.node.rows * self.node.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// Snapshot of the values (row-major).
    pub fn data(&self) -> Vec<f64> {
        self.node.data.borrow().clone()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(r < self.rows() && c < self.cols(), "index out of range");
        self.node.data.borrow()[r * self.cols() + c]
    }

    /// Value of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape(), (1, 1), "item() requires a scalar tensor");
        self.node.data.borrow()[0]
    }

    /// Accumulated gradient, if backward has reached this node.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    /// Overwrite values in place. Only sensible for leaves/constants between steps.
    pub fn set_data(&self, data: Vec<f64>) {
        assert_eq!(data.len(), self.len(), "set_data length mismatch");
        *self.node.data.borrow_mut() = data;
    }

    /// Copy of the values as a fresh constant, cut off from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::constant(self.rows(), self.cols(), self.data())
    }

    fn accum(&self, contrib: &[f64]) {
        if !self.node.requires_grad {
            return;
        }
        let mut g = self.node.grad.borrow_mut();
        match g.as_mut() {
            Some(buf) => {
                for (a, b) in buf.iter_mut().zip(contrib) {
                    *a += b;
                }
            }
            None => *g = Some(contrib.to_vec()),
        }
    }

    fn unary(
        &self,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        backward: impl Fn(&Tensor, &[f64], &[f64]) + 'static,
    ) -> Tensor {
        if !self.requires_grad() {
            return Tensor::constant(rows, cols, data);
        }
        let parent = self.clone();
        let p = self.clone();
        Tensor::make(
            rows,
            cols,
            data,
            true,
            Some(Op {
                parents: vec![parent],
                backward: Box::new(move |g, out| backward(&p, g, out)),
            }),
        )
    }

    /// Sum of the gradients of the loss (must be 1x1) with respect to every
    /// `requires_grad` node reachable from it. Accumulates on repeat calls.
    pub fn backward(&self) -> Result<()> {
        if self.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {}x{}",
                self.rows(),
                self.cols()
            )));
        }
        // Nodes were created in topological order, so descending id is a
        // valid reverse-topological order.
        let mut seen: HashSet<u64> = HashSet::new();
        let mut order: Vec<Tensor> = Vec::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !t.node.requires_grad || !seen.insert(t.node.id) {
                continue;
            }
            if let Some(op) = &t.node.op {
                for p in &op.parents {
                    stack.push(p.clone());
                }
            }
            order.push(t);
        }
        order.sort_by(|a, b| match b.node.id.cmp(&a.node.id) {
            Ordering::Equal => Ordering::Equal,
            o => o,
        });
        // Interior grads are scratch space for this walk; only leaves keep
        // accumulating across backward calls.
        for t in &order {
            if t.node.op.is_some() {
                *t.node.grad.borrow_mut() = None;
            }
        }
        self.accum(&[1.0]);
        for t in &order {
            if let Some(op) = &t.node.op {
                let g = t.node.grad.borrow().clone();
                if let Some(g) = g {
                    let out = t.node.data.borrow();
                    (op.backward)(&g, &out);
                }
            }
        }
        Ok(())
    }

    // ----- linear algebra -----

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (m, k) = self.shape();
        let (k2, n) = other.shape();
        assert_eq!(
            k, k2,
            "matmul shape mismatch: {}x{} vs {}x{}",
            m, k, k2, n
        );
        let out = matmul_raw(&self.node.data.borrow(), &other.node.data.borrow(), m, k, n);
        if !self.requires_grad() && !other.requires_grad() {
            return Tensor::constant(m, n, out);
        }
        let a = self.clone();
        let b = other.clone();
        Tensor::make(
            m,
            n,
            out,
            true,
            Some(Op {
                parents: vec![self.clone(), other.clone()],
                backward: Box::new(move |g, _| {
                    if a.requires_grad() {
                        // dA = G * B^T
                        let bd = b.node.data.borrow();
                        let bt = transpose_raw(&bd, k, n);
                        let da = matmul_raw(g, &bt, m, n, k);
                        a.accum(&da);
                    }
                    if b.requires_grad() {
                        // dB = A^T * G
                        let ad = a.node.data.borrow();
                        let at = transpose_raw(&ad, m, k);
                        let db = matmul_raw(&at, g, k, m, n);
                        b.accum(&db);
                    }
                }),
            }),
        )
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = self.shape();
        let out = transpose_raw(&self.node.data.borrow(), r, c);
        self.unary(c, r, out, move |p, g, _| {
            p.accum(&transpose_raw(g, c, r));
        })
    }

    // ----- broadcast binary ops -----

    pub fn add(&self, other: &Tensor) -> Tensor {
        binary(self, other, "add", |a, b| a + b, |_, _, g| g, |_, _, g| g)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        binary(self, other, "sub", |a, b| a - b, |_, _, g| g, |_, _, g| -g)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        binary(
            self,
            other,
            "mul",
            |a, b| a * b,
            |_, b, g| g * b,
            |a, _, g| g * a,
        )
    }

    pub fn div(&self, other: &Tensor) -> Tensor {
        binary(
            self,
            other,
            "div",
            |a, b| a / b,
            |_, b, g| g / b,
            |a, b, g| -g * a / (b * b),
        )
    }

    // ----- scalar / elementwise -----

    pub fn scale(&self, c: f64) -> Tensor {
        self.affine(c, 0.0)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.affine(1.0, c)
    }

    pub fn neg(&self) -> Tensor {
        self.affine(-1.0, 0.0)
    }

    /// `x * mul + add` elementwise with constant coefficients.
    pub fn affine(&self, mul: f64, add: f64) -> Tensor {
        let data = self.node.data.borrow().iter().map(|x| x * mul + add).collect();
        self.unary(self.rows(), self.cols(), data, move |p, g, _| {
            p.accum(&g.iter().map(|v| v * mul).collect::<Vec<_>>());
        })
    }

    pub fn relu(&self) -> Tensor {
        let data = self.node.data.borrow().iter().map(|x| x.max(0.0)).collect();
        self.unary(self.rows(), self.cols(), data, |p, g, _| {
            let x = p.node.data.borrow();
            p.accum(
                &g.iter()
                    .zip(x.iter())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect::<Vec<_>>(),
            );
        })
    }

    pub fn leaky_relu(&self, alpha: f64) -> Tensor {
        let data = self
            .node
            .data
            .borrow()
            .iter()
            .map(|&x| if x > 0.0 { x } else { alpha * x })
            .collect();
        self.unary(self.rows(), self.cols(), data, move |p, g, _| {
            let x = p.node.data.borrow();
            p.accum(
                &g.iter()
                    .zip(x.iter())
                    .map(|(g, x)| if *x > 0.0 { *g } else { alpha * g })
                    .collect::<Vec<_>>(),
            );
        })
    }

    pub fn exp(&self) -> Tensor {
        let data = self.node.data.borrow().iter().map(|x| x.exp()).collect();
        self.unary(self.rows(), self.cols(), data, |p, g, out| {
            p.accum(&g.iter().zip(out).map(|(g, o)| g * o).collect::<Vec<_>>());
        })
    }

    pub fn ln(&self) -> Tensor {
        let data = self.node.data.borrow().iter().map(|x| x.ln()).collect();
        self.unary(self.rows(), self.cols(), data, |p, g, _| {
            let x = p.node.data.borrow();
            p.accum(&g.iter().zip(x.iter()).map(|(g, x)| g / x).collect::<Vec<_>>());
        })
    }

    pub fn sqrt(&self) -> Tensor {
        let data = self.node.data.borrow().iter().map(|x| x.sqrt()).collect();
        self.unary(self.rows(), self.cols(), data, |p, g, out| {
            p.accum(
                &g.iter()
                    .zip(out)
                    .map(|(g, o)| if *o == 0.0 { 0.0 } else { g * 0.5 / o })
                    .collect::<Vec<_>>(),
            );
        })
    }

    pub fn powf(&self, e: f64) -> Tensor {
        let data = self.node.data.borrow().iter().map(|x| x.powf(e)).collect();
        self.unary(self.rows(), self.cols(), data, move |p, g, _| {
            let x = p.node.data.borrow();
            p.accum(
                &g.iter()
                    .zip(x.iter())
                    .map(|(g, x)| g * e * x.powf(e - 1.0))
                    .collect::<Vec<_>>(),
            );
        })
    }

    pub fn sigmoid(&self) -> Tensor {
        let data = self
            .node
            .data
            .borrow()
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        self.unary(self.rows(), self.cols(), data, |p, g, out| {
            p.accum(
                &g.iter()
                    .zip(out)
                    .map(|(g, o)| g * o * (1.0 - o))
                    .collect::<Vec<_>>(),
            );
        })
    }

    /// Clamp values to `[lo, hi]`; gradient passes only strictly inside the range.
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        let data = self.node.data.borrow().iter().map(|x| x.clamp(lo, hi)).collect();
        self.unary(self.rows(), self.cols(), data, move |p, g, _| {
            let x = p.node.data.borrow();
            p.accum(
                &g.iter()
                    .zip(x.iter())
                    .map(|(g, x)| if *x > lo && *x < hi { *g } else { 0.0 })
                    .collect::<Vec<_>>(),
            );
        })
    }

    // ----- reductions -----

    pub fn sum(&self) -> Tensor {
        let s: f64 = self.node.data.borrow().iter().sum();
        let (r, c) = self.shape();
        self.unary(1, 1, vec![s], move |p, g, _| {
            p.accum(&vec![g[0]; r * c]);
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum along an axis: axis 0 collapses rows (result 1xC), axis 1 collapses
    /// columns (result Rx1).
    pub fn sum_axis(&self, axis: usize) -> Tensor {
        let (r, c) = self.shape();
        let d = self.node.data.borrow();
        match axis {
            0 => {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        out[j] += d[i * c + j];
                    }
                }
                drop(d);
                self.unary(1, c, out, move |p, g, _| {
                    let mut dg = vec![0.0; r * c];
                    for i in 0..r {
                        dg[i * c..(i + 1) * c].copy_from_slice(g);
                    }
                    p.accum(&dg);
                })
            }
            1 => {
                let mut out = vec![0.0; r];
                for i in 0..r {
                    out[i] = d[i * c..(i + 1) * c].iter().sum();
                }
                drop(d);
                self.unary(r, 1, out, move |p, g, _| {
                    let mut dg = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            dg[i * c + j] = g[i];
                        }
                    }
                    p.accum(&dg);
                })
            }
            _ => panic!("sum_axis: axis must be 0 or 1"),
        }
    }

    // ----- row-structured ops -----

    /// Row-wise softmax with max-shift for stability. Rows sum to 1.
    pub fn softmax_rows(&self) -> Tensor {
        let (r, c) = self.shape();
        let d = self.node.data.borrow();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &d[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..c {
                let e = (row[j] - m).exp();
                out[i * c + j] = e;
                z += e;
            }
            for j in 0..c {
                out[i * c + j] /= z;
            }
        }
        drop(d);
        self.unary(r, c, out, move |p, g, out| {
            let mut dg = vec![0.0; r * c];
            for i in 0..r {
                let o = &out[i * c..(i + 1) * c];
                let gr = &g[i * c..(i + 1) * c];
                let dot: f64 = o.iter().zip(gr).map(|(o, g)| o * g).sum();
                for j in 0..c {
                    dg[i * c + j] = o[j] * (gr[j] - dot);
                }
            }
            p.accum(&dg);
        })
    }

    /// Row-wise log-softmax.
    pub fn log_softmax_rows(&self) -> Tensor {
        let (r, c) = self.shape();
        let d = self.node.data.borrow();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &d[i * c..(i + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
            let lz = m + z.ln();
            for j in 0..c {
                out[i * c + j] = row[j] - lz;
            }
        }
        drop(d);
        self.unary(r, c, out, move |p, g, out| {
            let mut dg = vec![0.0; r * c];
            for i in 0..r {
                let o = &out[i * c..(i + 1) * c];
                let gr = &g[i * c..(i + 1) * c];
                let gsum: f64 = gr.iter().sum();
                for j in 0..c {
                    dg[i * c + j] = gr[j] - o[j].exp() * gsum;
                }
            }
            p.accum(&dg);
        })
    }

    /// Per-row standardization `(x - mean) / sqrt(var + eps)`; affine gain and
    /// bias are applied by the caller.
    pub fn layer_norm_rows(&self, eps: f64) -> Tensor {
        let (r, c) = self.shape();
        let d = self.node.data.borrow();
        let n = c as f64;
        let mut out = vec![0.0; r * c];
        let mut stds = vec![0.0; r];
        for i in 0..r {
            let row = &d[i * c..(i + 1) * c];
            let mu: f64 = row.iter().sum::<f64>() / n;
            let var: f64 = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
            let std = (var + eps).sqrt();
            stds[i] = std;
            for j in 0..c {
                out[i * c + j] = (row[j] - mu) / std;
            }
        }
        drop(d);
        self.unary(r, c, out, move |p, g, out| {
            let mut dg = vec![0.0; r * c];
            for i in 0..r {
                let xh = &out[i * c..(i + 1) * c];
                let gr = &g[i * c..(i + 1) * c];
                let gmean: f64 = gr.iter().sum::<f64>() / n;
                let gxmean: f64 = gr.iter().zip(xh).map(|(g, x)| g * x).sum::<f64>() / n;
                for j in 0..c {
                    dg[i * c + j] = (gr[j] - gmean - xh[j] * gxmean) / stds[i];
                }
            }
            p.accum(&dg);
        })
    }

    /// Inverted dropout: identity in eval mode, kept values scaled by
    /// `1/(1-p)` in training mode.
    pub fn dropout<R: Rng>(&self, p: f64, training: bool, rng: &mut R) -> Result<Tensor> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!(
                "dropout rate must satisfy 0 <= p < 1, got {p}"
            )));
        }
        if !training || p == 0.0 {
            return Ok(self.clone());
        }
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..self.len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data = self
            .node
            .data
            .borrow()
            .iter()
            .zip(&mask)
            .map(|(x, m)| x * m)
            .collect();
        Ok(self.unary(self.rows(), self.cols(), data, move |p, g, _| {
            p.accum(&g.iter().zip(&mask).map(|(g, m)| g * m).collect::<Vec<_>>());
        }))
    }

    // ----- shape surgery -----

    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor {
        let (r, c) = self.shape();
        assert!(start <= end && end <= r, "slice_rows range out of bounds");
        let data = self.node.data.borrow()[start * c..end * c].to_vec();
        self.unary(end - start, c, data, move |p, g, _| {
            let mut dg = vec![0.0; r * c];
            dg[start * c..end * c].copy_from_slice(g);
            p.accum(&dg);
        })
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Tensor {
        let (r, c) = self.shape();
        assert!(start <= end && end <= c, "slice_cols range out of bounds");
        let w = end - start;
        let d = self.node.data.borrow();
        let mut out = vec![0.0; r * w];
        for i in 0..r {
            out[i * w..(i + 1) * w].copy_from_slice(&d[i * c + start..i * c + end]);
        }
        drop(d);
        self.unary(r, w, out, move |p, g, _| {
            let mut dg = vec![0.0; r * c];
            for i in 0..r {
                dg[i * c + start..i * c + end].copy_from_slice(&g[i * w..(i + 1) * w]);
            }
            p.accum(&dg);
        })
    }

    /// Gather rows by index (duplicates allowed); backward scatter-adds.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let (r, c) = self.shape();
        for &i in idx {
            assert!(i < r, "select_rows index {i} out of range for {r} rows");
        }
        let d = self.node.data.borrow();
        let mut out = vec![0.0; idx.len() * c];
        for (k, &i) in idx.iter().enumerate() {
            out[k * c..(k + 1) * c].copy_from_slice(&d[i * c..(i + 1) * c]);
        }
        drop(d);
        let idx = idx.to_vec();
        self.unary(idx.len(), c, out, move |p, g, _| {
            let mut dg = vec![0.0; r * c];
            for (k, &i) in idx.iter().enumerate() {
                for j in 0..c {
                    dg[i * c + j] += g[k * c + j];
                }
            }
            p.accum(&dg);
        })
    }

    pub fn concat_rows(parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_rows needs at least one tensor");
        let c = parts[0].cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            assert_eq!(p.cols(), c, "concat_rows column mismatch: {} vs {}", p.cols(), c);
            rows += p.rows();
            data.extend_from_slice(&p.node.data.borrow());
        }
        let any_grad = parts.iter().any(|p| p.requires_grad());
        if !any_grad {
            return Tensor::constant(rows, c, data);
        }
        let owned: Vec<Tensor> = parts.to_vec();
        let sizes: Vec<usize> = parts.iter().map(|p| p.rows()).collect();
        Tensor::make(
            rows,
            c,
            data,
            true,
            Some(Op {
                parents: owned.clone(),
                backward: Box::new(move |g, _| {
                    let mut off = 0;
                    for (p, &nr) in owned.iter().zip(&sizes) {
                        p.accum(&g[off..off + nr * c]);
                        off += nr * c;
                    }
                }),
            }),
        )
    }

    pub fn concat_cols(parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_cols needs at least one tensor");
        let r = parts[0].rows();
        let mut cols = 0;
        for p in parts {
            assert_eq!(p.rows(), r, "concat_cols row mismatch: {} vs {}", p.rows(), r);
            cols += p.cols();
        }
        let mut data = vec![0.0; r * cols];
        let mut off = 0;
        for p in parts {
            let pc = p.cols();
            let pd = p.node.data.borrow();
            for i in 0..r {
                data[i * cols + off..i * cols + off + pc].copy_from_slice(&pd[i * pc..(i + 1) * pc]);
            }
            off += pc;
        }
        let any_grad = parts.iter().any(|p| p.requires_grad());
        if !any_grad {
            return Tensor::constant(r, cols, data);
        }
        let owned: Vec<Tensor> = parts.to_vec();
        let widths: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
        Tensor::make(
            r,
            cols,
            data,
            true,
            Some(Op {
                parents: owned.clone(),
                backward: Box::new(move |g, _| {
                    let mut off = 0;
                    for (p, &pc) in owned.iter().zip(&widths) {
                        let mut dg = vec![0.0; r * pc];
                        for i in 0..r {
                            dg[i * pc..(i + 1) * pc]
                                .copy_from_slice(&g[i * cols + off..i * cols + off + pc]);
                        }
                        p.accum(&dg);
                        off += pc;
                    }
                }),
            }),
        )
    }

    /// True if any value is NaN or infinite.
    pub fn has_non_finite(&self) -> bool {
        self.node.data.borrow().iter().any(|v| !v.is_finite())
    }
}

fn bidx(i: usize, j: usize, rows: usize, cols: usize) -> usize {
    (if rows == 1 { 0 } else { i }) * cols + (if cols == 1 { 0 } else { j })
}

/// Shared implementation for broadcastable binary elementwise ops. Each dim of
/// each operand must equal the output dim or 1.
fn binary(
    a: &Tensor,
    b: &Tensor,
    name: &str,
    vfn: fn(f64, f64) -> f64,
    dafn: fn(f64, f64, f64) -> f64,
    dbfn: fn(f64, f64, f64) -> f64,
) -> Tensor {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let r = ar.max(br);
    let c = ac.max(bc);
    assert!(
        (ar == r || ar == 1) && (br == r || br == 1) && (ac == c || ac == 1) && (bc == c || bc == 1),
        "{name} shape mismatch: {ar}x{ac} vs {br}x{bc}"
    );
    let mut out = vec![0.0; r * c];
    {
        let ad = a.node.data.borrow();
        let bd = b.node.data.borrow();
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] = vfn(ad[bidx(i, j, ar, ac)], bd[bidx(i, j, br, bc)]);
            }
        }
    }
    if !a.requires_grad() && !b.requires_grad() {
        return Tensor::constant(r, c, out);
    }
    let aa = a.clone();
    let bb = b.clone();
    Tensor::make(
        r,
        c,
        out,
        true,
        Some(Op {
            parents: vec![a.clone(), b.clone()],
            backward: Box::new(move |g, _| {
                let ad = aa.node.data.borrow();
                let bd = bb.node.data.borrow();
                if aa.requires_grad() {
                    let mut da = vec![0.0; ar * ac];
                    for i in 0..r {
                        for j in 0..c {
                            let av = ad[bidx(i, j, ar, ac)];
                            let bv = bd[bidx(i, j, br, bc)];
                            da[bidx(i, j, ar, ac)] += dafn(av, bv, g[i * c + j]);
                        }
                    }
                    drop(ad);
                    aa.accum(&da);
                } else {
                    drop(ad);
                }
                if bb.requires_grad() {
                    let mut db = vec![0.0; br * bc];
                    for i in 0..r {
                        for j in 0..c {
                            let av = aa.node.data.borrow()[bidx(i, j, ar, ac)];
                            let bv = bd[bidx(i, j, br, bc)];
                            db[bidx(i, j, br, bc)] += dbfn(av, bv, g[i * c + j]);
                        }
                    }
                    drop(bd);
                    bb.accum(&db);
                }
            }),
        }),
    )
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

/// Standard normal sample via Box-Muller; stable across dependency versions.
pub fn gauss<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}
