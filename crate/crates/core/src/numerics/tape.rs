//! Reverse-mode automatic differentiation over a dynamic tape.
//!
//! Every primitive appends a node holding its value; parents always precede
//! their children, so a single reverse sweep accumulates exact adjoints.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{gemm, Tensor};
use crate::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    id: usize,
    tape: u64,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    MatMul(usize, usize),
    Affine(usize, usize, usize),
    Tanh(usize),
    /// Input index and the cached `tanh` of the inner polynomial.
    Gelu(usize, Vec<f64>),
    Exp(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    RowSum(usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize, usize),
    GatherRows(usize, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only computation record.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

// libm's tanh goes through expm1 and dominated training time.
fn fast_tanh(u: f64) -> f64 {
    if u.abs() > 19.0 {
        return u.signum();
    }
    if u.abs() < 1e-4 {
        return u * (1.0 - u * u / 3.0);
    }
    1.0 - 2.0 / ((2.0 * u).exp() + 1.0)
}

fn gelu_tanh(x: f64) -> f64 {
    fast_tanh(GELU_C * (x + GELU_K * x * x * x))
}

fn gelu_grad(x: f64, th: f64) -> f64 {
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.id >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(v.id)
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var {
            id: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.idx(v).expect("var from another tape")].value
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let value = if va.shape() == vb.shape() {
            va.zip_map(vb, name, f)?
        } else if vb.is_scalar() {
            let s = vb.item();
            va.map(|x| f(x, s))
        } else if va.is_scalar() {
            let s = va.item();
            vb.map(|y| f(s, y))
        } else {
            return Err(Error::Shape {
                op: name,
                left: va.shape().to_vec(),
                right: vb.shape().to_vec(),
            });
        };
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(op(ia, ib), value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.map(|x| x * c);
        let rg = self.rg(ia);
        Ok(self.push(Op::Scale(ia, c), value, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(Op::MatMul(ia, ib), value, rg))
    }

    /// `x·w + b`, with the bias vector added to every row.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (ix, iw, ib) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let mut value = self.nodes[ix].value.matmul(&self.nodes[iw].value)?;
        let bias = &self.nodes[ib].value;
        let cols = value.cols();
        if bias.numel() != cols || bias.shape().len() > 1 {
            return Err(Error::Shape {
                op: "affine",
                left: value.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        let bias = bias.data().to_vec();
        for r in 0..value.rows() {
            for (o, bv) in value.row_mut(r).iter_mut().zip(&bias) {
                *o += bv;
            }
        }
        let rg = self.rg(ix) || self.rg(iw) || self.rg(ib);
        Ok(self.push(Op::Affine(ix, iw, ib), value, rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: fn(usize) -> Op) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.map(f);
        let rg = self.rg(ia);
        Ok(self.push(op(ia), value, rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, fast_tanh, Op::Tanh)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let x = &self.nodes[ia].value;
        let th: Vec<f64> = x.data().iter().map(|&v| gelu_tanh(v)).collect();
        let data = x.data().iter().zip(&th).map(|(&v, &t)| 0.5 * v * (1.0 + t)).collect();
        let value = Tensor::from_parts(x.shape().to_vec(), data);
        let rg = self.rg(ia);
        let cache = if rg { th } else { Vec::new() };
        Ok(self.push(Op::Gelu(ia, cache), value, rg))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| x * x, Op::Square)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let value = Tensor::scalar(self.nodes[ia].value.sum());
        let rg = self.rg(ia);
        Ok(self.push(Op::Sum(ia), value, rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        let value = Tensor::scalar(v.sum() / v.numel() as f64);
        let rg = self.rg(ia);
        Ok(self.push(Op::Mean(ia), value, rg))
    }

    /// Per-row sums of a matrix, as an `[rows, 1]` column.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        v.dims2("row_sum")?;
        let sums = (0..v.rows()).map(|r| v.row(r).iter().sum()).collect();
        let value = Tensor::from_parts(vec![v.rows(), 1], sums);
        let rg = self.rg(ia);
        Ok(self.push(Op::RowSum(ia), value, rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let (ra, ca) = va.dims2("concat_cols")?;
        let (rb, cb) = vb.dims2("concat_cols")?;
        if ra != rb {
            return Err(Error::Shape {
                op: "concat_cols",
                left: va.shape().to_vec(),
                right: vb.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            data.extend_from_slice(va.row(r));
            data.extend_from_slice(vb.row(r));
        }
        let value = Tensor::from_parts(vec![ra, ca + cb], data);
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(Op::ConcatCols(ia, ib), value, rg))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = &self.nodes[ia].value;
        let (r, c) = v.dims2("slice_cols")?;
        if start >= end || end > c {
            return Err(Error::invalid(format!("slice_cols {start}..{end} of {c} columns")));
        }
        let mut data = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            data.extend_from_slice(&v.row(i)[start..end]);
        }
        let value = Tensor::from_parts(vec![r, end - start], data);
        let rg = self.rg(ia);
        Ok(self.push(Op::SliceCols(ia, start, end), value, rg))
    }

    /// Row lookup into a table (embedding).
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let it = self.idx(table)?;
        let v = &self.nodes[it].value;
        let (r, _) = v.dims2("gather_rows")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::invalid(format!("gather_rows index {bad} out of {r} rows")));
        }
        let value = v.select_rows(idx);
        let rg = self.rg(it);
        Ok(self.push(Op::GatherRows(it, idx.to_vec()), value, rg))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let ir = self.idx(root)?;
        if !self.nodes[ir].value.is_scalar() {
            return Err(Error::NotScalar(self.nodes[ir].value.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; ir + 1];
        adj[ir] = Some(Tensor::full(self.nodes[ir].value.shape(), 1.0));

        for i in (0..=ir).rev() {
            let Some(g) = adj[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g, &mut adj);
            }
            adj[i] = Some(g);
        }
        Ok(Gradients { tape: self.id, adj })
    }

    fn propagate(&self, i: usize, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let val = |j: usize| &self.nodes[j].value;
        let mut acc = |j: usize, contrib: Tensor| {
            if !self.nodes[j].requires_grad {
                return;
            }
            match &mut adj[j] {
                Some(t) => {
                    for (a, c) in t.data_mut().iter_mut().zip(contrib.data()) {
                        *a += c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        };
        // Gradient of a possibly scalar-broadcast operand.
        let reduce_to = |shape: &[usize], t: Tensor| -> Tensor {
            if t.shape() == shape {
                t
            } else {
                Tensor::full(shape, t.sum())
            }
        };

        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                if self.rg(a) {
                    acc(a, reduce_to(val(a).shape(), g.clone()));
                }
                if self.rg(b) {
                    acc(b, reduce_to(val(b).shape(), g.clone()));
                }
            }
            &Op::Sub(a, b) => {
                if self.rg(a) {
                    acc(a, reduce_to(val(a).shape(), g.clone()));
                }
                if self.rg(b) {
                    acc(b, reduce_to(val(b).shape(), g.map(|x| -x)));
                }
            }
            &Op::Mul(a, b) => {
                let (va, vb) = (val(a), val(b));
                let times = |other: &Tensor| -> Tensor {
                    if other.shape() == g.shape() {
                        Tensor::from_parts(
                            g.shape().to_vec(),
                            g.data().iter().zip(other.data()).map(|(x, y)| x * y).collect(),
                        )
                    } else {
                        let s = other.item();
                        g.map(|x| x * s)
                    }
                };
                if self.rg(a) {
                    acc(a, reduce_to(va.shape(), times(vb)));
                }
                if self.rg(b) {
                    acc(b, reduce_to(vb.shape(), times(va)));
                }
            }
            &Op::Scale(a, c) => acc(a, g.map(|x| x * c)),
            &Op::MatMul(a, b) => {
                let (va, vb) = (val(a), val(b));
                let (m, k) = (va.rows(), va.cols());
                let n = vb.cols();
                if self.rg(a) {
                    // dA = G · Bᵀ
                    let mut out = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), (n, 1), vb.data(), (1, n), &mut out, 0.0);
                    acc(a, Tensor::from_parts(vec![m, k], out));
                }
                if self.rg(b) {
                    // dB = Aᵀ · G
                    let mut out = vec![0.0; k * n];
                    gemm(k, m, n, va.data(), (1, k), g.data(), (n, 1), &mut out, 0.0);
                    acc(b, Tensor::from_parts(vec![k, n], out));
                }
            }
            &Op::Affine(x, w, b) => {
                let (vx, vw) = (val(x), val(w));
                let (m, k) = (vx.rows(), vx.cols());
                let n = vw.cols();
                if self.rg(x) {
                    let mut out = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), (n, 1), vw.data(), (1, n), &mut out, 0.0);
                    acc(x, Tensor::from_parts(vec![m, k], out));
                }
                if self.rg(w) {
                    let mut out = vec![0.0; k * n];
                    gemm(k, m, n, vx.data(), (1, k), g.data(), (n, 1), &mut out, 0.0);
                    acc(w, Tensor::from_parts(vec![k, n], out));
                }
                if self.rg(b) {
                    let mut cols = vec![0.0; n];
                    for r in 0..m {
                        for (c, v) in cols.iter_mut().zip(g.row(r)) {
                            *c += v;
                        }
                    }
                    acc(b, Tensor::from_parts(val(b).shape().to_vec(), cols));
                }
            }
            &Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                acc(a, zip(g, y, |gv, yv| gv * (1.0 - yv * yv)));
            }
            Op::Gelu(a, th) => {
                let a = *a;
                let data = g
                    .data()
                    .iter()
                    .zip(val(a).data())
                    .zip(th)
                    .map(|((gv, &xv), &t)| gv * gelu_grad(xv, t))
                    .collect();
                acc(a, Tensor::from_parts(g.shape().to_vec(), data));
            }
            &Op::Exp(a) => acc(a, zip(g, &self.nodes[i].value, |gv, yv| gv * yv)),
            &Op::Square(a) => acc(a, zip(g, val(a), |gv, xv| 2.0 * gv * xv)),
            &Op::Sum(a) => acc(a, Tensor::full(val(a).shape(), g.item())),
            &Op::Mean(a) => {
                let v = val(a);
                acc(a, Tensor::full(v.shape(), g.item() / v.numel() as f64))
            }
            &Op::RowSum(a) => {
                let v = val(a);
                let c = v.cols();
                let data = (0..v.rows()).flat_map(|r| std::iter::repeat_n(g.data()[r], c)).collect();
                acc(a, Tensor::from_parts(v.shape().to_vec(), data));
            }
            &Op::ConcatCols(a, b) => {
                let ca = val(a).cols();
                let cb = val(b).cols();
                let rows = g.rows();
                if self.rg(a) {
                    let data = (0..rows).flat_map(|r| g.row(r)[..ca].iter().copied()).collect();
                    acc(a, Tensor::from_parts(vec![rows, ca], data));
                }
                if self.rg(b) {
                    let data = (0..rows).flat_map(|r| g.row(r)[ca..ca + cb].iter().copied()).collect();
                    acc(b, Tensor::from_parts(vec![rows, cb], data));
                }
            }
            &Op::SliceCols(a, start, end) => {
                let v = val(a);
                let mut out = Tensor::zeros(v.shape());
                for r in 0..v.rows() {
                    out.row_mut(r)[start..end].copy_from_slice(g.row(r));
                }
                acc(a, out);
            }
            Op::GatherRows(t, idx) => {
                let v = val(*t);
                let mut out = Tensor::zeros(v.shape());
                for (r, &src) in idx.iter().enumerate() {
                    for (o, gv) in out.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += gv;
                    }
                }
                acc(*t, out);
            }
        }
    }
}

fn zip(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_parts(
        g.shape().to_vec(),
        g.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect(),
    )
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    adj: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` when `v` does not influence the root.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.adj.get(v.id).and_then(Option::as_ref)
    }

    /// Adjoint of `v`, zero-filled to the given shape when unreached.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}
