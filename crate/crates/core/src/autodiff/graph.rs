//! Append-only computation graph with reverse-mode differentiation.
//!
//! Nodes are pushed in evaluation order, so the node index is already a
//! topological order and the backward sweep is a reverse scan.

use std::rc::Rc;

use super::tensor::{matmul_nt, matmul_raw, matmul_tn};
use super::{Params, Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds. Each variant has a matching derivative in [`Graph::backward`].
#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SumAll(Var),
    SumCols(Var),
    Silu(Var),
    Sigmoid(Var),
    Exp(Var),
    RowNorm(Var),
    SafeRecip(Var),
    Clamp(Var, f64, f64),
    BroadcastRows(Var),
    BroadcastCols(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Rc<[usize]>),
    ScatterAddRows(Var, Rc<[usize]>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::ConcatCols(..) => "concat",
            Op::ConcatRows(..) => "concat_rows",
            Op::SumAll(..) => "sum",
            Op::SumCols(..) => "sum_cols",
            Op::Silu(..) => "silu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::RowNorm(..) => "row_norm",
            Op::SafeRecip(..) => "safe_recip",
            Op::Clamp(..) => "clamp",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::BroadcastCols(..) => "broadcast_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::ScatterAddRows(..) => "scatter_add_rows",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Values below this magnitude are treated as zero by [`Graph::safe_recip`].
pub const RECIP_FLOOR: f64 = 1e-12;

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Trainable parameters bound as leaves of one graph, indexed like [`Params`].
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    pub fn get(&self, id: usize) -> Var {
        self.vars[id]
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    no_grad: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph that never records differentiable nodes (inference only).
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            no_grad: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad: requires_grad && !self.no_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn ensure_matrix(&self, op: &'static str, v: Var) -> Result<(usize, usize), TensorError> {
        let t = &self.nodes[v.0].value;
        if !t.is_matrix() {
            return Err(TensorError::Invalid {
                op,
                msg: format!("expected a rank-2 tensor, got shape {:?}", t.shape()),
            });
        }
        Ok((t.rows(), t.cols()))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    /// Constant leaf (never receives a gradient).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds every tensor of `params` as a leaf. `trainable = false` yields
    /// detached copies, used for the EMA target branch.
    pub fn bind(&mut self, params: &Params, trainable: bool) -> ParamVars {
        let vars = params
            .tensors()
            .iter()
            .map(|t| self.push(t.clone(), Op::Leaf, trainable))
            .collect();
        ParamVars { vars }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        let rg = self.rg(&[a]);
        self.push(v, Op::Scale(a, c), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.ensure_matrix("matmul", a)?;
        let (k2, n) = self.ensure_matrix("matmul", b)?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::MatMul(a, b), rg))
    }

    /// Concatenates along the column axis; all inputs need the same row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Invalid {
                op: "concat",
                msg: "no inputs".into(),
            });
        }
        let (rows, _) = self.ensure_matrix("concat", parts[0])?;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.ensure_matrix("concat", p)?;
            if r != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: self.shape(parts[0]).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
            total += c;
        }
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(Tensor::matrix(rows, total, data)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks along the row axis; all inputs need the same column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Invalid {
                op: "concat_rows",
                msg: "no inputs".into(),
            });
        }
        let (_, cols) = self.ensure_matrix("concat_rows", parts[0])?;
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.ensure_matrix("concat_rows", p)?;
            if c != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape(parts[0]).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
            rows += r;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        Ok(self.push(Tensor::matrix(rows, cols, data)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Sum of all entries, as a `[1, 1]` scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    /// Row sums: `[r, c] -> [r, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, TensorError> {
        let (r, _) = self.ensure_matrix("sum_cols", a)?;
        let t = self.value(a);
        let data = (0..r).map(|i| t.row(i).iter().sum()).collect();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(r, 1, data)?, Op::SumCols(a), rg))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(silu);
        let rg = self.rg(&[a]);
        self.push(v, Op::Silu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(&[a]);
        self.push(v, Op::Sigmoid(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        let rg = self.rg(&[a]);
        self.push(v, Op::Exp(a), rg)
    }

    /// L2 norm along the last axis: `[r, c] -> [r, 1]`.
    pub fn row_norm(&mut self, a: Var) -> Result<Var, TensorError> {
        let (r, _) = self.ensure_matrix("row_norm", a)?;
        let t = self.value(a);
        let data = (0..r)
            .map(|i| t.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(r, 1, data)?, Op::RowNorm(a), rg))
    }

    /// `1 / x`, with entries of magnitude below [`RECIP_FLOOR`] mapped to 0.
    pub fn safe_recip(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .map(|x| if x.abs() < RECIP_FLOOR { 0.0 } else { 1.0 / x });
        let rg = self.rg(&[a]);
        self.push(v, Op::SafeRecip(a), rg)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        let rg = self.rg(&[a]);
        self.push(v, Op::Clamp(a, lo, hi), rg)
    }

    /// `[1, c] -> [n, c]`.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var, TensorError> {
        let (r, c) = self.ensure_matrix("broadcast_rows", a)?;
        if r != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_rows",
                left: vec![r, c],
                right: vec![1, c],
            });
        }
        let row = self.value(a).data().to_vec();
        let mut data = Vec::with_capacity(n * c);
        for _ in 0..n {
            data.extend_from_slice(&row);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(n, c, data)?, Op::BroadcastRows(a), rg))
    }

    /// `[r, 1] -> [r, c]`.
    pub fn broadcast_cols(&mut self, a: Var, c: usize) -> Result<Var, TensorError> {
        let (r, k) = self.ensure_matrix("broadcast_cols", a)?;
        if k != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_cols",
                left: vec![r, k],
                right: vec![r, 1],
            });
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(r * c);
        for &v in src {
            data.extend(std::iter::repeat_n(v, c));
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::BroadcastCols(a), rg))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let (r, c) = self.ensure_matrix("slice_rows", a)?;
        if start > end || end > r {
            return Err(TensorError::Invalid {
                op: "slice_rows",
                msg: format!("range {start}..{end} out of bounds for {r} rows"),
            });
        }
        let data = self.value(a).data()[start * c..end * c].to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(end - start, c, data)?, Op::SliceRows(a, start), rg))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let (r, c) = self.ensure_matrix("slice_cols", a)?;
        if start > end || end > c {
            return Err(TensorError::Invalid {
                op: "slice_cols",
                msg: format!("range {start}..{end} out of bounds for {c} columns"),
            });
        }
        let t = self.value(a);
        let mut data = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            data.extend_from_slice(&t.row(i)[start..end]);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::matrix(r, end - start, data)?, Op::SliceCols(a, start), rg))
    }

    /// `out[k] = a[index[k]]`.
    pub fn gather_rows(&mut self, a: Var, index: Rc<[usize]>) -> Result<Var, TensorError> {
        let (r, c) = self.ensure_matrix("gather_rows", a)?;
        if let Some(&bad) = index.iter().find(|&&i| i >= r) {
            return Err(TensorError::Invalid {
                op: "gather_rows",
                msg: format!("row {bad} out of bounds for {r} rows"),
            });
        }
        let t = self.value(a);
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            data.extend_from_slice(t.row(i));
        }
        let rg = self.rg(&[a]);
        let n = index.len();
        Ok(self.push(Tensor::matrix(n, c, data)?, Op::GatherRows(a, index), rg))
    }

    /// `out[index[k]] += a[k]`, producing `rows` output rows.
    pub fn scatter_add_rows(
        &mut self,
        a: Var,
        index: Rc<[usize]>,
        rows: usize,
    ) -> Result<Var, TensorError> {
        let (r, c) = self.ensure_matrix("scatter_add_rows", a)?;
        if r != index.len() {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_add_rows",
                left: vec![r, c],
                right: vec![index.len(), c],
            });
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(TensorError::Invalid {
                op: "scatter_add_rows",
                msg: format!("target row {bad} out of bounds for {rows} rows"),
            });
        }
        let t = self.value(a);
        let mut out = Tensor::zeros(rows, c);
        for (k, &i) in index.iter().enumerate() {
            for (o, v) in out.row_mut(i).iter_mut().zip(t.row(k)) {
                *o += v;
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::ScatterAddRows(a, index), rg))
    }

    /// `x * w + b` with `b` a `[1, out]` row broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let y = self.matmul(x, w)?;
        let rows = self.shape(y)[0];
        let bb = self.broadcast_rows(b, rows)?;
        self.add(y, bb)
    }

    /// Mean of squared differences over all entries.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let d = self.sub(a, b)?;
        let n = self.value(d).len().max(1) as f64;
        let sq = self.mul(d, d)?;
        let s = self.sum(sq);
        Ok(self.scale(s, 1.0 / n))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let shape = self.shape(loss);
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0).reshape_unchecked(shape.to_vec()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.axpy(1.0, &g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(
        &self,
        node: &Node,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<(), TensorError> {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, g.zip_map(vb, |x, y| x * y));
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, g.zip_map(va, |x, y| x * y));
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, g.map(|x| x * c));
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.requires_grad(*a) {
                    let da = matmul_nt(g.data(), vb.data(), m, n, k);
                    self.accumulate(grads, *a, Tensor::matrix(m, k, da)?);
                }
                if self.requires_grad(*b) {
                    let db = matmul_tn(va.data(), g.data(), m, k, n);
                    self.accumulate(grads, *b, Tensor::matrix(k, n, db)?);
                }
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    if self.requires_grad(p) {
                        let mut data = Vec::with_capacity(rows * c);
                        for i in 0..rows {
                            data.extend_from_slice(&g.row(i)[offset..offset + c]);
                        }
                        self.accumulate(grads, p, Tensor::matrix(rows, c, data)?);
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let r = self.value(p).rows();
                    if self.requires_grad(p) {
                        let data = g.data()[offset * cols..(offset + r) * cols].to_vec();
                        self.accumulate(grads, p, Tensor::matrix(r, cols, data)?);
                    }
                    offset += r;
                }
            }
            Op::SumAll(a) => {
                let va = self.value(*a);
                let mut t = Tensor::zeros_like(va);
                let gv = g.item();
                t.data_mut().iter_mut().for_each(|x| *x = gv);
                self.accumulate(grads, *a, t);
            }
            Op::SumCols(a) => {
                let va = self.value(*a);
                let c = va.cols();
                let mut t = Tensor::zeros_like(va);
                for i in 0..va.rows() {
                    let gi = g.data()[i];
                    t.row_mut(i).iter_mut().for_each(|x| *x = gi);
                }
                debug_assert_eq!(t.cols(), c);
                self.accumulate(grads, *a, t);
            }
            Op::Silu(a) => {
                let va = self.value(*a);
                self.accumulate(grads, *a, g.zip_map(va, |gi, x| gi * silu_grad(x)));
            }
            Op::Sigmoid(a) => {
                let out = &node.value;
                self.accumulate(grads, *a, g.zip_map(out, |gi, s| gi * s * (1.0 - s)));
            }
            Op::Exp(a) => {
                let out = &node.value;
                self.accumulate(grads, *a, g.zip_map(out, |gi, e| gi * e));
            }
            Op::RowNorm(a) => {
                let va = self.value(*a);
                let mut t = Tensor::zeros_like(va);
                for i in 0..va.rows() {
                    let n = node.value.data()[i];
                    if n < RECIP_FLOOR {
                        continue;
                    }
                    let gi = g.data()[i] / n;
                    for (o, x) in t.row_mut(i).iter_mut().zip(va.row(i)) {
                        *o = gi * x;
                    }
                }
                self.accumulate(grads, *a, t);
            }
            Op::SafeRecip(a) => {
                let out = &node.value;
                self.accumulate(grads, *a, g.zip_map(out, |gi, r| -gi * r * r));
            }
            Op::Clamp(a, lo, hi) => {
                let va = self.value(*a);
                let (lo, hi) = (*lo, *hi);
                self.accumulate(
                    grads,
                    *a,
                    g.zip_map(va, |gi, x| if x > lo && x < hi { gi } else { 0.0 }),
                );
            }
            Op::BroadcastRows(a) => {
                let c = g.cols();
                let mut t = Tensor::zeros(1, c);
                for i in 0..g.rows() {
                    for (o, v) in t.row_mut(0).iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *a, t);
            }
            Op::BroadcastCols(a) => {
                let r = g.rows();
                let data = (0..r).map(|i| g.row(i).iter().sum()).collect();
                self.accumulate(grads, *a, Tensor::matrix(r, 1, data)?);
            }
            Op::SliceRows(a, start) => {
                let va = self.value(*a);
                let c = va.cols();
                let mut t = Tensor::zeros_like(va);
                t.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *a, t);
            }
            Op::SliceCols(a, start) => {
                let va = self.value(*a);
                let w = g.cols();
                let mut t = Tensor::zeros_like(va);
                for i in 0..va.rows() {
                    t.row_mut(i)[*start..start + w].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *a, t);
            }
            Op::GatherRows(a, index) => {
                let va = self.value(*a);
                let mut t = Tensor::zeros_like(va);
                for (k, &i) in index.iter().enumerate() {
                    for (o, v) in t.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *a, t);
            }
            Op::ScatterAddRows(a, index) => {
                let c = g.cols();
                let mut data = Vec::with_capacity(index.len() * c);
                for &i in index.iter() {
                    data.extend_from_slice(g.row(i));
                }
                self.accumulate(grads, *a, Tensor::matrix(index.len(), c, data)?);
            }
        }
        Ok(())
    }

    /// Name of the operation that produced `v`, for diagnostics.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }
}

/// Gradients from one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of `v`; `None` when `v` is constant or unreachable from the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zero-filled when absent.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros_like(like))
    }

    /// Gradients aligned with `params`, zero where a parameter was unused.
    pub fn for_params(&self, vars: &ParamVars, params: &Params) -> Vec<Tensor> {
        params
            .tensors()
            .iter()
            .enumerate()
            .map(|(i, t)| self.get_or_zeros(vars.get(i), t))
            .collect()
    }
}
