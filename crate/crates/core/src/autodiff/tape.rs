//! Append-only operation tape with reverse-mode gradients.
//!
//! Every operation evaluates eagerly, checks its output for non-finite
//! values and records itself so that [`Tape::backward`] can walk the tape
//! in reverse append order.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{Csr, Matrix, ParamStore, TensorError};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a specific [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Reduction / concatenation axis. `Rows` is numpy axis 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Stack vertically / reduce over rows.
    Rows,
    /// Stack horizontally / reduce over columns.
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    MulScalar { scalar: usize, x: usize },
    Concat { parts: Vec<usize>, axis: Axis },
    Mean { x: usize, axis: Axis },
    Sum(usize),
    LeakyRelu { x: usize, slope: f64 },
    Elu { x: usize, alpha: f64 },
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    ClampMin { x: usize, min: f64 },
    RowSoftmax(usize),
    EdgeScores { src: usize, dst: usize, nbrs: Arc<Csr> },
    MaskedSoftmax { x: usize, nbrs: Arc<Csr> },
    NeighborAggregate { coef: usize, h: usize, nbrs: Arc<Csr> },
    GatherRows { x: usize, idx: Vec<usize> },
    GroupMean { x: usize, groups: Arc<Csr> },
    Pick { x: usize, idx: Vec<(usize, usize)> },
    SumSquares(usize),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar with respect to every bound parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    by_name: BTreeMap<String, Matrix>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.by_name.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.by_name.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    /// Squared L2 norm summed over the named parameters.
    pub fn norm_squared<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> f64 {
        names
            .into_iter()
            .filter_map(|n| self.by_name.get(n))
            .map(Matrix::sum_squares)
            .sum()
    }

    pub(crate) fn insert(&mut self, name: String, grad: Matrix) {
        self.by_name.insert(name, grad);
    }
}

/// Parameters registered on a tape, addressed by name.
#[derive(Clone, Debug, Default)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var, TensorError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars.values().copied()
    }
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    params: Vec<(String, usize)>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            params: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> Result<usize, TensorError> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::ForeignVar);
        }
        Ok(v.index)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        assert_eq!(v.tape, self.id, "variable recorded on a different tape");
        &self.nodes[v.index].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Scalar value of a `1 x 1` variable.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.get(0, 0)
    }

    fn push(&mut self, op: &'static str, value: Matrix, rec: Op, needs_grad: bool) -> Result<Var, TensorError> {
        if self.backward_done {
            return Err(TensorError::TapeClosed);
        }
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op });
        }
        self.nodes.push(Node {
            value,
            op: rec,
            needs_grad,
        });
        Ok(Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        })
    }

    fn ng(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Result<Var, TensorError> {
        self.push("constant", value, Op::Leaf, false)
    }

    /// Records a named trainable leaf.
    pub fn param(&mut self, name: &str, value: Matrix) -> Result<Var, TensorError> {
        let v = self.push("param", value, Op::Leaf, true)?;
        self.params.push((name.to_string(), v.index));
        Ok(v)
    }

    /// Binds the named parameters of `store` as trainable leaves.
    pub fn bind<'a>(
        &mut self,
        store: &ParamStore,
        names: impl IntoIterator<Item = &'a str>,
    ) -> Result<BoundParams, TensorError> {
        let mut bound = BoundParams::default();
        for name in names {
            let value = store
                .get(name)
                .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?
                .clone();
            let v = self.param(name, value)?;
            bound.vars.insert(name.to_string(), v);
        }
        Ok(bound)
    }

    pub fn bind_all(&mut self, store: &ParamStore) -> Result<BoundParams, TensorError> {
        let names: Vec<String> = store.names().map(str::to_string).collect();
        self.bind(store, names.iter().map(String::as_str))
    }

    /// Copies the current value of `v` as a constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Result<Var, TensorError> {
        let value = self.nodes[self.idx(v)?].value.clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let value = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        let ng = self.ng(ia) || self.ng(ib);
        self.push("matmul", value, Op::MatMul(ia, ib), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let ia = self.idx(a)?;
        let value = self.nodes[ia].value.transpose();
        let ng = self.ng(ia);
        self.push("transpose", value, Op::Transpose(ia), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.shape() != vb.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let mut value = va.clone();
        value.add_assign(vb);
        let ng = self.ng(ia) || self.ng(ib);
        self.push("add", value, Op::Add(ia, ib), ng)
    }

    /// Adds a `1 x c` row to every row of an `r x c` matrix (bias).
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        let (ix, ir) = (self.idx(x)?, self.idx(row)?);
        let (vx, vr) = (&self.nodes[ix].value, &self.nodes[ir].value);
        if vr.rows() != 1 || vr.cols() != vx.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                left: vx.shape(),
                right: vr.shape(),
            });
        }
        let mut value = vx.clone();
        for r in 0..value.rows() {
            for (o, b) in value.row_mut(r).iter_mut().zip(vr.row(0)) {
                *o += b;
            }
        }
        let ng = self.ng(ix) || self.ng(ir);
        self.push("add_row", value, Op::AddRow(ix, ir), ng)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.map(|v| v * k);
        let ng = self.ng(ix);
        self.push("scale", value, Op::Scale(ix, k), ng)
    }

    /// Multiplies every entry of `x` by the `1 x 1` variable `scalar`.
    pub fn mul_scalar(&mut self, scalar: Var, x: Var) -> Result<Var, TensorError> {
        let (is, ix) = (self.idx(scalar)?, self.idx(x)?);
        let vs = &self.nodes[is].value;
        if vs.shape() != (1, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "mul_scalar",
                left: vs.shape(),
                right: (1, 1),
            });
        }
        let s = vs.get(0, 0);
        let value = self.nodes[ix].value.map(|v| v * s);
        let ng = self.ng(is) || self.ng(ix);
        self.push("mul_scalar", value, Op::MulScalar { scalar: is, x: ix }, ng)
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, TensorError> {
        let idx = parts.iter().map(|&p| self.idx(p)).collect::<Result<Vec<_>, _>>()?;
        let first = idx.first().ok_or(TensorError::EmptyInput { op: "concat" })?;
        let (r0, c0) = self.nodes[*first].value.shape();
        let value = match axis {
            Axis::Rows => {
                let mut data = Vec::new();
                let mut rows = 0;
                for &i in &idx {
                    let v = &self.nodes[i].value;
                    if v.cols() != c0 {
                        return Err(TensorError::ShapeMismatch {
                            op: "concat",
                            left: (r0, c0),
                            right: v.shape(),
                        });
                    }
                    rows += v.rows();
                    data.extend_from_slice(v.as_slice());
                }
                Matrix::from_vec(rows, c0, data)?
            }
            Axis::Cols => {
                let mut cols = 0;
                for &i in &idx {
                    let v = &self.nodes[i].value;
                    if v.rows() != r0 {
                        return Err(TensorError::ShapeMismatch {
                            op: "concat",
                            left: (r0, c0),
                            right: v.shape(),
                        });
                    }
                    cols += v.cols();
                }
                let mut out = Matrix::zeros(r0, cols);
                let mut at = 0;
                for &i in &idx {
                    let v = &self.nodes[i].value;
                    for r in 0..r0 {
                        out.row_mut(r)[at..at + v.cols()].copy_from_slice(v.row(r));
                    }
                    at += v.cols();
                }
                out
            }
        };
        let ng = idx.iter().any(|&i| self.ng(i));
        self.push("concat", value, Op::Concat { parts: idx, axis }, ng)
    }

    /// Mean along `axis`: `Rows` gives `1 x c`, `Cols` gives `r x 1`.
    pub fn mean(&mut self, x: Var, axis: Axis) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let v = &self.nodes[ix].value;
        if v.is_empty() {
            return Err(TensorError::EmptyInput { op: "mean" });
        }
        let value = match axis {
            Axis::Rows => {
                let n = v.rows() as f64;
                Matrix::from_fn(1, v.cols(), |_, c| (0..v.rows()).map(|r| v.get(r, c)).sum::<f64>() / n)
            }
            Axis::Cols => {
                let n = v.cols() as f64;
                Matrix::from_fn(v.rows(), 1, |r, _| v.row(r).iter().sum::<f64>() / n)
            }
        };
        let ng = self.ng(ix);
        self.push("mean", value, Op::Mean { x: ix, axis }, ng)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let value = Matrix::scalar(self.nodes[ix].value.sum());
        let ng = self.ng(ix);
        self.push("sum", value, Op::Sum(ix), ng)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.map(|v| if v > 0.0 { v } else { slope * v });
        let ng = self.ng(ix);
        self.push("leaky_relu", value, Op::LeakyRelu { x: ix, slope }, ng)
    }

    pub fn elu(&mut self, x: Var, alpha: f64) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let value = self
            .nodes[ix]
            .value
            .map(|v| if v > 0.0 { v } else { alpha * v.exp_m1() });
        let ng = self.ng(ix);
        self.push("elu", value, Op::Elu { x: ix, alpha }, ng)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.map(f64::tanh);
        let ng = self.ng(ix);
        self.push("tanh", value, Op::Tanh(ix), ng)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.map(f64::exp);
        let ng = self.ng(ix);
        self.push("exp", value, Op::Exp(ix), ng)
    }

    pub fn ln(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.map(f64::ln);
        let ng = self.ng(ix);
        self.push("ln", value, Op::Ln(ix), ng)
    }

    /// `max(x, min)` elementwise; gradient passes only where `x > min`.
    pub fn clamp_min(&mut self, x: Var, min: f64) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let value = self.nodes[ix].value.map(|v| v.max(min));
        let ng = self.ng(ix);
        self.push("clamp_min", value, Op::ClampMin { x: ix, min }, ng)
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let v = &self.nodes[ix].value;
        let mut value = v.clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let ng = self.ng(ix);
        self.push("row_softmax", value, Op::RowSoftmax(ix), ng)
    }

    /// Edge-aligned pair scores `src[i] + dst[j]` for every stored edge
    /// `(i, j)` of `nbrs`, as a `1 x nnz` row.
    pub fn edge_scores(&mut self, src: Var, dst: Var, nbrs: &Arc<Csr>) -> Result<Var, TensorError> {
        let (is, id) = (self.idx(src)?, self.idx(dst)?);
        let (vs, vd) = (&self.nodes[is].value, &self.nodes[id].value);
        let n = nbrs.n_rows();
        if vs.shape() != (n, 1) || vd.shape() != (n, 1) || nbrs.max_index_bound() > n {
            return Err(TensorError::ShapeMismatch {
                op: "edge_scores",
                left: vs.shape(),
                right: vd.shape(),
            });
        }
        let mut out = Matrix::zeros(1, nbrs.nnz());
        for (i, k, j) in nbrs.entries() {
            out.set(0, k, vs.get(i, 0) + vd.get(j, 0));
        }
        let ng = self.ng(is) || self.ng(id);
        self.push(
            "edge_scores",
            out,
            Op::EdgeScores {
                src: is,
                dst: id,
                nbrs: Arc::clone(nbrs),
            },
            ng,
        )
    }

    /// Softmax of edge-aligned scores within each node's neighbor list.
    /// Entries outside a list do not exist in the sparse layout, i.e. they
    /// are exact zeros of the dense coefficient matrix.
    pub fn masked_neighbor_softmax(&mut self, scores: Var, nbrs: &Arc<Csr>) -> Result<Var, TensorError> {
        let ix = self.idx(scores)?;
        let v = &self.nodes[ix].value;
        if v.shape() != (1, nbrs.nnz()) {
            return Err(TensorError::ShapeMismatch {
                op: "masked_neighbor_softmax",
                left: v.shape(),
                right: (1, nbrs.nnz()),
            });
        }
        if let Some(node) = nbrs.first_empty_row() {
            return Err(TensorError::EmptyNeighborhood { node });
        }
        let mut value = v.clone();
        {
            let data = value.as_mut_slice();
            for i in 0..nbrs.n_rows() {
                softmax_in_place(&mut data[nbrs.range(i)]);
            }
        }
        let ng = self.ng(ix);
        self.push(
            "masked_neighbor_softmax",
            value,
            Op::MaskedSoftmax {
                x: ix,
                nbrs: Arc::clone(nbrs),
            },
            ng,
        )
    }

    /// `out[i] = Σ_k coef[k] · h[j_k]` over the neighbor list of `i`.
    pub fn neighbor_aggregate(&mut self, coef: Var, h: Var, nbrs: &Arc<Csr>) -> Result<Var, TensorError> {
        let (ic, ih) = (self.idx(coef)?, self.idx(h)?);
        let (vc, vh) = (&self.nodes[ic].value, &self.nodes[ih].value);
        if vc.shape() != (1, nbrs.nnz()) || nbrs.max_index_bound() > vh.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "neighbor_aggregate",
                left: vc.shape(),
                right: vh.shape(),
            });
        }
        let mut out = Matrix::zeros(nbrs.n_rows(), vh.cols());
        for (i, k, j) in nbrs.entries() {
            let c = vc.get(0, k);
            let hj = vh.row(j);
            for (o, &x) in out.row_mut(i).iter_mut().zip(hj) {
                *o += c * x;
            }
        }
        let ng = self.ng(ic) || self.ng(ih);
        self.push(
            "neighbor_aggregate",
            out,
            Op::NeighborAggregate {
                coef: ic,
                h: ih,
                nbrs: Arc::clone(nbrs),
            },
            ng,
        )
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let v = &self.nodes[ix].value;
        if let Some(&bad) = idx.iter().find(|&&r| r >= v.rows()) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                bound: v.rows(),
            });
        }
        let mut out = Matrix::zeros(idx.len(), v.cols());
        for (r, &src) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(v.row(src));
        }
        let ng = self.ng(ix);
        self.push(
            "gather_rows",
            out,
            Op::GatherRows {
                x: ix,
                idx: idx.to_vec(),
            },
            ng,
        )
    }

    /// Row `i` of the output is the mean of the rows of `x` listed in group
    /// `i`; an empty group yields a zero row.
    pub fn group_mean(&mut self, x: Var, groups: &Arc<Csr>) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let v = &self.nodes[ix].value;
        if groups.max_index_bound() > v.rows() {
            return Err(TensorError::IndexOutOfRange {
                op: "group_mean",
                index: groups.max_index_bound() - 1,
                bound: v.rows(),
            });
        }
        let mut out = Matrix::zeros(groups.n_rows(), v.cols());
        for g in 0..groups.n_rows() {
            let members = groups.row(g);
            if members.is_empty() {
                continue;
            }
            let inv = 1.0 / members.len() as f64;
            let row = out.row_mut(g);
            for &m in members {
                for (o, &x) in row.iter_mut().zip(v.row(m)) {
                    *o += x;
                }
            }
            row.iter_mut().for_each(|o| *o *= inv);
        }
        let ng = self.ng(ix);
        self.push(
            "group_mean",
            out,
            Op::GroupMean {
                x: ix,
                groups: Arc::clone(groups),
            },
            ng,
        )
    }

    /// Picks single entries `(row, col)` into a `1 x len` row.
    pub fn pick(&mut self, x: Var, idx: &[(usize, usize)]) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let v = &self.nodes[ix].value;
        if let Some(&(r, c)) = idx.iter().find(|&&(r, c)| r >= v.rows() || c >= v.cols()) {
            return Err(TensorError::IndexOutOfRange {
                op: "pick",
                index: r.max(c),
                bound: v.rows().min(v.cols()),
            });
        }
        let out = Matrix::from_fn(1, idx.len(), |_, k| v.get(idx[k].0, idx[k].1));
        let ng = self.ng(ix);
        self.push(
            "pick",
            out,
            Op::Pick {
                x: ix,
                idx: idx.to_vec(),
            },
            ng,
        )
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.idx(x)?;
        let value = Matrix::scalar(self.nodes[ix].value.sum_squares());
        let ng = self.ng(ix);
        self.push("sum_squares", value, Op::SumSquares(ix), ng)
    }

    /// Sign pattern of every kinked op input (LeakyReLU, ELU, clamp). Two
    /// recordings with equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            let (x, threshold) = match node.op {
                Op::LeakyRelu { x, .. } | Op::Elu { x, .. } => (x, 0.0),
                Op::ClampMin { x, min } => (x, min),
                _ => continue,
            };
            sig.extend(self.nodes[x].value.as_slice().iter().map(|&v| v > threshold));
        }
        sig
    }

    /// Reverse pass from a `1 x 1` loss. A tape supports one backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, TensorError> {
        let il = self.idx(loss)?;
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        if self.nodes[il].value.shape() != (1, 1) {
            return Err(TensorError::NotScalar(self.nodes[il].value.shape()));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Matrix>> = vec![None; il + 1];
        grads[il] = Some(Matrix::scalar(1.0));

        for i in (0..=il).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let mut out = Gradients::default();
        for (name, i) in &self.params {
            let g = grads
                .get(*i)
                .and_then(Clone::clone)
                .unwrap_or_else(|| {
                    let (r, c) = self.nodes[*i].value.shape();
                    Matrix::zeros(r, c)
                });
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let val = |j: usize| &self.nodes[j].value;
        let mut acc = |j: usize, contrib: Matrix| {
            if !self.nodes[j].needs_grad {
                return;
            }
            match &mut grads[j] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                if self.ng(a) {
                    acc(a, g.matmul(&val(b).transpose()).expect("matmul backward shape"));
                }
                if self.ng(b) {
                    acc(b, val(a).transpose().matmul(g).expect("matmul backward shape"));
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(x, row) => {
                acc(*x, g.clone());
                let cols = Matrix::from_fn(1, g.cols(), |_, c| (0..g.rows()).map(|r| g.get(r, c)).sum());
                acc(*row, cols);
            }
            Op::Scale(x, k) => acc(*x, g.map(|v| v * k)),
            Op::MulScalar { scalar, x } => {
                let s = val(*scalar).get(0, 0);
                let ds: f64 = g.as_slice().iter().zip(val(*x).as_slice()).map(|(a, b)| a * b).sum();
                acc(*scalar, Matrix::scalar(ds));
                acc(*x, g.map(|v| v * s));
            }
            Op::Concat { parts, axis } => {
                let mut at = 0;
                for &p in parts {
                    let (r, c) = val(p).shape();
                    let piece = match axis {
                        Axis::Rows => Matrix::from_fn(r, c, |rr, cc| g.get(at + rr, cc)),
                        Axis::Cols => Matrix::from_fn(r, c, |rr, cc| g.get(rr, at + cc)),
                    };
                    at += match axis {
                        Axis::Rows => r,
                        Axis::Cols => c,
                    };
                    acc(p, piece);
                }
            }
            Op::Mean { x, axis } => {
                let (r, c) = val(*x).shape();
                let piece = match axis {
                    Axis::Rows => Matrix::from_fn(r, c, |_, cc| g.get(0, cc) / r as f64),
                    Axis::Cols => Matrix::from_fn(r, c, |rr, _| g.get(rr, 0) / c as f64),
                };
                acc(*x, piece);
            }
            Op::Sum(x) => {
                let (r, c) = val(*x).shape();
                acc(*x, Matrix::filled(r, c, g.get(0, 0)));
            }
            Op::LeakyRelu { x, slope } => {
                let xv = val(*x);
                let d = zip_map(g, xv, |gv, xv| if xv > 0.0 { gv } else { gv * slope });
                acc(*x, d);
            }
            Op::Elu { x, alpha } => {
                let xv = val(*x);
                let d = Matrix::from_fn(xv.rows(), xv.cols(), |r, c| {
                    let gv = g.get(r, c);
                    if xv.get(r, c) > 0.0 {
                        gv
                    } else {
                        gv * (y.get(r, c) + alpha)
                    }
                });
                acc(*x, d);
            }
            Op::Tanh(x) => acc(*x, zip_map(g, y, |gv, yv| gv * (1.0 - yv * yv))),
            Op::Exp(x) => acc(*x, zip_map(g, y, |gv, yv| gv * yv)),
            Op::Ln(x) => acc(*x, zip_map(g, val(*x), |gv, xv| gv / xv)),
            Op::ClampMin { x, min } => {
                acc(*x, zip_map(g, val(*x), |gv, xv| if xv > *min { gv } else { 0.0 }));
            }
            Op::RowSoftmax(x) => {
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    softmax_backward(y.row(r), g.row(r), d.row_mut(r));
                }
                acc(*x, d);
            }
            Op::EdgeScores { src, dst, nbrs } => {
                let n = nbrs.n_rows();
                let mut ds = Matrix::zeros(n, 1);
                let mut dd = Matrix::zeros(n, 1);
                for (i, k, j) in nbrs.entries() {
                    let gk = g.get(0, k);
                    ds.as_mut_slice()[i] += gk;
                    dd.as_mut_slice()[j] += gk;
                }
                acc(*src, ds);
                acc(*dst, dd);
            }
            Op::MaskedSoftmax { x, nbrs } => {
                let mut d = Matrix::zeros(1, nbrs.nnz());
                for i in 0..nbrs.n_rows() {
                    let range = nbrs.range(i);
                    softmax_backward(
                        &y.as_slice()[range.clone()],
                        &g.as_slice()[range.clone()],
                        &mut d.as_mut_slice()[range],
                    );
                }
                acc(*x, d);
            }
            Op::NeighborAggregate { coef, h, nbrs } => {
                let (vc, vh) = (val(*coef), val(*h));
                if self.ng(*coef) {
                    let mut dc = Matrix::zeros(1, nbrs.nnz());
                    for (i, k, j) in nbrs.entries() {
                        let dot: f64 = g.row(i).iter().zip(vh.row(j)).map(|(a, b)| a * b).sum();
                        dc.set(0, k, dot);
                    }
                    acc(*coef, dc);
                }
                if self.ng(*h) {
                    let mut dh = Matrix::zeros(vh.rows(), vh.cols());
                    for (i, k, j) in nbrs.entries() {
                        let c = vc.get(0, k);
                        let gi = g.row(i);
                        for (o, &gv) in dh.row_mut(j).iter_mut().zip(gi) {
                            *o += c * gv;
                        }
                    }
                    acc(*h, dh);
                }
            }
            Op::GatherRows { x, idx } => {
                let (r, c) = val(*x).shape();
                let mut d = Matrix::zeros(r, c);
                for (out_r, &src) in idx.iter().enumerate() {
                    for (o, &gv) in d.row_mut(src).iter_mut().zip(g.row(out_r)) {
                        *o += gv;
                    }
                }
                acc(*x, d);
            }
            Op::GroupMean { x, groups } => {
                let (r, c) = val(*x).shape();
                let mut d = Matrix::zeros(r, c);
                for gi in 0..groups.n_rows() {
                    let members = groups.row(gi);
                    if members.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / members.len() as f64;
                    for &m in members {
                        for (o, &gv) in d.row_mut(m).iter_mut().zip(g.row(gi)) {
                            *o += gv * inv;
                        }
                    }
                }
                acc(*x, d);
            }
            Op::Pick { x, idx } => {
                let (r, c) = val(*x).shape();
                let mut d = Matrix::zeros(r, c);
                for (k, &(rr, cc)) in idx.iter().enumerate() {
                    let cur = d.get(rr, cc);
                    d.set(rr, cc, cur + g.get(0, k));
                }
                acc(*x, d);
            }
            Op::SumSquares(x) => {
                let gs = g.get(0, 0);
                acc(*x, val(*x).map(|v| 2.0 * v * gs));
            }
        }
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    Matrix::from_fn(a.rows(), a.cols(), |r, c| f(a.get(r, c), b.get(r, c)))
}

/// Max-shifted softmax over a slice.
pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in xs.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in xs.iter_mut() {
        *v /= total;
    }
}

fn softmax_backward(y: &[f64], g: &[f64], out: &mut [f64]) {
    let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
    for ((o, &yv), &gv) in out.iter_mut().zip(y).zip(g) {
        *o = yv * (gv - dot);
    }
}
