use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::{ParamStore, Tensor};
use crate::error::{param_err, shape_err, Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-approximated GELU.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::tanh(GELU_C * (x + GELU_A * x * x * x)))
}

fn gelu_grad(x: f64) -> f64 {
    let th = libm::tanh(GELU_C * (x + GELU_A * x * x * x));
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Mean { input: Var, axis: usize },
    Reshape(Var),
    SelectRows { input: Var, rows: Vec<usize> },
    SliceCols { input: Var, start: usize },
    Softmax(Var),
    LayerNorm { input: Var, gain: Var, bias: Var, normalized: Vec<f64>, inv_std: Vec<f64> },
    Gelu(Var),
    Mask { input: Var, mask: Vec<f64> },
    BlockQk { q: Var, k: Var, block: usize },
    BlockPv { p: Var, v: Var, block: usize },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    CenterAlign { input: Var, group: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Adds the gradients of `vars` (as returned by [`Tape::params`]) into the
    /// store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore, vars: &[Var]) {
        for (idx, &v) in vars.iter().enumerate() {
            if let Some(g) = self.get(v) {
                for (acc, x) in store.grad_mut(idx).data_mut().iter_mut().zip(g) {
                    *acc += x;
                }
            }
        }
    }
}

/// Per-group center alignment: `1 - mean_j cos(row_j, center)`.
fn center_alignment_group(rows: &[f64], group: usize, cols: usize) -> f64 {
    let mut center = vec![0.0; cols];
    for r in rows.chunks(cols) {
        for (c, x) in center.iter_mut().zip(r) {
            *c += x;
        }
    }
    for c in center.iter_mut() {
        *c /= group as f64;
    }
    let cn = libm::sqrt(center.iter().map(|x| x * x).sum());
    let mut total = 0.0;
    for r in rows.chunks(cols) {
        let rn = libm::sqrt(r.iter().map(|x| x * x).sum());
        if rn > 0.0 && cn > 0.0 {
            let dot: f64 = r.iter().zip(&center).map(|(a, b)| a * b).sum();
            total += dot / (rn * cn);
        }
    }
    1.0 - total / group as f64
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that gradients flow into.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A value treated as data: no gradient is tracked for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copies every parameter onto the tape as a leaf, in store order.
    pub fn params(&mut self, store: &ParamStore) -> Vec<Var> {
        (0..store.len()).map(|i| self.leaf(store.value(i).clone())).collect()
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        let t = self.value(v);
        if t.rank() != 2 {
            return Err(shape_err!("{what} expects a matrix, got shape {:?}", t.shape()));
        }
        Ok((t.shape()[0], t.shape()[1]))
    }

    /// `[r, p] x [p, q] -> [r, q]`. Zero entries of the left operand are
    /// skipped, which makes sparse data inputs cheap.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, p) = self.matrix_dims(a, "matmul")?;
        let (p2, q) = self.matrix_dims(b, "matmul")?;
        if p != p2 {
            return Err(shape_err!("matmul inner dimensions {p} and {p2} differ"));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; r * q];
        for i in 0..r {
            let dst = &mut out[i * q..(i + 1) * q];
            for l in 0..p {
                let x = av[i * p + l];
                if x != 0.0 {
                    for (o, &y) in dst.iter_mut().zip(&bv[l * q..(l + 1) * q]) {
                        *o += x * y;
                    }
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(r, q, out)?, Op::MatMul(a, b), needs))
    }

    /// Elementwise sum of equal shapes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err!(
                "add of shapes {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            ));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(self.value(a).shape(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add(a, b), needs))
    }

    /// Adds a vector to every row (last axis) of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let cols = self.value(a).cols();
        if self.value(bias).rank() != 1 || self.value(bias).len() != cols {
            return Err(shape_err!("bias of shape {:?} for rows of width {cols}", self.value(bias).shape()));
        }
        let bv = self.value(bias).data();
        let data = self.value(a).data().chunks(cols).flat_map(|r| r.iter().zip(bv).map(|(x, y)| x + y)).collect();
        let t = Tensor::new(self.value(a).shape(), data)?;
        let needs = self.needs(a) || self.needs(bias);
        Ok(self.push(t, Op::AddRow(a, bias), needs))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let src = self.value(a);
        let t = Tensor::new(src.shape(), src.data().iter().map(|x| c * x).collect()).expect("same shape");
        let needs = self.needs(a);
        self.push(t, Op::Scale(a, c), needs)
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| shape_err!("concat of nothing"))?;
        let lead: Vec<usize> = {
            let s = self.value(first).shape();
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let mut width = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(shape_err!("concat of incompatible shape {s:?}"));
            }
            width += s[s.len() - 1];
        }
        let rows = self.value(first).rows();
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(width);
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::new(&shape, data)?, Op::Concat(parts.to_vec()), needs))
    }

    fn axis_strides(shape: &[usize], axis: usize) -> (usize, usize, usize) {
        let outer = shape[..axis].iter().product();
        let inner = shape[axis + 1..].iter().product();
        (outer, shape[axis], inner)
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.value(a).shape().to_vec();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(shape_err!("mean over axis {axis} of shape {shape:?}"));
        }
        let (outer, len, inner) = Self::axis_strides(&shape, axis);
        let src = self.value(a).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let base = (o * len + l) * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        for x in out.iter_mut() {
            *x /= len as f64;
        }
        let mut new_shape = shape;
        new_shape.remove(axis);
        let needs = self.needs(a);
        Ok(self.push(Tensor::new(&new_shape, out)?, Op::Mean { input: a, axis }, needs))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Reshape(a), needs))
    }

    /// Gathers rows (last-axis vectors) into a `[rows.len(), cols]` matrix.
    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let src = self.value(a);
        let (n, cols) = (src.rows(), src.cols());
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(shape_err!("row {bad} out of range for {n} rows"));
        }
        let data = rows.iter().flat_map(|&r| src.row(r).iter().copied()).collect();
        let t = Tensor::matrix(rows.len(), cols, data)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::SelectRows { input: a, rows: rows.to_vec() }, needs))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims(a, "slice_cols")?;
        if start > end || end > c {
            return Err(shape_err!("column range {start}..{end} of width {c}"));
        }
        let src = self.value(a);
        let data = (0..r).flat_map(|i| src.row(i)[start..end].iter().copied()).collect();
        let t = Tensor::matrix(r, end - start, data)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::SliceCols { input: a, start }, needs))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let cols = src.cols();
        if cols == 0 || src.rank() == 0 {
            return Err(Error::Empty("softmax over an empty row".into()));
        }
        let mut out = src.data().to_vec();
        for row in out.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = libm::exp(*x - max);
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        let t = Tensor::new(src.shape(), out)?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Softmax(a), needs))
    }

    /// Normalizes the last axis to zero mean and unit variance, then applies
    /// `gain` and `bias`.
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var) -> Result<Var> {
        let cols = self.value(a).cols();
        for p in [gain, bias] {
            if self.value(p).rank() != 1 || self.value(p).len() != cols {
                return Err(shape_err!("layer norm parameter {:?} for width {cols}", self.value(p).shape()));
            }
        }
        if cols == 0 {
            return Err(Error::Empty("layer norm over an empty row".into()));
        }
        let src = self.value(a);
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut normalized = Vec::with_capacity(src.len());
        let mut inv_std = Vec::with_capacity(src.rows());
        let mut out = Vec::with_capacity(src.len());
        for row in src.data().chunks(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            inv_std.push(is);
            for (l, x) in row.iter().enumerate() {
                let xh = (x - mean) * is;
                normalized.push(xh);
                out.push(g[l] * xh + b[l]);
            }
        }
        let t = Tensor::new(src.shape(), out)?;
        let needs = self.needs(a) || self.needs(gain) || self.needs(bias);
        Ok(self.push(t, Op::LayerNorm { input: a, gain, bias, normalized, inv_std }, needs))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let t = Tensor::new(src.shape(), src.data().iter().map(|&x| gelu_scalar(x)).collect()).expect("same shape");
        let needs = self.needs(a);
        self.push(t, Op::Gelu(a), needs)
    }

    /// Multiplies by a fixed mask; the building block of dropout.
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let src = self.value(a);
        if mask.len() != src.len() {
            return Err(shape_err!("mask of {} entries for {} values", mask.len(), src.len()));
        }
        let t = Tensor::new(src.shape(), src.data().iter().zip(&mask).map(|(x, m)| x * m).collect())?;
        let needs = self.needs(a);
        Ok(self.push(t, Op::Mask { input: a, mask }, needs))
    }

    /// Inverted dropout: zeroes each entry with probability `rate` and scales
    /// survivors by `1 / (1 - rate)`. A rate of zero records nothing.
    pub fn dropout<R: RngCore + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(param_err!("dropout rate must lie in [0, 1), got {rate}"));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask = (0..self.value(a).len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
        self.mask(a, mask)
    }

    fn block_dims(&self, a: Var, block: usize, what: &str) -> Result<(usize, usize)> {
        let (r, c) = self.matrix_dims(a, what)?;
        if block == 0 || r % block != 0 {
            return Err(shape_err!("{what}: {r} rows do not split into blocks of {block}"));
        }
        Ok((r, c))
    }

    /// Per block of `block` consecutive rows, `Q_b K_b^T`. Output is
    /// `[rows, block]`.
    pub fn block_qk(&mut self, q: Var, k: Var, block: usize) -> Result<Var> {
        let (r, c) = self.block_dims(q, block, "block_qk")?;
        if self.value(k).shape() != [r, c] {
            return Err(shape_err!("block_qk key shape {:?} vs query [{r}, {c}]", self.value(k).shape()));
        }
        let (qv, kv) = (self.value(q).data(), self.value(k).data());
        let mut out = vec![0.0; r * block];
        for b in 0..r / block {
            for i in 0..block {
                let qi = &qv[(b * block + i) * c..(b * block + i + 1) * c];
                for j in 0..block {
                    let kj = &kv[(b * block + j) * c..(b * block + j + 1) * c];
                    out[(b * block + i) * block + j] = qi.iter().zip(kj).map(|(x, y)| x * y).sum();
                }
            }
        }
        let needs = self.needs(q) || self.needs(k);
        Ok(self.push(Tensor::matrix(r, block, out)?, Op::BlockQk { q, k, block }, needs))
    }

    /// Per block, `P_b V_b` with `P` of shape `[rows, block]`.
    pub fn block_pv(&mut self, p: Var, v: Var, block: usize) -> Result<Var> {
        let (r, c) = self.block_dims(v, block, "block_pv")?;
        if self.value(p).shape() != [r, block] {
            return Err(shape_err!("block_pv weights {:?} vs [{r}, {block}]", self.value(p).shape()));
        }
        let (pv, vv) = (self.value(p).data(), self.value(v).data());
        let mut out = vec![0.0; r * c];
        for b in 0..r / block {
            for i in 0..block {
                let dst = &mut out[(b * block + i) * c..(b * block + i + 1) * c];
                for j in 0..block {
                    let w = pv[(b * block + i) * block + j];
                    for (o, &x) in dst.iter_mut().zip(&vv[(b * block + j) * c..(b * block + j + 1) * c]) {
                        *o += w * x;
                    }
                }
            }
        }
        let needs = self.needs(p) || self.needs(v);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::BlockPv { p, v, block }, needs))
    }

    /// Mean over rows of `-ln softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (b, c) = self.matrix_dims(logits, "cross_entropy")?;
        if b == 0 {
            return Err(Error::Empty("cross entropy over no rows".into()));
        }
        if labels.len() != b || labels.iter().any(|&y| y >= c) {
            return Err(shape_err!("{} labels for {b} rows of {c} classes", labels.len()));
        }
        let mut probs = Vec::with_capacity(b * c);
        let mut loss = 0.0;
        for (row, &y) in self.value(logits).data().chunks(c).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|x| libm::exp(x - max)).sum();
            let log_z = max + libm::log(sum);
            loss += log_z - row[y];
            probs.extend(row.iter().map(|x| libm::exp(x - log_z)));
        }
        let needs = self.needs(logits);
        let op = Op::CrossEntropy { logits, labels: labels.to_vec(), probs };
        Ok(self.push(Tensor::scalar(loss / b as f64), op, needs))
    }

    /// Mean over consecutive groups of `group` rows of
    /// `1 - mean_j cos(row_j, group center)`; cosine with a zero vector is 0.
    pub fn center_alignment(&mut self, a: Var, group: usize) -> Result<Var> {
        let (r, c) = self.block_dims(a, group, "center_alignment")?;
        if r == 0 {
            return Err(Error::Empty("center alignment over no rows".into()));
        }
        let groups = r / group;
        let src = self.value(a).data();
        let total: f64 = src.chunks(group * c).map(|g| center_alignment_group(g, group, c)).sum();
        let needs = self.needs(a);
        Ok(self.push(Tensor::scalar(total / groups as f64), Op::CenterAlign { input: a, group }, needs))
    }

    /// Reverse pass from a one-element output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).len() != 1 {
            return Err(shape_err!("backward from non-scalar shape {:?}", self.value(output).shape()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(vec![1.0]);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.needs_grad {
                self.propagate(&node.op, &node.value, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.needs_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.needs(v) {
            return None;
        }
        let len = self.value(v).len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (r, p) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let q = self.value(*b).shape()[1];
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(da) = self.acc(grads, *a) {
                    for i in 0..r {
                        let gi = &g[i * q..(i + 1) * q];
                        for l in 0..p {
                            da[i * p + l] += gi.iter().zip(&bv[l * q..(l + 1) * q]).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if let Some(db) = self.acc(grads, *b) {
                    for i in 0..r {
                        let gi = &g[i * q..(i + 1) * q];
                        for l in 0..p {
                            let x = av[i * p + l];
                            if x != 0.0 {
                                for (d, &y) in db[l * q..(l + 1) * q].iter_mut().zip(gi) {
                                    *d += x * y;
                                }
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = self.acc(grads, v) {
                        d.iter_mut().zip(g).for_each(|(d, x)| *d += x);
                    }
                }
            }
            Op::AddRow(a, bias) => {
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().zip(g).for_each(|(d, x)| *d += x);
                }
                let cols = self.value(*bias).len();
                if let Some(d) = self.acc(grads, *bias) {
                    for row in g.chunks(cols) {
                        d.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().zip(g).for_each(|(d, x)| *d += c * x);
                }
            }
            Op::Concat(parts) => {
                let width = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if let Some(d) = self.acc(grads, p) {
                        for (r, dst) in d.chunks_mut(w.max(1)).enumerate() {
                            for (x, y) in dst.iter_mut().zip(&g[r * width + offset..r * width + offset + w]) {
                                *x += y;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Mean { input, axis } => {
                let (outer, len, inner) = Self::axis_strides(self.value(*input).shape(), *axis);
                if let Some(d) = self.acc(grads, *input) {
                    for o in 0..outer {
                        for l in 0..len {
                            for i in 0..inner {
                                d[(o * len + l) * inner + i] += g[o * inner + i] / len as f64;
                            }
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().zip(g).for_each(|(d, x)| *d += x);
                }
            }
            Op::SelectRows { input, rows } => {
                let cols = out.cols();
                if let Some(d) = self.acc(grads, *input) {
                    for (k, &r) in rows.iter().enumerate() {
                        for (x, y) in d[r * cols..(r + 1) * cols].iter_mut().zip(&g[k * cols..(k + 1) * cols]) {
                            *x += y;
                        }
                    }
                }
            }
            Op::SliceCols { input, start } => {
                let (w, c) = (out.cols(), self.value(*input).cols());
                if let Some(d) = self.acc(grads, *input) {
                    for (r, src) in g.chunks(w.max(1)).enumerate() {
                        for (x, y) in d[r * c + start..r * c + start + w].iter_mut().zip(src) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                let cols = out.cols();
                if let Some(d) = self.acc(grads, *a) {
                    for ((dr, yr), gr) in d.chunks_mut(cols).zip(out.data().chunks(cols)).zip(g.chunks(cols)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(y, x)| y * x).sum();
                        for ((dx, y), gx) in dr.iter_mut().zip(yr).zip(gr) {
                            *dx += y * (gx - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { input, gain, bias, normalized, inv_std } => {
                let cols = out.cols();
                let gv = self.value(*gain).data();
                if let Some(d) = self.acc(grads, *input) {
                    let mut dxh = vec![0.0; cols];
                    for (r, dr) in d.chunks_mut(cols).enumerate() {
                        let gr = &g[r * cols..(r + 1) * cols];
                        let xr = &normalized[r * cols..(r + 1) * cols];
                        for l in 0..cols {
                            dxh[l] = gr[l] * gv[l];
                        }
                        let m1 = dxh.iter().sum::<f64>() / cols as f64;
                        let m2 = dxh.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        for l in 0..cols {
                            dr[l] += inv_std[r] * (dxh[l] - m1 - xr[l] * m2);
                        }
                    }
                }
                if let Some(d) = self.acc(grads, *gain) {
                    for (gr, xr) in g.chunks(cols).zip(normalized.chunks(cols)) {
                        for l in 0..cols {
                            d[l] += gr[l] * xr[l];
                        }
                    }
                }
                if let Some(d) = self.acc(grads, *bias) {
                    for gr in g.chunks(cols) {
                        d.iter_mut().zip(gr).for_each(|(d, x)| *d += x);
                    }
                }
            }
            Op::Gelu(a) => {
                let xs = self.value(*a).data();
                if let Some(d) = self.acc(grads, *a) {
                    for ((dx, &x), gx) in d.iter_mut().zip(xs).zip(g) {
                        *dx += gx * gelu_grad(x);
                    }
                }
            }
            Op::Mask { input, mask } => {
                if let Some(d) = self.acc(grads, *input) {
                    for ((dx, m), gx) in d.iter_mut().zip(mask).zip(g) {
                        *dx += m * gx;
                    }
                }
            }
            Op::BlockQk { q, k, block } => {
                let c = self.value(*q).cols();
                let r = self.value(*q).rows();
                let (qv, kv) = (self.value(*q).data(), self.value(*k).data());
                let block = *block;
                if let Some(dq) = self.acc(grads, *q) {
                    for b in 0..r / block {
                        for i in 0..block {
                            let row = b * block + i;
                            for j in 0..block {
                                let w = g[row * block + j];
                                let kj = &kv[(b * block + j) * c..(b * block + j + 1) * c];
                                for (x, y) in dq[row * c..(row + 1) * c].iter_mut().zip(kj) {
                                    *x += w * y;
                                }
                            }
                        }
                    }
                }
                if let Some(dk) = self.acc(grads, *k) {
                    for b in 0..r / block {
                        for i in 0..block {
                            let row = b * block + i;
                            let qi = &qv[row * c..(row + 1) * c];
                            for j in 0..block {
                                let w = g[row * block + j];
                                let col = b * block + j;
                                for (x, y) in dk[col * c..(col + 1) * c].iter_mut().zip(qi) {
                                    *x += w * y;
                                }
                            }
                        }
                    }
                }
            }
            Op::BlockPv { p, v, block } => {
                let c = self.value(*v).cols();
                let r = self.value(*v).rows();
                let (pv, vv) = (self.value(*p).data(), self.value(*v).data());
                let block = *block;
                if let Some(dp) = self.acc(grads, *p) {
                    for b in 0..r / block {
                        for i in 0..block {
                            let row = b * block + i;
                            let gi = &g[row * c..(row + 1) * c];
                            for j in 0..block {
                                let vj = &vv[(b * block + j) * c..(b * block + j + 1) * c];
                                dp[row * block + j] += gi.iter().zip(vj).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                }
                if let Some(dv) = self.acc(grads, *v) {
                    for b in 0..r / block {
                        for i in 0..block {
                            let row = b * block + i;
                            let gi = &g[row * c..(row + 1) * c];
                            for j in 0..block {
                                let w = pv[row * block + j];
                                let col = b * block + j;
                                for (x, y) in dv[col * c..(col + 1) * c].iter_mut().zip(gi) {
                                    *x += w * y;
                                }
                            }
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let b = labels.len();
                let c = probs.len() / b;
                let scale = g[0] / b as f64;
                if let Some(d) = self.acc(grads, *logits) {
                    for (r, &y) in labels.iter().enumerate() {
                        for l in 0..c {
                            let onehot = if l == y { 1.0 } else { 0.0 };
                            d[r * c + l] += scale * (probs[r * c + l] - onehot);
                        }
                    }
                }
            }
            Op::CenterAlign { input, group } => {
                let group = *group;
                let c = self.value(*input).cols();
                let src = self.value(*input).data();
                let groups = src.len() / (group * c);
                let scale = g[0] / groups as f64;
                if let Some(d) = self.acc(grads, *input) {
                    for (rows, drows) in src.chunks(group * c).zip(d.chunks_mut(group * c)) {
                        center_alignment_backward(rows, group, c, scale, drows);
                    }
                }
            }
        }
    }
}

/// Gradient of one group's center alignment term, scaled and accumulated.
fn center_alignment_backward(rows: &[f64], group: usize, cols: usize, scale: f64, out: &mut [f64]) {
    let gs = group as f64;
    let mut center = vec![0.0; cols];
    for r in rows.chunks(cols) {
        center.iter_mut().zip(r).for_each(|(c, x)| *c += x / gs);
    }
    let cn = libm::sqrt(center.iter().map(|x| x * x).sum());
    if cn == 0.0 {
        return;
    }
    // d cos(z, c) / dz = c / (|z||c|) - cos * z / |z|^2, symmetric in c.
    let mut dcenter = vec![0.0; cols];
    for (r, dr) in rows.chunks(cols).zip(out.chunks_mut(cols)) {
        let rn = libm::sqrt(r.iter().map(|x| x * x).sum());
        if rn == 0.0 {
            continue;
        }
        let cos = r.iter().zip(&center).map(|(a, b)| a * b).sum::<f64>() / (rn * cn);
        for l in 0..cols {
            let dz = center[l] / (rn * cn) - cos * r[l] / (rn * rn);
            let dc = r[l] / (rn * cn) - cos * center[l] / (cn * cn);
            dr[l] -= scale * dz / gs;
            dcenter[l] -= scale * dc / gs;
        }
    }
    for dr in out.chunks_mut(cols) {
        dr.iter_mut().zip(&dcenter).for_each(|(d, dc)| *d += dc / gs);
    }
}
