//! Symmetrically normalized adjacency with self-loops.

use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::graph::Graph;

/// `(D + I)^{-1/2} (A + I) (D + I)^{-1/2}` in CSR form.
///
/// Row `i` holds column indices in ascending order, including the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    offsets: Vec<usize>,
    columns: Vec<u32>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_graph(g: &Graph) -> Self {
        let n = g.node_count();
        let inv_sqrt: Vec<f64> = (0..n).map(|i| (g.degree(i) + 1) as f64).collect();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut columns = Vec::with_capacity(2 * g.edge_count() + n);
        let mut values = Vec::with_capacity(columns.capacity());
        offsets.push(0);
        for i in 0..n {
            let nbrs = g.neighbors(i);
            let split = nbrs.partition_point(|&j| (j as usize) < i);
            let row = nbrs[..split]
                .iter()
                .copied()
                .chain(core::iter::once(i as u32))
                .chain(nbrs[split..].iter().copied());
            for j in row {
                columns.push(j);
                // The product is commutative, so (i, j) and (j, i) are bitwise equal.
                values.push(1.0 / libm::sqrt(inv_sqrt[i] * inv_sqrt[j as usize]));
            }
            offsets.push(columns.len());
        }
        Self { n, offsets, columns, values }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[i]..self.offsets[i + 1];
        self.columns[span.clone()].iter().map(|&c| c as usize).zip(self.values[span].iter().copied())
    }

    /// Entry `(i, j)`, zero outside the stored pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.offsets[i]..self.offsets[i + 1];
        match self.columns[span.clone()].binary_search(&(j as u32)) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Dense row-major copy; intended for small matrices in tests and checks.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = alloc::vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                dense[i * self.n + j] = v;
            }
        }
        dense
    }

    /// `out = self * x` where `x` is row-major `n x cols`.
    pub fn spmm(&self, x: &[f64], cols: usize, out: &mut [f64]) -> Result<()> {
        if x.len() != self.n * cols || out.len() != x.len() {
            return Err(shape_err!(
                "spmm expects {} x {cols} operands, got {} and {}",
                self.n,
                x.len(),
                out.len()
            ));
        }
        for i in 0..self.n {
            let dst = &mut out[i * cols..(i + 1) * cols];
            dst.fill(0.0);
            for (j, a) in self.row(i) {
                for (o, &v) in dst.iter_mut().zip(&x[j * cols..(j + 1) * cols]) {
                    *o += a * v;
                }
            }
        }
        Ok(())
    }
}
