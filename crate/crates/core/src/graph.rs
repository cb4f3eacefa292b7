//! Undirected attributed graphs in compressed sparse row form.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{param_err, shape_err, Error, Result};

/// Counts of edge-list lines that were discarded while building a [`Graph`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeReport {
    pub self_loops: usize,
    pub duplicates: usize,
}

/// An undirected graph with node features and integer class labels.
///
/// Adjacency is stored symmetrically: every undirected edge `{u, v}` appears
/// in the neighbour list of both endpoints, and each list is sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    dim: usize,
    classes: usize,
    features: Vec<f32>,
    labels: Vec<u32>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl Graph {
    /// Builds a graph from a row-major `n x dim` feature buffer, labels and an
    /// undirected edge list. Self-loops and repeated edges (in either
    /// orientation) are dropped and counted in the returned report.
    pub fn from_edges(
        dim: usize,
        features: Vec<f32>,
        labels: Vec<u32>,
        classes: usize,
        edges: &[(usize, usize)],
    ) -> Result<(Self, EdgeReport)> {
        let n = labels.len();
        if features.len() != n * dim {
            return Err(shape_err!(
                "feature buffer has {} entries, expected {n} x {dim}",
                features.len()
            ));
        }
        if let Some(pos) = features.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteFeature { node: pos / dim.max(1), dim: pos % dim.max(1) });
        }
        for (node, &label) in labels.iter().enumerate() {
            if label as usize >= classes {
                return Err(Error::LabelOutOfRange { node, label: label as usize, classes });
            }
        }

        let mut report = EdgeReport::default();
        let mut pairs = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            for id in [u, v] {
                if id >= n {
                    return Err(Error::NodeOutOfRange { id, n });
                }
            }
            if u == v {
                report.self_loops += 1;
                continue;
            }
            pairs.push(if u < v { (u as u32, v as u32) } else { (v as u32, u as u32) });
        }
        let before = pairs.len();
        pairs.sort_unstable();
        pairs.dedup();
        report.duplicates = before - pairs.len();

        let mut degree = vec![0usize; n];
        for &(u, v) in &pairs {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..n].to_vec();
        let mut neighbors = vec![0u32; offsets[n]];
        for &(u, v) in &pairs {
            neighbors[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            neighbors[cursor[v as usize]] = u;
            cursor[v as usize] += 1;
        }
        for i in 0..n {
            neighbors[offsets[i]..offsets[i + 1]].sort_unstable();
        }

        Ok((Self { n, dim, classes, features, labels, offsets, neighbors }, report))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Undirected edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .map(|&v| v as usize)
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Features widened to 64-bit, row-major.
    pub fn features_f64(&self) -> Vec<f64> {
        self.features.iter().map(|&x| x as f64).collect()
    }

    /// Per-class node counts.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.classes];
        for &y in &self.labels {
            sizes[y as usize] += 1;
        }
        sizes
    }
}

/// Fraction of edges whose endpoints share a label; 1.0 for an edgeless graph.
pub fn edge_homophily(g: &Graph) -> f64 {
    let total = g.edge_count();
    if total == 0 {
        return 1.0;
    }
    let same = g.edges().filter(|&(u, v)| g.labels[u] == g.labels[v]).count();
    same as f64 / total as f64
}

/// Summary row in the layout of the dataset-statistics table.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub labels: usize,
    pub homophily: f64,
}

pub fn dataset_stats(g: &Graph) -> DatasetStats {
    DatasetStats {
        nodes: g.node_count(),
        edges: g.edge_count(),
        features: g.feature_dim(),
        labels: g.class_count(),
        homophily: edge_homophily(g),
    }
}

/// Infers the class count as `max(label) + 1`, or validates it against an
/// explicitly declared count.
pub fn class_count_for(labels: &[u32], declared: Option<usize>) -> Result<usize> {
    let inferred = labels.iter().map(|&y| y as usize + 1).max().unwrap_or(0);
    match declared {
        Some(c) if c < inferred => {
            let node = labels.iter().position(|&y| y as usize >= c).unwrap();
            Err(Error::LabelOutOfRange { node, label: labels[node] as usize, classes: c })
        }
        Some(c) => Ok(c),
        None if inferred == 0 => Err(param_err!("no labels")),
        None => Ok(inferred),
    }
}
