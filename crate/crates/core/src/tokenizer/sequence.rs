use alloc::vec::Vec;

use rand::seq::index;

use super::{swap_tokens, SwapConfig, TokenTable, View};
use crate::error::{param_err, Result};
use crate::graph::Graph;
use crate::rng::{self, streams};

/// How the token ids of each node's sequences are drawn from a table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SequenceStrategy {
    /// Row 0 is the table row; rows `1..=s` come from token swapping.
    Swap(SwapConfig),
    /// A single sequence holding the whole table row.
    Single,
    /// Row 0 is the first `k` ids of the table row; rows `1..=s` are `k` ids
    /// drawn without replacement from the full row.
    Subsample { k: usize, s: usize },
}

/// Token-id grids of shape `(1 + s) x (1 + k)` for every node.
///
/// Position 0 of every row is the target node. Features are not copied into
/// the batch; [`SequenceBatch::materialize`] gathers them from the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceBatch {
    view: View,
    n: usize,
    k: usize,
    s: usize,
    seed: u64,
    ids: Vec<u32>,
}

impl SequenceBatch {
    pub fn from_parts(view: View, n: usize, k: usize, s: usize, seed: u64, ids: Vec<u32>) -> Result<Self> {
        if ids.len() != n * (1 + s) * (1 + k) {
            return Err(param_err!("sequence batch holds {} ids, expected {n} x {} x {}", ids.len(), 1 + s, 1 + k));
        }
        if let Some(&bad) = ids.iter().find(|&&v| v as usize >= n) {
            return Err(crate::error::Error::NodeOutOfRange { id: bad as usize, n });
        }
        let batch = Self { view, n, k, s, seed, ids };
        if let Some(i) = (0..n).find(|&i| (0..=s).any(|j| batch.row(i, j)[0] as usize != i)) {
            return Err(param_err!("sequences of node {i} do not start with the node itself"));
        }
        Ok(batch)
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Tokens per sequence besides the target.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Augmented sequences per node.
    pub fn s(&self) -> usize {
        self.s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn seq_len(&self) -> usize {
        1 + self.k
    }

    pub fn seqs_per_node(&self) -> usize {
        1 + self.s
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// The `(1 + s) x (1 + k)` grid of node `i`.
    pub fn grid(&self, i: usize) -> &[u32] {
        let len = self.seqs_per_node() * self.seq_len();
        &self.ids[i * len..(i + 1) * len]
    }

    pub fn row(&self, i: usize, j: usize) -> &[u32] {
        let l = self.seq_len();
        &self.grid(i)[j * l..(j + 1) * l]
    }

    /// Raw-feature tensor `(1 + s) x (1 + k) x d` of node `i`, row-major.
    pub fn materialize(&self, g: &Graph, i: usize) -> Vec<f64> {
        self.grid(i).iter().flat_map(|&v| g.feature_row(v as usize).iter().map(|&x| x as f64)).collect()
    }
}

/// Builds every node's sequences from `table`.
///
/// Node `i` draws from its own random stream keyed by `(seed, view, i)`.
pub fn build_sequences(table: &TokenTable, strategy: SequenceStrategy, seed: u64) -> Result<SequenceBatch> {
    let n = table.node_count();
    let (k, s) = match strategy {
        SequenceStrategy::Swap(cfg) => {
            cfg.validate()?;
            (table.k(), cfg.s)
        }
        SequenceStrategy::Single => (table.k(), 0),
        SequenceStrategy::Subsample { k, s } => {
            if k == 0 || k > table.k() || s == 0 {
                return Err(param_err!("subsample needs 1 <= k <= {} and s >= 1, got k={k} s={s}", table.k()));
            }
            (k, s)
        }
    };
    let mut ids = Vec::with_capacity(n * (1 + s) * (1 + k));
    for i in 0..n {
        let stream = streams::SEQUENCE_BASE + ((table.view().tag() as u64) << 32) + i as u64;
        let mut rng = rng::stream(seed, stream);
        let row = table.row(i);
        ids.push(i as u32);
        ids.extend_from_slice(&row[..k]);
        for _ in 0..s {
            ids.push(i as u32);
            match strategy {
                SequenceStrategy::Swap(cfg) => ids.extend(swap_tokens(table, i, cfg.p, cfg.t, &mut rng)),
                SequenceStrategy::Subsample { .. } => {
                    ids.extend(index::sample(&mut rng, row.len(), k).into_iter().map(|l| row[l]))
                }
                SequenceStrategy::Single => unreachable!(),
            }
        }
    }
    Ok(SequenceBatch { view: table.view(), n, k, s, seed, ids })
}
