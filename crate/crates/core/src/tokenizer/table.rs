use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::adjacency::NormalizedAdjacency;
use crate::error::{param_err, shape_err, Error, Result};
use crate::graph::Graph;
use crate::propagation::{ppr_propagate, PropagationConfig};

/// Feature space a token table was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum View {
    Attribute,
    Topology,
}

impl View {
    pub fn tag(self) -> u8 {
        match self {
            View::Attribute => 0,
            View::Topology => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(View::Attribute),
            1 => Some(View::Topology),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            View::Attribute => "attribute",
            View::Topology => "topology",
        }
    }
}

/// Per-node top-k most similar node ids. Row `i` is also the out-neighbour
/// list of `i` in the k-NN digraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenTable {
    view: View,
    n: usize,
    k: usize,
    ids: Vec<u32>,
}

impl TokenTable {
    /// Wraps a row-major `n x k` id grid after checking the row invariants:
    /// ids in range, no self reference, no duplicates within a row.
    pub fn from_rows(view: View, n: usize, k: usize, ids: Vec<u32>) -> Result<Self> {
        if ids.len() != n * k {
            return Err(shape_err!("token table has {} ids, expected {n} x {k}", ids.len()));
        }
        let mut seen = alloc::vec![usize::MAX; n];
        for (i, row) in ids.chunks(k.max(1)).enumerate() {
            for &j in row {
                let j = j as usize;
                if j >= n {
                    return Err(Error::NodeOutOfRange { id: j, n });
                }
                if j == i || seen[j] == i {
                    return Err(param_err!("row {i} repeats id {j} or contains itself"));
                }
                seen[j] = i;
            }
        }
        Ok(Self { view, n, k, ids })
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.k..(i + 1) * self.k]
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }
}

fn norm(row: &[f64]) -> f64 {
    libm::sqrt(row.iter().map(|x| x * x).sum::<f64>())
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (na * nb)
}

/// Descending score, ascending id.
fn rank(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

/// Top-k cosine neighbours of every row of the row-major `n x dim` matrix.
///
/// Dot products skip zero entries of the candidate row. Skipped terms are
/// exact zeros, so scores are bitwise equal to a dense left-to-right sum.
pub fn cosine_topk(features: &[f64], dim: usize, k: usize, view: View) -> Result<TokenTable> {
    if dim == 0 || !features.len().is_multiple_of(dim) {
        return Err(shape_err!("feature buffer of {} entries is not a multiple of {dim}", features.len()));
    }
    let n = features.len() / dim;
    if k >= n {
        return Err(Error::TooManyTokens { k, n });
    }
    if k == 0 {
        return Err(param_err!("k must be at least 1"));
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("similarity features".into()));
    }
    let rows: Vec<&[f64]> = features.chunks(dim).collect();
    let norms: Vec<f64> = rows.iter().map(|r| norm(r)).collect();
    let nonzeros: Vec<Vec<(u32, f64)>> = rows
        .iter()
        .map(|r| r.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(l, &x)| (l as u32, x)).collect())
        .collect();

    let mut ids = Vec::with_capacity(n * k);
    let mut scores: Vec<(f64, u32)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let a = rows[i];
        scores.clear();
        for j in (0..n).filter(|&j| j != i) {
            let score = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                let dot: f64 = nonzeros[j].iter().map(|&(l, b)| a[l as usize] * b).sum();
                dot / (norms[i] * norms[j])
            };
            scores.push((score, j as u32));
        }
        if k < scores.len() {
            scores.select_nth_unstable_by(k - 1, rank);
        }
        let top = &mut scores[..k];
        top.sort_unstable_by(rank);
        ids.extend(top.iter().map(|&(_, j)| j));
    }
    Ok(TokenTable { view, n, k, ids })
}

/// Attribute-view table from raw features and topology-view table from
/// PPR-propagated features.
pub fn build_token_tables(
    g: &Graph,
    adj: &NormalizedAdjacency,
    prop: &PropagationConfig,
    k: usize,
) -> Result<(TokenTable, TokenTable)> {
    let x = g.features_f64();
    let attribute = cosine_topk(&x, g.feature_dim(), k, View::Attribute)?;
    let propagated = ppr_propagate(adj, &x, g.feature_dim(), prop)?;
    let topology = cosine_topk(&propagated, g.feature_dim(), k, View::Topology)?;
    Ok((attribute, topology))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identical_rows_fall_back_to_id_order() {
        let t = cosine_topk(&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0], 2, 2, View::Attribute).unwrap();
        assert_eq!(t.row(0), &[1, 2]);
        assert_eq!(t.row(1), &[0, 2]);
        assert_eq!(t.row(2), &[0, 1]);
    }

    #[test]
    fn orthogonal_rows() {
        let mut x = vec![0.0; 16];
        for i in 0..4 {
            x[i * 4 + i] = 1.0;
        }
        let t = cosine_topk(&x, 4, 2, View::Attribute).unwrap();
        assert_eq!(t.row(0), &[1, 2]);
        assert_eq!(t.row(1), &[0, 2]);
        assert_eq!(t.row(3), &[0, 1]);
    }

    #[test]
    fn orders_by_similarity() {
        let x = [1.0, 0.0, 0.9, 0.1, 0.0, 1.0, 0.5, 0.5];
        let t = cosine_topk(&x, 2, 3, View::Topology).unwrap();
        assert_eq!(t.row(0), &[1, 3, 2]);
        assert_eq!(t.row(2), &[3, 1, 0]);
        assert_eq!(t.view(), View::Topology);
    }

    #[test]
    fn zero_rows_score_zero() {
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
        let t = cosine_topk(&[0.0, 0.0, 1.0, 0.0, -1.0, 0.0], 2, 1, View::Attribute).unwrap();
        // Row 2 is opposite to row 1 (score -1) and orthogonal-by-convention to row 0.
        assert_eq!(t.row(2), &[0]);
        assert_eq!(t.row(0), &[1]);
    }

    #[test]
    fn rejects_k_at_least_n() {
        assert_eq!(
            cosine_topk(&[1.0, 2.0, 3.0], 1, 3, View::Attribute).unwrap_err(),
            Error::TooManyTokens { k: 3, n: 3 }
        );
    }

    #[test]
    fn from_rows_checks_invariants() {
        assert!(TokenTable::from_rows(View::Attribute, 3, 1, vec![1, 2, 0]).is_ok());
        assert!(TokenTable::from_rows(View::Attribute, 3, 1, vec![0, 2, 0]).is_err());
        assert!(TokenTable::from_rows(View::Attribute, 3, 2, vec![1, 1, 0, 2, 0, 1]).is_err());
        assert!(TokenTable::from_rows(View::Attribute, 2, 1, vec![1, 5]).is_err());
    }
}
