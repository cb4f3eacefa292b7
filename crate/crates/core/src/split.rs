//! Stratified train / validation / test partitions.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Validation,
    Test,
}

/// Dense is 50 / 25 / 25 per class, sparse is 2.5 / 2.5 / 95.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitKind {
    Dense,
    Sparse,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Dense => "dense",
            SplitKind::Sparse => "sparse",
        }
    }

    /// Minimum class size accepted by [`make_split`].
    pub fn min_class_size(self) -> usize {
        match self {
            SplitKind::Dense => 3,
            SplitKind::Sparse => 2,
        }
    }

    /// `(train, validation)` counts for a class of `size` nodes: floor of the
    /// nominal fraction, raised to at least one node each.
    pub fn counts(self, size: usize) -> (usize, usize) {
        let (train, val) = match self {
            SplitKind::Dense => (size / 2, size / 4),
            SplitKind::Sparse => (size * 25 / 1000, size * 25 / 1000),
        };
        (train.max(1), val.max(1))
    }
}

impl core::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(SplitKind::Dense),
            "sparse" => Ok(SplitKind::Sparse),
            other => Err(crate::error::param_err!("unknown split kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub kind: SplitKind,
    pub seed: u64,
    roles: Vec<Role>,
}

impl SplitAssignment {
    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn role(&self, node: usize) -> Role {
        self.roles[node]
    }

    /// Nodes holding `role`, ascending.
    pub fn nodes(&self, role: Role) -> Vec<usize> {
        self.roles.iter().enumerate().filter(|(_, &r)| r == role).map(|(i, _)| i).collect()
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }
}

pub fn make_split(g: &Graph, kind: SplitKind, seed: u64) -> Result<SplitAssignment> {
    let mut members: Vec<Vec<usize>> = (0..g.class_count()).map(|_| Vec::new()).collect();
    for i in 0..g.node_count() {
        members[g.label(i)].push(i);
    }
    let mut rng = rng::stream(seed, streams::SPLIT);
    let mut roles = alloc::vec![Role::Test; g.node_count()];
    for (class, nodes) in members.iter_mut().enumerate() {
        // Classes with no members impose no constraint.
        if nodes.is_empty() {
            continue;
        }
        if nodes.len() < kind.min_class_size() {
            return Err(Error::ClassTooSmall {
                class,
                size: nodes.len(),
                required: kind.min_class_size(),
            });
        }
        nodes.shuffle(&mut rng);
        let (train, val) = kind.counts(nodes.len());
        for &i in &nodes[..train] {
            roles[i] = Role::Train;
        }
        for &i in &nodes[train..train + val] {
            roles[i] = Role::Validation;
        }
    }
    Ok(SplitAssignment { kind, seed, roles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn graph(labels: Vec<u32>) -> Graph {
        let n = labels.len();
        let c = labels.iter().max().map_or(1, |&m| m as usize + 1);
        Graph::from_edges(1, vec![0.0; n], labels, c, &[]).unwrap().0
    }

    #[test]
    fn dense_single_class() {
        let s = make_split(&graph(vec![0; 100]), SplitKind::Dense, 7).unwrap();
        assert_eq!(s.count(Role::Train), 50);
        assert_eq!(s.count(Role::Validation), 25);
        assert_eq!(s.count(Role::Test), 25);
    }

    #[test]
    fn sparse_two_balanced_classes() {
        let labels = (0..200).map(|i| (i % 2) as u32).collect();
        let g = graph(labels);
        let s = make_split(&g, SplitKind::Sparse, 3).unwrap();
        assert_eq!(s.count(Role::Train), 4);
        assert_eq!(s.count(Role::Validation), 4);
        assert_eq!(s.count(Role::Test), 192);
        for class in 0..2 {
            let train = s.nodes(Role::Train).into_iter().filter(|&i| g.label(i) == class).count();
            assert_eq!(train, 2);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let g = graph((0..60).map(|i| (i % 3) as u32).collect());
        assert_eq!(make_split(&g, SplitKind::Dense, 11).unwrap(), make_split(&g, SplitKind::Dense, 11).unwrap());
    }

    #[test]
    fn minimum_counts_and_small_classes() {
        assert_eq!(SplitKind::Dense.counts(3), (1, 1));
        assert_eq!(SplitKind::Sparse.counts(2), (1, 1));
        assert_eq!(SplitKind::Sparse.counts(80), (2, 2));
        let err = make_split(&graph(vec![0, 0, 0, 1, 1]), SplitKind::Dense, 0).unwrap_err();
        assert_eq!(err, Error::ClassTooSmall { class: 1, size: 2, required: 3 });
        assert!(make_split(&graph(vec![0, 0, 1, 1]), SplitKind::Sparse, 0).is_ok());
    }
}
