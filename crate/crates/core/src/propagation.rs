//! Personalized-PageRank feature propagation for the topology view.

use alloc::vec::Vec;

use crate::adjacency::NormalizedAdjacency;
use crate::error::{param_err, shape_err, Result};

/// Step count and teleport coefficient of the propagation recurrence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    pub steps: usize,
    pub beta: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self { steps: 10, beta: 0.15 }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(param_err!("ppr_beta must lie in [0, 1], got {}", self.beta));
        }
        Ok(())
    }
}

/// Runs `H_k = (1 - beta) * A_hat * H_{k-1} + beta * X` for `steps` iterations
/// starting from `H_0 = X`. `x` is row-major `n x dim`.
pub fn ppr_propagate(
    adj: &NormalizedAdjacency,
    x: &[f64],
    dim: usize,
    cfg: &PropagationConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.len() != adj.size() * dim {
        return Err(shape_err!(
            "features have {} entries, adjacency expects {} x {dim}",
            x.len(),
            adj.size()
        ));
    }
    let mut h = x.to_vec();
    let mut next = alloc::vec![0.0; x.len()];
    let keep = 1.0 - cfg.beta;
    for _ in 0..cfg.steps {
        adj.spmm(&h, dim, &mut next)?;
        for (o, &x0) in next.iter_mut().zip(x) {
            *o = keep * *o + cfg.beta * x0;
        }
        core::mem::swap(&mut h, &mut next);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use alloc::vec;

    fn adj() -> NormalizedAdjacency {
        let g = Graph::from_edges(1, vec![0.0; 4], vec![0; 4], 1, &[(0, 1), (1, 2), (2, 3), (0, 3)])
            .unwrap()
            .0;
        NormalizedAdjacency::from_graph(&g)
    }

    #[test]
    fn zero_steps_is_identity() {
        let x = [1.0, -2.0, 0.5, 3.0, 0.0, 7.0, 1.5, -0.25];
        let out = ppr_propagate(&adj(), &x, 2, &PropagationConfig { steps: 0, beta: 0.3 }).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn full_teleport_is_identity() {
        let x = [1.0, -2.0, 0.5, 3.0];
        let out = ppr_propagate(&adj(), &x, 1, &PropagationConfig { steps: 7, beta: 1.0 }).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn errors() {
        assert!(ppr_propagate(&adj(), &[1.0; 3], 1, &PropagationConfig::default()).is_err());
        assert!(ppr_propagate(&adj(), &[1.0; 4], 1, &PropagationConfig { steps: 1, beta: 1.5 }).is_err());
    }
}
