//! Stochastic block model generator for synthetic node-classification data.

use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{param_err, Result};
use crate::graph::Graph;
use crate::rng::{self, streams};

/// Block structure and feature model of a synthetic graph.
///
/// Block `b` becomes class `b`. Its feature mean is `separation` along axis
/// `b mod dim`; every feature entry gets independent Gaussian noise with
/// standard deviation `noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    pub p_intra: f64,
    pub p_inter: f64,
    pub dim: usize,
    pub separation: f64,
    pub noise: f64,
}

impl SbmSpec {
    pub fn balanced(blocks: usize, size: usize, p_intra: f64, p_inter: f64) -> Self {
        Self {
            block_sizes: alloc::vec![size; blocks],
            p_intra,
            p_inter,
            dim: 16,
            separation: 2.0,
            noise: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() || self.block_sizes.contains(&0) {
            return Err(param_err!("block sizes must be positive"));
        }
        for (name, p) in [("intra", self.p_intra), ("inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(param_err!("{name}-block probability {p} outside [0, 1]"));
            }
        }
        if self.dim == 0 {
            return Err(param_err!("feature dimension must be positive"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite() && self.separation.is_finite()) {
            return Err(param_err!("noise must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.block_sizes.iter().sum()
    }
}

pub fn generate_sbm(spec: &SbmSpec, seed: u64) -> Result<Graph> {
    spec.validate()?;
    let labels: Vec<u32> = spec
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| core::iter::repeat_n(b as u32, size))
        .collect();
    let n = labels.len();

    let mut edge_rng = rng::stream(seed, streams::SBM_EDGES);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { spec.p_intra } else { spec.p_inter };
            // random_bool rejects nothing in [0, 1] and is exact at both ends.
            if edge_rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }

    let mut feat_rng = rng::stream(seed, streams::SBM_FEATURES);
    let mut features = Vec::with_capacity(n * spec.dim);
    for &y in &labels {
        let axis = y as usize % spec.dim;
        for j in 0..spec.dim {
            let mean = if j == axis { spec.separation } else { 0.0 };
            let z: f64 = StandardNormal.sample(&mut feat_rng);
            features.push((mean + spec.noise * z) as f32);
        }
    }
    let (g, _) = Graph::from_edges(spec.dim, features, labels, spec.block_sizes.len(), &edges)?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::edge_homophily;

    #[test]
    fn two_cliques() {
        let g = generate_sbm(&SbmSpec::balanced(2, 10, 1.0, 0.0), 1).unwrap();
        assert_eq!(g.edge_count(), 2 * 45);
        assert_eq!(edge_homophily(&g), 1.0);
    }

    #[test]
    fn complete_bipartite() {
        let g = generate_sbm(&SbmSpec::balanced(2, 10, 0.0, 1.0), 1).unwrap();
        assert_eq!(g.edge_count(), 100);
        assert_eq!(edge_homophily(&g), 0.0);
    }

    #[test]
    fn intra_edge_count_within_three_sigma() {
        let g = generate_sbm(&SbmSpec::balanced(4, 50, 0.1, 0.01), 42).unwrap();
        let intra = g.edges().filter(|&(u, v)| g.label(u) == g.label(v)).count() as f64;
        let trials = 4.0 * 1225.0;
        let mean = trials * 0.1;
        let sigma = libm::sqrt(trials * 0.1 * 0.9);
        assert!((intra - mean).abs() < 3.0 * sigma, "intra = {intra}, mean = {mean}");
    }

    #[test]
    fn deterministic_and_validated() {
        let spec = SbmSpec::balanced(3, 8, 0.5, 0.1);
        assert_eq!(generate_sbm(&spec, 9).unwrap(), generate_sbm(&spec, 9).unwrap());
        assert_ne!(generate_sbm(&spec, 9).unwrap(), generate_sbm(&spec, 10).unwrap());
        assert!(generate_sbm(&SbmSpec::balanced(2, 5, 1.5, 0.0), 0).is_err());
        assert!(generate_sbm(&SbmSpec::balanced(2, 0, 0.5, 0.0), 0).is_err());
    }
}
