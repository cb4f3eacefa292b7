//! Built-in verification: gradients, top-k, hop bound, propagation and
//! determinism, all on generated data.

use rand::Rng;
use swapgt_core::model::{forward_full, loss_gradients, Mode, ModelConfig, ModelInputs, ModelParams};
use swapgt_core::nn::grad_check;
use swapgt_core::tokenizer::{
    build_sequences, build_token_tables, cosine_topk, hop_bound_oracle, swap_tokens, SequenceStrategy, SwapConfig, View,
};
use swapgt_core::train::{run_experiment, TrainConfig};
use swapgt_core::{generate_sbm, ppr_propagate, rng, NormalizedAdjacency, PropagationConfig, SbmSpec};

use crate::error::Result;
use crate::oracle::{dense_adjacency, dense_ppr, dense_topk};

pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const PPR_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Largest finite-difference relative error of the full loss on a 20-node
/// SBM (d=8, width 16, one layer, two heads, k=3, s=2, p=0.5, t=2,
/// lambda=0.7, alpha=0.4). `inject_sign_error` negates the analytic
/// gradient, which the check must catch.
pub fn gradient_check_error(inject_sign_error: bool) -> Result<f64> {
    let spec = SbmSpec { dim: 8, ..SbmSpec::balanced(2, 10, 0.3, 0.05) };
    let graph = generate_sbm(&spec, 21)?;
    let adj = NormalizedAdjacency::from_graph(&graph);
    let (ta, tt) = build_token_tables(&graph, &adj, &PropagationConfig::default(), 3)?;
    let strategy = SequenceStrategy::Swap(SwapConfig { p: 0.5, t: 2, s: 2 });
    let (sa, st) = (build_sequences(&ta, strategy, 21)?, build_sequences(&tt, strategy, 21)?);
    let cfg = ModelConfig {
        in_dim: 8,
        hidden_dim: 16,
        ffn_dim: 32,
        layers: 1,
        heads: 2,
        classes: 2,
        share_encoder: true,
        dropout: 0.0,
    };
    let params = ModelParams::init(cfg, 22)?;
    let inputs = ModelInputs { graph: &graph, attribute: &sa, topology: &st };
    let nodes: Vec<usize> = (0..20).collect();
    let (alpha, lambda) = (0.4, 0.7);
    let report = grad_check(&params.store, 1e-5, |store, with_grad| {
        let p = ModelParams::from_store(cfg, store.clone())?;
        if !with_grad {
            return Ok((forward_full(&p, &inputs, &nodes, alpha, lambda, &mut Mode::Eval)?.1.total, Vec::new()));
        }
        let (b, mut g) = loss_gradients(&p, &inputs, &nodes, alpha, lambda, &mut Mode::Eval)?;
        if inject_sign_error {
            g.iter_mut().flat_map(|t| t.data_mut().iter_mut()).for_each(|v| *v = -*v);
        }
        Ok((b.total, g))
    })?;
    Ok(report.max_rel_error)
}

/// Number of random instances (n <= 200, k <= 10) where top-k differs from
/// the brute-force oracle.
pub fn topk_mismatches(instances: usize, seed: u64) -> Result<usize> {
    let mut r = rng::seeded(seed);
    let mut bad = 0;
    for _ in 0..instances {
        let n = r.random_range(12..=200);
        let dim = r.random_range(1..=8);
        let k = r.random_range(1..=10);
        // Coarse integer values force exact ties, duplicate and zero rows.
        let coarse = r.random_bool(0.5);
        let x: Vec<f64> = (0..n * dim)
            .map(|_| if coarse { r.random_range(-1i32..=1) as f64 } else { r.random_range(-1.0..1.0) })
            .collect();
        let table = cosine_topk(&x, dim, k, View::Attribute)?;
        let oracle = dense_topk(&x, dim, k);
        if (0..n).any(|i| table.row(i) != &oracle[i][..]) {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Trials in which a swapped sequence left the (t+1)-hop out-neighbourhood.
pub fn hop_bound_violations(trials: usize, seed: u64) -> Result<usize> {
    let mut r = rng::seeded(seed);
    let mut bad = 0;
    for trial in 0..trials {
        let blocks = r.random_range(2..=4);
        let spec = SbmSpec { dim: 6, ..SbmSpec::balanced(blocks, r.random_range(5..=15), 0.3, 0.05) };
        let g = generate_sbm(&spec, seed.wrapping_add(trial as u64))?;
        let k = r.random_range(1..=5.min(g.node_count() - 1));
        let table = cosine_topk(&g.features_f64(), g.feature_dim(), k, View::Attribute)?;
        let i = r.random_range(0..g.node_count());
        let p = r.random_range(0.0..=1.0);
        let t = r.random_range(1..=4);
        let tokens = swap_tokens(&table, i, p, t, &mut r);
        if tokens.len() != k || !hop_bound_oracle(&table, i, &tokens, t) {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Largest entrywise gap between sparse propagation and the dense recurrence.
pub fn ppr_max_error(instances: usize, seed: u64) -> Result<f64> {
    let mut r = rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let n_per = r.random_range(5..=50);
        let spec = SbmSpec { dim: 4, ..SbmSpec::balanced(4, n_per, 0.2, 0.02) };
        let g = generate_sbm(&spec, seed.wrapping_add(inst as u64))?;
        let steps = r.random_range(0..=10);
        let beta = r.random_range(0.05..=0.95);
        let x = g.features_f64();
        let got = ppr_propagate(&NormalizedAdjacency::from_graph(&g), &x, 4, &PropagationConfig { steps, beta })?;
        let want = dense_ppr(&dense_adjacency(&g), &x, 4, steps, beta);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Trains a small model twice with the same seed and compares every number.
pub fn deterministic_training() -> Result<bool> {
    let g = generate_sbm(&SbmSpec { dim: 8, ..SbmSpec::balanced(3, 15, 0.3, 0.02) }, 5)?;
    let cfg = TrainConfig {
        k: 3,
        aug_s: 2,
        hidden_dim: 8,
        ffn_dim: 16,
        heads: 2,
        max_epochs: 10,
        patience: 10,
        runs: 2,
        batch_size: 10,
        ..TrainConfig::default()
    };
    Ok(run_experiment(&cfg, &g)? == run_experiment(&cfg, &g)?)
}

pub fn run_selftest(inject_sign_error: bool) -> Vec<CheckResult> {
    fn check<T>(name: &'static str, r: Result<T>, judge: impl Fn(&T) -> (bool, String)) -> CheckResult {
        match r {
            Ok(v) => {
                let (passed, detail) = judge(&v);
                CheckResult { name, passed, detail }
            }
            Err(e) => CheckResult { name, passed: false, detail: format!("error: {e}") },
        }
    }
    vec![
        check("gradient", gradient_check_error(inject_sign_error), |&e| {
            (e <= GRAD_TOLERANCE, format!("max relative error {e:.3e} (limit {GRAD_TOLERANCE:e})"))
        }),
        check("top-k oracle", topk_mismatches(50, 1), |&b| (b == 0, format!("{b} of 50 instances differ"))),
        check("hop bound", hop_bound_violations(1000, 2), |&b| (b == 0, format!("{b} of 1000 trials violate"))),
        check("propagation oracle", ppr_max_error(10, 3), |&e| {
            (e <= PPR_TOLERANCE, format!("max abs error {e:.3e} (limit {PPR_TOLERANCE:e})"))
        }),
        check("determinism", deterministic_training(), |&same| {
            (same, if same { "identical repeated runs".into() } else { "repeated runs differ".into() })
        }),
    ]
}
