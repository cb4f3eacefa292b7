use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::TokenTable;
use crate::error::{param_err, Result};

/// Swap probability `p`, swapping rounds `t` and augmentation count `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapConfig {
    pub p: f64,
    pub t: usize,
    pub s: usize,
}

impl Default for SwapConfig {
    fn default() -> Self {
        Self { p: 0.5, t: 2, s: 4 }
    }
}

impl SwapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(param_err!("swap probability must lie in [0, 1], got {}", self.p));
        }
        if self.t == 0 {
            return Err(param_err!("swap rounds t must be at least 1"));
        }
        if self.s == 0 {
            return Err(param_err!("augmentation count s must be at least 1"));
        }
        Ok(())
    }
}

/// Token swapping for node `i`.
///
/// Starts from row `i` and runs `t` rounds; in each round every position is
/// kept with probability `1 - p` and otherwise replaced by a uniform draw from
/// the original table row of the token currently held there. The output keeps
/// length `k` and may contain repeated ids.
pub fn swap_tokens<R: RngCore + ?Sized>(table: &TokenTable, i: usize, p: f64, t: usize, rng: &mut R) -> Vec<u32> {
    swap_tokens_counted(table, i, p, t, rng).0
}

/// [`swap_tokens`] that also reports how many times the replace branch ran.
pub fn swap_tokens_counted<R: RngCore + ?Sized>(
    table: &TokenTable,
    i: usize,
    p: f64,
    t: usize,
    rng: &mut R,
) -> (Vec<u32>, usize) {
    let k = table.k();
    let mut tokens = table.row(i).to_vec();
    let mut swaps = 0;
    for _ in 0..t {
        for slot in tokens.iter_mut() {
            if rng.random::<f64>() < p {
                let candidates = table.row(*slot as usize);
                *slot = candidates[rng.random_range(0..k)];
                swaps += 1;
            }
        }
    }
    (tokens, swaps)
}

/// Node set reachable from `i` in at most `hops` arcs of the k-NN digraph,
/// as a membership mask.
pub fn reachable_within(table: &TokenTable, i: usize, hops: usize) -> Vec<bool> {
    let mut depth = alloc::vec![usize::MAX; table.node_count()];
    depth[i] = 0;
    let mut queue = VecDeque::from([i]);
    while let Some(u) = queue.pop_front() {
        if depth[u] == hops {
            continue;
        }
        for &v in table.row(u) {
            let v = v as usize;
            if depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                queue.push_back(v);
            }
        }
    }
    depth.into_iter().map(|d| d != usize::MAX).collect()
}

/// True iff every token is within `t + 1` directed hops of `i`.
pub fn hop_bound_oracle(table: &TokenTable, i: usize, tokens: &[u32], t: usize) -> bool {
    let reach = reachable_within(table, i, t + 1);
    tokens.iter().all(|&v| reach[v as usize])
}
