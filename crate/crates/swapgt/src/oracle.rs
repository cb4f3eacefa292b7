//! Dense reference implementations used by the self-test.

use swapgt_core::Graph;

/// Brute-force top-k cosine neighbours: every pair scored, ranked by
/// descending score then ascending id; zero-norm rows score 0.
pub fn dense_topk(x: &[f64], dim: usize, k: usize) -> Vec<Vec<u32>> {
    let n = x.len() / dim;
    let row = |i: usize| &x[i * dim..(i + 1) * dim];
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    (0..n)
        .map(|i| {
            let mut scored: Vec<(f64, u32)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let (a, b) = (row(i), row(j));
                    let (na, nb) = (norm(a), norm(b));
                    let s = if na == 0.0 || nb == 0.0 {
                        0.0
                    } else {
                        a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / (na * nb)
                    };
                    (s, j as u32)
                })
                .collect();
            scored.sort_by(|p, q| q.0.partial_cmp(&p.0).expect("finite scores").then(p.1.cmp(&q.1)));
            scored.truncate(k);
            scored.into_iter().map(|s| s.1).collect()
        })
        .collect()
}

/// `(D+I)^-1/2 (A+I) (D+I)^-1/2` as a dense matrix.
pub fn dense_adjacency(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
        for &j in g.neighbors(i) {
            row[j as usize] = 1.0;
        }
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v /= (d[i] * d[j]).sqrt();
        }
    }
    a
}

/// `H_k = (1 - beta) A H_{k-1} + beta X` with dense products.
pub fn dense_ppr(a: &[Vec<f64>], x: &[f64], dim: usize, steps: usize, beta: f64) -> Vec<f64> {
    let n = a.len();
    let mut h = x.to_vec();
    for _ in 0..steps {
        let mut next = vec![0.0; n * dim];
        for i in 0..n {
            for l in 0..dim {
                let s: f64 = (0..n).map(|j| a[i][j] * h[j * dim + l]).sum();
                next[i * dim + l] = (1.0 - beta) * s + beta * x[i * dim + l];
            }
        }
        h = next;
    }
    h
}
