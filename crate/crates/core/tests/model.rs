//! Model forward pass against a naive reference transformer, structural
//! invariances, and a finite-difference check of the full loss.

use rand::Rng;
use swapgt_core::model::{
    center_alignment, encode_view, forward_full, loss_gradients, readout, Mode, ModelConfig, ModelInputs, ModelParams,
};
use swapgt_core::nn::{gelu_scalar, grad_check, LAYER_NORM_EPS};
use swapgt_core::tokenizer::{build_sequences, build_token_tables, SequenceBatch, SequenceStrategy, SwapConfig, View};
use swapgt_core::{generate_sbm, rng, Graph, NormalizedAdjacency, PropagationConfig, SbmSpec};

type Mat = Vec<Vec<f64>>;

fn param(p: &ModelParams, name: &str) -> Mat {
    let t = p.store.get(name).unwrap();
    if t.rank() == 1 {
        return vec![t.data().to_vec()];
    }
    t.data().chunks(t.cols()).map(<[f64]>::to_vec).collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|r| (0..b[0].len()).map(|j| r.iter().zip(b).map(|(x, brow)| x * brow[j]).sum()).collect())
        .collect()
}

fn layer_norm(x: &Mat, g: &[f64], b: &[f64]) -> Mat {
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mu = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            r.iter().enumerate().map(|(l, v)| g[l] * (v - mu) / (var + LAYER_NORM_EPS).sqrt() + b[l]).collect()
        })
        .collect()
}

/// Position-0 output of a pre-LN encoder on one token sequence.
fn reference_first(p: &ModelParams, prefix: &str, rows: &Mat) -> Vec<f64> {
    let cfg = p.config();
    let (heads, dk) = (cfg.heads, cfg.head_dim());
    let bias = &param(p, &format!("{prefix}.proj.b"))[0];
    let mut h: Mat = matmul(rows, &param(p, &format!("{prefix}.proj.w")))
        .into_iter()
        .map(|r| r.iter().zip(bias).map(|(x, b)| x + b).collect())
        .collect();
    for l in 0..cfg.layers {
        let q = format!("{prefix}.layer{l}");
        let a = layer_norm(&h, &param(p, &format!("{q}.ln1.gain"))[0], &param(p, &format!("{q}.ln1.bias"))[0]);
        let (qm, km, vm) = (
            matmul(&a, &param(p, &format!("{q}.attn.wq"))),
            matmul(&a, &param(p, &format!("{q}.attn.wk"))),
            matmul(&a, &param(p, &format!("{q}.attn.wv"))),
        );
        let t = h.len();
        let mut joined = vec![vec![0.0; cfg.hidden_dim]; t];
        for m in 0..heads {
            let span = m * dk..(m + 1) * dk;
            for i in 0..t {
                let scores: Vec<f64> = (0..t)
                    .map(|j| span.clone().map(|c| qm[i][c] * km[j][c]).sum::<f64>() / (dk as f64).sqrt())
                    .collect();
                let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in span.clone() {
                    joined[i][c] = (0..t).map(|j| e[j] / z * vm[j][c]).sum();
                }
            }
        }
        let attended = matmul(&joined, &param(p, &format!("{q}.attn.wo")));
        for (hr, ar) in h.iter_mut().zip(&attended) {
            hr.iter_mut().zip(ar).for_each(|(x, y)| *x += y);
        }
        let b = layer_norm(&h, &param(p, &format!("{q}.ln2.gain"))[0], &param(p, &format!("{q}.ln2.bias"))[0]);
        let f: Mat = matmul(&b, &param(p, &format!("{q}.ffn.w1")))
            .into_iter()
            .map(|r| r.into_iter().map(gelu_scalar).collect())
            .collect();
        let f = matmul(&f, &param(p, &format!("{q}.ffn.w2")));
        for (hr, fr) in h.iter_mut().zip(&f) {
            hr.iter_mut().zip(fr).for_each(|(x, y)| *x += y);
        }
    }
    h.swap_remove(0)
}

struct Fixture {
    graph: Graph,
    attr: SequenceBatch,
    topo: SequenceBatch,
}

fn fixture(n_per_block: usize, dim: usize, k: usize, swap: SwapConfig, seed: u64) -> Fixture {
    let spec = SbmSpec { dim, ..SbmSpec::balanced(2, n_per_block, 0.3, 0.05) };
    let graph = generate_sbm(&spec, seed).unwrap();
    let adj = NormalizedAdjacency::from_graph(&graph);
    let (ta, tt) = build_token_tables(&graph, &adj, &PropagationConfig::default(), k).unwrap();
    let strategy = SequenceStrategy::Swap(swap);
    let attr = build_sequences(&ta, strategy, seed).unwrap();
    let topo = build_sequences(&tt, strategy, seed).unwrap();
    Fixture { graph, attr, topo }
}

fn config(in_dim: usize, hidden: usize, heads: usize, layers: usize) -> ModelConfig {
    ModelConfig { in_dim, hidden_dim: hidden, ffn_dim: 2 * hidden, layers, heads, classes: 2, share_encoder: true, dropout: 0.0 }
}

/// Random parameters with non-trivial LayerNorm gains and biases.
fn perturbed(cfg: ModelConfig, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(cfg, seed).unwrap();
    let mut r = rng::seeded(seed + 1);
    for i in 0..p.store.len() {
        for v in p.store.value_mut(i).data_mut() {
            *v += r.random_range(-0.3..0.3);
        }
    }
    p
}

fn rows_of(g: &Graph, ids: &[u32]) -> Mat {
    ids.iter().map(|&t| g.feature_row(t as usize).iter().map(|&x| x as f64).collect()).collect()
}

#[test]
fn encoder_matches_reference() {
    for (heads, layers, hidden) in [(1, 1, 4), (2, 1, 8), (4, 2, 8), (1, 0, 3)] {
        let f = fixture(6, 5, 3, SwapConfig { p: 0.5, t: 2, s: 2 }, 3);
        let p = perturbed(config(5, hidden, heads, layers), 10 + heads as u64);
        let nodes = [0, 4, 7, 11];
        let reps = encode_view(&p, &f.graph, &f.attr, &nodes, &mut Mode::Eval).unwrap();
        for (b, &i) in nodes.iter().enumerate() {
            for j in 0..3 {
                let want = reference_first(&p, "enc", &rows_of(&f.graph, f.attr.row(i, j)));
                let got = &reps.node(b)[j * hidden..(j + 1) * hidden];
                for (x, y) in got.iter().zip(&want) {
                    assert!((x - y).abs() <= 1e-8, "heads {heads} layers {layers}: {x} vs {y}");
                }
            }
        }
    }
}

#[test]
fn zero_layers_is_projection_of_target() {
    let f = fixture(5, 4, 2, SwapConfig::default(), 1);
    let p = perturbed(config(4, 6, 2, 0), 2);
    let reps = encode_view(&p, &f.graph, &f.attr, &[3], &mut Mode::Eval).unwrap();
    let w = param(&p, "enc.proj.w");
    let b = &param(&p, "enc.proj.b")[0];
    let x = rows_of(&f.graph, &[3]);
    let want: Vec<f64> = matmul(&x, &w)[0].iter().zip(b).map(|(u, v)| u + v).collect();
    for row in reps.node(0).chunks(6) {
        for (u, v) in row.iter().zip(&want) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

fn rebuild(batch: &SequenceBatch, view: View, edit: impl Fn(usize, &mut Vec<Vec<u32>>)) -> SequenceBatch {
    let mut ids = Vec::new();
    for i in 0..batch.node_count() {
        let mut seqs: Vec<Vec<u32>> = (0..batch.seqs_per_node()).map(|j| batch.row(i, j).to_vec()).collect();
        edit(i, &mut seqs);
        ids.extend(seqs.into_iter().flatten());
    }
    SequenceBatch::from_parts(view, batch.node_count(), batch.k(), batch.s(), batch.seed(), ids).unwrap()
}

#[test]
fn token_order_within_sequence_is_irrelevant() {
    let f = fixture(6, 5, 4, SwapConfig { p: 0.5, t: 2, s: 3 }, 5);
    let p = perturbed(config(5, 8, 2, 2), 6);
    let shuffled = rebuild(&f.attr, View::Attribute, |_, seqs| {
        for s in seqs.iter_mut() {
            s[1..].reverse();
        }
    });
    let nodes: Vec<usize> = (0..12).collect();
    let a = encode_view(&p, &f.graph, &f.attr, &nodes, &mut Mode::Eval).unwrap();
    let b = encode_view(&p, &f.graph, &shuffled, &nodes, &mut Mode::Eval).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn augmented_sequence_order_is_irrelevant() {
    let f = fixture(6, 5, 3, SwapConfig { p: 0.6, t: 2, s: 4 }, 7);
    let p = perturbed(config(5, 8, 2, 1), 8);
    let rotated = rebuild(&f.attr, View::Attribute, |_, seqs| seqs[1..].rotate_left(1));
    let nodes: Vec<usize> = (0..12).collect();
    let a = encode_view(&p, &f.graph, &f.attr, &nodes, &mut Mode::Eval).unwrap();
    let b = encode_view(&p, &f.graph, &rotated, &nodes, &mut Mode::Eval).unwrap();
    for (x, y) in readout(&a).unwrap().iter().zip(&readout(&b).unwrap()) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!((center_alignment(&a).unwrap() - center_alignment(&b).unwrap()).abs() < 1e-12);
}

#[test]
fn no_swapping_means_no_alignment_loss() {
    let f = fixture(6, 5, 3, SwapConfig { p: 0.0, t: 2, s: 3 }, 9);
    let p = perturbed(config(5, 8, 2, 1), 9);
    let nodes: Vec<usize> = (0..12).collect();
    let reps = encode_view(&p, &f.graph, &f.topo, &nodes, &mut Mode::Eval).unwrap();
    assert!(center_alignment(&reps).unwrap().abs() < 1e-12);
    for z in readout(&reps).unwrap().chunks(16) {
        for l in 0..8 {
            assert!((z[l] - z[8 + l]).abs() < 1e-12);
        }
    }
}

#[test]
fn shared_encoder_fusion_is_symmetric() {
    let f = fixture(6, 5, 3, SwapConfig { p: 0.5, t: 2, s: 2 }, 11);
    let p = perturbed(config(5, 8, 2, 1), 12);
    let nodes: Vec<usize> = (0..12).collect();
    let forward = |attr: &SequenceBatch, topo: &SequenceBatch, alpha| {
        let inputs = ModelInputs { graph: &f.graph, attribute: attr, topology: topo };
        forward_full(&p, &inputs, &nodes, alpha, 0.5, &mut Mode::Eval).unwrap()
    };
    let as_topo = rebuild(&f.attr, View::Topology, |_, _| {});
    let as_attr = rebuild(&f.topo, View::Attribute, |_, _| {});
    let (la, ba) = forward(&f.attr, &f.topo, 0.25);
    let (lb, bb) = forward(&as_attr, &as_topo, 0.75);
    for (x, y) in la.iter().zip(&lb) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!((ba.total - bb.total).abs() < 1e-12);
}

#[test]
fn evaluation_is_deterministic_and_training_is_seeded() {
    let f = fixture(6, 5, 3, SwapConfig::default(), 13);
    let p = ModelParams::init(ModelConfig { dropout: 0.5, ..config(5, 8, 2, 1) }, 14).unwrap();
    let inputs = ModelInputs { graph: &f.graph, attribute: &f.attr, topology: &f.topo };
    let nodes: Vec<usize> = (0..12).collect();
    let e1 = forward_full(&p, &inputs, &nodes, 0.5, 1.0, &mut Mode::Eval).unwrap();
    let e2 = forward_full(&p, &inputs, &nodes, 0.5, 1.0, &mut Mode::Eval).unwrap();
    assert_eq!(e1, e2);
    let train = |seed| {
        let mut r = rng::seeded(seed);
        forward_full(&p, &inputs, &nodes, 0.5, 1.0, &mut Mode::Train(&mut r)).unwrap()
    };
    assert_eq!(train(1), train(1));
    assert_ne!(train(1).0, e1.0);
    // Evaluation output ignores the dropout rate.
    let no_drop = ModelParams::from_store(ModelConfig { dropout: 0.0, ..*p.config() }, p.store.clone()).unwrap();
    assert_eq!(forward_full(&no_drop, &inputs, &nodes, 0.5, 1.0, &mut Mode::Eval).unwrap(), e1);
}

#[test]
fn total_loss_recomposes() {
    let f = fixture(6, 5, 3, SwapConfig::default(), 15);
    let p = perturbed(config(5, 8, 2, 1), 16);
    let inputs = ModelInputs { graph: &f.graph, attribute: &f.attr, topology: &f.topo };
    let nodes = [1, 2, 8];
    for lambda in [0.3, 2.0] {
        let (_, b) = forward_full(&p, &inputs, &nodes, 0.5, lambda, &mut Mode::Eval).unwrap();
        assert!((b.total - (b.ce + lambda * b.ca)).abs() < 1e-12);
        assert!((0.0..=4.0).contains(&b.ca));
    }
}

#[test]
fn full_loss_gradient_check() {
    // 20 nodes, 8 features, width 16, one layer, two heads, k=3, s=2.
    let f = fixture(10, 8, 3, SwapConfig { p: 0.5, t: 2, s: 2 }, 21);
    let cfg = config(8, 16, 2, 1);
    let params = ModelParams::init(cfg, 22).unwrap();
    let nodes: Vec<usize> = (0..20).collect();
    let inputs = ModelInputs { graph: &f.graph, attribute: &f.attr, topology: &f.topo };
    let report = grad_check(&params.store, 1e-5, |store, with_grad| {
        let p = ModelParams::from_store(cfg, store.clone())?;
        if !with_grad {
            return Ok((forward_full(&p, &inputs, &nodes, 0.4, 0.7, &mut Mode::Eval)?.1.total, Vec::new()));
        }
        let (b, g) = loss_gradients(&p, &inputs, &nodes, 0.4, 0.7, &mut Mode::Eval)?;
        Ok((b.total, g))
    })
    .unwrap();
    eprintln!("max rel error {:.3e}", report.max_rel_error);
    assert!(report.max_rel_error <= 1e-4, "{report:?}");
}
