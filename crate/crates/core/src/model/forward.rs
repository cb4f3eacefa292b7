use alloc::vec;
use alloc::vec::Vec;

use super::params::EncoderIx;
use super::ModelParams;
use crate::error::{param_err, shape_err, Result};
use crate::graph::Graph;
use crate::nn::{Tape, Tensor, Var};
use crate::rng::Rng;
use crate::tokenizer::{SequenceBatch, View};

/// Training mode samples dropout masks from the given stream; evaluation
/// mode is deterministic.
pub enum Mode<'r> {
    Train(&'r mut Rng),
    Eval,
}

impl Mode<'_> {
    fn dropout(&mut self, tape: &mut Tape, x: Var, rate: f64) -> Result<Var> {
        match self {
            Mode::Train(rng) => tape.dropout(x, rate, &mut **rng),
            Mode::Eval => Ok(x),
        }
    }
}

/// Graph features and both views' token sequences.
#[derive(Clone, Copy)]
pub struct ModelInputs<'a> {
    pub graph: &'a Graph,
    pub attribute: &'a SequenceBatch,
    pub topology: &'a SequenceBatch,
}

impl ModelInputs<'_> {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let n = self.graph.node_count();
        for (batch, view) in [(self.attribute, View::Attribute), (self.topology, View::Topology)] {
            if batch.view() != view {
                return Err(param_err!("expected the {} view, got {}", view.as_str(), batch.view().as_str()));
            }
            if batch.node_count() != n {
                return Err(shape_err!("{} sequences cover {} nodes, graph has {n}", view.as_str(), batch.node_count()));
            }
        }
        if self.attribute.seqs_per_node() != self.topology.seqs_per_node() {
            return Err(shape_err!("views carry different sequence counts"));
        }
        if params.config().in_dim != self.graph.feature_dim() {
            return Err(shape_err!(
                "projection expects {} features, graph has {}",
                params.config().in_dim,
                self.graph.feature_dim()
            ));
        }
        Ok(())
    }
}

/// Tape handles produced by one forward pass over a node batch.
pub struct Forward {
    /// First-token outputs per view, `[B * (1 + s), d0]`.
    pub reps: [Var; 2],
    /// Readout per view, `[B, 2 * d0]`.
    pub readouts: [Var; 2],
    pub fused: Var,
    pub logits: Var,
    pub ce: Option<Var>,
    pub ca: Var,
    pub total: Option<Var>,
}

fn encoder_for(params: &ModelParams, view: View) -> &EncoderIx {
    let e = if params.config().share_encoder { 0 } else { view.tag() as usize };
    &params.layout.encoders[e]
}

/// Projects, encodes and returns the position-0 output of every sequence of
/// every node in `nodes`, as a `[B * (1 + s), d0]` matrix.
pub(crate) fn encode_on_tape(
    tape: &mut Tape,
    vars: &[Var],
    params: &ModelParams,
    graph: &Graph,
    batch: &SequenceBatch,
    nodes: &[usize],
    mode: &mut Mode,
) -> Result<Var> {
    let cfg = params.config();
    let enc = encoder_for(params, batch.view());
    let (seq_len, d) = (batch.seq_len(), graph.feature_dim());

    // Project each distinct token once, then lay rows out per sequence.
    let mut slot = vec![u32::MAX; graph.node_count()];
    let mut unique = Vec::new();
    let mut positions = Vec::with_capacity(nodes.len() * batch.seqs_per_node() * seq_len);
    for &i in nodes {
        for &tok in batch.grid(i) {
            let s = &mut slot[tok as usize];
            if *s == u32::MAX {
                *s = unique.len() as u32;
                unique.push(tok as usize);
            }
            positions.push(*s as usize);
        }
    }
    let mut raw = Vec::with_capacity(unique.len() * d);
    for &tok in &unique {
        raw.extend(graph.feature_row(tok).iter().map(|&x| x as f64));
    }
    let x = tape.constant(Tensor::matrix(unique.len(), d, raw)?);
    let projected = tape.matmul(x, vars[enc.proj_w])?;
    let projected = tape.add_row(projected, vars[enc.proj_b])?;
    let mut h = tape.select_rows(projected, &positions)?;
    h = mode.dropout(tape, h, cfg.dropout)?;

    let dk = cfg.head_dim();
    let scale = 1.0 / libm::sqrt(dk as f64);
    for layer in &enc.layers {
        let a = tape.layer_norm(h, vars[layer.ln1_gain], vars[layer.ln1_bias])?;
        let q = tape.matmul(a, vars[layer.wq])?;
        let k = tape.matmul(a, vars[layer.wk])?;
        let v = tape.matmul(a, vars[layer.wv])?;
        let mut heads = Vec::with_capacity(cfg.heads);
        for head in 0..cfg.heads {
            let span = head * dk..(head + 1) * dk;
            let qh = tape.slice_cols(q, span.start, span.end)?;
            let kh = tape.slice_cols(k, span.start, span.end)?;
            let vh = tape.slice_cols(v, span.start, span.end)?;
            let scores = tape.block_qk(qh, kh, seq_len)?;
            let scores = tape.scale(scores, scale);
            let weights = tape.softmax(scores)?;
            heads.push(tape.block_pv(weights, vh, seq_len)?);
        }
        let joined = if heads.len() == 1 { heads[0] } else { tape.concat(&heads)? };
        let attended = tape.matmul(joined, vars[layer.wo])?;
        h = tape.add(h, attended)?;

        let b = tape.layer_norm(h, vars[layer.ln2_gain], vars[layer.ln2_bias])?;
        let f = tape.matmul(b, vars[layer.w1])?;
        let f = tape.gelu(f);
        let f = mode.dropout(tape, f, cfg.dropout)?;
        let f = tape.matmul(f, vars[layer.w2])?;
        h = tape.add(h, f)?;
    }
    let firsts: Vec<usize> = (0..nodes.len() * batch.seqs_per_node()).map(|r| r * seq_len).collect();
    tape.select_rows(h, &firsts)
}

/// Row 0 concatenated with the mean of rows `1..=s`. A node with a single
/// sequence gets that row in both halves.
pub(crate) fn readout_on_tape(tape: &mut Tape, reps: Var, seqs_per_node: usize) -> Result<Var> {
    let rows = tape.value(reps).rows();
    let width = tape.value(reps).cols();
    if seqs_per_node == 0 || !rows.is_multiple_of(seqs_per_node) {
        return Err(shape_err!("{rows} rows do not split into groups of {seqs_per_node}"));
    }
    let b = rows / seqs_per_node;
    if seqs_per_node == 1 {
        return tape.concat(&[reps, reps]);
    }
    let s = seqs_per_node - 1;
    let heads: Vec<usize> = (0..b).map(|i| i * seqs_per_node).collect();
    let rest: Vec<usize> = (0..b).flat_map(|i| (1..seqs_per_node).map(move |j| i * seqs_per_node + j)).collect();
    let original = tape.select_rows(reps, &heads)?;
    let augmented = tape.select_rows(reps, &rest)?;
    let augmented = tape.reshape(augmented, &[b, s, width])?;
    let mean = tape.mean(augmented, 1)?;
    tape.concat(&[original, mean])
}

pub(crate) fn fuse_on_tape(tape: &mut Tape, za: Var, zt: Var, alpha: f64) -> Result<Var> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(param_err!("alpha must lie in [0, 1], got {alpha}"));
    }
    let a = tape.scale(za, alpha);
    let t = tape.scale(zt, 1.0 - alpha);
    tape.add(a, t)
}

pub(crate) fn predict_on_tape(tape: &mut Tape, vars: &[Var], params: &ModelParams, z: Var) -> Result<Var> {
    let l = &params.layout;
    let h = tape.matmul(z, vars[l.pred_w1])?;
    let h = tape.add_row(h, vars[l.pred_b1])?;
    let h = tape.gelu(h);
    let out = tape.matmul(h, vars[l.pred_w2])?;
    tape.add_row(out, vars[l.pred_b2])
}

/// Center alignment summed over both views; zero when each node has a
/// single sequence.
pub(crate) fn alignment_on_tape(tape: &mut Tape, reps: [Var; 2], seqs_per_node: usize) -> Result<Var> {
    if seqs_per_node < 2 {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let a = tape.center_alignment(reps[0], seqs_per_node)?;
    let t = tape.center_alignment(reps[1], seqs_per_node)?;
    tape.add(a, t)
}

/// Full network on `nodes`: encode both views, read out, fuse, predict, and
/// (when `labels` is given) cross-entropy plus `lambda` times center
/// alignment. With `lambda = 0` the alignment term is not evaluated and `ca`
/// is zero.
#[allow(clippy::too_many_arguments)]
pub fn forward_on_tape(
    tape: &mut Tape,
    vars: &[Var],
    params: &ModelParams,
    inputs: &ModelInputs,
    nodes: &[usize],
    labels: Option<&[usize]>,
    alpha: f64,
    lambda: f64,
    mode: &mut Mode,
) -> Result<Forward> {
    inputs.validate(params)?;
    if nodes.is_empty() {
        return Err(crate::error::Error::Empty("forward pass over no nodes".into()));
    }
    let seqs = inputs.attribute.seqs_per_node();
    let ra = encode_on_tape(tape, vars, params, inputs.graph, inputs.attribute, nodes, mode)?;
    let rt = encode_on_tape(tape, vars, params, inputs.graph, inputs.topology, nodes, mode)?;
    let za = readout_on_tape(tape, ra, seqs)?;
    let zt = readout_on_tape(tape, rt, seqs)?;
    let fused = fuse_on_tape(tape, za, zt, alpha)?;
    let logits = predict_on_tape(tape, vars, params, fused)?;
    let ca = if lambda == 0.0 {
        tape.constant(Tensor::scalar(0.0))
    } else {
        alignment_on_tape(tape, [ra, rt], seqs)?
    };
    let (ce, total) = match labels {
        Some(labels) => {
            let ce = tape.cross_entropy(logits, labels)?;
            let weighted = tape.scale(ca, lambda);
            let total = tape.add(ce, weighted)?;
            (Some(ce), Some(total))
        }
        None => (None, None),
    };
    Ok(Forward { reps: [ra, rt], readouts: [za, zt], fused, logits, ce, ca, total })
}
