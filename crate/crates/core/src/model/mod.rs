//! The transformer network over token sequences, its readout, view fusion,
//! predictor and losses.
//!
//! The tape-level building blocks in [`forward`] are what training uses. The
//! free functions here wrap them for plain-slice inputs and outputs.

mod forward;
mod params;

use alloc::vec::Vec;

pub use forward::{forward_on_tape, Forward, Mode, ModelInputs};
pub use params::{ModelConfig, ModelParams};

use crate::error::{param_err, shape_err, Error, Result};
use crate::graph::Graph;
use crate::nn::{Tape, Tensor};
use crate::tokenizer::{SequenceBatch, View};

/// Position-0 encoder outputs of each node's `1 + s` sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewRepresentations {
    pub view: View,
    pub seqs_per_node: usize,
    pub width: usize,
    /// Row-major `[nodes * seqs_per_node, width]`.
    pub rows: Vec<f64>,
}

impl ViewRepresentations {
    pub fn new(view: View, seqs_per_node: usize, width: usize, rows: Vec<f64>) -> Result<Self> {
        if seqs_per_node == 0 || width == 0 || !rows.len().is_multiple_of(seqs_per_node * width) {
            return Err(shape_err!("{} values do not form groups of {seqs_per_node} x {width}", rows.len()));
        }
        Ok(Self { view, seqs_per_node, width, rows })
    }

    pub fn node_count(&self) -> usize {
        self.rows.len() / (self.seqs_per_node * self.width)
    }

    /// The `(1 + s) x width` block of the `b`-th node.
    pub fn node(&self, b: usize) -> &[f64] {
        let len = self.seqs_per_node * self.width;
        &self.rows[b * len..(b + 1) * len]
    }

    fn tensor(&self) -> Result<Tensor> {
        Tensor::matrix(self.rows.len() / self.width, self.width, self.rows.clone())
    }
}

/// Loss components of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub ce: f64,
    /// Center alignment summed over both views, averaged over batch nodes.
    pub ca: f64,
    pub total: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    pub fn new(ce: f64, ca: f64, lambda: f64) -> Self {
        Self { ce, ca, total: ce + lambda * ca, lambda }
    }
}

/// Encodes every sequence of `nodes` in one view.
pub fn encode_view(
    params: &ModelParams,
    graph: &Graph,
    batch: &SequenceBatch,
    nodes: &[usize],
    mode: &mut Mode,
) -> Result<ViewRepresentations> {
    if graph.feature_dim() != params.config().in_dim {
        return Err(shape_err!("projection expects {} features, graph has {}", params.config().in_dim, graph.feature_dim()));
    }
    let mut tape = Tape::new();
    let vars = tape.params(&params.store);
    let reps = forward::encode_on_tape(&mut tape, &vars, params, graph, batch, nodes, mode)?;
    ViewRepresentations::new(batch.view(), batch.seqs_per_node(), params.config().hidden_dim, tape.value(reps).data().to_vec())
}

/// Per node, row 0 concatenated with the mean of rows `1..=s`; output is
/// `[nodes, 2 * width]`.
pub fn readout(v: &ViewRepresentations) -> Result<Vec<f64>> {
    if v.seqs_per_node < 2 {
        return Err(param_err!("readout needs at least one augmented sequence"));
    }
    let mut tape = Tape::new();
    let reps = tape.constant(v.tensor()?);
    let out = forward::readout_on_tape(&mut tape, reps, v.seqs_per_node)?;
    Ok(tape.value(out).data().to_vec())
}

/// `alpha * za + (1 - alpha) * zt`.
pub fn fuse(za: &[f64], zt: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if za.len() != zt.len() {
        return Err(shape_err!("fusing widths {} and {}", za.len(), zt.len()));
    }
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::vector(za.to_vec()));
    let t = tape.constant(Tensor::vector(zt.to_vec()));
    let f = forward::fuse_on_tape(&mut tape, a, t, alpha)?;
    Ok(tape.value(f).data().to_vec())
}

/// Predictor logits for row-major `[rows, 2 * d0]` inputs.
pub fn predict(params: &ModelParams, z: &[f64]) -> Result<Vec<f64>> {
    let width = 2 * params.config().hidden_dim;
    if z.is_empty() || !z.len().is_multiple_of(width) {
        return Err(shape_err!("predictor input of {} values is not a multiple of {width}", z.len()));
    }
    let mut tape = Tape::new();
    let vars = tape.params(&params.store);
    let zv = tape.constant(Tensor::matrix(z.len() / width, width, z.to_vec())?);
    let logits = forward::predict_on_tape(&mut tape, &vars, params, zv)?;
    Ok(tape.value(logits).data().to_vec())
}

/// Mean of `-ln softmax(logits[r])[labels[r]]` over the rows in `mask`.
pub fn cross_entropy(logits: &[f64], classes: usize, labels: &[usize], mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Empty("cross entropy mask selects no rows".into()));
    }
    if classes == 0 || logits.len() != labels.len() * classes {
        return Err(shape_err!("{} logits for {} labels of {classes} classes", logits.len(), labels.len()));
    }
    let mut tape = Tape::new();
    let rows: Vec<f64> = mask.iter().flat_map(|&r| logits[r * classes..(r + 1) * classes].iter().copied()).collect();
    let picked: Vec<usize> = mask.iter().map(|&r| labels[r]).collect();
    let x = tape.constant(Tensor::matrix(mask.len(), classes, rows)?);
    let loss = tape.cross_entropy(x, &picked)?;
    Ok(tape.value(loss).item())
}

/// `1 - mean_j cos(row_j, center)` averaged over nodes.
pub fn center_alignment(v: &ViewRepresentations) -> Result<f64> {
    if v.seqs_per_node < 2 {
        return Err(param_err!("center alignment needs at least one augmented sequence"));
    }
    let mut tape = Tape::new();
    let x = tape.constant(v.tensor()?);
    let loss = tape.center_alignment(x, v.seqs_per_node)?;
    Ok(tape.value(loss).item())
}

/// Cross-entropy on the masked logits plus `lambda` times the center
/// alignment of both views.
pub fn total_loss(
    logits: &[f64],
    classes: usize,
    labels: &[usize],
    mask: &[usize],
    attribute: &ViewRepresentations,
    topology: &ViewRepresentations,
    lambda: f64,
) -> Result<LossBreakdown> {
    let ce = cross_entropy(logits, classes, labels, mask)?;
    let ca = center_alignment(attribute)? + center_alignment(topology)?;
    Ok(LossBreakdown::new(ce, ca, lambda))
}

/// Logits `[nodes, c]` and the loss breakdown of a forward pass over `nodes`,
/// labelled from the graph.
pub fn forward_full(
    params: &ModelParams,
    inputs: &ModelInputs,
    nodes: &[usize],
    alpha: f64,
    lambda: f64,
    mode: &mut Mode,
) -> Result<(Vec<f64>, LossBreakdown)> {
    let labels: Vec<usize> = nodes.iter().map(|&i| inputs.graph.label(i)).collect();
    let mut tape = Tape::new();
    let vars = tape.params(&params.store);
    let out = forward_on_tape(&mut tape, &vars, params, inputs, nodes, Some(&labels), alpha, lambda, mode)?;
    let ce = tape.value(out.ce.expect("labels given")).item();
    let ca = tape.value(out.ca).item();
    let total = tape.value(out.total.expect("labels given")).item();
    Ok((tape.value(out.logits).data().to_vec(), LossBreakdown { ce, ca, total, lambda }))
}

/// Loss breakdown and the gradient of the total loss with respect to every
/// parameter, in store order. Parameters that do not influence the loss get
/// zero gradients.
pub fn loss_gradients(
    params: &ModelParams,
    inputs: &ModelInputs,
    nodes: &[usize],
    alpha: f64,
    lambda: f64,
    mode: &mut Mode,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let labels: Vec<usize> = nodes.iter().map(|&i| inputs.graph.label(i)).collect();
    let mut tape = Tape::new();
    let vars = tape.params(&params.store);
    let out = forward_on_tape(&mut tape, &vars, params, inputs, nodes, Some(&labels), alpha, lambda, mode)?;
    let total = out.total.expect("labels given");
    let grads = tape.backward(total)?;
    let per_param = vars
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let shape = params.store.value(i).shape();
            match grads.get(v) {
                Some(g) => Tensor::new(shape, g.to_vec()),
                None => Ok(Tensor::zeros(shape)),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let ce = tape.value(out.ce.expect("labels given")).item();
    let breakdown = LossBreakdown { ce, ca: tape.value(out.ca).item(), total: tape.value(total).item(), lambda };
    Ok((breakdown, per_param))
}

/// Index of the largest logit; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
