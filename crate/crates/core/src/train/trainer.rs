use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{argmax, forward_on_tape, LossBreakdown, Mode, ModelInputs, ModelParams};
use crate::nn::{Adam, Tape};
use crate::rng::{self, streams};
use crate::split::{Role, SplitAssignment};
use crate::tokenizer::{build_sequences, SequenceBatch, TokenTable};

/// Nodes per evaluation forward pass.
pub const EVAL_CHUNK: usize = 256;

/// Accuracy and mean cross-entropy over a node set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training loss averaged over the epoch's batches, weighted by size.
    pub train: LossBreakdown,
    pub validation: Evaluation,
}

/// Result of one training run; `params` is the best-validation snapshot.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub best_epoch: usize,
    pub validation: Evaluation,
    pub test: Option<Evaluation>,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
}

/// Both views' sequences for one seed.
pub fn sequences_for(
    config: &TrainConfig,
    tables: &(TokenTable, TokenTable),
    seed: u64,
) -> Result<(SequenceBatch, SequenceBatch)> {
    let strategy = config.apply_variant().strategy;
    Ok((build_sequences(&tables.0, strategy, seed)?, build_sequences(&tables.1, strategy, seed)?))
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Evaluation-mode logits `[nodes, c]`, computed in chunks.
pub fn predict_logits(params: &ModelParams, inputs: &ModelInputs, nodes: &[usize], alpha: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(nodes.len() * params.config().classes);
    for chunk in nodes.chunks(EVAL_CHUNK) {
        let mut tape = Tape::new();
        let vars = tape.params(&params.store);
        let f = forward_on_tape(&mut tape, &vars, params, inputs, chunk, None, alpha, 0.0, &mut Mode::Eval)?;
        out.extend_from_slice(tape.value(f.logits).data());
    }
    Ok(out)
}

/// Accuracy and cross-entropy of evaluation-mode predictions on `nodes`.
pub fn evaluate(params: &ModelParams, inputs: &ModelInputs, nodes: &[usize], alpha: f64) -> Result<Evaluation> {
    if nodes.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let c = params.config().classes;
    let logits = predict_logits(params, inputs, nodes, alpha)?;
    let (mut correct, mut loss) = (0usize, 0.0);
    for (row, &i) in logits.chunks(c).zip(nodes) {
        let y = inputs.graph.label(i);
        if argmax(row) == y {
            correct += 1;
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + libm::log(row.iter().map(|&z| libm::exp(z - m)).sum::<f64>());
        loss += lse - row[y];
    }
    let n = nodes.len() as f64;
    Ok(Evaluation { accuracy: correct as f64 / n, loss: loss / n })
}

fn improves(candidate: &Evaluation, best: Option<&Evaluation>) -> bool {
    match best {
        None => true,
        Some(b) => candidate.accuracy > b.accuracy || (candidate.accuracy == b.accuracy && candidate.loss < b.loss),
    }
}

/// Trains one model on `split` with Adam and validation early stopping.
///
/// Every random draw (initialization, sequences, dropout, batch order) is
/// keyed by `seed`, so the outcome is a pure function of the arguments.
pub fn train_one(
    config: &TrainConfig,
    graph: &Graph,
    tables: &(TokenTable, TokenTable),
    split: &SplitAssignment,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate()?;
    let setup = config.apply_variant();
    let mut params = ModelParams::init(config.model(graph.feature_dim(), graph.class_count()), seed)?;
    let mut adam = Adam::new(config.adam(), &params.store);
    let mut dropout_rng = rng::stream(seed, streams::DROPOUT);
    let mut shuffle_rng = rng::stream(seed, streams::SHUFFLE);

    let train_nodes = split.nodes(Role::Train);
    let val_nodes = split.nodes(Role::Validation);
    let test_nodes = split.nodes(Role::Test);
    if train_nodes.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if val_nodes.is_empty() {
        return Err(Error::Empty("validation set".into()));
    }
    let batch_size = if config.batch_size == 0 { train_nodes.len() } else { config.batch_size };

    // Evaluation always sees the base sequences; training may resample.
    let base = sequences_for(config, tables, seed)?;
    let eval_inputs = ModelInputs { graph, attribute: &base.0, topology: &base.1 };
    let mut resampled = None;
    let mut order = train_nodes.clone();
    let mut best: Option<(Evaluation, usize, ModelParams)> = None;
    let mut history = Vec::new();
    let mut since_best = 0;

    for epoch in 0..config.max_epochs {
        if config.resample_each_epoch && epoch > 0 {
            resampled = Some(sequences_for(config, tables, epoch_seed(seed, epoch))?);
        }
        let current = resampled.as_ref().unwrap_or(&base);
        let inputs = ModelInputs { graph, attribute: &current.0, topology: &current.1 };
        if config.batch_size != 0 {
            order.shuffle(&mut shuffle_rng);
        }
        let (mut ce, mut ca, mut total) = (0.0, 0.0, 0.0);
        for batch in order.chunks(batch_size) {
            let labels: Vec<usize> = batch.iter().map(|&i| graph.label(i)).collect();
            let mut tape = Tape::new();
            let vars = tape.params(&params.store);
            let mut mode = Mode::Train(&mut dropout_rng);
            let f = forward_on_tape(&mut tape, &vars, &params, &inputs, batch, Some(&labels), config.alpha, setup.lambda, &mut mode)?;
            let loss = f.total.expect("labels given");
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            let w = batch.len() as f64;
            ce += w * tape.value(f.ce.expect("labels given")).item();
            ca += w * tape.value(f.ca).item();
            total += w * value;
            let grads = tape.backward(loss)?;
            params.store.zero_grad();
            grads.accumulate_into(&mut params.store, &vars);
            adam.step(&mut params.store);
        }
        if !params.store.is_finite() {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }
        let n = train_nodes.len() as f64;
        let validation = evaluate(&params, &eval_inputs, &val_nodes, config.alpha)?;
        let train = LossBreakdown { ce: ce / n, ca: ca / n, total: total / n, lambda: setup.lambda };
        history.push(EpochRecord { epoch, train, validation });
        if improves(&validation, best.as_ref().map(|b| &b.0)) {
            best = Some((validation, epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }

    let (validation, best_epoch, params) = best.expect("at least one epoch runs");
    let test = if test_nodes.is_empty() { None } else { Some(evaluate(&params, &eval_inputs, &test_nodes, config.alpha)?) };
    Ok(TrainOutcome { params, best_epoch, validation, test, epochs_run: history.len(), history })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_rule() {
        let e = |accuracy, loss| Evaluation { accuracy, loss };
        assert!(improves(&e(0.5, 1.0), None));
        assert!(improves(&e(0.6, 9.0), Some(&e(0.5, 1.0))));
        assert!(improves(&e(0.5, 0.9), Some(&e(0.5, 1.0))));
        assert!(!improves(&e(0.5, 1.0), Some(&e(0.5, 1.0))));
        assert!(!improves(&e(0.4, 0.1), Some(&e(0.5, 1.0))));
    }

    #[test]
    fn epoch_zero_keeps_seed() {
        assert_eq!(epoch_seed(42, 0), 42);
        assert_ne!(epoch_seed(42, 1), 42);
    }
}
