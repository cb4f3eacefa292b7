use alloc::vec::Vec;

use super::trainer::Evaluation;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::argmax;
use crate::nn::{Adam, AdamConfig, ParamStore, Tape, Tensor};
use crate::split::{Role, SplitAssignment};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, weight_decay: 5e-4, max_epochs: 500, patience: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineOutcome {
    pub validation: Evaluation,
    pub test: Evaluation,
}

fn rows(graph: &Graph, nodes: &[usize]) -> Result<Tensor> {
    let d = graph.feature_dim();
    let data = nodes.iter().flat_map(|&i| graph.feature_row(i).iter().map(|&x| x as f64)).collect();
    Tensor::matrix(nodes.len(), d, data)
}

fn score(graph: &Graph, store: &ParamStore, x: &Tensor, nodes: &[usize]) -> Result<Evaluation> {
    let mut tape = Tape::new();
    let v = tape.params(store);
    let xv = tape.constant(x.clone());
    let z = tape.matmul(xv, v[0])?;
    let z = tape.add_row(z, v[1])?;
    let labels: Vec<usize> = nodes.iter().map(|&i| graph.label(i)).collect();
    let loss = tape.cross_entropy(z, &labels)?;
    let c = graph.class_count();
    let correct = tape.value(z).data().chunks(c).zip(&labels).filter(|(row, &y)| argmax(row) == y).count();
    Ok(Evaluation { accuracy: correct as f64 / nodes.len() as f64, loss: tape.value(loss).item() })
}

/// Multinomial logistic regression on raw features, full batch, with the
/// same early-stopping rule as the main model. Weights start at zero, so the
/// result is deterministic.
pub fn train_logistic(graph: &Graph, split: &SplitAssignment, cfg: &LogisticConfig) -> Result<BaselineOutcome> {
    let (train, val, test) = (split.nodes(Role::Train), split.nodes(Role::Validation), split.nodes(Role::Test));
    for (set, name) in [(&train, "training"), (&val, "validation"), (&test, "test")] {
        if set.is_empty() {
            return Err(Error::Empty(alloc::format!("{name} set")));
        }
    }
    let (d, c) = (graph.feature_dim(), graph.class_count());
    let mut store = ParamStore::new();
    store.push("w", Tensor::zeros(&[d, c]));
    store.push("b", Tensor::zeros(&[c]));
    let adam_cfg = AdamConfig { learning_rate: cfg.learning_rate, weight_decay: cfg.weight_decay, ..AdamConfig::default() };
    let mut adam = Adam::new(adam_cfg, &store);
    let (xt, xv, xs) = (rows(graph, &train)?, rows(graph, &val)?, rows(graph, &test)?);
    let labels: Vec<usize> = train.iter().map(|&i| graph.label(i)).collect();

    let mut best: Option<(Evaluation, ParamStore)> = None;
    let mut since_best = 0;
    for _ in 0..cfg.max_epochs.max(1) {
        let mut tape = Tape::new();
        let v = tape.params(&store);
        let x = tape.constant(xt.clone());
        let z = tape.matmul(x, v[0])?;
        let z = tape.add_row(z, v[1])?;
        let loss = tape.cross_entropy(z, &labels)?;
        let grads = tape.backward(loss)?;
        store.zero_grad();
        grads.accumulate_into(&mut store, &v);
        adam.step(&mut store);

        let e = score(graph, &store, &xv, &val)?;
        let better = match &best {
            None => true,
            Some((b, _)) => e.accuracy > b.accuracy || (e.accuracy == b.accuracy && e.loss < b.loss),
        };
        if better {
            best = Some((e, store.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (validation, store) = best.expect("at least one epoch runs");
    Ok(BaselineOutcome { validation, test: score(graph, &store, &xs, &test)? })
}

/// Test accuracy of always predicting the most frequent training label
/// (lowest label on ties).
pub fn majority_rate(graph: &Graph, split: &SplitAssignment) -> Result<f64> {
    let test = split.nodes(Role::Test);
    if test.is_empty() {
        return Err(Error::Empty("test set".into()));
    }
    let mut counts = alloc::vec![0usize; graph.class_count()];
    for i in split.nodes(Role::Train) {
        counts[graph.label(i)] += 1;
    }
    let majority = (0..counts.len()).fold(0, |best, c| if counts[c] > counts[best] { c } else { best });
    Ok(test.iter().filter(|&&i| graph.label(i) == majority).count() as f64 / test.len() as f64)
}
