use alloc::vec::Vec;

use super::config::TrainConfig;
use super::trainer::{train_one, EpochRecord, TrainOutcome};
use crate::adjacency::NormalizedAdjacency;
use crate::error::{param_err, Error, Result};
use crate::graph::Graph;
use crate::split::{make_split, SplitAssignment};
use crate::tokenizer::{build_token_tables, TokenTable};

/// Offset between a run's split seed and its initialization seed.
pub const INIT_SEED_OFFSET: u64 = 10_000;

/// Split and initialization seeds of run `r`.
pub fn run_seeds(base_seed: u64, r: usize) -> (u64, u64) {
    let split = base_seed.wrapping_add(r as u64);
    (split, split.wrapping_add(INIT_SEED_OFFSET))
}

/// Token tables for the configured variant (width `k` or `2k`).
pub fn prepare_tables(config: &TrainConfig, graph: &Graph) -> Result<(TokenTable, TokenTable)> {
    config.validate()?;
    let adj = NormalizedAdjacency::from_graph(graph);
    build_token_tables(graph, &adj, &config.propagation(), config.apply_variant().table_k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub split_seed: u64,
    pub init_seed: u64,
    pub test_accuracy: f64,
    pub validation_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub runs: Vec<RunRecord>,
    pub mean_accuracy: f64,
    /// Sample standard deviation; zero for a single run.
    pub std_accuracy: f64,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

/// Runs `config.runs` independent trainings, each on its own split and
/// initialization, and reports test accuracy statistics. `tables` must come
/// from [`prepare_tables`] for the same config; `observe` sees every finished
/// run and may abort the experiment with its own error.
pub fn run_experiment_with<F, E>(
    config: &TrainConfig,
    graph: &Graph,
    tables: &(TokenTable, TokenTable),
    mut observe: F,
) -> core::result::Result<ExperimentResult, E>
where
    F: FnMut(&RunRecord, &SplitAssignment, &TrainOutcome) -> core::result::Result<(), E>,
    E: From<Error>,
{
    config.validate()?;
    let table_k = config.apply_variant().table_k;
    if tables.0.k() != table_k || tables.1.k() != table_k {
        return Err(param_err!("token tables have width {}, config needs {table_k}", tables.0.k()).into());
    }
    let mut runs = Vec::with_capacity(config.runs);
    for r in 0..config.runs {
        let (split_seed, init_seed) = run_seeds(config.base_seed, r);
        let split = make_split(graph, config.split, split_seed)?;
        let outcome = train_one(config, graph, tables, &split, init_seed)?;
        let test = outcome.test.ok_or_else(|| Error::Empty("test set".into()))?;
        let record = RunRecord {
            run: r,
            split_seed,
            init_seed,
            test_accuracy: test.accuracy,
            validation_accuracy: outcome.validation.accuracy,
            best_epoch: outcome.best_epoch,
            epochs_run: outcome.epochs_run,
            history: outcome.history.clone(),
        };
        observe(&record, &split, &outcome)?;
        runs.push(record);
    }
    let accs: Vec<f64> = runs.iter().map(|r| r.test_accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    Ok(ExperimentResult { runs, mean_accuracy, std_accuracy })
}

pub fn run_experiment(config: &TrainConfig, graph: &Graph) -> Result<ExperimentResult> {
    let tables = prepare_tables(config, graph)?;
    run_experiment_with(config, graph, &tables, |_, _, _| Ok::<_, Error>(()))
}
