//! Subcommand implementations. Each returns its results and writes its files
//! under the output directory; printing is left to the binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::info;
use swapgt_core::model::{ModelInputs, ModelParams};
use swapgt_core::tokenizer::TokenTable;
use swapgt_core::train::{evaluate, prepare_tables, run_experiment_with, sequences_for, Evaluation, Variant};
use swapgt_core::{make_split, Graph, Role};

use crate::cache::{self, CacheStatus};
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::load_dataset;
use crate::report::{write_summary, RunReport, SummaryRow};

pub const CHECKPOINT_FILE: &str = "model.swgc";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Builds or reuses the cache at `path`.
pub fn cmd_prepare(config: &RunConfig, path: &Path) -> Result<CacheStatus> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let graph = load_dataset(config)?;
    Ok(cache::prepare(config, &graph, path)?.1)
}

/// Runs every configured seed; writes one JSON per run under `runs_dir`
/// named `{label}-run{r}.json` and, when `checkpoint` is given, the first
/// run's parameters.
fn experiment(
    config: &RunConfig,
    graph: &Graph,
    tables: &(TokenTable, TokenTable),
    runs_dir: &Path,
    label: &str,
    checkpoint: Option<&Path>,
) -> Result<SummaryRow> {
    ensure_dir(runs_dir)?;
    let config_text = config.to_text();
    let result = run_experiment_with(&config.train, graph, tables, |record, _, outcome| -> Result<()> {
        RunReport::new(config, record).write(&runs_dir.join(format!("{label}-run{}.json", record.run)))?;
        if let (Some(cp), 0) = (checkpoint, record.run) {
            Checkpoint {
                run: 0,
                split_seed: record.split_seed,
                init_seed: record.init_seed,
                config_text: config_text.clone(),
                params: outcome.params.store.clone(),
            }
            .write(cp)?;
        }
        info!("{label} run {}: test accuracy {:.4}", record.run, record.test_accuracy);
        Ok(())
    })?;
    Ok(SummaryRow::new(config, &result))
}

/// Trains `runs` models, writing `train.csv`, per-run JSON under `runs/`
/// and the first run's checkpoint.
pub fn cmd_train(config: &RunConfig, out: &Path, cache_path: Option<&Path>) -> Result<SummaryRow> {
    ensure_dir(out)?;
    let graph = load_dataset(config)?;
    let tables = match cache_path {
        Some(p) => cache::prepare(config, &graph, p)?.0.tables,
        None => prepare_tables(&config.train, &graph)?,
    };
    let row = experiment(config, &graph, &tables, &out.join("runs"), "train", Some(&out.join(CHECKPOINT_FILE)))?;
    write_summary(&out.join("train.csv"), std::slice::from_ref(&row))?;
    Ok(row)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub role: Role,
    pub nodes: usize,
    pub evaluation: Evaluation,
}

/// Re-evaluates a checkpoint on the split and sequences it was trained with.
pub fn cmd_eval(checkpoint: &Path, role: Role) -> Result<EvalReport> {
    let cp = Checkpoint::read(checkpoint)?;
    let config = RunConfig::from_text(&cp.config_text, None, &[])?;
    let graph = load_dataset(&config)?;
    let model = config.train.model(graph.feature_dim(), graph.class_count());
    let params = ModelParams::from_store(model, cp.params)?;
    let tables = prepare_tables(&config.train, &graph)?;
    let seqs = sequences_for(&config.train, &tables, cp.init_seed)?;
    let split = make_split(&graph, config.train.split, cp.split_seed)?;
    let nodes = split.nodes(role);
    let inputs = ModelInputs { graph: &graph, attribute: &seqs.0, topology: &seqs.1 };
    let evaluation = evaluate(&params, &inputs, &nodes, config.train.alpha)?;
    Ok(EvalReport { role, nodes: nodes.len(), evaluation })
}

/// Applies `f` to every item on up to `jobs` threads; results keep item order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every item ran")).collect()
}

/// Runs the four variants under one config and writes `ablate.csv`.
pub fn cmd_ablate(config: &RunConfig, out: &Path, jobs: usize) -> Result<Vec<SummaryRow>> {
    ensure_dir(out)?;
    let graph = load_dataset(config)?;
    let runs_dir = out.join("runs");
    let rows = parallel_map(&Variant::ALL, jobs, |&v| {
        let c = config.with_variant(v);
        let tables = prepare_tables(&c.train, &graph)?;
        experiment(&c, &graph, &tables, &runs_dir, v.as_str(), None)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_summary(&out.join("ablate.csv"), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Swapping rounds.
    T,
    /// Augmented sequences per node.
    S,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::T => "t",
            SweepParam::S => "s",
        }
    }

    pub fn default_values(self) -> Vec<usize> {
        match self {
            SweepParam::T => (1..=4).collect(),
            SweepParam::S => (1..=8).collect(),
        }
    }
}

/// One result row per value of `param`, written to `sweep-{t|s}.csv`.
pub fn cmd_sweep(config: &RunConfig, out: &Path, param: SweepParam, values: &[usize], jobs: usize) -> Result<Vec<SummaryRow>> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }
    ensure_dir(out)?;
    let graph = load_dataset(config)?;
    // Neither t nor s changes the token tables.
    let tables = prepare_tables(&config.train, &graph)?;
    let runs_dir = out.join("runs");
    let rows = parallel_map(values, jobs, |&v| {
        let mut c = config.clone();
        match param {
            SweepParam::T => c.train.swap_t = v,
            SweepParam::S => c.train.aug_s = v,
        }
        experiment(&c, &graph, &tables, &runs_dir, &format!("sweep-{}{v}", param.key()), None)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_summary(&out.join(format!("sweep-{}.csv", param.key())), &rows)?;
    Ok(rows)
}

pub fn default_cache_path(out: &Path) -> PathBuf {
    out.join("sequences.swgt")
}
