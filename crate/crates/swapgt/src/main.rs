use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use swapgt::cache::CacheStatus;
use swapgt::commands::{self, SweepParam};
use swapgt::report::SummaryRow;
use swapgt::selftest::run_selftest;
use swapgt::{CliError, Result, RunConfig};
use swapgt_core::Role;

#[derive(Parser)]
#[command(name = "swapgt", version, about = "Token-swapping graph transformer for node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Directory for results.
    #[arg(short, long, default_value = "results")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    T,
    S,
}

#[derive(Subcommand)]
enum Command {
    /// Build token tables and sequences and store them in a cache file.
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Cache file; defaults to <out>/sequences.swgt.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Train `runs` models and report mean and standard deviation.
    Train {
        #[command(flatten)]
        common: Common,
        /// Reuse or create this token cache.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Evaluate a checkpoint written by `train`.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        role: RoleArg,
    },
    /// Compare the full model with its three ablated variants.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Vary the swapping rounds t or the augmentation count s.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: SweepArg,
        /// Comma-separated values; defaults to 1..4 for t and 1..8 for s.
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the built-in numerical checks.
    Selftest {
        /// Negate the analytic gradient; the gradient check must then fail.
        #[arg(long)]
        inject_sign_error: bool,
    },
}

fn print_rows(rows: &[SummaryRow]) {
    println!("{:<10} {:<17} {:<7} {:>3} {:>5} {:>2} {:>2} {:>9}", "dataset", "variant", "split", "k", "p", "t", "s", "accuracy");
    for r in rows {
        println!(
            "{:<10} {:<17} {:<7} {:>3} {:>5} {:>2} {:>2} {:>6.2} ± {:.2}",
            r.dataset,
            r.variant,
            r.split,
            r.k,
            r.p,
            r.t,
            r.s,
            100.0 * r.mean_acc,
            100.0 * r.std_acc
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { common, cache } => {
            let config = common.load()?;
            let path = cache.unwrap_or_else(|| commands::default_cache_path(&common.out));
            let status = commands::cmd_prepare(&config, &path)?;
            let word = match status {
                CacheStatus::Hit => "cache hit",
                CacheStatus::Created => "cache written",
                CacheStatus::Regenerated => "cache regenerated",
            };
            println!("{word}: {}", path.display());
        }
        Command::Train { common, cache } => {
            let config = common.load()?;
            let row = commands::cmd_train(&config, &common.out, cache.as_deref())?;
            print_rows(&[row]);
        }
        Command::Eval { checkpoint, role } => {
            let role = match role {
                RoleArg::Train => Role::Train,
                RoleArg::Validation => Role::Validation,
                RoleArg::Test => Role::Test,
            };
            let r = commands::cmd_eval(&checkpoint, role)?;
            println!("{:?} accuracy {:.4} over {} nodes (loss {:.4})", r.role, r.evaluation.accuracy, r.nodes, r.evaluation.loss);
        }
        Command::Ablate { common, jobs } => {
            let config = common.load()?;
            print_rows(&commands::cmd_ablate(&config, &common.out, jobs)?);
        }
        Command::Sweep { common, param, values, jobs } => {
            let config = common.load()?;
            let param = match param {
                SweepArg::T => SweepParam::T,
                SweepArg::S => SweepParam::S,
            };
            let values = if values.is_empty() { param.default_values() } else { values };
            print_rows(&commands::cmd_sweep(&config, &common.out, param, &values, jobs)?);
        }
        Command::Selftest { inject_sign_error } => {
            let results = run_selftest(inject_sign_error);
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(CliError::CheckFailed(format!("{failed} of {} checks failed", results.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
