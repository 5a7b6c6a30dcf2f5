use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ensemble_control::experiment::{
    emit_histograms, evaluate_control, output_root_from_env, run_experiment, system_table,
    OptimizerOverrides, RunOverrides, OUTPUT_ROOT_ENV,
};
use ensemble_control::optimize::OptimizerKind;
use ensemble_control::sampling::DEFAULT_TEST_SIZE;
use ensemble_control::systems::SystemId;
use ensemble_control::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "ensemble-control", version, about = "Robust controls for inhomogeneous quantum ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a control field and write a run directory.
    Run(RunArgs),
    /// Evaluate a control file on a freshly drawn test set.
    Evaluate(EvaluateArgs),
    /// Recompute gradient histograms for stored snapshots of a run.
    Histogram(HistogramArgs),
    /// Print the built-in benchmark systems.
    ListSystems,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file or a previous run's manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    system: Option<SystemId>,
    /// sgd, adam, momentum or fixed_grid.
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    /// Mini-batch size.
    #[arg(long = "M")]
    batch_size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Momentum decay.
    #[arg(long)]
    lambda: Option<f64>,
    /// Points per axis of the fixed grid.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Gradient-evaluation budget.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Control horizon.
    #[arg(long = "T")]
    total_time: Option<f64>,
    /// Number of time steps.
    #[arg(long = "Q")]
    steps: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Evaluate the test set every this many iterations.
    #[arg(long)]
    eval_stride: Option<usize>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    threads: Option<usize>,
    /// Iterations whose controls are stored and histogrammed.
    #[arg(long, value_delimiter = ',')]
    snapshot_iters: Option<Vec<usize>>,
    /// Histogram times.
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
    /// Run directory [default: $ENSEMBLE_CONTROL_OUT/<system>-<optimizer>-seed<seed>].
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> RunOverrides {
        RunOverrides {
            system: self.system,
            seed: self.seed,
            total_time: self.total_time,
            steps: self.steps,
            test_size: self.test_size,
            eval_stride: self.eval_stride,
            threads: self.threads,
            output: self.out.clone(),
            snapshot_iterations: self.snapshot_iters.clone(),
            snapshot_times: self.snapshot_times.clone(),
            optimizer: OptimizerOverrides {
                kind: self.optimizer,
                alpha: self.alpha,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
                lambda: self.lambda,
                batch_size: self.batch_size,
                grid_points: self.grid_points,
                budget: self.budget,
            },
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// Control file with columns t,u1,...,uL.
    #[arg(long)]
    control: PathBuf,
    #[arg(long)]
    system: SystemId,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
    test_size: usize,
    /// Horizon, if the time column cannot fix it.
    #[arg(long = "T")]
    total_time: Option<f64>,
    /// Output directory [default: next to the control file].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HistogramArgs {
    /// Run directory holding manifest.toml and snapshots/.
    #[arg(long)]
    run: PathBuf,
    /// Iterations to histogram, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    iters: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            })
        }
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run(args) => {
            let file = match &args.config {
                Some(path) => RunOverrides::load(path).map_err(as_config_error)?,
                None => RunOverrides::default(),
            };
            let config = file
                .layered(args.overrides())
                .resolve(&output_root_from_env())?;
            let summary = run_experiment(&config)?;
            let last = summary.final_record;
            println!(
                "{}: {} iterations, {} gradient evaluations, mean rel. error {:.4e}, max {:.4e}",
                summary.dir.display(),
                summary.iterations,
                summary.grad_evals,
                last.mean_rel_error,
                last.max_rel_error
            );
            for f in &summary.histogram_files {
                println!("{}", f.display());
            }
        }
        Command::Evaluate(args) => {
            let out = args.out.clone().unwrap_or_else(|| {
                args.control
                    .parent()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("."))
            });
            let result = evaluate_control(
                &args.control,
                args.system,
                args.seed,
                args.test_size,
                args.total_time,
                &out,
            )?;
            println!(
                "mean rel. error {:.6e}, max {:.6e}, mean relative fidelity {:.6}",
                result.report.mean_rel_error,
                result.report.max_rel_error,
                result.report.mean_relative_fidelity()
            );
            println!("{}", result.summary_file.display());
        }
        Command::Histogram(args) => {
            for f in emit_histograms(&args.run, &args.iters)? {
                println!("{}", f.display());
            }
        }
        Command::ListSystems => {
            for line in system_table() {
                println!("{line}");
            }
            println!("default output root: ${OUTPUT_ROOT_ENV} or ./runs");
        }
    }
    Ok(())
}

/// An unreadable config file is the user's mistake, not a run failure.
fn as_config_error(e: Error) -> Error {
    match e {
        Error::Io { path, source } => Error::Config(format!("{}: {source}", path.display())),
        other => other,
    }
}
