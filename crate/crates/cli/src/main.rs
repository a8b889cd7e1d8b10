mod archive;
mod commands;
mod error;

use clap::{Parser, Subcommand, ValueEnum};
use commands::{BaselineMethod, Blocks, FitSettings, Metric, PredictAt, SearchMethod, SimulateArgs};
use error::{CliError, CliResult};
use std::path::PathBuf;
use std::process::ExitCode;

/// Functional adjacency spectral embedding of network time series.
#[derive(Parser)]
#[command(name = "fase", version, about)]
struct Cli {
    /// Worker threads (defaults to FASE_THREADS, then the number of cores).
    #[arg(long, global = true, env = "FASE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct FitArgs {
    /// Archive directory holding indices.csv and snapshot_*.csv.
    #[arg(long = "in")]
    input: PathBuf,
    /// Spline order (3 is cubic).
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Fit latent dimensions one at a time.
    #[arg(long)]
    seq: bool,
    /// Curvature penalty weight.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Initializer blocks: `auto` or a positive integer.
    #[arg(long = "L", default_value = "auto")]
    blocks: Blocks,
    /// Skip Procrustes chaining of the initializer blocks.
    #[arg(long)]
    no_align: bool,
    /// Relative objective tolerance.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Let the step size double again after successful iterations.
    #[arg(long)]
    grow_step: bool,
    /// Treat self-loops as unobserved.
    #[arg(long)]
    exclude_diagonal: bool,
    #[arg(long)]
    out: PathBuf,
}

impl FitArgs {
    fn settings(self) -> FitSettings {
        FitSettings {
            input: self.input,
            order: self.order,
            sequential: self.seq,
            lambda: self.lambda,
            blocks: self.blocks,
            no_align: self.no_align,
            tol: self.tol,
            max_iter: self.max_iter,
            grow_step: self.grow_step,
            exclude_diagonal: self.exclude_diagonal,
            out: self.out,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Grid,
    Cd,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Errz,
    Errzstar,
    ThetaMid,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Ase,
    Omni,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a seeded synthetic series and its true trajectories.
    Simulate {
        /// i, ii or iii.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Edge noise standard deviation (scenarios i and ii).
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Target mean edge probability (scenario iii).
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Sinusoid cycles over the index range (scenario ii).
        #[arg(long, default_value_t = 2.0)]
        cycles: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one (q, d) cell.
    Fit {
        /// Number of basis functions.
        #[arg(long)]
        q: usize,
        /// Latent dimension.
        #[arg(long)]
        d: usize,
        #[command(flatten)]
        args: FitArgs,
    },
    /// Select (q, d) by generalized cross validation and fit the winner.
    Tune {
        /// Basis sizes as a:b:s or a comma list.
        #[arg(long, default_value = "6:16:2")]
        q_grid: String,
        /// Latent dimensions as a:b:s or a comma list.
        #[arg(long, default_value = "1:6")]
        d_grid: String,
        #[arg(long, value_enum, default_value = "grid")]
        method: MethodArg,
        #[command(flatten)]
        args: FitArgs,
    },
    /// Compare estimated trajectories with the truth.
    Evaluate {
        /// Directory with trajectories.csv.
        #[arg(long)]
        est: PathBuf,
        /// Directory with trajectories.csv, or a simulated archive.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum, default_value = "errz")]
        metric: MetricArg,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-snapshot or omnibus spectral embedding.
    Baseline {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "ase")]
        method: BaselineArg,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate fitted processes at new indices.
    Predict {
        /// Output directory of `fit` or `tune`.
        #[arg(long)]
        fit: PathBuf,
        /// Index to evaluate at; repeatable.
        #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
        at: Vec<f64>,
        /// Number of equally spaced points across the fitted domain.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate { scenario, n, m, d, sigma, density, cycles, seed, out } => {
            commands::simulate(&SimulateArgs { scenario, n, m, d, sigma, density, cycles, seed, out })
        }
        Command::Fit { q, d, args } => commands::fit(q, d, &args.settings()),
        Command::Tune { q_grid, d_grid, method, args } => {
            let q_grid = commands::parse_grid(&q_grid).map_err(CliError::Usage)?;
            let d_grid = commands::parse_grid(&d_grid).map_err(CliError::Usage)?;
            let method = match method {
                MethodArg::Grid => SearchMethod::Grid,
                MethodArg::Cd => SearchMethod::Cd,
            };
            commands::tune(q_grid, d_grid, method, &args.settings())
        }
        Command::Evaluate { est, truth, metric, out } => {
            let metric = match metric {
                MetricArg::Errz => Metric::ErrZ,
                MetricArg::Errzstar => Metric::ErrZStar,
                MetricArg::ThetaMid => Metric::ThetaMid,
            };
            commands::evaluate(&est, &truth, metric, out.as_deref())
        }
        Command::Baseline { input, method, d, out } => {
            let method = match method {
                BaselineArg::Ase => BaselineMethod::Ase,
                BaselineArg::Omni => BaselineMethod::Omni,
            };
            commands::baseline(&input, method, d, &out)
        }
        Command::Predict { fit, at, grid, out } => {
            let at = match grid {
                Some(k) => PredictAt::Grid(k),
                None => PredictAt::Points(at),
            };
            commands::predict(&fit, at, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
