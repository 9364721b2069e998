//! `trmf`: fit, forecast, and evaluate temporally regularized matrix
//! factorizations from the command line.
//!
//! Exit codes: 0 on success, 1 on validation errors (bad flags, malformed
//! files, solver rejections), 2 on I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use trmf_cli::commands::{
    run_backtest, run_fit, run_forecast, run_gridsearch, run_seasonal, run_synth, ReconcileMode,
};
use trmf_cli::config::{MethodSpec, RunConfig};
use trmf_cli::error::CliResult;
use trmf_core::SyntheticSpec;

#[derive(Parser)]
#[command(
    name = "trmf",
    version,
    about = "Temporal-regularized matrix factorization forecasting toolkit",
    disable_help_subcommand = true
)]
struct Cli {
    /// Flat key=value config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for model initialization and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread count (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct HyperArgs {
    /// Number of latent factors.
    #[arg(long)]
    d: Option<usize>,
    /// Autoregression order of the factors.
    #[arg(long)]
    p: Option<usize>,
    /// Loadings penalty weight.
    #[arg(long)]
    lambda_f: Option<f64>,
    /// Factor penalty weight.
    #[arg(long)]
    lambda_x: Option<f64>,
    /// Autoregression-coefficient penalty weight.
    #[arg(long)]
    lambda_theta: Option<f64>,
    /// Autoregressive share of the factor penalty, in [0, 1].
    #[arg(long)]
    eta_x: Option<f64>,
    /// Graph share of the loadings penalty, in [0, 1].
    #[arg(long)]
    eta_f: Option<f64>,
    /// Sweep cap for the solver.
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// Relative objective-decrease threshold for convergence.
    #[arg(long)]
    tol: Option<f64>,
}

impl HyperArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.d {
            cfg.hyper.d = v;
        }
        if let Some(v) = self.p {
            cfg.hyper.p = v;
        }
        if let Some(v) = self.lambda_f {
            cfg.hyper.lambda_f = v;
        }
        if let Some(v) = self.lambda_x {
            cfg.hyper.lambda_x = v;
        }
        if let Some(v) = self.lambda_theta {
            cfg.hyper.lambda_theta = v;
        }
        if let Some(v) = self.eta_x {
            cfg.hyper.eta_x = v;
        }
        if let Some(v) = self.eta_f {
            cfg.hyper.eta_f = v;
        }
        if let Some(v) = self.max_sweeps {
            cfg.hyper.max_sweeps = v;
        }
        if let Some(v) = self.tol {
            cfg.hyper.tol = v;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write data.csv (and hierarchy.csv).
    Synth {
        /// Number of time steps.
        #[arg(long, default_value_t = 100)]
        t: usize,
        /// Number of series (ignored when --tree is given).
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// True factor count.
        #[arg(long = "d-true", default_value_t = 3)]
        d_true: usize,
        /// True autoregression order.
        #[arg(long = "p-true", default_value_t = 3)]
        p_true: usize,
        /// Observation noise standard deviation.
        #[arg(long, default_value_t = 0.1)]
        noise_sigma: f64,
        /// Probability that a cell is observed, in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        mask_density: f64,
        /// Branching factors per level, e.g. `2,3` for 6 leaves.
        #[arg(long, value_delimiter = ',')]
        tree: Option<Vec<usize>>,
    },
    /// Fit the factorization and write model.json plus the objective trace.
    Fit {
        /// Long-format observations CSV (series_id,period,value).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Hierarchy edge list for the loadings regularizer.
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Forecast from a fitted model, optionally reconciled over a hierarchy.
    Forecast {
        /// Model file produced by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Forecast horizon.
        #[arg(long)]
        horizon: Option<usize>,
        /// Reconciliation mode: bottom-up, top-down, or middle-out.
        #[arg(long)]
        reconcile: Option<String>,
        /// Hierarchy edge list (required with --reconcile).
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        /// Observations CSV for the proration shares (top-down, middle-out).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Hierarchy level carrying the model forecasts for middle-out.
        #[arg(long)]
        level: Option<usize>,
        /// Clamp emitted forecasts at zero.
        #[arg(long)]
        clamp_nonnegative: bool,
    },
    /// Rolling-origin backtest of the configured methods.
    Backtest {
        /// Long-format observations CSV.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Hierarchy edge list for the loadings regularizer.
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        /// Forecast horizon per fold.
        #[arg(long)]
        horizon: Option<usize>,
        /// Number of folds.
        #[arg(long)]
        folds: Option<usize>,
        /// Comma-separated methods: trmf, ar, ar:<order>.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Backtest one factorization per (d, p) grid cell.
    Gridsearch {
        /// Long-format observations CSV.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Hierarchy edge list for the loadings regularizer.
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        /// Factor counts to try.
        #[arg(long = "d-values", value_delimiter = ',', default_values_t = [10, 25, 50, 100])]
        d_values: Vec<usize>,
        /// Autoregression orders to try.
        #[arg(long = "p-values", value_delimiter = ',', default_values_t = [1, 3, 6, 12])]
        p_values: Vec<usize>,
        /// Forecast horizon per fold.
        #[arg(long)]
        horizon: Option<usize>,
        /// Number of folds.
        #[arg(long)]
        folds: Option<usize>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Individual and group seasonal indices over complete cycles.
    Seasonal {
        /// Long-format observations CSV.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Season cycle length in periods.
        #[arg(long)]
        season_length: Option<usize>,
    },
}

fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.hyper.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        // Ignore the error from double initialization in tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let mut cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Synth {
            t,
            n,
            d_true,
            p_true,
            noise_sigma,
            mask_density,
            tree,
        } => {
            let spec = SyntheticSpec {
                t_len: t,
                n,
                d_true,
                p_true,
                noise_sigma,
                mask_density,
                seed: cfg.hyper.seed,
                tree,
            };
            run_synth(&cfg, &spec)
        }
        Command::Fit {
            input,
            hierarchy,
            hyper,
        } => {
            hyper.apply(&mut cfg);
            if input.is_some() {
                cfg.input = input;
            }
            if hierarchy.is_some() {
                cfg.hierarchy = hierarchy;
            }
            run_fit(&cfg)
        }
        Command::Forecast {
            model,
            horizon,
            reconcile,
            hierarchy,
            input,
            level,
            clamp_nonnegative,
        } => {
            if let Some(h) = horizon {
                cfg.horizon = h;
            }
            if input.is_some() {
                cfg.input = input;
            }
            if hierarchy.is_some() {
                cfg.hierarchy = hierarchy;
            }
            if clamp_nonnegative {
                cfg.clamp_nonnegative = true;
            }
            let mode = reconcile
                .as_deref()
                .map(ReconcileMode::parse)
                .transpose()?;
            run_forecast(&cfg, &model, mode, level)
        }
        Command::Backtest {
            input,
            hierarchy,
            horizon,
            folds,
            methods,
            hyper,
        } => {
            hyper.apply(&mut cfg);
            if input.is_some() {
                cfg.input = input;
            }
            if hierarchy.is_some() {
                cfg.hierarchy = hierarchy;
            }
            if let Some(h) = horizon {
                cfg.horizon = h;
            }
            if let Some(k) = folds {
                cfg.folds = k;
            }
            if let Some(methods) = methods {
                cfg.methods = methods
                    .iter()
                    .map(|m| MethodSpec::parse(m))
                    .collect::<CliResult<_>>()?;
            }
            run_backtest(&cfg)
        }
        Command::Gridsearch {
            input,
            hierarchy,
            d_values,
            p_values,
            horizon,
            folds,
            hyper,
        } => {
            hyper.apply(&mut cfg);
            if input.is_some() {
                cfg.input = input;
            }
            if hierarchy.is_some() {
                cfg.hierarchy = hierarchy;
            }
            if let Some(h) = horizon {
                cfg.horizon = h;
            }
            if let Some(k) = folds {
                cfg.folds = k;
            }
            run_gridsearch(&cfg, &d_values, &p_values)
        }
        Command::Seasonal {
            input,
            season_length,
        } => {
            if input.is_some() {
                cfg.input = input;
            }
            if season_length.is_some() {
                cfg.season_length = season_length;
            }
            run_seasonal(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
