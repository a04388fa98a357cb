use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use randcoef::montecarlo::DesignId;
use randcoef::{BasisFamily, Execution, WeightLaw};
use randcoef_cli::commands::{self, SimulateArgs};
use randcoef_cli::config::RunConfig;
use randcoef_cli::io::ColumnSpec;
use randcoef_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "randcoef",
    version,
    about = "Sieve estimation of correlated random-coefficient models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default taken from the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to a CSV file.
    Fit(FitCmd),
    /// Simulate one of the built-in designs.
    Simulate(SimCmd),
    /// Fit with wild-bootstrap bands for every functional component.
    Bands(FitCmd),
    /// Report the cross-validation criterion over the order grid.
    Cv(FitCmd),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Response column.
    #[arg(long)]
    y: String,
    /// Regressor columns, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    x: Vec<String>,
    /// Control columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    z: Vec<String>,
}

#[derive(Args)]
struct EstimatorArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Basis order, or a comma-separated grid searched by cross-validation.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Folds for cross-validation; 0 selects leave-one-out.
    #[arg(long)]
    cv_folds: Option<usize>,
    /// polynomial or bspline.
    #[arg(long)]
    family: Option<BasisFamily>,
    #[arg(long)]
    pinv_tol: Option<f64>,
    /// Scale the sandwich covariance by n / (n - k).
    #[arg(long)]
    dof_correction: bool,
}

#[derive(Args)]
struct BootstrapArgs {
    /// Bootstrap replications.
    #[arg(long = "B")]
    b: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    weights: Option<WeightLaw>,
    /// Points along each regressor in the curve files.
    #[arg(long)]
    grid_points: Option<usize>,
}

#[derive(Args)]
struct FitCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
    /// Add bootstrap bands to the curve files.
    #[arg(long)]
    bands: bool,
}

#[derive(Args)]
struct SimCmd {
    #[arg(long)]
    design: DesignId,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Latent correlation of the bivariate regressors.
    #[arg(long, default_value_t = 0.0)]
    rho_x: f64,
    /// Draw the regressors once and keep them across replications.
    #[arg(long)]
    fixed_regressors: bool,
    #[command(flatten)]
    estimator: EstimatorArgs,
}

impl EstimatorArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(k) = &self.k {
            cfg.k = k.clone();
        }
        if let Some(f) = self.cv_folds {
            cfg.cv_folds = f;
        }
        if let Some(f) = self.family {
            cfg.family = f;
        }
        if let Some(t) = self.pinv_tol {
            cfg.pinv_tol = t;
        }
        cfg.dof_correction |= self.dof_correction;
    }
}

impl BootstrapArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(b) = self.b {
            cfg.bootstrap.replications = b;
        }
        if let Some(l) = self.level {
            cfg.bootstrap.level = l;
        }
        if let Some(w) = self.weights {
            cfg.bootstrap.weights = w;
        }
        if let Some(m) = self.grid_points {
            cfg.output.grid_points = m;
        }
    }
}

impl DataArgs {
    fn columns(&self) -> ColumnSpec {
        ColumnSpec {
            y: self.y.clone(),
            x: self.x.clone(),
            z: self.z.clone(),
        }
    }
}

fn run(cli: Cli) -> CliResult<String> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let exec = match cli.threads {
        Some(0) => return Err(CliError::Config("--threads must be positive".into())),
        Some(1) => Execution::Sequential,
        Some(t) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| CliError::Config(e.to_string()))?;
            Execution::Parallel
        }
        None => Execution::Parallel,
    };
    let out_dir = |cfg: &RunConfig| {
        cli.out
            .clone()
            .unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
    };

    let outcome = match &cli.command {
        Command::Fit(c) | Command::Bands(c) | Command::Cv(c) => {
            c.estimator.apply(&mut cfg);
            c.bootstrap.apply(&mut cfg);
            let out = out_dir(&cfg);
            match &cli.command {
                Command::Cv(_) => commands::cv(&c.data.data, &c.data.columns(), &cfg, &out, exec)?,
                Command::Bands(_) => commands::fit(
                    "bands",
                    &c.data.data,
                    &c.data.columns(),
                    &cfg,
                    true,
                    &out,
                    exec,
                )?,
                _ => commands::fit(
                    "fit",
                    &c.data.data,
                    &c.data.columns(),
                    &cfg,
                    c.bands,
                    &out,
                    exec,
                )?,
            }
        }
        Command::Simulate(c) => {
            c.estimator.apply(&mut cfg);
            let args = SimulateArgs {
                design: c.design,
                n: c.n,
                reps: c.reps,
                rho_x: c.rho_x,
                fixed_regressors: c.fixed_regressors,
            };
            commands::simulate(&args, &cfg, &out_dir(&cfg), exec)?
        }
    };
    Ok(outcome.report)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
