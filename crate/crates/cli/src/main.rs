mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use liouville_disk::error::Error;
use liouville_disk::spectral_solver::LinearMethod;

use crate::config::{ChartConfig, ExperimentConfig};

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// A check or computation failed on valid input (exit 2).
    Science(String),
    /// Bad flags, configuration, input files or output directory (exit 3).
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Science(_) => 2,
            CliError::Usage(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Format(_) => CliError::Usage(e.to_string()),
            _ => CliError::Science(e.to_string()),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Science(m) => write!(f, "error: {m}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "liouville-disk",
    version,
    about = "Boundary blow-up experiments for the prescribed curvature problem on the unit disk"
)]
struct Cli {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Fixture name or path to a curvature JSON file.
    #[arg(long, global = true)]
    curvature: Option<String>,
    /// Output directory for CSV/JSON artifacts; falls back to the config,
    /// then `LIOUVILLE_DISK_OUT`, then the working directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomly drawn check points.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the closed-form and asymptotic identity checks; writes identities.csv.
    VerifyIdentities {
        #[arg(long)]
        rel_tol: Option<f64>,
        #[arg(long)]
        zero_tol: Option<f64>,
        /// Angle of the concentration point for the asymptotic checks.
        #[arg(long)]
        xi_angle: Option<f64>,
    },
    /// Print the admissibility report of the curvature data as JSON.
    CheckHypotheses {
        #[arg(long, default_value_t = liouville_disk::reduction::HYPOTHESIS_TOL)]
        tol: f64,
    },
    /// Print hypotheses, reduced coefficients and reduced solution as JSON.
    Reduce,
    /// Residual norms along an ε ladder; writes scaling.csv.
    ResidualScan {
        #[arg(long)]
        p: Option<f64>,
        /// Comma-separated ε values, decreasing in magnitude.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        epsilons: Option<Vec<f64>>,
        /// Fail when max/min of the ratio column exceeds this value.
        #[arg(long)]
        band_max: Option<f64>,
    },
    /// Projected fixed point for the correction; writes fixedpoint.json.
    Solve {
        #[command(flatten)]
        chart: ChartArgs,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        radial: Option<usize>,
        #[arg(long, value_enum)]
        linear: Option<LinearArg>,
        /// Also write phi.csv.
        #[arg(long)]
        dump: bool,
    },
    /// Sample the ansatz on a polar lattice; writes profile.csv.
    Profile {
        #[command(flatten)]
        chart: ChartArgs,
        #[arg(long)]
        nr: Option<usize>,
        #[arg(long)]
        ntheta: Option<usize>,
    },
}

/// Either `--epsilon` alone (chart from the reduced solution) or an explicit
/// `--delta` with optional `--eta`, `--tau`.
#[derive(Debug, Args)]
struct ChartArgs {
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires = "delta")]
    eta: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires = "delta")]
    tau: Option<f64>,
}

impl ChartArgs {
    fn apply(&self, epsilon: &mut Option<f64>, chart: &mut Option<ChartConfig>) {
        if self.epsilon.is_some() {
            *epsilon = self.epsilon;
        }
        if let Some(delta) = self.delta {
            *chart = Some(ChartConfig { delta, eta: self.eta.unwrap_or(0.0), tau: self.tau.unwrap_or(0.0) });
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LinearArg {
    Picard,
    Dense,
    Auto,
}

impl From<LinearArg> for LinearMethod {
    fn from(a: LinearArg) -> Self {
        match a {
            LinearArg::Picard => LinearMethod::Picard,
            LinearArg::Dense => LinearMethod::Dense,
            LinearArg::Auto => LinearMethod::Auto,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(c) = &cli.curvature {
        config.curvature = c.clone();
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    apply_command_flags(&cli.command, &mut config);
    config.validate()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    let data = config.curvature_data()?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::VerifyIdentities { .. } => commands::verify_identities(&config, &data, &config.output_dir(out)?),
        Command::CheckHypotheses { tol } => commands::check_hypotheses(&data, tol),
        Command::Reduce => commands::reduce(&data),
        Command::ResidualScan { .. } => commands::residual_scan(&config, &data, &config.output_dir(out)?),
        Command::Solve { .. } => commands::solve(&config, &data, &config.output_dir(out)?),
        Command::Profile { .. } => commands::profile(&config, &data, &config.output_dir(out)?),
    }
}

fn apply_command_flags(command: &Command, config: &mut ExperimentConfig) {
    match command {
        Command::VerifyIdentities { rel_tol, zero_tol, xi_angle } => {
            let id = &mut config.identities;
            if let Some(v) = rel_tol {
                id.rel_tol = *v;
                id.resolvent_tol = id.resolvent_tol.min(*v);
            }
            if let Some(v) = zero_tol {
                id.zero_tol = *v;
            }
            if let Some(v) = xi_angle {
                id.xi_angle = *v;
            }
        }
        Command::ResidualScan { p, epsilons, band_max } => {
            let r = &mut config.residual;
            if let Some(v) = p {
                r.p = *v;
            }
            if let Some(v) = epsilons {
                r.epsilons = Some(v.clone());
            }
            if let Some(v) = band_max {
                r.band_max = Some(*v);
            }
        }
        Command::Solve { chart, max_iter, tol, modes, radial, linear, dump } => {
            let s = &mut config.solve;
            chart.apply(&mut s.epsilon, &mut s.chart);
            if let Some(v) = max_iter {
                s.max_iter = *v;
            }
            if let Some(v) = tol {
                s.tol = *v;
            }
            if let Some(v) = modes {
                s.modes = *v;
            }
            if let Some(v) = radial {
                s.radial = *v;
            }
            if let Some(v) = linear {
                s.linear = (*v).into();
            }
            s.dump_field |= dump;
        }
        Command::Profile { chart, nr, ntheta } => {
            let p = &mut config.profile;
            chart.apply(&mut p.epsilon, &mut p.chart);
            if let Some(v) = nr {
                p.nr = *v;
            }
            if let Some(v) = ntheta {
                p.ntheta = *v;
            }
        }
        Command::CheckHypotheses { .. } | Command::Reduce => {}
    }
}
