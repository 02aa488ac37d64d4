use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nmqsd_cli::commands::{self, CliError, Oracle, Report, RunOptions};
use nmqsd_cli::config::{parse_config, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "nmqsd",
    version,
    about = "Non-Markovian quantum state diffusion trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the trajectory ensemble and write observable CSVs
    Simulate(Common),
    /// Solve a deterministic master equation and write the same CSVs
    Reference(Common),
    /// Run the ensemble against an oracle; exit 3 if it deviates
    Compare(Common),
    /// Check the sampled noise covariance against the kernel
    NoiseCheck {
        #[command(flatten)]
        common: Common,
        /// Number of noise realizations
        #[arg(long, default_value_t = 100_000)]
        realizations: usize,
        /// Probe times per axis
        #[arg(long, default_value_t = 10)]
        probes: usize,
    },
    /// List model families and their configuration keys
    ListModels,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override `run.seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Override `run.trajectories`
    #[arg(long)]
    trajectories: Option<usize>,
    /// Worker threads (default: machine parallelism); never changes output
    #[arg(long)]
    workers: Option<usize>,
    /// Validate and print the plan without running or writing anything
    #[arg(long)]
    dry_run: bool,
    /// Also write the order-0 memory coefficients to this CSV
    #[arg(long, value_name = "PATH")]
    dump_coefficients: Option<PathBuf>,
    /// lindblad, convolutionless or pseudomode
    #[arg(long, value_parser = Oracle::parse)]
    oracle: Option<Oracle>,
    /// Pass threshold in standard errors
    #[arg(long, default_value_t = 4.0)]
    threshold: f64,
    /// First pseudomode cutoff tried; raised until converged
    #[arg(long, default_value_t = 4)]
    cutoff: usize,
}

fn load(common: &Common) -> Result<(RunConfig, RunOptions), CliError> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::validation("config", format!("{}: {e}", common.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.trajectories {
        if n == 0 {
            return Err(CliError::validation("config", "`--trajectories` must be >= 1"));
        }
        cfg.trajectories = n;
    }
    if common.workers == Some(0) {
        return Err(CliError::validation("config", "`--workers` must be >= 1"));
    }
    let base_dir = common
        .config
        .parent()
        .map_or_else(|| Path::new(".").to_path_buf(), Path::to_path_buf);
    let opts = RunOptions {
        base_dir,
        workers: common.workers,
        dry_run: common.dry_run,
        dump_coefficients: common.dump_coefficients.clone(),
        oracle: common.oracle,
        threshold: common.threshold,
        cutoff: common.cutoff,
        ..RunOptions::default()
    };
    Ok((cfg, opts))
}

fn run(cli: Cli) -> Result<Report, CliError> {
    match cli.command {
        Command::ListModels => Ok(Report {
            text: commands::list_models(),
            files: Vec::new(),
        }),
        Command::Simulate(c) => load(&c).and_then(|(cfg, o)| commands::simulate(&cfg, &o)),
        Command::Reference(c) => load(&c).and_then(|(cfg, o)| commands::reference(&cfg, &o)),
        Command::Compare(c) => load(&c).and_then(|(cfg, o)| commands::compare(&cfg, &o)),
        Command::NoiseCheck {
            common,
            realizations,
            probes,
        } => load(&common).and_then(|(cfg, mut o)| {
            o.realizations = realizations;
            o.probes = probes;
            commands::noise_check(&cfg, &o)
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            print!("{}", report.text);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
