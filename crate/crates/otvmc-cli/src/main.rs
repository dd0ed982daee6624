//! Command line front end: ensemble simulation, exact reference engines,
//! and table comparison over a shared JSON run configuration.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use otvmc::config::RunConfig;
use otvmc::integrator::SolverScheme;
use otvmc::model::SseMode;
use otvmc::oracle;
use otvmc::output;
use otvmc::runner;

/// Worker-count override; unset uses all available cores.
const WORKERS_ENV: &str = "OTVMC_WORKERS";

#[derive(Parser)]
#[command(
    name = "otvmc",
    about = "Variational Monte Carlo trajectories for dissipative spin dynamics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Nonlinear,
    Linear,
}

impl From<ModeArg> for SseMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Nonlinear => SseMode::Nonlinear,
            ModeArg::Linear => SseMode::Linear,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Midpoint,
    Trapezoidal,
}

impl From<SchemeArg> for SolverScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Midpoint => SolverScheme::Midpoint,
            SchemeArg::Trapezoidal => SolverScheme::Trapezoidal,
        }
    }
}

/// Flags shared by every config-driven subcommand; each present flag
/// overrides the corresponding file value.
#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Trajectory-count override.
    #[arg(long)]
    trajectories: Option<usize>,
    /// Unraveling mode override.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Integration scheme override.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> otvmc::Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(k) = self.trajectories {
            config.n_trajectories = k;
        }
        if let Some(mode) = self.mode {
            config.mode = mode.into();
        }
        if let Some(scheme) = self.scheme {
            config.scheme = scheme.into();
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the variational trajectory ensemble and write ensemble.csv plus
    /// a run manifest.
    Simulate(ConfigArgs),
    /// Evaluate the h = 0 closed-form solution on the run's time grid.
    Oracle(ConfigArgs),
    /// Integrate the master equation densely (N <= 8).
    ExactLindblad(ConfigArgs),
    /// Run stochastic trajectories in the full Hilbert space (N <= 12).
    ExactSse(ConfigArgs),
    /// Compare a simulated table against a reference table.
    Compare {
        sim: PathBuf,
        reference: PathBuf,
    },
}

fn configure_workers() -> otvmc::Result<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let workers: usize = raw.parse().map_err(|_| {
        otvmc::Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}"))
    })?;
    if workers == 0 {
        return Err(otvmc::Error::Config(format!(
            "{WORKERS_ENV} must be a positive integer, got 0"
        )));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| otvmc::Error::Config(format!("thread pool: {e}")))
}

fn write_table(
    config: &RunConfig,
    file_name: &str,
    records: &[otvmc::observables::ObservableRecord],
) -> otvmc::Result<PathBuf> {
    std::fs::create_dir_all(&config.output_dir)?;
    let path = config.output_dir.join(file_name);
    output::write_records_csv(&path, records)?;
    Ok(path)
}

fn run(cli: Cli) -> otvmc::Result<ExitCode> {
    configure_workers()?;
    match cli.command {
        Command::Simulate(args) => {
            let config = args.load()?;
            let out = runner::run_simulation(&config)?;
            if !out.failures.is_empty() {
                eprintln!(
                    "{} of {} trajectories failed:",
                    out.failures.len(),
                    config.n_trajectories
                );
                for f in &out.failures {
                    eprintln!("  trajectory {} at t = {:.6}: {}", f.index, f.time, f.detail);
                }
            }
            println!("{}", out.csv_path.display());
            println!("{}", out.manifest_path.display());
        }
        Command::Oracle(args) => {
            let config = args.load()?;
            let records = oracle::oracle_table(&config.model, &config.record_times())?;
            println!("{}", write_table(&config, "oracle.csv", &records)?.display());
        }
        Command::ExactLindblad(args) => {
            let config = args.load()?;
            let max_step = config.dt.min(1e-3);
            let records =
                oracle::dense_lindblad_evolve(&config.model, &config.record_times(), max_step)?;
            println!("{}", write_table(&config, "lindblad.csv", &records)?.display());
        }
        Command::ExactSse(args) => {
            let config = args.load()?;
            let records = oracle::dense_sse_ensemble(
                &config.model,
                config.dt,
                config.n_steps(),
                config.record_stride,
                config.mode,
                config.scheme,
                config.n_trajectories,
                config.master_seed,
            )?;
            println!("{}", write_table(&config, "sse.csv", &records)?.display());
        }
        Command::Compare { sim, reference } => {
            let sim_records = output::read_records_csv(&sim)?;
            let ref_records = output::read_records_csv(&reference)?;
            let report = runner::compare_tables(&sim_records, &ref_records)?;
            print!("{}", report.render());
            if !report.pass {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
