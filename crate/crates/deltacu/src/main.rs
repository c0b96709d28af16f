use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deltacu::inference::ModelKind;
use deltacu::io::{self, FileConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "deltacu",
    version,
    about = "Estimate time-varying condom use from sparse HIV prevalence surveys"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Trajectory prior to fit (overrides the config).
    #[arg(long)]
    model: Option<String>,
    /// Particle count (overrides the config).
    #[arg(long)]
    particles: Option<usize>,
    /// MCMC iterations (overrides the config).
    #[arg(long)]
    iterations: Option<usize>,
    /// Worker thread count (also via DELTACU_THREADS).
    #[arg(long, env = "DELTACU_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a trajectory prior to observed prevalence data.
    Fit(CommonArgs),
    /// Simulate synthetic observations under a known truth.
    Simulate(CommonArgs),
    /// Run the replicate ensemble and score every method.
    Ensemble(CommonArgs),
    /// Monte-Carlo quantiles of the prior-implied condom-use change.
    PriorCheck(CommonArgs),
    /// Recompute summary artifacts from a stored fit.
    Report(CommonArgs),
}

fn resolve_config(args: &CommonArgs) -> deltacu::Result<FileConfig> {
    let mut cfg = match &args.config {
        Some(path) => io::load_config(path)?,
        None => FileConfig::default(),
    };
    let model = match &args.model {
        Some(name) => Some(name.parse::<ModelKind>()?),
        None => None,
    };
    cfg.resolve(&Overrides {
        seed: args.seed,
        model,
        particles: args.particles,
        iterations: args.iterations,
    })?;
    Ok(cfg)
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // Ignore failure: the global pool can only be configured once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn run(cli: Cli) -> deltacu::Result<()> {
    match cli.command {
        Command::Fit(args) => {
            init_threads(args.threads);
            let cfg = resolve_config(&args)?;
            io::run_fit(&cfg, &args.out)
        }
        Command::Simulate(args) => {
            init_threads(args.threads);
            let cfg = resolve_config(&args)?;
            io::run_simulate(&cfg, &args.out)
        }
        Command::Ensemble(args) => {
            init_threads(args.threads);
            let cfg = resolve_config(&args)?;
            io::run_ensemble_workflow(&cfg, &args.out)
        }
        Command::PriorCheck(args) => {
            init_threads(args.threads);
            let cfg = resolve_config(&args)?;
            io::run_prior_check(&cfg, &args.out)
        }
        Command::Report(args) => {
            init_threads(args.threads);
            io::run_report(&args.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
