//! `polylab` command line: one subcommand per experiment, each driven by a
//! JSON config. Results go to an output file (CSV, or JSON for `bound`);
//! a run report is printed to stdout as JSON. Errors are printed to
//! stderr as a single JSON object and the process exits nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use polylab::config::{resolve_noise_seed, ExperimentConfig};
use polylab::experiments;
use polylab::Error;

const SEED_ENV_VAR: &str = "POLYLAB_NOISE_SEED";

#[derive(Parser)]
#[command(
    name = "polylab",
    version,
    about = "Monte Carlo lab for a Brownian polymer in a mollified Gaussian environment"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate the mollifier self-convolution V and its value at zero
    #[command(name = "kernel-table")]
    KernelTable(RunArgs),
    /// Green-potential integral, diffusive threshold, and moment bound,
    /// cross-checked by a Monte Carlo occupation oracle
    Bound(RunArgs),
    /// Per-environment free energy rate and effective sample size
    Phase(RunArgs),
    /// Quenched endpoint moments against their Gaussian targets
    Clt(RunArgs),
    /// Quenched endpoint moment generating function
    Mgf(RunArgs),
    /// Exact integer coefficient table of one heat polynomial
    #[command(name = "hermite-check")]
    HermiteCheck(RunArgs),
    /// Scaled decay curve of a weighted heat-polynomial statistic
    #[command(name = "yn-decay")]
    YnDecay(RunArgs),
    /// Second weight moment by direct pair sampling
    #[command(name = "second-moment")]
    SecondMoment(RunArgs),
    /// Near-collision probability of two independent paths late in time
    Collision(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; its "command" must match the subcommand
    #[arg(long)]
    config: PathBuf,
    /// Override the environment seed (beats POLYLAB_NOISE_SEED and config)
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Output file path (default: <command>.csv or bound.json)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the data-parallel reductions
    #[arg(long)]
    threads: Option<usize>,
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::KernelTable(_) => "kernel-table",
            Cmd::Bound(_) => "bound",
            Cmd::Phase(_) => "phase",
            Cmd::Clt(_) => "clt",
            Cmd::Mgf(_) => "mgf",
            Cmd::HermiteCheck(_) => "hermite-check",
            Cmd::YnDecay(_) => "yn-decay",
            Cmd::SecondMoment(_) => "second-moment",
            Cmd::Collision(_) => "collision",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Cmd::KernelTable(a)
            | Cmd::Bound(a)
            | Cmd::Phase(a)
            | Cmd::Clt(a)
            | Cmd::Mgf(a)
            | Cmd::HermiteCheck(a)
            | Cmd::YnDecay(a)
            | Cmd::SecondMoment(a)
            | Cmd::Collision(a) => a,
        }
    }
}

fn env_seed() -> Result<Option<u64>, Error> {
    match std::env::var(SEED_ENV_VAR) {
        Ok(s) => s
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV_VAR} must be a u64, got {s:?}"))),
        Err(_) => Ok(None),
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(threads: Option<usize>) -> (String, Option<String>) {
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            Ok(()) => (n.to_string(), None),
            Err(e) => (
                format!("{} (pool already initialized)", rayon::current_num_threads()),
                Some(format!("--threads {n} ignored: {e}")),
            ),
        },
        None => ("auto".to_string(), None),
    }
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(threads: Option<usize>) -> (String, Option<String>) {
    match threads {
        Some(n) => {
            ("1 (sequential build)".to_string(), Some(format!("--threads {n} ignored: built without the parallel feature")))
        }
        None => ("1 (sequential build)".to_string(), None),
    }
}

fn run() -> Result<(), Error> {
    let cli = Cli::parse();
    let name = cli.cmd.name();
    let args = cli.cmd.args();

    let cfg = ExperimentConfig::from_file(&args.config)?;
    if cfg.command.name() != name {
        return Err(Error::Config(format!(
            "config command {:?} does not match subcommand {name:?}",
            cfg.command.name()
        )));
    }
    let (threads_label, thread_note) = configure_threads(args.threads);
    let (seed, source) = resolve_noise_seed(args.noise_seed, env_seed()?, cfg.noise_seed);
    let mut report = experiments::run(&cfg, seed, source, args.out.as_deref(), &threads_label)?;
    if let Some(note) = thread_note {
        report.notes.push(note);
    }
    println!("{}", report.to_json());
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
