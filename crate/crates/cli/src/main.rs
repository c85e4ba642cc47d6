use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use wsnsim::harness::{self, format_diagnostics, HarnessError, Scenario};
use wsnsim::kernel::SimTime;
use wsnsim::process::protocols::Registry;
use wsnsim::telemetry::LogFilter;

#[derive(Parser)]
#[command(name = "wsnsim", version, about = "Wireless sensor network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the file's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the file's `stop_s`.
    #[arg(long, value_name = "SECONDS")]
    stop_at: Option<f64>,
    /// Overrides the file's `partitions`.
    #[arg(long)]
    partitions: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// e.g. `kinds=packet-arrival+timer-expiry,nodes=0-9,window=0:10`
    #[arg(long, value_name = "SPEC")]
    log_filter: Option<String>,
    /// Parse and validate only.
    #[arg(long)]
    check: bool,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn load(args: &RunArgs, registry: &Registry) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(&args.scenario)
        .with_context(|| format!("cannot read {}", args.scenario.display()))
        .map_err(Failure::Usage)?;
    let mut s = Scenario::parse(&text, registry).map_err(|d| {
        Failure::Usage(anyhow::anyhow!(
            "{}:\n{}",
            args.scenario.display(),
            format_diagnostics(&d)
        ))
    })?;
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    if let Some(stop) = args.stop_at {
        s.stop = SimTime::from_secs_f64(stop).ok_or_else(|| {
            Failure::Usage(anyhow::anyhow!("--stop-at {stop} is not a valid time"))
        })?;
    }
    if let Some(k) = args.partitions {
        s.partitions = k;
    }
    if let Some(spec) = &args.log_filter {
        s.log = LogFilter::parse(spec)
            .map_err(|e| Failure::Usage(anyhow::anyhow!("--log-filter: {e}")))?;
    }
    s.validate().map_err(|d| {
        Failure::Usage(anyhow::anyhow!(
            "invalid configuration after overrides:\n{}",
            format_diagnostics(&d)
        ))
    })?;
    Ok(s)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let registry = Registry::default();
    let scenario = load(&args, &registry)?;
    if args.check {
        println!(
            "{}: ok ({} nodes, stop {})",
            args.scenario.display(),
            scenario.nodes.count(),
            scenario.stop
        );
        return Ok(());
    }
    let summary = harness::run(&scenario, &registry, &args.out).map_err(|e| match e {
        HarnessError::Invalid(_) => Failure::Usage(e.into()),
        other => Failure::Runtime(other.into()),
    })?;
    print!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    // clap's own failure code is 2, which is reserved for runtime errors here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
