use std::path::PathBuf;
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand};
use idm_harness::config::ExperimentConfig;
use idm_harness::pipeline::load_source;
use idm_harness::{csvio, report, ExperimentKind, HarnessError};

/// Exit status when a stage fails.
const EXIT_FAILURE: u8 = 1;
/// Exit status for unreadable or invalid configs.
const EXIT_CONFIG: u8 = 2;
/// Exit status when the run finished but raised diagnostics.
const EXIT_DIAGNOSTICS: u8 = 3;

#[derive(Parser)]
#[command(name = "idm", version, about = "Implicit delta method experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config.
    Run(RunArgs),
    /// Single dataset, IDM and enabled baselines side by side.
    Interval(RunArgs),
    /// Interval calibration over replicate datasets.
    Coverage(RunArgs),
    /// Error against the sampling variance across n and lambda.
    Convergence(RunArgs),
    /// Fit counts and wall-clock of IDM against the bootstrap.
    Runtime(RunArgs),
    /// Inverse Fisher information from coordinate refits.
    Fisher(RunArgs),
    /// Write the config's dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Override a config value by dotted path, e.g. `idm.lambda=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output path prefix; `.json`, `.csv` and `.meta.json` are appended.
    #[arg(long)]
    out: Option<String>,
    /// Root seed, overriding `root_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Exit 0 even if diagnostics fired.
    #[arg(long)]
    allow_diagnostics: bool,
}

#[derive(Args)]
struct GenerateArgs {
    config: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Destination CSV file.
    #[arg(long)]
    out: PathBuf,
}

fn fail(e: &HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e {
        HarnessError::Config(_) | HarnessError::Json { .. } => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    })
}

fn run(args: RunArgs, kind: Option<ExperimentKind>) -> ExitCode {
    let mut overrides = args.set;
    if let Some(k) = kind {
        overrides.push(format!("experiment={}", k.name()));
    }
    if let Some(s) = args.seed {
        overrides.push(format!("root_seed={s}"));
    }
    let config = match ExperimentConfig::load(&args.config, &overrides) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let prefix = args
        .out
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| format!("idm_{}", config.experiment.name()));
    let started = SystemTime::now();
    let outcome = match idm_harness::run(&config) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    match report::write_outputs(&prefix, &outcome, started) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => return fail(&e),
    }
    for d in &outcome.diagnostics {
        eprintln!("diagnostic: {d}");
    }
    if outcome.diagnostics.is_empty() || args.allow_diagnostics {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_DIAGNOSTICS)
    }
}

fn generate(args: GenerateArgs) -> ExitCode {
    let result = ExperimentConfig::load(&args.config, &args.set)
        .and_then(|c| load_source(&c, None))
        .and_then(|s| csvio::write_dataset(&args.out, &s.data));
    match result {
        Ok(()) => {
            println!("{}", args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(a) => run(a, None),
        Command::Interval(a) => run(a, Some(ExperimentKind::Interval)),
        Command::Coverage(a) => run(a, Some(ExperimentKind::Coverage)),
        Command::Convergence(a) => run(a, Some(ExperimentKind::Convergence)),
        Command::Runtime(a) => run(a, Some(ExperimentKind::Runtime)),
        Command::Fisher(a) => run(a, Some(ExperimentKind::Fisher)),
        Command::Generate(a) => generate(a),
    }
}
