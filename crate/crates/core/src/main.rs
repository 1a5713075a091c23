use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use relaysec::cli::{
    cmd_scan, cmd_simulate, cmd_verify, write_output, CliError, CommandOutput, OutputFormat, Overrides, RunConfig,
};

#[derive(Parser, Debug)]
#[command(name = "relaysec", version, about = "Byzantine relay detection: oracle checks, Monte Carlo and parameter scans")]
struct Args {
    /// JSON run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the exhaustive oracle censuses.
    Verify,
    /// Run protocol Monte Carlo for each configured relay behaviour.
    Simulate,
    /// Sweep d, r or N.
    Scan,
}

fn run(args: Args) -> Result<CommandOutput, CliError> {
    let base = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = base.apply(&Overrides {
        seed: args.seed,
        workers: args.workers,
        out: args.out,
        format: args.format,
    });
    let output = match args.command {
        Command::Verify => {
            let (report, output) = cmd_verify(&cfg)?;
            for check in report.checks.iter().filter(|c| !c.passed) {
                eprintln!(
                    "FAIL {}: {}",
                    check.name,
                    check.counterexample.as_deref().unwrap_or(&check.detail)
                );
            }
            output
        }
        Command::Simulate => cmd_simulate(&cfg)?.1,
        Command::Scan => cmd_scan(&cfg)?.1,
    };
    write_output(cfg.out.as_deref(), &output.text)?;
    Ok(output)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let code = match run(args) {
        Ok(output) => output.exit_code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
