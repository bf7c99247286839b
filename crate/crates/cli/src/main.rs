use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use riskplan_cli::config::{ExperimentConfig, VerifySpec};
use riskplan_cli::error::{CliError, Result};
use riskplan_cli::{eval_policy, execute, list_domains, Mode, RunOptions};

#[derive(Parser)]
#[command(name = "riskplan", version, about = "Risk-sensitive and robust planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for sweep cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configured problem.
    Solve(RunArgs),
    /// Solve every cell of the config's sweep grid.
    Sweep(RunArgs),
    /// Solve (or sweep) and check every result against its oracle.
    Verify(RunArgs),
    /// Recompute the value stored in a policy export.
    EvalPolicy {
        /// Policy file written by `solve` or `sweep`.
        policy: PathBuf,
    },
    /// List the built-in domains and their parameters.
    ListDomains,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,

    /// Base seed; sweep cell i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Verify against an oracle: `oracle`, `bound`, `deterministic`,
    /// `grid STEP`, `tol X`, `cap N`.
    #[arg(long, num_args = 0.., value_name = "ARGS")]
    verify: Option<Vec<String>>,

    /// Record wall-clock times in the `wall_ms` column.
    #[arg(long)]
    timings: bool,
}

fn run(args: RunArgs, mode: Mode, jobs: usize) -> Result<i32> {
    let config = ExperimentConfig::load(&args.config)?;
    let verify = args.verify.as_deref().map(VerifySpec::from_tokens).transpose()?;
    let opts = RunOptions { seed: args.seed, out: args.out, verify, jobs, timings: args.timings, reverse: false };
    let report = execute(config, mode, &opts)?;
    print!("{}", report.csv);
    if let Some(e) = &report.failure {
        eprintln!("error: {e}");
    }
    Ok(report.exit_code())
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(args) => run(args, Mode::Solve, cli.jobs),
        Command::Sweep(args) => run(args, Mode::Sweep, cli.jobs),
        Command::Verify(args) => run(args, Mode::Verify, cli.jobs),
        Command::EvalPolicy { policy } => {
            let r = eval_policy(&policy)?;
            println!("{}", serde_json::to_string(&r).expect("serializable"));
            if r.passed {
                Ok(0)
            } else {
                Err(CliError::Mismatch(format!("recomputed {:?} vs stored {:?}", r.recomputed, r.stored)))
            }
        }
        Command::ListDomains => {
            print!("{}", list_domains());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
