use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use acl_core::cli::{self, CliError};
use acl_core::fixtures;

#[derive(Parser)]
#[command(name = "acl", version, about = "Adaptive consensus with concurrent learning")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check stabilizability, connectivity, the gain bound and the rank condition.
    Verify { scenario: PathBuf },
    /// Simulate one scenario and write trajectory.csv plus plots.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run even if a precondition fails.
        #[arg(long)]
        force: bool,
        /// 1-based state coordinates for state_coord.svg.
        #[arg(long, value_delimiter = ',', default_values_t = [1, 3])]
        coords: Vec<usize>,
    },
    /// Repeat a run for several quantization levels.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sigma: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a built-in scenario file.
    Fixture { name: Fixture },
}

#[derive(Clone, Copy, ValueEnum)]
enum Fixture {
    #[value(name = "paper-s5")]
    FiveAgent,
    #[value(name = "paper-s5-printed-a")]
    FiveAgentPrintedA,
}

fn run(args: Args) -> Result<bool, CliError> {
    match args.command {
        Command::Verify { scenario } => {
            let report = cli::cmd_verify(&cli::load_scenario(&scenario)?)?;
            print!("{report}");
            Ok(report.passed())
        }
        Command::Run { scenario, out, force, coords } => {
            let report = cli::cmd_run(&cli::load_scenario(&scenario)?, &out, force, &coords)?;
            print!("{report}");
            Ok(true)
        }
        Command::Sweep { scenario, sigma, out } => {
            let (report, rows) = cli::cmd_sweep(&cli::load_scenario(&scenario)?, &sigma, &out)?;
            print!("{report}");
            print!("{}", cli::sweep_csv(&rows));
            Ok(true)
        }
        Command::Fixture { name } => {
            let file = match name {
                Fixture::FiveAgent => fixtures::five_agent(),
                Fixture::FiveAgentPrintedA => fixtures::five_agent_printed_a(),
            };
            println!("{}", file.to_json());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
