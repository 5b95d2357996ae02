use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochpath::harness::{self, Scenario};

#[derive(Parser)]
#[command(name = "stochpath", version, about = "Stochastic-path verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every check listed in a scenario file.
    Run { config: PathBuf },
    /// Print the check catalog.
    ListChecks {
        #[arg(long)]
        module: Option<String>,
    },
    /// Refinement study for one check.
    Converge {
        config: PathBuf,
        #[arg(long)]
        check: String,
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    Version,
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => {
            let (_, exit, text) = harness::run_scenario(&config);
            if exit >= 2 {
                eprintln!("error: {text}");
            } else {
                print!("{text}");
            }
            code(exit)
        }
        Command::ListChecks { module } => {
            for (name, module, anchor) in harness::list_checks(module.as_deref()) {
                println!("{name:<28} {module:<20} {anchor}");
            }
            ExitCode::SUCCESS
        }
        Command::Converge { config, check, levels } => {
            let result = Scenario::load(&config).and_then(|s| harness::convergence_study(&s, &check, levels));
            match result {
                Ok(table) => {
                    print!("{}", table.to_text());
                    code(table.exit_code())
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    code(e.exit_code())
                }
            }
        }
        Command::Version => {
            println!("stochpath {} (report schema {})", harness::VERSION, harness::REPORT_SCHEMA_VERSION);
            ExitCode::SUCCESS
        }
    }
}
