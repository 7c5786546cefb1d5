use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grbsde_cli::{catalog, run, RunOptions};

#[derive(Parser)]
#[command(name = "grbsde", about = "Reflected BSDE scenario runner", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario and write solution.csv, diagnostics.json and manifest.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        /// Accept barriers outside the unit box.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the built-in generator families.
    ListGenerators,
    /// Print the CLI and core library versions.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListGenerators => {
            print!("{}", catalog::render_catalog());
            ExitCode::SUCCESS
        }
        Command::Version => {
            println!(
                "grbsde {} (core {})",
                env!("CARGO_PKG_VERSION"),
                grbsde_core::VERSION
            );
            ExitCode::SUCCESS
        }
        Command::Run {
            scenario,
            out,
            seed,
            raw,
            threads,
        } => {
            let opts = RunOptions {
                scenario,
                out,
                seed,
                raw,
                threads,
            };
            match run(&opts) {
                Ok(o) => {
                    for v in &o.violations {
                        eprintln!("violation: {v}");
                    }
                    println!("wrote {}", o.out_dir.display());
                    ExitCode::from(o.exit_code as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
