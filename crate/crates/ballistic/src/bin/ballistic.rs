use ballistic::cli::{self, Overrides, EXIT_ERROR, EXIT_NOT_CERTIFIED, EXIT_OK};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Ballistic transport costs, interpolations and certificates from a TOML run config.
#[derive(Debug, Parser)]
#[command(name = "ballistic", version, args_conflicts_with_subcommands = true)]
struct Args {
    #[command(subcommand)]
    action: Option<Action>,
    /// Run config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for result.json and CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized checks; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Certification tolerance; overrides the config and the built-in rules.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Action {
    /// Run the bundled demo configs and write a summary.
    Demo {
        #[arg(long, default_value = "demo-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::from(EXIT_OK as u8),
                _ => ExitCode::from(EXIT_ERROR as u8),
            };
        }
    };
    let code = match (args.action, args.config) {
        (Some(Action::Demo { out, seed }), _) => match cli::demo_suite(&out, seed) {
            Ok(report) => {
                print!("{}", report.table());
                if report.all_certified {
                    EXIT_OK
                } else {
                    EXIT_NOT_CERTIFIED
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ERROR
            }
        },
        (None, Some(config)) => match cli::run(&config, &args.out, &Overrides { seed: args.seed, tol: args.tol }) {
            Ok(doc) => {
                println!("{}: certified={} -> {}", doc.command, doc.certified, args.out.join("result.json").display());
                for flag in &doc.flags {
                    eprintln!("flag: {flag}");
                }
                doc.exit_code()
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_ERROR
            }
        },
        (None, None) => {
            eprintln!("error: --config <FILE> is required (or use `ballistic demo`)");
            EXIT_ERROR
        }
    };
    ExitCode::from(code as u8)
}
