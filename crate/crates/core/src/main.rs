//! Command-line entry point: run configured experiments, check computed
//! oracle values against the golden file, or regenerate the goldens.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "spinlab",
    version,
    about = "Lattice spin-system laboratory: geometry, block Gibbs dynamics, inequality fits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a TOML config file.
    Run {
        config: PathBuf,
    },
    /// Recompute the oracle values and compare them against the golden file
    /// in the given directory.
    GoldenCheck {
        dir: PathBuf,
    },
    /// Rewrite the golden file in the given directory from freshly computed
    /// oracle values.
    RegenGolden {
        dir: PathBuf,
    },
}

const OUTPUT_ROOT_ENV: &str = "SPINLAB_OUTPUT_ROOT";

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => {
            let cfg = match spinlab::config::load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
            match spinlab::runner::run(&cfg, root.as_deref()) {
                Ok(artifacts) => {
                    println!(
                        "wrote {} file(s) to {}",
                        artifacts.files.len() + 1,
                        artifacts.out_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::GoldenCheck { dir } => {
            let golden = match spinlab::golden::GoldenFile::load(&dir) {
                Ok(g) => g,
                Err(e @ spinlab::golden::GoldenError::Missing(_)) => {
                    eprintln!("{e}");
                    return ExitCode::from(4);
                }
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(4);
                }
            };
            let current = spinlab::golden::compute_current();
            let diffs = golden.compare(&current);
            if diffs.is_empty() {
                println!("golden check passed ({} keys)", golden.entries.len());
                ExitCode::SUCCESS
            } else {
                for d in &diffs {
                    eprintln!(
                        "golden mismatch: {} expected {} got {} (tolerance {})",
                        d.key, d.expected, d.actual, d.abs_tol
                    );
                }
                ExitCode::from(1)
            }
        }
        Command::RegenGolden { dir } => {
            let golden = spinlab::golden::default_golden();
            if let Err(e) = golden.save(&dir) {
                eprintln!("{e}");
                return ExitCode::from(3);
            }
            let note = format!(
                "{{\"event\":\"regen-golden\",\"keys\":{},\"unix_time\":{}}}\n",
                golden.entries.len(),
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            );
            if let Err(e) =
                spinlab::runner::write_atomic(&dir.join("golden_manifest.json"), note.as_bytes())
            {
                eprintln!("{e}");
                return ExitCode::from(3);
            }
            println!(
                "regenerated {} golden value(s) in {}",
                golden.entries.len(),
                dir.display()
            );
            ExitCode::SUCCESS
        }
    }
}
