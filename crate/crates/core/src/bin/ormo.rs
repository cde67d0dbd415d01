//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 config error, 3 verification
//! failure.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ormo::harness::{self, ExperimentConfig, HarnessError, SeedVerification, Vary};

#[derive(Parser)]
#[command(name = "ormo", version, about = "Parameter-server simulator with ordered momentum")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config and write metrics, traces and a summary.
    Run { config: PathBuf },
    /// Run with the gap-identity checker attached (ormo only).
    Verify { config: PathBuf },
    /// Run the cartesian product of `--vary key=v1,v2,...` overrides.
    Sweep {
        config: PathBuf,
        #[arg(long, required = true)]
        vary: Vec<String>,
    },
    /// Compare finished runs on the same problem.
    Report {
        #[arg(required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
    },
    /// Write the configured dataset as CSV.
    DumpDataset {
        config: PathBuf,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;

fn fail(err: HarnessError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(if err.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, HarnessError> {
    Ok(ExperimentConfig::load(path)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(err) => fail(err),
    }
}

fn execute(command: Command) -> Result<ExitCode, HarnessError> {
    match command {
        Command::Run { config } => {
            let cfg = load(&config)?;
            let (dir, s) = harness::run_experiment(&cfg)?;
            println!("{} seeds -> {}", s.seeds.len(), dir.display());
            for seed in &s.seeds {
                println!(
                    "seed {:>4}  loss {:.6e}  |grad F|^2 {:.6e}  tau mean {:.2} max {}",
                    seed.seed, seed.final_loss, seed.final_grad_norm2, seed.tau_mean, seed.tau_max
                );
            }
            println!(
                "final loss {:.6e} ± {:.2e}",
                s.final_loss.mean, s.final_loss.std
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { config } => {
            let cfg = load(&config)?;
            let dir = cfg.output_dir();
            let results = harness::verify_experiment_in(&cfg, &dir)?;
            print_verification(&results);
            if results.iter().all(SeedVerification::passed) {
                println!("all checks passed");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("verification FAILED");
                Ok(ExitCode::from(EXIT_VERIFY))
            }
        }
        Command::Sweep { config, vary } => {
            let base = std::fs::read_to_string(&config).map_err(|source| HarnessError::Io {
                path: config.clone(),
                source,
            })?;
            let vary = vary
                .iter()
                .map(|v| v.parse::<Vary>())
                .collect::<Result<Vec<_>, _>>()?;
            for (dir, s) in harness::run_sweep(&base, &vary)? {
                println!(
                    "{:<48} loss {:.6e} ± {:.2e}",
                    dir.display(),
                    s.final_loss.mean,
                    s.final_loss.std
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { dirs } => {
            let table = harness::compare_report(&dirs)?;
            print!("{}", table.render());
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpDataset { config, out } => {
            let cfg = load(&config)?;
            let rows = match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(|source| HarnessError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    harness::dump_dataset(&cfg, io::BufWriter::new(file))?
                }
                None => harness::dump_dataset(&cfg, io::stdout().lock())?,
            };
            let _ = io::stdout().flush();
            eprintln!("{rows} rows");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_verification(results: &[SeedVerification]) {
    println!(
        "{:>6}  {:<22} {:>12} {:>12} {:>8} {:>8} {:>6}",
        "seed", "check", "max abs", "max rel", "checked", "skipped", "ok"
    );
    for r in results {
        for c in r.lemmas.residuals() {
            println!(
                "{:>6}  {:<22} {:>12.3e} {:>12.3e} {:>8} {:>8} {:>6}",
                r.seed,
                c.name,
                c.max_abs,
                c.max_rel,
                c.checked,
                c.skipped,
                if c.passed { "pass" } else { "FAIL" }
            );
        }
        let b = &r.lemmas.lemma4;
        println!(
            "{:>6}  {:<22} max |y-w|^2 {:.3e} vs bound {:.3e} ({} of {} over) {:>6}",
            r.seed,
            b.name,
            b.max_gap2,
            b.bound,
            b.violations,
            b.checked,
            if b.passed { "pass" } else { "FAIL" }
        );
        for note in &r.lemmas.notices {
            println!("{:>6}  note: {note}", r.seed);
        }
    }
}
