use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fk_functor::cli::{run, ExperimentConfig};

/// Run one experiment from a JSON config and write its report and data files.
#[derive(Parser)]
#[command(name = "fkf", version)]
struct Args {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Where reports and CSV files go; defaults to the config's `output_dir`, then `.`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let outcome = ExperimentConfig::load(&args.config).and_then(|config| {
        let dir = args
            .output_dir
            .clone()
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        let outcome = run(&config, args.seed)?;
        let files = outcome.write_to(&dir)?;
        Ok((outcome, files))
    });
    match outcome {
        Ok((outcome, files)) => {
            for c in &outcome.report.checks {
                let verdict = if c.pass { "pass" } else { "FAIL" };
                println!("{verdict} {} = {:e} (tolerance {:e})", c.name, c.value, c.tolerance);
            }
            for f in files {
                println!("wrote {}", f.display());
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("fkf: {e}");
            ExitCode::from(2)
        }
    }
}
