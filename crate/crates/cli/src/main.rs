use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cwsoc::{Experiment, ExperimentConfig};

/// Runs one experiment. Exit status: 0 if every verdict passed, 2 if one
/// failed, 1 on error.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    #[arg(value_enum)]
    experiment: Experiment,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(args: &Args) -> anyhow::Result<bool> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let record = cwsoc::run(args.experiment, &config, &out)?;
    for v in &record.verdicts {
        println!(
            "{} {}: {} {} {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.value,
            serde_json::to_value(v.comparison)?.as_str().unwrap_or("?"),
            v.threshold
        );
    }
    for w in &record.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", out.join("result.json").display());
    Ok(record.passed)
}
