//! Experiment runner: reads a JSON config, runs one experiment and writes
//! `result.json`, `samples.csv` and `plotdata/*.csv`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod record;

use std::fs;
use std::path::Path;

pub use config::{Experiment, ExperimentConfig, Thresholds};
pub use error::CliError;
pub use experiments::Outcome;
pub use output::{emit_plot_data, PlotTable};
pub use record::{Comparison, ResultRecord, Verdict};

/// A finished run, not yet written anywhere.
#[derive(Debug)]
pub struct RunOutput {
    pub record: ResultRecord,
    pub outcome: Outcome,
}

/// Validates the config and runs the experiment in memory.
pub fn execute(experiment: Experiment, config: &ExperimentConfig) -> Result<RunOutput, CliError> {
    config.validate(experiment)?;
    let mut echo = config.clone();
    echo.experiment = Some(experiment);
    echo.output = None;
    let mut outcome = experiments::dispatch(experiment, &echo)?;
    let record = ResultRecord {
        experiment: experiment.name().to_string(),
        config: echo,
        metrics: std::mem::take(&mut outcome.metrics),
        passed: outcome.verdicts.iter().all(|v| v.passed),
        verdicts: outcome.verdicts.clone(),
        warnings: outcome.warnings.clone(),
    };
    Ok(RunOutput { record, outcome })
}

/// Writes `result.json`, `samples.csv` (when chains were run and
/// `write_samples` is set) and the plot tables under `out_dir`.
pub fn write_outputs(run: &RunOutput, out_dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let path = out_dir.join("result.json");
    fs::write(&path, run.record.to_json()?).map_err(CliError::io(&path))?;
    if run.record.config.write_samples && !run.outcome.runs.is_empty() {
        output::write_samples(
            &out_dir.join("samples.csv"),
            run.record.config.measure.dim(),
            &run.outcome.runs,
        )?;
    }
    emit_plot_data(&run.outcome.plots, out_dir)
}

/// [`execute`] followed by [`write_outputs`].
pub fn run(experiment: Experiment, config: &ExperimentConfig, out_dir: &Path) -> Result<ResultRecord, CliError> {
    let out = execute(experiment, config)?;
    write_outputs(&out, out_dir)?;
    Ok(out.record)
}
