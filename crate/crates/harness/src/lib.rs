//! Reproducible experiment runner for the `gibbs-core` library.
//!
//! A run is one TOML config plus command-line overrides. Every run directory
//! holds `manifest.json` (written before any sampling), the stage's data
//! files, `report.csv`, and `record.json` with checksums of all of them.

pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod stages;

use std::time::Instant;

pub use config::{Overrides, RunConfig, Stage};
pub use error::{HarnessError, HarnessResult, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_PRECONDITION};
pub use output::{RunRecord, RunStatus};

/// Default output root; runs go to `$MGIBBS_OUT/<stage>-<seed>`.
pub const OUTPUT_ENV: &str = "MGIBBS_OUT";

/// Executes the config's stage. Nothing is written unless the config and
/// its inputs check out; afterwards a failure still leaves a record with
/// status `failed`.
pub fn run(config: &RunConfig) -> HarnessResult<RunRecord> {
    config.validate()?;
    let ctx = stages::Context {
        config,
        model: config.build_model()?,
        window: config.build_window()?,
        marks: config.build_marks()?,
    };
    stages::check_inputs(config)?;

    let mut dir = output::RunDir::create(config.output_dir())?;
    dir.write_manifest(config)?;
    log::info!("{} run, seed {}, into {}", config.stage().name(), config.seed, dir.root().display());
    let start = Instant::now();
    match stages::run_stage(&ctx, &mut dir).and_then(|rows| dir.write_report(&rows)) {
        Ok(()) => dir.finish(RunStatus::Completed, None, start.elapsed().as_secs_f64()),
        Err(e) => {
            if let Err(rec) = dir.finish(RunStatus::Failed, Some(e.to_string()), start.elapsed().as_secs_f64()) {
                log::error!("could not write the run record: {rec}");
            }
            Err(e)
        }
    }
}
