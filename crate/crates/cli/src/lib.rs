//! Experiment runner for the `qadapt` adapter library.
//!
//! A run reads one JSON config, executes it in `verify`, `train`, `sweep` or
//! `table` mode and writes `report.csv` plus a `report.json` mirror.

pub mod config;
pub mod error;
pub mod report;
pub mod runner;
pub mod verify;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

pub use config::{ExperimentConfig, Mode};
pub use error::CliError;
pub use report::{Provenance, ReportRow};
pub use runner::{run, Outcome};

use config::ExportFormat;

/// Writes both reports and any exported matrices into `dir`.
pub fn write_outcome(dir: &Path, outcome: &Outcome, export: Option<ExportFormat>) -> Result<(), CliError> {
    report::write_reports(dir, &outcome.rows)?;
    let Some(format) = export else {
        return Ok(());
    };
    for a in &outcome.artifacts {
        match format {
            ExportFormat::Binary => {
                let w = BufWriter::new(File::create(dir.join(format!("{}.qiad", a.name)))?);
                qadapt::export::write_binary(w, &a.header, &a.matrix)?;
            }
            ExportFormat::Text => {
                let w = BufWriter::new(File::create(dir.join(format!("{}.txt", a.name)))?);
                qadapt::export::write_text(w, &a.header, &a.matrix)?;
            }
        }
    }
    Ok(())
}
