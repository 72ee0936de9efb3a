//! Batch scenario runner for the vmgeom toolkit: configuration, scenario
//! execution and report emission.

pub mod config;
pub mod elimination;
pub mod report;
pub mod scenarios;

use std::fs;
use std::io;
use std::path::Path;

pub use config::{ConfigError, Resolution, RunConfig, Scenario};
pub use report::{Check, Report, Summary};
pub use scenarios::{run_scenario, Outcome};

/// Write `config.toml`, `report.json`, `summary.json` and, when present,
/// `diagnostics.csv` into `dir`.
pub fn write_artifacts(dir: &Path, cfg: &RunConfig, outcome: &Outcome) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    fs::write(dir.join("report.json"), outcome.report.to_json())?;
    let summary = serde_json::to_string_pretty(&outcome.report.summary()).expect("summary serializes") + "\n";
    fs::write(dir.join("summary.json"), summary)?;
    if let Some(csv) = &outcome.diagnostics_csv {
        fs::write(dir.join("diagnostics.csv"), csv)?;
    }
    Ok(())
}
