//! Config-driven experiment runner for the pxfb toolkit.
//!
//! Every run writes into `<output>/<run id>/`: the normalized config, one CSV
//! per table, JSON documents, a column schema, SVG plots, `record.json` and
//! `timing.txt`. The run id is a hash of the config, so reruns land in the
//! same directory and overwrite it byte for byte.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod experiments;
pub mod plot;

use std::path::{Path, PathBuf};
use std::time::Instant;

use artifacts::{run_id, schema, write_json, Outcome, RunRecord, CONFIG_FILE, RECORD_FILE, SCHEMA_FILE, TIMING_FILE};
use config::{load_config, ExperimentConfig};
use error::{CliError, CliResult};

pub use experiments::run_experiment;

/// Writes everything except the record itself; returns the artifact paths
/// relative to `dir`.
fn write_outcome(dir: &Path, config: &ExperimentConfig, outcome: &Outcome, artifacts: &mut Vec<String>) -> CliResult<()> {
    for t in &outcome.tables {
        t.write(dir)?;
        artifacts.push(t.file_name());
    }
    for (stem, v) in &outcome.documents {
        let name = format!("{stem}.json");
        write_json(&dir.join(&name), v)?;
        artifacts.push(name);
    }
    for (stem, text) in &outcome.fields {
        let name = format!("{stem}.json");
        std::fs::write(dir.join(&name), format!("{text}\n"))?;
        artifacts.push(name);
    }
    write_json(&dir.join(SCHEMA_FILE), &schema(config.kind.name(), &outcome.tables))?;
    artifacts.push(SCHEMA_FILE.into());
    Ok(())
}

/// Runs `config` and writes its run directory under `out_root` (or the
/// config's own output root). A failed run still leaves a record with
/// `status = "failed"`; the error is returned alongside it.
pub fn execute(config: &ExperimentConfig, out_root: Option<&Path>) -> (Option<PathBuf>, CliResult<RunRecord>) {
    let id = match run_id(config) {
        Ok(id) => id,
        Err(e) => return (None, Err(e)),
    };
    let root = out_root.map_or_else(|| PathBuf::from(&config.output), Path::to_path_buf);
    let dir = root.join(&id);
    let result = execute_in(config, &id, &dir);
    (Some(dir), result)
}

fn execute_in(config: &ExperimentConfig, id: &str, dir: &Path) -> CliResult<RunRecord> {
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join(CONFIG_FILE), config)?;
    let mut record = RunRecord {
        run_id: id.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        status: "running".into(),
        error: None,
        partial: false,
        artifacts: vec![CONFIG_FILE.into()],
        metrics: Default::default(),
        certified: None,
        plots: Vec::new(),
        notes: Vec::new(),
        timing_file: TIMING_FILE.into(),
    };
    let start = Instant::now();
    let outcome = run_experiment(config);
    let elapsed = start.elapsed().as_secs_f64();
    std::fs::write(dir.join(TIMING_FILE), format!("wall_seconds {elapsed:.3}\n"))?;
    record.artifacts.push(TIMING_FILE.into());
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            record.status = "failed".into();
            record.error = Some(e.to_string());
            record.partial = true;
            write_json(&dir.join(RECORD_FILE), &record)?;
            return Err(e);
        }
    };
    let written = write_outcome(dir, config, &outcome, &mut record.artifacts);
    record.metrics = outcome.metrics.clone();
    record.certified = outcome.certified;
    record.plots = outcome.plots.clone();
    record.notes = outcome.notes.clone();
    if let Err(e) = written {
        record.status = "failed".into();
        record.error = Some(e.to_string());
        record.partial = true;
        write_json(&dir.join(RECORD_FILE), &record)?;
        return Err(e);
    }
    let (plots, notes) = plot::emit_plots(dir, &record)?;
    record.artifacts.extend(plots);
    record.notes.extend(notes);
    record.artifacts.push(RECORD_FILE.into());
    record.status = if outcome.certified == Some(false) { "certification_failed" } else { "ok" }.into();
    write_json(&dir.join(RECORD_FILE), &record)?;
    if outcome.certified == Some(false) {
        return Err(CliError::Certification(format!("{} certificate did not hold; see {}", config.kind.name(), dir.display())));
    }
    Ok(record)
}

pub fn read_record(dir: &Path) -> CliResult<RunRecord> {
    let text = std::fs::read_to_string(dir.join(RECORD_FILE))
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", dir.join(RECORD_FILE).display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reruns a stored config in memory and compares its metrics and
/// certificate with the stored record.
pub fn verify(dir: &Path) -> CliResult<RunRecord> {
    let stored = read_record(dir)?;
    let config = load_config(&dir.join(CONFIG_FILE))?;
    if stored.status != "ok" {
        return Err(CliError::Certification(format!("stored run has status {}", stored.status)));
    }
    let outcome = run_experiment(&config)?;
    if outcome.metrics != stored.metrics {
        let differing: Vec<&String> = outcome
            .metrics
            .iter()
            .filter(|(k, v)| stored.metrics.get(*k) != Some(*v))
            .map(|(k, _)| k)
            .collect();
        return Err(CliError::Certification(format!("rerun metrics differ: {differing:?}")));
    }
    if outcome.certified != stored.certified || outcome.certified == Some(false) {
        return Err(CliError::Certification(format!("certificate is {:?} on rerun", outcome.certified)));
    }
    Ok(stored)
}

/// Regenerates the SVG plots of a run directory.
pub fn replot(dir: &Path) -> CliResult<(Vec<String>, Vec<String>)> {
    let record = read_record(dir)?;
    plot::emit_plots(dir, &record)
}
