//! `ldp-sweep`: sweep, fit, and write rows, report and manifest.

use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::manifest::Manifest;
use crate::prediction::{predict, Prediction};
use crate::report::{ldp_report, output_path, write_json, write_rows_csv, LdpReport, SweepRow};
use crate::sweep::{sweep_with, worker_pool};

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutput {
    pub rows: Vec<SweepRow>,
    pub prediction: Prediction,
    /// The fit fails when fewer than three rows have hits.
    pub report: std::result::Result<LdpReport, String>,
    pub manifest: Manifest,
    pub files: Vec<PathBuf>,
}

/// Runs the sweep on `threads` workers (see [`worker_pool`]) and writes
/// `<name>_rows.csv`, `<name>_report.json` and `<name>_manifest.json`
/// into the output directory. Rows and manifest are written even when
/// the fit fails.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let prediction = predict(cfg)?;
    let pool = worker_pool(threads)?;
    let rows = pool.install(|| sweep_with(cfg, &prediction))?;
    let manifest = Manifest::new(cfg)?;

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let rows_path = output_path(dir, &cfg.name, "rows.csv");
    let manifest_path = output_path(dir, &cfg.name, "manifest.json");
    write_rows_csv(&rows_path, &rows)?;
    write_json(&manifest_path, &manifest)?;
    let mut files = vec![rows_path, manifest_path];

    let report = ldp_report(&cfg.name, &rows, &prediction).map_err(|e| e.to_string());
    if let Ok(rep) = &report {
        let p = output_path(dir, &cfg.name, "report.json");
        write_json(&p, rep)?;
        files.push(p);
    }
    Ok(ExperimentOutput {
        rows,
        prediction,
        report,
        manifest,
        files,
    })
}
