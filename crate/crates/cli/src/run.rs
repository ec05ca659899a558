//! Executes an [`ExperimentSpec`] and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use mimo_ace::comms::{self, BerPoint, Csi};
use mimo_ace::experiment::{self, MonteCarloResult, RunConfig};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{AlgoEntry, Command, ExperimentSpec, Snr};
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub files: Vec<FileRecord>,
    pub manifest: PathBuf,
}

struct Sink<'a> {
    dir: &'a Path,
    files: Vec<FileRecord>,
}

impl Sink<'_> {
    fn write(&mut self, name: String, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(&name);
        fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })?;
        self.files.push(FileRecord {
            name,
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    fn write_json(&mut self, name: String, value: &Value) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write(name, &text)
    }
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Io {
        path: PathBuf::from("<csv buffer>"),
        source: e.into_error(),
    })
}

/// `iteration, mse, mu_rx0, mu_rx1, ...` with one row per iteration.
pub fn trace_csv(result: &MonteCarloResult, n_r: usize) -> Result<Vec<u8>> {
    let mut header = vec!["iteration".to_string(), "mse".to_string()];
    header.extend((0..n_r).map(|r| format!("mu_rx{r}")));
    let rows = result.mean_mse.iter().zip(&result.mean_mu).enumerate().map(|(i, (mse, mu))| {
        let mut row = vec![(i + 1).to_string(), mse.to_string()];
        row.extend(mu.iter().map(f64::to_string));
        row
    });
    csv_bytes(&header, rows)
}

/// `snr_db, scheme, order, algorithm, ber, errors, bits`.
pub fn ber_csv(points: &[BerPoint]) -> Result<Vec<u8>> {
    let header = ["snr_db", "scheme", "order", "algorithm", "ber", "errors", "bits"].map(String::from);
    let rows = points.iter().map(|p| {
        vec![
            p.snr_db.to_string(),
            p.scheme.as_str().to_string(),
            p.order.to_string(),
            p.algorithm.clone(),
            p.ber.to_string(),
            p.errors.to_string(),
            p.bits.to_string(),
        ]
    });
    csv_bytes(&header, rows)
}

fn mse_summary(spec: &ExperimentSpec, entry: &AlgoEntry, cfg: &RunConfig, result: &MonteCarloResult) -> Value {
    let (mean, std_error) = result.steady_state();
    let (tolerance, max_iter) = result.stop_histogram();
    let mut value = json!({
        "command": spec.command,
        "algorithm": entry.label,
        "config": cfg,
        "resolved_c": cfg.resolved_algo().c,
        "final_mse": result.mean_mse.last(),
        "steady_state": {
            "mean": mean,
            "std_error": std_error,
            "window": cfg.steady_window.min(cfg.max_iter),
        },
        "stop_reasons": {
            "tolerance": tolerance,
            "max-iter": max_iter,
        },
        "runs": result.runs,
    });
    if !spec.format.csv() {
        value["trace"] = json!({
            "mse": result.mean_mse,
            "mu": result.mean_mu,
        });
    }
    value
}

fn run_traces(spec: &ExperimentSpec, prefix: &str, sink: &mut Sink) -> Result<()> {
    let snr = spec.snr_grid[0];
    let t = spec.sparsity[0];
    for entry in &spec.algorithms {
        let cfg = spec.run_config(&entry.algo, snr, t);
        let result = experiment::monte_carlo(&cfg)?;
        if spec.format.csv() {
            sink.write(format!("{prefix}_{}.csv", entry.label), &trace_csv(&result, cfg.n_r)?)?;
        }
        if spec.format.json() {
            sink.write_json(
                format!("{prefix}_{}.json", entry.label),
                &mse_summary(spec, entry, &cfg, &result),
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SweepRow {
    snr_db: Snr,
    sparsity: usize,
    resolved_c: f64,
    steady_mse: f64,
    std_error: f64,
    final_mse: f64,
    tolerance_stops: usize,
    max_iter_stops: usize,
}

fn run_sweep(spec: &ExperimentSpec, sink: &mut Sink) -> Result<()> {
    for entry in &spec.algorithms {
        let mut rows = Vec::new();
        for &snr in &spec.snr_grid {
            for &t in &spec.sparsity {
                let cfg = spec.run_config(&entry.algo, snr, t);
                let result = experiment::monte_carlo(&cfg)?;
                let (steady_mse, std_error) = result.steady_state();
                let (tolerance_stops, max_iter_stops) = result.stop_histogram();
                rows.push(SweepRow {
                    snr_db: snr,
                    sparsity: t,
                    resolved_c: cfg.resolved_algo().c,
                    steady_mse,
                    std_error,
                    final_mse: *result.mean_mse.last().unwrap_or(&f64::NAN),
                    tolerance_stops,
                    max_iter_stops,
                });
            }
        }
        if spec.format.csv() {
            let header = [
                "snr_db",
                "sparsity",
                "resolved_c",
                "steady_mse",
                "std_error",
                "final_mse",
                "tolerance_stops",
                "max_iter_stops",
            ]
            .map(String::from);
            let body = rows.iter().map(|r| {
                vec![
                    r.snr_db.to_string(),
                    r.sparsity.to_string(),
                    r.resolved_c.to_string(),
                    r.steady_mse.to_string(),
                    r.std_error.to_string(),
                    r.final_mse.to_string(),
                    r.tolerance_stops.to_string(),
                    r.max_iter_stops.to_string(),
                ]
            });
            sink.write(format!("sweep_{}.csv", entry.label), &csv_bytes(&header, body)?)?;
        }
        if spec.format.json() {
            sink.write_json(
                format!("sweep_{}.json", entry.label),
                &json!({
                    "command": spec.command,
                    "algorithm": entry.label,
                    "algo": entry.algo,
                    "rows": rows,
                }),
            )?;
        }
    }
    Ok(())
}

fn run_ber(spec: &ExperimentSpec, sink: &mut Sink) -> Result<()> {
    let grid: Vec<f64> = spec.snr_grid.iter().filter_map(|s| s.0).collect();
    let t = spec.sparsity[0];
    let link = &spec.link;
    let mut jobs: Vec<(String, &AlgoEntry, Csi)> = Vec::new();
    for &csi in link.csi.modes() {
        match csi {
            Csi::Estimated => jobs.extend(spec.algorithms.iter().map(|e| (e.label.clone(), e, csi))),
            Csi::Perfect => jobs.push(("perfect-csi".to_string(), &spec.algorithms[0], csi)),
        }
    }
    for (label, entry, csi) in jobs {
        let cfg = spec.run_config(&entry.algo, Snr(grid.first().copied()), t);
        let mut points = comms::ber_curve(
            &cfg,
            &link.constellations,
            &grid,
            link.bits_per_point,
            &link.ofdm,
            csi,
        )?;
        for p in &mut points {
            p.algorithm = label.clone();
        }
        if spec.format.csv() {
            sink.write(format!("ber_{label}.csv"), &ber_csv(&points)?)?;
        }
        if spec.format.json() {
            sink.write_json(
                format!("ber_{label}.json"),
                &json!({
                    "command": spec.command,
                    "algorithm": label,
                    "csi": csi,
                    "config": cfg,
                    "ofdm": link.ofdm,
                    "points": points,
                }),
            )?;
        }
    }
    Ok(())
}

/// Runs the experiment, writing one artifact per algorithm and a manifest.
pub fn run(spec: &ExperimentSpec) -> Result<RunReport> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let dir = spec.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut sink = Sink { dir, files: Vec::new() };

    match spec.command {
        Command::Mse => run_traces(spec, "mse", &mut sink)?,
        Command::TraceStepSize => run_traces(spec, "step", &mut sink)?,
        Command::Sweep => run_sweep(spec, &mut sink)?,
        Command::Ber => run_ber(spec, &mut sink)?,
    }

    let manifest = json!({
        "tool": "mimo-ace",
        "versions": {
            "mimo-ace-cli": env!("CARGO_PKG_VERSION"),
            "mimo-ace": mimo_ace::VERSION,
        },
        "spec": spec.echo(),
        "started_unix_seconds": started,
        "wall_clock_seconds": clock.elapsed().as_secs_f64(),
        "files": sink.files,
    });
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    fs::write(&path, text).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(RunReport {
        files: sink.files,
        manifest: path,
    })
}
