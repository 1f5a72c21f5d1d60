use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ScenarioConfig;
use super::sweep::{CellFailure, CellParams, RunRecord, SweepSpec};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::policy::StepDiagnostics;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CELLS_FILE: &str = "cells.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Column layout of the summary table.
pub const SUMMARY_COLUMNS: [&str; 7] = [
    "policy",
    "x_bar_T",
    "sigma_x_T",
    "u_s_mean",
    "u_l_mean",
    "beta",
    "residual_budget",
];

const CELL_COLUMNS: [&str; 14] = [
    "id",
    "policy",
    "alpha",
    "rho",
    "beta",
    "master_seed",
    "run_seed",
    "status",
    "x_bar_T",
    "sigma_x_T",
    "u_s_mean",
    "u_l_mean",
    "residual_budget",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub id: String,
    pub cell: CellParams,
    pub run_seed: u64,
    pub status: String,
    pub wall_clock_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub master_seed: u64,
    pub config: ScenarioConfig,
    pub sweep: SweepSpec,
    pub runs: Vec<ManifestRun>,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_s: f64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            context: path.display().to_string(),
            line: 0,
            reason: format!("{other:?}"),
        },
    }
}

fn rel(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

fn cmp_rho(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(a), Some(b)) => cmp_f64(a, b),
        (a, b) => a.is_some().cmp(&b.is_some()),
    }
}

/// Summary order: policy, then `β`, `α`, `ρ`, master seed.
fn cell_order(a: &CellParams, b: &CellParams) -> Ordering {
    a.policy
        .as_str()
        .cmp(b.policy.as_str())
        .then(cmp_f64(a.beta, b.beta))
        .then(cmp_f64(a.alpha, b.alpha))
        .then(cmp_rho(a.rho, b.rho))
        .then(a.master_seed.cmp(&b.master_seed))
}

/// Writes one matrix-valued series per file: `t, agent_0, …, agent_{n-1},
/// mean`. Returns the written paths relative to `out_dir`.
pub(crate) fn write_series(
    out_dir: &Path,
    dir: &Path,
    traj: &Trajectory,
    diagnostics: &[StepDiagnostics],
) -> Result<Vec<PathBuf>> {
    let n = traj.n_agents();
    let applied = &traj.steps[..traj.horizon()];
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("agent_{i}")));
    header.push("mean".into());
    let mut written = Vec::new();
    let series: [(&str, Vec<&Vector>); 5] = [
        ("x.csv", traj.steps.iter().map(|s| &s.x).collect()),
        ("mu.csv", traj.steps.iter().map(|s| &s.mu).collect()),
        ("u_mem.csv", traj.steps.iter().map(|s| &s.u_mem).collect()),
        ("u_s.csv", applied.iter().map(|s| &s.input.u_s).collect()),
        ("u_l.csv", applied.iter().map(|s| &s.input.u_l).collect()),
    ];
    for (name, values) in series {
        let path = dir.join(name);
        let full = out_dir.join(&path);
        let mut w = csv_writer(&full)?;
        w.write_record(&header).map_err(|e| csv_error(&full, e))?;
        for (t, v) in values.into_iter().enumerate() {
            let mut row = vec![traj.steps[t].t.to_string()];
            row.extend(v.iter().map(|x| x.to_string()));
            row.push((v.sum() / n as f64).to_string());
            w.write_record(&row).map_err(|e| csv_error(&full, e))?;
        }
        w.flush().map_err(|e| Error::io(&full, e))?;
        written.push(path);
    }

    let path = dir.join("budget.csv");
    let full = out_dir.join(&path);
    let mut w = csv_writer(&full)?;
    w.write_record(["t", "spend", "remaining"]).map_err(|e| csv_error(&full, e))?;
    for s in &traj.steps {
        w.write_record([s.t.to_string(), s.spend.to_string(), s.remaining.to_string()])
            .map_err(|e| csv_error(&full, e))?;
    }
    w.flush().map_err(|e| Error::io(&full, e))?;
    written.push(path);

    if !diagnostics.is_empty() {
        let path = dir.join("solver.csv");
        let full = out_dir.join(&path);
        let mut w = csv_writer(&full)?;
        w.write_record([
            "t",
            "status",
            "iterations",
            "primal_residual",
            "dual_residual",
            "objective",
            "projection",
            "zero_fallback",
        ])
        .map_err(|e| csv_error(&full, e))?;
        for d in diagnostics {
            w.write_record([
                d.t.to_string(),
                d.status.to_string(),
                d.iterations.to_string(),
                d.primal_residual.to_string(),
                d.dual_residual.to_string(),
                d.objective.to_string(),
                d.projection.to_string(),
                d.zero_fallback.to_string(),
            ])
            .map_err(|e| csv_error(&full, e))?;
        }
        w.flush().map_err(|e| Error::io(&full, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `summary.csv`, `cells.csv` and each run's time series. Returns the
/// written paths relative to `out_dir`.
pub fn emit_report(out_dir: &Path, records: &[RunRecord], failures: &[CellFailure]) -> Result<Vec<PathBuf>> {
    if records.is_empty() && failures.is_empty() {
        return Err(Error::Empty("run records"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| cell_order(&a.cell, &b.cell).then(a.id.cmp(&b.id)));

    let path = out_dir.join(SUMMARY_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(SUMMARY_COLUMNS).map_err(|e| csv_error(&path, e))?;
    for r in &sorted {
        let s = &r.run.summary;
        w.write_record([
            r.cell.policy.as_str().to_string(),
            s.x_bar_t.to_string(),
            s.sigma_x_t.to_string(),
            s.u_s_mean.to_string(),
            s.u_l_mean.to_string(),
            s.beta.to_string(),
            s.residual_budget.to_string(),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(PathBuf::from(SUMMARY_FILE));

    let path = out_dir.join(CELLS_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(CELL_COLUMNS).map_err(|e| csv_error(&path, e))?;
    let mut rows: Vec<(&CellParams, &str, Vec<String>)> = Vec::new();
    for r in records {
        let s = &r.run.summary;
        rows.push((
            &r.cell,
            &r.id,
            vec![
                "ok".into(),
                s.x_bar_t.to_string(),
                s.sigma_x_t.to_string(),
                s.u_s_mean.to_string(),
                s.u_l_mean.to_string(),
                s.residual_budget.to_string(),
                String::new(),
            ],
        ));
    }
    for f in failures {
        let mut tail = vec!["failed".to_string()];
        tail.extend(std::iter::repeat_n(String::new(), 5));
        tail.push(format!("{}: {}", f.kind, f.message));
        rows.push((&f.cell, &f.id, tail));
    }
    let seeds: std::collections::HashMap<&str, u64> = records
        .iter()
        .map(|r| (r.id.as_str(), r.run_seed))
        .chain(failures.iter().map(|f| (f.id.as_str(), f.run_seed)))
        .collect();
    rows.sort_by(|a, b| cell_order(a.0, b.0).then(a.1.cmp(b.1)));
    for (cell, id, tail) in rows {
        let mut row = vec![
            id.to_string(),
            cell.policy.as_str().to_string(),
            cell.alpha.to_string(),
            cell.rho.map_or(String::new(), |r| r.to_string()),
            cell.beta.to_string(),
            cell.master_seed.to_string(),
            seeds[id].to_string(),
        ];
        row.extend(tail);
        w.write_record(&row).map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(PathBuf::from(CELLS_FILE));

    for r in records {
        let dir = Path::new("cells").join(&r.id);
        written.extend(write_series(out_dir, &dir, &r.run.trajectory, &r.run.diagnostics)?);
    }
    Ok(written)
}

/// Every file under `out_dir/cells/*/<sub>`, relative to `out_dir`, sorted.
pub(crate) fn list_files(out_dir: &Path, sub: &str) -> Result<Vec<PathBuf>> {
    let cells = out_dir.join("cells");
    let mut out = Vec::new();
    let Ok(entries) = std::fs::read_dir(&cells) else {
        return Ok(out);
    };
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&cells, e))?;
        let dir = entry.path().join(sub);
        if let Ok(files) = std::fs::read_dir(&dir) {
            for f in files {
                let f = f.map_err(|e| Error::io(&dir, e))?;
                let p = f.path();
                if p.is_file() {
                    out.push(p.strip_prefix(out_dir).unwrap_or(&p).to_path_buf());
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        let _ = write!(hex, "{b:02x}");
    }
    Ok((hex, bytes.len() as u64))
}

pub(crate) fn write_manifest(
    out_dir: &Path,
    config: &ScenarioConfig,
    sweep: &SweepSpec,
    records: &[RunRecord],
    failures: &[CellFailure],
    mut artifacts: Vec<PathBuf>,
    wall_clock_s: f64,
) -> Result<Manifest> {
    artifacts.sort();
    artifacts.dedup();
    let artifacts = artifacts
        .iter()
        .map(|p| {
            let (sha256, bytes) = sha256_file(&out_dir.join(p))?;
            Ok(Artifact {
                path: rel(p),
                sha256,
                bytes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut runs: Vec<ManifestRun> = records
        .iter()
        .map(|r| ManifestRun {
            id: r.id.clone(),
            cell: r.cell,
            run_seed: r.run_seed,
            status: "ok".into(),
            wall_clock_s: r.wall_clock_s,
            error: None,
        })
        .chain(failures.iter().map(|f| ManifestRun {
            id: f.id.clone(),
            cell: f.cell,
            run_seed: f.run_seed,
            status: "failed".into(),
            wall_clock_s: f.wall_clock_s,
            error: Some(format!("{}: {}", f.kind, f.message)),
        }))
        .collect();
    runs.sort_by(|a, b| a.id.cmp(&b.id));
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: config.seed,
        config: config.clone(),
        sweep: sweep.clone(),
        runs,
        artifacts,
        wall_clock_s,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        line: e.line(),
        reason: e.to_string(),
    })
}

/// Human-readable digest of a run directory: the per-run table and a check
/// of every artifact hash against the manifest.
pub fn format_report(dir: &Path) -> Result<String> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(CELLS_FILE);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| csv_error(&path, e))?;
    let header = reader.headers().map_err(|e| csv_error(&path, e))?.clone();
    let rows: Vec<csv::StringRecord> = reader
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_error(&path, e))?;
    let shown = ["id", "policy", "alpha", "rho", "beta", "status", "x_bar_T", "sigma_x_T", "u_s_mean", "u_l_mean", "residual_budget"];
    let idx: Vec<usize> = shown
        .iter()
        .map(|c| header.iter().position(|h| h == *c).ok_or_else(|| Error::Config(format!("{CELLS_FILE} lacks `{c}`"))))
        .collect::<Result<_>>()?;
    let cell = |r: &csv::StringRecord, i: usize| {
        let s = r.get(i).unwrap_or("");
        match s.parse::<f64>() {
            Ok(v) if s.contains('.') => format!("{v:.4}"),
            _ => s.to_string(),
        }
    };
    let mut widths: Vec<usize> = shown.iter().map(|s| s.len()).collect();
    for r in &rows {
        for (k, &i) in idx.iter().enumerate() {
            widths[k] = widths[k].max(cell(r, i).len());
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} runs, master seed {}, wall clock {:.1}s",
        manifest.runs.len(),
        manifest.master_seed,
        manifest.wall_clock_s
    );
    let line = |vals: Vec<String>| {
        vals.iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{}", line(shown.iter().map(|s| s.to_string()).collect()));
    for r in &rows {
        let _ = writeln!(out, "{}", line(idx.iter().map(|&i| cell(r, i)).collect()));
    }
    for run in manifest.runs.iter().filter(|r| r.error.is_some()) {
        let _ = writeln!(out, "failed {}: {}", run.id, run.error.as_deref().unwrap_or(""));
    }
    let mut bad = Vec::new();
    for a in &manifest.artifacts {
        match sha256_file(&dir.join(&a.path)) {
            Ok((h, _)) if h == a.sha256 => {}
            _ => bad.push(a.path.clone()),
        }
    }
    if bad.is_empty() {
        let _ = writeln!(out, "artifacts: {} verified", manifest.artifacts.len());
    } else {
        let _ = writeln!(
            out,
            "artifacts: {} of {} changed or missing: {}",
            bad.len(),
            manifest.artifacts.len(),
            bad.join(", ")
        );
    }
    Ok(out)
}
