//! Run directories: `moments.csv`, one `snapshot_<t>.csv` per output time,
//! and `manifest.json` with the resolved configuration, the bounds report
//! and SHA-256 hashes of the CSV files.
//!
//! Floats are written in Rust's shortest round-trip form, so identical runs
//! produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{
    classify_regime, default_k_grid, existence_bounds, nonexistence_bound, BoundsReport, Regime,
};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::grid::{SizeGrid, State};
use crate::integrate::RunOutput;

pub const MOMENTS_FILE: &str = "moments.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// File name of the snapshot at time `t`.
pub fn snapshot_name(t: f64) -> String {
    format!("snapshot_{t}.csv")
}

/// Existence and non-existence reports for a configuration, with initial
/// moments taken from the discretized initial state. `C1(T)` is tabulated at
/// `t_values` and at half the local existence time when it is finite.
pub fn bounds_for(config: &SimConfig, grid: &SizeGrid, state0: &State, t_values: &[f64]) -> Result<BoundsReport> {
    let k0 = config.law.k0();
    let rho = grid.moment(state0, 1.0) + state0.dust_mass;
    let m_k0 = grid.moment(state0, k0);
    let m_k0p1 = grid.moment(state0, 1.0 + k0);
    match classify_regime(&config.kernel, &config.law) {
        Regime::GlobalExistence | Regime::LocalExistence => {
            let mut report = existence_bounds(&config.kernel, &config.law, rho, m_k0, m_k0p1, t_values)?;
            let t_k0 = report.existence.as_ref().map_or(f64::INFINITY, |e| e.t_k0);
            if t_k0.is_finite() {
                let mut ts = t_values.to_vec();
                ts.push(0.5 * t_k0);
                ts.sort_by(f64::total_cmp);
                ts.dedup();
                report = existence_bounds(&config.kernel, &config.law, rho, m_k0, m_k0p1, &ts)?;
            }
            Ok(report)
        }
        Regime::NonExistence => {
            let m_in = |k: f64| grid.moment(state0, k);
            nonexistence_bound(&config.kernel, &config.law, rho, m_k0p1, &m_in, &default_k_grid(&config.law))
        }
        Regime::Uncovered => existence_bounds(&config.kernel, &config.law, rho, m_k0, m_k0p1, t_values),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub time: f64,
    pub file: String,
}

/// The parts of `manifest.json` that are read back.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Manifest {
    pub config_text: String,
    pub snapshots: Vec<SnapshotEntry>,
    pub files: Vec<FileHash>,
    pub content_hash: String,
}

#[derive(Serialize)]
struct ManifestOut<'a> {
    config: serde_json::Map<String, serde_json::Value>,
    config_text: String,
    regime: Regime,
    bounds: &'a BoundsReport,
    moment_orders: &'a [f64],
    snapshots: Vec<SnapshotEntry>,
    accepted_steps: usize,
    rejected_steps: usize,
    files: Vec<FileHash>,
    content_hash: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Input(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| Error::Input(format!("csv encoding failed: {e}")))
}

fn f(x: f64) -> String {
    format!("{x:?}")
}

/// Writes a run directory and returns the combined content hash.
pub fn emit_outputs(run: &RunOutput, config: &SimConfig, report: &BoundsReport, dir: &Path) -> Result<String> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| -> Result<FileHash> {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(FileHash {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
        })
    };

    let mut header = vec!["t".to_string()];
    header.extend(run.moment_orders.iter().map(|k| format!("M_{k}")));
    header.push("dust_mass".into());
    header.push("clip_mass".into());
    let rows = run.snapshots.iter().zip(&run.moments).map(|(s, m)| {
        let mut row = vec![f(s.time)];
        row.extend(m.iter().map(|x| f(*x)));
        row.push(f(s.dust_mass));
        row.push(f(s.clip_mass));
        row
    });
    let mut files = vec![write(MOMENTS_FILE, &csv_bytes(&header, rows)?)?];

    let grid = &run.grid;
    let snap_header: Vec<String> = ["cell_index", "edge_lo", "edge_hi", "rep", "content", "density"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut snapshots = Vec::new();
    for s in &run.snapshots {
        let rows = (0..grid.n_cells()).map(|i| {
            let (lo, hi) = (grid.edges()[i], grid.edges()[i + 1]);
            let c = s.contents[i];
            vec![i.to_string(), f(lo), f(hi), f(grid.reps()[i]), f(c), f(c / (hi - lo))]
        });
        let name = snapshot_name(s.time);
        files.push(write(&name, &csv_bytes(&snap_header, rows)?)?);
        snapshots.push(SnapshotEntry { time: s.time, file: name });
    }

    let mut combined = Sha256::new();
    for fh in &files {
        combined.update(fh.name.as_bytes());
        combined.update([0u8]);
        combined.update(fh.sha256.as_bytes());
        combined.update(b"\n");
    }
    let content_hash = hex::encode(combined.finalize());
    let manifest = ManifestOut {
        config: config
            .entries()
            .into_iter()
            .map(|(k, v)| (k, serde_json::Value::String(v)))
            .collect(),
        config_text: config.to_config_string(),
        regime: report.regime,
        bounds: report,
        moment_orders: &run.moment_orders,
        snapshots,
        accepted_steps: run.accepted_steps,
        rejected_steps: run.rejected_steps,
        files,
        content_hash: content_hash.clone(),
    };
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Input(format!("manifest encoding failed: {e}")))?;
    json.push('\n');
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(content_hash)
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
    pub config: SimConfig,
    pub manifest: Manifest,
    pub run: RunOutput,
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::format(path, format!("row {}: non-numeric field", n + 1)))?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn column(path: &Path, header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::format(path, format!("missing column `{name}`")))
}

/// Reads a directory written by [`emit_outputs`], checking file hashes.
pub fn read_run_dir(dir: &Path) -> Result<RunDir> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    for fh in &manifest.files {
        let p = dir.join(&fh.name);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        if sha256_hex(&bytes) != fh.sha256 {
            return Err(Error::format(&p, "content does not match the hash recorded in the manifest"));
        }
    }
    let config = SimConfig::parse(&manifest.config_text)?;
    let grid = config.build_grid()?;

    let mom_path = dir.join(MOMENTS_FILE);
    let (header, rows) = read_csv(&mom_path)?;
    let (it, id, ic) = (
        column(&mom_path, &header, "t")?,
        column(&mom_path, &header, "dust_mass")?,
        column(&mom_path, &header, "clip_mass")?,
    );
    let orders: Vec<f64> = header
        .iter()
        .filter_map(|h| h.strip_prefix("M_"))
        .map(|k| k.parse::<f64>().map_err(|_| Error::format(&mom_path, format!("bad moment column M_{k}"))))
        .collect::<Result<_>>()?;
    if rows.len() != manifest.snapshots.len() {
        return Err(Error::format(&mom_path, "row count does not match the snapshot list"));
    }

    let mut run = RunOutput {
        grid: grid.clone(),
        moment_orders: orders,
        snapshots: Vec::new(),
        moments: Vec::new(),
        accepted_steps: 0,
        rejected_steps: 0,
    };
    for (row, entry) in rows.iter().zip(&manifest.snapshots) {
        let sp = dir.join(&entry.file);
        let (sh, srows) = read_csv(&sp)?;
        let (lo, hi, content) = (
            column(&sp, &sh, "edge_lo")?,
            column(&sp, &sh, "edge_hi")?,
            column(&sp, &sh, "content")?,
        );
        if srows.len() != grid.n_cells() {
            return Err(Error::format(&sp, "cell count does not match the configured grid"));
        }
        for (i, r) in srows.iter().enumerate() {
            if r[lo] != grid.edges()[i] || r[hi] != grid.edges()[i + 1] {
                return Err(Error::format(&sp, format!("cell {i} edges do not match the configured grid")));
            }
        }
        let state = State {
            time: row[it],
            contents: srows.iter().map(|r| r[content]).collect(),
            dust_mass: row[id],
            clip_mass: row[ic],
        };
        run.moments.push(
            header
                .iter()
                .enumerate()
                .filter(|(_, h)| h.starts_with("M_"))
                .map(|(j, _)| row[j])
                .collect(),
        );
        run.snapshots.push(state);
    }
    Ok(RunDir {
        path: dir.to_path_buf(),
        config,
        manifest,
        run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::run;

    #[test]
    fn zero_horizon_run_dir() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimConfig::parse(
            "kernel.lambda1 = 0.6\nkernel.lambda2 = 0.6\ndaughter.nu = -1.2\ndaughter.k0 = 0.5\n\
             grid.n_cells = 16\ntime.t_end = 0\n",
        )
        .unwrap();
        let out = run(&cfg).unwrap();
        let grid = cfg.build_grid().unwrap();
        let report = bounds_for(&cfg, &grid, &out.snapshots[0], &[0.0]).unwrap();
        emit_outputs(&out, &cfg, &report, dir.path()).unwrap();
        let moments = fs::read_to_string(dir.path().join(MOMENTS_FILE)).unwrap();
        assert_eq!(moments.lines().count(), 2);
        assert_eq!(moments.lines().next().unwrap(), "t,M_0.5,M_1,M_1.5,dust_mass,clip_mass");
        assert!(dir.path().join("snapshot_0.csv").exists());
        let back = read_run_dir(dir.path()).unwrap();
        assert_eq!(back.run.snapshots, out.snapshots);
        assert_eq!(back.run.moments, out.moments);
        assert_eq!(back.config, cfg);
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimConfig::parse(
            "kernel.lambda1 = 0.6\nkernel.lambda2 = 0.6\ndaughter.nu = -1.2\ndaughter.k0 = 0.5\n\
             grid.n_cells = 8\ntime.t_end = 0.1\ntime.snapshots = 2\n",
        )
        .unwrap();
        let out = run(&cfg).unwrap();
        let report = bounds_for(&cfg, &out.grid, &out.snapshots[0], &[]).unwrap();
        emit_outputs(&out, &cfg, &report, dir.path()).unwrap();
        fs::write(dir.path().join(MOMENTS_FILE), "t\n").unwrap();
        assert!(matches!(read_run_dir(dir.path()), Err(Error::Format { .. })));
    }
}
