//! On-disk layout of a scenario run: one directory per config hash.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use super::{config_hash, ScenarioResult};
use crate::cc::write_control_trace;
use crate::sim::metrics::write_ndjson;

/// Environment variable naming the output root.
pub const OUT_ENV: &str = "POWERSIM_OUT";
pub const DEFAULT_OUT: &str = "powersim-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: Option<PathBuf>,
    pub config_hash: String,
    pub tool_version: String,
    /// Wall-clock seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub output_dir: PathBuf,
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT), PathBuf::from)
}

pub fn wall_clock() -> f64 {
    SystemTime::now()
        .duration_since(SystemTime::UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Run directory under `root` for a config hash.
pub fn run_dir(root: &Path, hash: &str) -> PathBuf {
    root.join(&hash[..16.min(hash.len())])
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()
}

/// Writes config, summary, raw metrics, control traces and the manifest.
pub fn write_run(
    root: &Path,
    result: &ScenarioResult,
    config_path: Option<&Path>,
    started: f64,
) -> io::Result<RunManifest> {
    let hash = config_hash(&result.config);
    let dir = run_dir(root, &hash);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.json"), result.config.canonical_json())?;
    fs::write(dir.join("summary.json"), result.summary_json())?;
    let mut m = BufWriter::new(File::create(dir.join("metrics.ndjson"))?);
    write_ndjson(&result.metrics, &mut m)?;
    m.flush()?;
    for (i, rows) in result.sim.control.iter().enumerate().filter(|(_, r)| !r.is_empty()) {
        let f = File::create(dir.join(format!("control-f{i}.csv")))?;
        write_control_trace(rows, BufWriter::new(f)).map_err(io::Error::other)?;
    }
    let manifest = RunManifest {
        config_path: config_path.map(Path::to_path_buf),
        config_hash: hash,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished: wall_clock(),
        output_dir: dir.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
