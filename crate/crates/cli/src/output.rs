//! Output plumbing: atomic file writes, the run manifest, and the
//! measure-grid cache.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use serde::Serialize;

use lmss_core::field::{build_measure_grid, GridGeometry, MeasureGrid};
use lmss_core::rng::RngStream;

use crate::config::{CliError, CliResult};

/// Write bytes to `dir/name` atomically (temp file + rename).
pub fn atomic_write(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
    let final_path = dir.join(name);
    let tmp_path = dir.join(format!("{name}.tmp"));
    fs::write(&tmp_path, bytes).map_err(lmss_core::CoreError::Io)?;
    fs::rename(&tmp_path, &final_path).map_err(lmss_core::CoreError::Io)?;
    Ok(final_path)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::config(format!("serialization failed: {e}")))?;
    text.push('\n');
    atomic_write(dir, name, text.as_bytes())
}

/// Stable hash of the canonical JSON form of the config document.
pub fn config_hash(value: &serde_json::Value) -> String {
    let canonical = value.to_string();
    let mut h = DefaultHasher::new();
    canonical.hash(&mut h);
    format!("{:016x}", h.finish())
}

/// Run manifest: everything needed to reproduce the outputs (the config
/// document is embedded verbatim). Wall time is provenance metadata, not
/// part of the reproducible data files.
#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub threads: Option<usize>,
    pub max_cells: usize,
    pub crate_version: &'static str,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

fn grid_cache_key(geometry: &GridGeometry, alpha: f64, stream: RngStream) -> String {
    let mut h = DefaultHasher::new();
    stream.seed.hash(&mut h);
    stream.stream.hash(&mut h);
    alpha.to_bits().hash(&mut h);
    geometry.spacing.to_bits().hash(&mut h);
    for v in &geometry.lower {
        v.to_bits().hash(&mut h);
    }
    geometry.counts.hash(&mut h);
    format!("grid-{:016x}.bin", h.finish())
}

/// Build a measure grid, consulting the binary cache under `LMSS_CACHE_DIR`
/// when that variable is set. Cached increments are bit-identical to freshly
/// generated ones by construction.
pub fn cached_measure_grid(
    geometry: &GridGeometry,
    alpha: f64,
    stream: RngStream,
    max_cells: usize,
) -> CliResult<MeasureGrid> {
    let cache_dir = match std::env::var_os("LMSS_CACHE_DIR") {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => return Ok(build_measure_grid(geometry.clone(), alpha, stream, max_cells)?),
    };
    fs::create_dir_all(&cache_dir).map_err(lmss_core::CoreError::Io)?;
    let key = grid_cache_key(geometry, alpha, stream);
    let path = cache_dir.join(&key);
    let expected = geometry.total_cells();
    if let Ok(bytes) = fs::read(&path) {
        if bytes.len() == expected * 8 {
            let increments: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            return Ok(MeasureGrid {
                geometry: geometry.clone(),
                alpha,
                stream,
                increments,
            });
        }
    }
    let grid = build_measure_grid(geometry.clone(), alpha, stream, max_cells)?;
    let mut bytes = Vec::with_capacity(grid.increments.len() * 8);
    for v in &grid.increments {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(&cache_dir, &key, &bytes)?;
    Ok(grid)
}

/// Deterministic CSV rendering: `{}` on f64 is the shortest round-trip form.
pub fn csv_row(values: &[f64]) -> String {
    let mut row = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            row.push(',');
        }
        row.push_str(&format!("{v}"));
    }
    row.push('\n');
    row
}
