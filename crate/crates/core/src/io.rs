//! Output files and their JSON provenance sidecars.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// `<file>.json` next to `file`.
pub fn sidecar_path(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".json");
    file.with_file_name(name)
}

/// Sidecar contents: config hash, seed, version and the full resolved config.
/// Holds no timestamps, so reruns reproduce it byte for byte.
pub fn provenance(command: &str, config: &ExperimentConfig, seed: u64, extra: Value) -> Value {
    json!({
        "command": command,
        "version": VERSION,
        "config_sha256": config.hash(),
        "seed": seed,
        "config": config,
        "extra": extra,
    })
}

pub fn create_parent(path: &Path) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

/// Creates `path` (and its directory) and hands a buffered writer to `body`.
pub fn write_with<F>(path: &Path, body: F) -> std::io::Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    create_parent(path)?;
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w)?;
    w.flush()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> std::io::Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

/// Writes `value`'s sidecar for the already written `file`.
pub fn write_sidecar(file: &Path, value: &Value) -> std::io::Result<()> {
    write_json(&sidecar_path(file), value)
}

pub fn csv_error(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}
