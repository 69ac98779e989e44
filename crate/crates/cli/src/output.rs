//! Artifact writers. Every file carries the resolved config and the library version.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

pub fn preamble(command: &str, config: &Value, version: &str) -> Vec<String> {
    vec![
        format!("youngreg {version}"),
        format!("command: {command}"),
        format!("config: {config}"),
    ]
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `{version, command, config, result}` as pretty JSON.
pub fn write_json<T: Serialize>(
    path: &Path,
    command: &str,
    config: &Value,
    version: &str,
    result: &T,
) -> Result<(), CliError> {
    let doc = json!({
        "version": version,
        "command": command,
        "config": config,
        "result": result,
    });
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// `run.csv` -> `run.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}
