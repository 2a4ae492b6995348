use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{compute, CliError};

pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        compute(format!(
            "cannot create output directory {}: {e}",
            dir.display()
        ))
    })
}

/// Writes through a temporary file so readers never see a partial file.
pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| compute(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct Metadata<'a, C: Serialize> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    config: &'a C,
}

/// `metadata.json` with the effective settings. Contains nothing that
/// varies between runs of the same configuration.
pub fn write_metadata<C: Serialize>(
    dir: &Path,
    command: &str,
    config: &C,
) -> Result<PathBuf, CliError> {
    let meta = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
    };
    let path = dir.join("metadata.json");
    let text = serde_json::to_string_pretty(&meta).map_err(compute)? + "\n";
    write_file(&path, &text)?;
    Ok(path)
}
