//! Run configuration, complex files, checkpoints and run directories.

mod checkpoint;
mod complex_file;
mod config;

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use complex_file::{complex_from_json, complex_to_json, read_complex, write_complex, COMPLEX_FORMAT_VERSION};
pub use config::{BenchSection, DataSection, PathsSection, RlSection, RunConfig, SampleSection, TrainSection};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("atom {atom}: unknown element {symbol:?}")]
    UnknownElement { atom: usize, symbol: String },
    #[error("field {field}: {message}")]
    Field { field: String, message: String },
    #[error("unsupported format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },
    #[error("truncated file: {what} needs {needed} bytes, {available} left")]
    Truncated { what: String, needed: usize, available: usize },
    #[error("tensor {tensor}: shape {found:?} does not match expected {expected:?}")]
    Shape { tensor: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("config field {field}: {message}")]
    Config { field: String, message: String },
}

impl FormatError {
    pub(crate) fn json(e: &serde_json::Error) -> Self {
        FormatError::Json { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// SHA-256 over named blobs, each framed git-style as `name\0blob <len>\0<bytes>`.
pub fn content_hash<'a>(parts: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> String {
    let mut h = Sha256::new();
    for (name, bytes) in parts {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(format!("blob {}", bytes.len()).as_bytes());
        h.update([0]);
        h.update(bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Content hash of every regular file under `dir`, in sorted relative-path order.
pub fn hash_directory(dir: &Path) -> std::io::Result<String> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let blobs: Vec<(String, Vec<u8>)> = files
        .into_iter()
        .map(|rel| fs::read(dir.join(&rel)).map(|b| (rel, b)))
        .collect::<Result<_, _>>()?;
    Ok(content_hash(blobs.iter().map(|(n, b)| (n.as_str(), b.as_slice()))))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if let Ok(rel) = path.strip_prefix(root) {
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}
