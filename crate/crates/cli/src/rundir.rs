use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use cmhop_core::io::{content_hash, hash_directory, write_atomic, RunConfig};

/// Overrides the directory all outputs are written under.
pub const OUTPUT_ROOT_ENV: &str = "CMHOP_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// Resolves `path` against the output root unless it is absolute.
pub fn resolve(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        output_root().join(path)
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    seed: u64,
    config_hash: String,
    inputs: Vec<InputHash>,
}

#[derive(Serialize)]
struct InputHash {
    name: String,
    hash: String,
}

/// A command's output directory.
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    /// Creates `<root>/<runs>/<name>` and records the config and input hashes.
    pub fn create(config: &RunConfig, command: &str, name: Option<&str>, inputs: &[&Path]) -> anyhow::Result<Self> {
        let path = resolve(Path::new(&config.paths.runs)).join(name.unwrap_or(command));
        Self::create_at(path, config, command, inputs)
    }

    /// Like [`RunDir::create`] with an explicit directory.
    pub fn create_at(path: PathBuf, config: &RunConfig, command: &str, inputs: &[&Path]) -> anyhow::Result<Self> {
        std::fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        let dir = Self { path };
        let json = config.to_json();
        dir.write("config.json", json.as_bytes())?;
        let mut hashes = Vec::new();
        for input in inputs {
            let h = if input.is_dir() {
                hash_directory(input)?
            } else {
                let bytes = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
                content_hash([("", bytes.as_slice())])
            };
            let label = input.file_name().map_or_else(|| input.display().to_string(), |n| n.to_string_lossy().into_owned());
            hashes.push(InputHash { name: label, hash: h });
        }
        dir.write_json(
            "provenance.json",
            &Provenance { command, seed: config.seed, config_hash: content_hash([("config.json", json.as_bytes())]), inputs: hashes },
        )?;
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let p = self.file(name);
        write_atomic(&p, bytes).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> anyhow::Result<()> {
        let mut s = String::with_capacity(header.len() + rows.iter().map(|r| r.len() + 1).sum::<usize>() + 1);
        s.push_str(header);
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }
}
