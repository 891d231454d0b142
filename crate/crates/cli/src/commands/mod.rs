pub mod bench;
pub mod data;
pub mod eval;
pub mod finetune;
pub mod sample;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use cmhop_core::consistency::TrainingExample;
use cmhop_core::geometry::{build_context, Atom, Complex, MolecularContext, ScaffoldState};
use cmhop_core::io::{load_checkpoint, read_complex, Checkpoint, RunConfig};
use cmhop_core::rng::{substream_indexed, StreamRng};
use cmhop_core::Denoiser;

use crate::rundir::resolve;

pub const DATA_PREFIX: &str = "complex_";
pub const SAMPLES_FILE: &str = "samples.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.thcm";

pub fn complex_file_name(index: usize) -> String {
    format!("{DATA_PREFIX}{index:05}.json")
}

/// Data directory from a flag, falling back to the configured path.
pub fn data_dir(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    flag.map(resolve).unwrap_or_else(|| resolve(Path::new(&config.paths.data)))
}

/// Output of another run, by file name under the runs path.
pub fn run_file(flag: Option<&Path>, config: &RunConfig, run: &str, file: &str) -> PathBuf {
    flag.map(resolve)
        .unwrap_or_else(|| resolve(Path::new(&config.paths.runs)).join(run).join(file))
}

/// Complex files in a data directory, sorted by name.
pub fn dataset_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading data directory {}", dir.display()))? {
        let path = entry?.path();
        let is_complex = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with(DATA_PREFIX) && n.ends_with(".json"));
        if is_complex {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no {DATA_PREFIX}*.json files in {}", dir.display());
    }
    Ok(files)
}

pub struct Dataset {
    pub complexes: Vec<Complex>,
    pub contexts: Vec<MolecularContext>,
    pub references: Vec<ScaffoldState>,
}

impl Dataset {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let mut complexes = Vec::new();
        let mut contexts = Vec::new();
        let mut references = Vec::new();
        for path in dataset_files(dir)? {
            let c = read_complex(&path).with_context(|| format!("reading {}", path.display()))?;
            let (ctx, clean) = build_context(&c).with_context(|| format!("building context for {}", path.display()))?;
            complexes.push(c);
            contexts.push(ctx);
            references.push(clean);
        }
        Ok(Self { complexes, contexts, references })
    }

    pub fn len(&self) -> usize {
        self.complexes.len()
    }

    /// The first `n` contexts, failing if fewer exist.
    pub fn take(&self, n: usize, what: &str) -> anyhow::Result<usize> {
        if n > self.len() {
            bail!("{what} needs {n} contexts but the dataset has {}", self.len());
        }
        Ok(n)
    }

    pub fn training_examples(&self, net: &Denoiser, n: usize) -> anyhow::Result<Vec<TrainingExample>> {
        self.contexts[..n]
            .iter()
            .zip(&self.references)
            .map(|(ctx, clean)| Ok(TrainingExample { context: net.prepare(ctx.clone())?, clean: clean.clone() }))
            .collect()
    }
}

pub fn load_model(path: &Path) -> anyhow::Result<(Checkpoint, Denoiser)> {
    let ckpt = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let net = ckpt.denoiser()?;
    Ok((ckpt, net))
}

/// Independent stream for one `(context, sample)` draw.
pub fn sample_rng(seed: u64, stream: &str, context: usize, sample: usize) -> StreamRng {
    substream_indexed(seed, stream, ((context as u64) << 32) | sample as u64)
}

/// A generated scaffold as stored in sample files.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub context: usize,
    pub sample: usize,
    pub best_step: usize,
    pub evaluations: usize,
    /// `None` when the sampler produced non-finite values.
    pub atoms: Option<Vec<Atom>>,
}

impl SampleRecord {
    pub fn state(&self) -> anyhow::Result<ScaffoldState> {
        match &self.atoms {
            Some(atoms) => Ok(ScaffoldState::from_atoms(atoms)?),
            None => Ok(ScaffoldState { x: cmhop_core::Tensor::filled(1, 3, f64::NAN), h: cmhop_core::Tensor::zeros(1, cmhop_core::geometry::LIGAND_ELEMENTS) }),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleFile {
    pub data: String,
    pub steps: usize,
    pub metric_start: usize,
    pub score: cmhop_core::sampling::ScoreMode,
    pub samples: Vec<SampleRecord>,
}
