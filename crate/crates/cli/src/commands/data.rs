use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use log::info;
use rand::Rng;

use cmhop_core::geometry::synthesize_complex;
use cmhop_core::io::{complex_to_json, write_atomic};
use cmhop_core::rng::substream_indexed;

use super::{complex_file_name, data_dir, dataset_files, DATA_PREFIX};
use crate::rundir::RunDir;
use crate::Common;

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of complexes.
    #[arg(long)]
    pub count: Option<usize>,
    /// Output directory (defaults to the configured data path).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Seed of the `index`-th complex of a dataset.
pub fn complex_seed(root: u64, index: usize) -> u64 {
    substream_indexed(root, "data", index as u64).random()
}

pub fn run(args: GenDataArgs) -> anyhow::Result<()> {
    let mut config = args.common.load()?;
    if let Some(n) = args.count {
        config.data.count = n;
    }
    config.validate()?;
    let out = data_dir(args.out.as_deref(), &config);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    if let Ok(stale) = dataset_files(&out) {
        for path in stale {
            std::fs::remove_file(&path).with_context(|| format!("removing {}", path.display()))?;
        }
    }
    for i in 0..config.data.count {
        let complex = synthesize_complex(complex_seed(config.seed, i), &config.data.synth)
            .with_context(|| format!("synthesizing complex {i}"))?;
        write_atomic(&out.join(complex_file_name(i)), complex_to_json(&complex).as_bytes())?;
    }
    RunDir::create_at(out.clone(), &config, "gen-data", &[])?;
    info!("wrote {} {DATA_PREFIX}*.json files to {}", config.data.count, out.display());
    Ok(())
}
