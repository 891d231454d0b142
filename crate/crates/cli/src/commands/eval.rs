use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use log::info;
use serde::Serialize;

use cmhop_core::eval::{bond_geometry_histograms, evaluate_batch, jsd, molecule_hash, EvalReport, GeometryHistograms};
use cmhop_core::geometry::Atom;

use super::{data_dir, run_file, Dataset, SampleFile, SAMPLES_FILE};
use crate::rundir::{resolve, RunDir};
use crate::Common;

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Sample file (defaults to the sample run's).
    #[arg(long)]
    pub samples: Option<PathBuf>,
    /// Dataset the samples were drawn for; also the novelty and geometry reference.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Serialize)]
struct GeometryComparison {
    /// Jensen–Shannon divergence per bond type; `None` when either side has no bonds of that type.
    bond_length_jsd: BTreeMap<String, Option<f64>>,
    bond_angle_jsd: Option<f64>,
    /// Percentage of rings with 3..=9 members.
    ring_sizes_generated: Vec<f64>,
    ring_sizes_reference: Vec<f64>,
    generated: GeometryHistograms,
    reference: GeometryHistograms,
}

#[derive(Serialize)]
struct Report {
    samples: usize,
    steps: usize,
    evaluations: usize,
    metrics: serde_json::Value,
    geometry: GeometryComparison,
}

fn percentages(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 }).collect()
}

fn compare(generated: GeometryHistograms, reference: GeometryHistograms) -> GeometryComparison {
    let bond_length_jsd = generated
        .bonds
        .iter()
        .map(|(k, h)| {
            let d = reference.bonds.get(k).and_then(|r| jsd(&h.counts, &r.counts).ok());
            (k.clone(), d)
        })
        .collect();
    GeometryComparison {
        bond_length_jsd,
        bond_angle_jsd: jsd(&generated.angles.counts, &reference.angles.counts).ok(),
        ring_sizes_generated: percentages(&generated.rings),
        ring_sizes_reference: percentages(&reference.rings),
        generated,
        reference,
    }
}

/// The metrics without wall-clock fields, which go to `timing.json`.
fn deterministic_metrics(report: &EvalReport) -> anyhow::Result<serde_json::Value> {
    let mut v = serde_json::to_value(report)?;
    if let Some(map) = v.as_object_mut() {
        map.remove("wall_clock_secs");
    }
    Ok(v)
}

pub fn run(args: EvalArgs) -> anyhow::Result<()> {
    let config = args.common.load()?;
    config.validate()?;
    let samples_path = run_file(args.samples.as_deref(), &config, "sample", SAMPLES_FILE);
    let text = std::fs::read_to_string(&samples_path).with_context(|| format!("reading {}", samples_path.display()))?;
    let file: SampleFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", samples_path.display()))?;
    let dir = match args.data.as_deref() {
        Some(p) => resolve(p),
        None if !file.data.is_empty() => PathBuf::from(&file.data),
        None => data_dir(None, &config),
    };
    let data = Dataset::load(&dir)?;
    let run = RunDir::create(&config, "eval", args.common.run.as_deref(), &[samples_path.as_path(), dir.as_path()])?;

    let training: HashSet<u64> = data.complexes.iter().map(|c| molecule_hash(&c.ligand())).collect();
    let samples = file
        .samples
        .iter()
        .map(|r| Ok((r.context, r.state()?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut report = evaluate_batch(&samples, &data.contexts, &training)?;
    report.steps = file.steps;
    report.evaluations = file.samples.iter().map(|r| r.evaluations).sum();

    let generated: Vec<Vec<Atom>> = file
        .samples
        .iter()
        .filter_map(|r| r.atoms.as_ref().map(|a| data.contexts[r.context].ligand_with(a)))
        .collect();
    let reference: Vec<Vec<Atom>> = data.complexes.iter().map(|c| c.ligand()).collect();
    let geometry = compare(bond_geometry_histograms(&generated), bond_geometry_histograms(&reference));

    run.write_json(
        "report.json",
        &Report {
            samples: samples.len(),
            steps: file.steps,
            evaluations: report.evaluations,
            metrics: deterministic_metrics(&report)?,
            geometry,
        },
    )?;
    info!(
        "validity {:.3}, connectivity {:.3}, diversity {:.3}, novelty {:.3}, clashes {:.3}",
        report.validity_rate, report.connectivity.mean, report.diversity.mean, report.novelty.mean, report.clashes_mean
    );
    Ok(())
}
