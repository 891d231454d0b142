//! Batch metrics for generated scaffolds, geometry distributions and
//! sampler timing.

mod histograms;
mod timing;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use histograms::{bond_geometry_histograms, jsd, ring_sizes, GeometryHistograms, Histogram, BOND_PAIRS};
pub use timing::{timing_report, TimingRow, TimingRun};

use crate::geometry::{
    canonical_hash, count_clashes, tanimoto_dissimilarity, Atom, Fingerprint, MolGraph, MolecularContext, ScaffoldState,
};
use crate::Error;

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN, count: 0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt(), count: values.len() }
    }
}

/// Metrics over the samples generated for one context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextMetrics {
    pub context: usize,
    pub samples: usize,
    /// Samples with finite coordinates and features.
    pub decodable: usize,
    pub validity: f64,
    pub connectivity: f64,
    /// Mean pairwise Tanimoto dissimilarity; absent with fewer than two decodable samples.
    pub diversity: Option<f64>,
    pub novelty: f64,
    pub mean_clashes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_context: Vec<ContextMetrics>,
    /// Over all samples, undecodable ones counted invalid.
    pub validity_rate: f64,
    pub connectivity: Summary,
    pub diversity: Summary,
    pub novelty: Summary,
    pub clashes_mean: f64,
    pub clashes_median: f64,
    pub wall_clock_secs: f64,
    pub evaluations: usize,
    pub steps: usize,
}

/// A molecule is valid when every atom has a bond and no atom exceeds its valence.
pub fn is_valid(graph: &MolGraph) -> bool {
    !graph.is_empty() && (0..graph.len()).all(|i| graph.degree(i) > 0) && graph.valence_ok_fraction() == 1.0
}

/// Hash of the full ligand graph (scaffold plus functional groups), for
/// novelty checks against a training set.
pub fn molecule_hash(atoms: &[Atom]) -> u64 {
    canonical_hash(&MolGraph::from_atoms(atoms))
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Evaluates `(context index, scaffold)` samples. Chemistry metrics use the
/// full ligand and are computed per context, then summarised across
/// contexts; clash statistics are over all decodable molecules.
pub fn evaluate_batch(
    samples: &[(usize, ScaffoldState)],
    contexts: &[MolecularContext],
    training_hashes: &HashSet<u64>,
) -> Result<EvalReport, Error> {
    let mut groups: Vec<Vec<&ScaffoldState>> = vec![Vec::new(); contexts.len()];
    for (c, s) in samples {
        groups
            .get_mut(*c)
            .ok_or_else(|| Error::Invalid(format!("sample refers to context {c}, only {} given", contexts.len())))?
            .push(s);
    }
    let mut per_context = Vec::new();
    let mut valid_total = 0usize;
    let mut all_clashes = Vec::new();
    for (c, group) in groups.iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        let ctx = &contexts[c];
        let mut graphs = Vec::new();
        let mut valid = 0usize;
        let (mut connected, mut novel, mut clashes) = (0usize, 0usize, 0.0);
        for s in group.iter().filter(|s| s.all_finite()) {
            let ligand = ctx.ligand_with(&s.to_atoms());
            let graph = MolGraph::from_atoms(&ligand);
            valid += usize::from(is_valid(&graph));
            connected += usize::from(graph.is_connected());
            novel += usize::from(!training_hashes.contains(&canonical_hash(&graph)));
            let k = count_clashes(&ligand, &ctx.pocket) as f64;
            clashes += k;
            all_clashes.push(k);
            graphs.push(graph);
        }
        let decodable = graphs.len();
        let frac = |k: usize| if decodable == 0 { 0.0 } else { k as f64 / decodable as f64 };
        let fps: Vec<Fingerprint> = graphs.iter().map(Fingerprint::of).collect();
        let diversity = (decodable >= 2).then(|| {
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for i in 0..fps.len() {
                for j in i + 1..fps.len() {
                    sum += tanimoto_dissimilarity(&fps[i], &fps[j]);
                    pairs += 1;
                }
            }
            sum / pairs as f64
        });
        valid_total += valid;
        per_context.push(ContextMetrics {
            context: c,
            samples: group.len(),
            decodable,
            validity: valid as f64 / group.len() as f64,
            connectivity: frac(connected),
            diversity,
            novelty: frac(novel),
            mean_clashes: if decodable == 0 { 0.0 } else { clashes / decodable as f64 },
        });
    }
    let with_data: Vec<&ContextMetrics> = per_context.iter().filter(|m| m.decodable > 0).collect();
    let collect = |f: &dyn Fn(&ContextMetrics) -> Option<f64>| Summary::of(&with_data.iter().filter_map(|m| f(m)).collect::<Vec<_>>());
    let clashes_mean = if all_clashes.is_empty() { f64::NAN } else { all_clashes.iter().sum::<f64>() / all_clashes.len() as f64 };
    Ok(EvalReport {
        validity_rate: if samples.is_empty() { 0.0 } else { valid_total as f64 / samples.len() as f64 },
        connectivity: collect(&|m| Some(m.connectivity)),
        diversity: collect(&|m| m.diversity),
        novelty: collect(&|m| Some(m.novelty)),
        clashes_mean,
        clashes_median: median(&mut all_clashes),
        per_context,
        wall_clock_secs: 0.0,
        evaluations: 0,
        steps: 0,
    })
}

/// Ranks starting at 0, with tied values sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// `None` when the lengths differ, fewer than two values are given, or
/// either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 || a.iter().chain(b).any(|v| v.is_nan()) {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}
