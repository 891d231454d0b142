use serde::{Deserialize, Serialize};

use super::Summary;

/// One sampling run of a method on one complex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRun {
    pub method: String,
    pub wall_clock_secs: f64,
    pub evaluations: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub runs: usize,
    pub wall_clock: Summary,
    pub evaluations: f64,
    pub steps: usize,
    /// Baseline mean wall-clock over this method's.
    pub speedup: Option<f64>,
    /// Baseline evaluations over this method's.
    pub evaluation_ratio: Option<f64>,
}

/// One row per method, in order of first appearance, with ratios against
/// `baseline` when it is present.
pub fn timing_report(runs: &[TimingRun], baseline: &str) -> Vec<TimingRow> {
    let mut methods: Vec<&str> = Vec::new();
    for r in runs {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut rows: Vec<TimingRow> = methods
        .iter()
        .map(|&m| {
            let mine: Vec<&TimingRun> = runs.iter().filter(|r| r.method == m).collect();
            let secs: Vec<f64> = mine.iter().map(|r| r.wall_clock_secs).collect();
            TimingRow {
                method: m.to_string(),
                runs: mine.len(),
                wall_clock: Summary::of(&secs),
                evaluations: mine.iter().map(|r| r.evaluations as f64).sum::<f64>() / mine.len() as f64,
                steps: mine[0].steps,
                speedup: None,
                evaluation_ratio: None,
            }
        })
        .collect();
    if let Some(base) = rows.iter().find(|r| r.method == baseline).cloned() {
        for r in &mut rows {
            r.speedup = Some(base.wall_clock.mean / r.wall_clock.mean);
            r.evaluation_ratio = Some(base.evaluations / r.evaluations);
        }
    }
    rows
}
