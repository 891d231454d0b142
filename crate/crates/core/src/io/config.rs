use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::consistency::{NoiseSchedule, TrainerConfig};
use crate::geometry::SynthParams;
use crate::model::DenoiserConfig;
use crate::rl::{RewardKind, RlConfig};
use crate::sampling::{Renoise, ScoreMode};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub count: usize,
    pub synth: SynthParams,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { count: 500, synth: SynthParams::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: u64,
    pub trainer: TrainerConfig,
    /// Fixed draws used to track the loss.
    pub eval_draws: usize,
    pub log_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { iterations: 2000, trainer: TrainerConfig::default(), eval_draws: 128, log_every: 100 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub steps: usize,
    pub metric_start: usize,
    pub score: ScoreMode,
    pub renoise: Renoise,
    pub contexts: usize,
    pub samples_per_context: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { steps: 50, metric_start: 1, score: ScoreMode::Default, renoise: Renoise::AsPrinted, contexts: 8, samples_per_context: 4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSection {
    pub reward: RewardKind,
    pub iterations: u64,
    pub contexts: usize,
    /// Sampled molecules per context when comparing before and after.
    pub eval_samples: usize,
    pub policy: RlConfig,
}

impl Default for RlSection {
    fn default() -> Self {
        Self { reward: RewardKind::Affinity, iterations: 200, contexts: 8, eval_samples: 8, policy: RlConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub cm_steps: usize,
    pub ode_steps: usize,
    pub contexts: usize,
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self { cm_steps: 50, ode_steps: 500, contexts: 2, repeats: 1 }
    }
}

/// Locations relative to the output root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: String,
    pub runs: String,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self { data: "data".into(), runs: "runs".into() }
    }
}

/// Everything a run depends on besides its input files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: DenoiserConfig,
    pub schedule: NoiseSchedule,
    pub data: DataSection,
    pub train: TrainSection,
    pub sample: SampleSection,
    pub rl: RlSection,
    pub bench: BenchSection,
    pub paths: PathsSection,
}

fn field(name: &str, message: impl Into<String>) -> FormatError {
    FormatError::Config { field: name.into(), message: message.into() }
}

fn nested(name: &str, r: Result<(), Error>) -> Result<(), FormatError> {
    r.map_err(|e| field(name, e.to_string()))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        serde_json::from_str(text).map_err(|e| FormatError::json(&e))
    }

    /// Canonical pretty JSON, as written into run directories.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).unwrap_or_default();
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        nested("model", self.model.validate())?;
        nested("schedule", self.schedule.validate())?;
        nested("data.synth", self.data.synth.validate())?;
        if self.data.count == 0 {
            return Err(field("data.count", "must be at least 1"));
        }
        nested("train.trainer", self.train.trainer.validate())?;
        if self.train.log_every == 0 {
            return Err(field("train.log_every", "must be at least 1"));
        }
        let s = &self.sample;
        if s.steps == 0 {
            return Err(field("sample.steps", "must be at least 1"));
        }
        let last = s.steps.saturating_sub(1).max(1);
        if s.metric_start < 1 || s.metric_start > last {
            return Err(field("sample.metric_start", format!("must be in 1..={last}, got {}", s.metric_start)));
        }
        if s.contexts == 0 || s.samples_per_context == 0 {
            return Err(field("sample.contexts", "contexts and samples_per_context must be at least 1"));
        }
        nested("rl.policy", self.rl.policy.validate())?;
        if self.rl.contexts == 0 {
            return Err(field("rl.contexts", "must be at least 1"));
        }
        if self.rl.eval_samples == 0 {
            return Err(field("rl.eval_samples", "must be at least 1"));
        }
        if self.bench.cm_steps == 0 {
            return Err(field("bench.cm_steps", "must be at least 1"));
        }
        if self.bench.ode_steps == 0 {
            return Err(field("bench.ode_steps", "must be at least 1"));
        }
        if self.bench.contexts == 0 || self.bench.repeats == 0 {
            return Err(field("bench.contexts", "contexts and repeats must be at least 1"));
        }
        Ok(())
    }
}
