//! Policy-gradient fine-tuning of the multistep consistency sampler.
//!
//! Each sampling step is an MDP transition: the state is the current noisy
//! scaffold and time, the action is the next noisy scaffold, drawn from an
//! isotropic Gaussian centred on the consistency output. Terminal samples
//! are scored by a proxy reward, rewards are standardised per context, and
//! the policy is updated with the clipped surrogate objective. There is no
//! KL term.

mod ppo;
mod reward;
mod rollout;

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use ppo::{clipped_surrogate, policy_gradient, ppo_clipped_update, IterationRecord, RlTrainer, UpdateDiagnostics};
pub use reward::{proxy_pocket_energy, reward_affinity, reward_clash, RewardKind, RewardTerms};
pub use rollout::{policy_schedule, rollout_trajectories, MdpState, RolloutContext, Trajectory, TrajectoryStep};

use crate::autodiff::{AdamConfig, Tensor};
use crate::sampling::Renoise;
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub clip_range: f64,
    pub inner_epochs: usize,
    pub minibatches: usize,
    pub max_grad_norm: f64,
    pub adam: AdamConfig,
    /// Rewards kept per context for normalisation.
    pub buffer_size: usize,
    /// Rewards a context needs before its trajectories enter updates.
    pub min_count: usize,
    pub samples_per_context: usize,
    /// Actions per trajectory; the terminal sample takes one more evaluation.
    pub horizon: usize,
    pub renoise: Renoise,
    /// Multiplier on the policy std; 0 gives deterministic rollouts with no
    /// log-probabilities (diagnostics only).
    pub noise_scale: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            clip_range: 1e-4,
            inner_epochs: 1,
            minibatches: 1,
            max_grad_norm: 10.0,
            adam: AdamConfig { lr: 1e-5, ..AdamConfig::default() },
            buffer_size: 32,
            min_count: 16,
            samples_per_context: 4,
            horizon: 5,
            renoise: Renoise::AsPrinted,
            noise_scale: 1.0,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Invalid(format!("rl config: {m}")));
        if !(self.clip_range > 0.0 && self.clip_range < 1.0) {
            return bad(format!("clip_range must be in (0, 1), got {}", self.clip_range));
        }
        if self.inner_epochs == 0 || self.minibatches == 0 || self.samples_per_context == 0 {
            return bad("inner_epochs, minibatches and samples_per_context must be positive".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.buffer_size == 0 || self.min_count > self.buffer_size {
            return bad(format!(
                "need 0 < buffer_size and min_count <= buffer_size, got {} and {}",
                self.buffer_size, self.min_count
            ));
        }
        if !(self.max_grad_norm > 0.0) || !(self.adam.lr >= 0.0) || !(self.noise_scale >= 0.0) {
            return bad("max_grad_norm must be positive, lr and noise_scale non-negative".into());
        }
        Ok(())
    }
}

/// Log-density of `action` under `N(mean, std² I)`, summed over every entry.
pub fn gaussian_logprob(action: &[&Tensor], mean: &[&Tensor], std: f64) -> Result<f64, Error> {
    if !(std > 0.0) {
        return Err(Error::Invalid(format!("policy std must be positive, got {std}")));
    }
    let mut sq = 0.0;
    let mut k = 0usize;
    for (a, m) in action.iter().zip(mean) {
        if a.shape() != m.shape() {
            return Err(Error::Invalid(format!(
                "action shape {:?} does not match mean shape {:?}",
                a.shape(),
                m.shape()
            )));
        }
        sq += a.data().iter().zip(m.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        k += a.len();
    }
    let k = k as f64;
    Ok(-0.5 * sq / (std * std) - k * std.ln() - 0.5 * k * (2.0 * PI).ln())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Standardises rewards within each group (population std, `+1e-8`).
/// A group with a single reward maps to zero.
pub fn normalize_rewards_per_context(groups: &[Vec<f64>]) -> Vec<Vec<f64>> {
    groups
        .iter()
        .map(|g| {
            if g.len() < 2 {
                return vec![0.0; g.len()];
            }
            let (mean, std) = mean_std(g);
            g.iter().map(|r| (r - mean) / (std + 1e-8)).collect()
        })
        .collect()
}

/// Recent rewards per context, used as normalisation statistics.
#[derive(Clone, Debug, Default)]
pub struct RewardBuffer {
    capacity: usize,
    min_count: usize,
    per_context: BTreeMap<usize, VecDeque<f64>>,
}

impl RewardBuffer {
    pub fn new(capacity: usize, min_count: usize) -> Self {
        Self { capacity, min_count, per_context: BTreeMap::new() }
    }

    pub fn push(&mut self, context: usize, reward: f64) {
        let q = self.per_context.entry(context).or_default();
        q.push_back(reward);
        while q.len() > self.capacity {
            q.pop_front();
        }
    }

    pub fn count(&self, context: usize) -> usize {
        self.per_context.get(&context).map_or(0, VecDeque::len)
    }

    /// `(r − mean) / (std + 1e-8)` against the context's buffer, or `None`
    /// while the context has fewer than `min_count` rewards.
    pub fn advantage(&self, context: usize, reward: f64) -> Option<f64> {
        let q = self.per_context.get(&context)?;
        if q.len() < self.min_count.max(1) {
            return None;
        }
        let values: Vec<f64> = q.iter().copied().collect();
        let (mean, std) = mean_std(&values);
        Some((reward - mean) / (std + 1e-8))
    }
}
