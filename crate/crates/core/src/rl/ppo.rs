use log::{debug, warn};

use super::{gaussian_logprob, rollout_trajectories, RewardBuffer, RewardKind, RlConfig, RolloutContext, Trajectory};
use crate::autodiff::{clip_global_norm, Adam, Graph, Params, Tensor};
use crate::consistency::{consistency_apply, NoiseSchedule};
use crate::model::Denoiser;
use crate::rng::substream_indexed;
use crate::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateDiagnostics {
    pub mean_ratio: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Fraction of steps whose ratio left `[1 − clip, 1 + clip]`.
    pub clip_fraction: f64,
    pub surrogate: f64,
    /// Trajectories discarded for a non-finite ratio.
    pub dropped: usize,
    pub steps: usize,
    pub grad_norm: f64,
    pub updates: usize,
}

/// `min(A·ρ, A·clip(ρ))` and its derivative with respect to `ρ`.
pub fn clipped_surrogate(advantage: f64, ratio: f64, clip: f64) -> (f64, f64) {
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
    let (a, b) = (advantage * ratio, advantage * clipped);
    if a <= b {
        (a, advantage)
    } else {
        (b, 0.0)
    }
}

#[derive(Default)]
struct Accum {
    ratio_sum: f64,
    min_ratio: f64,
    max_ratio: f64,
    clipped: usize,
    surrogate: f64,
    dropped: usize,
    steps: usize,
}

/// Gradient of the negated mean clipped surrogate over `batch`, with
/// advantages given per trajectory.
fn surrogate_gradient(
    net: &Denoiser,
    schedule: &NoiseSchedule,
    params: &Params,
    batch: &[(&Trajectory, f64)],
    contexts: &[RolloutContext],
    clip: f64,
    acc: &mut Accum,
) -> Result<Vec<Tensor>, Error> {
    let mut total: Vec<Tensor> = params.tensors().iter().map(Tensor::zeros_like).collect();
    let count: usize = batch.iter().map(|(t, _)| t.steps.len()).sum();
    let norm = 1.0 / count.max(1) as f64;
    for &(traj, adv) in batch {
        let ctx = &contexts[traj.context].context;
        let mut grads: Vec<Tensor> = params.tensors().iter().map(Tensor::zeros_like).collect();
        let mut ratios = Vec::with_capacity(traj.steps.len());
        let mut objective = 0.0;
        let mut finite = true;
        for step in &traj.steps {
            if !(step.std > 0.0) {
                return Err(Error::Invalid("policy update needs stochastic rollouts (std > 0)".into()));
            }
            let mut g = Graph::new();
            let p = g.bind(params, true);
            let (mx, mh) = consistency_apply(&mut g, net, &p, &step.state.state, step.state.time, ctx, schedule)?;
            let log_prob = gaussian_logprob(&[&step.action.x, &step.action.h], &[g.value(mx), g.value(mh)], step.std)?;
            let ratio = (log_prob - step.log_prob).exp();
            if !ratio.is_finite() {
                finite = false;
                break;
            }
            ratios.push(ratio);
            let (obj, weight) = clipped_surrogate(adv, ratio, clip);
            objective += obj;
            if weight == 0.0 {
                continue;
            }
            // d(−w·ρ)/dθ = −w·ρ·∇log π
            let ax = g.constant(step.action.x.clone());
            let ah = g.constant(step.action.h.clone());
            let dx = g.sub(ax, mx)?;
            let dh = g.sub(ah, mh)?;
            let sx = g.mul(dx, dx)?;
            let sh = g.mul(dh, dh)?;
            let sx = g.sum(sx);
            let sh = g.sum(sh);
            let sq = g.add(sx, sh)?;
            let lp = g.scale(sq, -0.5 / (step.std * step.std));
            let loss = g.scale(lp, -weight * ratio * norm);
            let step_grads = g.backward(loss)?.for_params(&p, params);
            for (a, b) in grads.iter_mut().zip(&step_grads) {
                a.axpy(1.0, b);
            }
        }
        if !finite || !grads.iter().all(Tensor::all_finite) {
            warn!("trajectory for context {} dropped: non-finite importance ratio", traj.context);
            acc.dropped += 1;
            continue;
        }
        for r in ratios {
            if acc.steps == 0 {
                acc.min_ratio = r;
                acc.max_ratio = r;
            }
            acc.ratio_sum += r;
            acc.min_ratio = acc.min_ratio.min(r);
            acc.max_ratio = acc.max_ratio.max(r);
            acc.clipped += usize::from((r - 1.0).abs() > clip);
            acc.steps += 1;
        }
        acc.surrogate += objective * norm;
        for (a, b) in total.iter_mut().zip(&grads) {
            a.axpy(1.0, b);
        }
    }
    Ok(total)
}

/// Gradient of the negated clipped surrogate for one minibatch, without
/// applying it.
pub fn policy_gradient(
    net: &Denoiser,
    schedule: &NoiseSchedule,
    params: &Params,
    batch: &[(&Trajectory, f64)],
    contexts: &[RolloutContext],
    clip: f64,
) -> Result<Vec<Tensor>, Error> {
    surrogate_gradient(net, schedule, params, batch, contexts, clip, &mut Accum::default())
}

/// Clipped-surrogate policy update. Log-probabilities in `batch` must have
/// been recorded under the parameters the rollouts used. The batch is split
/// into `config.minibatches` contiguous minibatches per inner epoch; each
/// gets one clipped-norm Adam step.
#[allow(clippy::too_many_arguments)]
pub fn ppo_clipped_update(
    net: &Denoiser,
    schedule: &NoiseSchedule,
    params: &mut Params,
    adam: &mut Adam,
    batch: &[(&Trajectory, f64)],
    contexts: &[RolloutContext],
    config: &RlConfig,
) -> Result<UpdateDiagnostics, Error> {
    config.validate()?;
    let mut acc = Accum::default();
    let mut grad_norm = 0.0;
    let mut updates = 0;
    if !batch.is_empty() {
        let k = config.minibatches.min(batch.len());
        let size = batch.len().div_ceil(k);
        for _ in 0..config.inner_epochs {
            for mb in batch.chunks(size) {
                let mut grads = surrogate_gradient(net, schedule, params, mb, contexts, config.clip_range, &mut acc)?;
                grad_norm += clip_global_norm(&mut grads, config.max_grad_norm);
                if adam.step(params, &grads) {
                    updates += 1;
                }
            }
        }
    }
    let steps = acc.steps.max(1) as f64;
    let passes = (config.inner_epochs * config.minibatches.min(batch.len()).max(1)) as f64;
    Ok(UpdateDiagnostics {
        mean_ratio: if acc.steps == 0 { 1.0 } else { acc.ratio_sum / steps },
        min_ratio: if acc.steps == 0 { 1.0 } else { acc.min_ratio },
        max_ratio: if acc.steps == 0 { 1.0 } else { acc.max_ratio },
        clip_fraction: acc.clipped as f64 / steps,
        surrogate: acc.surrogate / passes,
        dropped: acc.dropped,
        steps: acc.steps,
        grad_norm: grad_norm / passes,
        updates,
    })
}

/// One row of the fine-tuning log.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IterationRecord {
    pub iteration: u64,
    pub mean_reward: f64,
    pub mean_clashes: f64,
    pub mean_energy: f64,
    /// Trajectories whose context had enough buffered rewards to enter the update.
    pub trained: usize,
    pub update: UpdateDiagnostics,
}

impl IterationRecord {
    pub const CSV_HEADER: &'static str =
        "iteration,mean_reward,mean_clashes,mean_proxy_energy,clip_fraction,ratio_mean,ratio_min,ratio_max,trained,dropped";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.mean_reward,
            self.mean_clashes,
            self.mean_energy,
            self.update.clip_fraction,
            self.update.mean_ratio,
            self.update.min_ratio,
            self.update.max_ratio,
            self.trained,
            self.update.dropped
        )
    }
}

/// Rollout, per-context normalisation and update, repeated.
pub struct RlTrainer {
    pub net: Denoiser,
    pub schedule: NoiseSchedule,
    pub config: RlConfig,
    pub reward: RewardKind,
    pub params: Params,
    pub contexts: Vec<RolloutContext>,
    adam: Adam,
    buffer: RewardBuffer,
    iteration: u64,
    seed: u64,
}

impl RlTrainer {
    pub fn new(
        net: Denoiser,
        params: Params,
        schedule: NoiseSchedule,
        config: RlConfig,
        reward: RewardKind,
        contexts: Vec<RolloutContext>,
        seed: u64,
    ) -> Result<Self, Error> {
        config.validate()?;
        schedule.validate()?;
        net.check_params(&params)?;
        if contexts.is_empty() {
            return Err(Error::Invalid("fine-tuning needs at least one context".into()));
        }
        if !(config.noise_scale > 0.0) {
            return Err(Error::Invalid("fine-tuning needs noise_scale > 0".into()));
        }
        Ok(Self {
            adam: Adam::new(config.adam, &params),
            buffer: RewardBuffer::new(config.buffer_size, config.min_count),
            net,
            schedule,
            config,
            reward,
            params,
            contexts,
            iteration: 0,
            seed,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn iterate(&mut self) -> Result<IterationRecord, Error> {
        let mut rng = substream_indexed(self.seed, "rl-rollout", self.iteration);
        let trajectories = rollout_trajectories(
            &self.net,
            &self.params,
            &self.schedule,
            &self.config,
            &self.contexts,
            self.config.samples_per_context,
            self.reward,
            &mut rng,
        )?;
        for t in &trajectories {
            self.buffer.push(t.context, t.reward.reward);
        }
        let batch: Vec<(&Trajectory, f64)> = trajectories
            .iter()
            .filter_map(|t| self.buffer.advantage(t.context, t.reward.reward).map(|a| (t, a)))
            .collect();
        let update = ppo_clipped_update(
            &self.net,
            &self.schedule,
            &mut self.params,
            &mut self.adam,
            &batch,
            &self.contexts,
            &self.config,
        )?;
        let n = trajectories.len().max(1) as f64;
        let record = IterationRecord {
            iteration: self.iteration,
            mean_reward: trajectories.iter().map(|t| t.reward.reward).sum::<f64>() / n,
            mean_clashes: trajectories.iter().map(|t| t.reward.clashes as f64).sum::<f64>() / n,
            mean_energy: trajectories.iter().map(|t| t.reward.generated_energy).sum::<f64>() / n,
            trained: batch.len(),
            update,
        };
        debug!(
            "rl iteration {}: reward {:.4} clashes {:.3} clip {:.3}",
            record.iteration, record.mean_reward, record.mean_clashes, update.clip_fraction
        );
        self.iteration += 1;
        Ok(record)
    }
}
