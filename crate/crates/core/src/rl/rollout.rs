use rand::Rng;

use super::{gaussian_logprob, RewardKind, RewardTerms, RlConfig};
use crate::autodiff::Params;
use crate::consistency::{consistency_predict, sample_noise, NoiseSchedule};
use crate::geometry::{Atom, ScaffoldState, LIGAND_ELEMENTS};
use crate::model::{Denoiser, PreparedContext};
use crate::sampling::{prior_sample, Renoise, SamplingPlan};
use crate::Error;

/// A context the policy is fine-tuned on, with the reference scaffold its
/// rewards are measured against.
#[derive(Clone, Debug)]
pub struct RolloutContext {
    pub context: PreparedContext,
    pub reference: Vec<Atom>,
    pub atoms: usize,
}

/// `(Z̃_τ, τ, context index)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpState {
    pub state: ScaffoldState,
    pub time: f64,
    pub context: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub state: MdpState,
    /// The next noisy scaffold.
    pub action: ScaffoldState,
    pub std: f64,
    /// Log-probability under the behaviour policy (0 when `std` is 0).
    pub log_prob: f64,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub context: usize,
    pub steps: Vec<TrajectoryStep>,
    /// Consistency output at the last state.
    pub terminal: ScaffoldState,
    pub reward: RewardTerms,
}

/// State times `τ_0 = T > τ_1 > … > τ_H` and the policy std of each of the
/// `H` actions. Action `t` is the re-noised consistency output entering
/// time `τ_{t+1}`, with the same noise scale the multistep sampler uses.
pub fn policy_schedule(schedule: &NoiseSchedule, horizon: usize, renoise: Renoise) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let plan = SamplingPlan::karras(schedule, horizon + 1, 1, renoise)?;
    let mut times = vec![plan.t_max];
    times.extend(&plan.times);
    let stds = (0..horizon)
        .map(|t| {
            let next = plan.times.get(t + 1).copied().unwrap_or(plan.epsilon);
            renoise.scale(plan.times[t], next, plan.epsilon)
        })
        .collect();
    Ok((times, stds))
}

/// Runs `samples` stochastic multistep rollouts per context and scores
/// each terminal sample.
#[allow(clippy::too_many_arguments)]
pub fn rollout_trajectories<R: Rng + ?Sized>(
    net: &Denoiser,
    params: &Params,
    schedule: &NoiseSchedule,
    config: &RlConfig,
    contexts: &[RolloutContext],
    samples: usize,
    reward: RewardKind,
    rng: &mut R,
) -> Result<Vec<Trajectory>, Error> {
    let (times, stds) = policy_schedule(schedule, config.horizon, config.renoise)?;
    let mut out = Vec::with_capacity(contexts.len() * samples);
    for (c, rc) in contexts.iter().enumerate() {
        let mol = rc.context.context();
        let reference = mol.ligand_with(&rc.reference);
        for _ in 0..samples {
            let mut state = prior_sample(rng, rc.atoms, times[0]);
            let mut steps = Vec::with_capacity(config.horizon);
            for (t, &base_std) in stds.iter().enumerate() {
                let mean = consistency_predict(net, params, &state, times[t], &rc.context, schedule)?;
                let std = base_std * config.noise_scale;
                let (nx, nh) = sample_noise(rng, rc.atoms, LIGAND_ELEMENTS);
                let mut action = mean.clone();
                action.x.axpy(std, &nx);
                action.h.axpy(std, &nh);
                let log_prob = if std > 0.0 {
                    gaussian_logprob(&[&action.x, &action.h], &[&mean.x, &mean.h], std)?
                } else {
                    0.0
                };
                steps.push(TrajectoryStep {
                    state: MdpState { state, time: times[t], context: c },
                    action: action.clone(),
                    std,
                    log_prob,
                    step: t,
                });
                state = action;
            }
            let terminal = consistency_predict(net, params, &state, times[config.horizon], &rc.context, schedule)?;
            let molecule = mol.ligand_with(&terminal.to_atoms());
            let terms = reward.evaluate(&molecule, &reference, &mol.pocket);
            out.push(Trajectory { context: c, steps, terminal, reward: terms });
        }
    }
    Ok(out)
}
