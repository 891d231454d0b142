use std::time::Instant;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{add_scaled, center, prior_sample, ConsistencyFn, Counted, SampleResult};
use crate::consistency::{sample_noise, NoiseSchedule};
use crate::geometry::{ScaffoldState, LIGAND_ELEMENTS};
use crate::Error;

/// Noise scale used when re-noising between consistency steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Renoise {
    /// `sqrt(τ_n − τ_{n+1})`.
    #[default]
    AsPrinted,
    /// `sqrt(τ_n² − ε²)`.
    VarianceDifference,
}

impl Renoise {
    pub fn scale(self, tau: f64, tau_next: f64, epsilon: f64) -> f64 {
        match self {
            Renoise::AsPrinted => (tau - tau_next).max(0.0).sqrt(),
            Renoise::VarianceDifference => (tau * tau - epsilon * epsilon).max(0.0).sqrt(),
        }
    }
}

/// Time points for multistep sampling: the initial time `T` followed by
/// `τ_1 > … > τ_{N−1}`; `τ_N` is taken to be `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub t_max: f64,
    pub times: Vec<f64>,
    pub epsilon: f64,
    /// First loop step (1-based) whose output is scored.
    pub metric_start: usize,
    pub renoise: Renoise,
}

impl SamplingPlan {
    /// `steps` consistency evaluations on the interior of an `steps + 1`-point Karras grid.
    pub fn karras(schedule: &NoiseSchedule, steps: usize, metric_start: usize, renoise: Renoise) -> Result<Self, Error> {
        if steps == 0 {
            return Err(Error::Invalid("sampling needs at least one step".into()));
        }
        let grid = schedule.karras_grid(steps + 1)?;
        let plan = Self {
            t_max: schedule.sigma_max,
            times: grid[1..steps].to_vec(),
            epsilon: schedule.epsilon,
            metric_start,
            renoise,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Total consistency evaluations, `N`.
    pub fn steps(&self) -> usize {
        self.times.len() + 1
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Invalid(format!("sampling plan: {m}")));
        if !(self.epsilon > 0.0 && self.t_max > self.epsilon) {
            return bad(format!("need 0 < epsilon < T, got {} and {}", self.epsilon, self.t_max));
        }
        let mut prev = self.t_max;
        for (i, &t) in self.times.iter().enumerate() {
            if !(t < prev && t >= self.epsilon) {
                return bad(format!("time {} ({t}) breaks the strictly decreasing order within [epsilon, T]", i + 1));
            }
            prev = t;
        }
        let last = self.times.len().max(1);
        if self.metric_start < 1 || self.metric_start > last {
            return bad(format!("metric_start must be in 1..={last}, got {}", self.metric_start));
        }
        Ok(())
    }
}

/// Multistep consistency sampling, scoring every output from step
/// `metric_start` onward and returning the best-scoring one (earliest on
/// ties). With `score = None` the final sample is returned. A one-step
/// plan scores its only output.
pub fn multistep_metric_sample<F, S, R>(
    f: &F,
    plan: &SamplingPlan,
    atoms: usize,
    score: Option<S>,
    rng: &mut R,
) -> Result<SampleResult, Error>
where
    F: ConsistencyFn + ?Sized,
    S: Fn(&ScaffoldState) -> Result<f64, Error>,
    R: Rng + ?Sized,
{
    plan.validate()?;
    if atoms == 0 {
        return Err(Error::EmptyScaffold);
    }
    let start = Instant::now();
    let f = Counted::new(f);
    let init = prior_sample(rng, atoms, plan.t_max);
    let mut z = center(f.apply(&init, plan.t_max)?);

    let mut scores = Vec::new();
    let mut best: Option<(usize, f64, ScaffoldState)> = None;
    let mut consider = |step: usize, z: &ScaffoldState, scores: &mut Vec<(usize, f64)>| {
        let Some(score) = score.as_ref() else { return };
        let s = match score(z) {
            Ok(v) if !v.is_nan() => v,
            Ok(_) | Err(_) => {
                warn!("candidate at step {step} could not be scored; treated as -inf");
                f64::NEG_INFINITY
            }
        };
        scores.push((step, s));
        if best.as_ref().is_none_or(|(_, b, _)| s > *b) {
            best = Some((step, s, z.clone()));
        }
    };

    if plan.times.is_empty() {
        consider(0, &z, &mut scores);
    }
    for (i, &tau) in plan.times.iter().enumerate() {
        let n = i + 1;
        let next = plan.times.get(i + 1).copied().unwrap_or(plan.epsilon);
        let noise = sample_noise(rng, atoms, LIGAND_ELEMENTS);
        let noisy = add_scaled(&z, plan.renoise.scale(tau, next, plan.epsilon), &noise);
        z = center(f.apply(&noisy, tau)?);
        if n >= plan.metric_start {
            consider(n, &z, &mut scores);
        }
    }
    let (best_step, best_state) = match best {
        Some((step, _, state)) => (step, state),
        None => (plan.times.len(), z.clone()),
    };
    Ok(SampleResult {
        best: best_state,
        final_state: z,
        best_step,
        scores,
        evaluations: f.calls.get(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
