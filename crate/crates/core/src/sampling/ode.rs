use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{center, frobenius, prior_sample, ConsistencyFn, Counted, SampleResult};
use crate::autodiff::Tensor;
use crate::consistency::NoiseSchedule;
use crate::geometry::{center_all, ScaffoldState};
use crate::Error;

/// Magnitude above which the ODE state counts as diverged.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeSolver {
    Euler,
    /// Second-order Heun; the final step (to ε) is plain Euler.
    Heun,
}

impl OdeSolver {
    /// Denoiser evaluations for `steps` integration steps.
    pub fn evaluations(self, steps: usize) -> usize {
        match self {
            OdeSolver::Euler => steps,
            OdeSolver::Heun => (2 * steps).saturating_sub(1),
        }
    }
}

/// Score estimate `(D(Z, t) − Z) / t²`, with the coordinate block CoM-projected.
pub fn score_from_denoiser<F: ConsistencyFn + ?Sized>(
    f: &F,
    state: &ScaffoldState,
    t: f64,
) -> Result<(Tensor, Tensor), Error> {
    if !(t > 0.0) {
        return Err(Error::Invalid(format!("score needs t > 0, got {t}")));
    }
    let d = f.apply(state, t)?;
    Ok(score_from(&d, state, t))
}

fn score_from(d: &ScaffoldState, state: &ScaffoldState, t: f64) -> (Tensor, Tensor) {
    let inv = 1.0 / (t * t);
    let mut sx = d.x.zip_map(&state.x, |a, b| (a - b) * inv);
    center_all(&mut sx);
    let sh = d.h.zip_map(&state.h, |a, b| (a - b) * inv);
    (sx, sh)
}

/// `dZ/dt = −t · score(Z, t)`.
fn drift<F: ConsistencyFn + ?Sized>(
    f: &Counted<'_, F>,
    state: &ScaffoldState,
    t: f64,
) -> Result<(Tensor, Tensor), Error> {
    let d = f.apply(state, t)?;
    let (mut sx, mut sh) = score_from(&d, state, t);
    sx.scale_in_place(-t);
    sh.scale_in_place(-t);
    Ok((sx, sh))
}

fn step(state: &ScaffoldState, dt: f64, d: &(Tensor, Tensor)) -> ScaffoldState {
    let mut out = state.clone();
    out.x.axpy(dt, &d.0);
    out.h.axpy(dt, &d.1);
    out
}

/// Integrates the probability-flow ODE from `σ_max` to `ε` over a
/// `steps + 1`-point Karras grid, using `f` as the denoiser.
pub fn pf_ode_sample<F, R>(
    f: &F,
    schedule: &NoiseSchedule,
    atoms: usize,
    steps: usize,
    solver: OdeSolver,
    rng: &mut R,
) -> Result<SampleResult, Error>
where
    F: ConsistencyFn + ?Sized,
    R: Rng + ?Sized,
{
    if steps == 0 {
        return Err(Error::Invalid("ODE sampling needs at least one step".into()));
    }
    if atoms == 0 {
        return Err(Error::EmptyScaffold);
    }
    let start = Instant::now();
    let f = Counted::new(f);
    let grid = schedule.karras_grid(steps + 1)?;
    let mut z = prior_sample(rng, atoms, grid[0]);
    for i in 0..steps {
        let (t, t_next) = (grid[i], grid[i + 1]);
        let dt = t_next - t;
        let d1 = drift(&f, &z, t)?;
        let euler = step(&z, dt, &d1);
        z = if solver == OdeSolver::Heun && i + 1 < steps {
            let d2 = drift(&f, &euler, t_next)?;
            let avg = (d1.0.zip_map(&d2.0, |a, b| 0.5 * (a + b)), d1.1.zip_map(&d2.1, |a, b| 0.5 * (a + b)));
            step(&z, dt, &avg)
        } else {
            euler
        };
        if !z.all_finite() || frobenius(&z) > DIVERGENCE_NORM {
            return Err(Error::Diverged { step: i + 1 });
        }
    }
    let z = center(z);
    Ok(SampleResult {
        best: z.clone(),
        final_state: z,
        best_step: steps,
        scores: Vec::new(),
        evaluations: f.calls.get(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
