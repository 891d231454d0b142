//! Multistep consistency sampling with metric-based selection, the
//! probability-flow ODE baseline, and mask-based inpainting.

mod inpaint;
mod multistep;
mod ode;

use std::cell::Cell;

use serde::{Deserialize, Serialize};

pub use inpaint::{inpaint_sample, InpaintPlan};
pub use multistep::{multistep_metric_sample, Renoise, SamplingPlan};
pub use ode::{pf_ode_sample, score_from_denoiser, OdeSolver};

use crate::autodiff::{Params, Tensor};
use crate::consistency::{consistency_predict, NoiseSchedule};
use crate::geometry::{connectivity_and_valence, count_clashes, MolecularContext, ScaffoldState};
use crate::model::{Denoiser, PreparedContext};
use crate::Error;

/// A map `(Z_t, t) -> estimate of Z_ε`. The trained consistency model is
/// the main implementation; analytic closures serve as test oracles.
pub trait ConsistencyFn {
    fn apply(&self, state: &ScaffoldState, t: f64) -> Result<ScaffoldState, Error>;
}

impl<F> ConsistencyFn for F
where
    F: Fn(&ScaffoldState, f64) -> Result<ScaffoldState, Error>,
{
    fn apply(&self, state: &ScaffoldState, t: f64) -> Result<ScaffoldState, Error> {
        self(state, t)
    }
}

/// The trained consistency function for one context.
pub struct ModelFn<'a> {
    pub net: &'a Denoiser,
    pub params: &'a Params,
    pub context: &'a PreparedContext,
    pub schedule: &'a NoiseSchedule,
}

impl ConsistencyFn for ModelFn<'_> {
    fn apply(&self, state: &ScaffoldState, t: f64) -> Result<ScaffoldState, Error> {
        consistency_predict(self.net, self.params, state, t, self.context, self.schedule)
    }
}

/// Wraps a [`ConsistencyFn`] and counts calls.
pub(crate) struct Counted<'a, F: ?Sized> {
    pub inner: &'a F,
    pub calls: Cell<usize>,
}

impl<'a, F: ConsistencyFn + ?Sized> Counted<'a, F> {
    pub fn new(inner: &'a F) -> Self {
        Self { inner, calls: Cell::new(0) }
    }

    pub fn apply(&self, state: &ScaffoldState, t: f64) -> Result<ScaffoldState, Error> {
        self.calls.set(self.calls.get() + 1);
        self.inner.apply(state, t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleResult {
    pub best: ScaffoldState,
    pub final_state: ScaffoldState,
    /// Index of the loop step that produced `best` (0 = the initial one-step output).
    pub best_step: usize,
    /// `(step, score)` for every scored candidate.
    pub scores: Vec<(usize, f64)>,
    pub evaluations: usize,
    pub wall_clock_secs: f64,
}

/// Candidate score used for metric-based selection:
/// `connected + valence_ok_fraction − 0.1 · clashes` on the full ligand.
pub fn custom_score(state: &ScaffoldState, context: &MolecularContext) -> f64 {
    let ligand = context.ligand_with(&state.to_atoms());
    let (connected, valence) = connectivity_and_valence(&ligand);
    let clashes = count_clashes(&ligand, &context.pocket);
    f64::from(u8::from(connected)) + valence - 0.1 * clashes as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Off,
    #[default]
    Default,
}

/// Draws `(x, h) ~ N(0, t²I)` with the coordinate noise CoM-projected.
pub fn prior_sample<R: rand::Rng + ?Sized>(rng: &mut R, atoms: usize, t: f64) -> ScaffoldState {
    let (mut x, mut h) = crate::consistency::sample_noise(rng, atoms, crate::geometry::LIGAND_ELEMENTS);
    x.scale_in_place(t);
    h.scale_in_place(t);
    ScaffoldState { x, h }
}

fn frobenius(state: &ScaffoldState) -> f64 {
    (state.x.norm_sq() + state.h.norm_sq()).sqrt()
}

fn center(mut state: ScaffoldState) -> ScaffoldState {
    crate::geometry::center_all(&mut state.x);
    state
}

fn add_scaled(state: &ScaffoldState, scale: f64, delta: &(Tensor, Tensor)) -> ScaffoldState {
    let mut out = state.clone();
    out.x.axpy(scale, &delta.0);
    out.h.axpy(scale, &delta.1);
    out
}

#[cfg(test)]
mod tests;
