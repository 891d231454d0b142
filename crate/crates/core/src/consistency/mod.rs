//! Consistency function, noise schedule, EMA target maintenance, and the
//! consistency-training loop.

mod train;

use serde::{Deserialize, Serialize};

pub use train::{
    consistency_training_loss, Draw, LossTerms, StepMetrics, Trainer, TrainerConfig,
    TrainingExample, TrainingSchedule,
};

use crate::autodiff::{Graph, ParamVars, Params, Tensor, Var};
use crate::geometry::ScaffoldState;
use crate::model::{Denoiser, PreparedContext};
use crate::Error;

/// Karras-style noise levels and the data scale used by the skip parameterisation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_data: f64,
    pub rho: f64,
    /// Boundary time; the consistency function is the identity here.
    pub epsilon: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self { sigma_min: 0.002, sigma_max: 80.0, sigma_data: 0.5, rho: 7.0, epsilon: 0.002 }
    }
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<(), Error> {
        let ok = self.sigma_min > 0.0
            && self.sigma_min < self.sigma_max
            && self.sigma_max.is_finite()
            && self.sigma_data > 0.0
            && self.rho > 0.0
            && self.epsilon > 0.0
            && self.epsilon <= self.sigma_min;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!(
                "noise schedule needs 0 < epsilon <= sigma_min < sigma_max and positive sigma_data, rho; got {self:?}"
            )))
        }
    }

    /// `n` times from `sigma_max` down to `sigma_min`.
    pub fn karras_grid(&self, n: usize) -> Result<Vec<f64>, Error> {
        if n < 2 {
            return Err(Error::Invalid(format!("karras grid needs at least 2 points, got {n}")));
        }
        let inv = 1.0 / self.rho;
        let (hi, lo) = (self.sigma_max.powf(inv), self.sigma_min.powf(inv));
        let mut grid: Vec<f64> = (0..n)
            .map(|i| (hi + i as f64 / (n - 1) as f64 * (lo - hi)).powf(self.rho))
            .collect();
        grid[0] = self.sigma_max;
        grid[n - 1] = self.sigma_min;
        Ok(grid)
    }

    /// The Karras grid in ascending order, as indexed by training.
    pub fn training_grid(&self, n: usize) -> Result<Vec<f64>, Error> {
        let mut g = self.karras_grid(n)?;
        g.reverse();
        Ok(g)
    }

    /// `(skip, out)` mixing weights; `(1, 0)` exactly at `t = epsilon`.
    pub fn skip_out(&self, t: f64) -> (f64, f64) {
        let s = t - self.epsilon;
        let sd2 = self.sigma_data * self.sigma_data;
        let denom = s * s + sd2;
        (sd2 / denom, self.sigma_data * s / denom.sqrt())
    }
}

/// Records `f_θ(Z_t, t) = skip(t)·Z_t + out(t)·F_θ(Z_t, t)` for coordinates
/// and features.
pub fn consistency_apply(
    g: &mut Graph,
    net: &Denoiser,
    p: &ParamVars,
    state: &ScaffoldState,
    t: f64,
    ctx: &PreparedContext,
    schedule: &NoiseSchedule,
) -> Result<(Var, Var), Error> {
    if t < schedule.epsilon {
        return Err(Error::Invalid(format!(
            "consistency time {t} is below epsilon {}",
            schedule.epsilon
        )));
    }
    let out = net.forward(g, p, state, t, ctx)?;
    let (skip, mix) = schedule.skip_out(t);
    let xt = g.constant(state.x.clone());
    let ht = g.constant(state.h.clone());
    let xs = g.scale(xt, skip);
    let xo = g.scale(out.x, mix);
    let hs = g.scale(ht, skip);
    let ho = g.scale(out.h, mix);
    Ok((g.add(xs, xo)?, g.add(hs, ho)?))
}

/// Inference-only [`consistency_apply`].
pub fn consistency_predict(
    net: &Denoiser,
    params: &Params,
    state: &ScaffoldState,
    t: f64,
    ctx: &PreparedContext,
    schedule: &NoiseSchedule,
) -> Result<ScaffoldState, Error> {
    let mut g = Graph::inference();
    let p = g.bind(params, false);
    let (x, h) = consistency_apply(&mut g, net, &p, state, t, ctx, schedule)?;
    ScaffoldState::new(g.value(x).clone(), g.value(h).clone())
}

/// Online parameters and their exponential moving average.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaPair {
    pub online: Params,
    pub target: Params,
}

impl EmaPair {
    pub fn new(params: Params) -> Self {
        Self { target: params.clone(), online: params }
    }

    pub fn from_parts(online: Params, target: Params) -> Result<Self, Error> {
        if !online.same_layout(&target) {
            return Err(Error::Invalid("online and EMA parameters differ in layout".into()));
        }
        Ok(Self { online, target })
    }

    /// `target ← decay·target + (1 − decay)·online`.
    pub fn ema_update(&mut self, decay: f64) -> Result<(), Error> {
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::Invalid(format!("EMA decay must be in (0, 1), got {decay}")));
        }
        for (t, o) in self.target.tensors_mut().iter_mut().zip(self.online.tensors()) {
            for (a, &b) in t.data_mut().iter_mut().zip(o.data()) {
                *a += (1.0 - decay) * (b - *a);
            }
        }
        Ok(())
    }
}

/// Noise of the same shape as `state`, with coordinate noise CoM-projected.
pub fn sample_noise<R: rand::Rng + ?Sized>(rng: &mut R, atoms: usize, features: usize) -> (Tensor, Tensor) {
    let mut x = Tensor::matrix(atoms, 3, crate::rng::normals(rng, atoms * 3)).expect("shape");
    crate::geometry::center_all(&mut x);
    let h = Tensor::matrix(atoms, features, crate::rng::normals(rng, atoms * features)).expect("shape");
    (x, h)
}

/// `clean + t·noise` for both coordinates and features.
pub fn perturb(clean: &ScaffoldState, t: f64, noise: &(Tensor, Tensor)) -> ScaffoldState {
    let mut x = clean.x.clone();
    x.axpy(t, &noise.0);
    let mut h = clean.h.clone();
    h.axpy(t, &noise.1);
    ScaffoldState { x, h }
}
