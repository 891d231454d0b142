use std::fmt;
use std::sync::Arc;

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{consistency_apply, perturb, sample_noise, EmaPair, NoiseSchedule};
use crate::autodiff::{clip_global_norm, Adam, AdamConfig, Graph, ParamVars, Tensor, Var};
use crate::geometry::{ScaffoldState, LIGAND_ELEMENTS};
use crate::model::{Denoiser, PreparedContext};
use crate::rng::{substream, StreamRng};
use crate::Error;

/// One clean scaffold with its fixed context.
#[derive(Clone, Debug)]
pub struct TrainingExample {
    pub context: PreparedContext,
    pub clean: ScaffoldState,
}

/// A sampled loss term: which example, the adjacent time pair, and the shared noise.
#[derive(Clone, Debug)]
pub struct Draw {
    pub example: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    pub noise: (Tensor, Tensor),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub coord: f64,
    pub feature: f64,
}

/// Step-count and EMA-decay schedules as functions of the update counter.
#[derive(Clone)]
pub struct TrainingSchedule {
    pub steps: Arc<dyn Fn(u64) -> usize + Send + Sync>,
    pub decay: Arc<dyn Fn(u64) -> f64 + Send + Sync>,
}

impl TrainingSchedule {
    pub fn constant(steps: usize, decay: f64) -> Self {
        Self { steps: Arc::new(move |_| steps), decay: Arc::new(move |_| decay) }
    }
}

impl fmt::Debug for TrainingSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TrainingSchedule(N(0)={}, mu(0)={})", (self.steps)(0), (self.decay)(0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub max_grad_norm: f64,
    /// Discretisation steps `N`.
    pub steps: usize,
    pub ema_decay: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            adam: AdamConfig::default(),
            max_grad_norm: 10.0,
            steps: 50,
            ema_decay: 0.99,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Invalid(format!("trainer config: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.adam.lr >= 0.0 && self.adam.lr.is_finite()) {
            return bad(format!("adam.lr must be finite and non-negative, got {}", self.adam.lr));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return bad("adam betas must be in [0, 1)".into());
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive".into());
        }
        if self.steps < 2 {
            return bad(format!("steps must be at least 2, got {}", self.steps));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad(format!("ema_decay must be in (0, 1), got {}", self.ema_decay));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub loss: LossTerms,
    /// Pre-clip global gradient norm.
    pub grad_norm: f64,
    pub applied: bool,
}

/// Records the consistency loss for one draw. The target branch must be
/// bound with `trainable = false`, so no gradient reaches it.
#[allow(clippy::too_many_arguments)]
pub fn consistency_training_loss(
    g: &mut Graph,
    net: &Denoiser,
    online: &ParamVars,
    target: &ParamVars,
    example: &TrainingExample,
    t_lo: f64,
    t_hi: f64,
    noise: &(Tensor, Tensor),
    schedule: &NoiseSchedule,
) -> Result<(Var, LossTerms), Error> {
    let hi = perturb(&example.clean, t_hi, noise);
    let lo = perturb(&example.clean, t_lo, noise);
    let (fx, fh) = consistency_apply(g, net, online, &hi, t_hi, &example.context, schedule)?;
    let (tx, th) = consistency_apply(g, net, target, &lo, t_lo, &example.context, schedule)?;
    let lx = g.mse(fx, tx)?;
    let lh = g.mse(fh, th)?;
    let total = g.add(lx, lh)?;
    let terms = LossTerms {
        total: g.value(total).item(),
        coord: g.value(lx).item(),
        feature: g.value(lh).item(),
    };
    Ok((total, terms))
}

/// Online/EMA parameters with an Adam optimiser and a seeded draw stream.
pub struct Trainer {
    pub net: Denoiser,
    pub schedule: NoiseSchedule,
    pub config: TrainerConfig,
    pub training: TrainingSchedule,
    pub pair: EmaPair,
    adam: Adam,
    step: u64,
    rng: StreamRng,
    order: Vec<usize>,
    cursor: usize,
}

impl Trainer {
    pub fn new(
        net: Denoiser,
        pair: EmaPair,
        schedule: NoiseSchedule,
        config: TrainerConfig,
        seed: u64,
    ) -> Result<Self, Error> {
        schedule.validate()?;
        config.validate()?;
        net.check_params(&pair.online)?;
        net.check_params(&pair.target)?;
        let adam = Adam::new(config.adam, &pair.online);
        Ok(Self {
            net,
            schedule,
            training: TrainingSchedule::constant(config.steps, config.ema_decay),
            config,
            pair,
            adam,
            step: 0,
            rng: substream(seed, "train"),
            order: Vec::new(),
            cursor: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Resumes the update counter (the optimiser moments restart from zero).
    pub fn set_step_count(&mut self, step: u64) {
        self.step = step;
    }

    fn draw(rng: &mut StreamRng, data: &[TrainingExample], example: usize, grid: &[f64]) -> Draw {
        let n = rng.random_range(0..grid.len() - 1);
        let atoms = data[example].clean.atom_count();
        Draw {
            example,
            t_lo: grid[n],
            t_hi: grid[n + 1],
            noise: sample_noise(rng, atoms, LIGAND_ELEMENTS),
        }
    }

    /// A fixed set of draws for tracking the loss across training.
    pub fn evaluation_draws(&self, data: &[TrainingExample], count: usize, seed: u64) -> Result<Vec<Draw>, Error> {
        if data.is_empty() {
            return Err(Error::Invalid("dataset is empty".into()));
        }
        let grid = self.schedule.training_grid((self.training.steps)(0))?;
        let mut rng = substream(seed, "eval-draws");
        Ok((0..count)
            .map(|k| Self::draw(&mut rng, data, k % data.len(), &grid))
            .collect())
    }

    /// Mean loss of the current parameters over fixed draws.
    pub fn evaluate(&self, data: &[TrainingExample], draws: &[Draw]) -> Result<LossTerms, Error> {
        let mut acc = LossTerms::default();
        for d in draws {
            let mut g = Graph::inference();
            let online = g.bind(&self.pair.online, false);
            let target = g.bind(&self.pair.target, false);
            let (_, t) = consistency_training_loss(
                &mut g, &self.net, &online, &target, &data[d.example], d.t_lo, d.t_hi, &d.noise, &self.schedule,
            )?;
            acc.total += t.total;
            acc.coord += t.coord;
            acc.feature += t.feature;
        }
        let n = draws.len().max(1) as f64;
        Ok(LossTerms { total: acc.total / n, coord: acc.coord / n, feature: acc.feature / n })
    }

    fn next_batch(&mut self, len: usize) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.config.batch_size);
        while batch.len() < self.config.batch_size {
            if self.cursor >= self.order.len() {
                self.order = (0..len).collect();
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }

    /// One optimiser update on the next minibatch.
    pub fn train_step(&mut self, data: &[TrainingExample]) -> Result<StepMetrics, Error> {
        if data.is_empty() {
            return Err(Error::Invalid("dataset is empty".into()));
        }
        if self.order.len() != data.len() {
            self.order.clear();
            self.cursor = 0;
        }
        let k = self.step;
        let n_steps = (self.training.steps)(k);
        let decay = (self.training.decay)(k);
        let grid = self.schedule.training_grid(n_steps)?;
        let batch = self.next_batch(data.len());
        let scale = 1.0 / batch.len() as f64;

        let mut grads: Vec<Tensor> = self.pair.online.tensors().iter().map(Tensor::zeros_like).collect();
        let mut loss = LossTerms::default();
        for &idx in &batch {
            let d = Self::draw(&mut self.rng, data, idx, &grid);
            let mut g = Graph::new();
            let online = g.bind(&self.pair.online, true);
            let target = g.bind(&self.pair.target, false);
            let (l, terms) = consistency_training_loss(
                &mut g, &self.net, &online, &target, &data[idx], d.t_lo, d.t_hi, &d.noise, &self.schedule,
            )
            .map_err(|e| match e {
                Error::NonFinite { layer } => Error::NanLoss(format!(
                    "non-finite activations at {layer}; example {idx}, t_n {}, t_n+1 {}",
                    d.t_lo, d.t_hi
                )),
                other => other,
            })?;
            if !terms.total.is_finite() {
                return Err(Error::NanLoss(format!(
                    "loss {} at step {k}; example {idx}, atoms {}, t_n {}, t_n+1 {}",
                    terms.total,
                    data[idx].clean.atom_count(),
                    d.t_lo,
                    d.t_hi
                )));
            }
            let gr = g.backward(l)?.for_params(&online, &self.pair.online);
            for (acc, gi) in grads.iter_mut().zip(&gr) {
                acc.axpy(scale, gi);
            }
            loss.total += scale * terms.total;
            loss.coord += scale * terms.coord;
            loss.feature += scale * terms.feature;
        }
        let grad_norm = clip_global_norm(&mut grads, self.config.max_grad_norm);
        let applied = self.adam.step(&mut self.pair.online, &grads);
        self.pair.ema_update(decay)?;
        self.step += 1;
        debug!("train step {k}: loss {:.6} grad norm {:.4}", loss.total, grad_norm);
        Ok(StepMetrics { step: k, loss, grad_norm, applied })
    }

    /// One pass over the dataset in shuffled minibatches; returns per-step metrics.
    pub fn train_epoch(&mut self, data: &[TrainingExample]) -> Result<Vec<StepMetrics>, Error> {
        let steps = data.len().div_ceil(self.config.batch_size);
        (0..steps).map(|_| self.train_step(data)).collect()
    }
}
