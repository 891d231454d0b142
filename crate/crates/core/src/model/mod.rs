//! SE(3)-equivariant message-passing denoiser over the joint
//! scaffold + context graph.
//!
//! Scaffold, functional-group, and pocket nodes are embedded by separate
//! MLPs; a sinusoidal embedding of `log t` is added to every node. Each
//! layer computes edge messages from invariant features, updates node
//! features residually, and moves scaffold coordinates along edge
//! directions scaled by a clamped scalar gate. Context coordinates never
//! move.
//!
//! Noisy scaffold inputs are scaled by [`DenoiserConfig::input_scale`]
//! before message passing and the coordinate output is mapped back by the
//! inverse scale, so a network with zero gates returns its input.
//!
//! Invariant edge features are distances of the *input* geometry, rounded
//! to [`DenoiserConfig::distance_quantum`]. Rounding makes the feature path
//! bit-identical under rigid motions (barring a distance landing within a
//! few ulps of a rounding boundary); reusing input distances keeps that
//! path independent of the learned coordinate updates.

mod context;
mod forward;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use context::PreparedContext;
pub use forward::DenoiserOutput;

use crate::autodiff::{Params, Tensor};
use crate::geometry::{LIGAND_ELEMENTS, RESIDUE_CLASSES};
use crate::rng::StreamRng;
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Sinusoid frequencies for the `log t` embedding.
    pub time_frequencies: usize,
    /// Coordinate gates are clamped to `[-coord_clamp, coord_clamp]`.
    pub coord_clamp: f64,
    /// Summed messages are divided by this before the node update.
    pub message_norm: f64,
    pub edge_cutoff: f64,
    pub distance_quantum: f64,
    /// Data scale used for the input scaling `1 / sqrt(1 + (t / sigma_data)^2)`.
    pub sigma_data: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            hidden: 64,
            time_frequencies: 6,
            coord_clamp: 3.0,
            message_norm: 10.0,
            edge_cutoff: crate::geometry::EDGE_CUTOFF,
            distance_quantum: 1.0 / (1u64 << 20) as f64,
            sigma_data: 0.5,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Invalid(format!("denoiser config: {m}")));
        if self.layers == 0 || self.layers > 16 {
            return bad("layers must be in 1..=16");
        }
        if self.hidden == 0 || self.hidden > 1024 {
            return bad("hidden must be in 1..=1024");
        }
        if self.time_frequencies == 0 {
            return bad("time_frequencies must be positive");
        }
        if !(self.coord_clamp > 0.0) || !(self.message_norm > 0.0) {
            return bad("coord_clamp and message_norm must be positive");
        }
        if !(self.edge_cutoff > 0.0) || !(self.distance_quantum > 0.0) || !(self.sigma_data > 0.0) {
            return bad("edge_cutoff, distance_quantum and sigma_data must be positive");
        }
        Ok(())
    }

    /// Scale applied to noisy scaffold inputs at time `t`.
    pub fn input_scale(&self, t: f64) -> f64 {
        1.0 / (1.0 + (t / self.sigma_data).powi(2)).sqrt()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Mlp2 {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerIds {
    pub msg_src: usize,
    pub msg_dst: usize,
    pub msg_dist: usize,
    pub msg_b1: usize,
    pub msg_w2: usize,
    pub msg_b2: usize,
    pub node_self: usize,
    pub node_agg: usize,
    pub node_b1: usize,
    pub node_w2: usize,
    pub node_b2: usize,
    pub gate: Mlp2,
}

#[derive(Clone, Debug)]
pub(crate) struct ParamIds {
    pub scaffold: Mlp2,
    pub group: Mlp2,
    pub pocket: Mlp2,
    pub time_w: usize,
    pub time_b: usize,
    pub layers: Vec<LayerIds>,
    pub out: Mlp2,
}

/// Name, shape, fan-in, and init gain of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    fan_in: usize,
    gain: f64,
}

struct LayoutBuilder {
    specs: Vec<ParamSpec>,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, rows: usize, cols: usize, fan_in: usize, gain: f64) -> usize {
        self.specs.push(ParamSpec { name, rows, cols, fan_in, gain });
        self.specs.len() - 1
    }

    fn mlp2(&mut self, prefix: &str, input: usize, hidden: usize, output: usize, gain: f64) -> Mlp2 {
        Mlp2 {
            w1: self.add(format!("{prefix}.w1"), input, hidden, input, 1.0),
            b1: self.add(format!("{prefix}.b1"), 1, hidden, input, 1.0),
            w2: self.add(format!("{prefix}.w2"), hidden, output, hidden, gain),
            b2: self.add(format!("{prefix}.b2"), 1, output, hidden, gain),
        }
    }
}

/// The denoiser network `F_θ`: parameter layout plus forward pass.
#[derive(Clone, Debug)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    specs: Vec<ParamSpec>,
    pub(crate) ids: ParamIds,
}

/// Init gain of the coordinate gate's output layer; small so that an
/// untrained network barely moves coordinates.
const GATE_OUT_GAIN: f64 = 1e-3;

impl Denoiser {
    pub fn new(config: DenoiserConfig) -> Result<Self, Error> {
        config.validate()?;
        let d = config.hidden;
        let mut b = LayoutBuilder { specs: Vec::new() };
        let scaffold = b.mlp2("embed.scaffold", LIGAND_ELEMENTS, d, d, 1.0);
        let group = b.mlp2("embed.group", LIGAND_ELEMENTS, d, d, 1.0);
        let pocket = b.mlp2("embed.pocket", RESIDUE_CLASSES, d, d, 1.0);
        let tf = 2 * config.time_frequencies;
        let time_w = b.add("embed.time.w".into(), tf, d, tf, 1.0);
        let time_b = b.add("embed.time.b".into(), 1, d, tf, 1.0);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("layer{l}");
            let fan_msg = 2 * d + 2;
            layers.push(LayerIds {
                msg_src: b.add(format!("{p}.msg.w_src"), d, d, fan_msg, 1.0),
                msg_dst: b.add(format!("{p}.msg.w_dst"), d, d, fan_msg, 1.0),
                msg_dist: b.add(format!("{p}.msg.w_dist"), 2, d, fan_msg, 1.0),
                msg_b1: b.add(format!("{p}.msg.b1"), 1, d, fan_msg, 1.0),
                msg_w2: b.add(format!("{p}.msg.w2"), d, d, d, 1.0),
                msg_b2: b.add(format!("{p}.msg.b2"), 1, d, d, 1.0),
                node_self: b.add(format!("{p}.node.w_self"), d, d, 2 * d, 1.0),
                node_agg: b.add(format!("{p}.node.w_agg"), d, d, 2 * d, 1.0),
                node_b1: b.add(format!("{p}.node.b1"), 1, d, 2 * d, 1.0),
                node_w2: b.add(format!("{p}.node.w2"), d, d, d, 1.0),
                node_b2: b.add(format!("{p}.node.b2"), 1, d, d, 1.0),
                gate: b.mlp2(&format!("{p}.gate"), d, d, 1, GATE_OUT_GAIN),
            });
        }
        let out = b.mlp2("out", d, d, LIGAND_ELEMENTS, 1.0);
        Ok(Self {
            config,
            specs: b.specs,
            ids: ParamIds { scaffold, group, pocket, time_w, time_b, layers, out },
        })
    }

    pub fn param_specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// Total scalar parameter count; a pure function of the config.
    pub fn param_count(&self) -> usize {
        self.specs.iter().map(|s| s.rows * s.cols).sum()
    }

    /// Uniform `±gain/sqrt(fan_in)` initialisation.
    pub fn init_params(&self, rng: &mut StreamRng) -> Params {
        let mut params = Params::new();
        for s in &self.specs {
            let bound = s.gain / (s.fan_in as f64).sqrt();
            let data = (0..s.rows * s.cols).map(|_| rng.random_range(-bound..=bound)).collect();
            params
                .push(s.name.clone(), Tensor::matrix(s.rows, s.cols, data).expect("shape"))
                .expect("unique names");
        }
        params
    }

    /// Checks that `params` has exactly this network's names and shapes.
    pub fn check_params(&self, params: &Params) -> Result<(), Error> {
        if params.len() != self.specs.len() {
            return Err(Error::Invalid(format!(
                "expected {} parameter tensors, found {}",
                self.specs.len(),
                params.len()
            )));
        }
        for (s, (name, t)) in self.specs.iter().zip(params.names().iter().zip(params.tensors())) {
            if &s.name != name || t.shape() != [s.rows, s.cols] {
                return Err(Error::Invalid(format!(
                    "parameter {name} has shape {:?}, expected {} with [{}, {}]",
                    t.shape(),
                    s.name,
                    s.rows,
                    s.cols
                )));
            }
        }
        Ok(())
    }
}

/// Sinusoidal features of `log t` at frequencies `2^(k-4)`.
pub fn time_features(t: f64, frequencies: usize) -> Tensor {
    let lt = t.ln();
    let mut data = Vec::with_capacity(2 * frequencies);
    for k in 0..frequencies {
        let w = 2f64.powi(k as i32 - 4);
        data.push((w * lt).sin());
        data.push((w * lt).cos());
    }
    Tensor::matrix(1, 2 * frequencies, data).expect("shape")
}

#[cfg(test)]
mod tests;
