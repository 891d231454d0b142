use log::warn;
use serde::{Deserialize, Serialize};

use super::{Params, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.995,
            eps: 1e-8,
        }
    }
}

/// Adam moments and step counter for one parameter collection.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &Params) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(Tensor::zeros_like).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update. Returns `false` (and leaves
    /// everything untouched) when any gradient entry is non-finite.
    pub fn step(&mut self, params: &mut Params, grads: &[Tensor]) -> bool {
        assert_eq!(grads.len(), params.len(), "one gradient per parameter");
        if !grads.iter().all(Tensor::all_finite) {
            warn!("adam: non-finite gradient, step {} skipped", self.step + 1);
            return false;
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            debug_assert_eq!(p.shape(), g.shape());
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        true
    }
}

/// Global L2 norm over a gradient list.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale_in_place(scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_param(v: f64) -> Params {
        let mut p = Params::new();
        p.push("w", Tensor::scalar(v)).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = one_param(0.7);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        for _ in 0..5 {
            assert!(opt.step(&mut p, &[Tensor::scalar(0.0)]));
        }
        assert_eq!(p.get(0).item(), 0.7);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m = 0.1, v = 0.005 -> m_hat = v_hat = 1 after bias correction.
        let mut p = one_param(0.0);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        opt.step(&mut p, &[Tensor::scalar(1.0)]);
        let moved = -p.get(0).item();
        assert!((moved - 1e-4).abs() < 1e-11, "{moved}");
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut p = one_param(1.0);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        assert!(!opt.step(&mut p, &[Tensor::scalar(f64::NAN)]));
        assert_eq!(opt.step_count(), 0);
        assert_eq!(p.get(0).item(), 1.0);
    }

    #[test]
    fn clip_examples() {
        let mut g = vec![Tensor::matrix(1, 2, vec![3.0, 4.0]).unwrap()];
        assert_eq!(clip_global_norm(&mut g, 10.0), 5.0);
        assert_eq!(g[0].data(), &[3.0, 4.0]);

        let mut g = vec![Tensor::matrix(1, 2, vec![30.0, 40.0]).unwrap()];
        clip_global_norm(&mut g, 10.0);
        assert!((g[0].data()[0] - 6.0).abs() < 1e-12);
        assert!((g[0].data()[1] - 8.0).abs() < 1e-12);

        let mut g = vec![Tensor::zeros(2, 2)];
        clip_global_norm(&mut g, 10.0);
        assert_eq!(g[0].data(), &[0.0; 4]);
    }

    proptest! {
        #[test]
        fn clipped_norm_never_exceeds_max(
            vals in proptest::collection::vec(-1e6f64..1e6, 1..40),
            max_norm in 1e-3f64..100.0,
        ) {
            let n = vals.len();
            let mut g = vec![Tensor::matrix(1, n, vals).unwrap()];
            clip_global_norm(&mut g, max_norm);
            prop_assert!(global_norm(&g) <= max_norm + 1e-9);
        }
    }
}
