//! Central finite-difference oracle for analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamVars, Params, Var};
use crate::Error;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Coordinates checked per tensor; tensors at or below this size are checked fully.
    pub per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            per_tensor: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Worst coordinate: (parameter name, flat index, analytic, numeric).
    pub worst: Option<(String, usize, f64, f64)>,
}

/// `|analytic - numeric| / (|analytic| + 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + 1e-8)
}

/// Compares reverse-mode gradients of `loss_fn` with central differences
/// at a sample of parameter coordinates.
pub fn finite_diff_check<F>(
    loss_fn: F,
    params: &Params,
    opts: GradCheckOptions,
) -> Result<GradCheckReport, Error>
where
    F: Fn(&mut Graph, &ParamVars) -> Result<Var, Error>,
{
    assert!(opts.step > 0.0, "finite-difference step must be positive");
    let mut graph = Graph::new();
    let vars = graph.bind(params, true);
    let loss = loss_fn(&mut graph, &vars)?;
    let analytic = graph.backward(loss)?.for_params(&vars, params);

    let eval = |p: &Params| -> Result<f64, Error> {
        let mut g = Graph::inference();
        let v = g.bind(p, false);
        let l = loss_fn(&mut g, &v)?;
        Ok(g.value(l).item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (tid, grad) in analytic.iter().enumerate() {
        let len = grad.len();
        let coords: Vec<usize> = if len <= opts.per_tensor {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, opts.per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        for idx in coords {
            let orig = work.tensors()[tid].data()[idx];
            work.tensors_mut()[tid].data_mut()[idx] = orig + opts.step;
            let plus = eval(&work)?;
            work.tensors_mut()[tid].data_mut()[idx] = orig - opts.step;
            let minus = eval(&work)?;
            work.tensors_mut()[tid].data_mut()[idx] = orig;

            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = grad.data()[idx];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((params.names()[tid].clone(), idx, a, numeric));
            }
        }
    }
    Ok(report)
}
