use super::*;
use crate::geometry::{build_context, rotate, synthesize_complex, Atom, Element, ResidueClass, SynthParams};
use crate::model::DenoiserConfig;
use crate::rng::{rotation, substream};

fn state_of(x: Vec<[f64; 3]>, elements: &[Element]) -> ScaffoldState {
    let atoms: Vec<Atom> = x.into_iter().zip(elements).map(|(p, &e)| Atom::new(e, p)).collect();
    ScaffoldState::from_atoms(&atoms).unwrap()
}

fn zero_denoiser(s: &ScaffoldState, _t: f64) -> Result<ScaffoldState, Error> {
    Ok(ScaffoldState { x: Tensor::zeros_like(&s.x), h: Tensor::zeros_like(&s.h) })
}

fn identity(s: &ScaffoldState, _t: f64) -> Result<ScaffoldState, Error> {
    Ok(s.clone())
}

/// Pulls toward a fixed clean state; a cheap stand-in for a trained model.
fn shrink_to(target: ScaffoldState) -> impl Fn(&ScaffoldState, f64) -> Result<ScaffoldState, Error> {
    move |s: &ScaffoldState, t: f64| {
        let w = 0.25 / (0.25 + t * t);
        let mut out = target.clone();
        out.x.scale_in_place(1.0 - w);
        out.x.axpy(w, &s.x);
        out.h.scale_in_place(1.0 - w);
        out.h.axpy(w, &s.h);
        Ok(out)
    }
}

fn pocket_atom(p: [f64; 3]) -> Atom {
    Atom::new(Element::Residue(ResidueClass::Hydrophobic), p)
}

#[test]
fn custom_score_weight_arithmetic() {
    let c = Element::C;
    let bonded = state_of(vec![[0.0; 3], [1.5, 0.0, 0.0]], &[c, c]);
    let empty = MolecularContext { pocket: vec![], groups: vec![] };
    assert_eq!(custom_score(&bonded, &empty), 2.0);

    let apart = state_of(vec![[0.0; 3], [5.0, 0.0, 0.0]], &[c, c]);
    assert_eq!(custom_score(&apart, &empty), 1.0);

    let pocket = [[-2.0, 0.0, 0.0], [-2.0, 1.0, 0.0], [-2.0, -1.0, 0.0], [-2.0, 0.0, 1.0], [-2.0, 0.0, -1.0]]
        .map(pocket_atom)
        .to_vec();
    let crowded = MolecularContext { pocket, groups: vec![] };
    assert!((custom_score(&bonded, &crowded) - 1.5).abs() < 1e-12);
}

#[test]
fn custom_score_includes_functional_groups() {
    let c = Element::C;
    let scaffold = state_of(vec![[0.0; 3]], &[c]);
    let near = MolecularContext { pocket: vec![], groups: vec![Atom::new(c, [1.5, 0.0, 0.0])] };
    let far = MolecularContext { pocket: vec![], groups: vec![Atom::new(c, [6.0, 0.0, 0.0])] };
    assert_eq!(custom_score(&scaffold, &near), 2.0);
    assert_eq!(custom_score(&scaffold, &far), 1.0);
}

#[test]
fn renoise_scales() {
    assert_eq!(Renoise::AsPrinted.scale(4.0, 3.0, 0.002), 1.0);
    assert!((Renoise::VarianceDifference.scale(4.0, 3.0, 0.002) - (16.0f64 - 4e-6).sqrt()).abs() < 1e-15);
}

#[test]
fn plan_has_n_minus_one_interior_times() {
    let s = NoiseSchedule::default();
    let plan = SamplingPlan::karras(&s, 50, 1, Renoise::AsPrinted).unwrap();
    assert_eq!(plan.times.len(), 49);
    assert_eq!(plan.steps(), 50);
    assert!(plan.times[0] < 80.0 && *plan.times.last().unwrap() > s.epsilon);
    assert!(SamplingPlan::karras(&s, 50, 50, Renoise::AsPrinted).is_err());
    assert!(SamplingPlan::karras(&s, 50, 0, Renoise::AsPrinted).is_err());
    assert!(SamplingPlan::karras(&s, 0, 1, Renoise::AsPrinted).is_err());
    let one = SamplingPlan::karras(&s, 1, 1, Renoise::AsPrinted).unwrap();
    assert!(one.times.is_empty());
}

fn target() -> ScaffoldState {
    let c = Element::C;
    let mut s = state_of(vec![[0.0; 3], [1.5, 0.0, 0.0], [2.2, 1.2, 0.0]], &[c, c, c]);
    crate::geometry::center_all(&mut s.x);
    s
}

#[test]
fn one_step_is_a_single_evaluation_at_t_max() {
    let s = NoiseSchedule::default();
    let plan = SamplingPlan::karras(&s, 1, 1, Renoise::AsPrinted).unwrap();
    let f = shrink_to(target());
    let r = multistep_metric_sample(&f, &plan, 3, None::<fn(&ScaffoldState) -> Result<f64, Error>>, &mut substream(1, "s")).unwrap();
    assert_eq!(r.evaluations, 1);
    let prior = prior_sample(&mut substream(1, "s"), 3, 80.0);
    let mut expected = f(&prior, 80.0).unwrap();
    crate::geometry::center_all(&mut expected.x);
    assert_eq!(r.final_state, expected);
    assert_eq!(r.best, r.final_state);
}

#[test]
fn evaluation_count_equals_steps() {
    let s = NoiseSchedule::default();
    let plan = SamplingPlan::karras(&s, 50, 1, Renoise::AsPrinted).unwrap();
    let r = multistep_metric_sample(&shrink_to(target()), &plan, 3, Some(|_: &ScaffoldState| Ok(0.0)), &mut substream(2, "s")).unwrap();
    assert_eq!(r.evaluations, 50);
    assert_eq!(r.scores.len(), 49);
}

#[test]
fn constant_score_keeps_earliest_candidate() {
    let s = NoiseSchedule::default();
    let plan = SamplingPlan::karras(&s, 10, 3, Renoise::AsPrinted).unwrap();
    let r = multistep_metric_sample(&shrink_to(target()), &plan, 3, Some(|_: &ScaffoldState| Ok(1.0)), &mut substream(3, "s")).unwrap();
    assert_eq!(r.best_step, 3);
    assert_eq!(r.scores.first().unwrap().0, 3);
    assert_ne!(r.best, r.final_state);
}

#[test]
fn last_window_scores_only_the_final_sample() {
    let s = NoiseSchedule::default();
    let plan = SamplingPlan::karras(&s, 10, 9, Renoise::AsPrinted).unwrap();
    let r = multistep_metric_sample(&shrink_to(target()), &plan, 3, Some(|z: &ScaffoldState| Ok(z.x.get(0, 0))), &mut substream(4, "s")).unwrap();
    assert_eq!(r.scores.len(), 1);
    assert_eq!(r.best, r.final_state);
}

#[test]
fn scoring_off_returns_the_plain_multistep_sample() {
    let s = NoiseSchedule::default();
    let plan = SamplingPlan::karras(&s, 8, 1, Renoise::AsPrinted).unwrap();
    let f = shrink_to(target());
    let off = multistep_metric_sample(&f, &plan, 3, None::<fn(&ScaffoldState) -> Result<f64, Error>>, &mut substream(5, "s")).unwrap();
    let on = multistep_metric_sample(&f, &plan, 3, Some(|z: &ScaffoldState| Ok(-z.x.norm_sq())), &mut substream(5, "s")).unwrap();
    assert_eq!(off.best, off.final_state);
    assert_eq!(off.final_state, on.final_state);
    assert!(off.scores.is_empty());
}

#[test]
fn failing_scores_are_skipped() {
    let s = NoiseSchedule::default();
    let plan = SamplingPlan::karras(&s, 6, 1, Renoise::AsPrinted).unwrap();
    let calls = std::cell::Cell::new(0);
    let score = |_: &ScaffoldState| {
        calls.set(calls.get() + 1);
        if calls.get() == 2 { Ok(5.0) } else { Err(Error::Invalid("undecodable".into())) }
    };
    let r = multistep_metric_sample(&shrink_to(target()), &plan, 3, Some(score), &mut substream(6, "s")).unwrap();
    assert_eq!(r.best_step, 2);
    assert!(r.scores.iter().filter(|(_, v)| *v == f64::NEG_INFINITY).count() == 4);
}

#[test]
fn selection_dominates_final_step() {
    let complex = synthesize_complex(3, &SynthParams::small()).unwrap();
    let (context, clean) = build_context(&complex).unwrap();
    let s = NoiseSchedule::default();
    let plan = SamplingPlan::karras(&s, 12, 1, Renoise::AsPrinted).unwrap();
    let f = shrink_to(clean.clone());
    for seed in 0..20 {
        let r = multistep_metric_sample(&f, &plan, clean.atom_count(), Some(|z: &ScaffoldState| Ok(custom_score(z, &context))), &mut substream(seed, "s")).unwrap();
        assert!(custom_score(&r.best, &context) >= custom_score(&r.final_state, &context));
        assert!(r.final_state.center_of_mass().iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn identity_denoiser_has_zero_score() {
    let z = prior_sample(&mut substream(7, "p"), 4, 3.0);
    let (sx, sh) = score_from_denoiser(&identity, &z, 3.0).unwrap();
    assert_eq!(sx.norm_sq() + sh.norm_sq(), 0.0);
    assert!(score_from_denoiser(&identity, &z, 0.0).is_err());
}

#[test]
fn point_mass_data_has_gaussian_score() {
    let t = 2.5;
    let z = prior_sample(&mut substream(8, "p"), 4, t);
    let (sx, sh) = score_from_denoiser(&zero_denoiser, &z, t).unwrap();
    assert!(sx.max_abs_diff(&z.x.map(|v| -v / (t * t))) < 1e-15);
    assert!(sh.max_abs_diff(&z.h.map(|v| -v / (t * t))) < 1e-15);
}

#[test]
fn single_euler_step_with_point_mass_data() {
    let s = NoiseSchedule::default();
    let r = pf_ode_sample(&zero_denoiser, &s, 4, 1, OdeSolver::Euler, &mut substream(9, "p")).unwrap();
    let prior = prior_sample(&mut substream(9, "p"), 4, 80.0);
    let factor = s.epsilon / s.sigma_max;
    assert!(r.final_state.x.max_abs_diff(&prior.x.map(|v| v * factor)) < 1e-12);
    assert!(r.final_state.h.max_abs_diff(&prior.h.map(|v| v * factor)) < 1e-12);
    assert_eq!(r.evaluations, 1);
}

#[test]
fn heun_evaluation_counts() {
    let s = NoiseSchedule::default();
    let r = pf_ode_sample(&zero_denoiser, &s, 3, 500, OdeSolver::Heun, &mut substream(10, "p")).unwrap();
    assert_eq!(r.evaluations, 999);
    assert_eq!(OdeSolver::Heun.evaluations(500), 999);
    let r = pf_ode_sample(&zero_denoiser, &s, 3, 40, OdeSolver::Euler, &mut substream(10, "p")).unwrap();
    assert_eq!(r.evaluations, 40);
}

#[test]
fn heun_matches_hand_expansion_for_point_mass_data() {
    // With D = 0 the drift is Z/t, so every step multiplies Z by a scalar.
    let s = NoiseSchedule::default();
    let n = 20;
    let r = pf_ode_sample(&zero_denoiser, &s, 3, n, OdeSolver::Heun, &mut substream(11, "p")).unwrap();
    let prior = prior_sample(&mut substream(11, "p"), 3, 80.0);
    let grid = s.karras_grid(n + 1).unwrap();
    let mut factor = 1.0;
    for i in 0..n {
        let (t, tn) = (grid[i], grid[i + 1]);
        let h = tn - t;
        factor *= if i + 1 < n { 1.0 + 0.5 * h * (1.0 / t + (1.0 + h / t) / tn) } else { 1.0 + h / t };
    }
    assert!(r.final_state.x.max_abs_diff(&prior.x.map(|v| v * factor)) < 1e-12);
}

#[test]
fn ode_is_deterministic_and_detects_divergence() {
    let s = NoiseSchedule::default();
    let f = shrink_to(target());
    let a = pf_ode_sample(&f, &s, 3, 30, OdeSolver::Heun, &mut substream(12, "p")).unwrap();
    let b = pf_ode_sample(&f, &s, 3, 30, OdeSolver::Heun, &mut substream(12, "p")).unwrap();
    assert_eq!(a.final_state, b.final_state);
    let exploding = |z: &ScaffoldState, _t: f64| {
        let mut o = z.clone();
        o.x.scale_in_place(-1e9);
        Ok(o)
    };
    let err = pf_ode_sample(&exploding, &s, 3, 10, OdeSolver::Euler, &mut substream(12, "p")).unwrap_err();
    assert!(matches!(err, Error::Diverged { step: 1 }), "{err}");
}

#[test]
fn score_rotates_with_model_input() {
    let complex = synthesize_complex(14, &SynthParams::small()).unwrap();
    let (context, clean) = build_context(&complex).unwrap();
    let net = Denoiser::new(DenoiserConfig { layers: 2, hidden: 16, ..Default::default() }).unwrap();
    let mut params = net.init_params(&mut substream(1, "init"));
    for l in &net.ids.layers {
        params.tensors_mut()[l.gate.w2].scale_in_place(500.0);
    }
    let sched = NoiseSchedule::default();
    let ctx = net.prepare(context.clone()).unwrap();
    let f = ModelFn { net: &net, params: &params, context: &ctx, schedule: &sched };
    let z = {
        let mut z = prior_sample(&mut substream(2, "p"), clean.atom_count(), 1.0);
        z.x.axpy(1.0, &clean.x);
        z
    };
    let (sx, sh) = score_from_denoiser(&f, &z, 1.0).unwrap();
    let r = rotation(&mut substream(3, "r"));
    let rot = |a: &[Atom]| a.iter().map(|a| Atom::new(a.element, rotate(&r, &a.position))).collect();
    let ctx_r = net.prepare(MolecularContext { pocket: rot(&context.pocket), groups: rot(&context.groups) }).unwrap();
    let f_r = ModelFn { net: &net, params: &params, context: &ctx_r, schedule: &sched };
    let rot_t = |x: &Tensor| Tensor::from_points(&x.points().iter().map(|p| rotate(&r, p)).collect::<Vec<_>>());
    let z_r = ScaffoldState { x: rot_t(&z.x), h: z.h.clone() };
    let (sx_r, sh_r) = score_from_denoiser(&f_r, &z_r, 1.0).unwrap();
    let scale = sx.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    assert!(sx_r.max_abs_diff(&rot_t(&sx)) < 1e-9 * scale);
    assert_eq!(sh_r, sh);
}

#[test]
fn inpainting_all_known_returns_known() {
    let s = NoiseSchedule::default();
    let known = target();
    let plan = InpaintPlan { steps: 10, resample: 2, jump: 3 };
    let r = inpaint_sample(&shrink_to(known.clone()), &s, &known, &[true; 3], plan, &mut substream(15, "i")).unwrap();
    assert_eq!(r.final_state, known);
    assert_eq!(r.evaluations, 20);
}

#[test]
fn inpainting_final_known_rows_are_exact() {
    let s = NoiseSchedule::default();
    let known = target();
    let mask = [true, false, true];
    for (resample, jump) in [(1, 1), (3, 1), (2, 4)] {
        let plan = InpaintPlan { steps: 12, resample, jump };
        let r = inpaint_sample(&shrink_to(known.clone()), &s, &known, &mask, plan, &mut substream(16, "i")).unwrap();
        for i in [0, 2] {
            assert_eq!(r.final_state.x.row(i), known.x.row(i));
            assert_eq!(r.final_state.h.row(i), known.h.row(i));
        }
        assert!(r.final_state.center_of_mass().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(r.evaluations, 12 * resample);
    }
}

#[test]
fn inpainting_single_pass_costs_one_euler_run() {
    let s = NoiseSchedule::default();
    let known = target();
    let plan = InpaintPlan { steps: 25, resample: 1, jump: 5 };
    let r = inpaint_sample(&shrink_to(known.clone()), &s, &known, &[false, true, false], plan, &mut substream(17, "i")).unwrap();
    let ode = pf_ode_sample(&shrink_to(known.clone()), &s, 3, 25, OdeSolver::Euler, &mut substream(17, "i")).unwrap();
    assert_eq!(r.evaluations, ode.evaluations);
    assert!(inpaint_sample(&identity, &s, &known, &[true], plan, &mut substream(1, "i")).is_err());
}
