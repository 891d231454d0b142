use super::*;
use crate::autodiff::{finite_diff_check, GradCheckOptions, Graph};
use crate::geometry::{
    build_context, rotate, synthesize_complex, Atom, MolecularContext, ScaffoldState, SynthParams,
};
use crate::rng::{normals, rotation, substream};

struct Fixture {
    net: Denoiser,
    params: Params,
    context: MolecularContext,
    state: ScaffoldState,
}

fn fixture(seed: u64, config: DenoiserConfig, t: f64) -> Fixture {
    let complex = synthesize_complex(seed, &SynthParams::default()).unwrap();
    let (context, clean) = build_context(&complex).unwrap();
    let mut rng = substream(seed, "noise");
    let mut x = clean.x.clone();
    let noise = Tensor::matrix(x.rows(), 3, normals(&mut rng, x.len())).unwrap();
    x.axpy(t, &noise);
    crate::geometry::center_all(&mut x);
    let mut h = clean.h.clone();
    let noise = Tensor::matrix(h.rows(), h.cols(), normals(&mut rng, h.len())).unwrap();
    h.axpy(t, &noise);
    let net = Denoiser::new(config).unwrap();
    let params = net.init_params(&mut substream(seed, "init"));
    Fixture { net, params, context, state: ScaffoldState::new(x, h).unwrap() }
}

fn rotate_atoms(r: &[[f64; 3]; 3], atoms: &[Atom]) -> Vec<Atom> {
    atoms.iter().map(|a| Atom::new(a.element, rotate(r, &a.position))).collect()
}

fn rotate_tensor(r: &[[f64; 3]; 3], x: &Tensor) -> Tensor {
    Tensor::from_points(&x.points().iter().map(|p| rotate(r, p)).collect::<Vec<_>>())
}

/// Uses larger gates than the init so coordinate updates are non-trivial.
fn boost_gates(net: &Denoiser, params: &mut Params) {
    for l in &net.ids.layers {
        params.tensors_mut()[l.gate.w2].scale_in_place(300.0);
    }
}

#[test]
fn parameter_count_depends_only_on_config() {
    let a = Denoiser::new(DenoiserConfig::default()).unwrap();
    let b = Denoiser::new(DenoiserConfig::default()).unwrap();
    assert_eq!(a.param_count(), b.param_count());
    let p = a.init_params(&mut substream(1, "init"));
    assert_eq!(p.scalar_count(), a.param_count());
    a.check_params(&p).unwrap();
    let small = Denoiser::new(DenoiserConfig { layers: 2, ..Default::default() }).unwrap();
    assert!(small.param_count() < a.param_count());
    assert!(small.check_params(&p).is_err());
}

#[test]
fn output_shapes_match_input() {
    let f = fixture(3, DenoiserConfig::default(), 1.0);
    let ctx = f.net.prepare(f.context.clone()).unwrap();
    let (x, h) = f.net.predict(&f.params, &f.state, 1.0, &ctx).unwrap();
    assert_eq!(x.shape(), f.state.x.shape());
    assert_eq!(h.shape(), f.state.h.shape());
    let com = ScaffoldState::new(x, h).unwrap().center_of_mass();
    assert!(com.iter().all(|c| c.abs() < 1e-12));
}

#[test]
fn repeated_call_is_bit_identical() {
    let f = fixture(4, DenoiserConfig::default(), 2.0);
    let ctx = f.net.prepare(f.context.clone()).unwrap();
    let a = f.net.predict(&f.params, &f.state, 2.0, &ctx).unwrap();
    let b = f.net.predict(&f.params, &f.state, 2.0, &ctx).unwrap();
    assert_eq!(a, b);
}

#[test]
fn time_change_moves_every_embedding() {
    let f = fixture(5, DenoiserConfig::default(), 1.0);
    let ids = &f.net.ids;
    let embed = |t: f64| {
        let mut g = Graph::inference();
        let p = g.bind(&f.params, false);
        let tf = g.constant(time_features(t, f.net.config.time_frequencies));
        let e = g.linear(tf, p.get(ids.time_w), p.get(ids.time_b)).unwrap();
        g.value(e).clone()
    };
    let (a, b) = (embed(1.0), embed(1.5));
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x != y));
}

#[test]
fn identical_nodes_get_identical_embeddings() {
    let net = Denoiser::new(DenoiserConfig::default()).unwrap();
    let params = net.init_params(&mut substream(6, "init"));
    let mut g = Graph::inference();
    let p = g.bind(&params, false);
    let h = g.constant(Tensor::matrix(2, 5, vec![0., 1., 0., 0., 0., 0., 1., 0., 0., 0.]).unwrap());
    let e = super::forward::embed_for_tests(&mut g, &p, net.ids.scaffold, h);
    let v = g.value(e);
    assert_eq!(v.row(0), v.row(1));
}

#[test]
fn zero_gates_leave_coordinates_unchanged() {
    let t = 0.7;
    let mut f = fixture(7, DenoiserConfig::default(), t);
    for l in &f.net.ids.layers {
        for id in [l.gate.w2, l.gate.b2] {
            f.params.tensors_mut()[id].scale_in_place(0.0);
        }
    }
    let ctx = f.net.prepare(f.context.clone()).unwrap();
    let (x, _) = f.net.predict(&f.params, &f.state, t, &ctx).unwrap();
    assert!(x.max_abs_diff(&f.state.x) < 1e-13);
}

#[test]
fn rotation_equivariance_and_feature_invariance() {
    for seed in 0..5u64 {
        let t = [0.01, 0.3, 1.0, 4.0, 20.0][seed as usize];
        let mut f = fixture(seed + 10, DenoiserConfig::default(), t);
        boost_gates(&f.net, &mut f.params);
        let ctx = f.net.prepare(f.context.clone()).unwrap();
        let (x, h) = f.net.predict(&f.params, &f.state, t, &ctx).unwrap();

        let r = rotation(&mut substream(seed, "rot"));
        let rotated_ctx = MolecularContext {
            pocket: rotate_atoms(&r, &f.context.pocket),
            groups: rotate_atoms(&r, &f.context.groups),
        };
        let state = ScaffoldState::new(rotate_tensor(&r, &f.state.x), f.state.h.clone()).unwrap();
        let ctx_r = f.net.prepare(rotated_ctx).unwrap();
        let (xr, hr) = f.net.predict(&f.params, &state, t, &ctx_r).unwrap();

        assert_eq!(h, hr, "features must be exactly invariant (seed {seed})");
        let expected = rotate_tensor(&r, &x);
        let scale = x.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        assert!(xr.max_abs_diff(&expected) <= 1e-9 * scale, "seed {seed}");
        let moved = x.max_abs_diff(&f.state.x);
        assert!(moved > 1e-3, "coordinate updates should be non-trivial ({moved})");
    }
}

#[test]
fn translation_is_absorbed_by_recentering() {
    let t = 0.5;
    let f = fixture(21, DenoiserConfig::default(), t);
    let ctx = f.net.prepare(f.context.clone()).unwrap();
    let (x, h) = f.net.predict(&f.params, &f.state, t, &ctx).unwrap();

    let shift = [3.0, -1.5, 0.25];
    let moved = |atoms: &[Atom]| -> Vec<Atom> {
        atoms.iter().map(|a| Atom::new(a.element, crate::geometry::add(&a.position, &shift))).collect()
    };
    let mut xs = f.state.x.clone();
    for i in 0..xs.rows() {
        for (v, s) in xs.row_mut(i).iter_mut().zip(shift) {
            *v += s;
        }
    }
    let com = ScaffoldState::new(xs.clone(), f.state.h.clone()).unwrap().center_of_mass();
    let back = |atoms: Vec<Atom>| -> Vec<Atom> {
        atoms.iter().map(|a| Atom::new(a.element, crate::geometry::sub(&a.position, &com))).collect()
    };
    crate::geometry::center_all(&mut xs);
    let ctx_t = f
        .net
        .prepare(MolecularContext {
            pocket: back(moved(&f.context.pocket)),
            groups: back(moved(&f.context.groups)),
        })
        .unwrap();
    let (xt, ht) = f.net.predict(&f.params, &ScaffoldState::new(xs, f.state.h.clone()).unwrap(), t, &ctx_t).unwrap();
    assert!(x.max_abs_diff(&xt) < 1e-9);
    assert!(h.max_abs_diff(&ht) < 1e-9);
}

#[test]
fn permutation_equivariance() {
    let t = 0.9;
    let mut f = fixture(30, DenoiserConfig::default(), t);
    boost_gates(&f.net, &mut f.params);
    let ctx = f.net.prepare(f.context.clone()).unwrap();
    let (x, h) = f.net.predict(&f.params, &f.state, t, &ctx).unwrap();
    let n = f.state.atom_count();
    let perm: Vec<usize> = (0..n).rev().collect();
    let permute = |m: &Tensor| {
        let data = perm.iter().flat_map(|&i| m.row(i).to_vec()).collect();
        Tensor::matrix(m.rows(), m.cols(), data).unwrap()
    };
    let state = ScaffoldState::new(permute(&f.state.x), permute(&f.state.h)).unwrap();
    let (xp, hp) = f.net.predict(&f.params, &state, t, &ctx).unwrap();
    assert!(xp.max_abs_diff(&permute(&x)) < 1e-12);
    assert!(hp.max_abs_diff(&permute(&h)) < 1e-12);

    let mut reversed = f.context.clone();
    reversed.pocket.reverse();
    let ctx_p = f.net.prepare(reversed).unwrap();
    let (xc, hc) = f.net.predict(&f.params, &f.state, t, &ctx_p).unwrap();
    assert!(xc.max_abs_diff(&x) < 1e-12 && hc.max_abs_diff(&h) < 1e-12);
}

#[test]
fn context_atoms_never_move() {
    let f = fixture(31, DenoiserConfig::default(), 1.0);
    let ctx = f.net.prepare(f.context.clone()).unwrap();
    let before = ctx.positions.clone();
    f.net.predict(&f.params, &f.state, 1.0, &ctx).unwrap();
    assert_eq!(before, ctx.positions);
}

#[test]
fn coincident_scaffold_atoms_do_not_produce_nan() {
    let mut f = fixture(32, DenoiserConfig::default(), 0.5);
    let p0 = f.state.x.point(0);
    f.state.x.row_mut(1).copy_from_slice(&p0);
    let ctx = f.net.prepare(f.context.clone()).unwrap();
    let (x, h) = f.net.predict(&f.params, &f.state, 0.5, &ctx).unwrap();
    assert!(x.all_finite() && h.all_finite());
}

#[test]
fn non_finite_input_is_reported() {
    let mut f = fixture(33, DenoiserConfig::default(), 0.5);
    f.state.x.set(0, 0, f64::NAN);
    let ctx = f.net.prepare(f.context.clone()).unwrap();
    let err = f.net.predict(&f.params, &f.state, 0.5, &ctx).unwrap_err();
    assert!(matches!(err, Error::NonFinite { .. }), "{err}");
    let mut f = fixture(33, DenoiserConfig::default(), 0.5);
    f.params.tensors_mut()[f.net.ids.layers[1].node_w2].set(0, 0, f64::INFINITY);
    let err = f.net.predict(&f.params, &f.state, 0.5, &ctx).unwrap_err();
    assert!(err.to_string().contains("layer1"), "{err}");
}

#[test]
fn gradient_matches_finite_differences() {
    let t = 0.8;
    let config = DenoiserConfig { layers: 2, hidden: 12, ..Default::default() };
    let mut f = fixture(40, config, t);
    boost_gates(&f.net, &mut f.params);
    let ctx = f.net.prepare(f.context.clone()).unwrap();
    let target_x = Tensor::zeros(f.state.atom_count(), 3);
    let target_h = f.state.h.clone();
    let report = finite_diff_check(
        |g, p| {
            let out = f.net.forward(g, p, &f.state, t, &ctx)?;
            let tx = g.constant(target_x.clone());
            let th = g.constant(target_h.clone());
            let lx = g.mse(out.x, tx)?;
            let lh = g.mse(out.h, th)?;
            Ok(g.add(lx, lh)?)
        },
        &f.params,
        GradCheckOptions { per_tensor: 6, step: 1e-4, ..Default::default() },
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}
