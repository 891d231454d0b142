use std::rc::Rc;

use log::warn;

use super::context::quantize;
use super::{time_features, Denoiser, Mlp2, PreparedContext};
use crate::autodiff::{Graph, ParamVars, Params, Tensor, TensorError, Var};
use crate::geometry::{dist, ScaffoldState};
use crate::Error;

/// Denoiser predictions, as graph nodes: coordinates `[n, 3]` (centered)
/// and class features `[n, 5]`.
#[derive(Clone, Copy, Debug)]
pub struct DenoiserOutput {
    pub x: Var,
    pub h: Var,
}

struct EdgeSet {
    receivers: Rc<[usize]>,
    senders: Rc<[usize]>,
    /// `[E, 2]`: scaled distance and its square.
    features: Tensor,
    /// Edges `0..scaffold_edges` are exactly those whose receiver is a scaffold atom.
    scaffold_edges: usize,
}

fn build_edges(work: &[[f64; 3]], n: usize, ctx: &PreparedContext, cutoff: f64, quantum: f64) -> EdgeSet {
    let total = work.len();
    let mut recv = Vec::new();
    let mut send = Vec::new();
    let mut dists = Vec::new();
    let mut coincident = 0usize;
    let mut push = |i: usize, j: usize, d: f64, recv: &mut Vec<usize>, send: &mut Vec<usize>| {
        recv.push(i);
        send.push(j);
        dists.push(d);
    };
    for i in 0..n {
        for j in 0..total {
            if i == j {
                continue;
            }
            let d = quantize(dist(&work[i], &work[j]), quantum);
            if d <= 0.0 {
                coincident += 1;
            } else if d <= cutoff {
                push(i, j, d, &mut recv, &mut send);
            }
        }
    }
    let scaffold_edges = recv.len();
    for i in n..total {
        for j in 0..n {
            let d = quantize(dist(&work[i], &work[j]), quantum);
            if d > 0.0 && d <= cutoff {
                push(i, j, d, &mut recv, &mut send);
            }
        }
    }
    for &(i, j, d) in &ctx.edges {
        push(i + n, j + n, d, &mut recv, &mut send);
    }
    if coincident > 0 {
        warn!("skipped {coincident} edges between coincident atoms");
    }
    let mut features = Vec::with_capacity(2 * dists.len());
    for d in &dists {
        let u = d / cutoff;
        features.push(u);
        features.push(u * u);
    }
    EdgeSet {
        features: Tensor::matrix(dists.len(), 2, features).expect("shape"),
        receivers: recv.into(),
        senders: send.into(),
        scaffold_edges,
    }
}

fn mlp2(g: &mut Graph, p: &ParamVars, ids: Mlp2, x: Var) -> Result<Var, TensorError> {
    let h = g.linear(x, p.get(ids.w1), p.get(ids.b1))?;
    let h = g.silu(h);
    g.linear(h, p.get(ids.w2), p.get(ids.b2))
}

impl Denoiser {
    /// Records `F_θ(x_t, h_t, t | context)` on `g`.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &ParamVars,
        state: &ScaffoldState,
        t: f64,
        ctx: &PreparedContext,
    ) -> Result<DenoiserOutput, Error> {
        let cfg = &self.config;
        let n = state.atom_count();
        if n == 0 {
            return Err(Error::EmptyScaffold);
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Invalid(format!("denoiser time must be positive and finite, got {t}")));
        }
        if !state.all_finite() {
            return Err(Error::NonFinite { layer: "input".into() });
        }
        let total = n + ctx.len();
        let c_in = cfg.input_scale(t);

        let mut x0 = state.x.clone();
        x0.scale_in_place(c_in);
        let mut h0 = state.h.clone();
        h0.scale_in_place(c_in);
        let mut work = x0.points();
        work.extend_from_slice(&ctx.positions);
        let edges = build_edges(&work, n, ctx, cfg.edge_cutoff, cfg.distance_quantum);

        let ids = &self.ids;
        let h_in = g.constant(h0);
        let mut blocks = vec![mlp2(g, p, ids.scaffold, h_in)?];
        if ctx.group_features.rows() > 0 {
            let f = g.constant(ctx.group_features.clone());
            blocks.push(mlp2(g, p, ids.group, f)?);
        }
        if ctx.pocket_features.rows() > 0 {
            let f = g.constant(ctx.pocket_features.clone());
            blocks.push(mlp2(g, p, ids.pocket, f)?);
        }
        let s = g.concat_rows(&blocks)?;
        let tf = g.constant(time_features(t, cfg.time_frequencies));
        let temb = g.linear(tf, p.get(ids.time_w), p.get(ids.time_b))?;
        let temb = g.broadcast_rows(temb, total)?;
        let mut s = g.add(s, temb)?;

        let mut xs = g.constant(x0);
        let context_pos = g.constant(Tensor::from_points(&ctx.positions));
        let dist_feat = g.constant(edges.features.clone());
        let scaffold_rows: Rc<[usize]> = (0..n).collect();
        let se = edges.scaffold_edges;
        let s_recv: Rc<[usize]> = edges.receivers[..se].into();
        let s_send: Rc<[usize]> = edges.senders[..se].into();

        for (l, lid) in ids.layers.iter().enumerate() {
            let ps = g.matmul(s, p.get(lid.msg_src))?;
            let pd = g.matmul(s, p.get(lid.msg_dst))?;
            let ps = g.gather_rows(ps, edges.receivers.clone())?;
            let pd = g.gather_rows(pd, edges.senders.clone())?;
            let pre = g.add(ps, pd)?;
            let df = g.matmul(dist_feat, p.get(lid.msg_dist))?;
            let pre = g.add(pre, df)?;
            let b1 = g.broadcast_rows(p.get(lid.msg_b1), edges.receivers.len())?;
            let pre = g.add(pre, b1)?;
            let m = g.silu(pre);
            let m = g.linear(m, p.get(lid.msg_w2), p.get(lid.msg_b2))?;
            let m = g.silu(m);

            let agg = g.scatter_add_rows(m, edges.receivers.clone(), total)?;
            let agg = g.scale(agg, 1.0 / cfg.message_norm);
            let us = g.matmul(s, p.get(lid.node_self))?;
            let ua = g.matmul(agg, p.get(lid.node_agg))?;
            let u = g.add(us, ua)?;
            let nb = g.broadcast_rows(p.get(lid.node_b1), total)?;
            let u = g.add(u, nb)?;
            let u = g.silu(u);
            let u = g.linear(u, p.get(lid.node_w2), p.get(lid.node_b2))?;
            s = g.add(s, u)?;

            if se > 0 {
                let ms = g.slice_rows(m, 0, se)?;
                let phi = mlp2(g, p, lid.gate, ms)?;
                let phi = g.clamp(phi, -cfg.coord_clamp, cfg.coord_clamp);
                let all = g.concat_rows(&[xs, context_pos])?;
                let xi = g.gather_rows(xs, s_recv.clone())?;
                let xj = g.gather_rows(all, s_send.clone())?;
                let diff = g.sub(xi, xj)?;
                let len = g.row_norm(diff)?;
                let inv = g.safe_recip(len);
                let w = g.mul(phi, inv)?;
                let w = g.broadcast_cols(w, 3)?;
                let step = g.mul(diff, w)?;
                let delta = g.scatter_add_rows(step, s_recv.clone(), n)?;
                xs = g.add(xs, delta)?;
            }
            if !g.value(s).all_finite() || !g.value(xs).all_finite() {
                return Err(Error::NonFinite { layer: format!("layer{l}") });
            }
        }

        let s_scaffold = g.gather_rows(s, scaffold_rows)?;
        let h = mlp2(g, p, ids.out, s_scaffold)?;
        let ones = g.constant(Tensor::filled(1, n, 1.0 / n as f64));
        let mean = g.matmul(ones, xs)?;
        let mean = g.broadcast_rows(mean, n)?;
        let x = g.sub(xs, mean)?;
        let x = g.scale(x, 1.0 / c_in);
        if !g.value(h).all_finite() || !g.value(x).all_finite() {
            return Err(Error::NonFinite { layer: "output".into() });
        }
        Ok(DenoiserOutput { x, h })
    }

    /// Forward pass without gradient tracking, returning `(x', h')`.
    pub fn predict(
        &self,
        params: &Params,
        state: &ScaffoldState,
        t: f64,
        ctx: &PreparedContext,
    ) -> Result<(Tensor, Tensor), Error> {
        let mut g = Graph::inference();
        let p = g.bind(params, false);
        let out = self.forward(&mut g, &p, state, t, ctx)?;
        Ok((g.value(out.x).clone(), g.value(out.h).clone()))
    }

    pub fn prepare(&self, context: crate::geometry::MolecularContext) -> Result<PreparedContext, Error> {
        PreparedContext::new(context, self.config.edge_cutoff, self.config.distance_quantum)
    }
}

#[cfg(test)]
pub(crate) fn embed_for_tests(g: &mut Graph, p: &ParamVars, ids: Mlp2, x: Var) -> Var {
    mlp2(g, p, ids, x).unwrap()
}
