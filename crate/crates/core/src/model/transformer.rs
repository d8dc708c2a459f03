//! Forward and reverse passes of the set transformer.
//!
//! Rows `0..n_ctx` of an episode are labelled context tokens, the rest are
//! queries. Context tokens attend to every context token; a query token
//! attends to the context and to itself only, so queries never interact.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut1, ArrayViewMut2};

use super::episode::EncodedEpisode;
use super::layout::{LayerSlots, ParamLayout};
use super::ops::{gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, softmax_rows, LnCache};
use super::{DomainInput, ModelConfig};
use crate::encoding::time2vec_into;

struct HeadCache {
    p_ctx: Array2<f64>,
    p_query: Array2<f64>,
    p_self: Array1<f64>,
}

struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    qkv: Array2<f64>,
    heads: Vec<HeadCache>,
    att: Array2<f64>,
    ln2: LnCache,
    b: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

pub(crate) struct ForwardPass {
    u: Array2<f64>,
    t2v_arg: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    lnf: Option<LnCache>,
    zf: Array2<f64>,
    /// Query probabilities, `n_query × max_classes`; absent classes are 0.
    pub probs: Array2<f64>,
}

/// Build the `[x ‖ domain encoding]` input rows; also returns the Time2Vec
/// arguments `ωc + φ` needed by the reverse pass.
fn input_rows(params: &[f64], layout: &ParamLayout, cfg: &ModelConfig, ep: &EncodedEpisode) -> (Array2<f64>, Option<Array2<f64>>) {
    let n = ep.len();
    let mf = cfg.max_features;
    let mut u = Array2::zeros((n, cfg.input_dim()));
    u.slice_mut(s![.., ..mf]).assign(&ep.x);
    match cfg.domain_input {
        DomainInput::Time2Vec => {
            let omega = layout.t2v_omega.as_ref().unwrap().vec(params);
            let phi = layout.t2v_phi.as_ref().unwrap().vec(params);
            let m = cfg.t2v_dim;
            let mut arg = Array2::zeros((n, m));
            let mut buf = vec![0.0; m];
            for i in 0..n {
                let c = ep.c[i];
                for k in 0..m {
                    arg[[i, k]] = omega[k] * c + phi[k];
                }
                time2vec_into(c, omega.as_slice().unwrap(), phi.as_slice().unwrap(), &mut buf);
                for k in 0..m {
                    u[[i, mf + k]] = buf[k];
                }
            }
            (u, Some(arg))
        }
        DomainInput::Scalar => {
            for i in 0..n {
                u[[i, mf]] = ep.c[i];
            }
            (u, None)
        }
    }
}

fn attention(qkv: &Array2<f64>, n_ctx: usize, heads: usize, keep: bool) -> (Array2<f64>, Vec<HeadCache>) {
    let n = qkv.nrows();
    let d = qkv.ncols() / 3;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let nq = n - n_ctx;
    let mut att = Array2::zeros((n, d));
    let mut caches = Vec::with_capacity(if keep { heads } else { 0 });
    for h in 0..heads {
        let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
        let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
        let v = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
        let (kc, vc) = (k.slice(s![..n_ctx, ..]), v.slice(s![..n_ctx, ..]));

        let mut p_ctx = Array2::zeros((n_ctx, n_ctx));
        general_mat_mul(scale, &q.slice(s![..n_ctx, ..]), &kc.t(), 0.0, &mut p_ctx);
        softmax_rows(p_ctx.view_mut());
        let mut out = att.slice_mut(s![..n_ctx, h * dh..(h + 1) * dh]);
        general_mat_mul(1.0, &p_ctx, &vc, 0.0, &mut out);

        let qq = q.slice(s![n_ctx.., ..]);
        let mut p_query = Array2::zeros((nq, n_ctx));
        general_mat_mul(scale, &qq, &kc.t(), 0.0, &mut p_query);
        let mut p_self = Array1::zeros(nq);
        for i in 0..nq {
            let s_self = scale * qq.row(i).dot(&k.row(n_ctx + i));
            let mut row = p_query.row_mut(i);
            let max = row.iter().copied().fold(s_self, f64::max);
            let mut sum = (s_self - max).exp();
            row.mapv_inplace(|x| {
                let e = (x - max).exp();
                sum += e;
                e
            });
            row.mapv_inplace(|x| x / sum);
            p_self[i] = (s_self - max).exp() / sum;
        }
        let mut out = att.slice_mut(s![n_ctx.., h * dh..(h + 1) * dh]);
        general_mat_mul(1.0, &p_query, &vc, 0.0, &mut out);
        for i in 0..nq {
            let ps = p_self[i];
            out.row_mut(i).scaled_add(ps, &v.row(n_ctx + i));
        }
        if keep {
            caches.push(HeadCache { p_ctx, p_query, p_self });
        }
    }
    (att, caches)
}

fn attention_backward(qkv: &Array2<f64>, n_ctx: usize, caches: &[HeadCache], datt: ArrayView2<f64>) -> Array2<f64> {
    let n = qkv.nrows();
    let d = qkv.ncols() / 3;
    let heads = caches.len();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let nq = n - n_ctx;
    let mut dqkv = Array2::zeros(qkv.raw_dim());
    for (h, hc) in caches.iter().enumerate() {
        let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
        let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
        let v = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
        let (qc, kc, vc) = (q.slice(s![..n_ctx, ..]), k.slice(s![..n_ctx, ..]), v.slice(s![..n_ctx, ..]));
        let dout = datt.slice(s![.., h * dh..(h + 1) * dh]);
        let (doc, doq) = (dout.slice(s![..n_ctx, ..]), dout.slice(s![n_ctx.., ..]));

        let mut dq = Array2::<f64>::zeros((n, dh));
        let mut dk = Array2::<f64>::zeros((n, dh));
        let mut dv = Array2::<f64>::zeros((n, dh));

        // context block
        let mut dp = doc.dot(&vc.t());
        general_mat_mul(1.0, &hc.p_ctx.t(), &doc, 1.0, &mut dv.slice_mut(s![..n_ctx, ..]));
        softmax_backward_in_place(&hc.p_ctx, dp.view_mut(), None);
        general_mat_mul(scale, &dp, &kc, 0.0, &mut dq.slice_mut(s![..n_ctx, ..]));
        general_mat_mul(scale, &dp.t(), &qc, 1.0, &mut dk.slice_mut(s![..n_ctx, ..]));

        // query block
        if nq > 0 {
            let qq = q.slice(s![n_ctx.., ..]);
            let kq = k.slice(s![n_ctx.., ..]);
            let vq = v.slice(s![n_ctx.., ..]);
            let mut dpq = doq.dot(&vc.t());
            general_mat_mul(1.0, &hc.p_query.t(), &doq, 1.0, &mut dv.slice_mut(s![..n_ctx, ..]));
            let mut ds_self = Array1::zeros(nq);
            for i in 0..nq {
                let dps = doq.row(i).dot(&vq.row(i));
                ds_self[i] = dps;
                dv.row_mut(n_ctx + i).scaled_add(hc.p_self[i], &doq.row(i));
            }
            softmax_backward_in_place(&hc.p_query, dpq.view_mut(), Some((&hc.p_self, &mut ds_self)));
            general_mat_mul(scale, &dpq, &kc, 0.0, &mut dq.slice_mut(s![n_ctx.., ..]));
            general_mat_mul(scale, &dpq.t(), &qq, 1.0, &mut dk.slice_mut(s![..n_ctx, ..]));
            for i in 0..nq {
                let g = scale * ds_self[i];
                dq.row_mut(n_ctx + i).scaled_add(g, &kq.row(i));
                dk.row_mut(n_ctx + i).scaled_add(g, &qq.row(i));
            }
        }
        dqkv.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&dq);
        dqkv.slice_mut(s![.., d + h * dh..d + (h + 1) * dh]).assign(&dk);
        dqkv.slice_mut(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]).assign(&dv);
    }
    dqkv
}

/// Turn `dP` into `dS` for a row softmax. `extra` carries one additional
/// softmax column per row (the self score) as `(p, dp)`; `dp` is overwritten
/// with its `dS`.
fn softmax_backward_in_place(p: &Array2<f64>, mut dp: ArrayViewMut2<f64>, mut extra: Option<(&Array1<f64>, &mut Array1<f64>)>) {
    for i in 0..p.nrows() {
        let pr = p.row(i);
        let mut dr = dp.row_mut(i);
        let mut r: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
        if let Some((ps, dps)) = extra.as_ref() {
            r += ps[i] * dps[i];
        }
        for (d, &pv) in dr.iter_mut().zip(pr.iter()) {
            *d = pv * (*d - r);
        }
        if let Some((ps, dps)) = extra.as_mut() {
            dps[i] = ps[i] * (dps[i] - r);
        }
    }
}

fn layer_forward(params: &[f64], ls: &LayerSlots, h: &mut Array2<f64>, n_ctx: usize, heads: usize, keep: bool) -> Option<LayerCache> {
    let (a, ln1) = layer_norm(h.view(), ls.ln1_g.vec(params), ls.ln1_b.vec(params));
    let qkv = linear(a.view(), ls.wqkv.mat(params), ls.bqkv.vec(params));
    let (att, heads_cache) = attention(&qkv, n_ctx, heads, keep);
    let proj = linear(att.view(), ls.wo.mat(params), ls.bo.vec(params));
    *h += &proj;
    let (b, ln2) = layer_norm(h.view(), ls.ln2_g.vec(params), ls.ln2_b.vec(params));
    let pre = linear(b.view(), ls.w1.mat(params), ls.b1.vec(params));
    let act = pre.mapv(gelu);
    let out = linear(act.view(), ls.w2.mat(params), ls.b2.vec(params));
    *h += &out;
    keep.then_some(LayerCache { ln1, a, qkv, heads: heads_cache, att, ln2, b, pre, act })
}

/// Run the network. With `keep` the activations needed by [`backward`] are
/// retained; without it attention maps are dropped as soon as they are used.
pub(crate) fn forward(params: &[f64], layout: &ParamLayout, cfg: &ModelConfig, ep: &EncodedEpisode, keep: bool) -> ForwardPass {
    let n_ctx = ep.n_ctx;
    let (u, t2v_arg) = input_rows(params, layout, cfg, ep);
    let mut h = linear(u.view(), layout.w_in.mat(params), layout.b_in.vec(params));
    let label_emb = layout.label_emb.mat(params);
    let query_emb = layout.query_emb.vec(params);
    for i in 0..ep.len() {
        let mut row = h.row_mut(i);
        if i < n_ctx {
            row += &label_emb.row(ep.ctx_labels[i]);
        } else {
            row += &query_emb;
        }
    }
    let mut layers = Vec::with_capacity(layout.layers.len());
    for ls in &layout.layers {
        if let Some(c) = layer_forward(params, ls, &mut h, n_ctx, cfg.num_heads, keep) {
            layers.push(c);
        }
    }
    let hq = h.slice(s![n_ctx.., ..]);
    let (zf, lnf) = layer_norm(hq, layout.lnf_g.vec(params), layout.lnf_b.vec(params));
    let mut probs = linear(zf.view(), layout.w_out.mat(params), layout.b_out.vec(params));
    for mut row in probs.rows_mut() {
        let max = row
            .iter()
            .zip(&ep.class_present)
            .filter(|(_, &p)| p)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (v, &present) in row.iter_mut().zip(&ep.class_present) {
            *v = if present { (*v - max).exp() } else { 0.0 };
            sum += *v;
        }
        row.mapv_inplace(|v| v / sum);
    }
    ForwardPass {
        u: if keep { u } else { Array2::zeros((0, 0)) },
        t2v_arg: if keep { t2v_arg } else { None },
        layers,
        lnf: keep.then_some(lnf),
        zf: if keep { zf } else { Array2::zeros((0, 0)) },
        probs,
    }
}

/// Summed cross-entropy of the query labels.
pub(crate) fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    labels.iter().enumerate().map(|(i, &y)| -probs[[i, y]].ln()).sum()
}

/// Accumulate into `grads` the gradient of `weight · Σ CE` for one episode.
pub(crate) fn backward(
    params: &[f64],
    grads: &mut [f64],
    layout: &ParamLayout,
    cfg: &ModelConfig,
    ep: &EncodedEpisode,
    fp: &ForwardPass,
    labels: &[usize],
    weight: f64,
) {
    let n_ctx = ep.n_ctx;
    let n = ep.len();
    let mut dlogits = fp.probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        dlogits[[i, y]] -= 1.0;
    }
    dlogits *= weight;
    let (dw, db) = split_pair(grads, &layout.w_out, &layout.b_out);
    let dzf = linear_backward(fp.zf.view(), layout.w_out.mat(params), dlogits.view(), dw, db);

    let (dg, db) = split_ln(grads, &layout.lnf_g, &layout.lnf_b);
    let dhq = layer_norm_backward(fp.lnf.as_ref().unwrap(), layout.lnf_g.vec(params), dzf.view(), dg, db);
    let mut dh = Array2::zeros((n, cfg.embed_dim));
    dh.slice_mut(s![n_ctx.., ..]).assign(&dhq);

    for (ls, lc) in layout.layers.iter().zip(&fp.layers).rev() {
        // feed-forward block
        let (dw, db) = split_pair(grads, &ls.w2, &ls.b2);
        let dact = linear_backward(lc.act.view(), ls.w2.mat(params), dh.view(), dw, db);
        let dpre = &dact * &lc.pre.mapv(gelu_grad);
        let (dw, db) = split_pair(grads, &ls.w1, &ls.b1);
        let db_ln = linear_backward(lc.b.view(), ls.w1.mat(params), dpre.view(), dw, db);
        let (dg, dbeta) = split_ln(grads, &ls.ln2_g, &ls.ln2_b);
        dh += &layer_norm_backward(&lc.ln2, ls.ln2_g.vec(params), db_ln.view(), dg, dbeta);

        // attention block
        let (dw, db) = split_pair(grads, &ls.wo, &ls.bo);
        let datt = linear_backward(lc.att.view(), ls.wo.mat(params), dh.view(), dw, db);
        let dqkv = attention_backward(&lc.qkv, n_ctx, &lc.heads, datt.view());
        let (dw, db) = split_pair(grads, &ls.wqkv, &ls.bqkv);
        let da = linear_backward(lc.a.view(), ls.wqkv.mat(params), dqkv.view(), dw, db);
        let (dg, dbeta) = split_ln(grads, &ls.ln1_g, &ls.ln1_b);
        dh += &layer_norm_backward(&lc.ln1, ls.ln1_g.vec(params), da.view(), dg, dbeta);
    }

    // token embedding
    {
        let mut dlabel = layout.label_emb.mat_mut(grads);
        for i in 0..n_ctx {
            let mut row = dlabel.row_mut(ep.ctx_labels[i]);
            row += &dh.row(i);
        }
    }
    {
        let mut dquery = layout.query_emb.vec_mut(grads);
        for i in n_ctx..n {
            dquery += &dh.row(i);
        }
    }
    let (dw, db) = split_pair(grads, &layout.w_in, &layout.b_in);
    let du = linear_backward(fp.u.view(), layout.w_in.mat(params), dh.view(), dw, db);

    if let (Some(arg), Some(so), Some(sp)) = (&fp.t2v_arg, &layout.t2v_omega, &layout.t2v_phi) {
        let mf = cfg.max_features;
        let m = cfg.t2v_dim;
        let mut d_omega = vec![0.0; m];
        let mut d_phi = vec![0.0; m];
        for i in 0..n {
            let c = ep.c[i];
            for k in 0..m {
                let g = du[[i, mf + k]];
                let local = if k == 0 { g } else { g * arg[[i, k]].cos() };
                d_omega[k] += local * c;
                d_phi[k] += local;
            }
        }
        for k in 0..m {
            grads[so.offset + k] += d_omega[k];
            grads[sp.offset + k] += d_phi[k];
        }
    }
}

/// Mutable views of a weight slot and the bias slot that follows it.
fn split_pair<'a>(
    grads: &'a mut [f64],
    w: &super::layout::Slot,
    b: &super::layout::Slot,
) -> (ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>) {
    debug_assert_eq!(w.offset + w.len(), b.offset);
    let (left, right) = grads.split_at_mut(b.offset);
    let wv = ArrayViewMut2::from_shape((w.rows, w.cols), &mut left[w.range()]).unwrap();
    let bv = ArrayViewMut1::from(&mut right[..b.len()]);
    (wv, bv)
}

/// Mutable views of a layer-norm gain slot and the bias slot that follows it.
fn split_ln<'a>(grads: &'a mut [f64], g: &super::layout::Slot, b: &super::layout::Slot) -> (ArrayViewMut1<'a, f64>, ArrayViewMut1<'a, f64>) {
    debug_assert_eq!(g.offset + g.len(), b.offset);
    let (left, right) = grads.split_at_mut(b.offset);
    (ArrayViewMut1::from(&mut left[g.range()]), ArrayViewMut1::from(&mut right[..b.len()]))
}
