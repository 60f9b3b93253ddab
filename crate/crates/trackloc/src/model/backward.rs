//! Exact gradients of the NLL loss through the full model, with optional
//! truncation of backpropagation through time: the forward hidden state is
//! carried across segment boundaries but gradient flow is cut there.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2};

use super::forward::{CellCache, ForwardCache, StreamCache};
use super::{CellParams, FusionMode, ModelParams, StreamParams};
use crate::error::{Error, Result};

/// `m += u v^T`.
fn add_outer(mut m: ArrayViewMut2<f64>, u: ArrayView1<f64>, v: ArrayView1<f64>) {
    for (i, &ui) in u.iter().enumerate() {
        if ui == 0.0 {
            continue;
        }
        let mut row = m.row_mut(i);
        for (j, &vj) in v.iter().enumerate() {
            row[j] += ui * vj;
        }
    }
}

/// d(loss)/d(logits) for a softmax + NLL head: `p - onehot(y)` on labeled
/// frames, zero elsewhere.
fn dlogits_from_probs(probs: &Array2<f64>, labels: &[Option<u32>]) -> Result<Array2<f64>> {
    let mut d = Array2::zeros(probs.raw_dim());
    for (t, label) in labels.iter().enumerate() {
        let Some(y) = *label else { continue };
        let y = y as usize;
        if y >= probs.ncols() {
            return Err(Error::data(format!(
                "label {y} out of range for {} outputs",
                probs.ncols()
            )));
        }
        let mut row = d.row_mut(t);
        row.assign(&probs.row(t));
        row[y] -= 1.0;
    }
    Ok(d)
}

/// Previous hidden (and LSTM cell) state of a level, zero at t = 0.
fn prev_state(cache: &CellCache, t: usize, hidden: usize) -> (Array1<f64>, Array1<f64>) {
    if t == 0 {
        return (Array1::zeros(hidden), Array1::zeros(hidden));
    }
    let h = cache.h().row(t - 1).to_owned();
    let c = match cache {
        CellCache::Lstm { c, .. } => c.row(t - 1).to_owned(),
        _ => Array1::zeros(hidden),
    };
    (h, c)
}

/// One backward step through a cell at frame `t`. Accumulates parameter
/// gradients into `grad` and returns `(dx, dh_prev, dc_prev)`.
fn cell_backward_step(
    cell: &CellParams,
    grad: &mut CellParams,
    cache: &CellCache,
    t: usize,
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
    dh: &Array1<f64>,
    dc_carry: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
    match (cell, grad, cache) {
        (CellParams::Gru(p), CellParams::Gru(g), CellCache::Gru { z, r, hbar, .. }) => {
            let z = z.row(t);
            let r = r.row(t);
            let hbar = hbar.row(t);
            let rh = &r * &h_prev;

            let dz = dh * &(&h_prev - &hbar);
            let dhbar = dh * &z.mapv(|v| 1.0 - v);
            let mut dh_prev = dh * &z;

            let da_h = &dhbar * &hbar.mapv(|v| 1.0 - v * v);
            add_outer(g.w_h.view_mut(), da_h.view(), x);
            add_outer(g.u_h.view_mut(), da_h.view(), rh.view());
            g.b_h += &da_h;
            let drh = p.u_h.t().dot(&da_h);
            let dr = &drh * &h_prev;
            dh_prev += &(&drh * &r);

            let da_r = &dr * &r.mapv(|v| v * (1.0 - v));
            add_outer(g.w_r.view_mut(), da_r.view(), x);
            add_outer(g.u_r.view_mut(), da_r.view(), h_prev);
            g.b_r += &da_r;
            dh_prev += &p.u_r.t().dot(&da_r);

            let da_z = &dz * &z.mapv(|v| v * (1.0 - v));
            add_outer(g.w_z.view_mut(), da_z.view(), x);
            add_outer(g.u_z.view_mut(), da_z.view(), h_prev);
            g.b_z += &da_z;
            dh_prev += &p.u_z.t().dot(&da_z);

            let dx = p.w_z.t().dot(&da_z) + p.w_r.t().dot(&da_r) + p.w_h.t().dot(&da_h);
            let dc_prev = Array1::zeros(dh.len());
            (dx, dh_prev, dc_prev)
        }
        (
            CellParams::Lstm(p),
            CellParams::Lstm(g),
            CellCache::Lstm { f, i, o, g: gc, c, .. },
        ) => {
            let f = f.row(t);
            let i = i.row(t);
            let o = o.row(t);
            let cand = gc.row(t);
            let c_t = c.row(t);
            let tc = c_t.mapv(f64::tanh);

            let do_ = dh * &tc;
            let dc = dc_carry + &(dh * &o * &tc.mapv(|v| 1.0 - v * v));
            let df = &dc * &c_prev;
            let di = &dc * &cand;
            let dg = &dc * &i;
            let dc_prev = &dc * &f;

            let da_f = &df * &f.mapv(|v| v * (1.0 - v));
            let da_i = &di * &i.mapv(|v| v * (1.0 - v));
            let da_o = &do_ * &o.mapv(|v| v * (1.0 - v));
            let da_g = &dg * &cand.mapv(|v| 1.0 - v * v);

            add_outer(g.w_f.view_mut(), da_f.view(), x);
            add_outer(g.u_f.view_mut(), da_f.view(), h_prev);
            g.b_f += &da_f;
            add_outer(g.w_i.view_mut(), da_i.view(), x);
            add_outer(g.u_i.view_mut(), da_i.view(), h_prev);
            g.b_i += &da_i;
            add_outer(g.w_o.view_mut(), da_o.view(), x);
            add_outer(g.u_o.view_mut(), da_o.view(), h_prev);
            g.b_o += &da_o;
            add_outer(g.w_c.view_mut(), da_g.view(), x);
            add_outer(g.u_c.view_mut(), da_g.view(), h_prev);
            g.b_c += &da_g;

            let dh_prev = p.u_f.t().dot(&da_f)
                + p.u_i.t().dot(&da_i)
                + p.u_o.t().dot(&da_o)
                + p.u_c.t().dot(&da_g);
            let dx = p.w_f.t().dot(&da_f)
                + p.w_i.t().dot(&da_i)
                + p.w_o.t().dot(&da_o)
                + p.w_c.t().dot(&da_g);
            (dx, dh_prev, dc_prev)
        }
        (CellParams::Fc(p), CellParams::Fc(g), CellCache::Fc { a1, h }) => {
            let a1 = a1.row(t);
            let h = h.row(t);
            let da2 = dh * &h.mapv(|v| 1.0 - v * v);
            add_outer(g.w2.view_mut(), da2.view(), a1);
            let da1 = p.w2.t().dot(&da2) * &a1.mapv(|v| 1.0 - v * v);
            add_outer(g.w1.view_mut(), da1.view(), x);
            g.b1 += &da1;
            let dx = p.w1.t().dot(&da1);
            let zeros = Array1::zeros(dh.len());
            (dx, zeros.clone(), zeros)
        }
        _ => unreachable!("gradient and cache variants match the cell"),
    }
}

/// BPTT through one stream given d(loss)/d(stream output) per frame.
fn stream_backward(
    sp: &StreamParams,
    gs: &mut StreamParams,
    x_raw: ArrayView2<f64>,
    sc: &StreamCache,
    dout: &Array2<f64>,
    bptt_len: usize,
) {
    let t_len = dout.nrows();
    let hidden = sp.cell1.hidden_dim();
    let mut carry_dh1 = Array1::zeros(hidden);
    let mut carry_dc1 = Array1::zeros(hidden);
    let mut carry_dh2 = Array1::zeros(hidden);
    let mut carry_dc2 = Array1::zeros(hidden);

    for t in (0..t_len).rev() {
        let dh2 = dout.slice(s![t, hidden..]).to_owned() + &carry_dh2;
        let (h2_prev, c2_prev) = prev_state(&sc.cell2, t, hidden);
        let (dx2, ndh2, ndc2) = cell_backward_step(
            &sp.cell2,
            &mut gs.cell2,
            &sc.cell2,
            t,
            sc.cell1.h().row(t),
            h2_prev.view(),
            c2_prev.view(),
            &dh2,
            &carry_dc2,
        );

        let dh1 = dout.slice(s![t, ..hidden]).to_owned() + &dx2 + &carry_dh1;
        let (h1_prev, c1_prev) = prev_state(&sc.cell1, t, hidden);
        let (dx1, ndh1, ndc1) = cell_backward_step(
            &sp.cell1,
            &mut gs.cell1,
            &sc.cell1,
            t,
            sc.u.row(t),
            h1_prev.view(),
            c1_prev.view(),
            &dh1,
            &carry_dc1,
        );

        // input normalization: u = tanh(w x + b)
        let u_t = sc.u.row(t);
        let da = &dx1 * &u_t.mapv(|v| 1.0 - v * v);
        add_outer(gs.input_fc.w.view_mut(), da.view(), x_raw.row(t));
        gs.input_fc.b += &da;

        carry_dh1 = ndh1;
        carry_dc1 = ndc1;
        carry_dh2 = ndh2;
        carry_dc2 = ndc2;
        // cut gradient flow at segment starts
        if bptt_len > 0 && t % bptt_len == 0 {
            carry_dh1.fill(0.0);
            carry_dc1.fill(0.0);
            carry_dh2.fill(0.0);
            carry_dc2.fill(0.0);
        }
    }
}

/// Gradients of [`super::nll_loss`] w.r.t. every model parameter.
///
/// `bptt_len = 0` (or any value >= T) disables truncation; otherwise the
/// sequence is split into segments `[0, L), [L, 2L), ...` and no gradient
/// flows across a segment boundary.
pub fn backward(
    m: &ModelParams,
    feats: &[ArrayView2<f64>],
    cache: &ForwardCache,
    labels: &[Option<u32>],
    bptt_len: usize,
) -> Result<ModelParams> {
    let t_len = cache.probs.nrows();
    if labels.len() != t_len {
        return Err(Error::data(format!(
            "{} labels for {} cached frames",
            labels.len(),
            t_len
        )));
    }
    if feats.len() != m.streams.len() || cache.streams.len() != m.streams.len() {
        return Err(Error::data("feature/cache stream count does not match the model"));
    }

    let mut g = m.zeros_like();
    let block = m.dims.stream_out_dim();
    let n_out = m.dims.n_outputs();
    let mut douts: Vec<Array2<f64>> =
        m.streams.iter().map(|_| Array2::zeros((t_len, block))).collect();

    match m.dims.fusion {
        FusionMode::Single | FusionMode::FusionLayer => {
            let dlogits = dlogits_from_probs(&cache.probs, labels)?;
            let cl = m.classifier.as_ref().expect("fused classifier present");
            let gcl = g.classifier.as_mut().expect("fused classifier present");
            for t in 0..t_len {
                let dl = dlogits.row(t);
                for (si, sc) in cache.streams.iter().enumerate() {
                    let cols = si * block..(si + 1) * block;
                    add_outer(gcl.w.slice_mut(s![.., cols.clone()]), dl, sc.out.row(t));
                    let w_block = cl.w.slice(s![.., cols]);
                    let mut drow = douts[si].row_mut(t);
                    drow += &w_block.t().dot(&dl);
                }
                gcl.b += &dl;
            }
        }
        FusionMode::Gating => {
            let dlogits = dlogits_from_probs(&cache.probs, labels)?;
            let gat = m.gating.as_ref().expect("gating weights present");
            let ggat = g.gating.as_mut().expect("gating weights present");
            for si in 0..m.streams.len() {
                let sl = cache.streams[si].logits.as_ref().expect("stream logits cached");
                let cl = m.streams[si].classifier.as_ref().expect("per-stream classifier");
                let gcl = g.streams[si].classifier.as_mut().expect("per-stream classifier");
                for t in 0..t_len {
                    let mut dsl = Array1::zeros(n_out);
                    for c in 0..n_out {
                        let dlc = dlogits[[t, c]];
                        dsl[c] = dlc * gat[[c, si]];
                        ggat[[c, si]] += dlc * sl[[t, c]];
                    }
                    add_outer(gcl.w.view_mut(), dsl.view(), cache.streams[si].out.row(t));
                    gcl.b += &dsl;
                    let mut drow = douts[si].row_mut(t);
                    drow += &cl.w.t().dot(&dsl);
                }
            }
        }
        FusionMode::Average => {
            let n_streams = m.streams.len() as f64;
            for si in 0..m.streams.len() {
                let sprobs = cache.streams[si].probs.as_ref().expect("stream probs cached");
                let cl = m.streams[si].classifier.as_ref().expect("per-stream classifier");
                let gcl = g.streams[si].classifier.as_mut().expect("per-stream classifier");
                for (t, label) in labels.iter().enumerate() {
                    let Some(y) = *label else { continue };
                    let y = y as usize;
                    if y >= n_out {
                        return Err(Error::data(format!(
                            "label {y} out of range for {n_out} outputs"
                        )));
                    }
                    // L = -ln(mean_s q_s); softmax vector-Jacobian product
                    let q = sprobs.row(t);
                    let p_y = cache.probs[[t, y]];
                    let dq_y = -1.0 / (n_streams * p_y);
                    let dot = q[y] * dq_y;
                    let mut dsl: Array1<f64> = q.mapv(|qc| -qc * dot);
                    dsl[y] += q[y] * dq_y;
                    add_outer(gcl.w.view_mut(), dsl.view(), cache.streams[si].out.row(t));
                    gcl.b += &dsl;
                    let mut drow = douts[si].row_mut(t);
                    drow += &cl.w.t().dot(&dsl);
                }
            }
        }
    }

    for (si, sp) in m.streams.iter().enumerate() {
        stream_backward(sp, &mut g.streams[si], feats[si], &cache.streams[si], &douts[si], bptt_len);
    }
    Ok(g)
}
