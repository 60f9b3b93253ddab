//! Forward pass over a track: per-stream normalization, the two-cell
//! stack, fusion, softmax scores and the NLL loss.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use super::cell::{FcStep, GruStep, LstmStep};
use super::{CellKind, CellParams, FusionMode, ModelParams, StreamParams};
use crate::error::{Error, Result};

/// Maximum magnitude of a clamped log-probability inside the loss.
pub(crate) const LOG_PROB_FLOOR: f64 = -50.0;

/// Per-frame class probabilities for one track; column 0 is background.
#[derive(Debug, Clone)]
pub struct ScoreSequence {
    pub track_id: String,
    /// T x (C+1), each row a probability distribution.
    pub rows: Array2<f64>,
}

impl ScoreSequence {
    /// Checks that every row is a distribution. `tol` bounds the deviation
    /// of the row sum from 1 (forward output holds 1e-9; scores reloaded
    /// from 32-bit files hold 1e-6).
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (t, row) in self.rows.outer_iter().enumerate() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > tol || row.iter().any(|&p| !(0.0..=1.0 + tol).contains(&p)) {
                return Err(Error::data(format!(
                    "score row {t} of track {} is not a probability distribution (sum {sum})",
                    self.track_id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }
}

/// Stable softmax of one logit row.
pub fn softmax_into(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.mapv(|v| (v - max).exp());
    let sum = out.sum();
    out.mapv_inplace(|v| v / sum);
    out
}

/// Per-frame activations of one cell level, kept for backprop. All arrays
/// are T x H (T x 3H for the FC hidden layer).
#[derive(Debug, Clone)]
pub enum CellCache {
    Gru { z: Array2<f64>, r: Array2<f64>, hbar: Array2<f64>, h: Array2<f64> },
    Lstm { f: Array2<f64>, i: Array2<f64>, o: Array2<f64>, g: Array2<f64>, c: Array2<f64>, h: Array2<f64> },
    Fc { a1: Array2<f64>, h: Array2<f64> },
}

impl CellCache {
    fn new(kind: CellKind, t_len: usize, hidden: usize) -> Self {
        let z = || Array2::zeros((t_len, hidden));
        match kind {
            CellKind::Gru => CellCache::Gru { z: z(), r: z(), hbar: z(), h: z() },
            CellKind::Lstm => CellCache::Lstm { f: z(), i: z(), o: z(), g: z(), c: z(), h: z() },
            CellKind::Fc => CellCache::Fc { a1: Array2::zeros((t_len, 3 * hidden)), h: z() },
        }
    }

    pub fn h(&self) -> &Array2<f64> {
        match self {
            CellCache::Gru { h, .. } | CellCache::Lstm { h, .. } | CellCache::Fc { h, .. } => h,
        }
    }
}

/// Activations of one stream.
#[derive(Debug, Clone)]
pub struct StreamCache {
    /// T x d_norm normalized inputs (post-tanh).
    pub u: Array2<f64>,
    pub cell1: CellCache,
    pub cell2: CellCache,
    /// T x 2H memory output: [h1_t, h2_t].
    pub out: Array2<f64>,
    /// Per-stream logits (Average / Gating fusion).
    pub logits: Option<Array2<f64>>,
    /// Per-stream softmax (Average fusion).
    pub probs: Option<Array2<f64>>,
}

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub streams: Vec<StreamCache>,
    /// Final pre-softmax logits (absent for Average fusion).
    pub fused_logits: Option<Array2<f64>>,
    /// Final T x (C+1) probabilities.
    pub probs: Array2<f64>,
}

fn run_cell(
    cell: &CellParams,
    x: ArrayView1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
    cache: &mut CellCache,
    t: usize,
) -> (Array1<f64>, Array1<f64>) {
    match (cell, cache) {
        (CellParams::Gru(g), CellCache::Gru { z, r, hbar, h }) => {
            let GruStep { z: zs, r: rs, hbar: hb, h: hs } = g.step(x, h_prev.view());
            z.row_mut(t).assign(&zs);
            r.row_mut(t).assign(&rs);
            hbar.row_mut(t).assign(&hb);
            h.row_mut(t).assign(&hs);
            let zeros = Array1::zeros(hs.len());
            (hs, zeros)
        }
        (CellParams::Lstm(l), CellCache::Lstm { f, i, o, g, c, h }) => {
            let LstmStep { f: fs, i: is, o: os, g: gs, c: cs, h: hs } =
                l.step(x, h_prev.view(), c_prev.view());
            f.row_mut(t).assign(&fs);
            i.row_mut(t).assign(&is);
            o.row_mut(t).assign(&os);
            g.row_mut(t).assign(&gs);
            c.row_mut(t).assign(&cs);
            h.row_mut(t).assign(&hs);
            (hs, cs)
        }
        (CellParams::Fc(fc), CellCache::Fc { a1, h }) => {
            let FcStep { a1: a1s, h: hs } = fc.step(x);
            a1.row_mut(t).assign(&a1s);
            h.row_mut(t).assign(&hs);
            let zeros = Array1::zeros(hs.len());
            (hs, zeros)
        }
        _ => unreachable!("cache variant matches cell variant by construction"),
    }
}

fn run_stream(stream: &StreamParams, x: ArrayView2<f64>, kind: CellKind) -> StreamCache {
    let t_len = x.nrows();
    let hidden = stream.cell1.hidden_dim();
    let mut u = Array2::zeros((t_len, stream.input_fc.out_dim()));
    let mut cell1 = CellCache::new(kind, t_len, hidden);
    let mut cell2 = CellCache::new(kind, t_len, hidden);
    let mut out = Array2::zeros((t_len, 2 * hidden));

    let mut h1_prev = Array1::zeros(hidden);
    let mut c1_prev = Array1::zeros(hidden);
    let mut h2_prev = Array1::zeros(hidden);
    let mut c2_prev = Array1::zeros(hidden);
    for t in 0..t_len {
        let u_t = stream.input_fc.apply(x.row(t)).mapv(f64::tanh);
        u.row_mut(t).assign(&u_t);
        let (h1, c1) = run_cell(&stream.cell1, u_t.view(), &h1_prev, &c1_prev, &mut cell1, t);
        let (h2, c2) = run_cell(&stream.cell2, h1.view(), &h2_prev, &c2_prev, &mut cell2, t);
        out.slice_mut(s![t, ..hidden]).assign(&h1);
        out.slice_mut(s![t, hidden..]).assign(&h2);
        h1_prev = h1;
        c1_prev = c1;
        h2_prev = h2;
        c2_prev = c2;
    }
    StreamCache { u, cell1, cell2, out, logits: None, probs: None }
}

/// Scores a track: runs every stream and the configured fusion head.
/// `feats[i]` is the T x d_raw feature matrix for `m.streams[i]`.
pub fn forward(
    m: &ModelParams,
    feats: &[ArrayView2<f64>],
    track_id: &str,
) -> Result<(ScoreSequence, ForwardCache)> {
    if feats.len() != m.streams.len() {
        return Err(Error::data(format!(
            "fusion mode {} needs {} feature streams, got {}",
            m.dims.fusion.name(),
            m.streams.len(),
            feats.len()
        )));
    }
    let t_len = feats[0].nrows();
    if t_len == 0 {
        return Err(Error::data("cannot score an empty track"));
    }
    for (i, f) in feats.iter().enumerate() {
        if f.nrows() != t_len {
            return Err(Error::data(format!(
                "stream {} has {} frames, stream 0 has {t_len}",
                m.streams[i].tag.name(),
                f.nrows()
            )));
        }
        if f.ncols() != m.dims.d_raw {
            return Err(Error::data(format!(
                "stream {} features have dimension {}, model expects {}",
                m.streams[i].tag.name(),
                f.ncols(),
                m.dims.d_raw
            )));
        }
    }

    let mut streams: Vec<StreamCache> = m
        .streams
        .iter()
        .zip(feats)
        .map(|(sp, x)| run_stream(sp, *x, m.dims.cell))
        .collect();

    let n_out = m.dims.n_outputs();
    let (fused_logits, probs) = match m.dims.fusion {
        FusionMode::Single | FusionMode::FusionLayer => {
            let cl = m.classifier.as_ref().expect("fused classifier present");
            let block = m.dims.stream_out_dim();
            let mut logits = Array2::zeros((t_len, n_out));
            let mut probs = Array2::zeros((t_len, n_out));
            for t in 0..t_len {
                let mut row = cl.b.clone();
                for (si, sc) in streams.iter().enumerate() {
                    let w_block = cl.w.slice(s![.., si * block..(si + 1) * block]);
                    row += &w_block.dot(&sc.out.row(t));
                }
                probs.row_mut(t).assign(&softmax_into(row.view()));
                logits.row_mut(t).assign(&row);
            }
            (Some(logits), probs)
        }
        FusionMode::Average => {
            let mut probs = Array2::zeros((t_len, n_out));
            for sc_i in 0..streams.len() {
                let cl = m.streams[sc_i].classifier.as_ref().expect("per-stream classifier");
                let mut logits = Array2::zeros((t_len, n_out));
                let mut sprobs = Array2::zeros((t_len, n_out));
                for t in 0..t_len {
                    let row = cl.apply(streams[sc_i].out.row(t));
                    sprobs.row_mut(t).assign(&softmax_into(row.view()));
                    logits.row_mut(t).assign(&row);
                }
                probs += &sprobs;
                streams[sc_i].logits = Some(logits);
                streams[sc_i].probs = Some(sprobs);
            }
            probs.mapv_inplace(|v| v / m.streams.len() as f64);
            (None, probs)
        }
        FusionMode::Gating => {
            let g = m.gating.as_ref().expect("gating weights present");
            for sc_i in 0..streams.len() {
                let cl = m.streams[sc_i].classifier.as_ref().expect("per-stream classifier");
                let mut logits = Array2::zeros((t_len, n_out));
                for t in 0..t_len {
                    logits.row_mut(t).assign(&cl.apply(streams[sc_i].out.row(t)));
                }
                streams[sc_i].logits = Some(logits);
            }
            let mut combined = Array2::zeros((t_len, n_out));
            for (si, sc) in streams.iter().enumerate() {
                let sl = sc.logits.as_ref().unwrap();
                for t in 0..t_len {
                    for c in 0..n_out {
                        combined[[t, c]] += g[[c, si]] * sl[[t, c]];
                    }
                }
            }
            let mut probs = Array2::zeros((t_len, n_out));
            for t in 0..t_len {
                probs.row_mut(t).assign(&softmax_into(combined.row(t)));
            }
            (Some(combined), probs)
        }
    };

    let scores = ScoreSequence { track_id: track_id.to_string(), rows: probs.clone() };
    Ok((scores, ForwardCache { streams, fused_logits, probs }))
}

/// [`forward`] restricted to the FC (no recurrence) baseline.
pub fn fc_baseline_forward(
    m: &ModelParams,
    feats: &[ArrayView2<f64>],
    track_id: &str,
) -> Result<(ScoreSequence, ForwardCache)> {
    if m.dims.cell != CellKind::Fc {
        return Err(Error::config(format!(
            "fc_baseline_forward requires an fc model, got {}",
            m.dims.cell.name()
        )));
    }
    forward(m, feats, track_id)
}

/// Negative log-likelihood summed over labeled frames; `None` labels are
/// masked out (padding). Log-probabilities are clamped at -50.
pub fn nll_from_probs(probs: &Array2<f64>, labels: &[Option<u32>]) -> Result<f64> {
    if probs.nrows() != labels.len() {
        return Err(Error::data(format!(
            "{} label entries for {} score rows",
            labels.len(),
            probs.nrows()
        )));
    }
    let mut loss = 0.0;
    for (row, label) in probs.outer_iter().zip(labels) {
        let Some(y) = *label else { continue };
        let y = y as usize;
        if y >= row.len() {
            return Err(Error::data(format!(
                "label {y} out of range for {} classes (incl. background)",
                row.len()
            )));
        }
        loss -= row[y].ln().max(LOG_PROB_FLOOR);
    }
    Ok(loss)
}

/// NLL of a score sequence against per-frame labels in `[0, C]`.
pub fn nll_loss(scores: &ScoreSequence, labels: &[Option<u32>]) -> Result<f64> {
    nll_from_probs(&scores.rows, labels)
}
