//! The learnable track scorer: a two-stream stacked recurrent network
//! (GRU or LSTM cells, or the non-recurrent FC baseline) with per-stream
//! input normalization, four fusion strategies, softmax/NLL loss, exact
//! BPTT gradients and Adam with weight decay.
//!
//! All arithmetic is in `f64`. Parameters live in a structured tree
//! ([`ModelParams`]) with a documented flat serialization order shared by
//! the optimizer, the finite-difference tests and the checkpoint format.

mod adam;
mod backward;
mod cell;
mod forward;
mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use backward::backward;
pub use cell::{fc_cell_param_count, gru_step, lstm_step, FcCell, GruCell, LstmCell};
pub use forward::{
    fc_baseline_forward, forward, nll_loss, nll_from_probs, softmax_into, CellCache,
    ForwardCache, ScoreSequence, StreamCache,
};
pub use train::{train, TrainConfig, TrainItem};

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::track::StreamTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Gru,
    Lstm,
    /// Per-frame two-layer FC stack with the same parameter count as a GRU
    /// cell; no temporal state.
    Fc,
}

impl CellKind {
    pub fn name(&self) -> &'static str {
        match self {
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
            CellKind::Fc => "fc",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            "fc" => Ok(CellKind::Fc),
            other => Err(Error::config(format!("unknown cell type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// One stream, classifier over its 2H memory concatenation.
    Single,
    /// Mean of the two single-stream softmax outputs; no fused parameters.
    Average,
    /// Learned per-class per-stream weights applied to the single-stream
    /// logits before a shared softmax.
    Gating,
    /// A classifier trained on the 4H concatenation of both streams'
    /// memory outputs.
    FusionLayer,
}

impl FusionMode {
    pub fn n_streams(&self) -> usize {
        match self {
            FusionMode::Single => 1,
            _ => 2,
        }
    }

    /// Streams carry their own classifier (used before fusion)?
    pub fn per_stream_classifiers(&self) -> bool {
        matches!(self, FusionMode::Average | FusionMode::Gating)
    }

    /// Model carries a fused classifier over concatenated memories?
    pub fn fused_classifier(&self) -> bool {
        matches!(self, FusionMode::Single | FusionMode::FusionLayer)
    }

    pub fn name(&self) -> &'static str {
        match self {
            FusionMode::Single => "single",
            FusionMode::Average => "average",
            FusionMode::Gating => "gating",
            FusionMode::FusionLayer => "fusion_layer",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(FusionMode::Single),
            "average" => Ok(FusionMode::Average),
            "gating" => Ok(FusionMode::Gating),
            "fusion_layer" => Ok(FusionMode::FusionLayer),
            other => Err(Error::config(format!("unknown fusion mode {other:?}"))),
        }
    }
}

/// Model dimensions. `d_raw` is shared by both streams (the checkpoint
/// format stores a single raw input dimension).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub cell: CellKind,
    pub fusion: FusionMode,
    pub d_raw: usize,
    pub d_norm: usize,
    pub hidden: usize,
    /// Number of action classes C; the classifier emits C+1 logits
    /// (column 0 is background).
    pub n_classes: usize,
}

impl ModelDims {
    pub fn n_streams(&self) -> usize {
        self.fusion.n_streams()
    }

    pub fn n_outputs(&self) -> usize {
        self.n_classes + 1
    }

    /// Memory output width of one stream: both cell levels concatenated.
    pub fn stream_out_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_raw == 0 || self.d_norm == 0 || self.hidden == 0 || self.n_classes == 0 {
            return Err(Error::config(format!("model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Affine map `y = w x + b`.
#[derive(Debug, Clone)]
pub struct Affine {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Affine {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Affine { w: Array2::zeros((out_dim, in_dim)), b: Array1::zeros(out_dim) }
    }

    pub fn init<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let mut a = Affine::zeros(out_dim, in_dim);
        init_uniform(&mut a.w, rng);
        a
    }

    pub fn apply(&self, x: ndarray::ArrayView1<f64>) -> Array1<f64> {
        self.w.dot(&x) + &self.b
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases stay zero.
pub(crate) fn init_uniform<R: Rng>(w: &mut Array2<f64>, rng: &mut R) {
    let bound = 1.0 / (w.ncols() as f64).sqrt();
    for v in w.iter_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

/// One cell of the stack; the variant is uniform across a model.
#[derive(Debug, Clone)]
pub enum CellParams {
    Gru(GruCell),
    Lstm(LstmCell),
    Fc(FcCell),
}

impl CellParams {
    pub fn zeros(kind: CellKind, hidden: usize, input: usize) -> Self {
        match kind {
            CellKind::Gru => CellParams::Gru(GruCell::zeros(hidden, input)),
            CellKind::Lstm => CellParams::Lstm(LstmCell::zeros(hidden, input)),
            CellKind::Fc => CellParams::Fc(FcCell::zeros(hidden, input)),
        }
    }

    pub fn init<R: Rng>(kind: CellKind, hidden: usize, input: usize, rng: &mut R) -> Self {
        let mut c = CellParams::zeros(kind, hidden, input);
        match &mut c {
            CellParams::Gru(g) => g.init(rng),
            CellParams::Lstm(l) => l.init(rng),
            CellParams::Fc(f) => f.init(rng),
        }
        c
    }

    pub fn kind(&self) -> CellKind {
        match self {
            CellParams::Gru(_) => CellKind::Gru,
            CellParams::Lstm(_) => CellKind::Lstm,
            CellParams::Fc(_) => CellKind::Fc,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            CellParams::Gru(c) => c.hidden_dim(),
            CellParams::Lstm(c) => c.hidden_dim(),
            CellParams::Fc(c) => c.hidden_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            CellParams::Gru(c) => c.input_dim(),
            CellParams::Lstm(c) => c.input_dim(),
            CellParams::Fc(c) => c.input_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            CellParams::Gru(c) => c.param_count(),
            CellParams::Lstm(c) => c.param_count(),
            CellParams::Fc(c) => c.param_count(),
        }
    }
}

/// One stream: input normalization plus a stack of two cells, and a
/// per-stream classifier for the fusion modes that need one.
#[derive(Debug, Clone)]
pub struct StreamParams {
    pub tag: StreamTag,
    /// Normalizes raw features: `u = tanh(w x + b)`, d_raw -> d_norm.
    pub input_fc: Affine,
    pub cell1: CellParams,
    /// Consumes cell1's output; input dim = hidden.
    pub cell2: CellParams,
    /// (C+1) x 2H classifier, present for Average and Gating fusion.
    pub classifier: Option<Affine>,
}

impl StreamParams {
    pub fn param_count(&self) -> usize {
        self.input_fc.param_count()
            + self.cell1.param_count()
            + self.cell2.param_count()
            + self.classifier.as_ref().map_or(0, |c| c.param_count())
    }
}

/// All weights of the scorer.
///
/// Flat serialization order (checkpoints, the optimizer and the gradient
/// tests all use it): for each stream in order — input_fc (w row-major,
/// then b), cell1, cell2, then the stream classifier (w, b) when present;
/// then the fused classifier (w, b) when present; then the gating matrix
/// row-major when present. Cell blocks are ordered (w, u, b) per gate with
/// gates z, r, h for GRU; f, i, o, c for LSTM; and (w1, b1, w2) for FC.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub streams: Vec<StreamParams>,
    /// Fused classifier: (C+1) x 2H for Single, (C+1) x 4H for FusionLayer.
    pub classifier: Option<Affine>,
    /// (C+1) x n_streams per-class stream weights, Gating only.
    pub gating: Option<Array2<f64>>,
}

impl ModelParams {
    /// Stream tags in model order for a given fusion mode.
    pub fn default_tags(fusion: FusionMode, single: StreamTag) -> Vec<StreamTag> {
        if fusion.n_streams() == 1 {
            vec![single]
        } else {
            vec![StreamTag::Appearance, StreamTag::Flow]
        }
    }

    pub fn zeros(dims: ModelDims, tags: &[StreamTag]) -> Result<Self> {
        dims.validate()?;
        if tags.len() != dims.n_streams() {
            return Err(Error::config(format!(
                "fusion mode {} requires {} streams, got {} tags",
                dims.fusion.name(),
                dims.n_streams(),
                tags.len()
            )));
        }
        let streams = tags
            .iter()
            .map(|&tag| StreamParams {
                tag,
                input_fc: Affine::zeros(dims.d_norm, dims.d_raw),
                cell1: CellParams::zeros(dims.cell, dims.hidden, dims.d_norm),
                cell2: CellParams::zeros(dims.cell, dims.hidden, dims.hidden),
                classifier: dims
                    .fusion
                    .per_stream_classifiers()
                    .then(|| Affine::zeros(dims.n_outputs(), dims.stream_out_dim())),
            })
            .collect();
        let classifier = dims.fusion.fused_classifier().then(|| {
            Affine::zeros(dims.n_outputs(), dims.n_streams() * dims.stream_out_dim())
        });
        let gating = matches!(dims.fusion, FusionMode::Gating)
            .then(|| Array2::zeros((dims.n_outputs(), dims.n_streams())));
        Ok(ModelParams { dims, streams, classifier, gating })
    }

    /// Seeded initialization: weights uniform in +-1/sqrt(fan_in), biases
    /// zero, gating weights 0.5 (an averaging start).
    pub fn init<R: Rng>(dims: ModelDims, tags: &[StreamTag], rng: &mut R) -> Result<Self> {
        let mut m = ModelParams::zeros(dims, tags)?;
        for s in &mut m.streams {
            init_uniform(&mut s.input_fc.w, rng);
            match &mut s.cell1 {
                CellParams::Gru(c) => c.init(rng),
                CellParams::Lstm(c) => c.init(rng),
                CellParams::Fc(c) => c.init(rng),
            }
            match &mut s.cell2 {
                CellParams::Gru(c) => c.init(rng),
                CellParams::Lstm(c) => c.init(rng),
                CellParams::Fc(c) => c.init(rng),
            }
            if let Some(cl) = &mut s.classifier {
                init_uniform(&mut cl.w, rng);
            }
        }
        if let Some(cl) = &mut m.classifier {
            init_uniform(&mut cl.w, rng);
        }
        if let Some(g) = &mut m.gating {
            g.fill(0.5);
        }
        Ok(m)
    }

    pub fn zeros_like(&self) -> Self {
        let tags: Vec<StreamTag> = self.streams.iter().map(|s| s.tag).collect();
        ModelParams::zeros(self.dims, &tags).expect("shapes already validated")
    }

    pub fn param_count(&self) -> usize {
        self.streams.iter().map(|s| s.param_count()).sum::<usize>()
            + self.classifier.as_ref().map_or(0, |c| c.param_count())
            + self.gating.as_ref().map_or(0, |g| g.len())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.for_each_array(|arr| out.extend_from_slice(arr));
        out
    }

    pub fn copy_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::data(format!(
                "parameter vector length {} does not match model ({} expected)",
                flat.len(),
                self.param_count()
            )));
        }
        let mut pos = 0usize;
        self.for_each_array_mut(|arr| {
            arr.copy_from_slice(&flat[pos..pos + arr.len()]);
            pos += arr.len();
        });
        Ok(())
    }

    /// True at every flat index owned by a stream (used to freeze streams
    /// while training a fusion head).
    pub fn stream_param_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.param_count());
        let mut in_stream = true;
        let mut stream_params = self.streams.iter().map(|s| s.param_count()).sum::<usize>();
        self.for_each_array(|arr| {
            for _ in arr {
                if stream_params == 0 {
                    in_stream = false;
                }
                mask.push(in_stream);
                stream_params = stream_params.saturating_sub(1);
            }
        });
        mask
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_array(|arr| ok &= arr.iter().all(|v| v.is_finite()));
        ok
    }

    /// Visits every parameter array as a contiguous slice in the documented
    /// flat order.
    fn for_each_array(&self, mut f: impl FnMut(&[f64])) {
        fn affine(a: &Affine, f: &mut impl FnMut(&[f64])) {
            f(a.w.as_slice().expect("standard layout"));
            f(a.b.as_slice().expect("standard layout"));
        }
        fn cell(c: &CellParams, f: &mut impl FnMut(&[f64])) {
            match c {
                CellParams::Gru(g) => {
                    for (w, u, b) in g.gates() {
                        f(w.as_slice().unwrap());
                        f(u.as_slice().unwrap());
                        f(b.as_slice().unwrap());
                    }
                }
                CellParams::Lstm(l) => {
                    for (w, u, b) in l.gates() {
                        f(w.as_slice().unwrap());
                        f(u.as_slice().unwrap());
                        f(b.as_slice().unwrap());
                    }
                }
                CellParams::Fc(x) => {
                    f(x.w1.as_slice().unwrap());
                    f(x.b1.as_slice().unwrap());
                    f(x.w2.as_slice().unwrap());
                }
            }
        }
        for s in &self.streams {
            affine(&s.input_fc, &mut f);
            cell(&s.cell1, &mut f);
            cell(&s.cell2, &mut f);
            if let Some(cl) = &s.classifier {
                affine(cl, &mut f);
            }
        }
        if let Some(cl) = &self.classifier {
            affine(cl, &mut f);
        }
        if let Some(g) = &self.gating {
            f(g.as_slice().expect("standard layout"));
        }
    }

    fn for_each_array_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        fn affine(a: &mut Affine, f: &mut impl FnMut(&mut [f64])) {
            f(a.w.as_slice_mut().expect("standard layout"));
            f(a.b.as_slice_mut().expect("standard layout"));
        }
        fn cell(c: &mut CellParams, f: &mut impl FnMut(&mut [f64])) {
            match c {
                CellParams::Gru(g) => {
                    for (w, u, b) in g.gates_mut() {
                        f(w.as_slice_mut().unwrap());
                        f(u.as_slice_mut().unwrap());
                        f(b.as_slice_mut().unwrap());
                    }
                }
                CellParams::Lstm(l) => {
                    for (w, u, b) in l.gates_mut() {
                        f(w.as_slice_mut().unwrap());
                        f(u.as_slice_mut().unwrap());
                        f(b.as_slice_mut().unwrap());
                    }
                }
                CellParams::Fc(x) => {
                    f(x.w1.as_slice_mut().unwrap());
                    f(x.b1.as_slice_mut().unwrap());
                    f(x.w2.as_slice_mut().unwrap());
                }
            }
        }
        for s in &mut self.streams {
            affine(&mut s.input_fc, &mut f);
            cell(&mut s.cell1, &mut f);
            cell(&mut s.cell2, &mut f);
            if let Some(cl) = &mut s.classifier {
                affine(cl, &mut f);
            }
        }
        if let Some(cl) = &mut self.classifier {
            affine(cl, &mut f);
        }
        if let Some(g) = &mut self.gating {
            f(g.as_slice_mut().expect("standard layout"));
        }
    }

    pub fn stream_index(&self, tag: StreamTag) -> Option<usize> {
        self.streams.iter().position(|s| s.tag == tag)
    }
}
