//! Mini-batch training loop: sample track windows, forward, BPTT, Adam.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{backward, forward, nll_from_probs, AdamHyper, AdamState, ModelParams};
use crate::error::{Error, Result};
use crate::track::PersonTrack;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub steps: usize,
    /// Tracks per batch (B).
    pub batch_size: usize,
    /// Temporal window length per sampled track (L).
    pub window: usize,
    /// BPTT truncation length; 0 disables truncation.
    pub bptt_len: usize,
    pub adam: AdamHyper,
    pub seed: u64,
    /// Train only the fusion head, keeping stream weights fixed.
    pub freeze_streams: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 200,
            batch_size: 100,
            window: 20,
            bptt_len: 20,
            adam: AdamHyper::default(),
            seed: 0,
            freeze_streams: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.window == 0 {
            return Err(Error::config("batch size and window must be >= 1"));
        }
        self.adam.validate()
    }
}

/// One labeled training track.
#[derive(Debug, Clone, Copy)]
pub struct TrainItem<'a> {
    pub track: &'a PersonTrack,
    /// Per-frame labels in `[0, C]`, aligned with the track.
    pub labels: &'a [u32],
}

fn sample_window<R: Rng>(
    model: &ModelParams,
    item: &TrainItem,
    window: usize,
    rng: &mut R,
) -> Result<(Vec<Array2<f64>>, Vec<Option<u32>>)> {
    let t_len = item.track.len();
    if item.labels.len() != t_len {
        return Err(Error::data(format!(
            "track {} has {} frames but {} labels",
            item.track.key(),
            t_len,
            item.labels.len()
        )));
    }
    let d_raw = model.dims.d_raw;
    let (start, take) = if t_len >= window {
        (rng.random_range(0..=t_len - window), window)
    } else {
        (0, t_len)
    };

    let mut feats = Vec::with_capacity(model.streams.len());
    for sp in &model.streams {
        let src = item.track.features(sp.tag).ok_or_else(|| {
            Error::data(format!(
                "track {} is missing {} features",
                item.track.key(),
                sp.tag.name()
            ))
        })?;
        if src.ncols() != d_raw {
            return Err(Error::data(format!(
                "track {} {} features have dim {}, model expects {d_raw}",
                item.track.key(),
                sp.tag.name(),
                src.ncols()
            )));
        }
        // short tracks are zero-padded at the end; the pad frames are
        // masked out of the loss below
        let mut w = Array2::zeros((window, d_raw));
        w.slice_mut(ndarray::s![..take, ..])
            .assign(&src.slice(ndarray::s![start..start + take, ..]));
        feats.push(w);
    }
    let mut labels: Vec<Option<u32>> = Vec::with_capacity(window);
    for t in 0..window {
        labels.push((t < take).then(|| item.labels[start + t]));
    }
    Ok((feats, labels))
}

/// Trains `model` in place; returns the per-step mean NLL (batch loss
/// divided by the number of labeled frames).
///
/// Deterministic given the seed: batches are sampled with replacement, a
/// random length-`window` window is taken from each sampled track, and
/// gradients are accumulated in sampling order.
pub fn train(model: &mut ModelParams, data: &[TrainItem], cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::data("training dataset is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.param_count(), cfg.adam);
    if cfg.freeze_streams {
        adam = adam.with_frozen(model.stream_param_mask())?;
    }

    let mut curve = Vec::with_capacity(cfg.steps);
    let mut last_finite = f64::NAN;
    for step in 0..cfg.steps {
        let mut grad_acc = vec![0.0f64; model.param_count()];
        let mut loss_sum = 0.0;
        let mut frames = 0usize;
        for _ in 0..cfg.batch_size {
            let item = &data[rng.random_range(0..data.len())];
            let (feats, labels) = sample_window(model, item, cfg.window, &mut rng)?;
            let views: Vec<_> = feats.iter().map(|f| f.view()).collect();
            let (_, cache) = forward(model, &views, &item.track.track_id)?;
            loss_sum += nll_from_probs(&cache.probs, &labels)?;
            frames += labels.iter().flatten().count();
            let g = backward(model, &views, &cache, &labels, cfg.bptt_len)?;
            for (acc, gv) in grad_acc.iter_mut().zip(g.to_flat()) {
                *acc += gv;
            }
        }
        let mean_loss = loss_sum / frames.max(1) as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite loss at step {step}; last finite loss {last_finite}"
            )));
        }
        last_finite = mean_loss;

        let mut theta = model.to_flat();
        adam.update(&mut theta, &grad_acc).map_err(|e| match e {
            Error::Divergence(msg) => Error::Divergence(format!(
                "step {step}: {msg}; last finite loss {last_finite}"
            )),
            other => other,
        })?;
        model.copy_from_flat(&theta)?;
        curve.push(mean_loss);
    }
    Ok(curve)
}
