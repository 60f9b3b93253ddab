//! Temporal localization: turns per-frame class scores over a track into
//! spatio-temporal detections.
//!
//! The pipeline per (track, class) is: median-filter the class score curve,
//! cut it into maximal runs above a threshold, score each run by the mean of
//! its top-k raw scores, then apply greedy spatio-temporal NMS per
//! (video, class). A binary Viterbi smoother is kept as a baseline.

use crate::error::{Error, Result};
use crate::model::ScoreSequence;
use crate::track::{st_iou, Detection, PersonTrack};

#[derive(Debug, Clone, Copy)]
pub struct LocalizationConfig {
    /// Score threshold for keeping a frame inside a sub-track.
    pub theta: f64,
    /// Median filter window; must be odd.
    pub median_window: usize,
    /// Spatio-temporal IoU above which a lower-scoring detection is dropped.
    pub nms_overlap: f64,
    /// Each sub-track is scored by the mean of its `top_k` largest raw scores.
    pub top_k: usize,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        LocalizationConfig {
            theta: 0.1,
            median_window: 25,
            nms_overlap: 0.2,
            top_k: 40,
        }
    }
}

impl LocalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::config(format!("theta must be in (0,1), got {}", self.theta)));
        }
        if self.median_window == 0 || self.median_window % 2 == 0 {
            return Err(Error::config(format!(
                "median_window must be odd and >= 1, got {}",
                self.median_window
            )));
        }
        if !(0.0..=1.0).contains(&self.nms_overlap) {
            return Err(Error::config(format!(
                "nms_overlap must be in [0,1], got {}",
                self.nms_overlap
            )));
        }
        if self.top_k == 0 {
            return Err(Error::config("top_k must be >= 1"));
        }
        Ok(())
    }
}

/// Binary Viterbi smoothing baseline.
#[derive(Debug, Clone, Copy)]
pub struct ViterbiConfig {
    /// Pairwise label-change penalty; larger values favor longer runs.
    pub alpha: f64,
    /// Probabilities are clamped to `[floor, 1 - floor]` before taking logs.
    pub floor: f64,
}

impl Default for ViterbiConfig {
    fn default() -> Self {
        ViterbiConfig { alpha: 5.0, floor: 1e-6 }
    }
}

impl ViterbiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.floor > 0.0 && self.floor < 0.5) {
            return Err(Error::config(format!("floor must be in (0, 0.5), got {}", self.floor)));
        }
        Ok(())
    }
}

/// Sliding median with the window truncated at sequence boundaries.
/// Even-count windows take the lower of the two middle values.
pub fn median_filter(s: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::config(format!("median window must be odd and >= 1, got {window}")));
    }
    let half = window / 2;
    let mut out = Vec::with_capacity(s.len());
    let mut buf: Vec<f64> = Vec::with_capacity(window);
    for t in 0..s.len() {
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(s.len().saturating_sub(1));
        buf.clear();
        buf.extend_from_slice(&s[lo..=hi]);
        buf.sort_unstable_by(|a, b| a.total_cmp(b));
        out.push(buf[(buf.len() - 1) / 2]);
    }
    Ok(out)
}

/// Maximal runs of consecutive indices with `s[t] >= theta`, as inclusive
/// `(start, end)` pairs in temporal order.
pub fn threshold_segment(s: &[f64], theta: f64) -> Vec<(usize, usize)> {
    let mut segs = Vec::new();
    let mut run_start: Option<usize> = None;
    for (t, &v) in s.iter().enumerate() {
        if v >= theta {
            run_start.get_or_insert(t);
        } else if let Some(start) = run_start.take() {
            segs.push((start, t - 1));
        }
    }
    if let Some(start) = run_start {
        segs.push((start, s.len() - 1));
    }
    segs
}

/// Mean of the `min(top_k, len)` largest scores in the slice.
pub fn score_subtrack(s: &[f64], top_k: usize) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::data("cannot score an empty sub-track"));
    }
    if top_k == 0 {
        return Err(Error::config("top_k must be >= 1"));
    }
    let mut sorted = s.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let k = top_k.min(sorted.len());
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

fn nms_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.start_frame.cmp(&b.start_frame))
        .then_with(|| b.boxes.len().cmp(&a.boxes.len()))
}

/// Greedy spatio-temporal NMS: repeatedly keep the highest-scoring
/// remaining detection and drop everything overlapping it by more than
/// `overlap` ST-IoU. Callers pass detections of a single (video, class).
///
/// Ties in score are broken by earlier start frame, then longer duration.
pub fn st_nms(dets: Vec<Detection>, overlap: f64) -> Vec<Detection> {
    let mut sorted = dets;
    sorted.sort_by(nms_order);
    let mut keep: Vec<Detection> = Vec::new();
    let mut suppressed = vec![false; sorted.len()];
    for i in 0..sorted.len() {
        if suppressed[i] {
            continue;
        }
        for j in (i + 1)..sorted.len() {
            if !suppressed[j] && st_iou(&sorted[i], &sorted[j]) > overlap {
                suppressed[j] = true;
            }
        }
        keep.push(sorted[i].clone());
    }
    keep
}

/// Segments one track for one action class: median-filter the class column,
/// threshold it, and emit one detection per surviving run.
///
/// Boundary decisions use the filtered scores; the ranking score of each
/// detection is computed on the raw scores of its interval.
pub fn localize(
    track: &PersonTrack,
    scores: &ScoreSequence,
    class_id: u32,
    cfg: &LocalizationConfig,
) -> Result<Vec<Detection>> {
    cfg.validate()?;
    if scores.rows.nrows() != track.len() {
        return Err(Error::data(format!(
            "track {} has {} frames but score sequence has {} rows",
            track.key(),
            track.len(),
            scores.rows.nrows()
        )));
    }
    if class_id == 0 || class_id as usize >= scores.rows.ncols() {
        return Err(Error::data(format!(
            "class {} out of range for {} score columns",
            class_id,
            scores.rows.ncols()
        )));
    }
    let raw: Vec<f64> = scores.rows.column(class_id as usize).to_vec();
    let filtered = median_filter(&raw, cfg.median_window)?;
    let mut dets = Vec::new();
    for (i0, i1) in threshold_segment(&filtered, cfg.theta) {
        let score = score_subtrack(&raw[i0..=i1], cfg.top_k)?;
        dets.push(Detection::new(
            track.video_id.clone(),
            class_id,
            track.start_frame + i0 as i64,
            track.boxes[i0..=i1].to_vec(),
            score,
        )?);
    }
    Ok(dets)
}

/// Exact MAP binary labeling of a score curve under a switching penalty:
/// maximize `sum_t [y_t ln s_t + (1-y_t) ln(1-s_t)] - alpha * #label changes`,
/// then return the maximal runs of `y = 1`.
pub fn viterbi_segment(s: &[f64], cfg: &ViterbiConfig) -> Vec<(usize, usize)> {
    if s.is_empty() {
        return Vec::new();
    }
    let unary = |v: f64| {
        let p = v.clamp(cfg.floor, 1.0 - cfg.floor);
        (p.ln(), (1.0 - p).ln()) // (action, background)
    };

    let n = s.len();
    // score[t][y] = best energy of a labeling of 0..=t ending in label y
    let (a0, b0) = unary(s[0]);
    let mut best = [b0, a0]; // [background, action]
    let mut backptr = vec![[0u8, 0u8]; n];
    for t in 1..n {
        let (at, bt) = unary(s[t]);
        let mut next = [f64::NEG_INFINITY; 2];
        for y in 0..2 {
            let emit = if y == 1 { at } else { bt };
            // stay vs switch; ties prefer the background-side predecessor
            let stay = best[y];
            let switch = best[1 - y] - cfg.alpha;
            if stay >= switch {
                next[y] = stay + emit;
                backptr[t][y] = y as u8;
            } else {
                next[y] = switch + emit;
                backptr[t][y] = (1 - y) as u8;
            }
        }
        best = next;
    }
    // ties at the end prefer background
    let mut y = usize::from(best[1] > best[0]);
    let mut labels = vec![0u8; n];
    labels[n - 1] = y as u8;
    for t in (1..n).rev() {
        y = backptr[t][y] as usize;
        labels[t - 1] = y as u8;
    }
    runs_of_ones(&labels)
}

fn runs_of_ones(labels: &[u8]) -> Vec<(usize, usize)> {
    let mut segs = Vec::new();
    let mut start: Option<usize> = None;
    for (t, &y) in labels.iter().enumerate() {
        if y == 1 {
            start.get_or_insert(t);
        } else if let Some(s0) = start.take() {
            segs.push((s0, t - 1));
        }
    }
    if let Some(s0) = start {
        segs.push((s0, labels.len() - 1));
    }
    segs
}
