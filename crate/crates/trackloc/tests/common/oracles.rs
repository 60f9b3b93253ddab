//! Brute-force reference implementations shared by the per-module oracle
//! suites and the acceptance gate. Everything here favors obviousness
//! over speed: nested scalar loops, exhaustive scans, full re-sorts.

#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use trackloc::eval::MatchResult;
use trackloc::geom::{spatial_iou, BoundingBox};
use trackloc::localize::ViterbiConfig;
use trackloc::model::{GruCell, LstmCell, ModelParams, CellParams};
use trackloc::track::{
    st_iou, Detection, GroundTruthInstance, PersonTrack, TrackLike,
};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ---------------------------------------------------------------------
// random geometry helpers
// ---------------------------------------------------------------------

pub fn rand_box<R: Rng>(rng: &mut R) -> BoundingBox {
    let x1 = rng.random_range(-20.0..20.0);
    let y1 = rng.random_range(-20.0..20.0);
    let w = rng.random_range(0.5..15.0);
    let h = rng.random_range(0.5..15.0);
    BoundingBox::new(x1, y1, x1 + w, y1 + h).unwrap()
}

pub fn rand_track<R: Rng>(rng: &mut R, id: &str, video: &str) -> PersonTrack {
    let start = rng.random_range(-5..40);
    let len = rng.random_range(1..=25);
    let boxes = (0..len).map(|_| rand_box(rng)).collect();
    PersonTrack::new(id, video, start, boxes).unwrap()
}

pub fn drift_boxes<R: Rng>(rng: &mut R, len: usize) -> Vec<BoundingBox> {
    let x = rng.random_range(0.0..25.0);
    let y = rng.random_range(0.0..25.0);
    (0..len)
        .map(|i| {
            let dx = x + i as f64 * 0.1;
            BoundingBox::new(dx, y, dx + 5.0, y + 7.0).unwrap()
        })
        .collect()
}

pub fn rand_gt<R: Rng>(rng: &mut R, video: &str, class: u32) -> GroundTruthInstance {
    let start = rng.random_range(0..40);
    let len = rng.random_range(3..=20);
    GroundTruthInstance::new(video, class, start, drift_boxes(rng, len)).unwrap()
}

pub fn rand_det<R: Rng>(rng: &mut R, video: &str, class: u32) -> Detection {
    let start = rng.random_range(0..40);
    let len = rng.random_range(3..=20);
    Detection::new(video, class, start, drift_boxes(rng, len), rng.random_range(0.01..1.0))
        .unwrap()
}

pub fn det_from_gt(gt: &GroundTruthInstance, shift: i64, score: f64) -> Detection {
    Detection::new(gt.video_id.clone(), gt.class_id, gt.start_frame + shift, gt.boxes.clone(), score)
        .unwrap()
}

// ---------------------------------------------------------------------
// geometry oracles
// ---------------------------------------------------------------------

/// Frame-by-frame ST-IoU over the union of both intervals.
pub fn brute_st_iou(a: &PersonTrack, b: &PersonTrack) -> f64 {
    let lo = a.start_frame.min(b.start_frame);
    let hi = a.end_frame().max(b.end_frame());
    let mut inter = 0usize;
    let mut union = 0usize;
    let mut iou_sum = 0.0;
    for f in lo..=hi {
        let in_a = a.box_at(f).is_some();
        let in_b = b.box_at(f).is_some();
        if in_a || in_b {
            union += 1;
        }
        if in_a && in_b {
            inter += 1;
            iou_sum += spatial_iou(a.box_at(f).unwrap(), b.box_at(f).unwrap());
        }
    }
    if inter == 0 {
        0.0
    } else {
        (inter as f64 / union as f64) * (iou_sum / inter as f64)
    }
}

/// Exhaustive (frame, instance) label assignment.
pub fn brute_labels(track: &PersonTrack, gts: &[GroundTruthInstance], thresh: f64) -> Vec<u32> {
    (0..track.len())
        .map(|i| {
            let frame = track.start_frame + i as i64;
            let mut candidates: Vec<(f64, u32)> = Vec::new();
            for gt in gts {
                if gt.video_id != track.video_id {
                    continue;
                }
                for (j, gb) in gt.boxes.iter().enumerate() {
                    if gt.start_frame + j as i64 != frame {
                        continue;
                    }
                    let iou = spatial_iou(&track.boxes[i], gb);
                    if iou > thresh {
                        candidates.push((iou, gt.class_id));
                    }
                }
            }
            candidates
                .into_iter()
                .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
                .map_or(0, |(_, c)| c)
        })
        .collect()
}

// ---------------------------------------------------------------------
// localization oracles
// ---------------------------------------------------------------------

/// Maximality-based thresholding: an interval is emitted iff every frame
/// inside is above threshold and both neighbors (when present) are below.
pub fn brute_segments(s: &[f64], theta: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i0 in 0..s.len() {
        for i1 in i0..s.len() {
            let all_above = (i0..=i1).all(|t| s[t] >= theta);
            let left_blocked = i0 == 0 || s[i0 - 1] < theta;
            let right_blocked = i1 + 1 == s.len() || s[i1 + 1] < theta;
            if all_above && left_blocked && right_blocked {
                out.push((i0, i1));
            }
        }
    }
    out
}

/// Per-position sliding-window median via a full sort.
pub fn brute_median(s: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..s.len())
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = usize::min(t + half, s.len() - 1);
            let mut win: Vec<f64> = s[lo..=hi].to_vec();
            win.sort_by(|a, b| a.partial_cmp(b).unwrap());
            win[(win.len() - 1) / 2]
        })
        .collect()
}

/// Top-k mean via a full descending sort.
pub fn brute_top_k_mean(s: &[f64], k: usize) -> f64 {
    let mut sorted = s.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let take = k.min(sorted.len());
    sorted[..take].iter().sum::<f64>() / take as f64
}

/// Greedy NMS that rescans the full remaining list each round.
pub fn brute_nms(mut remaining: Vec<Detection>, overlap: f64) -> Vec<Detection> {
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let best = remaining
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.score
                    .total_cmp(&b.score)
                    .then_with(|| b.start_frame.cmp(&a.start_frame))
                    .then_with(|| a.boxes.len().cmp(&b.boxes.len()))
            })
            .map(|(i, _)| i)
            .unwrap();
        let winner = remaining.swap_remove(best);
        remaining.retain(|d| st_iou(d, &winner) <= overlap);
        kept.push(winner);
    }
    kept
}

pub fn det_key(d: &Detection) -> (String, u32, i64, usize, u64) {
    (d.video_id.clone(), d.class_id, d.start_frame, d.boxes.len(), d.score.to_bits())
}

/// Exhaustive maximization over all 2^T binary labelings.
pub fn brute_viterbi(s: &[f64], cfg: &ViterbiConfig) -> Vec<(usize, usize)> {
    let t_len = s.len();
    let mut best_mask = 0u32;
    let mut best_energy = f64::NEG_INFINITY;
    for mask in 0..(1u32 << t_len) {
        let mut e = 0.0;
        for (t, &raw) in s.iter().enumerate() {
            let p = raw.clamp(cfg.floor, 1.0 - cfg.floor);
            let y = (mask >> t) & 1;
            e += if y == 1 { p.ln() } else { (1.0 - p).ln() };
            if t + 1 < t_len && y != (mask >> (t + 1)) & 1 {
                e -= cfg.alpha;
            }
        }
        if e > best_energy {
            best_energy = e;
            best_mask = mask;
        }
    }
    let mut segs = Vec::new();
    let mut start: Option<usize> = None;
    for t in 0..t_len {
        if (best_mask >> t) & 1 == 1 {
            start.get_or_insert(t);
        } else if let Some(s0) = start.take() {
            segs.push((s0, t - 1));
        }
    }
    if let Some(s0) = start {
        segs.push((s0, t_len - 1));
    }
    segs
}

// ---------------------------------------------------------------------
// evaluation oracles
// ---------------------------------------------------------------------

/// Score-descending greedy matcher re-coded from scratch.
pub fn brute_match(
    dets: &[Detection],
    gts: &[GroundTruthInstance],
    class: u32,
    iou_t: f64,
) -> (Vec<bool>, usize) {
    let gts: Vec<&GroundTruthInstance> = gts.iter().filter(|g| g.class_id == class).collect();
    let mut order: Vec<&Detection> = dets.iter().filter(|d| d.class_id == class).collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.start_frame.cmp(&b.start_frame))
            .then_with(|| b.boxes.len().cmp(&a.boxes.len()))
            .then_with(|| a.video_id.cmp(&b.video_id))
    });
    let mut free = vec![true; gts.len()];
    let mut flags = Vec::new();
    for d in order {
        let best = gts
            .iter()
            .enumerate()
            .filter(|(gi, g)| free[*gi] && g.video_id == d.video_id)
            .map(|(gi, g)| (gi, st_iou(d, *g)))
            .fold(None::<(usize, f64)>, |acc, (gi, iou)| match acc {
                Some((_, biou)) if biou >= iou => acc,
                _ => Some((gi, iou)),
            });
        match best {
            Some((gi, iou)) if iou > iou_t => {
                free[gi] = false;
                flags.push(true);
            }
            _ => flags.push(false),
        }
    }
    (flags, gts.len())
}

/// AP from ranked TP flags with an O(n^2) explicit precision envelope.
pub fn brute_ap(flags: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let n = flags.len();
    let mut recall = Vec::with_capacity(n);
    let mut precision = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (k, &hit) in flags.iter().enumerate() {
        if hit {
            tp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    let mut ap = 0.0;
    for k in 0..n {
        let r_prev = if k == 0 { 0.0 } else { recall[k - 1] };
        let env = precision[k..].iter().copied().fold(0.0, f64::max);
        ap += (recall[k] - r_prev) * env;
    }
    Some(ap)
}

pub fn ap_of(m: &MatchResult) -> Option<f64> {
    trackloc::eval::average_precision(m)
}

// ---------------------------------------------------------------------
// scalar cell oracles
// ---------------------------------------------------------------------

/// Eq.-by-eq. scalar GRU step.
pub fn scalar_gru(cell: &GruCell, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
    let hd = h_prev.len();
    let mut z = vec![0.0; hd];
    let mut r = vec![0.0; hd];
    for i in 0..hd {
        let mut az = cell.b_z[i];
        let mut ar = cell.b_r[i];
        for (j, &xj) in x.iter().enumerate() {
            az += cell.w_z[[i, j]] * xj;
            ar += cell.w_r[[i, j]] * xj;
        }
        for (j, &hj) in h_prev.iter().enumerate() {
            az += cell.u_z[[i, j]] * hj;
            ar += cell.u_r[[i, j]] * hj;
        }
        z[i] = sigmoid(az);
        r[i] = sigmoid(ar);
    }
    let mut h = vec![0.0; hd];
    for i in 0..hd {
        let mut ah = cell.b_h[i];
        for (j, &xj) in x.iter().enumerate() {
            ah += cell.w_h[[i, j]] * xj;
        }
        for j in 0..hd {
            ah += cell.u_h[[i, j]] * (r[j] * h_prev[j]);
        }
        h[i] = z[i] * h_prev[i] + (1.0 - z[i]) * ah.tanh();
    }
    h
}

/// Eq.-by-eq. scalar LSTM step.
pub fn scalar_lstm(
    cell: &LstmCell,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let hd = h_prev.len();
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    for i in 0..hd {
        let mut af = cell.b_f[i];
        let mut ai = cell.b_i[i];
        let mut ao = cell.b_o[i];
        let mut ag = cell.b_c[i];
        for (j, &xj) in x.iter().enumerate() {
            af += cell.w_f[[i, j]] * xj;
            ai += cell.w_i[[i, j]] * xj;
            ao += cell.w_o[[i, j]] * xj;
            ag += cell.w_c[[i, j]] * xj;
        }
        for (j, &hj) in h_prev.iter().enumerate() {
            af += cell.u_f[[i, j]] * hj;
            ai += cell.u_i[[i, j]] * hj;
            ao += cell.u_o[[i, j]] * hj;
            ag += cell.u_c[[i, j]] * hj;
        }
        let (f, inp, o, g) = (sigmoid(af), sigmoid(ai), sigmoid(ao), ag.tanh());
        c[i] = f * c_prev[i] + inp * g;
        h[i] = o * c[i].tanh();
    }
    (h, c)
}

/// Unrolled scalar reimplementation of the single-stream GRU pipeline.
pub fn scalar_forward_single_gru(m: &ModelParams, x: &Array2<f64>) -> Vec<Vec<f64>> {
    let sp = &m.streams[0];
    let hd = m.dims.hidden;
    let dn = m.dims.d_norm;
    let n_out = m.dims.n_classes + 1;
    let (CellParams::Gru(c1), CellParams::Gru(c2)) = (&sp.cell1, &sp.cell2) else {
        panic!("oracle covers GRU models");
    };
    let cl = m.classifier.as_ref().unwrap();

    let mut h1 = vec![0.0; hd];
    let mut h2 = vec![0.0; hd];
    let mut out = Vec::new();
    for t in 0..x.nrows() {
        let mut u = vec![0.0; dn];
        for i in 0..dn {
            let mut a = sp.input_fc.b[i];
            for j in 0..m.dims.d_raw {
                a += sp.input_fc.w[[i, j]] * x[[t, j]];
            }
            u[i] = a.tanh();
        }
        h1 = scalar_gru(c1, &u, &h1);
        h2 = scalar_gru(c2, &h1, &h2);
        let concat: Vec<f64> = h1.iter().chain(&h2).copied().collect();
        let mut logits = vec![0.0; n_out];
        for c in 0..n_out {
            let mut a = cl.b[c];
            for (j, &v) in concat.iter().enumerate() {
                a += cl.w[[c, j]] * v;
            }
            logits[c] = a;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        out.push(exps.iter().map(|e| e / sum).collect());
    }
    out
}
