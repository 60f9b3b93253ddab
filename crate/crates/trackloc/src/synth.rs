//! Deterministic synthetic benchmark generator: videos with drifting
//! person tracks, planted ground-truth action segments, and Gaussian
//! two-stream features whose onset can be jittered against the labels.
//!
//! The feature model is intentionally minimal: per-class mean vectors per
//! stream, isotropic noise, and a per-(stream, class) informativeness
//! weight that lets one stream carry a class the other cannot see. Boxes
//! follow a bounded random walk inside per-track lanes, so tracks of the
//! same video never overlap spatially and label assignment stays clean.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geom::BoundingBox;
use crate::track::{assign_frame_labels, GroundTruthInstance, PersonTrack, LABEL_IOU_THRESHOLD};
#[cfg(test)]
use crate::track::TrackLike;

const IMG_W: f64 = 320.0;
const IMG_H: f64 = 240.0;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_videos: usize,
    pub frames_per_video: usize,
    /// Number of action classes C (labels 1..=C; 0 is background).
    pub n_classes: usize,
    pub tracks_per_video: usize,
    /// Inclusive range for the number of planted segments per track.
    pub segments_per_track: (usize, usize),
    /// Inclusive range of planted segment lengths, in frames.
    pub segment_len: (usize, usize),
    /// Feature dimension of each stream.
    pub feature_dim: usize,
    /// Scale of the class mean vectors.
    pub class_separation: f64,
    /// Isotropic feature noise.
    pub noise_sigma: f64,
    /// Feature onset/offset jitter against the labels, in frames.
    pub jitter: usize,
    /// Informativeness in [0, 1] per stream and class (indexed `[stream][class-1]`):
    /// 0 makes the class look like background in that stream.
    pub stream_weights: [Vec<f64>; 2],
    /// Per-stream (C+1) x D class means; row 0 is background.
    pub class_means: [Array2<f64>; 2],
    pub seed: u64,
}

impl SyntheticSpec {
    /// Builds a spec with seed-derived class means and fully informative
    /// streams.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_videos: usize,
        frames_per_video: usize,
        n_classes: usize,
        tracks_per_video: usize,
        segments_per_track: (usize, usize),
        segment_len: (usize, usize),
        feature_dim: usize,
        class_separation: f64,
        noise_sigma: f64,
        jitter: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut mean_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6D65616E73); // means stream
        let normal = Normal::new(0.0, 1.0).map_err(|e| Error::config(e.to_string()))?;
        let mut draw_means = || {
            let mut m = Array2::zeros((n_classes + 1, feature_dim));
            // background stays at the origin; classes get scaled directions
            for c in 1..=n_classes {
                for d in 0..feature_dim {
                    m[[c, d]] = normal.sample(&mut mean_rng) / (feature_dim as f64).sqrt()
                        * class_separation;
                }
            }
            m
        };
        let class_means = [draw_means(), draw_means()];
        let spec = SyntheticSpec {
            n_videos,
            frames_per_video,
            n_classes,
            tracks_per_video,
            segments_per_track,
            segment_len,
            feature_dim,
            class_separation,
            noise_sigma,
            jitter,
            stream_weights: [vec![1.0; n_classes], vec![1.0; n_classes]],
            class_means,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_videos == 0 || self.frames_per_video == 0 || self.tracks_per_video == 0 {
            return Err(Error::config("videos, frames and tracks per video must be >= 1"));
        }
        if self.n_classes == 0 {
            return Err(Error::config("at least one action class is required"));
        }
        if self.feature_dim == 0 {
            return Err(Error::config("feature dimension must be >= 1"));
        }
        if !(self.noise_sigma > 0.0) {
            return Err(Error::config(format!(
                "noise sigma must be > 0, got {}",
                self.noise_sigma
            )));
        }
        let (smin, smax) = self.segment_len;
        let (kmin, kmax) = self.segments_per_track;
        if smin < 1 || smin > smax {
            return Err(Error::config(format!("bad segment length range [{smin}, {smax}]")));
        }
        if kmin > kmax {
            return Err(Error::config(format!("bad segment count range [{kmin}, {kmax}]")));
        }
        if smin < 2 * self.jitter + 1 {
            return Err(Error::config(format!(
                "segment_min {smin} too short for jitter {} (needs >= {})",
                self.jitter,
                2 * self.jitter + 1
            )));
        }
        // worst-case packing must fit: kmax segments of smax frames plus
        // jitter-safe gaps between them
        let gap = self.min_gap();
        let worst = kmax * smax + kmax.saturating_sub(1) * gap;
        if worst > self.frames_per_video {
            return Err(Error::config(format!(
                "infeasible packing: {kmax} segments of up to {smax} frames with gaps of {gap} \
                 exceed {} frames per video",
                self.frames_per_video
            )));
        }
        for weights in &self.stream_weights {
            if weights.len() != self.n_classes {
                return Err(Error::config("stream weights must cover every class"));
            }
            if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
                return Err(Error::config("stream weights must lie in [0, 1]"));
            }
        }
        for means in &self.class_means {
            if means.dim() != (self.n_classes + 1, self.feature_dim) {
                return Err(Error::config("class means must be (C+1) x feature_dim"));
            }
            for a in 0..=self.n_classes {
                for b in (a + 1)..=self.n_classes {
                    let dist: f64 = (0..self.feature_dim)
                        .map(|d| (means[[a, d]] - means[[b, d]]).powi(2))
                        .sum();
                    if dist == 0.0 {
                        return Err(Error::config(format!(
                            "class means {a} and {b} coincide"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Minimal gap between planted segments so their jittered feature
    /// spans can never collide.
    fn min_gap(&self) -> usize {
        2 * self.jitter + 2
    }
}

/// Makes each stream informative for a disjoint half of the classes.
/// `factor = 0` returns the spec unchanged; `factor = 1` makes the
/// uninformative half of each stream indistinguishable from background.
pub fn make_stream_asymmetric(spec: &SyntheticSpec, factor: f64) -> Result<SyntheticSpec> {
    if spec.n_classes < 2 {
        return Err(Error::config("stream asymmetry needs at least 2 classes"));
    }
    if !(0.0..=1.0).contains(&factor) {
        return Err(Error::config(format!("asymmetry factor must be in [0,1], got {factor}")));
    }
    let mut out = spec.clone();
    let first_half = spec.n_classes.div_ceil(2);
    for c in 0..spec.n_classes {
        let in_first = c < first_half;
        out.stream_weights[0][c] = if in_first { 1.0 } else { 1.0 - factor };
        out.stream_weights[1][c] = if in_first { 1.0 - factor } else { 1.0 };
    }
    Ok(out)
}

/// One generated benchmark.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    /// Tracks with both feature streams attached.
    pub tracks: Vec<PersonTrack>,
    /// Per-frame labels aligned with `tracks`.
    pub labels: Vec<Vec<u32>>,
    pub gts: Vec<GroundTruthInstance>,
    pub video_lengths: BTreeMap<String, i64>,
}

fn video_seed(seed: u64, video: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .rotate_left(17)
        ^ (video as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Places `count` segments of lengths in `segment_len` with at least
/// `gap` frames between them, spreading the slack left to right.
fn place_segments<R: Rng>(
    rng: &mut R,
    track_len: usize,
    count: usize,
    segment_len: (usize, usize),
    gap: usize,
) -> Vec<(usize, usize)> {
    if count == 0 {
        return Vec::new();
    }
    let lens: Vec<usize> =
        (0..count).map(|_| rng.random_range(segment_len.0..=segment_len.1)).collect();
    let needed: usize = lens.iter().sum::<usize>() + (count - 1) * gap;
    let mut slack = track_len.saturating_sub(needed);
    let mut pos = 0usize;
    let mut out = Vec::with_capacity(count);
    for (i, &len) in lens.iter().enumerate() {
        let extra = if slack > 0 { rng.random_range(0..=slack) } else { 0 };
        slack -= extra;
        pos += extra;
        out.push((pos, pos + len - 1));
        pos += len;
        if i + 1 < count {
            pos += gap;
        }
    }
    out
}

/// Bounded random walk inside a horizontal lane.
fn walk_boxes<R: Rng>(
    rng: &mut R,
    t_len: usize,
    lane_y0: f64,
    lane_h: f64,
) -> Vec<BoundingBox> {
    let bw = 26.0;
    let bh = (lane_h * 0.7).max(4.0);
    let y_range = (lane_h - bh).max(0.0);
    let mut x = rng.random_range(0.0..=(IMG_W - bw));
    let mut y = lane_y0 + if y_range > 0.0 { rng.random_range(0.0..=y_range) } else { 0.0 };
    let mut boxes = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        boxes.push(BoundingBox::new(x, y, x + bw, y + bh).expect("walk stays valid"));
        x = (x + rng.random_range(-2.0..2.0)).clamp(0.0, IMG_W - bw);
        y = (y + rng.random_range(-1.0..1.0)).clamp(lane_y0, lane_y0 + y_range.max(0.0));
    }
    boxes
}

/// Generates the benchmark. Pure function of the spec: the same spec
/// (including its seed) always yields byte-identical output.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::config(e.to_string()))?;
    let mut tracks = Vec::new();
    let mut labels = Vec::new();
    let mut gts = Vec::new();
    let mut video_lengths = BTreeMap::new();

    for v in 0..spec.n_videos {
        let video_id = format!("v{v:03}");
        video_lengths.insert(video_id.clone(), spec.frames_per_video as i64);
        let mut rng = ChaCha8Rng::seed_from_u64(video_seed(spec.seed, v));
        let lane_h = IMG_H / spec.tracks_per_video as f64;

        let mut video_tracks = Vec::new();
        let mut video_segments: Vec<Vec<(usize, usize, u32)>> = Vec::new();
        for k in 0..spec.tracks_per_video {
            let t_len = spec.frames_per_video;
            let boxes = walk_boxes(&mut rng, t_len, k as f64 * lane_h, lane_h);
            let track = PersonTrack::new(format!("t{k}"), video_id.clone(), 0, boxes)?;

            let count = rng.random_range(spec.segments_per_track.0..=spec.segments_per_track.1);
            let placed = place_segments(&mut rng, t_len, count, spec.segment_len, spec.min_gap());
            let with_class: Vec<(usize, usize, u32)> = placed
                .into_iter()
                .map(|(a, b)| (a, b, rng.random_range(1..=spec.n_classes as u32)))
                .collect();
            for &(a, b, class) in &with_class {
                gts.push(GroundTruthInstance::new(
                    video_id.clone(),
                    class,
                    a as i64,
                    track.boxes[a..=b].to_vec(),
                )?);
            }
            video_tracks.push(track);
            video_segments.push(with_class);
        }

        // features: per-frame class mean (with jittered onset) plus noise,
        // quantized to f32 so on-disk round trips are exact
        let video_gts: Vec<GroundTruthInstance> =
            gts.iter().filter(|g| g.video_id == video_id).cloned().collect();
        for (track, segments) in video_tracks.into_iter().zip(video_segments) {
            let t_len = track.len();
            // feature-active spans after jitter
            let mut active: Vec<(i64, i64, u32)> = Vec::with_capacity(segments.len());
            for &(a, b, class) in &segments {
                let j = spec.jitter as i64;
                let onset = a as i64 + rng.random_range(-j..=j);
                let offset = b as i64 + rng.random_range(-j..=j);
                active.push((onset.max(0), offset.min(t_len as i64 - 1), class));
            }
            let mut feats: Vec<Array2<f64>> = Vec::with_capacity(2);
            for s in 0..2 {
                let means = &spec.class_means[s];
                let mut m = Array2::zeros((t_len, spec.feature_dim));
                for t in 0..t_len {
                    let class = active
                        .iter()
                        .find(|&&(on, off, _)| (t as i64) >= on && (t as i64) <= off)
                        .map_or(0, |&(_, _, c)| c) as usize;
                    let w = if class == 0 { 0.0 } else { spec.stream_weights[s][class - 1] };
                    for d in 0..spec.feature_dim {
                        let mean = means[[0, d] ] + w * (means[[class, d]] - means[[0, d]]);
                        let raw = mean + normal.sample(&mut rng);
                        m[[t, d]] = raw as f32 as f64;
                    }
                }
                feats.push(m);
            }
            let mut feats = feats.into_iter();
            let track = track
                .with_features(crate::track::StreamTag::Appearance, feats.next().unwrap())?
                .with_features(crate::track::StreamTag::Flow, feats.next().unwrap())?;
            labels.push(assign_frame_labels(&track, &video_gts, LABEL_IOU_THRESHOLD));
            tracks.push(track);
        }
    }
    Ok(SyntheticDataset { tracks, labels, gts, video_lengths })
}
