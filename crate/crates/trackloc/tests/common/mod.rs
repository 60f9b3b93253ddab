//! Shared helpers for the integration and acceptance suites: a
//! finite-difference gradient checker and a library-level pipeline
//! harness (train -> score -> localize -> evaluate) over synthetic data.

#![allow(dead_code)]

pub mod oracles;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trackloc::error::Result;
use trackloc::eval::{evaluate, AssumptionSet, EvalConfig, EvalReport};
use trackloc::localize::{
    localize, score_subtrack, st_nms, viterbi_segment, LocalizationConfig, ViterbiConfig,
};
use trackloc::model::{
    backward, forward, nll_from_probs, Affine, CellKind, FusionMode, ModelDims,
    ModelParams, ScoreSequence, TrainConfig, TrainItem,
};
use trackloc::synth::SyntheticDataset;
use trackloc::track::{Detection, GroundTruthInstance, PersonTrack, StreamTag};

pub const FD_EPS: f64 = 1e-4;

pub fn loss_of(m: &ModelParams, feats: &[Array2<f64>], labels: &[Option<u32>]) -> f64 {
    let views: Vec<_> = feats.iter().map(|f| f.view()).collect();
    let (_, cache) = forward(m, &views, "t").unwrap();
    nll_from_probs(&cache.probs, labels).unwrap()
}

/// Central finite differences over every parameter.
pub fn fd_gradients(m: &ModelParams, feats: &[Array2<f64>], labels: &[Option<u32>]) -> Vec<f64> {
    let mut probe = m.clone();
    let base = m.to_flat();
    let mut fd = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut theta = base.clone();
        theta[i] = base[i] + FD_EPS;
        probe.copy_from_flat(&theta).unwrap();
        let lp = loss_of(&probe, feats, labels);
        theta[i] = base[i] - FD_EPS;
        probe.copy_from_flat(&theta).unwrap();
        let lm = loss_of(&probe, feats, labels);
        fd.push((lp - lm) / (2.0 * FD_EPS));
    }
    fd
}

/// Relative error with an absolute floor: strict relative error for
/// gradients of magnitude >= 1, absolute error below that.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / f64::max(1.0, f64::max(a.abs(), b.abs()))
}

pub fn random_grad_case(
    rng: &mut ChaCha8Rng,
    cell: CellKind,
    fusion: FusionMode,
) -> (ModelParams, Vec<Array2<f64>>, Vec<Option<u32>>) {
    let dims = ModelDims {
        cell,
        fusion,
        d_raw: rng.random_range(1..=10),
        d_norm: rng.random_range(1..=6),
        hidden: rng.random_range(1..=8),
        n_classes: rng.random_range(1..=4),
    };
    let tags = ModelParams::default_tags(fusion, StreamTag::Appearance);
    let m = ModelParams::init(dims, &tags, rng).unwrap();
    let t_len = rng.random_range(1..=12);
    let feats: Vec<Array2<f64>> = (0..dims.n_streams())
        .map(|_| Array2::from_shape_fn((t_len, dims.d_raw), |_| rng.random_range(-1.0..1.0)))
        .collect();
    let labels: Vec<Option<u32>> = (0..t_len)
        .map(|_| (rng.random_range(0..6) > 0).then(|| rng.random_range(0..=dims.n_classes as u32)))
        .collect();
    (m, feats, labels)
}

/// Checked gradient comparison: returns the worst relative error.
pub fn gradient_check(m: &ModelParams, feats: &[Array2<f64>], labels: &[Option<u32>]) -> f64 {
    let views: Vec<_> = feats.iter().map(|f| f.view()).collect();
    let (_, cache) = forward(m, &views, "t").unwrap();
    let analytic = backward(m, &views, &cache, labels, 0).unwrap().to_flat();
    let fd = fd_gradients(m, feats, labels);
    analytic.iter().zip(&fd).map(|(&a, &b)| rel_err(a, b)).fold(0.0, f64::max)
}

/// Train/eval split of a generated dataset by video index.
pub struct Split<'a> {
    pub train: Vec<TrainItem<'a>>,
    pub eval_tracks: Vec<&'a PersonTrack>,
    pub eval_gts: Vec<GroundTruthInstance>,
}

pub fn split_dataset<'a>(data: &'a SyntheticDataset, train_videos: usize) -> Split<'a> {
    let is_train = |video: &str| -> bool {
        video[1..].parse::<usize>().map(|v| v < train_videos).unwrap_or(false)
    };
    let mut train = Vec::new();
    let mut eval_tracks = Vec::new();
    for (track, labels) in data.tracks.iter().zip(&data.labels) {
        if is_train(&track.video_id) {
            train.push(TrainItem { track, labels });
        } else {
            eval_tracks.push(track);
        }
    }
    let eval_gts = data
        .gts
        .iter()
        .filter(|g| !is_train(&g.video_id))
        .cloned()
        .collect();
    Split { train, eval_tracks, eval_gts }
}

pub fn init_model(
    cell: CellKind,
    fusion: FusionMode,
    stream: StreamTag,
    d_raw: usize,
    d_norm: usize,
    hidden: usize,
    n_classes: usize,
    seed: u64,
) -> ModelParams {
    let dims = ModelDims { cell, fusion, d_raw, d_norm, hidden, n_classes };
    let tags = ModelParams::default_tags(fusion, stream);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams::init(dims, &tags, &mut rng).unwrap()
}

/// Builds a fused two-stream model from two trained single-stream models,
/// reusing their stream weights (frozen during head training).
pub fn fuse_models(fusion: FusionMode, app: &ModelParams, flow: &ModelParams, seed: u64) -> ModelParams {
    let dims = ModelDims { fusion, ..app.dims };
    let mut fused =
        ModelParams::zeros(dims, &[StreamTag::Appearance, StreamTag::Flow]).unwrap();
    for (slot, single) in [(0usize, app), (1usize, flow)] {
        fused.streams[slot].input_fc = single.streams[0].input_fc.clone();
        fused.streams[slot].cell1 = single.streams[0].cell1.clone();
        fused.streams[slot].cell2 = single.streams[0].cell2.clone();
        if fusion.per_stream_classifiers() {
            fused.streams[slot].classifier = single.classifier.clone();
        }
    }
    if fusion.fused_classifier() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF05E);
        fused.classifier = Some(Affine::init(
            dims.n_outputs(),
            dims.n_streams() * dims.stream_out_dim(),
            &mut rng,
        ));
    }
    if let Some(g) = &mut fused.gating {
        g.fill(0.5);
    }
    fused
}

pub fn score_track(model: &ModelParams, track: &PersonTrack) -> Result<ScoreSequence> {
    let feats: Vec<_> = model
        .streams
        .iter()
        .map(|s| track.features(s.tag).expect("synthetic tracks carry both streams").view())
        .collect();
    Ok(forward(model, &feats, &track.track_id)?.0)
}

/// Uniform scorer: every row is 1/(C+1).
pub fn uniform_scores(track: &PersonTrack, n_classes: usize) -> ScoreSequence {
    ScoreSequence {
        track_id: track.track_id.clone(),
        rows: Array2::from_elem((track.len(), n_classes + 1), 1.0 / (n_classes + 1) as f64),
    }
}

#[derive(Clone, Copy)]
pub enum Localizer {
    Threshold(LocalizationConfig),
    Viterbi(ViterbiConfig, LocalizationConfig),
}

/// Localize + per-(video, class) NMS over a set of scored tracks.
pub fn detect_all(
    tracks: &[&PersonTrack],
    scores: &[ScoreSequence],
    n_classes: usize,
    method: &Localizer,
) -> Result<Vec<Detection>> {
    let mut groups: std::collections::BTreeMap<(String, u32), Vec<Detection>> =
        std::collections::BTreeMap::new();
    let nms_overlap = match method {
        Localizer::Threshold(cfg) | Localizer::Viterbi(_, cfg) => cfg.nms_overlap,
    };
    for (track, s) in tracks.iter().zip(scores) {
        for class_id in 1..=n_classes as u32 {
            let dets = match method {
                Localizer::Threshold(cfg) => localize(track, s, class_id, cfg)?,
                Localizer::Viterbi(vcfg, cfg) => {
                    let raw: Vec<f64> = s.rows.column(class_id as usize).to_vec();
                    let mut out = Vec::new();
                    for (i0, i1) in viterbi_segment(&raw, vcfg) {
                        out.push(Detection::new(
                            track.video_id.clone(),
                            class_id,
                            track.start_frame + i0 as i64,
                            track.boxes[i0..=i1].to_vec(),
                            score_subtrack(&raw[i0..=i1], cfg.top_k)?,
                        )?);
                    }
                    out
                }
            };
            for d in dets {
                groups.entry((d.video_id.clone(), d.class_id)).or_default().push(d);
            }
        }
    }
    let mut all = Vec::new();
    for (_, g) in groups {
        all.extend(st_nms(g, nms_overlap));
    }
    Ok(all)
}

pub fn map_at(
    dets: &[Detection],
    gts: &[GroundTruthInstance],
    iou_t: f64,
) -> f64 {
    let cfg = EvalConfig { iou_thresholds: vec![iou_t], ..EvalConfig::default() };
    evaluate(dets, gts, &cfg, AssumptionSet::none())
        .unwrap()
        .blocks[0]
        .map
        .unwrap_or(0.0)
}

pub fn full_report(
    dets: &[Detection],
    gts: &[GroundTruthInstance],
    thresholds: Vec<f64>,
) -> EvalReport {
    let cfg = EvalConfig { iou_thresholds: thresholds, ..EvalConfig::default() };
    evaluate(dets, gts, &cfg, AssumptionSet::none()).unwrap()
}

/// Trains a fresh model on the split and returns mAP at `iou_t` on the
/// held-out videos.
#[allow(clippy::too_many_arguments)]
pub fn train_and_eval(
    data: &SyntheticDataset,
    train_videos: usize,
    cell: CellKind,
    d_norm: usize,
    hidden: usize,
    n_classes: usize,
    train_cfg: &TrainConfig,
    loc: &Localizer,
    iou_t: f64,
    seed: u64,
) -> (f64, Vec<f64>) {
    let split = split_dataset(data, train_videos);
    let d_raw = data.tracks[0].appearance.as_ref().unwrap().ncols();
    let mut model = init_model(
        cell,
        FusionMode::Single,
        StreamTag::Appearance,
        d_raw,
        d_norm,
        hidden,
        n_classes,
        seed,
    );
    let curve = trackloc::model::train(&mut model, &split.train, train_cfg).unwrap();
    let scores: Vec<ScoreSequence> =
        split.eval_tracks.iter().map(|t| score_track(&model, t).unwrap()).collect();
    let dets = detect_all(&split.eval_tracks, &scores, n_classes, loc).unwrap();
    (map_at(&dets, &split.eval_gts, iou_t), curve)
}
