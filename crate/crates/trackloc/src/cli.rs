//! Batch CLI: generate synthetic data, train scorers, score tracks,
//! localize actions, evaluate detections and export score curves.
//!
//! Every subcommand reads one key-value config file (see the README for
//! the grammar); `--seed`, `--out` and `--jobs` override file values. All
//! outputs are deterministic given the config, independent of `--jobs`.
//! Exit codes: 0 success, 2 config error, 3 data error, 4 divergence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{short_class_split, AssumptionSet, EvalConfig};
use crate::io::checkpoint::{read_checkpoint, write_checkpoint};
use crate::io::config::ConfigMap;
use crate::io::features::{read_features, write_features};
use crate::io::jsonl;
use crate::io::manifest::write_manifest;
use crate::io::results::{write_curves_csv, write_loss_csv, write_results_csv, CurveRow};
use crate::localize::{
    localize, median_filter, score_subtrack, st_nms, threshold_segment, viterbi_segment,
    LocalizationConfig, ViterbiConfig,
};
use crate::model::{
    forward, train, Affine, AdamHyper, CellKind, FusionMode, ModelDims, ModelParams,
    ScoreSequence, TrainConfig, TrainItem,
};
use crate::synth::{generate, make_stream_asymmetric, SyntheticSpec};
use crate::track::{
    assign_frame_labels, Detection, GroundTruthInstance, PersonTrack, StreamTag,
    LABEL_IOU_THRESHOLD,
};

#[derive(Parser)]
#[command(name = "trackloc", version, about = "Track-level temporal action localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` config key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the `out` config key (run output directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-track stages (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generates the synthetic benchmark into the output directory.
    Generate,
    /// Trains a scorer on tracks + ground truth.
    Train,
    /// Scores every track with a trained checkpoint.
    Score,
    /// Turns score files into spatio-temporal detections.
    Localize,
    /// Evaluates detections against ground truth (mAP report).
    Evaluate,
    /// Exports per-track score/label/detection curves as CSV.
    ExportCurves,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LocMethod {
    Threshold,
    Viterbi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ShortClassMode {
    None,
    Auto,
}

#[derive(Debug, Clone)]
struct SynthSection {
    videos: usize,
    frames: usize,
    classes: usize,
    tracks_per_video: usize,
    segments: (usize, usize),
    segment_len: (usize, usize),
    feature_dim: usize,
    separation: f64,
    sigma: f64,
    jitter: usize,
    asymmetry: f64,
}

#[derive(Debug, Clone)]
struct TrainSection {
    cell: CellKind,
    fusion: FusionMode,
    stream: StreamTag,
    hidden: usize,
    d_norm: usize,
    classes: Option<usize>,
    output: String,
    init_appearance: Option<String>,
    init_flow: Option<String>,
    train_cfg: TrainConfig,
}

#[derive(Debug, Clone)]
struct LocSection {
    cfg: LocalizationConfig,
    method: LocMethod,
    viterbi: ViterbiConfig,
}

#[derive(Debug, Clone)]
struct EvalSection {
    thresholds: Vec<f64>,
    short_classes: ShortClassMode,
    explicit_subset: Option<Vec<u32>>,
    assumptions: Option<AssumptionSet>,
    assumption_iou: f64,
}

/// Everything a run can configure, parsed from one file.
pub struct RunConfig {
    seed: u64,
    out_dir: PathBuf,
    data_dir: PathBuf,
    jobs: Option<usize>,
    score_model: String,
    synth: SynthSection,
    train: TrainSection,
    loc: LocSection,
    eval: EvalSection,
}

impl RunConfig {
    fn parse(text: &str, cli: &Cli) -> Result<RunConfig> {
        let mut c = ConfigMap::from_str(text)?;
        if let Some(seed) = cli.seed {
            c.set("seed", seed.to_string());
        }
        if let Some(out) = &cli.out {
            c.set("out", out.display().to_string());
        }
        if let Some(jobs) = cli.jobs {
            c.set("jobs", jobs.to_string());
        }

        let seed: u64 = c.take_required("seed")?;
        let out_dir = PathBuf::from(
            c.take("out").ok_or_else(|| Error::config("missing required key `out`"))?,
        );
        let data_dir = c.take("data.dir").map_or_else(|| out_dir.clone(), PathBuf::from);
        let jobs = c.take_parsed::<usize>("jobs")?;

        let synth = SynthSection {
            videos: c.take_or("synth.videos", 8)?,
            frames: c.take_or("synth.frames", 120)?,
            classes: c.take_or("synth.classes", 3)?,
            tracks_per_video: c.take_or("synth.tracks_per_video", 2)?,
            segments: (c.take_or("synth.segments_min", 1)?, c.take_or("synth.segments_max", 2)?),
            segment_len: (c.take_or("synth.segment_min", 15)?, c.take_or("synth.segment_max", 30)?),
            feature_dim: c.take_or("synth.feature_dim", 8)?,
            separation: c.take_or("synth.separation", 2.2)?,
            sigma: c.take_or("synth.sigma", 0.8)?,
            jitter: c.take_or("synth.jitter", 2)?,
            asymmetry: c.take_or("synth.asymmetry", 0.0)?,
        };

        let train_cfg = TrainConfig {
            steps: c.take_or("train.steps", 200)?,
            batch_size: c.take_or("train.batch", 100)?,
            window: c.take_or("train.window", 20)?,
            bptt_len: c.take_or("train.bptt", 20)?,
            adam: AdamHyper {
                lr: c.take_or("train.lr", 1e-3)?,
                beta1: c.take_or("train.beta1", 0.9)?,
                beta2: c.take_or("train.beta2", 0.999)?,
                eps: c.take_or("train.eps", 1e-8)?,
                weight_decay: c.take_or("train.weight_decay", 5e-4)?,
            },
            seed,
            freeze_streams: false,
        };
        let train = TrainSection {
            cell: CellKind::from_name(&c.take("train.cell").unwrap_or_else(|| "gru".into()))?,
            fusion: FusionMode::from_name(
                &c.take("train.fusion").unwrap_or_else(|| "single".into()),
            )?,
            stream: StreamTag::from_name(
                &c.take("train.stream").unwrap_or_else(|| "appearance".into()),
            )
            .map_err(|e| Error::config(e.to_string()))?,
            hidden: c.take_or("train.hidden", 256)?,
            d_norm: c.take_or("train.d_norm", 64)?,
            classes: c.take_parsed("train.classes")?,
            output: c.take("train.output").unwrap_or_else(|| "model.rln".into()),
            init_appearance: c.take("train.init_appearance"),
            init_flow: c.take("train.init_flow"),
            train_cfg,
        };

        let loc = LocSection {
            cfg: LocalizationConfig {
                theta: c.take_or("loc.theta", 0.1)?,
                median_window: c.take_or("loc.median_window", 25)?,
                nms_overlap: c.take_or("loc.nms_overlap", 0.2)?,
                top_k: c.take_or("loc.top_k", 40)?,
            },
            method: match c.take("loc.method").as_deref().unwrap_or("threshold") {
                "threshold" => LocMethod::Threshold,
                "viterbi" => LocMethod::Viterbi,
                other => {
                    return Err(Error::config(format!("unknown loc.method {other:?}")));
                }
            },
            viterbi: ViterbiConfig {
                alpha: c.take_or("loc.alpha", 5.0)?,
                floor: c.take_or("loc.floor", 1e-6)?,
            },
        };

        let assumptions = match c.take("eval.assumptions") {
            None => None,
            Some(raw) => {
                let mut asm = AssumptionSet::none();
                for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    match part {
                        "classification" => asm.classification = true,
                        "spatial" => asm.spatial = true,
                        "temporal" => asm.temporal = true,
                        other => {
                            return Err(Error::config(format!("unknown assumption {other:?}")));
                        }
                    }
                }
                Some(asm)
            }
        };
        let default_thresholds = EvalConfig::default().iou_thresholds;
        let (short_mode, explicit_subset) =
            match c.take("eval.short_classes").as_deref().unwrap_or("none") {
                "none" => (ShortClassMode::None, None),
                "auto" => (ShortClassMode::Auto, None),
                list => {
                    let subset = list
                        .split(',')
                        .map(|s| {
                            s.trim().parse::<u32>().map_err(|_| {
                                Error::config(format!("eval.short_classes: bad class id {s:?}"))
                            })
                        })
                        .collect::<Result<Vec<u32>>>()?;
                    (ShortClassMode::None, Some(subset))
                }
            };
        let eval = EvalSection {
            thresholds: c.take_f64_list("eval.iou_thresholds")?.unwrap_or(default_thresholds),
            short_classes: short_mode,
            explicit_subset,
            assumptions,
            assumption_iou: c.take_or("eval.assumption_iou", 0.75)?,
        };

        let score_model = c.take("score.model").unwrap_or_else(|| train.output.clone());
        c.finish()?;
        Ok(RunConfig { seed, out_dir, data_dir, jobs, score_model, synth, train, loc, eval })
    }

    fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let s = &self.synth;
        let spec = SyntheticSpec::new(
            s.videos,
            s.frames,
            s.classes,
            s.tracks_per_video,
            s.segments,
            s.segment_len,
            s.feature_dim,
            s.separation,
            s.sigma,
            s.jitter,
            self.seed,
        )?;
        if s.asymmetry > 0.0 {
            make_stream_asymmetric(&spec, s.asymmetry)
        } else {
            Ok(spec)
        }
    }
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config is required"))?;
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", config_path.display())))?;
    let cfg = RunConfig::parse(&text, cli)?;
    if let Some(jobs) = cfg.jobs {
        // ignore failure: the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.command {
        Command::Generate => cmd_generate(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Score => cmd_score(&cfg),
        Command::Localize => cmd_localize(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg),
        Command::ExportCurves => cmd_export_curves(&cfg),
    }
}

fn feature_file(key: &str, tag: StreamTag) -> String {
    format!("features/{key}.{}.tfv", tag.name())
}

fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let spec = cfg.synthetic_spec()?;
    let data = generate(&spec)?;
    std::fs::create_dir_all(cfg.out_dir.join("features"))?;

    let mut emitted: Vec<String> = Vec::new();
    let mut track_lines = String::new();
    for track in &data.tracks {
        let key = track.key();
        let mut paths = BTreeMap::new();
        for tag in [StreamTag::Appearance, StreamTag::Flow] {
            let rel = feature_file(&key, tag);
            write_features(&cfg.out_dir.join(&rel), track.features(tag).expect("generated"))?;
            paths.insert(tag.name().to_string(), rel.clone());
            emitted.push(rel);
        }
        track_lines.push_str(&jsonl::track_line_to_string(track, &paths)?);
        track_lines.push('\n');
    }
    std::fs::write(cfg.out_dir.join("tracks.jsonl"), track_lines)?;
    emitted.push("tracks.jsonl".into());

    let mut gt_lines = String::new();
    for gt in &data.gts {
        gt_lines.push_str(&jsonl::gt_line_to_string(gt)?);
        gt_lines.push('\n');
    }
    std::fs::write(cfg.out_dir.join("gt.jsonl"), gt_lines)?;
    emitted.push("gt.jsonl".into());

    write_manifest(&cfg.out_dir, &emitted)?;
    println!(
        "generated {} tracks, {} ground-truth instances in {}",
        data.tracks.len(),
        data.gts.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

/// Loads tracks and attaches the feature streams referenced by their
/// sidecar paths (relative to the tracks file).
fn load_tracks_with_features(dir: &Path, need_features: bool) -> Result<Vec<PersonTrack>> {
    let records = jsonl::read_tracks(&dir.join("tracks.jsonl"))?;
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let mut track = rec.track;
        if need_features {
            for (stream, rel) in &rec.feature_paths {
                let tag = StreamTag::from_name(stream)?;
                let feats = read_features(&dir.join(rel))?;
                track = track.with_features(tag, feats)?;
            }
        }
        out.push(track);
    }
    Ok(out)
}

fn infer_n_classes(gts: &[GroundTruthInstance], configured: Option<usize>) -> Result<usize> {
    match configured {
        Some(c) if c >= 1 => Ok(c),
        Some(_) => Err(Error::config("train.classes must be >= 1")),
        None => gts
            .iter()
            .map(|g| g.class_id as usize)
            .max()
            .ok_or_else(|| Error::data("cannot infer class count from empty ground truth")),
    }
}

fn feature_dim(tracks: &[PersonTrack], tag: StreamTag) -> Result<usize> {
    let mut dims = tracks.iter().filter_map(|t| t.features(tag).map(|f| f.ncols()));
    let first = dims
        .next()
        .ok_or_else(|| Error::data(format!("no track carries {} features", tag.name())))?;
    if dims.any(|d| d != first) {
        return Err(Error::data(format!("inconsistent {} feature dimensions", tag.name())));
    }
    Ok(first)
}

/// Builds a fused two-stream model from two trained single-stream
/// checkpoints; stream weights are reused verbatim and later frozen.
fn assemble_fusion(
    fusion: FusionMode,
    app: ModelParams,
    flow: ModelParams,
    seed: u64,
) -> Result<ModelParams> {
    for (m, tag) in [(&app, StreamTag::Appearance), (&flow, StreamTag::Flow)] {
        if m.dims.fusion != FusionMode::Single || m.streams[0].tag != tag {
            return Err(Error::config(format!(
                "fusion init checkpoints must be single-stream ({} expected)",
                tag.name()
            )));
        }
    }
    if app.dims.d_raw != flow.dims.d_raw
        || app.dims.d_norm != flow.dims.d_norm
        || app.dims.hidden != flow.dims.hidden
        || app.dims.n_classes != flow.dims.n_classes
        || app.dims.cell != flow.dims.cell
    {
        return Err(Error::config("fusion init checkpoints disagree on model dimensions"));
    }
    let dims = ModelDims { fusion, ..app.dims };
    let mut fused = ModelParams::zeros(dims, &[StreamTag::Appearance, StreamTag::Flow])?;
    let per_stream = fusion.per_stream_classifiers();
    for (slot, single) in [(0usize, app), (1usize, flow)] {
        let classifier = single.classifier;
        let stream = single.streams.into_iter().next().expect("single stream");
        fused.streams[slot].input_fc = stream.input_fc;
        fused.streams[slot].cell1 = stream.cell1;
        fused.streams[slot].cell2 = stream.cell2;
        fused.streams[slot].classifier = per_stream.then(|| {
            classifier.expect("single-stream checkpoint carries a classifier")
        });
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
    Ok(fused)
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let tracks = load_tracks_with_features(&cfg.data_dir, true)?;
    let gts = jsonl::read_gts(&cfg.data_dir.join("gt.jsonl"))?;
    if tracks.is_empty() {
        return Err(Error::data("no tracks to train on"));
    }
    let n_classes = infer_n_classes(&gts, cfg.train.classes)?;
    let labels: Vec<Vec<u32>> = tracks
        .iter()
        .map(|t| assign_frame_labels(t, &gts, LABEL_IOU_THRESHOLD))
        .collect();
    let items: Vec<TrainItem> = tracks
        .iter()
        .zip(&labels)
        .map(|(track, labels)| TrainItem { track, labels })
        .collect();

    let section = &cfg.train;
    let mut train_cfg = section.train_cfg.clone();
    let (model, curve) = match section.fusion {
        FusionMode::Single => {
            let d_raw = feature_dim(&tracks, section.stream)?;
            let dims = ModelDims {
                cell: section.cell,
                fusion: FusionMode::Single,
                d_raw,
                d_norm: section.d_norm,
                hidden: section.hidden,
                n_classes,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut model = ModelParams::init(dims, &[section.stream], &mut rng)?;
            let curve = train(&mut model, &items, &train_cfg)?;
            (model, curve)
        }
        fusion => {
            let (Some(app_path), Some(flow_path)) =
                (&section.init_appearance, &section.init_flow)
            else {
                return Err(Error::config(
                    "fusion training needs train.init_appearance and train.init_flow checkpoints",
                ));
            };
            let app = read_checkpoint(&cfg.data_dir.join(app_path))?;
            let flow = read_checkpoint(&cfg.data_dir.join(flow_path))?;
            let mut model = assemble_fusion(fusion, app, flow, cfg.seed)?;
            // stream weights stay fixed; only the fusion head trains
            train_cfg.freeze_streams = true;
            let curve = if fusion == FusionMode::Average {
                Vec::new() // averaging has no trainable head
            } else {
                train(&mut model, &items, &train_cfg)?
            };
            (model, curve)
        }
    };

    if !model.all_finite() {
        return Err(Error::Divergence("trained parameters are not finite".into()));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    write_checkpoint(&cfg.out_dir.join(&section.output), &model)?;
    write_loss_csv(&cfg.out_dir.join("loss.csv"), &curve)?;
    let last = curve.last().map_or(f64::NAN, |l| *l);
    println!(
        "trained {} {} model ({} steps, final mean loss {last:.4}) -> {}",
        section.cell.name(),
        section.fusion.name(),
        curve.len(),
        cfg.out_dir.join(&section.output).display()
    );
    Ok(())
}

fn model_features<'a>(model: &ModelParams, track: &'a PersonTrack) -> Result<Vec<&'a Array2<f64>>> {
    model
        .streams
        .iter()
        .map(|s| {
            track.features(s.tag).ok_or_else(|| {
                Error::data(format!("track {} lacks {} features", track.key(), s.tag.name()))
            })
        })
        .collect()
}

fn cmd_score(cfg: &RunConfig) -> Result<()> {
    let model = read_checkpoint(&cfg.out_dir.join(&cfg.score_model))?;
    let tracks = load_tracks_with_features(&cfg.data_dir, true)?;
    std::fs::create_dir_all(cfg.out_dir.join("scores"))?;
    let scored: Vec<(String, ScoreSequence)> = tracks
        .par_iter()
        .map(|track| {
            let feats = model_features(&model, track)?;
            let views: Vec<_> = feats.iter().map(|f| f.view()).collect();
            let (scores, _) = forward(&model, &views, &track.track_id)?;
            scores.validate(1e-9)?;
            Ok((track.key(), scores))
        })
        .collect::<Result<Vec<_>>>()?;
    for (key, scores) in &scored {
        write_features(&cfg.out_dir.join(format!("scores/{key}.tfv")), &scores.rows)?;
    }
    println!("scored {} tracks -> {}", scored.len(), cfg.out_dir.join("scores").display());
    Ok(())
}

fn read_scores(cfg: &RunConfig, key: &str) -> Result<ScoreSequence> {
    let rows = read_features(&cfg.out_dir.join(format!("scores/{key}.tfv")))?;
    let scores = ScoreSequence { track_id: key.to_string(), rows };
    scores.validate(1e-6)?;
    Ok(scores)
}

fn localize_track(
    cfg: &RunConfig,
    track: &PersonTrack,
    scores: &ScoreSequence,
    class_id: u32,
) -> Result<Vec<Detection>> {
    match cfg.loc.method {
        LocMethod::Threshold => localize(track, scores, class_id, &cfg.loc.cfg),
        LocMethod::Viterbi => {
            let raw: Vec<f64> = scores.rows.column(class_id as usize).to_vec();
            let mut dets = Vec::new();
            for (i0, i1) in viterbi_segment(&raw, &cfg.loc.viterbi) {
                dets.push(Detection::new(
                    track.video_id.clone(),
                    class_id,
                    track.start_frame + i0 as i64,
                    track.boxes[i0..=i1].to_vec(),
                    score_subtrack(&raw[i0..=i1], cfg.loc.cfg.top_k)?,
                )?);
            }
            Ok(dets)
        }
    }
}

fn cmd_localize(cfg: &RunConfig) -> Result<()> {
    cfg.loc.cfg.validate()?;
    cfg.loc.viterbi.validate()?;
    let tracks = load_tracks_with_features(&cfg.data_dir, false)?;
    let per_track: Vec<Vec<Detection>> = tracks
        .par_iter()
        .map(|track| {
            let scores = read_scores(cfg, &track.key())?;
            if scores.len() != track.len() {
                return Err(Error::data(format!(
                    "track {}: {} score rows for {} frames",
                    track.key(),
                    scores.len(),
                    track.len()
                )));
            }
            let n_classes = scores.rows.ncols() - 1;
            let mut dets = Vec::new();
            for class_id in 1..=n_classes as u32 {
                dets.extend(localize_track(cfg, track, &scores, class_id)?);
            }
            Ok(dets)
        })
        .collect::<Result<Vec<_>>>()?;

    // NMS per (video, class), then a deterministic output order
    let mut groups: BTreeMap<(String, u32), Vec<Detection>> = BTreeMap::new();
    for det in per_track.into_iter().flatten() {
        groups.entry((det.video_id.clone(), det.class_id)).or_default().push(det);
    }
    let mut all = Vec::new();
    for (_, group) in groups {
        all.extend(st_nms(group, cfg.loc.cfg.nms_overlap));
    }
    all.sort_by(|a, b| {
        (&a.video_id, a.class_id, a.start_frame)
            .cmp(&(&b.video_id, b.class_id, b.start_frame))
            .then(b.score.total_cmp(&a.score))
    });
    jsonl::write_detections(&cfg.out_dir.join("detections.jsonl"), &all)?;
    println!("localized {} detections -> {}", all.len(), cfg.out_dir.join("detections.jsonl").display());
    Ok(())
}

/// Video lengths derived from the tracks file (tracks span their video).
fn video_lengths(tracks: &[PersonTrack]) -> BTreeMap<String, i64> {
    let mut lens: BTreeMap<String, i64> = BTreeMap::new();
    for t in tracks {
        let len = t.end_frame() + 1;
        lens.entry(t.video_id.clone()).and_modify(|l| *l = (*l).max(len)).or_insert(len);
    }
    lens
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let dets = jsonl::read_detections(&cfg.out_dir.join("detections.jsonl"))?;
    let gts = jsonl::read_gts(&cfg.data_dir.join("gt.jsonl"))?;
    let class_subset = match (&cfg.eval.explicit_subset, cfg.eval.short_classes) {
        (Some(subset), _) => Some(subset.clone()),
        (None, ShortClassMode::Auto) => {
            let tracks = load_tracks_with_features(&cfg.data_dir, false)?;
            Some(short_class_split(&gts, &video_lengths(&tracks))?)
        }
        (None, ShortClassMode::None) => None,
    };
    let eval_cfg = EvalConfig {
        iou_thresholds: cfg.eval.thresholds.clone(),
        class_subset,
        ap_mode: "precision-envelope-area".into(),
    };
    let report = crate::eval::mean_ap(&dets, &gts, &eval_cfg)?;
    for c in &report.zero_gt_classes {
        eprintln!("warning: class {c} has no ground truth; excluded from mAP");
    }
    write_results_csv(&cfg.out_dir.join("results.csv"), &report)?;
    for block in &report.blocks {
        let map = block.map.map_or("n/a".into(), |m| format!("{m:.4}"));
        println!("mAP@{:.2} = {map}", block.iou_threshold);
    }

    if let Some(asm) = cfg.eval.assumptions {
        let assumed = crate::eval::correctness_analysis(&dets, &gts, asm, cfg.eval.assumption_iou)?;
        write_results_csv(&cfg.out_dir.join("results_assumed.csv"), &assumed)?;
        if let Some(m) = assumed.blocks[0].map {
            println!("mAP@{:.2} under {asm:?} = {m:.4}", cfg.eval.assumption_iou);
        }
    }
    Ok(())
}

fn cmd_export_curves(cfg: &RunConfig) -> Result<()> {
    let tracks = load_tracks_with_features(&cfg.data_dir, false)?;
    let gts = jsonl::read_gts(&cfg.data_dir.join("gt.jsonl"))?;
    std::fs::create_dir_all(cfg.out_dir.join("curves"))?;
    for track in &tracks {
        let scores = read_scores(cfg, &track.key())?;
        if scores.len() != track.len() {
            return Err(Error::data(format!(
                "track {}: {} score rows for {} frames",
                track.key(),
                scores.len(),
                track.len()
            )));
        }
        let labels = assign_frame_labels(track, &gts, LABEL_IOU_THRESHOLD);
        let n_classes = scores.rows.ncols() - 1;
        let mut rows = Vec::new();
        for class_id in 1..=n_classes as u32 {
            let raw: Vec<f64> = scores.rows.column(class_id as usize).to_vec();
            let filtered = median_filter(&raw, cfg.loc.cfg.median_window)?;
            let mut inside = vec![false; raw.len()];
            for (i0, i1) in threshold_segment(&filtered, cfg.loc.cfg.theta) {
                inside[i0..=i1].iter_mut().for_each(|b| *b = true);
            }
            for t in 0..raw.len() {
                rows.push(CurveRow {
                    class_id,
                    frame: track.start_frame + t as i64,
                    raw: raw[t],
                    filtered: filtered[t],
                    label: labels[t],
                    in_detection: inside[t],
                });
            }
        }
        write_curves_csv(&cfg.out_dir.join(format!("curves/{}.csv", track.key())), &rows)?;
    }
    println!("exported curves for {} tracks -> {}", tracks.len(), cfg.out_dir.join("curves").display());
    Ok(())
}
