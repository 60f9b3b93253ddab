//! JSON-lines records: one object per line for tracks, ground truth and
//! detections.
//!
//! Track line: `{"video":s,"track":s,"start":i,"boxes":[[x1,y1,x2,y2],..],
//! "features":{"appearance":path,"flow":path}}` (the `features` map is
//! optional; paths are relative to the file).
//! GT line: `{"video":s,"class":i,"start":i,"boxes":[..]}`.
//! Detection line: `{"video":s,"class":i,"start":i,"end":i,"score":f,"boxes":[..]}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::validate_id;
use crate::error::{Error, Result};
use crate::geom::BoundingBox;
use crate::track::{Detection, GroundTruthInstance, PersonTrack};

#[derive(Debug, Serialize, Deserialize)]
struct TrackLine {
    video: String,
    track: String,
    start: i64,
    boxes: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GtLine {
    video: String,
    class: u32,
    start: i64,
    boxes: Vec<[f64; 4]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DetLine {
    video: String,
    class: u32,
    start: i64,
    end: i64,
    score: f64,
    boxes: Vec<[f64; 4]>,
}

/// A parsed track plus the sidecar feature paths it references
/// (stream name -> path, unresolved).
#[derive(Debug, Clone)]
pub struct TrackRecord {
    pub track: PersonTrack,
    pub feature_paths: BTreeMap<String, String>,
}

fn boxes_from(raw: Vec<[f64; 4]>) -> Result<Vec<BoundingBox>> {
    if raw.is_empty() {
        return Err(Error::data("record must contain at least one box"));
    }
    raw.into_iter().map(|[x1, y1, x2, y2]| BoundingBox::new(x1, y1, x2, y2)).collect()
}

pub fn parse_track_line(line: &str) -> Result<TrackRecord> {
    let raw: TrackLine =
        serde_json::from_str(line).map_err(|e| Error::data(format!("bad track line: {e}")))?;
    validate_id("video", &raw.video)?;
    validate_id("track", &raw.track)?;
    let track = PersonTrack::new(raw.track, raw.video, raw.start, boxes_from(raw.boxes)?)?;
    let feature_paths = raw.features.unwrap_or_default();
    for stream in feature_paths.keys() {
        if stream != "appearance" && stream != "flow" {
            return Err(Error::data(format!("unknown feature stream {stream:?}")));
        }
    }
    Ok(TrackRecord { track, feature_paths })
}

pub fn parse_gt_line(line: &str) -> Result<GroundTruthInstance> {
    let raw: GtLine = serde_json::from_str(line)
        .map_err(|e| Error::data(format!("bad ground-truth line: {e}")))?;
    validate_id("video", &raw.video)?;
    GroundTruthInstance::new(raw.video, raw.class, raw.start, boxes_from(raw.boxes)?)
}

pub fn parse_detection_line(line: &str) -> Result<Detection> {
    let raw: DetLine =
        serde_json::from_str(line).map_err(|e| Error::data(format!("bad detection line: {e}")))?;
    validate_id("video", &raw.video)?;
    let det = Detection::new(raw.video, raw.class, raw.start, boxes_from(raw.boxes)?, raw.score)?;
    if det.end_frame() != raw.end {
        return Err(Error::data(format!(
            "detection end {} disagrees with start {} + {} boxes",
            raw.end,
            raw.start,
            det.boxes.len()
        )));
    }
    Ok(det)
}

fn parse_lines<T>(text: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(parse)
        .collect()
}

pub fn parse_tracks_jsonl(text: &str) -> Result<Vec<TrackRecord>> {
    parse_lines(text, parse_track_line)
}

pub fn parse_gt_jsonl(text: &str) -> Result<Vec<GroundTruthInstance>> {
    parse_lines(text, parse_gt_line)
}

pub fn parse_detections_jsonl(text: &str) -> Result<Vec<Detection>> {
    parse_lines(text, parse_detection_line)
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackRecord>> {
    parse_tracks_jsonl(&fs::read_to_string(path)?)
}

pub fn read_gts(path: &Path) -> Result<Vec<GroundTruthInstance>> {
    parse_gt_jsonl(&fs::read_to_string(path)?)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    parse_detections_jsonl(&fs::read_to_string(path)?)
}

fn boxes_to(boxes: &[BoundingBox]) -> Vec<[f64; 4]> {
    boxes.iter().map(BoundingBox::as_array).collect()
}

pub fn track_line_to_string(
    track: &PersonTrack,
    feature_paths: &BTreeMap<String, String>,
) -> Result<String> {
    let line = TrackLine {
        video: track.video_id.clone(),
        track: track.track_id.clone(),
        start: track.start_frame,
        boxes: boxes_to(&track.boxes),
        features: (!feature_paths.is_empty()).then(|| feature_paths.clone()),
    };
    serde_json::to_string(&line).map_err(|e| Error::data(e.to_string()))
}

pub fn gt_line_to_string(gt: &GroundTruthInstance) -> Result<String> {
    let line = GtLine {
        video: gt.video_id.clone(),
        class: gt.class_id,
        start: gt.start_frame,
        boxes: boxes_to(&gt.boxes),
    };
    serde_json::to_string(&line).map_err(|e| Error::data(e.to_string()))
}

pub fn detection_line_to_string(det: &Detection) -> Result<String> {
    let line = DetLine {
        video: det.video_id.clone(),
        class: det.class_id,
        start: det.start_frame,
        end: det.end_frame(),
        score: det.score,
        boxes: boxes_to(&det.boxes),
    };
    serde_json::to_string(&line).map_err(|e| Error::data(e.to_string()))
}

pub fn write_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    let mut out = String::new();
    for d in dets {
        out.push_str(&detection_line_to_string(d)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
