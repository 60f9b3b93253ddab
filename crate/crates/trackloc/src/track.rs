//! Person tracks, ground-truth instances, detections and the temporal /
//! spatio-temporal IoU measures defined on them.
//!
//! Frames are integer indices and intervals are inclusive on both ends;
//! temporal IoU counts frames, not continuous durations. All types are
//! immutable after construction and every operation here is pure.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geom::{spatial_iou, BoundingBox};

/// Stream identifier for the two feature channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StreamTag {
    Appearance,
    Flow,
}

impl StreamTag {
    pub fn name(&self) -> &'static str {
        match self {
            StreamTag::Appearance => "appearance",
            StreamTag::Flow => "flow",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "appearance" => Ok(StreamTag::Appearance),
            "flow" => Ok(StreamTag::Flow),
            other => Err(Error::data(format!("unknown stream tag {other:?}"))),
        }
    }
}

/// A contiguous per-frame sequence of person boxes, with optional per-frame
/// feature rows for each stream.
#[derive(Debug, Clone)]
pub struct PersonTrack {
    pub track_id: String,
    pub video_id: String,
    pub start_frame: i64,
    pub boxes: Vec<BoundingBox>,
    /// T x D feature matrix per stream; rows aligned with `boxes`.
    pub appearance: Option<Array2<f64>>,
    pub flow: Option<Array2<f64>>,
}

impl PersonTrack {
    pub fn new(
        track_id: impl Into<String>,
        video_id: impl Into<String>,
        start_frame: i64,
        boxes: Vec<BoundingBox>,
    ) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::data("track must contain at least one frame"));
        }
        Ok(PersonTrack {
            track_id: track_id.into(),
            video_id: video_id.into(),
            start_frame,
            boxes,
            appearance: None,
            flow: None,
        })
    }

    pub fn with_features(
        mut self,
        tag: StreamTag,
        feats: Array2<f64>,
    ) -> Result<Self> {
        if feats.nrows() != self.len() {
            return Err(Error::data(format!(
                "track {}: feature rows {} do not match track length {}",
                self.track_id,
                feats.nrows(),
                self.len()
            )));
        }
        match tag {
            StreamTag::Appearance => self.appearance = Some(feats),
            StreamTag::Flow => self.flow = Some(feats),
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn end_frame(&self) -> i64 {
        self.start_frame + self.boxes.len() as i64 - 1
    }

    pub fn features(&self, tag: StreamTag) -> Option<&Array2<f64>> {
        match tag {
            StreamTag::Appearance => self.appearance.as_ref(),
            StreamTag::Flow => self.flow.as_ref(),
        }
    }

    /// Key used for per-track output files: `<video>_<track>`.
    pub fn key(&self) -> String {
        format!("{}_{}", self.video_id, self.track_id)
    }
}

/// A manually annotated action instance: class plus per-frame boxes.
#[derive(Debug, Clone)]
pub struct GroundTruthInstance {
    pub video_id: String,
    pub class_id: u32,
    pub start_frame: i64,
    pub boxes: Vec<BoundingBox>,
}

impl GroundTruthInstance {
    pub fn new(
        video_id: impl Into<String>,
        class_id: u32,
        start_frame: i64,
        boxes: Vec<BoundingBox>,
    ) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::data("ground-truth instance must span at least one frame"));
        }
        if class_id == 0 {
            return Err(Error::data("ground-truth class ids start at 1 (0 is background)"));
        }
        Ok(GroundTruthInstance {
            video_id: video_id.into(),
            class_id,
            start_frame,
            boxes,
        })
    }

    pub fn end_frame(&self) -> i64 {
        self.start_frame + self.boxes.len() as i64 - 1
    }
}

/// A temporally trimmed sub-track proposed as one action instance.
#[derive(Debug, Clone)]
pub struct Detection {
    pub video_id: String,
    pub class_id: u32,
    pub start_frame: i64,
    pub boxes: Vec<BoundingBox>,
    pub score: f64,
}

impl Detection {
    pub fn new(
        video_id: impl Into<String>,
        class_id: u32,
        start_frame: i64,
        boxes: Vec<BoundingBox>,
        score: f64,
    ) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::data("detection must span at least one frame"));
        }
        if !score.is_finite() {
            return Err(Error::data("detection score must be finite"));
        }
        Ok(Detection {
            video_id: video_id.into(),
            class_id,
            start_frame,
            boxes,
            score,
        })
    }

    pub fn end_frame(&self) -> i64 {
        self.start_frame + self.boxes.len() as i64 - 1
    }
}

/// Anything with an inclusive frame interval and one box per frame.
pub trait TrackLike {
    fn start_frame(&self) -> i64;
    fn frame_boxes(&self) -> &[BoundingBox];

    fn end_frame_inclusive(&self) -> i64 {
        self.start_frame() + self.frame_boxes().len() as i64 - 1
    }

    fn box_at(&self, frame: i64) -> Option<&BoundingBox> {
        let idx = frame - self.start_frame();
        if idx < 0 {
            return None;
        }
        self.frame_boxes().get(idx as usize)
    }
}

impl TrackLike for PersonTrack {
    fn start_frame(&self) -> i64 {
        self.start_frame
    }
    fn frame_boxes(&self) -> &[BoundingBox] {
        &self.boxes
    }
}

impl TrackLike for GroundTruthInstance {
    fn start_frame(&self) -> i64 {
        self.start_frame
    }
    fn frame_boxes(&self) -> &[BoundingBox] {
        &self.boxes
    }
}

impl TrackLike for Detection {
    fn start_frame(&self) -> i64 {
        self.start_frame
    }
    fn frame_boxes(&self) -> &[BoundingBox] {
        &self.boxes
    }
}

/// Temporal IoU of two inclusive frame intervals, in frame counts.
pub fn temporal_iou(a: (i64, i64), b: (i64, i64)) -> f64 {
    debug_assert!(a.1 >= a.0 && b.1 >= b.0, "intervals must be non-empty");
    let inter = (a.1.min(b.1) - a.0.max(b.0) + 1).max(0);
    if inter == 0 {
        return 0.0;
    }
    let union = (a.1 - a.0 + 1) + (b.1 - b.0 + 1) - inter;
    inter as f64 / union as f64
}

/// Spatio-temporal IoU: temporal IoU of the two frame intervals times the
/// mean spatial IoU over the frames where both are present. Defined as 0
/// when the intervals share no frame.
pub fn st_iou<A: TrackLike + ?Sized, B: TrackLike + ?Sized>(a: &A, b: &B) -> f64 {
    st_iou_parts(a, b).map_or(0.0, |(ot, os)| ot * os)
}

/// The (temporal, mean-spatial) IoU factors of [`st_iou`], or `None` when
/// the intervals are disjoint. Exposed so the evaluation module can rescale
/// the factors independently.
pub fn st_iou_parts<A: TrackLike + ?Sized, B: TrackLike + ?Sized>(
    a: &A,
    b: &B,
) -> Option<(f64, f64)> {
    let (a0, a1) = (a.start_frame(), a.end_frame_inclusive());
    let (b0, b1) = (b.start_frame(), b.end_frame_inclusive());
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    if lo > hi {
        return None;
    }
    let ot = temporal_iou((a0, a1), (b0, b1));
    let mut sum = 0.0;
    for f in lo..=hi {
        sum += spatial_iou(a.box_at(f).unwrap(), b.box_at(f).unwrap());
    }
    let os = sum / (hi - lo + 1) as f64;
    Some((ot, os))
}

/// Default spatial-IoU threshold for frame label assignment.
pub const LABEL_IOU_THRESHOLD: f64 = 0.3;

/// Assigns one label in `[0, C]` to every frame of `track` (0 = background).
///
/// A frame gets label `c` if the track box overlaps strictly more than
/// `iou_thresh` with some ground-truth box of class `c` on that frame.
/// When several instances qualify, the maximal-IoU one wins; exact IoU ties
/// go to the smaller class id.
pub fn assign_frame_labels(
    track: &PersonTrack,
    gts: &[GroundTruthInstance],
    iou_thresh: f64,
) -> Vec<u32> {
    let mut labels = vec![0u32; track.len()];
    for (i, label) in labels.iter_mut().enumerate() {
        let frame = track.start_frame + i as i64;
        let tb = &track.boxes[i];
        let mut best: Option<(f64, u32)> = None;
        for gt in gts {
            if gt.video_id != track.video_id {
                continue;
            }
            let Some(gb) = gt.box_at(frame) else { continue };
            let iou = spatial_iou(tb, gb);
            if iou <= iou_thresh {
                continue;
            }
            let better = match best {
                None => true,
                Some((biou, bcls)) => {
                    iou > biou || (iou == biou && gt.class_id < bcls)
                }
            };
            if better {
                best = Some((iou, gt.class_id));
            }
        }
        if let Some((_, cls)) = best {
            *label = cls;
        }
    }
    labels
}
