//! Detection evaluation: greedy ST-IoU matching against ground truth,
//! precision/recall, per-class average precision and mAP at multiple IoU
//! thresholds, short-class subsets, and the correctness-assumption
//! diagnostic that idealizes one pipeline component at a time.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::track::{st_iou_parts, Detection, GroundTruthInstance};

/// Overlap level above which an IoU factor is treated as perfect when the
/// corresponding correctness assumption is active.
pub const ASSUMPTION_BOOST_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Matching thresholds, strictly increasing, each in (0, 1].
    pub iou_thresholds: Vec<f64>,
    /// Optional class subset reported separately (e.g. short classes).
    pub class_subset: Option<Vec<u32>>,
    /// Documentation tag describing the AP integration rule.
    pub ap_mode: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_thresholds: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.75],
            class_subset: None,
            ap_mode: "precision-envelope-area".to_string(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::config("at least one IoU threshold is required"));
        }
        for w in self.iou_thresholds.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::config("IoU thresholds must be strictly increasing"));
            }
        }
        for &t in &self.iou_thresholds {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::config(format!("IoU threshold {t} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Which pipeline components are assumed perfect in the diagnostic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssumptionSet {
    /// FP scores are zeroed after matching (AP then equals recall).
    pub classification: bool,
    /// Mean spatial IoU above 0.3 is treated as 1 inside ST-IoU.
    pub spatial: bool,
    /// Temporal IoU above 0.3 is treated as 1 inside ST-IoU.
    pub temporal: bool,
}

impl AssumptionSet {
    pub fn none() -> Self {
        AssumptionSet::default()
    }

    pub fn all() -> Self {
        AssumptionSet { classification: true, spatial: true, temporal: true }
    }

    pub fn is_empty(&self) -> bool {
        !(self.classification || self.spatial || self.temporal)
    }
}

/// ST-IoU with the active assumptions applied to its two factors.
pub fn st_iou_assumed(det: &Detection, gt: &GroundTruthInstance, asm: AssumptionSet) -> f64 {
    match st_iou_parts(det, gt) {
        None => 0.0,
        Some((mut ot, mut os)) => {
            if asm.temporal && ot > ASSUMPTION_BOOST_THRESHOLD {
                ot = 1.0;
            }
            if asm.spatial && os > ASSUMPTION_BOOST_THRESHOLD {
                os = 1.0;
            }
            ot * os
        }
    }
}

/// Outcome of matching one class at one threshold. Entries are in the
/// ranking order used for matching (score descending).
#[derive(Debug, Clone)]
pub struct MatchResult {
    pub scores: Vec<f64>,
    pub tp: Vec<bool>,
    /// Index into the class-filtered ground-truth list, for true positives.
    pub matched_gt: Vec<Option<usize>>,
    pub n_gt: usize,
}

fn ranking_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.start_frame.cmp(&b.start_frame))
        .then_with(|| b.boxes.len().cmp(&a.boxes.len()))
        .then_with(|| a.video_id.cmp(&b.video_id))
}

/// Greedy matching of one class: detections are ranked by descending score;
/// each claims the maximal-IoU unmatched same-video ground truth, and is a
/// true positive iff that IoU exceeds `iou_t`. Duplicates hitting an
/// already-claimed ground truth become false positives.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthInstance],
    class_id: u32,
    iou_t: f64,
) -> MatchResult {
    match_detections_assumed(dets, gts, class_id, iou_t, AssumptionSet::none())
}

pub fn match_detections_assumed(
    dets: &[Detection],
    gts: &[GroundTruthInstance],
    class_id: u32,
    iou_t: f64,
    asm: AssumptionSet,
) -> MatchResult {
    let class_gts: Vec<&GroundTruthInstance> =
        gts.iter().filter(|g| g.class_id == class_id).collect();
    let mut class_dets: Vec<&Detection> =
        dets.iter().filter(|d| d.class_id == class_id).collect();
    class_dets.sort_by(|a, b| ranking_order(a, b));

    let mut used = vec![false; class_gts.len()];
    let mut scores = Vec::with_capacity(class_dets.len());
    let mut tp = Vec::with_capacity(class_dets.len());
    let mut matched_gt = Vec::with_capacity(class_dets.len());
    for det in &class_dets {
        let mut best: Option<(f64, usize)> = None;
        for (gi, gt) in class_gts.iter().enumerate() {
            if used[gi] || gt.video_id != det.video_id {
                continue;
            }
            let iou = st_iou_assumed(det, gt, asm);
            if best.map_or(true, |(biou, _)| iou > biou) {
                best = Some((iou, gi));
            }
        }
        let hit = best.filter(|&(iou, _)| iou > iou_t);
        scores.push(det.score);
        tp.push(hit.is_some());
        matched_gt.push(hit.map(|(_, gi)| gi));
        if let Some((_, gi)) = hit {
            used[gi] = true;
        }
    }
    debug_assert!({
        let mut seen = std::collections::HashSet::new();
        matched_gt.iter().flatten().all(|gi| seen.insert(*gi))
    });
    MatchResult { scores, tp, matched_gt, n_gt: class_gts.len() }
}

/// Area under the precision-recall curve using the precision envelope
/// (precision at each recall point is the maximum precision at any recall
/// at least that large). `None` when the class has no ground truth.
pub fn average_precision(m: &MatchResult) -> Option<f64> {
    if m.n_gt == 0 {
        return None;
    }
    // rank by score descending; stable so the matching order breaks ties
    let mut order: Vec<usize> = (0..m.tp.len()).collect();
    order.sort_by(|&a, &b| m.scores[b].total_cmp(&m.scores[a]));

    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let mut tp_cum = 0usize;
    for (k, &i) in order.iter().enumerate() {
        if m.tp[i] {
            tp_cum += 1;
        }
        recall.push(tp_cum as f64 / m.n_gt as f64);
        precision.push(tp_cum as f64 / (k + 1) as f64);
    }
    let mut ap = 0.0;
    let mut env = 0.0f64;
    let mut prev_recall = recall.last().copied().unwrap_or(0.0);
    for k in (0..order.len()).rev() {
        env = env.max(precision[k]);
        let r_lo = if k == 0 { 0.0 } else { recall[k - 1] };
        ap += (prev_recall - r_lo) * env;
        prev_recall = r_lo;
    }
    Some(ap)
}

/// Per-class AP entry at one threshold.
#[derive(Debug, Clone)]
pub struct ApCell {
    pub class_id: u32,
    pub ap: Option<f64>,
    pub n_gt: usize,
    pub n_det: usize,
}

/// AP table for one IoU threshold.
#[derive(Debug, Clone)]
pub struct ThresholdBlock {
    pub iou_threshold: f64,
    pub cells: Vec<ApCell>,
    /// Mean AP over classes with ground truth; `None` if no class has any.
    pub map: Option<f64>,
    /// Mean AP over the configured class subset.
    pub map_subset: Option<f64>,
}

/// Full evaluation result across thresholds and classes.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub ap_mode: String,
    pub classes: Vec<u32>,
    pub blocks: Vec<ThresholdBlock>,
    /// Classes excluded from the mean because they have no ground truth.
    pub zero_gt_classes: Vec<u32>,
}

impl EvalReport {
    pub fn map_at(&self, iou_t: f64) -> Option<f64> {
        self.blocks
            .iter()
            .find(|b| b.iou_threshold == iou_t)
            .and_then(|b| b.map)
    }
}

/// Composes matching and AP for every (threshold, class) pair.
pub fn mean_ap(
    dets: &[Detection],
    gts: &[GroundTruthInstance],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    evaluate(dets, gts, cfg, AssumptionSet::none())
}

/// [`mean_ap`] under a set of correctness assumptions; the empty set
/// reproduces `mean_ap` exactly (same code path).
pub fn correctness_analysis(
    dets: &[Detection],
    gts: &[GroundTruthInstance],
    asm: AssumptionSet,
    iou_t: f64,
) -> Result<EvalReport> {
    let cfg = EvalConfig {
        iou_thresholds: vec![iou_t],
        ..EvalConfig::default()
    };
    evaluate(dets, gts, &cfg, asm)
}

pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruthInstance],
    cfg: &EvalConfig,
    asm: AssumptionSet,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut classes: Vec<u32> = gts
        .iter()
        .map(|g| g.class_id)
        .chain(dets.iter().map(|d| d.class_id))
        .collect();
    classes.sort_unstable();
    classes.dedup();

    let mut zero_gt_classes = Vec::new();
    let mut blocks = Vec::with_capacity(cfg.iou_thresholds.len());
    for &iou_t in &cfg.iou_thresholds {
        let mut cells = Vec::with_capacity(classes.len());
        for &c in &classes {
            let mut m = match_detections_assumed(dets, gts, c, iou_t, asm);
            if asm.classification {
                // perfect classification: false positives score 0, sinking
                // them below every true positive in the ranking
                for (s, &hit) in m.scores.iter_mut().zip(&m.tp) {
                    if !hit {
                        *s = 0.0;
                    }
                }
            }
            let ap = average_precision(&m);
            if m.n_gt == 0 && !zero_gt_classes.contains(&c) {
                zero_gt_classes.push(c);
            }
            cells.push(ApCell { class_id: c, ap, n_gt: m.n_gt, n_det: m.tp.len() });
        }
        let map = mean_over(cells.iter().filter_map(|c| c.ap));
        let map_subset = cfg.class_subset.as_ref().and_then(|subset| {
            mean_over(
                cells
                    .iter()
                    .filter(|c| subset.contains(&c.class_id))
                    .filter_map(|c| c.ap),
            )
        });
        blocks.push(ThresholdBlock { iou_threshold: iou_t, cells, map, map_subset });
    }
    Ok(EvalReport {
        ap_mode: cfg.ap_mode.clone(),
        classes,
        blocks,
        zero_gt_classes,
    })
}

fn mean_over(vals: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in vals {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Classes whose instances last on average less than half their video.
pub fn short_class_split(
    gts: &[GroundTruthInstance],
    video_lengths: &BTreeMap<String, i64>,
) -> Result<Vec<u32>> {
    let mut per_class: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for gt in gts {
        let video_len = *video_lengths.get(&gt.video_id).ok_or_else(|| {
            Error::data(format!("unknown video length for {}", gt.video_id))
        })?;
        if video_len <= 0 {
            return Err(Error::data(format!("non-positive length for video {}", gt.video_id)));
        }
        let ratio = gt.boxes.len() as f64 / video_len as f64;
        let e = per_class.entry(gt.class_id).or_insert((0.0, 0));
        e.0 += ratio;
        e.1 += 1;
    }
    Ok(per_class
        .into_iter()
        .filter(|&(_, (sum, n))| sum / (n as f64) < 0.5)
        .map(|(c, _)| c)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::BoundingBox;

    fn bx() -> BoundingBox {
        BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap()
    }

    fn gt(video: &str, class: u32, start: i64, len: usize) -> GroundTruthInstance {
        GroundTruthInstance::new(video, class, start, vec![bx(); len]).unwrap()
    }

    fn det(video: &str, class: u32, start: i64, len: usize, score: f64) -> Detection {
        Detection::new(video, class, start, vec![bx(); len], score).unwrap()
    }

    #[test]
    fn exact_copy_is_tp() {
        let g = vec![gt("v", 1, 0, 10)];
        let d = vec![det("v", 1, 0, 10, 0.9)];
        let m = match_detections(&d, &g, 1, 0.5);
        assert_eq!(m.tp, vec![true]);
        assert_eq!(m.matched_gt, vec![Some(0)]);
        assert_eq!(average_precision(&m), Some(1.0));
    }

    #[test]
    fn duplicate_copy_is_fp() {
        let g = vec![gt("v", 1, 0, 10)];
        let d = vec![det("v", 1, 0, 10, 0.9), det("v", 1, 0, 10, 0.8)];
        let m = match_detections(&d, &g, 1, 0.5);
        assert_eq!(m.tp, vec![true, false]);
    }

    #[test]
    fn matching_respects_video_boundaries() {
        let g = vec![gt("v0", 1, 0, 10)];
        let d = vec![det("v1", 1, 0, 10, 0.9)];
        let m = match_detections(&d, &g, 1, 0.1);
        assert_eq!(m.tp, vec![false]);
    }

    #[test]
    fn ap_hand_fixture_five_sixths() {
        // 3 detections (TP, FP, TP) over 2 GT:
        // precision points (1, 1/2, 2/3) -> AP = 0.5*1 + 0.5*(2/3) = 5/6
        let m = MatchResult {
            scores: vec![0.9, 0.8, 0.7],
            tp: vec![true, false, true],
            matched_gt: vec![Some(0), None, Some(1)],
            n_gt: 2,
        };
        let ap = average_precision(&m).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15, "AP {ap} != 5/6");
    }

    #[test]
    fn ap_no_detections_is_zero() {
        let m = MatchResult { scores: vec![], tp: vec![], matched_gt: vec![], n_gt: 3 };
        assert_eq!(average_precision(&m), Some(0.0));
    }

    #[test]
    fn ap_undefined_without_gt() {
        let m = MatchResult {
            scores: vec![0.5],
            tp: vec![false],
            matched_gt: vec![None],
            n_gt: 0,
        };
        assert_eq!(average_precision(&m), None);
    }

    #[test]
    fn perfect_detections_reach_map_one() {
        let g = vec![gt("v", 1, 0, 10), gt("v", 2, 50, 10)];
        let d = vec![det("v", 1, 0, 10, 0.9), det("v", 2, 50, 10, 0.8)];
        let cfg = EvalConfig {
            iou_thresholds: vec![0.05, 0.5, 0.95],
            ..EvalConfig::default()
        };
        let report = mean_ap(&d, &g, &cfg).unwrap();
        for block in &report.blocks {
            assert_eq!(block.map, Some(1.0));
        }
    }

    #[test]
    fn map_monotone_in_threshold() {
        let g = vec![gt("v", 1, 0, 20)];
        // shifted detection: temporal IoU = 10/30
        let d = vec![det("v", 1, 10, 20, 0.9)];
        let cfg = EvalConfig {
            iou_thresholds: vec![0.1, 0.3, 0.5],
            ..EvalConfig::default()
        };
        let report = mean_ap(&d, &g, &cfg).unwrap();
        let maps: Vec<f64> = report.blocks.iter().map(|b| b.map.unwrap()).collect();
        assert!(maps[0] >= maps[1] && maps[1] >= maps[2]);
    }

    #[test]
    fn zero_gt_class_excluded_with_warning() {
        let g = vec![gt("v", 1, 0, 10)];
        let d = vec![det("v", 1, 0, 10, 0.9), det("v", 7, 0, 10, 0.9)];
        let cfg = EvalConfig { iou_thresholds: vec![0.5], ..EvalConfig::default() };
        let report = mean_ap(&d, &g, &cfg).unwrap();
        assert_eq!(report.zero_gt_classes, vec![7]);
        assert_eq!(report.blocks[0].map, Some(1.0));
    }

    #[test]
    fn empty_assumptions_match_mean_ap_bit_exact() {
        let g = vec![gt("v", 1, 0, 20), gt("v", 2, 40, 15)];
        let d = vec![
            det("v", 1, 3, 18, 0.7),
            det("v", 1, 100, 5, 0.6),
            det("v", 2, 42, 15, 0.9),
        ];
        let cfg = EvalConfig { iou_thresholds: vec![0.3], ..EvalConfig::default() };
        let plain = mean_ap(&d, &g, &cfg).unwrap();
        let assumed = correctness_analysis(&d, &g, AssumptionSet::none(), 0.3).unwrap();
        assert_eq!(plain.blocks[0].map, assumed.blocks[0].map);
        for (a, b) in plain.blocks[0].cells.iter().zip(&assumed.blocks[0].cells) {
            assert_eq!(a.ap, b.ap);
        }
    }

    #[test]
    fn short_class_split_ratio_rule() {
        let mut lens = BTreeMap::new();
        lens.insert("v".to_string(), 100i64);
        // class 1: 10% of video; class 2: full video
        let gts = vec![gt("v", 1, 0, 10), gt("v", 2, 0, 100)];
        let split = short_class_split(&gts, &lens).unwrap();
        assert_eq!(split, vec![1]);
        // all full-length -> empty subset
        let gts = vec![gt("v", 1, 0, 100)];
        assert!(short_class_split(&gts, &lens).unwrap().is_empty());
    }
}
