//! CSV reports: the per-class AP table with mAP summary rows, training
//! loss curves, and per-track score curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::eval::EvalReport;

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

/// Columns: `iou_threshold,class_id,ap,n_gt,n_det`. Summary rows reuse the
/// class column for the labels `mAP` and `mAP-subset`; classes without
/// ground truth keep their row but leave the ap column empty.
pub fn results_csv(report: &EvalReport) -> String {
    let mut out = String::from("iou_threshold,class_id,ap,n_gt,n_det\n");
    for block in &report.blocks {
        let mut total_gt = 0usize;
        let mut total_det = 0usize;
        for cell in &block.cells {
            total_gt += cell.n_gt;
            total_det += cell.n_det;
            let _ = writeln!(
                out,
                "{:.4},{},{},{},{}",
                block.iou_threshold,
                cell.class_id,
                fmt_opt(cell.ap),
                cell.n_gt,
                cell.n_det
            );
        }
        let _ = writeln!(
            out,
            "{:.4},mAP,{},{},{}",
            block.iou_threshold,
            fmt_opt(block.map),
            total_gt,
            total_det
        );
        if let Some(subset) = block.map_subset {
            let _ = writeln!(
                out,
                "{:.4},mAP-subset,{},{},{}",
                block.iou_threshold,
                fmt_opt(Some(subset)),
                total_gt,
                total_det
            );
        }
    }
    out
}

pub fn write_results_csv(path: &Path, report: &EvalReport) -> Result<()> {
    fs::write(path, results_csv(report))?;
    Ok(())
}

pub fn write_loss_csv(path: &Path, curve: &[f64]) -> Result<()> {
    let mut out = String::from("step,loss\n");
    for (i, l) in curve.iter().enumerate() {
        let _ = writeln!(out, "{i},{l:.12}");
    }
    fs::write(path, out)?;
    Ok(())
}

/// One row per (class, frame) of a track: raw and filtered score, the
/// frame label, and whether the frame lies inside an emitted detection.
pub struct CurveRow {
    pub class_id: u32,
    pub frame: i64,
    pub raw: f64,
    pub filtered: f64,
    pub label: u32,
    pub in_detection: bool,
}

pub fn write_curves_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut out = String::from("class_id,frame,raw_score,filtered_score,label,in_detection\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.9},{:.9},{},{}",
            r.class_id,
            r.frame,
            r.raw,
            r.filtered,
            r.label,
            u8::from(r.in_detection)
        );
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{mean_ap, EvalConfig};
    use crate::geom::BoundingBox;
    use crate::track::{Detection, GroundTruthInstance};

    #[test]
    fn csv_has_per_class_and_summary_rows() {
        let b = BoundingBox::new(0.0, 0.0, 4.0, 4.0).unwrap();
        let gts = vec![GroundTruthInstance::new("v", 1, 0, vec![b; 5]).unwrap()];
        let dets = vec![
            Detection::new("v", 1, 0, vec![b; 5], 0.9).unwrap(),
            Detection::new("v", 3, 0, vec![b; 5], 0.9).unwrap(),
        ];
        let cfg = EvalConfig {
            iou_thresholds: vec![0.5],
            class_subset: Some(vec![1]),
            ..EvalConfig::default()
        };
        let report = mean_ap(&dets, &gts, &cfg).unwrap();
        let csv = results_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iou_threshold,class_id,ap,n_gt,n_det");
        assert!(lines.iter().any(|l| l.starts_with("0.5000,1,1.000000")));
        // zero-GT class keeps its row with an empty ap column
        assert!(lines.iter().any(|l| l.starts_with("0.5000,3,,0,1")));
        assert!(lines.iter().any(|l| l.contains(",mAP,1.000000")));
        assert!(lines.iter().any(|l| l.contains(",mAP-subset,1.000000")));
    }
}
