//! Axis-aligned bounding boxes and spatial IoU.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in continuous pixel coordinates.
///
/// Degenerate boxes (non-positive extent, non-finite coordinates) are
/// rejected at construction, so every live `BoundingBox` has positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(Error::data(format!(
                "bounding box has non-finite coordinates: ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::data(format!(
                "bounding box has non-positive extent: ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

/// Intersection-over-union of two boxes. Returns 0 when disjoint, exactly 1
/// for identical boxes.
pub fn spatial_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let union = a.area() + b.area() - inter;
    inter / union
}
