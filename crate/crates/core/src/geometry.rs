//! Axis-aligned box arithmetic in continuous pixel coordinates.
//!
//! Boxes are corner-format `(x_min, y_min, x_max, y_max)`. There is no `+1`
//! pixel inclusivity anywhere: a box `[0, 0, 10, 10]` has area 100.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite coordinates and inverted corners.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let reject = |reason| Error::InvalidBox {
            x_min,
            y_min,
            x_max,
            y_max,
            reason,
        };
        if !(x_min.is_finite() && y_min.is_finite() && x_max.is_finite() && y_max.is_finite()) {
            return Err(reject("non-finite coordinate"));
        }
        if x_max < x_min || y_max < y_min {
            return Err(reject("max corner precedes min corner"));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// COCO `[x, y, w, h]` to corner format.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.width(), self.height()]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    #[inline]
    pub fn area(&self) -> f64 {
        area(self)
    }

    /// True when `self` lies entirely inside `other` (boundaries may touch).
    pub fn is_inside(&self, other: &BBox) -> bool {
        self.x_min >= other.x_min
            && self.y_min >= other.y_min
            && self.x_max <= other.x_max
            && self.y_max <= other.y_max
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        (x_max >= x_min && y_max >= y_min).then_some(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }
}

pub fn area(b: &BBox) -> f64 {
    (b.x_max - b.x_min) * (b.y_max - b.y_min)
}

pub fn intersection_area(b1: &BBox, b2: &BBox) -> f64 {
    let w = b1.x_max.min(b2.x_max) - b1.x_min.max(b2.x_min);
    let h = b1.y_max.min(b2.y_max) - b1.y_min.max(b2.y_min);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

/// Intersection over union. Fails only when both boxes have zero area.
pub fn iou(b1: &BBox, b2: &BBox) -> Result<f64> {
    let (a1, a2) = (area(b1), area(b2));
    if a1 <= 0.0 && a2 <= 0.0 {
        return Err(Error::DegenerateInput);
    }
    Ok(iou_with_areas(b1, b2, a1, a2))
}

/// Overlap area ratio `|b1 ∩ b2| / |b1|`. Asymmetric: it measures how much of
/// `b1` is covered by `b2`.
pub fn oar(b1: &BBox, b2: &BBox) -> Result<f64> {
    let a1 = area(b1);
    if a1 <= 0.0 {
        return Err(Error::DegenerateBox);
    }
    Ok(oar_with_area(b1, b2, a1))
}

// Unchecked variants for callers that already hold positive-area boxes.

#[inline]
pub(crate) fn iou_with_areas(b1: &BBox, b2: &BBox, a1: f64, a2: f64) -> f64 {
    let inter = intersection_area(b1, b2);
    if inter <= 0.0 {
        return 0.0;
    }
    // union >= max(a1, a2) >= inter, min() guards the last ulp
    (inter / (a1 + a2 - inter)).min(1.0)
}

#[inline]
pub(crate) fn oar_with_area(b1: &BBox, b2: &BBox, a1: f64) -> f64 {
    (intersection_area(b1, b2) / a1).min(1.0)
}
