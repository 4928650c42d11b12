//! Axis-aligned box algebra: areas, IoU, enclosing box, center distance,
//! and the distance penalty behind the DIoU loss and DIoU-NMS.
//!
//! Geometry is continuous: boxes that touch edge-to-edge have intersection
//! area 0, and coordinates are unbounded reals (clipping belongs to the
//! decoder). All operations are pure and symmetric in their two arguments.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Axis-aligned rectangle in corner form, continuous pixel coordinates
/// (x rightward, y downward). Zero-area boxes are permitted; inverted
/// corners are rejected at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox<S> {
    x1: S,
    y1: S,
    x2: S,
    y2: S,
}

impl<S: Scalar> BBox<S> {
    pub fn new(x1: S, y1: S, x2: S, y2: S) -> Result<Self> {
        if x1 > x2 || y1 > y2 {
            return Err(Error::InvertedCorners {
                x1: x1.as_f64(),
                y1: y1.as_f64(),
                x2: x2.as_f64(),
                y2: y2.as_f64(),
            });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> S {
        self.x1
    }

    pub fn y1(&self) -> S {
        self.y1
    }

    pub fn x2(&self) -> S {
        self.x2
    }

    pub fn y2(&self) -> S {
        self.y2
    }

    pub fn width(&self) -> S {
        self.x2 - self.x1
    }

    pub fn height(&self) -> S {
        self.y2 - self.y1
    }

    pub fn area(&self) -> S {
        self.width() * self.height()
    }

    pub fn center(&self) -> (S, S) {
        (
            (self.x1 + self.x2) * S::half(),
            (self.y1 + self.y2) * S::half(),
        )
    }

    pub fn to_center(&self) -> CenterBox<S> {
        let (cx, cy) = self.center();
        CenterBox {
            cx,
            cy,
            w: self.width(),
            h: self.height(),
        }
    }

    /// Overlap area; 0 for disjoint or merely touching boxes.
    pub fn intersection_area(&self, other: &Self) -> S {
        let iw = self.x2.min(other.x2) - self.x1.max(other.x1);
        let ih = self.y2.min(other.y2) - self.y1.max(other.y1);
        iw.max(S::zero()) * ih.max(S::zero())
    }

    /// Intersection over union in [0, 1]; 0 when the union has zero area
    /// (both boxes degenerate).
    pub fn iou(&self, other: &Self) -> S {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= S::zero() {
            S::zero()
        } else {
            inter / union
        }
    }

    /// Smallest axis-aligned rectangle containing both boxes.
    pub fn enclosing(&self, other: &Self) -> Self {
        Self {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// Squared diagonal of the enclosing rectangle (the c² of the distance
    /// penalty).
    pub fn enclosing_diagonal_sq(&self, other: &Self) -> S {
        let e = self.enclosing(other);
        let w = e.width();
        let h = e.height();
        w * w + h * h
    }

    /// Squared Euclidean distance between the two box centers (ρ²).
    pub fn center_distance_sq(&self, other: &Self) -> S {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        let dx = ax - bx;
        let dy = ay - by;
        dx * dx + dy * dy
    }

    /// Distance penalty ρ²/c² in [0, 1); 0 when both boxes collapse to the
    /// same point (c² = 0), which keeps the metric total.
    pub fn diou_penalty(&self, other: &Self) -> S {
        let c2 = self.enclosing_diagonal_sq(other);
        if c2 <= S::zero() {
            S::zero()
        } else {
            self.center_distance_sq(other) / c2
        }
    }

    /// Suppression metric IoU − ρ²/c² in (−1, 1]; always ≤ IoU, so it only
    /// ever spares boxes that plain IoU would suppress.
    pub fn diou_metric(&self, other: &Self) -> S {
        self.iou(other) - self.diou_penalty(other)
    }

    pub fn translate(&self, dx: S, dy: S) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }
}

/// Rectangle in center-size form (cx, cy, w, h) with w, h ≥ 0. This is the
/// parameterization the regression losses differentiate against and the
/// form CVC-style annotations use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterBox<S> {
    cx: S,
    cy: S,
    w: S,
    h: S,
}

impl<S: Scalar> CenterBox<S> {
    pub fn new(cx: S, cy: S, w: S, h: S) -> Result<Self> {
        if w < S::zero() || h < S::zero() {
            return Err(Error::NegativeSize {
                w: w.as_f64(),
                h: h.as_f64(),
            });
        }
        Ok(Self { cx, cy, w, h })
    }

    pub fn cx(&self) -> S {
        self.cx
    }

    pub fn cy(&self) -> S {
        self.cy
    }

    pub fn w(&self) -> S {
        self.w
    }

    pub fn h(&self) -> S {
        self.h
    }

    pub fn area(&self) -> S {
        self.w * self.h
    }

    /// Corner form; exact up to the `cx ± w/2` arithmetic.
    pub fn to_corner(&self) -> BBox<S> {
        let hw = self.w * S::half();
        let hh = self.h * S::half();
        BBox {
            x1: self.cx - hw,
            y1: self.cy - hh,
            x2: self.cx + hw,
            y2: self.cy + hh,
        }
    }

    pub fn iou(&self, other: &Self) -> S {
        self.to_corner().iou(&other.to_corner())
    }
}
