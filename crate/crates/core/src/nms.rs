//! Greedy non-maximum suppression over scored detections, using either
//! plain IoU or the DIoU metric (IoU − ρ²/c²) to decide suppression.
//!
//! Because the DIoU metric is never larger than IoU, DIoU-NMS suppresses a
//! subset of what IoU-NMS suppresses at the same threshold: overlapping
//! boxes whose centers sit far apart survive, which is what separates two
//! adjacent pedestrians that plain NMS would merge.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::scalar::Scalar;

/// Class label assumed when a detection record does not carry one.
pub const DEFAULT_CLASS: &str = "Person";

/// A scored, classified box attributed to one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<S> {
    pub image_id: String,
    pub bbox: BBox<S>,
    pub score: S,
    pub class_name: String,
}

impl<S: Scalar> Detection<S> {
    /// Builds a detection, rejecting scores outside [0, 1].
    pub fn new(
        image_id: impl Into<String>,
        bbox: BBox<S>,
        score: S,
        class_name: impl Into<String>,
    ) -> Result<Self> {
        if score < S::zero() || score > S::one() {
            return Err(Error::ScoreOutOfRange(score.as_f64()));
        }
        Ok(Self {
            image_id: image_id.into(),
            bbox,
            score,
            class_name: class_name.into(),
        })
    }
}

/// Pairwise overlap measure used for suppression decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuppressionMetric {
    Iou,
    Diou,
}

impl SuppressionMetric {
    pub fn token(&self) -> &'static str {
        match self {
            SuppressionMetric::Iou => "iou",
            SuppressionMetric::Diou => "diou",
        }
    }

    pub fn measure<S: Scalar>(&self, a: &BBox<S>, b: &BBox<S>) -> S {
        match self {
            SuppressionMetric::Iou => a.iou(b),
            SuppressionMetric::Diou => a.diou_metric(b),
        }
    }
}

impl fmt::Display for SuppressionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for SuppressionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iou" => Ok(SuppressionMetric::Iou),
            "diou" => Ok(SuppressionMetric::Diou),
            other => Err(Error::InvalidConfig(format!(
                "unknown suppression metric {other:?} (expected \"iou\" or \"diou\")"
            ))),
        }
    }
}

/// Greedy NMS over the detections of a single image.
///
/// Detections are visited in descending score order (ties broken by input
/// position, earlier wins). A detection is kept iff no already-kept
/// detection of the same class measures strictly above `threshold` against
/// it, so boxes exactly at the threshold survive. The output is in kept
/// (descending-score) order and is a subsequence of the score-sorted input.
pub fn greedy_nms<S: Scalar>(
    detections: &[Detection<S>],
    threshold: S,
    metric: SuppressionMetric,
) -> Result<Vec<Detection<S>>> {
    if threshold < S::zero() || threshold >= S::one() {
        return Err(Error::ThresholdOutOfRange(threshold.as_f64()));
    }
    if let Some(first) = detections.first() {
        if let Some(other) = detections.iter().find(|d| d.image_id != first.image_id) {
            return Err(Error::MixedImageIds {
                first: first.image_id.clone(),
                second: other.image_id.clone(),
            });
        }
    }

    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .partial_cmp(&detections[a].score)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut kept: Vec<&Detection<S>> = Vec::new();
    for idx in order {
        let candidate = &detections[idx];
        let suppressed = kept.iter().any(|k| {
            k.class_name == candidate.class_name
                && metric.measure(&k.bbox, &candidate.bbox) > threshold
        });
        if !suppressed {
            kept.push(candidate);
        }
    }
    Ok(kept.into_iter().cloned().collect())
}
