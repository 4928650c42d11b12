//! Detection-to-ground-truth matching, precision/recall, PR curves, and
//! average precision for single-class evaluation.
//!
//! Matching follows the greedy VOC protocol: detections are visited in
//! descending score order; each claims its best-IoU unmatched same-class
//! ground truth if that IoU reaches the threshold (TP), otherwise it is a
//! false positive. Unclaimed ground truths are false negatives.
//!
//! Empty-denominator convention: precision and recall are defined as 1.0
//! when their denominator is zero, so perfectly empty cases do not poison
//! aggregates.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::dataset::{DatasetIndex, GroundTruth};
use crate::error::{Error, Result};
use crate::nms::Detection;
use crate::scalar::Scalar;

/// Per-detection match flag, in descending-score processing order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOutcome<S> {
    pub score: S,
    pub is_tp: bool,
    /// IoU achieved against the claimed ground truth; `None` for FPs.
    pub iou: Option<S>,
}

/// Result of matching one image's detections against its ground truths.
#[derive(Debug, Clone, Default)]
pub struct MatchResult<S> {
    pub outcomes: Vec<MatchOutcome<S>>,
    pub false_negatives: usize,
}

impl<S> MatchResult<S> {
    pub fn true_positives(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_tp).count()
    }

    pub fn false_positives(&self) -> usize {
        self.outcomes.len() - self.true_positives()
    }
}

/// Greedy one-to-one matching for a single image.
pub fn match_image<S: Scalar>(
    dets: &[Detection<S>],
    gts: &[GroundTruth<S>],
    iou_threshold: S,
) -> Result<MatchResult<S>> {
    let mut ids = dets
        .iter()
        .map(|d| d.image_id.as_str())
        .chain(gts.iter().map(|g| g.image_id.as_str()));
    if let Some(first) = ids.next() {
        if let Some(other) = ids.find(|id| *id != first) {
            return Err(Error::MixedImageIds {
                first: first.to_string(),
                second: other.to_string(),
            });
        }
    }

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut claimed = vec![false; gts.len()];
    let mut outcomes = Vec::with_capacity(dets.len());
    for idx in order {
        let det = &dets[idx];
        let mut best: Option<(usize, S)> = None;
        for (g_idx, gt) in gts.iter().enumerate() {
            if claimed[g_idx] || gt.class_name != det.class_name {
                continue;
            }
            let iou = det.bbox.iou(&gt.bbox);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g_idx, iou));
            }
        }
        let outcome = match best {
            Some((g_idx, iou)) if iou >= iou_threshold => {
                claimed[g_idx] = true;
                MatchOutcome {
                    score: det.score,
                    is_tp: true,
                    iou: Some(iou),
                }
            }
            _ => MatchOutcome {
                score: det.score,
                is_tp: false,
                iou: None,
            },
        };
        outcomes.push(outcome);
    }

    Ok(MatchResult {
        outcomes,
        false_negatives: claimed.iter().filter(|c| !**c).count(),
    })
}

/// `TP / (TP + FP)`; 1.0 when nothing was predicted.
pub fn precision<S: Scalar>(tp: usize, fp: usize) -> S {
    if tp + fp == 0 {
        S::one()
    } else {
        S::from_count(tp) / S::from_count(tp + fp)
    }
}

/// `TP / (TP + FN)`; 1.0 when there was nothing to find.
pub fn recall<S: Scalar>(tp: usize, fn_: usize) -> S {
    if tp + fn_ == 0 {
        S::one()
    } else {
        S::from_count(tp) / S::from_count(tp + fn_)
    }
}

/// One point of the PR curve: cumulative precision/recall of all
/// detections scoring at least `score_threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PRPoint<S> {
    pub score_threshold: S,
    pub precision: S,
    pub recall: S,
}

/// Builds the PR curve from aggregated match outcomes: one point per
/// prefix of the score-sorted detections. Recall is non-decreasing along
/// the result.
pub fn pr_curve<S: Scalar>(
    outcomes: &[MatchOutcome<S>],
    total_ground_truths: usize,
) -> Vec<PRPoint<S>> {
    let mut sorted: Vec<&MatchOutcome<S>> = outcomes.iter().collect();
    sorted.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut curve = Vec::with_capacity(sorted.len());
    for outcome in sorted {
        if outcome.is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        curve.push(PRPoint {
            score_threshold: outcome.score,
            precision: precision(tp, fp),
            recall: recall(tp, total_ground_truths.saturating_sub(tp)),
        });
    }
    curve
}

/// How the PR curve is integrated into a single AP number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApMethod {
    /// Area under the precision envelope over every recall step.
    AllPoint,
    /// Mean envelope precision sampled at recall 0.0, 0.1, …, 1.0.
    ElevenPoint,
}

impl ApMethod {
    pub fn token(&self) -> &'static str {
        match self {
            ApMethod::AllPoint => "allpoint",
            ApMethod::ElevenPoint => "elevenpoint",
        }
    }
}

impl fmt::Display for ApMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ApMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "allpoint" => Ok(ApMethod::AllPoint),
            "elevenpoint" => Ok(ApMethod::ElevenPoint),
            other => Err(Error::InvalidConfig(format!(
                "unknown AP method {other:?} (expected \"allpoint\" or \"elevenpoint\")"
            ))),
        }
    }
}

/// Integrates a PR curve (recall non-decreasing) into average precision.
/// An empty curve has AP 0.
pub fn average_precision<S: Scalar>(curve: &[PRPoint<S>], method: ApMethod) -> S {
    if curve.is_empty() {
        return S::zero();
    }

    // Precision envelope: max precision at-or-right of each point.
    let mut envelope = vec![S::zero(); curve.len()];
    let mut best = S::zero();
    for i in (0..curve.len()).rev() {
        best = best.max(curve[i].precision);
        envelope[i] = best;
    }

    match method {
        ApMethod::AllPoint => {
            let mut ap = S::zero();
            let mut prev_recall = S::zero();
            for (point, env) in curve.iter().zip(envelope.iter()) {
                ap = ap + (point.recall - prev_recall) * *env;
                prev_recall = point.recall;
            }
            ap
        }
        ApMethod::ElevenPoint => {
            let mut sum = S::zero();
            for step in 0..=10 {
                let r = S::cast(step as f64 / 10.0);
                let sampled = curve
                    .iter()
                    .zip(envelope.iter())
                    .find(|(p, _)| p.recall >= r)
                    .map_or(S::zero(), |(_, env)| *env);
                sum = sum + sampled;
            }
            sum / S::cast(11.0)
        }
    }
}

/// Aggregate evaluation report: counts, AP, and the PR curve behind it.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport<S> {
    pub predicted_count: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub false_negatives: usize,
    pub ap: S,
    pub pr_curve: Vec<PRPoint<S>>,
    /// Detections whose image id is absent from the index; they count as
    /// FPs and are surfaced here as a warning.
    pub unknown_image_detections: usize,
}

/// Full-dataset evaluation: per-image matching, aggregation, PR curve, AP.
pub fn evaluate<S: Scalar>(
    index: &DatasetIndex<S>,
    dets: &[Detection<S>],
    iou_threshold: S,
    method: ApMethod,
) -> Result<EvalReport<S>> {
    // Group detections by image in first-appearance order.
    let mut groups: Vec<(String, Vec<&Detection<S>>)> = Vec::new();
    for det in dets {
        match groups.iter_mut().find(|(id, _)| *id == det.image_id) {
            Some((_, group)) => group.push(det),
            None => groups.push((det.image_id.clone(), vec![det])),
        }
    }

    let mut outcomes = Vec::with_capacity(dets.len());
    let mut tp = 0usize;
    let mut unknown = 0usize;
    for (image_id, group) in &groups {
        if !index.contains_image(image_id) {
            unknown += group.len();
        }
        let gts = index.ground_truths(image_id);
        let owned: Vec<Detection<S>> = group.iter().map(|d| (*d).clone()).collect();
        let result = match_image(&owned, gts, iou_threshold)?;
        tp += result.true_positives();
        outcomes.extend(result.outcomes);
    }

    let total_gt = index.total_ground_truths();
    let curve = pr_curve(&outcomes, total_gt);
    let ap = average_precision(&curve, method);
    Ok(EvalReport {
        predicted_count: dets.len(),
        tp,
        fp: dets.len() - tp,
        false_negatives: total_gt - tp,
        ap,
        pr_curve: curve,
        unknown_image_detections: unknown,
    })
}

/// PR curve as a plot-ready text table: `score,precision,recall` header,
/// six decimal places per value.
pub fn pr_table<S: Scalar>(curve: &[PRPoint<S>]) -> String {
    let mut out = String::from("score,precision,recall\n");
    for p in curve {
        out.push_str(&format!(
            "{:.6},{:.6},{:.6}\n",
            p.score_threshold.as_f64(),
            p.precision.as_f64(),
            p.recall.as_f64()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn det(image: &str, x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> Detection<f64> {
        Detection::new(image, BBox::new(x1, y1, x2, y2).unwrap(), score, "Person").unwrap()
    }

    fn gt(image: &str, x1: f64, y1: f64, x2: f64, y2: f64) -> GroundTruth<f64> {
        GroundTruth {
            image_id: image.to_string(),
            bbox: BBox::new(x1, y1, x2, y2).unwrap(),
            class_name: "Person".to_string(),
        }
    }

    #[test]
    fn single_tp() {
        // IoU = 0.6 against the only ground truth
        let dets = vec![det("a", 0.0, 0.0, 10.0, 6.0, 0.9)];
        let gts = vec![gt("a", 0.0, 0.0, 10.0, 10.0)];
        assert_eq!(dets[0].bbox.iou(&gts[0].bbox), 0.6);
        let m = match_image(&dets, &gts, 0.5).unwrap();
        assert_eq!(m.true_positives(), 1);
        assert_eq!(m.false_positives(), 0);
        assert_eq!(m.false_negatives, 0);
        assert_eq!(m.outcomes[0].iou, Some(0.6));
    }

    #[test]
    fn one_gt_claimed_once() {
        let dets = vec![
            det("a", 0.0, 0.0, 10.0, 10.0, 0.8),
            det("a", 1.0, 1.0, 10.0, 10.0, 0.9),
        ];
        let gts = vec![gt("a", 0.0, 0.0, 10.0, 10.0)];
        let m = match_image(&dets, &gts, 0.5).unwrap();
        // the higher-score detection is processed first and claims the GT
        assert_eq!(m.true_positives(), 1);
        assert_eq!(m.false_positives(), 1);
        assert_eq!(m.false_negatives, 0);
        assert!(!m.outcomes[1].is_tp);
        assert_eq!(m.outcomes[0].score, 0.9);
    }

    #[test]
    fn no_detections_all_fn() {
        let gts = vec![
            gt("a", 0.0, 0.0, 1.0, 1.0),
            gt("a", 2.0, 0.0, 3.0, 1.0),
            gt("a", 4.0, 0.0, 5.0, 1.0),
        ];
        let m = match_image(&[], &gts, 0.5).unwrap();
        assert_eq!(m.true_positives(), 0);
        assert_eq!(m.false_negatives, 3);
    }

    #[test]
    fn class_aware_matching() {
        let mut d = det("a", 0.0, 0.0, 10.0, 10.0, 0.9);
        d.class_name = "Car".to_string();
        let gts = vec![gt("a", 0.0, 0.0, 10.0, 10.0)];
        let m = match_image(&[d], &gts, 0.5).unwrap();
        assert_eq!(m.true_positives(), 0);
        assert_eq!(m.false_negatives, 1);
    }

    #[test]
    fn mixed_ids_rejected() {
        let dets = vec![det("a", 0.0, 0.0, 1.0, 1.0, 0.9)];
        let gts = vec![gt("b", 0.0, 0.0, 1.0, 1.0)];
        assert!(matches!(
            match_image(&dets, &gts, 0.5),
            Err(Error::MixedImageIds { .. })
        ));
    }

    #[test]
    fn precision_recall_conventions() {
        // spot checks on fixed TP/FP counts
        assert!((precision::<f64>(347, 69) - 347.0 / 416.0).abs() < 1e-12);
        assert!((precision::<f64>(261, 12) - 261.0 / 273.0).abs() < 1e-12);
        assert_eq!(precision::<f64>(0, 0), 1.0);
        assert_eq!(recall::<f64>(0, 5), 0.0);
        assert_eq!(recall::<f64>(5, 0), 1.0);
        assert_eq!(recall::<f64>(3, 1), 0.75);
        assert_eq!(recall::<f64>(0, 0), 1.0);
    }

    fn outcome(score: f64, is_tp: bool) -> MatchOutcome<f64> {
        MatchOutcome {
            score,
            is_tp,
            iou: if is_tp { Some(1.0) } else { None },
        }
    }

    #[test]
    fn curve_prefix_enumeration() {
        // TP@0.9 then FP@0.8 against one GT
        let curve = pr_curve(&[outcome(0.9, true), outcome(0.8, false)], 1);
        assert_eq!(curve.len(), 2);
        assert_eq!((curve[0].precision, curve[0].recall), (1.0, 1.0));
        assert_eq!((curve[1].precision, curve[1].recall), (0.5, 1.0));

        // FP@0.9 then TP@0.8
        let curve = pr_curve(&[outcome(0.8, true), outcome(0.9, false)], 1);
        assert_eq!((curve[0].precision, curve[0].recall), (0.0, 0.0));
        assert_eq!((curve[1].precision, curve[1].recall), (0.5, 1.0));

        assert!(pr_curve::<f64>(&[], 3).is_empty());
    }

    #[test]
    fn ap_examples() {
        let single = vec![PRPoint::<f64> {
            score_threshold: 0.9,
            precision: 1.0,
            recall: 1.0,
        }];
        assert_eq!(average_precision(&single, ApMethod::AllPoint), 1.0);
        assert!((average_precision(&single, ApMethod::ElevenPoint) - 1.0).abs() < 1e-12);

        let curve = pr_curve(&[outcome(0.9, true), outcome(0.8, false)], 1);
        assert_eq!(average_precision(&curve, ApMethod::AllPoint), 1.0);

        let curve = pr_curve(&[outcome(0.8, true), outcome(0.9, false)], 1);
        assert_eq!(average_precision(&curve, ApMethod::AllPoint), 0.5);

        assert_eq!(average_precision::<f64>(&[], ApMethod::AllPoint), 0.0);
        assert_eq!(average_precision::<f64>(&[], ApMethod::ElevenPoint), 0.0);
    }

    #[test]
    fn eleven_point_samples_envelope() {
        // envelope: precision 1.0 up to recall 0.5, then 0.6 to recall 1.0
        let curve = vec![
            PRPoint::<f64> {
                score_threshold: 0.9,
                precision: 1.0,
                recall: 0.5,
            },
            PRPoint {
                score_threshold: 0.5,
                precision: 0.6,
                recall: 1.0,
            },
        ];
        let ap = average_precision(&curve, ApMethod::ElevenPoint);
        // samples 0.0–0.5 read 1.0 (6 of them), 0.6–1.0 read 0.6 (5)
        assert!((ap - (6.0 + 5.0 * 0.6) / 11.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_empty_and_perfect() {
        let mut index = DatasetIndex::new();
        index.insert(gt("a", 0.0, 0.0, 10.0, 10.0));
        index.insert(gt("b", 5.0, 5.0, 20.0, 20.0));

        let report = evaluate(&index, &[], 0.5, ApMethod::AllPoint).unwrap();
        assert_eq!(report.tp, 0);
        assert_eq!(report.fp, 0);
        assert_eq!(report.false_negatives, 2);
        assert_eq!(report.ap, 0.0);

        let dets = vec![
            det("a", 0.0, 0.0, 10.0, 10.0, 1.0),
            det("b", 5.0, 5.0, 20.0, 20.0, 1.0),
        ];
        let report = evaluate(&index, &dets, 0.5, ApMethod::AllPoint).unwrap();
        assert_eq!(report.tp, 2);
        assert_eq!(report.fp, 0);
        assert_eq!(report.false_negatives, 0);
        assert_eq!(report.ap, 1.0);
        assert_eq!(report.unknown_image_detections, 0);
    }

    #[test]
    fn evaluate_three_image_fixture() {
        // 3 images, 5 GT, 6 detections: 4 TP, 2 FP, hand-enumerated.
        let mut index = DatasetIndex::new();
        index.insert(gt("a", 0.0, 0.0, 10.0, 10.0));
        index.insert(gt("a", 20.0, 0.0, 30.0, 10.0));
        index.insert(gt("b", 0.0, 0.0, 8.0, 8.0));
        index.insert(gt("c", 0.0, 0.0, 4.0, 4.0));
        index.insert(gt("c", 10.0, 10.0, 14.0, 14.0));

        let dets = vec![
            det("a", 0.0, 0.0, 10.0, 10.0, 0.95),   // TP
            det("a", 20.0, 0.0, 30.0, 10.0, 0.90),  // TP
            det("a", 50.0, 50.0, 60.0, 60.0, 0.85), // FP (nothing there)
            det("b", 0.0, 0.0, 8.0, 8.0, 0.80),     // TP
            det("c", 0.0, 0.0, 4.0, 4.0, 0.75),     // TP
            det("c", 0.0, 0.0, 4.0, 4.0, 0.70),     // FP (GT already claimed)
        ];
        let report = evaluate(&index, &dets, 0.5, ApMethod::AllPoint).unwrap();
        assert_eq!(report.predicted_count, 6);
        assert_eq!(report.tp, 4);
        assert_eq!(report.fp, 2);
        assert_eq!(report.false_negatives, 1);

        // prefix curve: TP,TP,FP,TP,TP,FP over 5 GT; envelope area by hand:
        // recall steps at 1/5 (p=1), 2/5 (p=1), 3/5 (p=3/4 -> env 4/5 at r=3/5? )
        // hand-computed below from the prefix table
        // prefixes: (1,0) (2,0) (2,1) (3,1) (4,1) (4,2)
        // points: (p,r) = (1,0.2) (1,0.4) (2/3,0.4) (3/4,0.6) (4/5,0.8) (2/3,0.8)
        // envelope right-to-left: 2/3, 4/5 ... => env = [1,1,4/5,4/5,4/5,2/3]
        // AP = 0.2·1 + 0.2·1 + 0·… + 0.2·(4/5) + 0.2·(4/5) + 0 = 0.72
        assert!((report.ap - 0.72).abs() < 1e-12);
    }

    #[test]
    fn unknown_images_count_as_fp() {
        let mut index = DatasetIndex::new();
        index.insert(gt("a", 0.0, 0.0, 10.0, 10.0));
        let dets = vec![
            det("a", 0.0, 0.0, 10.0, 10.0, 0.9),
            det("ghost", 0.0, 0.0, 10.0, 10.0, 0.8),
        ];
        let report = evaluate(&index, &dets, 0.5, ApMethod::AllPoint).unwrap();
        assert_eq!(report.tp, 1);
        assert_eq!(report.fp, 1);
        assert_eq!(report.unknown_image_detections, 1);
    }

    #[test]
    fn pr_table_format() {
        let curve = pr_curve(&[outcome(0.9, true)], 1);
        let table = pr_table(&curve);
        assert_eq!(
            table,
            "score,precision,recall\n0.900000,1.000000,1.000000\n"
        );
    }

    #[test]
    fn ap_method_tokens() {
        assert_eq!("allpoint".parse::<ApMethod>().unwrap(), ApMethod::AllPoint);
        assert_eq!(
            "elevenpoint".parse::<ApMethod>().unwrap(),
            ApMethod::ElevenPoint
        );
        assert!("11point".parse::<ApMethod>().is_err());
    }
}
