//! Ground-truth annotation parsing (VOC corner form and CVC center form),
//! dataset indexing, and line-delimited detection records.
//!
//! Annotations are XML documents with `object` elements; each object's
//! `bndbox` carries either `xmin/ymin/xmax/ymax` or `xc/yc/w/h`. Both forms
//! may appear in one file and yield identical boxes for the same geometry.
//!
//! Detection files hold one JSON object per line so evaluation can stream
//! over thousands of images without whole-file parsing:
//!
//! ```text
//! {"image_id":"frame_0001","score":0.93,"class":"Person","box":[12.0,30.5,58.0,140.0]}
//! ```
//!
//! The `class` field is optional and defaults to `"Person"`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::nms::{Detection, DEFAULT_CLASS};
use crate::scalar::Scalar;

/// One annotated object: box, class, owning image.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<S> {
    pub image_id: String,
    pub bbox: BBox<S>,
    pub class_name: String,
}

/// Ground truths for a whole dataset, keyed by image id. Iteration order
/// is the sorted key order, independent of how files were discovered.
#[derive(Debug, Clone, Default)]
pub struct DatasetIndex<S> {
    images: BTreeMap<String, Vec<GroundTruth<S>>>,
    total: usize,
}

impl<S: Scalar> DatasetIndex<S> {
    pub fn new() -> Self {
        Self {
            images: BTreeMap::new(),
            total: 0,
        }
    }

    pub fn from_ground_truths(gts: impl IntoIterator<Item = GroundTruth<S>>) -> Self {
        let mut index = Self::new();
        for gt in gts {
            index.insert(gt);
        }
        index
    }

    pub fn insert(&mut self, gt: GroundTruth<S>) {
        self.images.entry(gt.image_id.clone()).or_default().push(gt);
        self.total += 1;
    }

    /// Registers an image id even if it has no objects.
    pub fn insert_image(&mut self, image_id: impl Into<String>) {
        self.images.entry(image_id.into()).or_default();
    }

    pub fn contains_image(&self, image_id: &str) -> bool {
        self.images.contains_key(image_id)
    }

    pub fn ground_truths(&self, image_id: &str) -> &[GroundTruth<S>] {
        self.images.get(image_id).map_or(&[], Vec::as_slice)
    }

    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    pub fn total_ground_truths(&self) -> usize {
        self.total
    }

    pub fn images(&self) -> impl Iterator<Item = (&str, &[GroundTruth<S>])> {
        self.images.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

fn object_error(image_id: &str, index: usize, reason: impl Into<String>) -> Error {
    Error::Annotation {
        image_id: image_id.to_string(),
        index,
        reason: reason.into(),
    }
}

/// Parses one annotation document into ground truths.
///
/// Recognizes corner-form boxes (`xmin/ymin/xmax/ymax`) and center-form
/// boxes (`xc/yc/w/h`), auto-detected per object. Errors carry the index
/// of the offending `object` element.
pub fn parse_annotation<S: Scalar>(xml: &str, image_id: &str) -> Result<Vec<GroundTruth<S>>> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| Error::Xml(e.to_string()))?;
    let mut out = Vec::new();
    for (index, object) in doc
        .descendants()
        .filter(|n| n.has_tag_name("object"))
        .enumerate()
    {
        let text_of = |tag: &str| -> Option<&str> {
            object
                .descendants()
                .find(|n| n.has_tag_name(tag))
                .and_then(|n| n.text())
                .map(str::trim)
        };
        let number_of = |tag: &str| -> Result<Option<f64>> {
            match text_of(tag) {
                None => Ok(None),
                Some(raw) => raw.parse::<f64>().map(Some).map_err(|_| {
                    object_error(image_id, index, format!("non-numeric <{tag}>: {raw:?}"))
                }),
            }
        };

        let class_name = text_of("name")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| object_error(image_id, index, "missing <name>"))?
            .to_string();

        let corners = [
            number_of("xmin")?,
            number_of("ymin")?,
            number_of("xmax")?,
            number_of("ymax")?,
        ];
        let centers = [
            number_of("xc")?,
            number_of("yc")?,
            number_of("w")?,
            number_of("h")?,
        ];

        let (x1, y1, x2, y2) = if corners.iter().all(Option::is_some) {
            let [xmin, ymin, xmax, ymax] = corners.map(Option::unwrap);
            (xmin, ymin, xmax, ymax)
        } else if centers.iter().all(Option::is_some) {
            let [xc, yc, w, h] = centers.map(Option::unwrap);
            (xc - w / 2.0, yc - h / 2.0, xc + w / 2.0, yc + h / 2.0)
        } else {
            return Err(object_error(
                image_id,
                index,
                "box has neither xmin/ymin/xmax/ymax nor xc/yc/w/h",
            ));
        };

        let bbox = BBox::new(S::cast(x1), S::cast(y1), S::cast(x2), S::cast(y2))
            .map_err(|e| object_error(image_id, index, e.to_string()))?;
        if bbox.area() <= S::zero() {
            return Err(object_error(image_id, index, "box has zero area"));
        }
        out.push(GroundTruth {
            image_id: image_id.to_string(),
            bbox,
            class_name,
        });
    }
    Ok(out)
}

/// Indexes every `<image_id>.xml` under `dir`. The result is deterministic
/// regardless of directory listing order; the first file that fails to
/// parse aborts the load, named in the error.
pub fn load_dataset<S: Scalar>(dir: &Path) -> Result<DatasetIndex<S>> {
    let entries = fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "xml") {
            files.push(path);
        }
    }
    files.sort();

    let mut index = DatasetIndex::new();
    for path in files {
        let image_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidConfig(format!("unusable file name: {path:?}")))?
            .to_string();
        let xml = fs::read_to_string(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        let gts = parse_annotation::<S>(&xml, &image_id).map_err(|e| Error::AnnotationFile {
            file: path.clone(),
            source: Box::new(e),
        })?;
        index.insert_image(image_id);
        for gt in gts {
            index.insert(gt);
        }
    }
    Ok(index)
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    image_id: String,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    class: Option<String>,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

/// Parses line-delimited detection records in file order. Scores outside
/// [0, 1] and invalid boxes are rejected with their line number.
pub fn parse_detections<S: Scalar>(text: &str) -> Result<Vec<Detection<S>>> {
    let mut out = Vec::new();
    for (line_index, line) in text.lines().enumerate() {
        let line_no = line_index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: DetectionRecord =
            serde_json::from_str(line).map_err(|e| Error::DetectionLine {
                line: line_no,
                reason: e.to_string(),
            })?;
        let [x1, y1, x2, y2] = record.bbox;
        let bbox = BBox::new(S::cast(x1), S::cast(y1), S::cast(x2), S::cast(y2)).map_err(|e| {
            Error::DetectionLine {
                line: line_no,
                reason: e.to_string(),
            }
        })?;
        let detection = Detection::new(
            record.image_id,
            bbox,
            S::cast(record.score),
            record.class.unwrap_or_else(|| DEFAULT_CLASS.to_string()),
        )
        .map_err(|e| Error::DetectionLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        out.push(detection);
    }
    Ok(out)
}

/// One canonical record line (no trailing newline). Parsing it back yields
/// the identical detection, and re-serializing reproduces the same bytes.
pub fn serialize_detection<S: Scalar>(det: &Detection<S>) -> String {
    let record = DetectionRecord {
        image_id: det.image_id.clone(),
        score: det.score.as_f64(),
        class: Some(det.class_name.clone()),
        bbox: [
            det.bbox.x1().as_f64(),
            det.bbox.y1().as_f64(),
            det.bbox.x2().as_f64(),
            det.bbox.y2().as_f64(),
        ],
    };
    serde_json::to_string(&record).expect("detection record serializes")
}

/// Newline-terminated record per detection; empty input yields an empty
/// string.
pub fn serialize_detections<S: Scalar>(dets: &[Detection<S>]) -> String {
    let mut out = String::new();
    for det in dets {
        out.push_str(&serialize_detection(det));
        out.push('\n');
    }
    out
}
