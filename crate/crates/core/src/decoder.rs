//! Decodes raw YOLOv3 head tensors (grids of 13², 26², and 52² cells,
//! 3 anchors × (5 + classes) channels each) into detections.
//!
//! Per cell (i, j) and anchor a with channels (tx, ty, tw, th, to, c₁..c_n):
//!
//! ```text
//! center = ((σ(tx) + j) · stride, (σ(ty) + i) · stride)
//! size   = (anchor_w · exp(tw), anchor_h · exp(th))
//! score  = σ(to) · max_k σ(c_k)
//! ```
//!
//! Boxes are clipped to the `[0, input_size]²` canvas; tw/th are clamped to
//! ±20 before `exp` so adversarial inputs cannot overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::nms::Detection;
use crate::scalar::Scalar;

/// Channels per anchor ahead of the class scores: tx, ty, tw, th, to.
pub const BOX_CHANNELS: usize = 5;
/// Anchors predicted per grid cell.
pub const ANCHORS_PER_CELL: usize = 3;
/// Bound applied to tw/th before exponentiation.
pub const EXP_CLAMP: f64 = 20.0;

/// The 80 COCO class names in canonical Darknet order.
pub const COCO_CLASS_NAMES: [&str; 80] = [
    "person",
    "bicycle",
    "car",
    "motorbike",
    "aeroplane",
    "bus",
    "train",
    "truck",
    "boat",
    "traffic light",
    "fire hydrant",
    "stop sign",
    "parking meter",
    "bench",
    "bird",
    "cat",
    "dog",
    "horse",
    "sheep",
    "cow",
    "elephant",
    "bear",
    "zebra",
    "giraffe",
    "backpack",
    "umbrella",
    "handbag",
    "tie",
    "suitcase",
    "frisbee",
    "skis",
    "snowboard",
    "sports ball",
    "kite",
    "baseball bat",
    "baseball glove",
    "skateboard",
    "surfboard",
    "tennis racket",
    "bottle",
    "wine glass",
    "cup",
    "fork",
    "knife",
    "spoon",
    "bowl",
    "banana",
    "apple",
    "sandwich",
    "orange",
    "broccoli",
    "carrot",
    "hot dog",
    "pizza",
    "donut",
    "cake",
    "chair",
    "sofa",
    "pottedplant",
    "bed",
    "diningtable",
    "toilet",
    "tvmonitor",
    "laptop",
    "mouse",
    "remote",
    "keyboard",
    "cell phone",
    "microwave",
    "oven",
    "toaster",
    "sink",
    "refrigerator",
    "book",
    "clock",
    "vase",
    "scissors",
    "teddy bear",
    "hair drier",
    "toothbrush",
];

/// Geometry and thresholds for one head scale.
#[derive(Debug, Clone)]
pub struct GridSpec<S> {
    pub grid_size: usize,
    /// Anchor (width, height) pairs in input-image pixels.
    pub anchors: [(S, S); ANCHORS_PER_CELL],
    pub input_size: S,
    pub num_classes: usize,
    pub conf_threshold: S,
}

impl<S: Scalar> GridSpec<S> {
    pub fn new(
        grid_size: usize,
        anchors: [(S, S); ANCHORS_PER_CELL],
        input_size: S,
        num_classes: usize,
        conf_threshold: S,
    ) -> Result<Self> {
        if grid_size == 0 {
            return Err(Error::InvalidConfig("grid_size must be positive".into()));
        }
        if input_size <= S::zero() {
            return Err(Error::InvalidConfig("input_size must be positive".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidConfig("num_classes must be positive".into()));
        }
        if conf_threshold < S::zero() || conf_threshold > S::one() {
            return Err(Error::InvalidConfig(format!(
                "conf_threshold {} outside [0, 1]",
                conf_threshold
            )));
        }
        if anchors
            .iter()
            .any(|&(w, h)| w <= S::zero() || h <= S::zero())
        {
            return Err(Error::InvalidConfig("anchors must be positive".into()));
        }
        Ok(Self {
            grid_size,
            anchors,
            input_size,
            num_classes,
            conf_threshold,
        })
    }

    pub fn stride(&self) -> S {
        self.input_size / S::from_count(self.grid_size)
    }

    pub fn channels_per_cell(&self) -> usize {
        ANCHORS_PER_CELL * (BOX_CHANNELS + self.num_classes)
    }

    /// Exact tensor length this spec expects.
    pub fn value_count(&self) -> usize {
        self.grid_size * self.grid_size * self.channels_per_cell()
    }
}

/// One raw head tensor: dense 32-bit floats, row-major over
/// (row, column, anchor, channel).
#[derive(Debug, Clone)]
pub struct RawHead {
    pub grid_size: usize,
    pub values: Vec<f32>,
}

impl RawHead {
    pub fn new(grid_size: usize, values: Vec<f32>) -> Self {
        Self { grid_size, values }
    }

    /// All-zero tensor of the right length for `grid_size` and `num_classes`.
    pub fn zeros(grid_size: usize, num_classes: usize) -> Self {
        let len = grid_size * grid_size * ANCHORS_PER_CELL * (BOX_CHANNELS + num_classes);
        Self {
            grid_size,
            values: vec![0.0; len],
        }
    }

    /// Parses the on-disk format: flat little-endian f32, no header.
    pub fn from_le_bytes(grid_size: usize, bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(4) {
            return Err(Error::TensorBytes(bytes.len()));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { grid_size, values })
    }
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// Decodes one head into detections with score ≥ the grid spec's threshold,
/// clipped to the canvas. Emission order is (row, column, anchor).
pub fn decode_head<S: Scalar>(
    raw: &RawHead,
    spec: &GridSpec<S>,
    class_names: &[String],
    image_id: &str,
) -> Result<Vec<Detection<S>>> {
    if raw.grid_size != spec.grid_size {
        return Err(Error::InvalidConfig(format!(
            "tensor grid size {} does not match spec grid size {}",
            raw.grid_size, spec.grid_size
        )));
    }
    if raw.values.len() != spec.value_count() {
        return Err(Error::TensorSize {
            expected: spec.value_count(),
            found: raw.values.len(),
        });
    }
    if class_names.len() != spec.num_classes {
        return Err(Error::InvalidConfig(format!(
            "{} class names supplied for {} classes",
            class_names.len(),
            spec.num_classes
        )));
    }
    if let Some(pos) = raw.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }

    let grid = spec.grid_size;
    let per_anchor = BOX_CHANNELS + spec.num_classes;
    let stride = spec.stride();
    let clamp_hi = S::cast(EXP_CLAMP);
    let clamp_lo = -clamp_hi;
    let zero = S::zero();

    let mut detections = Vec::new();
    for i in 0..grid {
        for j in 0..grid {
            for a in 0..ANCHORS_PER_CELL {
                let base = ((i * grid + j) * ANCHORS_PER_CELL + a) * per_anchor;
                let at = |c: usize| S::cast(raw.values[base + c] as f64);

                let objectness = sigmoid(at(4));
                let mut best_class = 0usize;
                let mut best_raw = at(BOX_CHANNELS);
                for k in 1..spec.num_classes {
                    let v = at(BOX_CHANNELS + k);
                    if v > best_raw {
                        best_raw = v;
                        best_class = k;
                    }
                }
                let score = objectness * sigmoid(best_raw);
                if score < spec.conf_threshold {
                    continue;
                }

                let cx = (sigmoid(at(0)) + S::from_count(j)) * stride;
                let cy = (sigmoid(at(1)) + S::from_count(i)) * stride;
                let (aw, ah) = spec.anchors[a];
                let w = aw * at(2).max(clamp_lo).min(clamp_hi).exp();
                let h = ah * at(3).max(clamp_lo).min(clamp_hi).exp();

                let half = S::half();
                let clip = |v: S| v.max(zero).min(spec.input_size);
                let bbox = BBox::new(
                    clip(cx - w * half),
                    clip(cy - h * half),
                    clip(cx + w * half),
                    clip(cy + h * half),
                )?;
                detections.push(Detection::new(
                    image_id,
                    bbox,
                    score,
                    class_names[best_class].clone(),
                )?);
            }
        }
    }
    Ok(detections)
}

/// Total anchor slots across the given scales: Σ grid² × 3.
pub fn total_prediction_count<S: Scalar>(specs: &[GridSpec<S>]) -> usize {
    specs
        .iter()
        .map(|s| s.grid_size * s.grid_size * ANCHORS_PER_CELL)
        .sum()
}

/// Affine mapping between original-image coordinates and the padded,
/// scaled network canvas: `network = image · scale + pad`.
///
/// For an aspect-preserving resize of a W×H image into a D×D input,
/// `scale = D / max(W, H)` with `pad = (D − scale·W)/2` on x and the
/// analogous value on y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Letterbox<S> {
    pub scale: S,
    pub pad_x: S,
    pub pad_y: S,
}

impl<S: Scalar> Letterbox<S> {
    /// Maps a box from original-image space into network space.
    pub fn to_network(&self, bbox: &BBox<S>) -> Result<BBox<S>> {
        BBox::new(
            bbox.x1() * self.scale + self.pad_x,
            bbox.y1() * self.scale + self.pad_y,
            bbox.x2() * self.scale + self.pad_x,
            bbox.y2() * self.scale + self.pad_y,
        )
    }

    /// Inverts the letterbox: maps a decoded box from network space back
    /// to original-image coordinates.
    pub fn to_image(&self, bbox: &BBox<S>) -> Result<BBox<S>> {
        BBox::new(
            (bbox.x1() - self.pad_x) / self.scale,
            (bbox.y1() - self.pad_y) / self.scale,
            (bbox.x2() - self.pad_x) / self.scale,
            (bbox.y2() - self.pad_y) / self.scale,
        )
    }
}

/// Run-time decoder settings: canvas size, confidence threshold, class
/// names, and per-scale anchors. Stored as TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub input_size: f64,
    pub conf_threshold: f64,
    pub class_names: Vec<String>,
    pub scales: Vec<ScaleConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub grid_size: usize,
    pub anchors: [[f64; 2]; ANCHORS_PER_CELL],
}

impl DecoderConfig {
    /// The canonical YOLOv3 configuration: 416×416 input, the nine
    /// standard anchors split over grids 13/26/52, COCO class names, and
    /// a 0.25 confidence threshold.
    pub fn yolov3_default() -> Self {
        Self {
            input_size: 416.0,
            conf_threshold: 0.25,
            class_names: COCO_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            scales: vec![
                ScaleConfig {
                    grid_size: 13,
                    anchors: [[116.0, 90.0], [156.0, 198.0], [373.0, 326.0]],
                },
                ScaleConfig {
                    grid_size: 26,
                    anchors: [[30.0, 61.0], [62.0, 45.0], [59.0, 119.0]],
                },
                ScaleConfig {
                    grid_size: 52,
                    anchors: [[10.0, 13.0], [16.0, 30.0], [33.0, 23.0]],
                },
            ],
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("decoder config serializes")
    }

    /// Materializes one [`GridSpec`] per configured scale. A confidence
    /// override (e.g. from a CLI flag) takes precedence over the file's
    /// `conf_threshold`.
    pub fn grid_specs<S: Scalar>(&self, conf_override: Option<f64>) -> Result<Vec<GridSpec<S>>> {
        let conf = conf_override.unwrap_or(self.conf_threshold);
        self.scales
            .iter()
            .map(|scale| {
                let a = scale.anchors;
                GridSpec::new(
                    scale.grid_size,
                    [
                        (S::cast(a[0][0]), S::cast(a[0][1])),
                        (S::cast(a[1][0]), S::cast(a[1][1])),
                        (S::cast(a[2][0]), S::cast(a[2][1])),
                    ],
                    S::cast(self.input_size),
                    self.class_names.len(),
                    S::cast(conf),
                )
            })
            .collect()
    }
}
