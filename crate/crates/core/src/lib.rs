//! Detection-geometry toolkit: axis-aligned box algebra, IoU and DIoU
//! regression losses with analytic gradients, greedy NMS under either
//! suppression metric, YOLOv3 head decoding, VOC/CVC annotation parsing,
//! single-class PR/AP evaluation, and a gradient-descent benchmark that
//! contrasts the two losses' convergence behavior.
//!
//! Numeric code is generic over the [`Scalar`] floating-point type
//! (`f32` or `f64`); concrete aliases live at the crate root.
//!
//! ```
//! use detkit::{BBox64, LossKind};
//!
//! let pred = BBox64::new(0.0, 0.0, 2.0, 2.0).unwrap();
//! let gt = BBox64::new(1.0, 1.0, 3.0, 3.0).unwrap();
//! assert!((pred.iou(&gt) - 1.0 / 7.0).abs() < 1e-12);
//!
//! let loss = LossKind::Diou.loss(&pred.to_center(), &gt.to_center()).unwrap();
//! assert!((loss - (6.0 / 7.0 + 1.0 / 9.0)).abs() < 1e-12);
//! ```

pub mod dataset;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod loss;
pub mod nms;
pub mod scalar;
pub mod sim;

pub use dataset::{DatasetIndex, GroundTruth};
pub use decoder::{DecoderConfig, GridSpec, Letterbox, RawHead};
pub use error::{Error, Result};
pub use eval::{ApMethod, EvalReport, PRPoint};
pub use geometry::{BBox, CenterBox};
pub use loss::{BoxGradient, LossKind};
pub use nms::{greedy_nms, Detection, SuppressionMetric};
pub use scalar::Scalar;
pub use sim::{SimConfig, Trajectory};

pub type BBox32 = BBox<f32>;
pub type BBox64 = BBox<f64>;
pub type CenterBox32 = CenterBox<f32>;
pub type CenterBox64 = CenterBox<f64>;
pub type Detection32 = Detection<f32>;
pub type Detection64 = Detection<f64>;
pub type GroundTruth32 = GroundTruth<f32>;
pub type GroundTruth64 = GroundTruth<f64>;
