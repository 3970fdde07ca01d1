//! Union-level human-object interaction detection.
//!
//! Anchors are labeled against the tight box enclosing each interacting
//! (human, object) pair. At inference the union detections are associated
//! back to instance pairs and fused into triplet scores.

pub mod action_space;
pub mod anchors;
pub mod error;
pub mod eval;
pub mod formats;
pub mod fusion;
pub mod geometry;
pub mod gradcheck;
pub mod losses;
pub mod pipeline;
pub mod suppress;
pub mod synth;
pub mod train;

pub use action_space::{ActionSpace, Preset};
pub use anchors::{
    generate_anchors, label_instance_anchors, label_union_anchors, Anchor, AnchorAssignment, InstanceGroundTruth,
    PyramidConfig, Threshold, UnionGroundTruth, UnionThresholds,
};
pub use error::{Error, Result};
pub use fusion::{enumerate_triplets, FusionOptions, HoiTriplet, InstanceDetection, MatchMode, UnionDetection};
pub use geometry::{enclose, inclusion_ratio, iou, BBox};
pub use suppress::{nms_instance, nms_union};
