//! Region-of-interest based grasp detection: oriented-rectangle geometry,
//! anchor encoding, target assignment, suppression, losses, the
//! grasp-aware evaluation protocol, depth-based grasp poses and a seeded
//! synthetic scene generator.

pub mod anchor_codec;
pub mod assignment;
pub mod dataset_io;
pub mod depth_grasp;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod suppression;
pub mod synth;

pub use anchor_codec::{build_anchor_grid, decode, encode, AnchorGrid, AnchorSpec, GraspOffsets};
pub use assignment::{anchor_targets, match_rois, AnchorLabel, AnchorTarget, RoiMatch};
pub use dataset_io::{GraspAnnotation, ObjectAnnotation, SceneAnnotation, Transform};
pub use geometry::{box_iou, rotated_iou, AxisAlignedBox, GeometryError, OrientedRect, QuadVertices};
pub use losses::{grasp_loss, total_loss, GraspLoss};
pub use metrics::{evaluate, DetectionRecord, EvalConfig, EvalReport};
pub use suppression::{nms_boxes, nms_grasps, ScoredBox, ScoredGrasp};
