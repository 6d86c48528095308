//! Camera-invariant monocular 3D detection tooling.
//!
//! The crate covers the non-neural machinery of a heatmap-based monocular
//! 3D detector and its evaluation, verified against oracles instead of a
//! trained backbone:
//!
//! - [`geometry`] — pinhole projection, observation angles, axis-aligned
//!   and rotated (BEV / volumetric) box overlap.
//! - [`codec`] — dense detection maps: ground-truth rendering and decoding,
//!   with depth normalized by the capturing camera's focal length so the
//!   regressed quantity transfers across datasets.
//! - [`container`] — the on-disk MDDM map format.
//! - [`loss`] — selective multi-dataset losses: per-dataset class masks,
//!   penalty-reduced focal and L1 terms that never penalize categories a
//!   frame's source dataset does not annotate.
//! - [`pseudo`] — pseudo-3D supervision from 2D labels: low-threshold
//!   decoding, minimum-cost matching against labeled boxes, mis-detection
//!   filtering, target rebuilding and the restricted loss.
//! - [`assignment`] — exact minimum-cost bipartite matching.
//! - [`metrics`] — KITTI AP40 (2D/BEV/3D, Easy/Moderate/Hard) and the
//!   Cityscapes metric family (AP, BEVCD, YawSim, PRSim, SizeSim, DS).
//! - [`dataset`] — KITTI label/calibration parsing and the unified frame
//!   schema shared across datasets.
//! - [`synth`] — seeded synthetic scenes and a noisy-detector simulator.

pub mod assignment;
pub mod codec;
pub mod container;
pub mod dataset;
pub mod geometry;
pub mod loss;
pub mod metrics;
pub mod pseudo;
pub mod synth;

pub use assignment::min_cost_matching;
pub use codec::{
    decode_detections, depth_decode, depth_encode, encode_frame, encoded_box2d, gaussian_radius,
    sigmoid, CodecConfig, DenseDetectionMaps, Detection, SupervisedHeads,
};
pub use dataset::{
    load_split, parse_kitti_calib, parse_kitti_label_line, parse_kitti_labels, AnnotationLevel,
    ObjectAnnotation, UnifiedFrame,
};
pub use geometry::{
    bev_iou, box3d_corners, iou_2d, iou_3d, observation_angle, project_point, projected_box2d,
    unproject, wrap_angle, yaw_from_alpha, Box2D, Box3D, CameraIntrinsics, Dimensions,
    ObservationAngle, Point3,
};
pub use loss::{
    class_mask, joint_loss, masked_focal_loss, masked_regression_loss, ClassMask, ClassRegistry,
    DatasetManifest, HeadWeights, LossBreakdown,
};
pub use metrics::{
    ap40, cityscapes_eval, ds_score, kitti_difficulty, kitti_eval, pairwise_similarities,
    CityscapesReport, CityscapesRow, DifficultyBand, EvalConfig, EvalMode, KittiReport,
};
pub use pseudo::{
    generate_pseudo_labels, iou_cost_matrix, pseudo_loss, rebuild_targets, MatchReport,
    PseudoConfig, PseudoLabel,
};
pub use synth::{generate_scene, scene_to_frame, simulate_detector, NoiseConfig, Scene, SceneConfig};
