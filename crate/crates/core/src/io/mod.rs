//! On-disk formats, detection QC and bounding boxes.

pub mod bbox;
pub mod config;
pub mod documents;
pub mod format;
pub mod observations;
pub mod png;
pub mod qc;
pub mod rig_bundle;

pub use bbox::{bbox_from_keypoints, DEFAULT_BBOX_MARGIN};
pub use config::RunConfig;
pub use documents::{
    load_calibration, load_keypoints_3d, load_poses, load_shape, save_calibration, save_features, save_keypoints_3d,
    save_poses, save_shape, Keypoints3d, PoseSequence,
};
pub use format::{read_document, write_document, SCHEMA_VERSION};
pub use observations::{
    load_observations, save_observations, CameraObservation, Detection, FrameObservation, KeypointObs, ObservationSet,
};
pub use png::{load_mask, mask_file_name, save_mask};
pub use qc::{load_detections, qc_filter, DuplicatePolicy, Exclusion, ExclusionReason, QcOutput, RawDetection, RawFrame, RawView};
pub use rig_bundle::{load_obj, load_rig, save_rig};
