//! Template rig, rotations, forward kinematics and skinning.

pub mod features;
pub mod quadruped;
pub mod rig;
pub mod rotation;
pub mod shape;
pub mod skinning;

pub use rig::{BoneScaleGroup, KeypointDef, OffsetSlot, RigModel, RigParts, SymmetryMap};
pub use rotation::{angular_velocity, rodrigues};
pub use shape::{apply_shape, PoseState, ShapedRig, SubjectShape};
pub use skinning::{pose_model, pose_shaped, PosedFrame};
