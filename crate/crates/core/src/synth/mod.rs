//! Synthetic scenes and the studies built on them.

pub mod cameras;
pub mod motion;
pub mod scene;
pub mod studies;

pub use cameras::default_camera_rig;
pub use motion::{motion_poses, Motion};
pub use scene::{generate_scene, ground_truth_shape, NoiseSpec, SceneSpec, ShiftDistribution, SyntheticScene};
pub use studies::{
    run_ablation_study, run_ablation_suite, run_triangulation_noise_study, study_grid, Ablation, AblationRow, AblationStudySpec, NoiseStudyCell,
    NoiseStudySpec, NoiseStudyTable,
};
