//! Optimizer, stage schedule, windowing, camera selection and warm start.

pub mod adam;
pub mod cameras;
pub mod fit;
pub mod init;
pub mod stage;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cameras::{count_switches, select_cameras, SelectionPolicy};
pub use fit::{
    fit_color, fit_sequence, fit_shape, ColorFit, RansacConfigDef, SequenceFit, SequenceFitConfig, ShapeFit,
    ShapeFitConfig, WindowPlan,
};
pub use init::{init_global, triangulate_frame, triangulate_sequence, FrameTriangulation, GlobalInit, TriangulationMode};
pub use stage::{run_stage, ActiveSet, LearningRates, StageConfig, StageKind, StageOutcome};
