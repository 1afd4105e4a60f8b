//! Loss terms and the composite objective.

pub mod composite;
pub mod gradcheck;
pub mod terms;
pub mod weights;

pub use composite::{
    composite_loss, EvalConfig, Evaluation, LossBreakdown, Objective, ParamBlock, ParamGrad, Params,
};
pub use gradcheck::{check_gradient, GradCheck};
pub use weights::LossWeights;
