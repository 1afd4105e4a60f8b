//! Stage schedule and the inner optimization loop.

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::objective::{LossBreakdown, LossWeights, Objective, ParamBlock, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Pose,
    Mesh,
    Color,
    Time,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Pose => "pose",
            StageKind::Mesh => "mesh",
            StageKind::Color => "color",
            StageKind::Time => "time",
        }
    }
}

/// Which parameter groups a stage updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveSet {
    pub theta: bool,
    /// Global rotation and translation.
    pub global: bool,
    pub global_scale: bool,
    pub bone_scales: bool,
    pub vertex_offsets: bool,
    pub colors: bool,
}

impl ActiveSet {
    pub const NONE: Self = Self {
        theta: false,
        global: false,
        global_scale: false,
        bone_scales: false,
        vertex_offsets: false,
        colors: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningRates {
    pub theta: f64,
    pub global: f64,
    /// Bone scales, offsets and global scale.
    pub shape: f64,
    pub color: f64,
    /// Number of halvings spread evenly over the stage.
    pub halvings: u32,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self { theta: 1e-2, global: 1e-2, shape: 1e-3, color: 5e-2, halvings: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub kind: StageKind,
    pub weights: LossWeights,
    pub epochs: usize,
    #[serde(default)]
    pub lr: LearningRates,
    pub active: ActiveSet,
    /// Multiplier on the default silhouette sharpness.
    #[serde(default = "one")]
    pub sharpness_scale: f64,
    /// Reject steps that raise the loss and halve the rate instead.
    #[serde(default)]
    pub monotone: bool,
    #[serde(default)]
    pub adam: AdamConfig,
}

fn one() -> f64 {
    1.0
}

impl StageConfig {
    /// Default schedule entry for each stage. The shape stages start at 4x
    /// the base sharpness (softer silhouettes bias the scale upward) and
    /// double from pose to mesh to color; the time stage uses the base
    /// value since it begins from a fresh per-frame warm start.
    pub fn preset(kind: StageKind) -> Self {
        let (weights, epochs, active, sharpness_scale) = match kind {
            StageKind::Pose => (
                LossWeights::pose_stage(),
                1200,
                ActiveSet { theta: true, global: true, global_scale: true, bone_scales: true, ..ActiveSet::NONE },
                4.0,
            ),
            StageKind::Mesh => (
                LossWeights::mesh_stage(),
                150,
                ActiveSet { theta: true, global: true, bone_scales: true, vertex_offsets: true, ..ActiveSet::NONE },
                8.0,
            ),
            StageKind::Color => (LossWeights::color_stage(), 30, ActiveSet { colors: true, ..ActiveSet::NONE }, 16.0),
            StageKind::Time => (
                LossWeights::time_stage(),
                350,
                ActiveSet { theta: true, global: true, ..ActiveSet::NONE },
                1.0,
            ),
        };
        Self {
            kind,
            weights,
            epochs,
            lr: LearningRates::default(),
            active,
            sharpness_scale,
            monotone: kind == StageKind::Color,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument(format!("stage {}: epochs must be positive", self.kind.name())));
        }
        let lr = &self.lr;
        if [lr.theta, lr.global, lr.shape, lr.color].iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument(format!("stage {}: invalid learning rate", self.kind.name())));
        }
        if !(self.sharpness_scale > 0.0) {
            return Err(Error::InvalidArgument(format!("stage {}: sharpness_scale must be positive", self.kind.name())));
        }
        // The photometric gradient covers vertex colors only.
        let a = &self.active;
        if self.weights.color > 0.0 && (a.theta || a.global || a.global_scale || a.bone_scales || a.vertex_offsets) {
            return Err(Error::InvalidArgument(format!("stage {}: the color term requires frozen geometry", self.kind.name())));
        }
        self.weights.validate()
    }

    /// Learning-rate multiplier at iteration `it`.
    pub fn decay(&self, it: usize) -> f64 {
        let n = self.lr.halvings as usize + 1;
        let k = (it * n / self.epochs).min(n - 1);
        0.5f64.powi(k as i32)
    }

    /// Per-coordinate base learning rates; frames flagged in `frozen` and
    /// inactive groups get zero.
    pub fn rate_vector(&self, params: &Params, frozen: &[bool]) -> Vec<f64> {
        let (a, lr) = (&self.active, &self.lr);
        let mut out = Vec::new();
        for (b, r) in params.blocks() {
            let rate = match b {
                ParamBlock::BoneScales if a.bone_scales => lr.shape,
                ParamBlock::VertexOffsets if a.vertex_offsets => lr.shape,
                ParamBlock::GlobalScale if a.global_scale => lr.shape,
                ParamBlock::VertexColors if a.colors => lr.color,
                ParamBlock::Theta(n) if a.theta && !frozen[n] => lr.theta,
                ParamBlock::GlobalRot(n) | ParamBlock::Translation(n) if a.global && !frozen[n] => lr.global,
                _ => 0.0,
            };
            out.extend(std::iter::repeat_n(rate, r.len()));
        }
        out
    }
}

/// Trace of one stage run.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    /// Loss after every accepted iterate, starting with the initial value.
    pub history: Vec<f64>,
    pub final_loss: LossBreakdown,
    /// False when a non-finite loss or gradient stopped the stage; the
    /// parameters then hold the last finite iterate.
    pub converged: bool,
    pub iterations: usize,
    /// Per frame, whether any camera contributed at the final iterate.
    pub observed: Vec<bool>,
}

/// Runs Adam on `objective` for the stage's epochs. Only the active groups of
/// non-frozen frames change; everything else stays bit-identical.
pub fn run_stage(objective: &Objective, params: &mut Params, stage: &StageConfig, frozen: &[bool]) -> Result<StageOutcome> {
    stage.validate()?;
    if frozen.len() != params.poses.len() {
        return Err(Error::dim("frozen flags", params.poses.len(), frozen.len()));
    }
    let base = stage.rate_vector(params, frozen);
    let mut x = params.flatten();
    let mut state = AdamState::new(x.len());
    let mut eval = objective.evaluate(params, true)?;
    let mut history = vec![eval.loss.total];
    let mut scale = 1.0;
    let mut lr = vec![0.0; x.len()];
    let mut converged = eval.loss.total.is_finite();
    let mut it = 0;
    while converged && it < stage.epochs {
        let grad = eval.grad.as_ref().expect("gradient requested").flatten();
        if grad.iter().any(|g| !g.is_finite()) {
            converged = false;
            break;
        }
        let d = stage.decay(it) * scale;
        for (l, b) in lr.iter_mut().zip(&base) {
            *l = b * d;
        }
        let prev = x.clone();
        adam_step(&mut x, &grad, &mut state, &lr, &stage.adam);
        params.assign(&x);
        let next = objective.evaluate(params, true)?;
        it += 1;
        if !next.loss.total.is_finite() {
            x = prev;
            params.assign(&x);
            converged = false;
            break;
        }
        if stage.monotone && next.loss.total > eval.loss.total + 1e-12 * eval.loss.total.abs() {
            x = prev;
            params.assign(&x);
            scale *= 0.5;
            history.push(eval.loss.total);
            continue;
        }
        eval = next;
        history.push(eval.loss.total);
        if it % 50 == 0 || it == stage.epochs {
            let l = &eval.loss;
            log::debug!(
                "stage={} iter={} total={:.6e} kp={:.4e} sil={:.4e} prior={:.4e} bones={:.4e} sm={:.4e} temporal={:.4e} phot={:.4e}",
                stage.kind.name(),
                it,
                l.total,
                l.keypoints,
                l.silhouette,
                l.pose_prior,
                l.bones,
                l.smoothness,
                l.temporal,
                l.photometric
            );
        }
    }
    if !converged {
        log::warn!("stage {} stopped at iteration {it}: non-finite loss or gradient", stage.kind.name());
    }
    Ok(StageOutcome { history, final_loss: eval.loss, converged, iterations: it, observed: eval.observed })
}
