use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Term multipliers and thresholds of the composite objective.
///
/// Per-keypoint and per-joint weights come from the rig unless overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub pose_prior: f64,
    pub bones: f64,
    pub smoothness: f64,
    pub keypoints: f64,
    pub silhouette: f64,
    pub color: f64,
    pub temporal: f64,
    /// Silhouette gate on the per-camera keypoint loss (px^2).
    #[serde(with = "crate::io::format::extended_f64")]
    pub sigma_kp: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub keypoint_weights: Option<Vec<f64>>,
    pub prior_weights: Option<Vec<f64>>,
    /// When false, keypoint and detection confidences are replaced by 1
    /// (zero-confidence entries still count as missing).
    pub use_confidence: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pose_prior: 0.0,
            bones: 0.0,
            smoothness: 0.0,
            keypoints: 0.0,
            silhouette: 0.0,
            color: 0.0,
            temporal: 0.0,
            sigma_kp: f64::INFINITY,
            alpha_min: 0.8,
            alpha_max: 1.2,
            keypoint_weights: None,
            prior_weights: None,
            use_confidence: true,
        }
    }
}

impl LossWeights {
    pub fn pose_stage() -> Self {
        Self {
            pose_prior: 3.0,
            bones: 100.0,
            smoothness: 0.0,
            keypoints: 2.0,
            silhouette: 1500.0,
            sigma_kp: 10.0,
            ..Self::default()
        }
    }

    pub fn mesh_stage() -> Self {
        Self {
            bones: 100.0,
            smoothness: 5.0,
            keypoints: 1.0,
            silhouette: 100.0,
            sigma_kp: 10.0,
            ..Self::default()
        }
    }

    pub fn color_stage() -> Self {
        Self {
            color: 1.0,
            ..Self::default()
        }
    }

    pub fn time_stage() -> Self {
        Self {
            pose_prior: 3.0,
            keypoints: 1.0,
            silhouette: 50.0,
            temporal: 10.0,
            sigma_kp: 5.0,
            ..Self::default()
        }
    }

    /// Multiplies every term weight by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            pose_prior: self.pose_prior * c,
            bones: self.bones * c,
            smoothness: self.smoothness * c,
            keypoints: self.keypoints * c,
            silhouette: self.silhouette * c,
            color: self.color * c,
            temporal: self.temporal * c,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lambdas = [
            self.pose_prior,
            self.bones,
            self.smoothness,
            self.keypoints,
            self.silhouette,
            self.color,
            self.temporal,
        ];
        if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument("loss weights must be finite and nonnegative".into()));
        }
        if !(self.sigma_kp >= 0.0) {
            return Err(Error::InvalidArgument("sigma_kp must be nonnegative".into()));
        }
        if !(self.alpha_min < self.alpha_max) {
            return Err(Error::InvalidArgument("alpha_min must be below alpha_max".into()));
        }
        let neg = |w: &Option<Vec<f64>>| w.as_ref().is_some_and(|w| w.iter().any(|x| !(*x >= 0.0)));
        if neg(&self.keypoint_weights) || neg(&self.prior_weights) {
            return Err(Error::InvalidArgument("per-keypoint and per-joint weights must be nonnegative".into()));
        }
        Ok(())
    }
}
