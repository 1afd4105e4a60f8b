//! Shape, color and sequence fitting drivers.

use serde::{Deserialize, Serialize};

use super::cameras::{select_cameras, SelectionPolicy};
use super::init::{init_global, triangulate_frame};
use super::stage::{run_stage, StageConfig, StageKind, StageOutcome};
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, RansacConfig};
use crate::io::observations::{FrameObservation, ObservationSet};
use crate::model::rig::RigModel;
use crate::model::shape::{PoseState, SubjectShape};
use crate::objective::{EvalConfig, Objective, Params};

fn eval_config(stage: &StageConfig, cameras: &CameraRig, light: f64) -> EvalConfig {
    EvalConfig {
        weights: stage.weights.clone(),
        sharpness_scale: stage.sharpness_scale,
        dt: 1.0 / cameras.fps,
        light,
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapeFitConfig {
    pub stages: Vec<StageConfig>,
    pub seed: u64,
    pub ransac: RansacConfigDef,
    pub light: f64,
}

/// Serializable mirror of [`RansacConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfigDef {
    pub proposals: usize,
    pub subset_max: usize,
    pub min_confidence: f64,
}

impl Default for RansacConfigDef {
    fn default() -> Self {
        let d = RansacConfig::default();
        Self { proposals: d.proposals, subset_max: d.subset_max, min_confidence: d.min_confidence }
    }
}

impl From<RansacConfigDef> for RansacConfig {
    fn from(d: RansacConfigDef) -> Self {
        Self { proposals: d.proposals, subset_max: d.subset_max, min_confidence: d.min_confidence }
    }
}

impl Default for ShapeFitConfig {
    fn default() -> Self {
        Self {
            stages: vec![StageConfig::preset(StageKind::Pose), StageConfig::preset(StageKind::Mesh)],
            seed: 0,
            ransac: RansacConfigDef::default(),
            light: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShapeFit {
    pub shape: SubjectShape,
    /// One pose per keyframe.
    pub poses: Vec<PoseState>,
    pub stages: Vec<StageOutcome>,
    /// False when a stage hit a non-finite value; the result is then the last
    /// finite iterate.
    pub converged: bool,
}

/// Warm-started poses for `frames`. Frames whose triangulation is too sparse
/// reuse the previous frame's global transform.
fn warm_start(
    rig: &RigModel,
    cameras: &CameraRig,
    frames: &[&FrameObservation],
    allowed: Option<&[Vec<String>]>,
    shape: &SubjectShape,
    ransac: &RansacConfig,
    seed: u64,
) -> Result<Vec<PoseState>> {
    let mut out: Vec<PoseState> = Vec::with_capacity(frames.len());
    for (n, f) in frames.iter().enumerate() {
        let tri = triangulate_frame(cameras, f, allowed.map(|a| a[n].as_slice()), ransac, seed);
        let g = init_global(rig, shape, &tri, false)?;
        let found = tri.iter().flatten().count() >= 3;
        let pose = match (found, out.last()) {
            (false, Some(prev)) => prev.clone(),
            _ => PoseState { global_rot: g.global_rot, translation: g.translation, ..PoseState::rest(rig) },
        };
        out.push(pose);
    }
    Ok(out)
}

/// Adapts bone scales, offsets and the global scale to a set of keyframes by
/// running the configured stages (pose then mesh by default).
pub fn fit_shape(rig: &RigModel, cameras: &CameraRig, keyframes: &[FrameObservation], config: &ShapeFitConfig) -> Result<ShapeFit> {
    if keyframes.is_empty() {
        return Err(Error::InvalidArgument("fit_shape needs at least one keyframe".into()));
    }
    let ransac: RansacConfig = config.ransac.into();
    let frames: Vec<&FrameObservation> = keyframes.iter().collect();
    let mut shape = SubjectShape::neutral(rig);
    let scales: Vec<f64> = frames
        .iter()
        .filter_map(|f| {
            let tri = triangulate_frame(cameras, f, None, &ransac, config.seed);
            init_global(rig, &shape, &tri, true).ok()?.global_scale
        })
        .collect();
    shape.global_scale = median(scales).unwrap_or(1.0);
    let poses = warm_start(rig, cameras, &frames, None, &shape, &ransac, config.seed)?;
    let mut params = Params { shape, poses };
    let frozen = vec![false; frames.len()];
    let mut outcomes = Vec::new();
    let mut converged = true;
    for stage in &config.stages {
        let obj = Objective::new(rig, cameras, frames.clone(), None, eval_config(stage, cameras, config.light))?;
        let o = run_stage(&obj, &mut params, stage, &frozen)?;
        log::info!("fit_shape stage {} done: loss {:.6e} after {} iterations", stage.kind.name(), o.final_loss.total, o.iterations);
        converged = o.converged;
        outcomes.push(o);
        if !converged {
            break;
        }
    }
    Ok(ShapeFit { shape: params.shape, poses: params.poses, stages: outcomes, converged })
}

#[derive(Debug, Clone)]
pub struct ColorFit {
    pub shape: SubjectShape,
    pub outcome: StageOutcome,
}

/// Fits vertex colors to the keyframe images with geometry frozen.
pub fn fit_color(
    rig: &RigModel,
    cameras: &CameraRig,
    keyframes: &[FrameObservation],
    shape: &SubjectShape,
    poses: &[PoseState],
    stage: &StageConfig,
    light: f64,
) -> Result<ColorFit> {
    if poses.len() != keyframes.len() {
        return Err(Error::dim("keyframe poses", keyframes.len(), poses.len()));
    }
    if keyframes.iter().all(|f| f.views.iter().all(|v| v.image.is_none() || v.mask.is_none())) {
        return Err(Error::InvalidArgument("fit_color needs images and masks".into()));
    }
    let obj = Objective::new(rig, cameras, keyframes.iter().collect(), None, eval_config(stage, cameras, light))?;
    let mut params = Params { shape: shape.clone(), poses: poses.to_vec() };
    let outcome = run_stage(&obj, &mut params, stage, &vec![false; poses.len()])?;
    Ok(ColorFit { shape: params.shape, outcome })
}

/// Temporal batching: windows of `length` frames overlapping by `overlap`,
/// using at most `cameras` views per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowPlan {
    pub length: usize,
    pub overlap: usize,
    pub cameras: usize,
}

impl Default for WindowPlan {
    fn default() -> Self {
        Self { length: 80, overlap: 10, cameras: 6 }
    }
}

impl WindowPlan {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.overlap >= self.length || self.cameras == 0 {
            return Err(Error::InvalidArgument(format!(
                "window plan needs 0 <= overlap < length and cameras > 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// Half-open frame ranges of the windows covering `n` frames.
    pub fn windows(&self, n: usize) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + self.length).min(n);
            out.push(start..end);
            if end == n {
                break;
            }
            start = end - self.overlap;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceFitConfig {
    pub stage: StageConfig,
    pub window: WindowPlan,
    pub selection: SelectionPolicy,
    pub seed: u64,
    pub ransac: RansacConfigDef,
    pub light: f64,
}

impl Default for SequenceFitConfig {
    fn default() -> Self {
        Self {
            stage: StageConfig::preset(StageKind::Time),
            window: WindowPlan::default(),
            selection: SelectionPolicy::Greedy,
            seed: 0,
            ransac: RansacConfigDef::default(),
            light: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SequenceFit {
    pub poses: Vec<PoseState>,
    /// False for frames without observations or with a failed window.
    pub converged: Vec<bool>,
    /// Cameras used per frame.
    pub selection: Vec<Vec<String>>,
    pub windows: Vec<(std::ops::Range<usize>, Option<StageOutcome>)>,
}

/// Fits poses to a whole sequence with the shape fixed. Windows run in order;
/// frames shared with the previous window are frozen anchors.
pub fn fit_sequence(
    rig: &RigModel,
    cameras: &CameraRig,
    observations: &ObservationSet,
    shape: &SubjectShape,
    config: &SequenceFitConfig,
) -> Result<SequenceFit> {
    config.window.validate()?;
    config.stage.validate()?;
    shape.check(rig)?;
    let n = observations.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty observation set".into()));
    }
    let ransac: RansacConfig = config.ransac.into();
    let availability: Vec<Vec<String>> = observations
        .availability()
        .into_iter()
        .map(|a| a.into_iter().filter(|c| cameras.index_of(c).is_some()).collect())
        .collect();
    let selection = select_cameras(&availability, config.selection, config.window.cameras, config.seed);
    let mut poses: Vec<PoseState> = Vec::with_capacity(n);
    let mut converged: Vec<bool> = Vec::with_capacity(n);
    let mut windows = Vec::new();
    let eval = eval_config(&config.stage, cameras, config.light);

    for range in config.window.windows(n) {
        let anchors = poses.len().saturating_sub(range.start);
        let frames: Vec<&FrameObservation> = observations.frames[range.clone()].iter().collect();
        let allowed = &selection[range.clone()];
        let mut window_poses: Vec<PoseState> = poses[range.start..].to_vec();
        if let Some(last) = poses.last() {
            window_poses.resize(range.len(), last.clone());
        } else {
            window_poses = warm_start(rig, cameras, &frames, Some(allowed), shape, &ransac, config.seed)?;
        }
        let mut frozen = vec![false; range.len()];
        frozen[..anchors].iter_mut().for_each(|f| *f = true);
        let mut params = Params { shape: shape.clone(), poses: window_poses };
        let obj = Objective::new(rig, cameras, frames, Some(allowed), eval.clone())?;
        let outcome = match run_stage(&obj, &mut params, &config.stage, &frozen) {
            Ok(o) => Some(o),
            Err(Error::NoObservedFrames(_)) => None,
            Err(e) => return Err(e),
        };
        log::info!(
            "window {}..{}: {}",
            range.start,
            range.end,
            outcome.as_ref().map_or("no observations".to_string(), |o| format!("loss {:.6e}", o.final_loss.total))
        );
        for (k, p) in params.poses.into_iter().enumerate().skip(anchors) {
            let ok = outcome.as_ref().is_some_and(|o| o.converged && o.observed[k]) && p.is_finite();
            let p = if p.is_finite() { p } else { PoseState::rest(rig) };
            poses.push(p);
            converged.push(ok);
        }
        windows.push((range, outcome));
    }
    Ok(SequenceFit { poses, converged, selection, windows })
}
