//! Synthetic multi-camera scenes with known ground truth.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cameras::default_camera_rig;
use super::motion::{motion_poses, Motion};
use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::io::bbox::{bbox_from_keypoints, DEFAULT_BBOX_MARGIN};
use crate::io::observations::{CameraObservation, FrameObservation, KeypointObs, ObservationSet};
use crate::model::quadruped::quadruped;
use crate::model::rig::RigModel;
use crate::model::shape::{apply_shape, scaled_logit, PoseState, SubjectShape};
use crate::model::skinning::pose_shaped;
use crate::render::{rasterize_hard, render_color, CropWindow, Raster};

/// How per-axis keypoint shifts are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftDistribution {
    /// Uniform over `{-sigma, 0, sigma}`.
    Ternary,
    /// Normal with standard deviation `sigma`.
    Gaussian,
}

/// Observation corruption applied on top of exact projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Per-axis keypoint shift scale (px).
    pub keypoint_sigma: f64,
    pub shift: ShiftDistribution,
    /// Probability that a keypoint is replaced by an outlier.
    pub corrupt_fraction: f64,
    /// Typical outlier displacement (px).
    pub corrupt_offset: f64,
    /// Beta parameters of outlier confidences. Clean keypoints get 1.
    pub corrupt_beta: [f64; 2],
    /// Probability that a mask gets a flipped disc.
    pub mask_corruption: f64,
    /// Probability that a camera-frame is missing entirely.
    pub dropout: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            keypoint_sigma: 0.0,
            shift: ShiftDistribution::Ternary,
            corrupt_fraction: 0.0,
            corrupt_offset: 40.0,
            corrupt_beta: [2.0, 5.0],
            mask_corruption: 0.0,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub cameras: usize,
    pub frames: usize,
    pub motion: Motion,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub crop_cap: usize,
    /// Ground-truth bone scales; neutral when absent.
    pub bone_scales: Option<Vec<f64>>,
    pub global_scale: f64,
    /// Flat ground-truth vertex color.
    pub color: [f64; 3],
    pub with_images: bool,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            cameras: 6,
            frames: 10,
            motion: Motion::Static,
            noise: NoiseSpec::default(),
            seed: 0,
            crop_cap: 64,
            bone_scales: None,
            global_scale: 1.0,
            color: [128.0, 128.0, 128.0],
            with_images: false,
        }
    }
}

/// Ground truth plus generated observations.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub rig: RigModel,
    pub cameras: CameraRig,
    pub shape: SubjectShape,
    pub poses: Vec<PoseState>,
    pub observations: ObservationSet,
}

/// Per-frame generator so results do not depend on thread scheduling.
fn frame_rng(seed: u64, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64 + 1);
    rng
}

fn shift(rng: &mut ChaCha8Rng, noise: &NoiseSpec) -> f64 {
    let s = noise.keypoint_sigma;
    if s == 0.0 {
        return 0.0;
    }
    match noise.shift {
        ShiftDistribution::Ternary => [-s, 0.0, s][rng.random_range(0..3)],
        ShiftDistribution::Gaussian => Normal::new(0.0, s).expect("finite sigma").sample(rng),
    }
}

/// 8-bit values, as a camera would deliver them.
fn quantize(mut image: Raster<Vector3<f64>>) -> Raster<Vector3<f64>> {
    for p in &mut image.data {
        *p = p.map(|c| c.round().clamp(0.0, 255.0));
    }
    image
}

fn corrupt_mask(mask: &mut Raster<bool>, rng: &mut ChaCha8Rng) {
    let r = 0.15 * mask.width.max(mask.height) as f64;
    let cx = rng.random_range(0.0..mask.width as f64);
    let cy = rng.random_range(0.0..mask.height as f64);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if (Vector2::new(x as f64 + 0.5 - cx, y as f64 + 0.5 - cy)).norm() < r {
                let v = !*mask.get(x, y);
                mask.set(x, y, v);
            }
        }
    }
}

/// Ground-truth shape implied by a spec.
pub fn ground_truth_shape(rig: &RigModel, spec: &SceneSpec) -> Result<SubjectShape> {
    let mut shape = SubjectShape::neutral(rig);
    if let Some(a) = &spec.bone_scales {
        if a.len() != rig.n_bone_groups() {
            return Err(Error::dim("bone_scales", rig.n_bone_groups(), a.len()));
        }
        shape.bone_scales = a.clone();
    }
    shape.global_scale = spec.global_scale;
    let raw = Vector3::from(spec.color.map(scaled_logit));
    shape.vertex_colors_raw = vec![raw; rig.n_vertices()];
    Ok(shape)
}

/// Builds the scene: built-in quadruped, default camera rig, parametric
/// motion, rendered and corrupted observations.
pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    let n = &spec.noise;
    let probs = [n.corrupt_fraction, n.mask_corruption, n.dropout];
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || !(n.keypoint_sigma >= 0.0) {
        return Err(Error::InvalidArgument("noise probabilities must lie in [0, 1]".into()));
    }
    if spec.frames == 0 || spec.cameras == 0 {
        return Err(Error::InvalidArgument("scene needs at least one frame and camera".into()));
    }
    let rig = quadruped();
    let cameras = default_camera_rig(spec.cameras)?;
    let shape = ground_truth_shape(&rig, spec)?;
    let poses = motion_poses(&rig, &spec.motion, spec.frames);
    let shaped = apply_shape(&rig, &shape)?;
    let colors = shape.colors();
    let beta = Beta::new(n.corrupt_beta[0], n.corrupt_beta[1])
        .map_err(|e| Error::InvalidArgument(format!("corrupt_beta: {e}")))?;

    let frames: Vec<FrameObservation> = (0..spec.frames)
        .into_par_iter()
        .map(|f| {
            let mut rng = frame_rng(spec.seed, f);
            let posed = pose_shaped(&rig, &shaped, shape.global_scale, &poses[f], true);
            let kp3: Vec<Vector3<f64>> = rig.keypoints().iter().map(|k| posed.joints[k.joint]).collect();
            let mut views = Vec::new();
            for cam in &cameras.cameras {
                // Draw every random quantity even for dropped views so the
                // stream does not depend on earlier outcomes.
                let dropped = rng.random::<f64>() < n.dropout;
                let keypoints: Vec<KeypointObs> = kp3
                    .iter()
                    .map(|p| {
                        let dx = shift(&mut rng, n);
                        let dy = shift(&mut rng, n);
                        let corrupt = rng.random::<f64>() < n.corrupt_fraction;
                        let ang = rng.random_range(0.0..std::f64::consts::TAU);
                        let mag = n.corrupt_offset * rng.random_range(0.5..1.5);
                        let conf: f64 = beta.sample(&mut rng);
                        let Some(px) = cam.project(p) else {
                            return KeypointObs::MISSING;
                        };
                        if corrupt {
                            KeypointObs {
                                u: px.x + dx + mag * ang.cos(),
                                v: px.y + dy + mag * ang.sin(),
                                confidence: conf.clamp(1e-3, 1.0),
                            }
                        } else {
                            KeypointObs {
                                u: px.x + dx,
                                v: px.y + dy,
                                confidence: 1.0,
                            }
                        }
                    })
                    .collect();
                let corrupt_mask_here = rng.random::<f64>() < n.mask_corruption;
                let mut mask_rng = ChaCha8Rng::seed_from_u64(rng.random());
                if dropped {
                    continue;
                }
                let Some(bbox) = bbox_from_keypoints(&kp3, cam, DEFAULT_BBOX_MARGIN) else {
                    continue;
                };
                let Ok(crop) = CropWindow::around(cam, &bbox, 0.0, spec.crop_cap) else {
                    continue;
                };
                let mut mask = rasterize_hard(cam, &posed.vertices, rig.faces(), &crop);
                if corrupt_mask_here {
                    corrupt_mask(&mut mask, &mut mask_rng);
                }
                let image = spec
                    .with_images
                    .then(|| quantize(render_color(cam, &posed.vertices, rig.faces(), &colors, &crop, 1.0).0));
                views.push(CameraObservation {
                    camera: cam.id.clone(),
                    keypoints,
                    detection_confidence: 1.0,
                    crop: Some(crop),
                    mask: Some(mask),
                    image,
                });
            }
            FrameObservation { frame: f, views }
        })
        .collect();

    Ok(SyntheticScene {
        spec: spec.clone(),
        rig,
        cameras,
        shape,
        poses,
        observations: ObservationSet { frames },
    })
}

impl SyntheticScene {
    /// Ground-truth keypoint positions per frame.
    pub fn keypoints_3d(&self) -> Vec<Vec<Vector3<f64>>> {
        let shaped = apply_shape(&self.rig, &self.shape).expect("scene shape matches its rig");
        self.poses
            .iter()
            .map(|p| {
                let f = pose_shaped(&self.rig, &shaped, self.shape.global_scale, p, false);
                self.rig.keypoints().iter().map(|k| f.joints[k.joint]).collect()
            })
            .collect()
    }
}
