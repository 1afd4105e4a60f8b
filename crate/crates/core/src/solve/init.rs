//! Triangulated keypoints and the similarity warm start.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{mean_reprojection_error, procrustes_similarity, triangulate_dlt, triangulate_ransac, CameraRig, RansacConfig, View};
use crate::io::observations::{FrameObservation, ObservationSet};
use crate::model::rig::RigModel;
use crate::model::rotation::log_rotation;
use crate::model::shape::{apply_shape, PoseState, SubjectShape};
use crate::model::skinning::pose_shaped;

/// RANSAC triangulation of every keypoint of one frame. Keypoints seen by
/// fewer than two confident views are `None`. The generator is derived from
/// `seed` and the frame index.
pub fn triangulate_frame(
    cameras: &CameraRig,
    frame: &FrameObservation,
    allowed: Option<&[String]>,
    config: &RansacConfig,
    seed: u64,
) -> Vec<Option<Vector3<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame.frame as u64);
    let n_kp = frame.views.first().map_or(0, |v| v.keypoints.len());
    let views: Vec<_> = frame
        .views
        .iter()
        .filter(|v| v.detection_confidence > 0.0 && allowed.is_none_or(|a| a.contains(&v.camera)))
        .filter_map(|v| cameras.index_of(&v.camera).map(|c| (&cameras.cameras[c], v)))
        .collect();
    (0..n_kp)
        .map(|k| {
            let vs: Vec<View> = views
                .iter()
                .filter_map(|(cam, v)| {
                    let o = v.keypoints.get(k)?;
                    (o.confidence > 0.0).then(|| View {
                        camera: cam,
                        pixel: Vector2::new(o.u, o.v),
                        confidence: o.confidence,
                    })
                })
                .collect();
            triangulate_ransac(&vs, config, &mut rng).ok().map(|r| r.point)
        })
        .collect()
}

/// How 3D keypoints are triangulated from 2D labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriangulationMode {
    /// Linear triangulation from every confident view, for curated labels.
    AllViews,
    /// RANSAC over view subsets, for detector output.
    #[default]
    Ransac,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTriangulation {
    pub frame: usize,
    pub points: Vec<Option<Vector3<f64>>>,
    /// Mean over triangulated keypoints of the mean reprojection error
    /// against every confident view (px).
    pub reprojection_px: Option<f64>,
    /// Reprojection error above the threshold. Flagged frames are kept.
    pub flagged: bool,
}

fn confident_views<'a>(cameras: &'a CameraRig, frame: &FrameObservation, k: usize) -> Vec<View<'a>> {
    frame
        .views
        .iter()
        .filter(|v| v.detection_confidence > 0.0)
        .filter_map(|v| {
            let cam = &cameras.cameras[cameras.index_of(&v.camera)?];
            let o = v.keypoints.get(k).filter(|o| o.confidence > 0.0)?;
            Some(View { camera: cam, pixel: Vector2::new(o.u, o.v), confidence: o.confidence })
        })
        .collect()
}

/// Triangulates every frame and flags those whose reprojection error
/// exceeds `threshold_px`.
pub fn triangulate_sequence(
    cameras: &CameraRig,
    observations: &ObservationSet,
    mode: TriangulationMode,
    ransac: &RansacConfig,
    seed: u64,
    threshold_px: f64,
) -> Vec<FrameTriangulation> {
    observations
        .frames
        .par_iter()
        .map(|f| {
            let n_kp = f.views.first().map_or(0, |v| v.keypoints.len());
            let points = match mode {
                TriangulationMode::Ransac => triangulate_frame(cameras, f, None, ransac, seed),
                TriangulationMode::AllViews => (0..n_kp)
                    .map(|k| {
                        let vs = confident_views(cameras, f, k);
                        if vs.len() < 2 { None } else { triangulate_dlt(&vs).ok() }
                    })
                    .collect(),
            };
            let errs: Vec<f64> = points
                .iter()
                .enumerate()
                .filter_map(|(k, p)| Some(mean_reprojection_error(p.as_ref()?, &confident_views(cameras, f, k))))
                .collect();
            let reprojection_px = (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64);
            FrameTriangulation { frame: f.frame, points, reprojection_px, flagged: reprojection_px.is_some_and(|e| !(e <= threshold_px)) }
        })
        .collect()
}

/// Result of the warm start.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalInit {
    pub global_rot: Vector3<f64>,
    pub translation: Vector3<f64>,
    /// Present only when the scale was estimated.
    pub global_scale: Option<f64>,
}

/// Aligns the rest-pose keypoints of `shape` to triangulated points. With
/// `estimate_scale` the similarity scale becomes the global scale; otherwise
/// the shape's scale is kept and only rotation and translation are fitted.
/// Fewer than three finite points gives the identity with a warning.
pub fn init_global(
    rig: &RigModel,
    shape: &SubjectShape,
    triangulated: &[Option<Vector3<f64>>],
    estimate_scale: bool,
) -> Result<GlobalInit> {
    let shaped = apply_shape(rig, shape)?;
    let rest = pose_shaped(rig, &shaped, 1.0, &PoseState::rest(rig), false);
    let mut src = Vec::new();
    let mut dst = Vec::new();
    let mut w = Vec::new();
    for (k, t) in rig.keypoints().iter().zip(triangulated) {
        if let Some(t) = t.filter(|t| t.iter().all(|x| x.is_finite())) {
            src.push(rest.joints[k.joint]);
            dst.push(t);
            w.push(1.0);
        }
    }
    let identity = GlobalInit {
        global_rot: Vector3::zeros(),
        translation: Vector3::zeros(),
        global_scale: None,
    };
    let Ok(sim) = procrustes_similarity(&src, &dst, &w) else {
        log::warn!("warm start: {} usable keypoints, using identity", src.len());
        return Ok(identity);
    };
    let gamma = if estimate_scale { sim.scale } else { shape.global_scale };
    let n = src.len() as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / n;
    let mu_t = dst.iter().sum::<Vector3<f64>>() / n;
    Ok(GlobalInit {
        global_rot: log_rotation(&sim.rotation),
        translation: mu_t - sim.rotation * mu_s * gamma,
        global_scale: estimate_scale.then_some(gamma),
    })
}

#[cfg(test)]
mod tests {
    #[test]
    fn sequence_triangulation_flags_only_bad_frames() {
        use crate::synth::{generate_scene, NoiseSpec, SceneSpec};
        let mut s = generate_scene(&SceneSpec { cameras: 4, frames: 3, crop_cap: 8, noise: NoiseSpec::default(), ..SceneSpec::default() }).unwrap();
        for v in &mut s.observations.frames[1].views[..2] {
            v.keypoints.iter_mut().for_each(|k| k.u += 40.0);
        }
        for mode in [TriangulationMode::AllViews, TriangulationMode::Ransac] {
            let t = triangulate_sequence(&s.cameras, &s.observations, mode, &RansacConfig::default(), 0, 5.0);
            assert_eq!(t.iter().map(|f| f.flagged).collect::<Vec<_>>(), vec![false, true, false], "{mode:?}");
            assert!(t[0].reprojection_px.unwrap() < 1e-6);
        }
    }

    use super::*;
    use crate::model::quadruped::quadruped;
    use crate::model::rotation::rodrigues;
    use crate::objective::terms::loss_keypoint;
    use crate::synth::{generate_scene, SceneSpec};

    fn rest_keypoints(rig: &RigModel, shape: &SubjectShape, pose: &PoseState, gamma: f64) -> Vec<Vector3<f64>> {
        let shaped = apply_shape(rig, shape).unwrap();
        let f = pose_shaped(rig, &shaped, gamma, pose, false);
        rig.keypoints().iter().map(|k| f.joints[k.joint]).collect()
    }

    #[test]
    fn rest_observations_give_identity() {
        let rig = quadruped();
        let shape = SubjectShape::neutral(&rig);
        let kp: Vec<_> = rest_keypoints(&rig, &shape, &PoseState::rest(&rig), 1.0).into_iter().map(Some).collect();
        let g = init_global(&rig, &shape, &kp, true).unwrap();
        assert!(g.global_rot.norm() < 1e-8 && g.translation.norm() < 1e-8);
        assert!((g.global_scale.unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn recovers_similarity_exactly() {
        let rig = quadruped();
        let shape = SubjectShape::neutral(&rig);
        let pose = PoseState {
            global_rot: Vector3::new(0.3, -0.5, 1.1),
            translation: Vector3::new(0.2, -0.4, 0.3),
            ..PoseState::rest(&rig)
        };
        let kp: Vec<_> = rest_keypoints(&rig, &shape, &pose, 1.07).into_iter().map(Some).collect();
        let g = init_global(&rig, &shape, &kp, true).unwrap();
        assert!((rodrigues(&g.global_rot) - rodrigues(&pose.global_rot)).norm() < 1e-8);
        assert!((g.translation - pose.translation).norm() < 1e-8);
        assert!((g.global_scale.unwrap() - 1.07).abs() < 1e-8);
    }

    #[test]
    fn too_few_points_gives_identity() {
        let rig = quadruped();
        let shape = SubjectShape::neutral(&rig);
        let mut kp = vec![None; rig.n_keypoints()];
        kp[0] = Some(Vector3::new(1.0, 0.0, 0.0));
        let g = init_global(&rig, &shape, &kp, true).unwrap();
        assert_eq!(g.global_rot, Vector3::zeros());
        assert_eq!(g.global_scale, None);
    }

    #[test]
    fn warm_start_lowers_keypoint_loss() {
        let s = generate_scene(&SceneSpec { frames: 4, motion: crate::synth::Motion::walk(), ..SceneSpec::default() }).unwrap();
        let shape = SubjectShape::neutral(&s.rig);
        let weights: Vec<f64> = s.rig.keypoints().iter().map(|k| k.weight).collect();
        for f in &s.observations.frames {
            let tri = triangulate_frame(&s.cameras, f, None, &RansacConfig::default(), 0);
            assert!(tri.iter().all(Option::is_some));
            let g = init_global(&s.rig, &shape, &tri, false).unwrap();
            let rest = PoseState::rest(&s.rig);
            let warm = PoseState { global_rot: g.global_rot, translation: g.translation, ..rest.clone() };
            let loss = |p: &PoseState| -> f64 {
                let pts = rest_keypoints(&s.rig, &shape, p, 1.0);
                f.views
                    .iter()
                    .map(|v| {
                        let cam = &s.cameras.cameras[s.cameras.index_of(&v.camera).unwrap()];
                        loss_keypoint(cam, &pts, &v.keypoints, &weights, true).map_or(0.0, |l| l.value)
                    })
                    .sum()
            };
            assert!(loss(&warm) <= loss(&rest));
        }
    }
}
