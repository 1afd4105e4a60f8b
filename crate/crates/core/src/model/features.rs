//! Per-frame pose features for downstream behavior models.

use nalgebra::Vector3;

use super::rig::RigModel;
use super::rotation::rodrigues;
use super::shape::{apply_shape, PoseState, SubjectShape};
use super::skinning::pose_shaped;
use crate::error::{Error, Result};
use crate::geometry::Camera;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Row-major rotation matrix of every posing joint (9 values each).
    RotMatrix,
    /// Posed keypoint joints (3 values each, meters).
    Kp3d,
    /// Keypoint joints projected into one camera (2 values each, pixels).
    /// Points behind the camera yield NaN.
    Kp2d,
    /// All posed vertices (3 values each, meters).
    Mesh,
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rot-matrix" => Ok(Self::RotMatrix),
            "kp3d" => Ok(Self::Kp3d),
            "kp2d" => Ok(Self::Kp2d),
            "mesh" => Ok(Self::Mesh),
            _ => Err(Error::InvalidArgument(format!("unknown feature kind `{s}`"))),
        }
    }
}

/// Flattened feature vector per frame.
pub fn export_pose_features(
    rig: &RigModel,
    shape: &SubjectShape,
    poses: &[PoseState],
    camera: Option<&Camera>,
    kind: FeatureKind,
) -> Result<Vec<Vec<f64>>> {
    if kind == FeatureKind::Kp2d && camera.is_none() {
        return Err(Error::InvalidArgument("kp2d features need a camera".into()));
    }
    let shaped = apply_shape(rig, shape)?;
    poses
        .iter()
        .map(|pose| {
            pose.check(rig)?;
            Ok(match kind {
                FeatureKind::RotMatrix => pose
                    .theta
                    .iter()
                    .flat_map(|t| {
                        let r = rodrigues(t);
                        (0..9).map(move |k| r[(k / 3, k % 3)])
                    })
                    .collect(),
                FeatureKind::Mesh => {
                    let f = pose_shaped(rig, &shaped, shape.global_scale, pose, true);
                    f.vertices.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect()
                }
                FeatureKind::Kp3d | FeatureKind::Kp2d => {
                    let f = pose_shaped(rig, &shaped, shape.global_scale, pose, false);
                    let kps: Vec<Vector3<f64>> = rig.keypoints().iter().map(|k| f.joints[k.joint]).collect();
                    match camera {
                        Some(cam) if kind == FeatureKind::Kp2d => kps
                            .iter()
                            .flat_map(|p| match cam.project(p) {
                                Some(px) => [px.x, px.y],
                                None => [f64::NAN, f64::NAN],
                            })
                            .collect(),
                        _ => kps.iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
                    }
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::quadruped::quadruped;

    #[test]
    fn rest_rotations_are_identity() {
        let rig = quadruped();
        let shape = SubjectShape::neutral(&rig);
        let f = export_pose_features(&rig, &shape, &[PoseState::rest(&rig)], None, FeatureKind::RotMatrix).unwrap();
        assert_eq!(f[0].len(), 9 * rig.n_posing());
        for chunk in f[0].chunks(9) {
            assert_eq!(chunk, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn kp3d_at_rest_is_shaped_joints_under_global_transform() {
        let rig = quadruped();
        let shape = SubjectShape::neutral(&rig);
        let mut pose = PoseState::rest(&rig);
        pose.translation = Vector3::new(0.5, -0.2, 0.1);
        let f = export_pose_features(&rig, &shape, &[pose], None, FeatureKind::Kp3d).unwrap();
        for (k, kp) in rig.keypoints().iter().enumerate() {
            let j = rig.joints_rest()[kp.joint] + Vector3::new(0.5, -0.2, 0.1);
            assert!((Vector3::from_column_slice(&f[0][3 * k..3 * k + 3]) - j).norm() < 1e-12);
        }
    }

    #[test]
    fn kp2d_is_projected_kp3d() {
        let rig = quadruped();
        let shape = SubjectShape::neutral(&rig);
        let mut pose = PoseState::rest(&rig);
        pose.theta[1] = Vector3::new(0.2, 0.1, -0.3);
        let cam = Camera::look_at("c", Vector3::new(2.0, 1.0, 1.0), Vector3::zeros(), Vector3::z(), 900.0, 640, 480).unwrap();
        let k3 = export_pose_features(&rig, &shape, &[pose.clone()], None, FeatureKind::Kp3d).unwrap();
        let k2 = export_pose_features(&rig, &shape, &[pose], Some(&cam), FeatureKind::Kp2d).unwrap();
        for k in 0..rig.n_keypoints() {
            let p = cam.project(&Vector3::from_column_slice(&k3[0][3 * k..3 * k + 3])).unwrap();
            assert_eq!(&k2[0][2 * k..2 * k + 2], p.as_slice());
        }
        assert!(export_pose_features(&rig, &shape, &[], None, FeatureKind::Kp2d).is_err());
    }
}
