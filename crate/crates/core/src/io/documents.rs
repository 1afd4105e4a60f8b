//! Calibration, shape, pose, 3D keypoint and feature files.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::format::{parse_error, read_document, write_document};
use crate::error::Result;
use crate::geometry::{Camera, CameraRig};
use crate::model::{PoseState, RigModel, SubjectShape};

pub const CALIBRATION: &str = "calibration";
pub const SHAPE: &str = "shape";
pub const POSES: &str = "poses";
pub const KEYPOINTS_3D: &str = "keypoints-3d";
pub const FEATURES: &str = "pose-features";

fn v3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn m3(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]])
}

fn from_m3(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[r][c])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRecord {
    id: String,
    width: u32,
    height: u32,
    /// Row-major.
    intrinsics: [[f64; 3]; 3],
    /// World to camera, row-major.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    distortion: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationRecord {
    session: String,
    fps: f64,
    cameras: Vec<CameraRecord>,
}

pub fn save_calibration(path: &Path, rig: &CameraRig) -> Result<()> {
    let rec = CalibrationRecord {
        session: rig.session.clone(),
        fps: rig.fps,
        cameras: rig
            .cameras
            .iter()
            .map(|c| CameraRecord {
                id: c.id.clone(),
                width: c.width,
                height: c.height,
                intrinsics: m3(&c.intrinsics),
                rotation: m3(&c.rotation),
                translation: v3(&c.translation),
                distortion: c.distortion,
            })
            .collect(),
    };
    write_document(path, CALIBRATION, "m,px", &rec)
}

pub fn load_calibration(path: &Path) -> Result<CameraRig> {
    let rec: CalibrationRecord = read_document(path, CALIBRATION, "m,px")?;
    let cameras = rec
        .cameras
        .iter()
        .enumerate()
        .map(|(i, c)| {
            Camera::new(&c.id, from_m3(&c.intrinsics), from_m3(&c.rotation), Vector3::from(c.translation), c.width, c.height, c.distortion)
                .map_err(|e| parse_error(path, format!("data.cameras[{i}]"), "camera", e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    CameraRig::new(cameras, rec.fps, rec.session).map_err(|e| parse_error(path, "data", "cameras", e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeRecord {
    global_scale: f64,
    bone_scales: Vec<f64>,
    vertex_offsets: Vec<[f64; 3]>,
    vertex_colors_raw: Vec<[f64; 3]>,
}

pub fn save_shape(path: &Path, shape: &SubjectShape) -> Result<()> {
    let rec = ShapeRecord {
        global_scale: shape.global_scale,
        bone_scales: shape.bone_scales.clone(),
        vertex_offsets: shape.vertex_offsets.iter().map(v3).collect(),
        vertex_colors_raw: shape.vertex_colors_raw.iter().map(v3).collect(),
    };
    write_document(path, SHAPE, "m", &rec)
}

/// Loads a shape and checks its dimensions against `rig` when given.
pub fn load_shape(path: &Path, rig: Option<&RigModel>) -> Result<SubjectShape> {
    let rec: ShapeRecord = read_document(path, SHAPE, "m")?;
    let shape = SubjectShape {
        global_scale: rec.global_scale,
        bone_scales: rec.bone_scales,
        vertex_offsets: rec.vertex_offsets.into_iter().map(Vector3::from).collect(),
        vertex_colors_raw: rec.vertex_colors_raw.into_iter().map(Vector3::from).collect(),
    };
    if let Some(rig) = rig {
        shape.check(rig).map_err(|e| parse_error(path, "data", "shape", e.to_string()))?;
    }
    Ok(shape)
}

/// Pose per frame with its convergence flag.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub frames: Vec<usize>,
    pub poses: Vec<PoseState>,
    pub converged: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRecord {
    frame: usize,
    theta: Vec<[f64; 3]>,
    r: [f64; 3],
    t: [f64; 3],
    converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PosesRecord {
    frames: Vec<PoseRecord>,
}

pub fn save_poses(path: &Path, seq: &PoseSequence) -> Result<()> {
    let rec = PosesRecord {
        frames: seq
            .frames
            .iter()
            .zip(&seq.poses)
            .zip(&seq.converged)
            .map(|((&frame, p), &converged)| PoseRecord {
                frame,
                theta: p.theta.iter().map(v3).collect(),
                r: v3(&p.global_rot),
                t: v3(&p.translation),
                converged,
            })
            .collect(),
    };
    write_document(path, POSES, "rad,m", &rec)
}

pub fn load_poses(path: &Path, rig: Option<&RigModel>) -> Result<PoseSequence> {
    let rec: PosesRecord = read_document(path, POSES, "rad,m")?;
    let mut seq = PoseSequence { frames: Vec::new(), poses: Vec::new(), converged: Vec::new() };
    for (i, f) in rec.frames.into_iter().enumerate() {
        let pose = PoseState {
            theta: f.theta.into_iter().map(Vector3::from).collect(),
            global_rot: Vector3::from(f.r),
            translation: Vector3::from(f.t),
        };
        if let Some(rig) = rig {
            pose.check(rig).map_err(|e| parse_error(path, format!("data.frames[{i}]"), "theta", e.to_string()))?;
        }
        seq.frames.push(f.frame);
        seq.poses.push(pose);
        seq.converged.push(f.converged);
    }
    Ok(seq)
}

/// 3D keypoints per frame; `None` marks points that could not be
/// triangulated.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoints3d {
    pub frames: Vec<usize>,
    pub points: Vec<Vec<Option<Vector3<f64>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Keypoints3dFrame {
    frame: usize,
    points: Vec<Option<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Keypoints3dRecord {
    names: Vec<String>,
    frames: Vec<Keypoints3dFrame>,
}

pub fn save_keypoints_3d(path: &Path, names: &[String], kp: &Keypoints3d) -> Result<()> {
    let rec = Keypoints3dRecord {
        names: names.to_vec(),
        frames: kp
            .frames
            .iter()
            .zip(&kp.points)
            .map(|(&frame, pts)| Keypoints3dFrame { frame, points: pts.iter().map(|p| p.as_ref().map(v3)).collect() })
            .collect(),
    };
    write_document(path, KEYPOINTS_3D, "m", &rec)
}

/// Returns the keypoint names and the points.
pub fn load_keypoints_3d(path: &Path) -> Result<(Vec<String>, Keypoints3d)> {
    let rec: Keypoints3dRecord = read_document(path, KEYPOINTS_3D, "m")?;
    let n = rec.names.len();
    let mut kp = Keypoints3d { frames: Vec::new(), points: Vec::new() };
    for (i, f) in rec.frames.into_iter().enumerate() {
        if f.points.len() != n {
            return Err(parse_error(path, format!("data.frames[{i}]"), "points", format!("expected {n} points, found {}", f.points.len())));
        }
        kp.frames.push(f.frame);
        kp.points.push(f.points.into_iter().map(|p| p.map(Vector3::from)).collect());
    }
    Ok((rec.names, kp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureFrame {
    frame: usize,
    /// Non-finite values (points behind the camera) are null.
    values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeaturesRecord {
    kind: String,
    camera: Option<String>,
    frames: Vec<FeatureFrame>,
}

/// Units string for a feature kind name.
pub fn feature_units(kind: &str) -> &'static str {
    match kind {
        "kp2d" => "px",
        "rot-matrix" => "1",
        _ => "m",
    }
}

pub fn save_features(path: &Path, kind: &str, camera: Option<&str>, frames: &[usize], values: &[Vec<f64>]) -> Result<()> {
    let rec = FeaturesRecord {
        kind: kind.into(),
        camera: camera.map(str::to_string),
        frames: frames
            .iter()
            .zip(values)
            .map(|(&frame, v)| FeatureFrame { frame, values: v.iter().map(|x| x.is_finite().then_some(*x)).collect() })
            .collect(),
    };
    write_document(path, FEATURES, feature_units(kind), &rec)
}
