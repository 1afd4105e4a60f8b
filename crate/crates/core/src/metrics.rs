//! Evaluation metrics. Inputs are in meters, outputs in mm and mm/frame.

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraRig, RansacConfig};
use crate::io::observations::ObservationSet;
use crate::model::rig::RigModel;
use crate::model::shape::{apply_shape, PoseState, SubjectShape};
use crate::model::skinning::pose_shaped;
use crate::render::{rasterize_hard, Raster};
use crate::solve::triangulate_frame;

type Points = Vec<Vector3<f64>>;

/// Mean joint distance of one frame in mm. Missing reference points are
/// skipped; `None` when none remain.
pub fn mpjpe_frame(pred: &[Vector3<f64>], reference: &[Option<Vector3<f64>>]) -> Option<f64> {
    let d: Vec<f64> = pred.iter().zip(reference).filter_map(|(p, r)| r.map(|r| (p - r).norm())).collect();
    (!d.is_empty()).then(|| 1000.0 * d.iter().sum::<f64>() / d.len() as f64)
}

/// Per-frame values and their mean over frames with a valid reference.
pub fn mpjpe(pred: &[Points], reference: &[Vec<Option<Vector3<f64>>>]) -> Result<(Vec<Option<f64>>, Option<f64>)> {
    if pred.len() != reference.len() {
        return Err(Error::dim("reference frames", pred.len(), reference.len()));
    }
    let per: Vec<Option<f64>> = pred.iter().zip(reference).map(|(p, r)| mpjpe_frame(p, r)).collect();
    let valid: Vec<f64> = per.iter().flatten().copied().collect();
    let mean = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
    Ok((per, mean))
}

/// Mean joint displacement between consecutive frames in mm/frame. `None`
/// frames break the chain; no difference spans a gap.
pub fn mpjtd(seq: &[Option<Points>]) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for w in seq.windows(2) {
        if let (Some(a), Some(b)) = (&w[0], &w[1]) {
            for (p, q) in a.iter().zip(b) {
                sum += (p - q).norm();
                count += 1;
            }
        }
    }
    (count > 0).then(|| 1000.0 * sum / count as f64)
}

/// Intersection over union. Two empty masks give 1, one empty mask gives 0.
pub fn silhouette_iou(a: &Raster<bool>, b: &Raster<bool>) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::dim("mask pixels", a.len(), b.len()));
    }
    let (mut i, mut u) = (0usize, 0usize);
    for (x, y) in a.data.iter().zip(&b.data) {
        i += (*x && *y) as usize;
        u += (*x || *y) as usize;
    }
    Ok(if u == 0 { 1.0 } else { i as f64 / u as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionStats {
    /// Mean pixel distance.
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

/// Per keypoint: distance between each labeled 2D observation and the
/// projection of the frame's 3D point, pooled over views and frames.
pub fn keypoint_reprojection_stats(
    observations: &ObservationSet,
    points: &[Vec<Option<Vector3<f64>>>],
    cameras: &CameraRig,
) -> Result<Vec<ReprojectionStats>> {
    if points.len() != observations.len() {
        return Err(Error::dim("3D point frames", observations.len(), points.len()));
    }
    let n_kp = points.iter().map(Vec::len).max().unwrap_or(0);
    let mut dists: Vec<Vec<f64>> = vec![Vec::new(); n_kp];
    for (f, pts) in observations.frames.iter().zip(points) {
        for v in &f.views {
            let Some(c) = cameras.index_of(&v.camera) else { continue };
            let cam = &cameras.cameras[c];
            for (k, (o, p)) in v.keypoints.iter().zip(pts).enumerate() {
                if o.confidence <= 0.0 {
                    continue;
                }
                if let Some(px) = p.and_then(|p| cam.project(&p)) {
                    dists[k].push((px - Vector2::new(o.u, o.v)).norm());
                }
            }
        }
    }
    Ok(dists
        .into_iter()
        .map(|d| {
            let n = d.len();
            if n == 0 {
                return ReprojectionStats { mean: 0.0, std: 0.0, count: 0 };
            }
            let mean = d.iter().sum::<f64>() / n as f64;
            let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            ReprojectionStats { mean, std: var.sqrt(), count: n }
        })
        .collect())
}

/// Posed keypoint positions of every frame.
pub fn posed_keypoints(rig: &RigModel, shape: &SubjectShape, poses: &[PoseState]) -> Result<Vec<Points>> {
    let shaped = apply_shape(rig, shape)?;
    Ok(poses
        .iter()
        .map(|p| {
            let f = pose_shaped(rig, &shaped, shape.global_scale, p, false);
            rig.keypoints().iter().map(|k| f.joints[k.joint]).collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_frame_mpjpe_mm: Vec<Option<f64>>,
    pub mpjpe_mm: Option<f64>,
    pub mpjtd_mm_per_frame: Option<f64>,
    /// Per camera id, IoU per frame (`None` when that camera-frame has no mask).
    pub iou: BTreeMap<String, Vec<Option<f64>>>,
    /// Mean over all available camera-frame IoUs.
    pub mean_iou: Option<f64>,
    /// Per keypoint, reprojection error of the reference points (px).
    pub reprojection: Vec<ReprojectionStats>,
}

/// Full evaluation of a fitted sequence. Without `reference`, the reference
/// points are RANSAC triangulations of the observations.
pub fn evaluate_fit(
    rig: &RigModel,
    shape: &SubjectShape,
    poses: &[PoseState],
    converged: Option<&[bool]>,
    cameras: &CameraRig,
    observations: &ObservationSet,
    reference: Option<&[Vec<Option<Vector3<f64>>>]>,
    seed: u64,
) -> Result<EvalReport> {
    if poses.len() != observations.len() {
        return Err(Error::dim("poses", observations.len(), poses.len()));
    }
    let pred = posed_keypoints(rig, shape, poses)?;
    let reference: Vec<Vec<Option<Vector3<f64>>>> = match reference {
        Some(r) => r.to_vec(),
        None => observations
            .frames
            .iter()
            .map(|f| triangulate_frame(cameras, f, None, &RansacConfig::default(), seed))
            .collect(),
    };
    let mut masked_pred = pred.clone();
    let valid = |n: usize| converged.is_none_or(|c| c[n]);
    let mut ref_valid = reference.clone();
    for (n, r) in ref_valid.iter_mut().enumerate() {
        if !valid(n) {
            r.iter_mut().for_each(|p| *p = None);
        }
    }
    let (per_frame, mean) = mpjpe(&masked_pred, &ref_valid)?;
    let seq: Vec<Option<Points>> = masked_pred.drain(..).enumerate().map(|(n, p)| valid(n).then_some(p)).collect();

    let shaped = apply_shape(rig, shape)?;
    let mut iou: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    let mut all = Vec::new();
    for (n, f) in observations.frames.iter().enumerate() {
        let posed = pose_shaped(rig, &shaped, shape.global_scale, &poses[n], true);
        for v in &f.views {
            let (Some(crop), Some(mask), Some(c)) = (&v.crop, &v.mask, cameras.index_of(&v.camera)) else {
                continue;
            };
            let hard = rasterize_hard(&cameras.cameras[c], &posed.vertices, rig.faces(), crop);
            let x = silhouette_iou(&hard, mask)?;
            iou.entry(v.camera.clone()).or_insert_with(|| vec![None; observations.len()])[n] = Some(x);
            all.push(x);
        }
    }
    Ok(EvalReport {
        per_frame_mpjpe_mm: per_frame,
        mpjpe_mm: mean,
        mpjtd_mm_per_frame: mpjtd(&seq),
        iou,
        mean_iou: (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64),
        reprojection: keypoint_reprojection_stats(observations, &reference, cameras)?,
    })
}
