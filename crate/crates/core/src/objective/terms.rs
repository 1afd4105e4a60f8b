//! Individual loss terms. Each returns its value together with the
//! gradient with respect to its direct inputs.

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::io::observations::KeypointObs;
use crate::model::rig::RigModel;
use crate::model::rotation::{angular_velocity, angular_velocity_jacobians};
use crate::render::Raster;

/// Confidence-weighted keypoint loss of one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointLoss {
    /// Weighted mean squared pixel error.
    pub value: f64,
    /// Gradient with respect to each keypoint's 3D position.
    pub grad: Vec<Vector3<f64>>,
}

/// `sum(w~ |proj(J) - P|^2) / sum(w~)` with `w~ = w_k * confidence`.
///
/// `points` are the 3D keypoint positions (one per observation). Keypoints
/// behind the camera are skipped. Returns `None` when the total weight is
/// zero, in which case the camera counts as unobserved.
pub fn loss_keypoint(
    camera: &Camera,
    points: &[Vector3<f64>],
    observed: &[KeypointObs],
    weights: &[f64],
    use_confidence: bool,
) -> Option<KeypointLoss> {
    let mut total_w = 0.0;
    let mut sum = 0.0;
    let mut grad = vec![Vector3::zeros(); points.len()];
    let mut parts = Vec::with_capacity(points.len());
    for (k, ((p, obs), w)) in points.iter().zip(observed).zip(weights).enumerate() {
        let conf = if use_confidence {
            obs.confidence
        } else if obs.confidence > 0.0 {
            1.0
        } else {
            0.0
        };
        let wt = w * conf;
        if wt <= 0.0 {
            continue;
        }
        let Some((px, j)) = camera.project_with_jacobian(p) else {
            continue;
        };
        let r = px - Vector2::new(obs.u, obs.v);
        total_w += wt;
        sum += wt * r.norm_squared();
        parts.push((k, wt, r, j));
    }
    if total_w <= 0.0 {
        return None;
    }
    for (k, wt, r, j) in parts {
        grad[k] = j.transpose() * r * (2.0 * wt / total_w);
    }
    Some(KeypointLoss {
        value: sum / total_w,
        grad,
    })
}

/// Mean squared difference between rendered and observed masks, active
/// only while the camera's keypoint loss is below `sigma_kp`.
///
/// Returns the value and the gradient with respect to the rendered mask
/// (`None` when gated off).
pub fn loss_silhouette(
    rendered: &Raster<f64>,
    observed: &Raster<bool>,
    keypoint_loss: f64,
    sigma_kp: f64,
) -> Result<(f64, Option<Raster<f64>>)> {
    if !rendered.same_shape(observed) {
        return Err(Error::InvalidArgument(format!(
            "silhouette shapes differ: rendered {}x{}, observed {}x{}",
            rendered.width, rendered.height, observed.width, observed.height
        )));
    }
    if !(keypoint_loss < sigma_kp) {
        return Ok((0.0, None));
    }
    let n = rendered.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(rendered.len());
    for (r, o) in rendered.data.iter().zip(&observed.data) {
        let d = r - if *o { 1.0 } else { 0.0 };
        value += d * d;
        grad.push(2.0 * d / n);
    }
    Ok((
        value / n,
        Some(Raster {
            width: rendered.width,
            height: rendered.height,
            data: grad,
        }),
    ))
}

/// Weighted mean of per-joint axis-angle norms.
pub fn loss_pose_prior(theta: &[Vector3<f64>], weights: &[f64]) -> (f64, Vec<Vector3<f64>>) {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return (0.0, vec![Vector3::zeros(); theta.len()]);
    }
    let mut value = 0.0;
    let grad = theta
        .iter()
        .zip(weights)
        .map(|(t, w)| {
            let n = t.norm();
            value += w * n;
            if n > 0.0 {
                t * (w / (n * total))
            } else {
                Vector3::zeros()
            }
        })
        .collect();
    (value / total, grad)
}

/// Squared hinge penalty on bone scales outside `[alpha_min, alpha_max]`.
pub fn loss_bones(alpha: &[f64], alpha_min: f64, alpha_max: f64) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let grad = alpha
        .iter()
        .map(|&a| {
            let e = (a - alpha_max).max(0.0) + (alpha_min - a).max(0.0);
            value += e * e;
            if a > alpha_max {
                2.0 * e
            } else if a < alpha_min {
                -2.0 * e
            } else {
                0.0
            }
        })
        .collect();
    (value, grad)
}

/// Sum over directed mesh edges of squared differences of vertex offsets
/// `A xi`; each undirected edge counts twice.
pub fn loss_offset_smoothness(rig: &RigModel, offsets: &[Vector3<f64>]) -> (f64, Vec<Vector3<f64>>) {
    let sym = rig.symmetry();
    let d: Vec<Vector3<f64>> = (0..rig.n_vertices()).map(|i| sym.offset(i, offsets)).collect();
    let mut value = 0.0;
    let mut gv = vec![Vector3::zeros(); d.len()];
    for &(i, j) in rig.mesh_edges() {
        let diff = d[i] - d[j];
        value += 2.0 * diff.norm_squared();
        gv[i] += diff * 4.0;
        gv[j] -= diff * 4.0;
    }
    let mut grad = vec![Vector3::zeros(); offsets.len()];
    for (i, g) in gv.iter().enumerate() {
        sym.accumulate(i, g, &mut grad);
    }
    (value, grad)
}

/// Gradient of [`loss_temporal`] with respect to each frame's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalGradient {
    pub theta: Vec<Vec<Vector3<f64>>>,
    pub global_rot: Vec<Vector3<f64>>,
    pub translation: Vec<Vector3<f64>>,
}

fn loss_angular(seq: &[&[Vector3<f64>]], dt: f64, grad: &mut [Vec<Vector3<f64>>]) -> f64 {
    let t = seq.len();
    let j = seq[0].len();
    if j == 0 {
        return 0.0;
    }
    let norm = ((t - 1) * j) as f64;
    let mut value = 0.0;
    for n in 0..t - 1 {
        for k in 0..j {
            let (a, b) = (&seq[n][k], &seq[n + 1][k]);
            let w = angular_velocity(a, b, dt);
            value += w.norm_squared();
            let (j0, j1) = angular_velocity_jacobians(a, b, dt);
            let gw = w * (2.0 / norm);
            grad[n][k] += j0.transpose() * gw;
            grad[n + 1][k] += j1.transpose() * gw;
        }
    }
    value / norm
}

/// Mean squared angular velocity of joint rotations and of the global
/// rotation, plus the mean squared per-frame translation step.
pub fn loss_temporal(
    theta: &[Vec<Vector3<f64>>],
    global_rot: &[Vector3<f64>],
    translation: &[Vector3<f64>],
    dt: f64,
) -> Result<(f64, TemporalGradient)> {
    let t = theta.len();
    if t < 2 || global_rot.len() != t || translation.len() != t {
        return Err(Error::InvalidArgument(format!(
            "temporal loss needs >= 2 frames of equal length, got {t}/{}/{}",
            global_rot.len(),
            translation.len()
        )));
    }
    let mut grad = TemporalGradient {
        theta: theta.iter().map(|f| vec![Vector3::zeros(); f.len()]).collect(),
        global_rot: vec![Vector3::zeros(); t],
        translation: vec![Vector3::zeros(); t],
    };
    let seq: Vec<&[Vector3<f64>]> = theta.iter().map(|f| f.as_slice()).collect();
    let mut value = loss_angular(&seq, dt, &mut grad.theta);

    let rseq: Vec<&[Vector3<f64>]> = global_rot.iter().map(std::slice::from_ref).collect();
    let mut gr: Vec<Vec<Vector3<f64>>> = vec![vec![Vector3::zeros()]; t];
    value += loss_angular(&rseq, dt, &mut gr);
    for (g, r) in grad.global_rot.iter_mut().zip(gr) {
        *g = r[0];
    }

    let m = (t - 1) as f64;
    for n in 0..t - 1 {
        let d = translation[n + 1] - translation[n];
        value += d.norm_squared() / m;
        grad.translation[n + 1] += d * (2.0 / m);
        grad.translation[n] -= d * (2.0 / m);
    }
    Ok((value, grad))
}

/// Masked sum of per-pixel L2 color differences. Returns the value and the
/// gradient with respect to the rendered image.
pub fn loss_photometric(
    rendered: &Raster<Vector3<f64>>,
    observed: &Raster<Vector3<f64>>,
    mask: &Raster<bool>,
) -> Result<(f64, Raster<Vector3<f64>>)> {
    if !rendered.same_shape(observed) || !rendered.same_shape(mask) {
        return Err(Error::InvalidArgument("photometric inputs differ in shape".into()));
    }
    let mut value = 0.0;
    let grad = rendered
        .data
        .iter()
        .zip(&observed.data)
        .zip(&mask.data)
        .map(|((r, o), m)| {
            if !m {
                return Vector3::zeros();
            }
            let d = r - o;
            let n = d.norm();
            value += n;
            if n > 0.0 {
                d / n
            } else {
                Vector3::zeros()
            }
        })
        .collect();
    Ok((
        value,
        Raster {
            width: rendered.width,
            height: rendered.height,
            data: grad,
        },
    ))
}
