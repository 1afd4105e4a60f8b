//! Forward kinematics, linear blend skinning and the global similarity
//! transform, with a hand-written reverse pass.

use nalgebra::{Matrix3, Vector3};

use super::rig::RigModel;
use super::rotation::{rodrigues, rodrigues_backward};
use super::shape::{apply_shape, PoseState, ShapedRig, SubjectShape};
use crate::error::Result;

/// Output of the posing model for one frame, with the intermediates the
/// reverse pass needs.
#[derive(Debug, Clone)]
pub struct PosedFrame {
    /// Posed vertices `V_P`; empty when vertices were not requested.
    pub vertices: Vec<Vector3<f64>>,
    /// Posed joints `J_P`.
    pub joints: Vec<Vector3<f64>>,
    local_rot: Vec<Matrix3<f64>>,
    world_rot: Vec<Matrix3<f64>>,
    world_pos: Vec<Vector3<f64>>,
    skinned: Vec<Vector3<f64>>,
    global_rot: Matrix3<f64>,
}

impl PosedFrame {
    pub fn is_finite(&self) -> bool {
        self.joints
            .iter()
            .chain(&self.vertices)
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Gradient of a scalar with respect to one frame's pose and the global scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseGradient {
    pub theta: Vec<Vector3<f64>>,
    pub global_rot: Vector3<f64>,
    pub translation: Vector3<f64>,
    pub global_scale: f64,
}

impl PoseGradient {
    pub fn zeros(n_posing: usize) -> Self {
        Self {
            theta: vec![Vector3::zeros(); n_posing],
            global_rot: Vector3::zeros(),
            translation: Vector3::zeros(),
            global_scale: 0.0,
        }
    }
}

/// Poses an already shaped template.
pub fn pose_shaped(
    rig: &RigModel,
    shaped: &ShapedRig,
    global_scale: f64,
    pose: &PoseState,
    with_vertices: bool,
) -> PosedFrame {
    let nj = rig.n_joints();
    let mut local_rot = vec![Matrix3::identity(); nj];
    for (slot, &j) in rig.posing_joints().iter().enumerate() {
        local_rot[j] = rodrigues(&pose.theta[slot]);
    }
    let mut world_rot = vec![Matrix3::identity(); nj];
    let mut world_pos = vec![Vector3::zeros(); nj];
    for &j in rig.joint_order() {
        match rig.parent(j) {
            None => {
                world_rot[j] = local_rot[j];
                world_pos[j] = shaped.joints[j];
            }
            Some(p) => {
                world_rot[j] = world_rot[p] * local_rot[j];
                world_pos[j] = world_pos[p] + world_rot[p] * (shaped.joints[j] - shaped.joints[p]);
            }
        }
    }
    let global_rot = rodrigues(&pose.global_rot);
    let sr = global_rot * global_scale;
    let joints = world_pos.iter().map(|p| sr * p + pose.translation).collect();

    let (skinned, vertices) = if with_vertices {
        let skinned: Vec<Vector3<f64>> = shaped
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| {
                rig.skin_weights(i).iter().fold(Vector3::zeros(), |acc, &(j, w)| {
                    acc + (world_rot[j] * (v - shaped.joints[j]) + world_pos[j]) * w
                })
            })
            .collect();
        let vertices = skinned.iter().map(|v| sr * v + pose.translation).collect();
        (skinned, vertices)
    } else {
        (Vec::new(), Vec::new())
    };

    PosedFrame {
        vertices,
        joints,
        local_rot,
        world_rot,
        world_pos,
        skinned,
        global_rot,
    }
}

/// Reverse pass of [`pose_shaped`].
///
/// Accumulates into `grad_shaped_vertices` / `grad_shaped_joints` (for the
/// shape parameters) and returns the pose gradient.
#[allow(clippy::too_many_arguments)]
pub fn pose_backward(
    rig: &RigModel,
    shaped: &ShapedRig,
    global_scale: f64,
    pose: &PoseState,
    frame: &PosedFrame,
    grad_vertices: Option<&[Vector3<f64>]>,
    grad_joints: &[Vector3<f64>],
    grad_shaped_vertices: &mut [Vector3<f64>],
    grad_shaped_joints: &mut [Vector3<f64>],
) -> PoseGradient {
    let nj = rig.n_joints();
    let r = frame.global_rot;
    let rt_scaled = r.transpose() * global_scale;
    let mut out = PoseGradient::zeros(rig.n_posing());
    let mut grad_r = Matrix3::zeros();

    let mut g_world_rot = vec![Matrix3::zeros(); nj];
    let mut g_world_pos = vec![Vector3::zeros(); nj];

    for (j, g) in grad_joints.iter().enumerate() {
        if *g == Vector3::zeros() {
            continue;
        }
        out.translation += g;
        let p = frame.world_pos[j];
        out.global_scale += g.dot(&(r * p));
        grad_r += g * p.transpose() * global_scale;
        g_world_pos[j] += rt_scaled * g;
    }

    if let Some(gv) = grad_vertices {
        debug_assert_eq!(gv.len(), frame.skinned.len());
        for (i, g) in gv.iter().enumerate() {
            if *g == Vector3::zeros() {
                continue;
            }
            let s = frame.skinned[i];
            out.translation += g;
            out.global_scale += g.dot(&(r * s));
            grad_r += g * s.transpose() * global_scale;
            let gs = rt_scaled * g;
            let v = shaped.vertices[i];
            for &(j, w) in rig.skin_weights(i) {
                let gw = gs * w;
                let rel = v - shaped.joints[j];
                let rg_t = frame.world_rot[j].transpose();
                grad_shaped_vertices[i] += rg_t * gw;
                g_world_rot[j] += gw * rel.transpose();
                grad_shaped_joints[j] -= rg_t * gw;
                g_world_pos[j] += gw;
            }
        }
    }

    for &j in rig.joint_order().iter().rev() {
        let g_local = match rig.parent(j) {
            None => {
                grad_shaped_joints[j] += g_world_pos[j];
                g_world_rot[j]
            }
            Some(p) => {
                let gp = g_world_pos[j];
                let d = shaped.joints[j] - shaped.joints[p];
                let rp_t = frame.world_rot[p].transpose();
                g_world_pos[p] += gp;
                let contrib = gp * d.transpose() + g_world_rot[j] * frame.local_rot[j].transpose();
                g_world_rot[p] += contrib;
                let back = rp_t * gp;
                grad_shaped_joints[j] += back;
                grad_shaped_joints[p] -= back;
                rp_t * g_world_rot[j]
            }
        };
        if let Some(slot) = rig.posing_slot(j) {
            out.theta[slot] = rodrigues_backward(&pose.theta[slot], &g_local);
        }
    }
    out.global_rot = rodrigues_backward(&pose.global_rot, &grad_r);
    out
}

/// Posed vertices and joints `gamma * R * LBS(theta; V(xi), J(alpha), W) + t`.
pub fn pose_model(
    rig: &RigModel,
    shape: &SubjectShape,
    pose: &PoseState,
) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)> {
    pose.check(rig)?;
    let shaped = apply_shape(rig, shape)?;
    let f = pose_shaped(rig, &shaped, shape.global_scale, pose, true);
    Ok((f.vertices, f.joints))
}
