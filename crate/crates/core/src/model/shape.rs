use nalgebra::Vector3;

use super::rig::RigModel;
use crate::error::{Error, Result};

/// Per-individual adaptation of the template.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectShape {
    /// One scale per bone-scale group.
    pub bone_scales: Vec<f64>,
    /// One offset per symmetric vertex group (meters).
    pub vertex_offsets: Vec<Vector3<f64>>,
    /// Per-vertex color logits; realized colors are `255 * sigmoid(raw)`.
    pub vertex_colors_raw: Vec<Vector3<f64>>,
    pub global_scale: f64,
}

impl SubjectShape {
    /// Identity adaptation with mid-gray colors.
    pub fn neutral(rig: &RigModel) -> Self {
        Self {
            bone_scales: vec![1.0; rig.n_bone_groups()],
            vertex_offsets: vec![Vector3::zeros(); rig.n_offset_groups()],
            vertex_colors_raw: vec![Vector3::zeros(); rig.n_vertices()],
            global_scale: 1.0,
        }
    }

    pub fn check(&self, rig: &RigModel) -> Result<()> {
        if self.bone_scales.len() != rig.n_bone_groups() {
            return Err(Error::dim("bone_scales", rig.n_bone_groups(), self.bone_scales.len()));
        }
        if self.vertex_offsets.len() != rig.n_offset_groups() {
            return Err(Error::dim("vertex_offsets", rig.n_offset_groups(), self.vertex_offsets.len()));
        }
        if self.vertex_colors_raw.len() != rig.n_vertices() {
            return Err(Error::dim("vertex_colors_raw", rig.n_vertices(), self.vertex_colors_raw.len()));
        }
        Ok(())
    }

    /// Realized RGB colors in `[0, 255]`.
    pub fn colors(&self) -> Vec<Vector3<f64>> {
        self.vertex_colors_raw.iter().map(|c| c.map(scaled_sigmoid)).collect()
    }
}

/// `255 * sigmoid(x)`.
#[inline]
pub fn scaled_sigmoid(x: f64) -> f64 {
    255.0 / (1.0 + (-x).exp())
}

/// Inverse of [`scaled_sigmoid`] for values strictly inside `(0, 255)`.
#[inline]
pub fn scaled_logit(c: f64) -> f64 {
    let p = (c / 255.0).clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

/// Articulation of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseState {
    /// Axis-angle per posing joint, in `RigModel::posing_joints` order.
    pub theta: Vec<Vector3<f64>>,
    pub global_rot: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl PoseState {
    pub fn rest(rig: &RigModel) -> Self {
        Self {
            theta: vec![Vector3::zeros(); rig.n_posing()],
            global_rot: Vector3::zeros(),
            translation: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta
            .iter()
            .chain([&self.global_rot, &self.translation])
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn check(&self, rig: &RigModel) -> Result<()> {
        if self.theta.len() != rig.n_posing() {
            return Err(Error::dim("theta", rig.n_posing(), self.theta.len()));
        }
        Ok(())
    }
}

/// Template after subject adaptation: `V(xi)` and `J(alpha)`.
#[derive(Debug, Clone)]
pub struct ShapedRig {
    pub vertices: Vec<Vector3<f64>>,
    pub joints: Vec<Vector3<f64>>,
}

/// Applies vertex offsets and bone scales to the template.
///
/// Bone scales multiply each parent-to-child offset; descendants follow
/// their parent.
pub fn apply_shape(rig: &RigModel, shape: &SubjectShape) -> Result<ShapedRig> {
    if shape.bone_scales.len() != rig.n_bone_groups() {
        return Err(Error::dim("bone_scales", rig.n_bone_groups(), shape.bone_scales.len()));
    }
    if shape.vertex_offsets.len() != rig.n_offset_groups() {
        return Err(Error::dim("vertex_offsets", rig.n_offset_groups(), shape.vertex_offsets.len()));
    }
    let sym = rig.symmetry();
    let vertices = rig
        .vertices_rest()
        .iter()
        .enumerate()
        .map(|(i, v)| v + sym.offset(i, &shape.vertex_offsets))
        .collect();

    let rest = rig.joints_rest();
    let mut joints = rest.to_vec();
    for &j in rig.joint_order() {
        if let Some(p) = rig.parent(j) {
            let s = rig.bone_scale_group_of(j).map_or(1.0, |g| shape.bone_scales[g]);
            joints[j] = joints[p] + (rest[j] - rest[p]) * s;
        }
    }
    Ok(ShapedRig { vertices, joints })
}

/// Gradients of a scalar with respect to the shape parameters that enter
/// [`apply_shape`].
pub fn apply_shape_backward(
    rig: &RigModel,
    grad_vertices: &[Vector3<f64>],
    grad_joints: &[Vector3<f64>],
    grad_bone_scales: &mut [f64],
    grad_offsets: &mut [Vector3<f64>],
) {
    let sym = rig.symmetry();
    for (i, g) in grad_vertices.iter().enumerate() {
        sym.accumulate(i, g, grad_offsets);
    }
    let rest = rig.joints_rest();
    let mut gj = grad_joints.to_vec();
    for &j in rig.joint_order().iter().rev() {
        if let Some(p) = rig.parent(j) {
            let g = gj[j];
            gj[p] += g;
            if let Some(grp) = rig.bone_scale_group_of(j) {
                grad_bone_scales[grp] += g.dot(&(rest[j] - rest[p]));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rig::{BoneScaleGroup, OffsetSlot, RigParts};

    fn rig() -> RigModel {
        RigModel::new(RigParts {
            vertices_rest: vec![
                Vector3::new(0.05, 0.02, 0.0),
                Vector3::new(0.05, -0.02, 0.0),
                Vector3::new(0.1, 0.0, 0.0),
            ],
            faces: vec![[0, 1, 2]],
            joint_names: vec!["root".into(), "tip".into()],
            joints_rest: vec![Vector3::zeros(), Vector3::new(0.1, 0.0, 0.0)],
            parent: vec![None, Some(0)],
            skin_weights: vec![vec![(0, 1.0)], vec![(0, 1.0)], vec![(1, 1.0)]],
            lateral_axis: 1,
            n_offset_groups: 2,
            offset_slots: vec![
                Some(OffsetSlot { group: 0, mirrored: false }),
                Some(OffsetSlot { group: 0, mirrored: true }),
                Some(OffsetSlot { group: 1, mirrored: false }),
            ],
            posing_joints: vec![1],
            prior_weights: vec![1.0],
            bone_scale_groups: vec![BoneScaleGroup { name: "bone".into(), edges: vec![1] }],
            keypoints: vec![],
        })
        .unwrap()
    }

    #[test]
    fn identity_shape() {
        let rig = rig();
        let s = apply_shape(&rig, &SubjectShape::neutral(&rig)).unwrap();
        assert_eq!(s.vertices, rig.vertices_rest());
        assert_eq!(s.joints, rig.joints_rest());
    }

    #[test]
    fn mirrored_pair_moves_symmetrically() {
        let rig = rig();
        let mut shape = SubjectShape::neutral(&rig);
        shape.vertex_offsets[0] = Vector3::new(0.0, 0.0, 0.01);
        let s = apply_shape(&rig, &shape).unwrap();
        assert_eq!(s.vertices[0].z, 0.01);
        assert_eq!(s.vertices[1].z, 0.01);
        shape.vertex_offsets[0] = Vector3::new(0.0, 0.003, 0.0);
        let s = apply_shape(&rig, &shape).unwrap();
        assert!((s.vertices[0].y - 0.023).abs() < 1e-15);
        assert!((s.vertices[1].y + 0.023).abs() < 1e-15);
    }

    #[test]
    fn bone_scale_is_linear() {
        let rig = rig();
        let mut shape = SubjectShape::neutral(&rig);
        shape.bone_scales[0] = 1.1;
        let s = apply_shape(&rig, &shape).unwrap();
        assert!(((s.joints[1] - s.joints[0]).norm() - 0.11).abs() < 1e-15);
    }

    #[test]
    fn offsets_enter_linearly() {
        let rig = rig();
        let mut shape = SubjectShape::neutral(&rig);
        shape.vertex_offsets = vec![Vector3::new(0.001, -0.002, 0.003), Vector3::new(0.004, 0.0, -0.001)];
        let once = apply_shape(&rig, &shape).unwrap();
        for o in &mut shape.vertex_offsets {
            *o *= 2.0;
        }
        let twice = apply_shape(&rig, &shape).unwrap();
        for ((a, b), r) in once.vertices.iter().zip(&twice.vertices).zip(rig.vertices_rest()) {
            assert!(((b - r) - (a - r) * 2.0).norm() < 1e-15);
        }
        // The displacement field itself is exactly linear.
        let half: Vec<_> = shape.vertex_offsets.iter().map(|o| o * 0.5).collect();
        for i in 0..rig.n_vertices() {
            let sym = rig.symmetry();
            assert_eq!(sym.offset(i, &shape.vertex_offsets), sym.offset(i, &half) * 2.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let rig = rig();
        let mut shape = SubjectShape::neutral(&rig);
        shape.bone_scales.push(1.0);
        assert!(matches!(apply_shape(&rig, &shape), Err(Error::Dimension { .. })));
    }

    #[test]
    fn colors_stay_in_range() {
        for x in [-1e3, -5.0, 0.0, 5.0, 1e3] {
            let c = scaled_sigmoid(x);
            assert!((0.0..=255.0).contains(&c));
        }
        assert!((scaled_sigmoid(scaled_logit(128.0)) - 128.0).abs() < 1e-9);
    }
}
