use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Row of the symmetric offset mapping for one vertex.
///
/// A vertex either shares the offset of `group` (with the lateral component
/// negated when `mirrored`), or is excluded from offset adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OffsetSlot {
    pub group: usize,
    pub mirrored: bool,
}

/// Sparse `N_V x N_G` signed selection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryMap {
    pub lateral_axis: usize,
    pub n_groups: usize,
    pub rows: Vec<Option<OffsetSlot>>,
}

impl SymmetryMap {
    /// Offset of vertex `i` selected from the group offsets.
    #[inline]
    pub fn offset(&self, i: usize, offsets: &[Vector3<f64>]) -> Vector3<f64> {
        match self.rows[i] {
            None => Vector3::zeros(),
            Some(slot) => {
                let mut d = offsets[slot.group];
                if slot.mirrored {
                    d[self.lateral_axis] = -d[self.lateral_axis];
                }
                d
            }
        }
    }

    /// Transpose action: accumulates a per-vertex gradient into the group gradient.
    #[inline]
    pub fn accumulate(&self, i: usize, grad: &Vector3<f64>, out: &mut [Vector3<f64>]) {
        if let Some(slot) = self.rows[i] {
            let mut g = *grad;
            if slot.mirrored {
                g[self.lateral_axis] = -g[self.lateral_axis];
            }
            out[slot.group] += g;
        }
    }
}

/// A named set of kinematic edges sharing one bone-scale parameter.
/// Each edge is identified by its child joint.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneScaleGroup {
    pub name: String,
    pub edges: Vec<usize>,
}

/// Observation keypoint bound to a rig joint.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointDef {
    pub name: String,
    pub joint: usize,
    pub weight: f64,
}

/// Raw rig data before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RigParts {
    pub vertices_rest: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub joint_names: Vec<String>,
    pub joints_rest: Vec<Vector3<f64>>,
    pub parent: Vec<Option<usize>>,
    /// Skinning weights per vertex as `(joint, weight)` lists.
    pub skin_weights: Vec<Vec<(usize, f64)>>,
    pub lateral_axis: usize,
    pub n_offset_groups: usize,
    pub offset_slots: Vec<Option<OffsetSlot>>,
    pub posing_joints: Vec<usize>,
    pub prior_weights: Vec<f64>,
    pub bone_scale_groups: Vec<BoneScaleGroup>,
    pub keypoints: Vec<KeypointDef>,
}

/// Template mesh with its kinematic tree, skinning and adaptation maps.
///
/// Immutable after construction; validated so downstream code can index
/// without further checks.
#[derive(Debug, Clone)]
pub struct RigModel {
    parts: RigParts,
    symmetry: SymmetryMap,
    /// Joints ordered so every parent precedes its children.
    order: Vec<usize>,
    /// Position of each joint in `posing_joints`, if it is posable.
    posing_slot: Vec<Option<usize>>,
    /// Bone-scale group scaling the edge ending at each joint.
    scale_group: Vec<Option<usize>>,
    /// Undirected mesh edges `(i, j)` with `i < j`.
    edges: Vec<(usize, usize)>,
}

impl RigModel {
    pub fn new(parts: RigParts) -> Result<Self> {
        let nv = parts.vertices_rest.len();
        let nj = parts.joints_rest.len();
        let bad = |m: String| Err(Error::InvalidRig(m));

        if nj == 0 {
            return bad("rig has no joints".into());
        }
        if parts.parent.len() != nj {
            return Err(Error::dim("parent", nj, parts.parent.len()));
        }
        if parts.joint_names.len() != nj {
            return Err(Error::dim("joint_names", nj, parts.joint_names.len()));
        }
        if parts.skin_weights.len() != nv {
            return Err(Error::dim("skin_weights rows", nv, parts.skin_weights.len()));
        }
        if parts.offset_slots.len() != nv {
            return Err(Error::dim("symmetry rows", nv, parts.offset_slots.len()));
        }
        if parts.lateral_axis > 2 {
            return bad(format!("lateral axis {} out of range", parts.lateral_axis));
        }
        if parts.vertices_rest.iter().chain(&parts.joints_rest).any(|p| !p.iter().all(|x| x.is_finite())) {
            return bad("non-finite rest geometry".into());
        }
        for (fi, f) in parts.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= nv) {
                return bad(format!("face {fi} references a missing vertex"));
            }
        }
        for (vi, row) in parts.skin_weights.iter().enumerate() {
            let mut sum = 0.0;
            for &(j, w) in row {
                if j >= nj {
                    return bad(format!("vertex {vi} skinned to missing joint {j}"));
                }
                if !(w >= 0.0) {
                    return bad(format!("vertex {vi} has negative skin weight"));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return bad(format!("skin weights of vertex {vi} sum to {sum}"));
            }
        }
        for (vi, slot) in parts.offset_slots.iter().enumerate() {
            if let Some(s) = slot {
                if s.group >= parts.n_offset_groups {
                    return bad(format!("vertex {vi} maps to missing offset group {}", s.group));
                }
            }
        }

        // Topological order; rejects cycles and multiple roots.
        let mut children = vec![Vec::new(); nj];
        let mut roots = Vec::new();
        for (j, p) in parts.parent.iter().enumerate() {
            match *p {
                None => roots.push(j),
                Some(p) if p >= nj || p == j => {
                    return bad(format!("joint {j} has invalid parent {p}"));
                }
                Some(p) => children[p].push(j),
            }
        }
        if roots.len() != 1 {
            return bad(format!("kinematic tree must have one root, found {}", roots.len()));
        }
        let mut order = Vec::with_capacity(nj);
        let mut stack = roots.clone();
        while let Some(j) = stack.pop() {
            order.push(j);
            stack.extend(children[j].iter().rev().copied());
        }
        if order.len() != nj {
            return bad("kinematic tree contains a cycle or detached joints".into());
        }

        let mut posing_slot = vec![None; nj];
        for (slot, &j) in parts.posing_joints.iter().enumerate() {
            if j >= nj {
                return bad(format!("posing joint {j} out of range"));
            }
            if posing_slot[j].replace(slot).is_some() {
                return bad(format!("posing joint {j} listed twice"));
            }
        }
        if parts.prior_weights.len() != parts.posing_joints.len() {
            return Err(Error::dim(
                "prior weights",
                parts.posing_joints.len(),
                parts.prior_weights.len(),
            ));
        }
        if parts.prior_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("prior weights must be non-negative".into());
        }

        let mut scale_group = vec![None; nj];
        for (g, group) in parts.bone_scale_groups.iter().enumerate() {
            for &child in &group.edges {
                if child >= nj || parts.parent[child].is_none() {
                    return bad(format!("bone group `{}` names invalid edge {child}", group.name));
                }
                if scale_group[child].replace(g).is_some() {
                    return bad(format!("edge {child} belongs to two bone groups"));
                }
            }
        }
        for k in &parts.keypoints {
            if k.joint >= nj {
                return bad(format!("keypoint `{}` maps to missing joint {}", k.name, k.joint));
            }
            if !(k.weight >= 0.0) {
                return bad(format!("keypoint `{}` has negative weight", k.name));
            }
        }

        let mut edges: Vec<(usize, usize)> = parts
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();

        let symmetry = SymmetryMap {
            lateral_axis: parts.lateral_axis,
            n_groups: parts.n_offset_groups,
            rows: parts.offset_slots.clone(),
        };
        Ok(Self {
            parts,
            symmetry,
            order,
            posing_slot,
            scale_group,
            edges,
        })
    }

    pub fn parts(&self) -> &RigParts {
        &self.parts
    }
    pub fn n_vertices(&self) -> usize {
        self.parts.vertices_rest.len()
    }
    pub fn n_joints(&self) -> usize {
        self.parts.joints_rest.len()
    }
    pub fn n_posing(&self) -> usize {
        self.parts.posing_joints.len()
    }
    pub fn n_keypoints(&self) -> usize {
        self.parts.keypoints.len()
    }
    pub fn n_bone_groups(&self) -> usize {
        self.parts.bone_scale_groups.len()
    }
    pub fn n_offset_groups(&self) -> usize {
        self.parts.n_offset_groups
    }
    pub fn vertices_rest(&self) -> &[Vector3<f64>] {
        &self.parts.vertices_rest
    }
    pub fn joints_rest(&self) -> &[Vector3<f64>] {
        &self.parts.joints_rest
    }
    pub fn faces(&self) -> &[[usize; 3]] {
        &self.parts.faces
    }
    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parts.parent[joint]
    }
    pub fn skin_weights(&self, vertex: usize) -> &[(usize, f64)] {
        &self.parts.skin_weights[vertex]
    }
    pub fn symmetry(&self) -> &SymmetryMap {
        &self.symmetry
    }
    pub fn posing_joints(&self) -> &[usize] {
        &self.parts.posing_joints
    }
    pub fn posing_slot(&self, joint: usize) -> Option<usize> {
        self.posing_slot[joint]
    }
    pub fn prior_weights(&self) -> &[f64] {
        &self.parts.prior_weights
    }
    pub fn bone_scale_group_of(&self, joint: usize) -> Option<usize> {
        self.scale_group[joint]
    }
    pub fn keypoints(&self) -> &[KeypointDef] {
        &self.parts.keypoints
    }
    /// Parent-before-child joint order.
    pub fn joint_order(&self) -> &[usize] {
        &self.order
    }
    pub fn mesh_edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.parts.joint_names.iter().position(|n| n == name)
    }
}
