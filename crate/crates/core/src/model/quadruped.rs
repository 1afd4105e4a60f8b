//! Small built-in quadruped rig used by tests and the synthetic harness.
//!
//! The body is built from capped tubes: torso, head, tail and four legs.
//! Coordinates are meters with `+x` forward, `+y` to the animal's left and
//! `+z` up; the rest pose stands on the `z = 0` plane.

use std::collections::HashMap;
use std::f64::consts::TAU;

use nalgebra::Vector3;

use super::rig::{BoneScaleGroup, KeypointDef, OffsetSlot, RigModel, RigParts};

pub const PELVIS: usize = 0;
pub const CHEST: usize = 1;
pub const HEAD: usize = 2;
pub const TAIL: usize = 3;

const JOINTS: [(&str, Option<usize>, [f64; 3]); 12] = [
    ("pelvis", None, [-0.15, 0.0, 0.35]),
    ("chest", Some(0), [0.15, 0.0, 0.38]),
    ("head", Some(1), [0.32, 0.0, 0.48]),
    ("tail", Some(0), [-0.42, 0.0, 0.42]),
    ("l_shoulder", Some(1), [0.15, 0.07, 0.33]),
    ("l_hand", Some(4), [0.17, 0.07, 0.0]),
    ("r_shoulder", Some(1), [0.15, -0.07, 0.33]),
    ("r_hand", Some(6), [0.17, -0.07, 0.0]),
    ("l_hip", Some(0), [-0.15, 0.07, 0.32]),
    ("l_foot", Some(8), [-0.17, 0.07, 0.0]),
    ("r_hip", Some(0), [-0.15, -0.07, 0.32]),
    ("r_foot", Some(10), [-0.17, -0.07, 0.0]),
];

const KEYPOINTS: [(&str, usize); 12] = [
    ("hip", 0),
    ("neck", 1),
    ("nose", 2),
    ("tail", 3),
    ("left_shoulder", 4),
    ("left_hand_tip", 5),
    ("right_shoulder", 6),
    ("right_hand_tip", 7),
    ("left_hip", 8),
    ("left_foot_tip", 9),
    ("right_hip", 10),
    ("right_foot_tip", 11),
];

struct MeshBuilder {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    weights: Vec<Vec<(usize, f64)>>,
}

impl MeshBuilder {
    /// Capped tube from `a` to `b`. `skin(t)` gives the weights of a ring at
    /// parameter `t` in `[0, 1]`.
    fn tube(
        &mut self,
        a: Vector3<f64>,
        b: Vector3<f64>,
        radius: f64,
        rings: usize,
        sides: usize,
        skin: impl Fn(f64) -> Vec<(usize, f64)>,
    ) {
        let axis = (b - a).normalize();
        let side = if axis.y.abs() < 1e-12 {
            Vector3::y()
        } else {
            axis.cross(&Vector3::z()).normalize()
        };
        let up = side.cross(&axis);
        // Angles are mirrored exactly so left/right vertices pair bit-for-bit.
        let angles: Vec<f64> = (0..sides)
            .map(|k| {
                if 2 * k <= sides {
                    TAU * k as f64 / sides as f64
                } else {
                    -(TAU * (sides - k) as f64 / sides as f64)
                }
            })
            .collect();
        let base = self.vertices.len();
        for r in 0..rings {
            let t = r as f64 / (rings - 1) as f64;
            let c = a + (b - a) * t;
            for &phi in &angles {
                self.vertices.push(c + (up * phi.cos() + side * phi.sin()) * radius);
                self.weights.push(skin(t));
            }
        }
        let cap0 = self.vertices.len();
        self.vertices.push(a - axis * (0.5 * radius));
        self.weights.push(skin(0.0));
        let cap1 = self.vertices.len();
        self.vertices.push(b + axis * (0.5 * radius));
        self.weights.push(skin(1.0));

        let idx = |r: usize, k: usize| base + r * sides + (k % sides);
        for r in 0..rings - 1 {
            for k in 0..sides {
                self.faces.push([idx(r, k), idx(r, k + 1), idx(r + 1, k + 1)]);
                self.faces.push([idx(r, k), idx(r + 1, k + 1), idx(r + 1, k)]);
            }
        }
        for k in 0..sides {
            self.faces.push([cap0, idx(0, k + 1), idx(0, k)]);
            self.faces.push([cap1, idx(rings - 1, k), idx(rings - 1, k + 1)]);
        }
    }
}

fn joint(j: usize) -> Vector3<f64> {
    let p = JOINTS[j].2;
    Vector3::new(p[0], p[1], p[2])
}

fn fixed(j: usize) -> impl Fn(f64) -> Vec<(usize, f64)> {
    move |_| vec![(j, 1.0)]
}

/// Pairs each vertex with its mirror image across the lateral plane.
fn symmetry_slots(vertices: &[Vector3<f64>], lateral: usize) -> (usize, Vec<Option<OffsetSlot>>) {
    let key = |v: &Vector3<f64>| (v.x.to_bits(), v.y.to_bits(), v.z.to_bits());
    let lookup: HashMap<_, usize> = vertices.iter().enumerate().map(|(i, v)| (key(v), i)).collect();
    let mut slots = vec![None; vertices.len()];
    let mut n_groups = 0;
    for (i, v) in vertices.iter().enumerate() {
        if slots[i].is_some() {
            continue;
        }
        if v[lateral].abs() < 1e-12 {
            slots[i] = Some(OffsetSlot { group: n_groups, mirrored: false });
            n_groups += 1;
            continue;
        }
        let mut m = *v;
        m[lateral] = -m[lateral];
        slots[i] = Some(OffsetSlot { group: n_groups, mirrored: v[lateral] < 0.0 });
        if let Some(&k) = lookup.get(&key(&m)) {
            slots[k] = Some(OffsetSlot { group: n_groups, mirrored: m[lateral] < 0.0 });
        }
        n_groups += 1;
    }
    (n_groups, slots)
}

/// Raw parts of the built-in quadruped, before validation.
pub fn quadruped_parts() -> RigParts {
    let mut mb = MeshBuilder {
        vertices: Vec::new(),
        faces: Vec::new(),
        weights: Vec::new(),
    };
    // Torso blends pelvis -> chest along its length.
    let (p, c) = (joint(PELVIS), joint(CHEST));
    let t0 = p + (p - c) * 0.2;
    let t1 = c + (c - p) * 0.1;
    mb.tube(t0, t1, 0.08, 5, 8, |t| {
        let w = ((t - 0.2) / 0.6).clamp(0.0, 1.0);
        if w <= 0.0 {
            vec![(PELVIS, 1.0)]
        } else if w >= 1.0 {
            vec![(CHEST, 1.0)]
        } else {
            vec![(PELVIS, 1.0 - w), (CHEST, w)]
        }
    });
    mb.tube(c + Vector3::new(0.03, 0.0, 0.03), joint(HEAD), 0.05, 3, 6, fixed(HEAD));
    mb.tube(p + Vector3::new(-0.06, 0.0, 0.02), joint(TAIL), 0.02, 3, 4, fixed(TAIL));

    // Left legs first, then the mirrored right legs.
    // (top joint, tip joint, parent)
    let legs = [(4, 5, CHEST), (8, 9, PELVIS)];
    let start = mb.vertices.len();
    let face_start = mb.faces.len();
    for &(top, tip, parent) in &legs {
        let a = joint(top) + Vector3::new(0.0, 0.0, 0.03);
        mb.tube(a, joint(tip), 0.03, 3, 6, move |t| {
            if t <= 0.0 {
                vec![(parent, 0.5), (top, 0.5)]
            } else {
                vec![(top, 1.0)]
            }
        });
    }
    let end = mb.vertices.len();
    let face_end = mb.faces.len();
    let offset = end - start;
    let mirror_joint = |j: usize| match j {
        4 => 6,
        5 => 7,
        8 => 10,
        9 => 11,
        other => other,
    };
    for i in start..end {
        let mut v = mb.vertices[i];
        v.y = -v.y;
        mb.vertices.push(v);
        let w = mb.weights[i].iter().map(|&(j, w)| (mirror_joint(j), w)).collect();
        mb.weights.push(w);
    }
    for f in face_start..face_end {
        let [a, b, c] = mb.faces[f];
        mb.faces.push([a + offset, c + offset, b + offset]);
    }

    let lateral = 1;
    let (n_groups, slots) = symmetry_slots(&mb.vertices, lateral);

    let posing = vec![CHEST, 4, 6, 8, 10];
    RigParts {
        vertices_rest: mb.vertices,
        faces: mb.faces,
        joint_names: JOINTS.iter().map(|j| j.0.to_string()).collect(),
        joints_rest: (0..JOINTS.len()).map(joint).collect(),
        parent: JOINTS.iter().map(|j| j.1).collect(),
        skin_weights: mb.weights,
        lateral_axis: lateral,
        n_offset_groups: n_groups,
        offset_slots: slots,
        prior_weights: vec![1.0; posing.len()],
        posing_joints: posing,
        bone_scale_groups: vec![
            BoneScaleGroup { name: "spine".into(), edges: vec![CHEST] },
            BoneScaleGroup { name: "neck".into(), edges: vec![HEAD] },
            BoneScaleGroup { name: "tail".into(), edges: vec![TAIL] },
            BoneScaleGroup { name: "front_legs".into(), edges: vec![5, 7] },
            BoneScaleGroup { name: "hind_legs".into(), edges: vec![9, 11] },
        ],
        keypoints: KEYPOINTS
            .iter()
            .map(|&(name, joint)| KeypointDef {
                name: name.into(),
                joint,
                weight: if name == "hip" || name == "tail" { 2.0 } else { 1.0 },
            })
            .collect(),
    }
}

/// The built-in quadruped rig.
pub fn quadruped() -> RigModel {
    RigModel::new(quadruped_parts()).expect("built-in rig is valid")
}
