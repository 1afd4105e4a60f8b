//! Rig bundle directory: `mesh.obj` plus the `rig.json` sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::format::{io_error, parse_error, read_document, write_document};
use crate::error::Result;
use crate::model::{BoneScaleGroup, KeypointDef, OffsetSlot, RigModel, RigParts};

pub const RIG: &str = "rig";
pub const MESH_FILE: &str = "mesh.obj";
pub const RIG_FILE: &str = "rig.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointRecord {
    name: String,
    parent: Option<String>,
    rest: [f64; 3],
}

/// Coordinate-list sparse matrix, rows are vertices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkinWeights {
    vertex: Vec<usize>,
    joint: Vec<usize>,
    weight: Vec<f64>,
}

/// Coordinate-list offset selection; vertices not listed keep no offset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SymmetryRecord {
    lateral_axis: usize,
    groups: usize,
    vertex: Vec<usize>,
    group: Vec<usize>,
    mirrored: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleGroupRecord {
    name: String,
    /// Child joints of the scaled edges.
    edges: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointRecord {
    name: String,
    joint: String,
    weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigRecord {
    mesh: String,
    joints: Vec<JointRecord>,
    skin_weights: SkinWeights,
    symmetry: SymmetryRecord,
    posing_joints: Vec<String>,
    prior_weights: Vec<f64>,
    bone_scale_groups: Vec<ScaleGroupRecord>,
    keypoints: Vec<KeypointRecord>,
}

/// Writes `mesh.obj` and `rig.json` into `dir`.
pub fn save_rig(dir: &Path, rig: &RigModel) -> Result<()> {
    let p = rig.parts();
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut obj = String::new();
    for v in &p.vertices_rest {
        let _ = writeln!(obj, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &p.faces {
        let _ = writeln!(obj, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    let mesh_path = dir.join(MESH_FILE);
    fs::write(&mesh_path, obj).map_err(|e| io_error(&mesh_path, e))?;

    let name = |j: usize| p.joint_names[j].clone();
    let mut skin = SkinWeights::default();
    for (v, row) in p.skin_weights.iter().enumerate() {
        for &(j, w) in row {
            skin.vertex.push(v);
            skin.joint.push(j);
            skin.weight.push(w);
        }
    }
    let mut sym = SymmetryRecord { lateral_axis: p.lateral_axis, groups: p.n_offset_groups, ..Default::default() };
    for (v, slot) in p.offset_slots.iter().enumerate() {
        if let Some(s) = slot {
            sym.vertex.push(v);
            sym.group.push(s.group);
            sym.mirrored.push(s.mirrored);
        }
    }
    let rec = RigRecord {
        mesh: MESH_FILE.into(),
        joints: (0..p.joint_names.len())
            .map(|j| JointRecord { name: name(j), parent: p.parent[j].map(name), rest: p.joints_rest[j].into() })
            .collect(),
        skin_weights: skin,
        symmetry: sym,
        posing_joints: p.posing_joints.iter().map(|&j| name(j)).collect(),
        prior_weights: p.prior_weights.clone(),
        bone_scale_groups: p
            .bone_scale_groups
            .iter()
            .map(|g| ScaleGroupRecord { name: g.name.clone(), edges: g.edges.iter().map(|&j| name(j)).collect() })
            .collect(),
        keypoints: p.keypoints.iter().map(|k| KeypointRecord { name: k.name.clone(), joint: name(k.joint), weight: k.weight }).collect(),
    };
    write_document(&dir.join(RIG_FILE), RIG, "m", &rec)
}

/// Parses the vertex and triangle records of an OBJ file. Other record
/// types are ignored; faces may use `v/vt/vn` syntax but must be triangles.
pub fn load_obj(path: &Path) -> Result<(Vec<Vector3<f64>>, Vec<[usize; 3]>)> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let record = format!("line {}", i + 1);
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let xs: Vec<&str> = it.collect();
                if xs.len() < 3 {
                    return Err(parse_error(path, record, "v", "vertex needs 3 coordinates"));
                }
                let c = |s: &str| s.parse::<f64>().map_err(|e| parse_error(path, &record, "v", format!("`{s}`: {e}")));
                vertices.push(Vector3::new(c(xs[0])?, c(xs[1])?, c(xs[2])?));
            }
            Some("f") => {
                let idx = it
                    .map(|t| {
                        let s = t.split('/').next().unwrap_or("");
                        match s.parse::<usize>() {
                            Ok(k) if k >= 1 => Ok(k - 1),
                            _ => Err(parse_error(path, &record, "f", format!("bad vertex index `{t}`"))),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() != 3 {
                    return Err(parse_error(path, record, "f", format!("expected a triangle, found {} vertices", idx.len())));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

/// Loads and validates a rig bundle directory.
pub fn load_rig(dir: &Path) -> Result<RigModel> {
    let json = dir.join(RIG_FILE);
    let rec: RigRecord = read_document(&json, RIG, "m")?;
    let (vertices_rest, faces) = load_obj(&dir.join(&rec.mesh))?;
    let nv = vertices_rest.len();
    let joint = |name: &str, record: String, field: &str| {
        rec.joints
            .iter()
            .position(|j| j.name == name)
            .ok_or_else(|| parse_error(&json, record, field, format!("unknown joint `{name}`")))
    };
    let parent = rec
        .joints
        .iter()
        .enumerate()
        .map(|(i, j)| j.parent.as_deref().map(|p| joint(p, format!("data.joints[{i}]"), "parent")).transpose())
        .collect::<Result<Vec<_>>>()?;

    let sw = &rec.skin_weights;
    if sw.joint.len() != sw.vertex.len() || sw.weight.len() != sw.vertex.len() {
        return Err(parse_error(&json, "data.skin_weights", "weight", "coordinate lists differ in length"));
    }
    let mut skin_weights = vec![Vec::new(); nv];
    for k in 0..sw.vertex.len() {
        let v = sw.vertex[k];
        if v >= nv {
            return Err(parse_error(&json, "data.skin_weights", "vertex", format!("entry {k}: vertex {v} not in mesh ({nv} vertices)")));
        }
        skin_weights[v].push((sw.joint[k], sw.weight[k]));
    }
    let sym = &rec.symmetry;
    if sym.group.len() != sym.vertex.len() || sym.mirrored.len() != sym.vertex.len() {
        return Err(parse_error(&json, "data.symmetry", "group", "coordinate lists differ in length"));
    }
    let mut offset_slots = vec![None; nv];
    for k in 0..sym.vertex.len() {
        let v = sym.vertex[k];
        if v >= nv || offset_slots[v].is_some() {
            return Err(parse_error(&json, "data.symmetry", "vertex", format!("entry {k}: vertex {v} out of range or repeated")));
        }
        offset_slots[v] = Some(OffsetSlot { group: sym.group[k], mirrored: sym.mirrored[k] });
    }
    let parts = RigParts {
        vertices_rest,
        faces,
        joint_names: rec.joints.iter().map(|j| j.name.clone()).collect(),
        joints_rest: rec.joints.iter().map(|j| Vector3::from(j.rest)).collect(),
        parent,
        skin_weights,
        lateral_axis: sym.lateral_axis,
        n_offset_groups: sym.groups,
        offset_slots,
        posing_joints: rec
            .posing_joints
            .iter()
            .enumerate()
            .map(|(i, n)| joint(n, format!("data.posing_joints[{i}]"), "joint"))
            .collect::<Result<_>>()?,
        prior_weights: rec.prior_weights.clone(),
        bone_scale_groups: rec
            .bone_scale_groups
            .iter()
            .enumerate()
            .map(|(i, g)| {
                Ok(BoneScaleGroup {
                    name: g.name.clone(),
                    edges: g.edges.iter().map(|n| joint(n, format!("data.bone_scale_groups[{i}]"), "edges")).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?,
        keypoints: rec
            .keypoints
            .iter()
            .enumerate()
            .map(|(i, k)| Ok(KeypointDef { name: k.name.clone(), joint: joint(&k.joint, format!("data.keypoints[{i}]"), "joint")?, weight: k.weight }))
            .collect::<Result<_>>()?,
    };
    RigModel::new(parts).map_err(|e| parse_error(&json, "data", "rig", e.to_string()))
}
