//! The composite objective over a window of frames and its gradient.

use nalgebra::Vector3;
use rayon::prelude::*;

use super::terms::{
    loss_bones, loss_keypoint, loss_offset_smoothness, loss_photometric, loss_pose_prior, loss_silhouette,
    loss_temporal,
};
use super::weights::LossWeights;
use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::io::observations::FrameObservation;
use crate::model::rig::RigModel;
use crate::model::shape::{apply_shape, apply_shape_backward, PoseState, ShapedRig, SubjectShape};
use crate::model::skinning::{pose_backward, pose_shaped, PoseGradient};
use crate::render::hard::{render_color, render_color_backward};
use crate::render::soft::{default_sharpness, SoftRender};

/// Settings that are not loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub weights: LossWeights,
    /// Multiplier on the per-crop default silhouette sharpness.
    pub sharpness_scale: f64,
    /// Frame interval in seconds.
    pub dt: f64,
    /// Ambient light for color rendering.
    pub light: f64,
}

impl EvalConfig {
    pub fn new(weights: LossWeights) -> Self {
        Self {
            weights,
            sharpness_scale: 1.0,
            dt: 1.0 / 40.0,
            light: 1.0,
        }
    }
}

/// Parameters of a window: the subject shape plus one pose per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub shape: SubjectShape,
    pub poses: Vec<PoseState>,
}

/// Gradient with the layout of [`Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub bone_scales: Vec<f64>,
    pub vertex_offsets: Vec<Vector3<f64>>,
    pub vertex_colors_raw: Vec<Vector3<f64>>,
    pub global_scale: f64,
    /// Per-frame pose gradients; their `global_scale` fields are zero (the
    /// shared scale gradient is summed into `global_scale`).
    pub poses: Vec<PoseGradient>,
}

impl ParamGrad {
    pub fn zeros(rig: &RigModel, frames: usize) -> Self {
        Self {
            bone_scales: vec![0.0; rig.n_bone_groups()],
            vertex_offsets: vec![Vector3::zeros(); rig.n_offset_groups()],
            vertex_colors_raw: vec![Vector3::zeros(); rig.n_vertices()],
            global_scale: 0.0,
            poses: vec![PoseGradient::zeros(rig.n_posing()); frames],
        }
    }
}

/// Unweighted term sums. `total` applies the loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct LossBreakdown {
    /// Sum over frames and cameras of `conf_c * L_kp`.
    pub keypoints: f64,
    /// Sum over frames and cameras of `conf_c * L_sil`.
    pub silhouette: f64,
    /// Sum over frames of `L_P`.
    pub pose_prior: f64,
    pub bones: f64,
    pub smoothness: f64,
    pub temporal: f64,
    /// Sum over frames and cameras of `L_phot`.
    pub photometric: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.keypoints * self.keypoints
            + w.silhouette * self.silhouette
            + w.pose_prior * self.pose_prior
            + w.bones * self.bones
            + w.smoothness * self.smoothness
            + w.temporal * self.temporal
            + w.color * self.photometric
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: LossBreakdown,
    pub grad: Option<ParamGrad>,
    /// Whether each frame had at least one contributing camera.
    pub observed: Vec<bool>,
    /// Per frame, `(camera id, keypoint loss)` of every contributing camera.
    pub keypoint_losses: Vec<Vec<(String, f64)>>,
}

/// A window of frames bound to a rig, cameras and configuration.
pub struct Objective<'a> {
    rig: &'a RigModel,
    cameras: &'a CameraRig,
    frames: Vec<&'a FrameObservation>,
    /// Per frame: `(view index, camera index)` of the views to use.
    views: Vec<Vec<(usize, usize)>>,
    config: EvalConfig,
    kp_weights: Vec<f64>,
    prior_weights: Vec<f64>,
}

struct FrameResult {
    loss: LossBreakdown,
    pose: PoseGradient,
    shaped_vertices: Vec<Vector3<f64>>,
    shaped_joints: Vec<Vector3<f64>>,
    colors: Vec<Vector3<f64>>,
    observed: bool,
    keypoint_losses: Vec<(String, f64)>,
}

impl<'a> Objective<'a> {
    /// `allowed` optionally restricts each frame to a set of camera ids.
    pub fn new(
        rig: &'a RigModel,
        cameras: &'a CameraRig,
        frames: Vec<&'a FrameObservation>,
        allowed: Option<&[Vec<String>]>,
        config: EvalConfig,
    ) -> Result<Self> {
        config.weights.validate()?;
        if let Some(a) = allowed {
            if a.len() != frames.len() {
                return Err(Error::dim("camera selection", frames.len(), a.len()));
            }
        }
        let kp_weights = match &config.weights.keypoint_weights {
            Some(w) if w.len() != rig.n_keypoints() => return Err(Error::dim("keypoint weights", rig.n_keypoints(), w.len())),
            Some(w) => w.clone(),
            None => rig.keypoints().iter().map(|k| k.weight).collect(),
        };
        let prior_weights = match &config.weights.prior_weights {
            Some(w) if w.len() != rig.n_posing() => return Err(Error::dim("prior weights", rig.n_posing(), w.len())),
            Some(w) => w.clone(),
            None => rig.prior_weights().to_vec(),
        };
        let mut views = Vec::with_capacity(frames.len());
        for (n, f) in frames.iter().enumerate() {
            let mut v = Vec::new();
            for (i, obs) in f.views.iter().enumerate() {
                if allowed.is_some_and(|a| !a[n].contains(&obs.camera)) {
                    continue;
                }
                let c = cameras.index_of(&obs.camera).ok_or_else(|| {
                    Error::InvalidArgument(format!("frame {}: unknown camera `{}`", f.frame, obs.camera))
                })?;
                if obs.keypoints.len() != rig.n_keypoints() {
                    return Err(Error::dim("keypoints per view", rig.n_keypoints(), obs.keypoints.len()));
                }
                v.push((i, c));
            }
            views.push(v);
        }
        Ok(Self {
            rig,
            cameras,
            frames,
            views,
            config,
            kp_weights,
            prior_weights,
        })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.config
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// Evaluates the loss and, when `with_grad`, its gradient with respect to
    /// every parameter.
    pub fn evaluate(&self, params: &Params, with_grad: bool) -> Result<Evaluation> {
        let rig = self.rig;
        if params.poses.len() != self.frames.len() {
            return Err(Error::dim("window poses", self.frames.len(), params.poses.len()));
        }
        params.shape.check(rig)?;
        for p in &params.poses {
            p.check(rig)?;
        }
        let w = &self.config.weights;
        let shaped = apply_shape(rig, &params.shape)?;
        let colors = if w.color > 0.0 { params.shape.colors() } else { Vec::new() };

        let results: Vec<FrameResult> = (0..self.frames.len())
            .into_par_iter()
            .map(|n| self.evaluate_frame(n, &shaped, params, &colors, with_grad))
            .collect::<Result<_>>()?;

        let observed: Vec<bool> = results.iter().map(|r| r.observed).collect();
        if !observed.iter().any(|o| *o) {
            return Err(Error::NoObservedFrames(self.frames.first().map_or(0, |f| f.frame)));
        }

        let mut loss = LossBreakdown::default();
        let mut grad = with_grad.then(|| ParamGrad::zeros(rig, self.frames.len()));
        let mut g_sv = vec![Vector3::zeros(); rig.n_vertices()];
        let mut g_sj = vec![Vector3::zeros(); rig.n_joints()];
        let mut keypoint_losses = Vec::with_capacity(results.len());
        for (n, r) in results.into_iter().enumerate() {
            loss.keypoints += r.loss.keypoints;
            loss.silhouette += r.loss.silhouette;
            loss.pose_prior += r.loss.pose_prior;
            loss.photometric += r.loss.photometric;
            keypoint_losses.push(r.keypoint_losses);
            if let Some(g) = grad.as_mut() {
                g.global_scale += r.pose.global_scale;
                g.poses[n] = PoseGradient { global_scale: 0.0, ..r.pose };
                for (a, b) in g_sv.iter_mut().zip(&r.shaped_vertices) {
                    *a += b;
                }
                for (a, b) in g_sj.iter_mut().zip(&r.shaped_joints) {
                    *a += b;
                }
                for (a, b) in g.vertex_colors_raw.iter_mut().zip(&r.colors) {
                    *a += b;
                }
            }
        }

        if w.bones > 0.0 {
            let (v, g) = loss_bones(&params.shape.bone_scales, w.alpha_min, w.alpha_max);
            loss.bones = v;
            if let Some(pg) = grad.as_mut() {
                for (a, b) in pg.bone_scales.iter_mut().zip(g) {
                    *a += w.bones * b;
                }
            }
        }
        if w.smoothness > 0.0 {
            let (v, g) = loss_offset_smoothness(rig, &params.shape.vertex_offsets);
            loss.smoothness = v;
            if let Some(pg) = grad.as_mut() {
                for (a, b) in pg.vertex_offsets.iter_mut().zip(g) {
                    *a += b * w.smoothness;
                }
            }
        }
        if w.temporal > 0.0 && self.frames.len() >= 2 {
            let theta: Vec<Vec<Vector3<f64>>> = params.poses.iter().map(|p| p.theta.clone()).collect();
            let r: Vec<Vector3<f64>> = params.poses.iter().map(|p| p.global_rot).collect();
            let t: Vec<Vector3<f64>> = params.poses.iter().map(|p| p.translation).collect();
            let (v, g) = loss_temporal(&theta, &r, &t, self.config.dt)?;
            loss.temporal = v;
            if let Some(pg) = grad.as_mut() {
                for (n, fg) in pg.poses.iter_mut().enumerate() {
                    for (a, b) in fg.theta.iter_mut().zip(&g.theta[n]) {
                        *a += b * w.temporal;
                    }
                    fg.global_rot += g.global_rot[n] * w.temporal;
                    fg.translation += g.translation[n] * w.temporal;
                }
            }
        }
        if let Some(pg) = grad.as_mut() {
            apply_shape_backward(rig, &g_sv, &g_sj, &mut pg.bone_scales, &mut pg.vertex_offsets);
        }
        loss.total = loss.weighted_total(w);
        Ok(Evaluation {
            loss,
            grad,
            observed,
            keypoint_losses,
        })
    }

    fn evaluate_frame(
        &self,
        n: usize,
        shaped: &ShapedRig,
        params: &Params,
        colors: &[Vector3<f64>],
        with_grad: bool,
    ) -> Result<FrameResult> {
        let rig = self.rig;
        let w = &self.config.weights;
        let pose = &params.poses[n];
        let gamma = params.shape.global_scale;
        let frame_obs = self.frames[n];
        let need_vertices = w.silhouette > 0.0 || w.color > 0.0;
        let posed = pose_shaped(rig, shaped, gamma, pose, need_vertices);

        let mut loss = LossBreakdown::default();
        let mut g_joints = vec![Vector3::zeros(); rig.n_joints()];
        let mut g_vertices = vec![Vector3::zeros(); if need_vertices { rig.n_vertices() } else { 0 }];
        let mut g_colors = Vec::new();
        let mut g_theta = vec![Vector3::zeros(); rig.n_posing()];
        let mut keypoint_losses = Vec::new();

        if w.pose_prior > 0.0 {
            let (v, g) = loss_pose_prior(&pose.theta, &self.prior_weights);
            loss.pose_prior = v;
            for (a, b) in g_theta.iter_mut().zip(g) {
                *a += b * w.pose_prior;
            }
        }

        let kp_points: Vec<Vector3<f64>> = rig.keypoints().iter().map(|k| posed.joints[k.joint]).collect();
        let mut observed = false;
        for &(vi, ci) in &self.views[n] {
            let obs = &frame_obs.views[vi];
            let camera = &self.cameras.cameras[ci];
            let conf = if w.use_confidence {
                obs.detection_confidence
            } else if obs.detection_confidence > 0.0 {
                1.0
            } else {
                0.0
            };
            if conf <= 0.0 {
                continue;
            }
            let Some(kp) = loss_keypoint(camera, &kp_points, &obs.keypoints, &self.kp_weights, w.use_confidence) else {
                continue;
            };
            observed = true;
            keypoint_losses.push((obs.camera.clone(), kp.value));
            loss.keypoints += conf * kp.value;
            if with_grad && w.keypoints > 0.0 {
                for (k, g) in rig.keypoints().iter().zip(&kp.grad) {
                    g_joints[k.joint] += g * (conf * w.keypoints);
                }
            }

            if let (true, Some(crop), Some(mask)) = (w.silhouette > 0.0, &obs.crop, &obs.mask) {
                if kp.value < w.sigma_kp {
                    let k = self.config.sharpness_scale * default_sharpness(crop);
                    let render = SoftRender::new(camera, &posed.vertices, rig.faces(), crop, k);
                    let (v, gm) = loss_silhouette(&render.silhouette().mask, mask, kp.value, w.sigma_kp)?;
                    loss.silhouette += conf * v;
                    if let (true, Some(mut gm)) = (with_grad, gm) {
                        let s = conf * w.silhouette;
                        gm.data.iter_mut().for_each(|x| *x *= s);
                        let gv = render.backward(&gm);
                        for (a, b) in g_vertices.iter_mut().zip(gv) {
                            *a += b;
                        }
                    }
                }
            }

            if let (true, Some(crop), Some(mask), Some(image)) = (w.color > 0.0, &obs.crop, &obs.mask, &obs.image) {
                let (rendered, frags) =
                    render_color(camera, &posed.vertices, rig.faces(), colors, crop, self.config.light);
                let (v, gi) = loss_photometric(&rendered, image, mask)?;
                loss.photometric += v;
                if with_grad {
                    let gc = render_color_backward(&frags, rig.faces(), rig.n_vertices(), self.config.light, &gi);
                    if g_colors.is_empty() {
                        g_colors = vec![Vector3::zeros(); rig.n_vertices()];
                    }
                    for ((a, b), c) in g_colors.iter_mut().zip(gc).zip(colors) {
                        // d(255 sigmoid(x))/dx = C (1 - C / 255)
                        *a += b.component_mul(&c.map(|c| c * (1.0 - c / 255.0))) * w.color;
                    }
                }
            }
        }

        let mut shaped_vertices = vec![Vector3::zeros(); rig.n_vertices()];
        let mut shaped_joints = vec![Vector3::zeros(); rig.n_joints()];
        let mut pose_grad = PoseGradient::zeros(rig.n_posing());
        if with_grad {
            pose_grad = pose_backward(
                rig,
                shaped,
                gamma,
                pose,
                &posed,
                need_vertices.then_some(g_vertices.as_slice()),
                &g_joints,
                &mut shaped_vertices,
                &mut shaped_joints,
            );
            for (a, b) in pose_grad.theta.iter_mut().zip(g_theta) {
                *a += b;
            }
        }
        Ok(FrameResult {
            loss,
            pose: pose_grad,
            shaped_vertices,
            shaped_joints,
            colors: g_colors,
            observed,
            keypoint_losses,
        })
    }
}

/// Convenience wrapper: loss and gradient of one window.
pub fn composite_loss(
    rig: &RigModel,
    cameras: &CameraRig,
    frames: &[FrameObservation],
    params: &Params,
    config: &EvalConfig,
) -> Result<(LossBreakdown, ParamGrad)> {
    let obj = Objective::new(rig, cameras, frames.iter().collect(), None, config.clone())?;
    let e = obj.evaluate(params, true)?;
    Ok((e.loss, e.grad.expect("gradient requested")))
}

/// Contiguous blocks of the flat parameter vector, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamBlock {
    BoneScales,
    VertexOffsets,
    VertexColors,
    GlobalScale,
    Theta(usize),
    GlobalRot(usize),
    Translation(usize),
}

fn push3(out: &mut Vec<f64>, v: &[Vector3<f64>]) {
    for p in v {
        out.extend_from_slice(p.as_slice());
    }
}

fn read3(x: &[f64], v: &mut [Vector3<f64>]) {
    for (k, p) in v.iter_mut().enumerate() {
        *p = Vector3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]);
    }
}

impl Params {
    /// Block ranges matching [`Params::flatten`].
    pub fn blocks(&self) -> Vec<(ParamBlock, std::ops::Range<usize>)> {
        let s = &self.shape;
        let mut out = Vec::new();
        let mut at = 0;
        let mut add = |b, n: usize| {
            out.push((b, at..at + n));
            at += n;
        };
        add(ParamBlock::BoneScales, s.bone_scales.len());
        add(ParamBlock::VertexOffsets, 3 * s.vertex_offsets.len());
        add(ParamBlock::VertexColors, 3 * s.vertex_colors_raw.len());
        add(ParamBlock::GlobalScale, 1);
        for (n, p) in self.poses.iter().enumerate() {
            add(ParamBlock::Theta(n), 3 * p.theta.len());
            add(ParamBlock::GlobalRot(n), 3);
            add(ParamBlock::Translation(n), 3);
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let s = &self.shape;
        let mut out = s.bone_scales.clone();
        push3(&mut out, &s.vertex_offsets);
        push3(&mut out, &s.vertex_colors_raw);
        out.push(s.global_scale);
        for p in &self.poses {
            push3(&mut out, &p.theta);
            push3(&mut out, &[p.global_rot, p.translation]);
        }
        out
    }

    /// Inverse of [`Params::flatten`]; `x` must have the same layout.
    pub fn assign(&mut self, x: &[f64]) {
        for (b, r) in self.blocks() {
            let x = &x[r];
            match b {
                ParamBlock::BoneScales => self.shape.bone_scales.copy_from_slice(x),
                ParamBlock::VertexOffsets => read3(x, &mut self.shape.vertex_offsets),
                ParamBlock::VertexColors => read3(x, &mut self.shape.vertex_colors_raw),
                ParamBlock::GlobalScale => self.shape.global_scale = x[0],
                ParamBlock::Theta(n) => read3(x, &mut self.poses[n].theta),
                ParamBlock::GlobalRot(n) => self.poses[n].global_rot = Vector3::new(x[0], x[1], x[2]),
                ParamBlock::Translation(n) => self.poses[n].translation = Vector3::new(x[0], x[1], x[2]),
            }
        }
    }
}

impl ParamGrad {
    /// Same layout as [`Params::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.bone_scales.clone();
        push3(&mut out, &self.vertex_offsets);
        push3(&mut out, &self.vertex_colors_raw);
        out.push(self.global_scale);
        for p in &self.poses {
            push3(&mut out, &p.theta);
            push3(&mut out, &[p.global_rot, p.translation]);
        }
        out
    }
}
