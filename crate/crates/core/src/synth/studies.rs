//! Triangulation noise study and the ablation suite.

use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cameras::default_camera_rig;
use super::motion::Motion;
use super::scene::{generate_scene, NoiseSpec, SceneSpec, SyntheticScene};
use crate::error::{Error, Result};
use crate::geometry::{triangulate_dlt, View};
use crate::metrics::{evaluate_fit, mpjpe, mpjtd, posed_keypoints};
use crate::solve::{fit_sequence, SequenceFitConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseStudySpec {
    pub sigmas: Vec<f64>,
    pub camera_counts: Vec<usize>,
    /// Random camera subsets and shift draws per grid point.
    pub trials: usize,
    /// Cameras available to draw from.
    pub rig_cameras: usize,
    pub seed: u64,
}

impl Default for NoiseStudySpec {
    fn default() -> Self {
        Self {
            sigmas: vec![0.0, 1.0, 2.0, 5.0, 10.0],
            camera_counts: vec![2, 3, 4],
            trials: 50,
            rig_cameras: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudyCell {
    pub sigma_px: f64,
    pub cameras: usize,
    pub mean_mm: f64,
    pub std_mm: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudyTable {
    pub spec: NoiseStudySpec,
    pub grid_points: usize,
    pub cells: Vec<NoiseStudyCell>,
}

impl NoiseStudyTable {
    pub fn cell(&self, sigma: f64, cameras: usize) -> Option<&NoiseStudyCell> {
        self.cells.iter().find(|c| c.sigma_px == sigma && c.cameras == cameras)
    }
}

/// 36 known locations: a 3 x 3 grid over the floor area at four heights up
/// to 0.6 m.
pub fn study_grid() -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(36);
    for z in [0.0, 0.2, 0.4, 0.6] {
        for y in [-0.7, 0.0, 0.7] {
            for x in [-0.35, 0.0, 0.35] {
                out.push(Vector3::new(x, y, z));
            }
        }
    }
    out
}

/// Perturbs exact projections of the grid points by per-axis shifts from
/// `{-sigma, 0, sigma}` and triangulates them from random camera subsets.
/// Each trial draws one camera permutation and one shift pattern that every
/// cell reuses (prefixes for the camera counts, scaled by sigma), so cells
/// differ only in the factor under study.
pub fn run_triangulation_noise_study(spec: &NoiseStudySpec) -> Result<NoiseStudyTable> {
    let max_cams = spec.camera_counts.iter().copied().max().unwrap_or(0);
    if spec.camera_counts.iter().any(|&c| c < 2) || max_cams > spec.rig_cameras || spec.trials == 0 {
        return Err(Error::InvalidArgument("camera counts must lie in 2..=rig_cameras and trials > 0".into()));
    }
    if spec.sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidArgument("sigmas must be nonnegative".into()));
    }
    let rig = default_camera_rig(spec.rig_cameras)?;
    let grid = study_grid();
    // errors[point][trial][sigma][count]
    let errors: Vec<Vec<Vec<Vec<f64>>>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            (0..spec.trials)
                .map(|_| {
                    let mut order: Vec<usize> = (0..rig.len()).collect();
                    order.shuffle(&mut rng);
                    let shifts: Vec<Vector2<f64>> = (0..max_cams)
                        .map(|_| Vector2::new(rng.random_range(-1i32..=1) as f64, rng.random_range(-1i32..=1) as f64))
                        .collect();
                    spec.sigmas
                        .iter()
                        .map(|&s| {
                            spec.camera_counts
                                .iter()
                                .map(|&n| {
                                    let views: Vec<View> = order[..n]
                                        .iter()
                                        .zip(&shifts)
                                        .map(|(&c, d)| {
                                            let cam = &rig.cameras[c];
                                            View::new(cam, cam.project(x).expect("grid point in front of every camera") + d * s)
                                        })
                                        .collect();
                                    triangulate_dlt(&views).map_or(f64::NAN, |p| 1000.0 * (p - x).norm())
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut cells = Vec::new();
    for (si, &sigma) in spec.sigmas.iter().enumerate() {
        for (ci, &cameras) in spec.camera_counts.iter().enumerate() {
            let e: Vec<f64> = errors.iter().flat_map(|p| p.iter().map(|t| t[si][ci])).filter(|e| e.is_finite()).collect();
            let n = e.len() as f64;
            let mean = e.iter().sum::<f64>() / n;
            let std = (e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            cells.push(NoiseStudyCell { sigma_px: sigma, cameras, mean_mm: mean, std_mm: std, samples: e.len() });
        }
    }
    Ok(NoiseStudyTable { spec: spec.clone(), grid_points: grid.len(), cells })
}

/// One configuration of the ablation suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Ablation {
    Full,
    NoKeypoints,
    NoSilhouette,
    NoTemporal,
    NoConfidence,
    Views(usize),
}

impl Ablation {
    pub fn label(&self) -> String {
        match self {
            Ablation::Full => "full".into(),
            Ablation::NoKeypoints => "no-keypoints".into(),
            Ablation::NoSilhouette => "no-silhouette".into(),
            Ablation::NoTemporal => "no-temporal".into(),
            Ablation::NoConfidence => "no-confidence".into(),
            Ablation::Views(n) => format!("views-{n}"),
        }
    }

    pub fn apply(&self, base: &SequenceFitConfig) -> SequenceFitConfig {
        let mut c = base.clone();
        let w = &mut c.stage.weights;
        match *self {
            Ablation::Full => {}
            Ablation::NoKeypoints => w.keypoints = 0.0,
            Ablation::NoSilhouette => w.silhouette = 0.0,
            Ablation::NoTemporal => w.temporal = 0.0,
            Ablation::NoConfidence => w.use_confidence = false,
            Ablation::Views(n) => c.window.cameras = n,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    pub seed: u64,
    /// Against ground-truth keypoints.
    pub mpjpe_mm: f64,
    pub mpjtd_mm_per_frame: f64,
    /// Fitted hard silhouettes against the observed masks of the cameras
    /// used for fitting.
    pub mean_iou: f64,
    pub ground_truth_mpjtd_mm_per_frame: f64,
}

/// Fits the scene's sequence under each setting, with the shape fixed to
/// ground truth. Settings run one after another; each fit parallelizes
/// internally.
pub fn run_ablation_suite(scene: &SyntheticScene, settings: &[Ablation], base: &SequenceFitConfig) -> Result<Vec<AblationRow>> {
    let gt = scene.keypoints_3d();
    let gt_ref: Vec<Vec<Option<Vector3<f64>>>> = gt.iter().map(|f| f.iter().map(|p| Some(*p)).collect()).collect();
    let gt_td = mpjtd(&gt.iter().cloned().map(Some).collect::<Vec<_>>()).unwrap_or(0.0);
    let mut rows = Vec::with_capacity(settings.len());
    for s in settings {
        let config = s.apply(base);
        let fit = fit_sequence(&scene.rig, &scene.cameras, &scene.observations, &scene.shape, &config)?;
        let pred = posed_keypoints(&scene.rig, &scene.shape, &fit.poses)?;
        let (_, m) = mpjpe(&pred, &gt_ref)?;
        let td = mpjtd(&pred.iter().cloned().map(Some).collect::<Vec<_>>());
        let mut used = scene.observations.clone();
        for (f, sel) in used.frames.iter_mut().zip(&fit.selection) {
            f.views.retain(|v| sel.contains(&v.camera));
        }
        let report = evaluate_fit(&scene.rig, &scene.shape, &fit.poses, None, &scene.cameras, &used, Some(&gt_ref), 0)?;
        let row = AblationRow {
            setting: s.label(),
            seed: scene.spec.seed,
            mpjpe_mm: m.unwrap_or(f64::NAN),
            mpjtd_mm_per_frame: td.unwrap_or(f64::NAN),
            mean_iou: report.mean_iou.unwrap_or(f64::NAN),
            ground_truth_mpjtd_mm_per_frame: gt_td,
        };
        log::info!("ablation {}: {:?}", row.setting, row);
        rows.push(row);
    }
    Ok(rows)
}

/// Ablation settings run on one generated scene per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationStudySpec {
    /// The seed field is replaced by each entry of `seeds`.
    pub scene: SceneSpec,
    pub seeds: Vec<u64>,
    pub settings: Vec<Ablation>,
    pub sequence: SequenceFitConfig,
}

impl Default for AblationStudySpec {
    fn default() -> Self {
        let mut settings = vec![Ablation::Full, Ablation::NoKeypoints, Ablation::NoSilhouette, Ablation::NoTemporal, Ablation::NoConfidence];
        settings.extend((2..6).map(Ablation::Views));
        Self {
            scene: SceneSpec {
                cameras: 6,
                frames: 24,
                motion: Motion::walk(),
                crop_cap: 32,
                noise: NoiseSpec { keypoint_sigma: 1.0, corrupt_fraction: 0.05, ..NoiseSpec::default() },
                ..SceneSpec::default()
            },
            seeds: (0..5).collect(),
            settings,
            sequence: SequenceFitConfig::default(),
        }
    }
}

/// Rows of every seed, seed-major.
pub fn run_ablation_study(spec: &AblationStudySpec) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        let scene = generate_scene(&SceneSpec { seed, ..spec.scene.clone() })?;
        let base = SequenceFitConfig { seed, ..spec.sequence.clone() };
        rows.extend(run_ablation_suite(&scene, &spec.settings, &base)?);
    }
    Ok(rows)
}
