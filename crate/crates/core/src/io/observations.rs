//! Observations per frame and camera, in memory and on disk.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::format::{parse_error, read_document, write_document};
use super::png::{load_image, load_mask, mask_file_name, save_image, save_mask};
use crate::error::Result;
use crate::render::{CropWindow, Raster};

/// 2D keypoint detection in source-image pixels. Missing keypoints carry
/// zero confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointObs {
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

impl KeypointObs {
    pub const MISSING: Self = Self {
        u: 0.0,
        v: 0.0,
        confidence: 0.0,
    };
}

/// Bounding-box detection of one identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub identity: String,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub confidence: f64,
}

/// Everything observed by one camera in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraObservation {
    pub camera: String,
    /// One entry per rig keypoint.
    pub keypoints: Vec<KeypointObs>,
    /// Detection confidence used to weight the whole view.
    pub detection_confidence: f64,
    pub crop: Option<CropWindow>,
    /// Silhouette at crop resolution.
    pub mask: Option<Raster<bool>>,
    /// RGB image at crop resolution, values in `[0, 255]`.
    pub image: Option<Raster<Vector3<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub frame: usize,
    pub views: Vec<CameraObservation>,
}

impl FrameObservation {
    pub fn view(&self, camera: &str) -> Option<&CameraObservation> {
        self.views.iter().find(|v| v.camera == camera)
    }
}

/// Observations for a sequence, ordered by frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    pub frames: Vec<FrameObservation>,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Camera ids with a usable view in each frame.
    pub fn availability(&self) -> Vec<Vec<String>> {
        self.frames
            .iter()
            .map(|f| {
                f.views
                    .iter()
                    .filter(|v| v.detection_confidence > 0.0 && v.keypoints.iter().any(|k| k.confidence > 0.0))
                    .map(|v| v.camera.clone())
                    .collect()
            })
            .collect()
    }
}

pub const OBSERVATIONS: &str = "observations";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct CropRecord {
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
    pub out_w: usize,
    pub out_h: usize,
}

impl CropRecord {
    pub(crate) fn from_crop(c: &CropWindow) -> Self {
        Self { x0: c.x0, y0: c.y0, w: c.w, h: c.h, out_w: c.out_w, out_h: c.out_h }
    }

    pub(crate) fn to_crop(&self, camera: &str) -> CropWindow {
        CropWindow { camera: camera.into(), x0: self.x0, y0: self.y0, w: self.w, h: self.h, out_w: self.out_w, out_h: self.out_h }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewRecord {
    camera: String,
    /// `[u, v, confidence]` per rig keypoint.
    keypoints: Vec<[f64; 3]>,
    detection_confidence: f64,
    crop: Option<CropRecord>,
    /// Path relative to the observations file.
    mask: Option<String>,
    image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame: usize,
    views: Vec<ViewRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationsRecord {
    frames: Vec<FrameRecord>,
}

pub(crate) fn check_confidence(path: &Path, record: &str, field: &str, c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(parse_error(path, record, field, format!("confidence {c} outside [0, 1]")))
    }
}

pub(crate) fn keypoints_from_records(path: &Path, record: &str, kps: &[[f64; 3]]) -> Result<Vec<KeypointObs>> {
    kps.iter()
        .enumerate()
        .map(|(k, &[u, v, c])| {
            check_confidence(path, &format!("{record}.keypoints[{k}]"), "confidence", c)?;
            Ok(KeypointObs { u, v, confidence: c })
        })
        .collect()
}

/// Writes `dir/observations.json` with masks under `dir/masks` and images
/// under `dir/images`. Returns the path of the JSON file.
pub fn save_observations(dir: &Path, obs: &ObservationSet) -> Result<PathBuf> {
    let mut frames = Vec::with_capacity(obs.frames.len());
    for f in &obs.frames {
        let mut views = Vec::with_capacity(f.views.len());
        for v in &f.views {
            let name = mask_file_name(&v.camera, f.frame);
            let mask = match &v.mask {
                Some(m) => {
                    save_mask(&dir.join("masks").join(&name), m)?;
                    Some(format!("masks/{name}"))
                }
                None => None,
            };
            let image = match &v.image {
                Some(img) => {
                    save_image(&dir.join("images").join(&name), img)?;
                    Some(format!("images/{name}"))
                }
                None => None,
            };
            views.push(ViewRecord {
                camera: v.camera.clone(),
                keypoints: v.keypoints.iter().map(|k| [k.u, k.v, k.confidence]).collect(),
                detection_confidence: v.detection_confidence,
                crop: v.crop.as_ref().map(CropRecord::from_crop),
                mask,
                image,
            });
        }
        frames.push(FrameRecord { frame: f.frame, views });
    }
    let path = dir.join("observations.json");
    write_document(&path, OBSERVATIONS, "px", &ObservationsRecord { frames })?;
    Ok(path)
}

/// Loads observations and the rasters they reference. With `n_keypoints`,
/// every view must carry exactly that many keypoints.
pub fn load_observations(path: &Path, n_keypoints: Option<usize>) -> Result<ObservationSet> {
    let rec: ObservationsRecord = read_document(path, OBSERVATIONS, "px")?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut frames = Vec::with_capacity(rec.frames.len());
    for (fi, f) in rec.frames.into_iter().enumerate() {
        if fi > 0 && frames.last().is_some_and(|p: &FrameObservation| p.frame >= f.frame) {
            return Err(parse_error(path, format!("data.frames[{fi}]"), "frame", "frames must be strictly increasing"));
        }
        let mut views = Vec::with_capacity(f.views.len());
        for (vi, v) in f.views.into_iter().enumerate() {
            let record = format!("data.frames[{fi}].views[{vi}]");
            if views.iter().any(|o: &CameraObservation| o.camera == v.camera) {
                return Err(parse_error(path, &record, "camera", format!("camera `{}` listed twice", v.camera)));
            }
            if let Some(n) = n_keypoints.filter(|&n| n != v.keypoints.len()) {
                return Err(parse_error(path, &record, "keypoints", format!("expected {n} keypoints, found {}", v.keypoints.len())));
            }
            check_confidence(path, &record, "detection_confidence", v.detection_confidence)?;
            let keypoints = keypoints_from_records(path, &record, &v.keypoints)?;
            let crop = v.crop.as_ref().map(|c| c.to_crop(&v.camera));
            let check_size = |w: usize, h: usize, field: &str| match &crop {
                Some(c) if (c.out_w, c.out_h) != (w, h) => Err(parse_error(path, &record, field, format!("raster is {w}x{h}, crop is {}x{}", c.out_w, c.out_h))),
                None => Err(parse_error(path, &record, field, "rasters need a crop window")),
                _ => Ok(()),
            };
            let mask = match &v.mask {
                Some(rel) => {
                    let m = load_mask(&base.join(rel))?;
                    check_size(m.width, m.height, "mask")?;
                    Some(m)
                }
                None => None,
            };
            let image = match &v.image {
                Some(rel) => {
                    let m = load_image(&base.join(rel))?;
                    check_size(m.width, m.height, "image")?;
                    Some(m)
                }
                None => None,
            };
            views.push(CameraObservation { camera: v.camera, keypoints, detection_confidence: v.detection_confidence, crop, mask, image });
        }
        frames.push(FrameObservation { frame: f.frame, views });
    }
    Ok(ObservationSet { frames })
}
