//! Detection QC: known identities, one detection per identity and view.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::{read_document, write_document};
use super::observations::{check_confidence, keypoints_from_records, CameraObservation, CropRecord, Detection, FrameObservation, KeypointObs, ObservationSet};
use super::png::load_mask;
use crate::error::Result;
use crate::render::{CropWindow, Raster};

pub const DETECTIONS: &str = "detections";
pub const EXCLUSIONS: &str = "exclusion-log";

/// What to do when one identity has several detections in a view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuplicatePolicy {
    /// Drop the view for that identity.
    #[default]
    Exclude,
    /// Keep the most confident detection.
    KeepHighest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDetection {
    pub detection: Detection,
    pub keypoints: Vec<KeypointObs>,
    pub crop: Option<CropWindow>,
    pub mask: Option<Raster<bool>>,
}

/// Detector output of one camera in one frame. An empty list means the
/// camera recorded the frame and found nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawView {
    pub camera: String,
    pub detections: Vec<RawDetection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub frame: usize,
    pub views: Vec<RawView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    UnknownIdentity,
    Duplicate,
    /// Lower-confidence duplicate discarded under [`DuplicatePolicy::KeepHighest`].
    DuplicateDropped,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exclusion {
    pub frame: usize,
    pub camera: String,
    pub identity: String,
    pub reason: ExclusionReason,
    /// Detection confidence, absent for missing detections.
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcOutput {
    pub observations: BTreeMap<String, ObservationSet>,
    pub log: Vec<Exclusion>,
}

/// Splits raw detections into one observation set per known identity.
pub fn qc_filter(raw: &[RawFrame], known: &[String], policy: DuplicatePolicy) -> QcOutput {
    let mut observations: BTreeMap<String, ObservationSet> = known.iter().map(|k| (k.clone(), ObservationSet::default())).collect();
    let mut log = Vec::new();
    for f in raw {
        let mut per_id: BTreeMap<&str, FrameObservation> =
            known.iter().map(|k| (k.as_str(), FrameObservation { frame: f.frame, views: Vec::new() })).collect();
        for v in &f.views {
            let entry = |identity: &str, reason, confidence| Exclusion { frame: f.frame, camera: v.camera.clone(), identity: identity.into(), reason, confidence };
            for d in &v.detections {
                if !known.contains(&d.detection.identity) {
                    log.push(entry(&d.detection.identity, ExclusionReason::UnknownIdentity, Some(d.detection.confidence)));
                }
            }
            for id in known {
                let mut mine: Vec<&RawDetection> = v.detections.iter().filter(|d| &d.detection.identity == id).collect();
                let chosen = match mine.len() {
                    0 => {
                        log.push(entry(id, ExclusionReason::Missing, None));
                        None
                    }
                    1 => Some(mine[0]),
                    _ => match policy {
                        DuplicatePolicy::Exclude => {
                            for d in &mine {
                                log.push(entry(id, ExclusionReason::Duplicate, Some(d.detection.confidence)));
                            }
                            None
                        }
                        DuplicatePolicy::KeepHighest => {
                            // Stable: the first of equally confident detections wins.
                            mine.sort_by(|a, b| b.detection.confidence.total_cmp(&a.detection.confidence));
                            for d in &mine[1..] {
                                log.push(entry(id, ExclusionReason::DuplicateDropped, Some(d.detection.confidence)));
                            }
                            Some(mine[0])
                        }
                    },
                };
                if let Some(d) = chosen {
                    per_id.get_mut(id.as_str()).expect("known identity").views.push(CameraObservation {
                        camera: v.camera.clone(),
                        keypoints: d.keypoints.clone(),
                        detection_confidence: d.detection.confidence,
                        crop: d.crop.clone(),
                        mask: d.mask.clone(),
                        image: None,
                    });
                }
            }
        }
        for (id, fo) in per_id {
            observations.get_mut(id).expect("known identity").frames.push(fo);
        }
    }
    QcOutput { observations, log }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    identity: String,
    bbox: [f64; 4],
    confidence: f64,
    keypoints: Vec<[f64; 3]>,
    crop: Option<CropRecord>,
    mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawViewRecord {
    camera: String,
    detections: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrameRecord {
    frame: usize,
    views: Vec<RawViewRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionsRecord {
    frames: Vec<RawFrameRecord>,
}

/// Loads detector output. Mask paths are relative to the file.
pub fn load_detections(path: &Path) -> Result<Vec<RawFrame>> {
    let rec: DetectionsRecord = read_document(path, DETECTIONS, "px")?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut frames = Vec::with_capacity(rec.frames.len());
    for (fi, f) in rec.frames.into_iter().enumerate() {
        let mut views = Vec::with_capacity(f.views.len());
        for (vi, v) in f.views.into_iter().enumerate() {
            let mut detections = Vec::with_capacity(v.detections.len());
            for (di, d) in v.detections.into_iter().enumerate() {
                let record = format!("data.frames[{fi}].views[{vi}].detections[{di}]");
                check_confidence(path, &record, "confidence", d.confidence)?;
                let [x0, y0, x1, y1] = d.bbox;
                detections.push(RawDetection {
                    detection: Detection { identity: d.identity, x0, y0, x1, y1, confidence: d.confidence },
                    keypoints: keypoints_from_records(path, &record, &d.keypoints)?,
                    crop: d.crop.map(|c| c.to_crop(&v.camera)),
                    mask: d.mask.map(|m| load_mask(&base.join(m))).transpose()?,
                });
            }
            views.push(RawView { camera: v.camera, detections });
        }
        frames.push(RawFrame { frame: f.frame, views });
    }
    Ok(frames)
}

pub fn save_exclusion_log(path: &Path, log: &[Exclusion]) -> Result<()> {
    write_document(path, EXCLUSIONS, "px", &log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(id: &str, conf: f64) -> RawDetection {
        RawDetection {
            detection: Detection { identity: id.into(), x0: 0.0, y0: 0.0, x1: 10.0, y1: 10.0, confidence: conf },
            keypoints: vec![KeypointObs { u: 1.0, v: 2.0, confidence: conf }],
            crop: None,
            mask: None,
        }
    }

    fn frame(views: Vec<(&str, Vec<RawDetection>)>) -> Vec<RawFrame> {
        vec![RawFrame { frame: 7, views: views.into_iter().map(|(c, d)| RawView { camera: c.into(), detections: d }).collect() }]
    }

    fn known() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn clean_input_passes_unchanged() {
        let raw = frame(vec![("00", vec![det("a", 0.9), det("b", 0.8)]), ("01", vec![det("b", 0.7), det("a", 0.6)])]);
        let out = qc_filter(&raw, &known(), DuplicatePolicy::Exclude);
        assert!(out.log.is_empty());
        let a = &out.observations["a"].frames[0];
        assert_eq!(a.views.iter().map(|v| (v.camera.as_str(), v.detection_confidence)).collect::<Vec<_>>(), vec![("00", 0.9), ("01", 0.6)]);
    }

    #[test]
    fn duplicates_excluded_and_both_logged() {
        let raw = frame(vec![("00", vec![det("a", 0.9), det("a", 0.7), det("b", 0.8)])]);
        let out = qc_filter(&raw, &known(), DuplicatePolicy::Exclude);
        assert!(out.observations["a"].frames[0].views.is_empty());
        assert_eq!(out.observations["b"].frames[0].views.len(), 1);
        let logged: Vec<_> = out.log.iter().map(|e| (e.identity.as_str(), e.reason, e.confidence)).collect();
        assert_eq!(logged, vec![("a", ExclusionReason::Duplicate, Some(0.9)), ("a", ExclusionReason::Duplicate, Some(0.7))]);
    }

    #[test]
    fn keep_highest_retains_max_confidence() {
        let raw = frame(vec![("00", vec![det("a", 0.7), det("a", 0.9), det("b", 0.8)])]);
        let out = qc_filter(&raw, &known(), DuplicatePolicy::KeepHighest);
        assert_eq!(out.observations["a"].frames[0].views[0].detection_confidence, 0.9);
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].reason, ExclusionReason::DuplicateDropped);
    }

    #[test]
    fn unknown_and_missing_are_logged() {
        let raw = frame(vec![("00", vec![det("a", 0.9), det("zz", 0.5)])]);
        let out = qc_filter(&raw, &known(), DuplicatePolicy::Exclude);
        assert!(!out.observations.contains_key("zz"));
        let logged: Vec<_> = out.log.iter().map(|e| (e.identity.as_str(), e.reason)).collect();
        assert_eq!(logged, vec![("zz", ExclusionReason::UnknownIdentity), ("b", ExclusionReason::Missing)]);
    }

    #[test]
    fn every_excluded_view_is_logged() {
        let raw = frame(vec![("00", vec![det("a", 0.9), det("a", 0.2)]), ("01", vec![]), ("02", vec![det("b", 0.3)])]);
        let out = qc_filter(&raw, &known(), DuplicatePolicy::Exclude);
        for id in known() {
            let kept: Vec<_> = out.observations[&id].frames[0].views.iter().map(|v| v.camera.clone()).collect();
            for cam in ["00", "01", "02"] {
                let logged = out.log.iter().any(|e| e.identity == id && e.camera == cam);
                assert!(kept.contains(&cam.to_string()) != logged, "{id} {cam}");
            }
        }
    }
}
