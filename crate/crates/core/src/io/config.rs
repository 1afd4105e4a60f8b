//! Run configuration shared by the fitting subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::format::read_document;
use super::qc::DuplicatePolicy;
use crate::error::Result;
use crate::solve::{SequenceFitConfig, ShapeFitConfig, StageConfig, StageKind, TriangulationMode};

pub const RUN_CONFIG: &str = "run-config";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColorConfig {
    pub stage: StageConfig,
    pub light: f64,
}

impl Default for ColorConfig {
    fn default() -> Self {
        Self { stage: StageConfig::preset(StageKind::Color), light: 1.0 }
    }
}

/// Inputs and overrides of one run. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Rig bundle directory; the built-in template when absent.
    pub rig: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    /// QC'd observations of one subject.
    pub observations: Option<PathBuf>,
    /// Raw detector output, filtered for `identity` when no observations are given.
    pub detections: Option<PathBuf>,
    pub identity: Option<String>,
    /// Identities present in the scene; defaults to `[identity]`.
    pub known_identities: Vec<String>,
    pub duplicate_policy: DuplicatePolicy,
    pub shape: Option<PathBuf>,
    pub poses: Option<PathBuf>,
    /// Reference 3D keypoints for evaluation.
    pub reference: Option<PathBuf>,
    /// Frame numbers used by shape and color fitting; every tenth frame when absent.
    pub keyframes: Option<Vec<usize>>,
    pub seed: u64,
    pub triangulation: TriangulationMode,
    /// Frames whose mean reprojection error exceeds this are flagged (px).
    pub reprojection_threshold: f64,
    pub shape_fit: ShapeFitConfig,
    pub color: ColorConfig,
    pub sequence: SequenceFitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rig: None,
            calibration: None,
            observations: None,
            detections: None,
            identity: None,
            known_identities: Vec::new(),
            duplicate_policy: DuplicatePolicy::default(),
            shape: None,
            poses: None,
            reference: None,
            keyframes: None,
            seed: 0,
            triangulation: TriangulationMode::default(),
            reprojection_threshold: 5.0,
            shape_fit: ShapeFitConfig::default(),
            color: ColorConfig::default(),
            sequence: SequenceFitConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut c: Self = read_document(path, RUN_CONFIG, "m")?;
        c.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(c)
    }

    /// Makes every relative path relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.rig,
            &mut self.calibration,
            &mut self.observations,
            &mut self.detections,
            &mut self.shape,
            &mut self.poses,
            &mut self.reference,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Applies the seed to every stochastic component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.shape_fit.seed = seed;
        self.sequence.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::format::write_document;

    #[test]
    fn round_trip_and_path_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        let c = RunConfig { calibration: Some("cal.json".into()), seed: 9, ..RunConfig::default() };
        write_document(&p, RUN_CONFIG, "m", &c).unwrap();
        let back = RunConfig::load(&p).unwrap();
        assert_eq!(back.calibration, Some(dir.path().join("cal.json")));
        assert_eq!(RunConfig { calibration: c.calibration.clone(), ..back.clone() }, c);
        // The default time stage gates silhouettes at a finite threshold and
        // the shape stages do not; both survive the round trip.
        assert_eq!(back.sequence.stage.weights.sigma_kp, c.sequence.stage.weights.sigma_kp);
    }

    #[test]
    fn unknown_field_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"format":"run-config","version":1,"units":"m","data":{"sed":1}}"#).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(crate::Error::Parse { .. })));
    }

    #[test]
    fn partial_config_uses_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"format":"run-config","version":1,"units":"m","data":{"sequence":{"window":{"length":20,"overlap":4,"cameras":3}}}}"#).unwrap();
        let c = RunConfig::load(&p).unwrap();
        assert_eq!(c.sequence.window.length, 20);
        assert_eq!(c.sequence.stage, SequenceFitConfig::default().stage);
    }
}
