//! Parametric ground-truth motions for the built-in quadruped.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::model::quadruped::CHEST;
use crate::model::rig::RigModel;
use crate::model::shape::PoseState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    /// One fixed posture.
    Static,
    /// Legs and spine swing sinusoidally in place.
    Swing { amplitude: f64, period_frames: f64 },
    /// The root walks along a circle around the floor center while the legs
    /// swing in a diagonal gait.
    Walk {
        radius: f64,
        arc_degrees: f64,
        stride_amplitude: f64,
        period_frames: f64,
    },
}

impl Motion {
    pub fn walk() -> Self {
        Self::Walk {
            radius: 0.6,
            arc_degrees: 60.0,
            stride_amplitude: 0.3,
            period_frames: 40.0,
        }
    }
}

fn base_pose(rig: &RigModel) -> PoseState {
    let mut p = PoseState::rest(rig);
    if let Some(s) = rig.posing_slot(CHEST) {
        p.theta[s] = Vector3::new(0.0, -0.08, 0.05);
    }
    p
}

/// Swing angle about the lateral axis for each leg root, with diagonal legs
/// in phase.
fn leg_phase(joint_name: &str) -> Option<f64> {
    match joint_name {
        "l_shoulder" | "r_hip" => Some(0.0),
        "r_shoulder" | "l_hip" => Some(0.5),
        _ => None,
    }
}

fn swing_legs(rig: &RigModel, pose: &mut PoseState, phase: f64, amplitude: f64) {
    for (slot, &j) in rig.posing_joints().iter().enumerate() {
        let name = &rig.parts().joint_names[j];
        if let Some(off) = leg_phase(name) {
            pose.theta[slot] += Vector3::new(0.0, amplitude * (TAU * (phase + off)).sin(), 0.0);
        } else if j == CHEST {
            pose.theta[slot] += Vector3::new(0.0, 0.0, 0.3 * amplitude * (TAU * phase).sin());
        }
    }
}

/// Ground-truth pose sequence of `frames` frames.
pub fn motion_poses(rig: &RigModel, motion: &Motion, frames: usize) -> Vec<PoseState> {
    (0..frames)
        .map(|n| {
            let mut p = base_pose(rig);
            match *motion {
                Motion::Static => {
                    p.global_rot = Vector3::new(0.0, 0.0, 0.4);
                    p.translation = Vector3::new(0.05, -0.1, 0.0);
                }
                Motion::Swing { amplitude, period_frames } => {
                    p.global_rot = Vector3::new(0.0, 0.0, -0.3);
                    swing_legs(rig, &mut p, n as f64 / period_frames, amplitude);
                }
                Motion::Walk {
                    radius,
                    arc_degrees,
                    stride_amplitude,
                    period_frames,
                } => {
                    let s = if frames > 1 { n as f64 / (frames - 1) as f64 } else { 0.0 };
                    let a = arc_degrees.to_radians() * s - 0.5 * arc_degrees.to_radians();
                    p.translation = Vector3::new(radius * a.cos(), radius * a.sin(), 0.0);
                    // Heading along the tangent of counter-clockwise travel.
                    p.global_rot = Vector3::new(0.0, 0.0, a + std::f64::consts::FRAC_PI_2);
                    swing_legs(rig, &mut p, n as f64 / period_frames, stride_amplitude);
                }
            }
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::quadruped::quadruped;

    #[test]
    fn static_motion_is_constant() {
        let rig = quadruped();
        let p = motion_poses(&rig, &Motion::Static, 5);
        assert!(p.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn walk_moves_along_arc() {
        let rig = quadruped();
        let p = motion_poses(&rig, &Motion::walk(), 200);
        let d = (p[199].translation - p[0].translation).norm();
        // Chord of a 60 degree arc equals the radius.
        assert!((d - 0.6).abs() < 1e-9);
        assert!(p.iter().all(|q| (q.translation.norm() - 0.6).abs() < 1e-12));
    }
}
