//! Default synthetic camera rig.

use nalgebra::Vector3;

use crate::error::Result;
use crate::geometry::{Camera, CameraRig};

/// Enclosure extent (meters): x, y, z with the floor at `z = 0`.
pub const VOLUME: [f64; 3] = [2.3, 3.1, 2.1];

pub const IMAGE_WIDTH: u32 = 1920;
pub const IMAGE_HEIGHT: u32 = 1200;
pub const FOCAL: f64 = 1400.0;

/// Ring positions in camera-id order. Early ids are spread around the ring
/// so any prefix of the rig sees the subject from well-separated angles.
const RING_ORDER: [usize; 16] = [0, 4, 8, 12, 2, 6, 10, 14, 1, 5, 9, 13, 3, 7, 11, 15];

/// `n <= 16` cameras on the enclosure walls at alternating heights, all
/// aimed at the middle of the floor area.
pub fn default_camera_rig(n: usize) -> Result<CameraRig> {
    assert!(n <= RING_ORDER.len(), "at most 16 synthetic cameras");
    let (hx, hy) = (VOLUME[0] / 2.0 - 0.05, VOLUME[1] / 2.0 - 0.05);
    let target = Vector3::new(0.0, 0.0, 0.3);
    let cameras = RING_ORDER[..n]
        .iter()
        .enumerate()
        .map(|(id, &slot)| {
            let a = slot as f64 / 16.0 * std::f64::consts::TAU;
            let (c, s) = (a.cos(), a.sin());
            // Project the direction onto the rectangular wall.
            let t = (hx / c.abs().max(1e-9)).min(hy / s.abs().max(1e-9));
            let z = if slot % 2 == 0 { 1.9 } else { 1.3 };
            let eye = Vector3::new(c * t, s * t, z);
            Camera::look_at(format!("{id:02}"), eye, target, Vector3::z(), FOCAL, IMAGE_WIDTH, IMAGE_HEIGHT)
        })
        .collect::<Result<Vec<_>>>()?;
    CameraRig::new(cameras, 40.0, "synthetic")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cameras_inside_volume_and_see_center() {
        let rig = default_camera_rig(16).unwrap();
        assert_eq!(rig.len(), 16);
        for c in &rig.cameras {
            let e = c.center();
            assert!(e.x.abs() <= VOLUME[0] / 2.0 && e.y.abs() <= VOLUME[1] / 2.0 && e.z <= VOLUME[2]);
            let p = c.project(&Vector3::new(0.0, 0.0, 0.3)).unwrap();
            assert!((p.x - 960.0).abs() < 1e-6 && (p.y - 600.0).abs() < 1e-6);
        }
    }
}
