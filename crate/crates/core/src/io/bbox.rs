use nalgebra::Vector3;

use crate::geometry::Camera;
use crate::render::PixelBox;

/// Default safety margin around triangulated keypoints (meters).
pub const DEFAULT_BBOX_MARGIN: f64 = 0.1;

/// Image box covering `points` grown by `margin` in the plane orthogonal to
/// the camera's viewing axis, clipped to the image. Points behind the
/// camera are ignored; `None` when nothing projects.
pub fn bbox_from_keypoints(points: &[Vector3<f64>], camera: &Camera, margin: f64) -> Option<PixelBox> {
    let right: Vector3<f64> = camera.rotation.row(0).transpose();
    let down: Vector3<f64> = camera.rotation.row(1).transpose();
    let mut b = PixelBox {
        x0: f64::INFINITY,
        y0: f64::INFINITY,
        x1: f64::NEG_INFINITY,
        y1: f64::NEG_INFINITY,
    };
    for p in points.iter().filter(|p| p.iter().all(|x| x.is_finite())) {
        for (sx, sy) in [(0.0, 0.0), (-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
            let q = p + right * (sx * margin) + down * (sy * margin);
            if let Some(px) = camera.project(&q) {
                b.x0 = b.x0.min(px.x);
                b.y0 = b.y0.min(px.y);
                b.x1 = b.x1.max(px.x);
                b.y1 = b.y1.max(px.y);
            }
        }
    }
    if !b.x0.is_finite() {
        return None;
    }
    let (w, h) = (camera.width as f64, camera.height as f64);
    b.x0 = b.x0.clamp(0.0, w);
    b.x1 = b.x1.clamp(0.0, w);
    b.y0 = b.y0.clamp(0.0, h);
    b.y1 = b.y1.clamp(0.0, h);
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera::look_at("a", Vector3::new(0.0, -3.0, 1.0), Vector3::new(0.0, 0.0, 0.5), Vector3::z(), 1000.0, 1920, 1200).unwrap()
    }

    fn pts() -> Vec<Vector3<f64>> {
        vec![Vector3::new(-0.2, 0.0, 0.3), Vector3::new(0.3, 0.1, 0.6), Vector3::new(0.0, -0.1, 0.5)]
    }

    #[test]
    fn zero_margin_is_tight_hull() {
        let c = cam();
        let b = bbox_from_keypoints(&pts(), &c, 0.0).unwrap();
        let px: Vec<_> = pts().iter().map(|p| c.project(p).unwrap()).collect();
        assert_eq!(b.x0, px.iter().map(|p| p.x).fold(f64::INFINITY, f64::min));
        assert_eq!(b.y1, px.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn grows_monotonically_with_margin() {
        let c = cam();
        let mut prev = bbox_from_keypoints(&pts(), &c, 0.0).unwrap();
        for m in [0.02, 0.05, DEFAULT_BBOX_MARGIN, 0.3] {
            let b = bbox_from_keypoints(&pts(), &c, m).unwrap();
            assert!(b.contains(&prev));
            prev = b;
        }
    }
}
