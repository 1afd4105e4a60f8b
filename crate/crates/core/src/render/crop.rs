use nalgebra::{Matrix2x3, Vector2, Vector3};

use super::raster::Raster;
use crate::error::{Error, Result};
use crate::geometry::Camera;

/// Default cap on the raster side length of a crop.
pub const DEFAULT_CROP_CAP: usize = 100;

/// Axis-aligned box in source-image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl PixelBox {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }
    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
    pub fn contains(&self, other: &PixelBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }
}

/// Rectangle of a camera image rendered at a capped resolution.
///
/// The source rectangle `(x0, y0, w, h)` lies inside the camera image; it is
/// resampled to `out_w x out_h` raster pixels with `max(out_w, out_h) <= cap`.
#[derive(Debug, Clone, PartialEq)]
pub struct CropWindow {
    pub camera: String,
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
    pub out_w: usize,
    pub out_h: usize,
}

impl CropWindow {
    pub fn new(camera: &Camera, x0: u32, y0: u32, w: u32, h: u32, cap: usize) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > camera.width || y0 + h > camera.height {
            return Err(Error::InvalidArgument(format!(
                "crop ({x0},{y0},{w},{h}) outside {}x{} image of camera {}",
                camera.width, camera.height, camera.id
            )));
        }
        if cap == 0 {
            return Err(Error::InvalidArgument("crop cap must be positive".into()));
        }
        let s = (cap as f64 / w.max(h) as f64).min(1.0);
        let out_w = ((w as f64 * s).round() as usize).clamp(1, cap);
        let out_h = ((h as f64 * s).round() as usize).clamp(1, cap);
        Ok(Self {
            camera: camera.id.clone(),
            x0,
            y0,
            w,
            h,
            out_w,
            out_h,
        })
    }

    /// Crop around `bbox` grown by `margin` (fraction of its larger side),
    /// clipped to the image.
    pub fn around(camera: &Camera, bbox: &PixelBox, margin: f64, cap: usize) -> Result<Self> {
        let pad = margin * bbox.width().max(bbox.height());
        let x0 = (bbox.x0 - pad).floor().clamp(0.0, camera.width as f64 - 1.0);
        let y0 = (bbox.y0 - pad).floor().clamp(0.0, camera.height as f64 - 1.0);
        let x1 = (bbox.x1 + pad).ceil().clamp(x0 + 1.0, camera.width as f64);
        let y1 = (bbox.y1 + pad).ceil().clamp(y0 + 1.0, camera.height as f64);
        Self::new(camera, x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32, cap)
    }

    /// Whole image at the given cap.
    pub fn full(camera: &Camera, cap: usize) -> Result<Self> {
        Self::new(camera, 0, 0, camera.width, camera.height, cap)
    }

    pub fn scale_x(&self) -> f64 {
        self.out_w as f64 / self.w as f64
    }
    pub fn scale_y(&self) -> f64 {
        self.out_h as f64 / self.h as f64
    }

    /// Crop-raster coordinates of a source-image pixel position.
    #[inline]
    pub fn to_raster(&self, px: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            (px.x - self.x0 as f64) * self.scale_x(),
            (px.y - self.y0 as f64) * self.scale_y(),
        )
    }

    /// Source-image coordinates of a raster position.
    #[inline]
    pub fn to_source(&self, r: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            r.x / self.scale_x() + self.x0 as f64,
            r.y / self.scale_y() + self.y0 as f64,
        )
    }

    pub fn diagonal(&self) -> f64 {
        ((self.out_w * self.out_w + self.out_h * self.out_h) as f64).sqrt()
    }

    /// Projects a world point into the crop raster together with the
    /// 2x3 Jacobian, or `None` when it is behind the camera.
    pub fn project_with_jacobian(
        &self,
        camera: &Camera,
        p: &Vector3<f64>,
    ) -> Option<(Vector2<f64>, Matrix2x3<f64>)> {
        let (px, mut j) = camera.project_with_jacobian(p)?;
        let (sx, sy) = (self.scale_x(), self.scale_y());
        for c in 0..3 {
            j[(0, c)] *= sx;
            j[(1, c)] *= sy;
        }
        Some((self.to_raster(&px), j))
    }

    pub fn project(&self, camera: &Camera, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        camera.project(p).map(|px| self.to_raster(&px))
    }

    /// Samples a full-resolution source raster at the crop's pixel centers.
    pub fn sample<T: Clone>(&self, source: &Raster<T>) -> Raster<T> {
        let mut data = Vec::with_capacity(self.out_w * self.out_h);
        for y in 0..self.out_h {
            for x in 0..self.out_w {
                let s = self.to_source(&super::raster::pixel_center(x, y));
                let sx = (s.x.floor().max(0.0) as usize).min(source.width - 1);
                let sy = (s.y.floor().max(0.0) as usize).min(source.height - 1);
                data.push(source.get(sx, sy).clone());
            }
        }
        Raster {
            width: self.out_w,
            height: self.out_h,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera::look_at("a", Vector3::new(3.0, 0.0, 1.0), Vector3::zeros(), Vector3::z(), 800.0, 640, 480).unwrap()
    }

    #[test]
    fn cap_limits_raster_size() {
        let c = cam();
        let crop = CropWindow::new(&c, 10, 20, 300, 150, 100).unwrap();
        assert_eq!((crop.out_w, crop.out_h), (100, 50));
        let small = CropWindow::new(&c, 10, 20, 60, 40, 100).unwrap();
        assert_eq!((small.out_w, small.out_h), (60, 40));
        assert_eq!(small.scale_x(), 1.0);
    }

    #[test]
    fn rejects_out_of_image() {
        assert!(CropWindow::new(&cam(), 600, 0, 100, 10, 100).is_err());
    }

    #[test]
    fn raster_mapping_round_trips() {
        let crop = CropWindow::new(&cam(), 100, 50, 250, 200, 100).unwrap();
        let p = Vector2::new(173.25, 91.5);
        assert!((crop.to_source(&crop.to_raster(&p)) - p).norm() < 1e-12);
    }

    #[test]
    fn around_box_clips_to_image() {
        let c = cam();
        let b = PixelBox { x0: -20.0, y0: 400.0, x1: 50.0, y1: 470.0 };
        let crop = CropWindow::around(&c, &b, 0.1, 100).unwrap();
        assert_eq!(crop.x0, 0);
        assert!(crop.y0 + crop.h <= 480);
    }
}
