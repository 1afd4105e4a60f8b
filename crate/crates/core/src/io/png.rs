//! Masks and crop images as PNG files.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use nalgebra::Vector3;

use super::format::io_error;
use crate::error::{Error, Result};
use crate::render::Raster;

/// Gray values at or above this are foreground.
pub const MASK_THRESHOLD: u8 = 128;

/// File name of the mask of `camera` in `frame`.
pub fn mask_file_name(camera: &str, frame: usize) -> String {
    format!("cam{camera}_f{frame:05}.png")
}

fn image_error(path: &Path, source: image::ImageError) -> Error {
    Error::Image { path: path.to_path_buf(), source }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(d) => std::fs::create_dir_all(d).map_err(|e| io_error(d, e)),
        None => Ok(()),
    }
}

pub fn save_mask(path: &Path, mask: &Raster<bool>) -> Result<()> {
    ensure_parent(path)?;
    let img = GrayImage::from_fn(mask.width as u32, mask.height as u32, |x, y| Luma([if *mask.get(x as usize, y as usize) { 255 } else { 0 }]));
    img.save(path).map_err(|e| image_error(path, e))
}

/// Loads any image, converts it to 8-bit gray and thresholds it.
pub fn load_mask(path: &Path) -> Result<Raster<bool>> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Raster::from_vec(w, h, img.pixels().map(|p| p.0[0] >= MASK_THRESHOLD).collect())
}

/// Saves an RGB raster; values are rounded and clamped to `[0, 255]`.
pub fn save_image(path: &Path, image: &Raster<Vector3<f64>>) -> Result<()> {
    ensure_parent(path)?;
    let q = |c: f64| c.round().clamp(0.0, 255.0) as u8;
    let img = RgbImage::from_fn(image.width as u32, image.height as u32, |x, y| {
        let c = image.get(x as usize, y as usize);
        Rgb([q(c.x), q(c.y), q(c.z)])
    });
    img.save(path).map_err(|e| image_error(path, e))
}

pub fn load_image(path: &Path) -> Result<Raster<Vector3<f64>>> {
    let img = image::open(path).map_err(|e| image_error(path, e))?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Raster::from_vec(w, h, img.pixels().map(|p| Vector3::new(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn file_name_pattern() {
        assert_eq!(mask_file_name("03", 12), "cam03_f00012.png");
    }

    #[test]
    fn gray_levels_threshold_at_128() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        GrayImage::from_fn(4, 1, |x, _| Luma([[0, 127, 128, 255][x as usize]])).save(&p).unwrap();
        assert_eq!(load_mask(&p).unwrap().data, vec![false, false, true, true]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn mask_round_trip((w, h, bits) in (1usize..20, 1usize..20).prop_flat_map(|(w, h)| (Just(w), Just(h), prop::collection::vec(any::<bool>(), w * h)))) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.png");
            let m = Raster::from_vec(w, h, bits).unwrap();
            save_mask(&p, &m).unwrap();
            prop_assert_eq!(load_mask(&p).unwrap(), m);
        }

        #[test]
        fn image_round_trip_on_8bit_values(px in prop::collection::vec((0u8.., 0u8.., 0u8..), 6)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("i.png");
            let img = Raster::from_vec(3, 2, px.iter().map(|&(r, g, b)| Vector3::new(r as f64, g as f64, b as f64)).collect()).unwrap();
            save_image(&p, &img).unwrap();
            prop_assert_eq!(load_image(&p).unwrap(), img);
        }
    }
}
