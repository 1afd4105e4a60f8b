//! Soft and hard rasterization into crop windows.

pub mod crop;
pub mod hard;
pub mod raster;
pub mod soft;

pub use crop::{CropWindow, PixelBox, DEFAULT_CROP_CAP};
pub use hard::{rasterize_hard, render_color};
pub use raster::Raster;
pub use soft::{rasterize_soft_silhouette, RenderedSilhouette};
