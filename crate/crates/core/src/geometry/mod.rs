//! Cameras, triangulation and similarity alignment.

pub mod camera;
pub mod procrustes;
pub mod triangulate;

pub use camera::{Camera, CameraRig};
pub use procrustes::{procrustes_similarity, Similarity};
pub use triangulate::{mean_reprojection_error, triangulate_dlt, triangulate_ransac, RansacConfig, RansacResult, View};
