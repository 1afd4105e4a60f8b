//! Linear (DLT) triangulation and its RANSAC wrapper.

use nalgebra::{DMatrix, Vector2, Vector3};
use rand::seq::index::sample;
use rand::Rng;

use super::camera::Camera;
use crate::error::{Error, Result};

/// Relative singular-value gap below which the DLT system is rank deficient.
const RANK_TOL: f64 = 1e-12;

/// One 2D observation of the point being triangulated.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub camera: &'a Camera,
    pub pixel: Vector2<f64>,
    pub confidence: f64,
}

impl<'a> View<'a> {
    pub fn new(camera: &'a Camera, pixel: Vector2<f64>) -> Self {
        Self {
            camera,
            pixel,
            confidence: 1.0,
        }
    }
}

/// Homogeneous least-squares triangulation over all `views`.
///
/// Pixels are first mapped to undistorted normalized coordinates, so the
/// stacked system uses the extrinsic matrices `[R | t]`.
pub fn triangulate_dlt(views: &[View<'_>]) -> Result<Vector3<f64>> {
    if views.len() < 2 {
        return Err(Error::Degenerate(format!("DLT needs at least 2 views, got {}", views.len())));
    }
    let mut a = DMatrix::<f64>::zeros(2 * views.len(), 4);
    for (i, v) in views.iter().enumerate() {
        let x = v.camera.normalize_pixel(&v.pixel);
        let p = v.camera.extrinsic_matrix();
        let r0 = p.row(2) * x.x - p.row(0);
        let r1 = p.row(2) * x.y - p.row(1);
        for c in 0..4 {
            a[(2 * i, c)] = r0[c];
            a[(2 * i + 1, c)] = r1[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let s = &svd.singular_values;
    // Singular values are sorted in decreasing order for this shape.
    let (imin, _) = s.argmin();
    let mut sorted: Vec<f64> = s.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted[0] <= 0.0 || sorted[2] / sorted[0] < RANK_TOL {
        return Err(Error::Degenerate("rank-deficient DLT system".into()));
    }
    let h = v_t.row(imin);
    if h[3].abs() < RANK_TOL * h.norm() {
        return Err(Error::Degenerate("triangulated point at infinity".into()));
    }
    Ok(Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]))
}

/// Mean pixel distance between `point` reprojected into `views` and the
/// observations. Views that cannot see the point count as infinite error.
pub fn mean_reprojection_error(point: &Vector3<f64>, views: &[View<'_>]) -> f64 {
    let total: f64 = views
        .iter()
        .map(|v| v.camera.project(point).map_or(f64::INFINITY, |p| (p - v.pixel).norm()))
        .sum();
    total / views.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    /// Number of random view subsets to try.
    pub proposals: usize,
    /// Largest subset size.
    pub subset_max: usize,
    /// Views at or below this confidence are ignored.
    pub min_confidence: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            proposals: 20,
            subset_max: 5,
            min_confidence: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub point: Vector3<f64>,
    /// Mean reprojection error over the winning subset (px).
    pub mean_reprojection_error: f64,
    /// Indices into the input views forming the winning subset.
    pub inliers: Vec<usize>,
}

/// Randomized view-subset triangulation.
///
/// Each proposal draws a subset of `2..=subset_max` usable views, runs
/// [`triangulate_dlt`] on it and is scored by the mean reprojection error
/// over that same subset. The lowest-scoring proposal wins.
pub fn triangulate_ransac<R: Rng + ?Sized>(
    views: &[View<'_>],
    config: &RansacConfig,
    rng: &mut R,
) -> Result<RansacResult> {
    if config.proposals == 0 {
        return Err(Error::InvalidArgument("RANSAC needs at least one proposal".into()));
    }
    let usable: Vec<usize> = (0..views.len())
        .filter(|&i| views[i].confidence > config.min_confidence)
        .collect();
    if usable.len() < 2 {
        return Err(Error::Degenerate(format!("{} usable views, need 2", usable.len())));
    }
    let max_size = config.subset_max.max(2).min(usable.len());
    let mut best: Option<RansacResult> = None;
    let mut subset_views = Vec::with_capacity(max_size);
    for _ in 0..config.proposals {
        let size = rng.random_range(2..=max_size);
        let mut picked: Vec<usize> = sample(rng, usable.len(), size).into_iter().map(|k| usable[k]).collect();
        picked.sort_unstable();
        subset_views.clear();
        subset_views.extend(picked.iter().map(|&i| views[i]));
        let Ok(point) = triangulate_dlt(&subset_views) else {
            continue;
        };
        let err = mean_reprojection_error(&point, &subset_views);
        if !err.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| err < b.mean_reprojection_error) {
            best = Some(RansacResult {
                point,
                mean_reprojection_error: err,
                inliers: picked,
            });
        }
    }
    best.ok_or_else(|| Error::Degenerate("all RANSAC proposals were degenerate".into()))
}
