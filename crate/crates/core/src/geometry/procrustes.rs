use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Similarity transform `x -> scale * R * x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    /// Weighted sum of squared residuals against `target`.
    pub fn residual(&self, source: &[Vector3<f64>], target: &[Vector3<f64>], weights: &[f64]) -> f64 {
        source
            .iter()
            .zip(target)
            .zip(weights)
            .map(|((s, g), w)| w * (self.apply(s) - g).norm_squared())
            .sum()
    }
}

/// Weighted closed-form similarity alignment of `source` onto `target`
/// (centroid removal, SVD of the cross-covariance, reflection correction,
/// scale from the trace ratio).
pub fn procrustes_similarity(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    weights: &[f64],
) -> Result<Similarity> {
    if source.len() != target.len() {
        return Err(Error::dim("procrustes target", source.len(), target.len()));
    }
    if weights.len() != source.len() {
        return Err(Error::dim("procrustes weights", source.len(), weights.len()));
    }
    let n_pos = weights.iter().filter(|w| **w > 0.0).count();
    let total: f64 = weights.iter().sum();
    if n_pos < 3 || !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Degenerate("procrustes needs 3 positively weighted points".into()));
    }
    let mean = |pts: &[Vector3<f64>]| {
        pts.iter().zip(weights).fold(Vector3::zeros(), |acc, (p, w)| acc + p * *w) / total
    };
    let mu_s = mean(source);
    let mu_t = mean(target);
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for ((s, t), w) in source.iter().zip(target).zip(weights) {
        let ds = s - mu_s;
        cov += (t - mu_t) * ds.transpose() * *w;
        var_s += w * ds.norm_squared();
    }
    cov /= total;
    var_s /= total;

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let d = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    if d[order[0]] <= 0.0 || d[order[1]] / d[order[0]] < 1e-12 {
        return Err(Error::Degenerate("cross-covariance has rank < 2".into()));
    }
    let mut s = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        // Flip the direction of the smallest singular value.
        s[(order[2], order[2])] = -1.0;
    }
    let rotation = u * s * v_t;
    let trace: f64 = (0..3).map(|i| d[i] * s[(i, i)]).sum();
    let scale = trace / var_s;
    let translation = mu_t - rotation * mu_s * scale;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}
