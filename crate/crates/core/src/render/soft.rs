//! Soft silhouette rasterizer.
//!
//! Each triangle contributes `sigmoid(sharpness * d)` at a pixel, where `d`
//! is the signed 2D distance from the pixel center to the projected triangle
//! (positive inside, see [`signed_distance`]). Contributions are merged with
//! the probabilistic union `1 - prod(1 - p)`. Contributions whose logit is below `-SIGMOID_CUTOFF`
//! are dropped.

use nalgebra::{Matrix2x3, Vector2, Vector3};

use super::crop::CropWindow;
use super::raster::Raster;
use crate::geometry::Camera;

pub const SIGMOID_CUTOFF: f64 = 30.0;

/// Pixels whose accumulated `log(1 - mask)` is below `-SATURATED` are exactly
/// 1 in double precision; further contributions and their (< 1e-21)
/// gradient weights are skipped.
const SATURATED: f64 = 50.0;

/// Rendered soft mask over a crop, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSilhouette {
    pub mask: Raster<f64>,
    pub sharpness: f64,
}

/// Logit slope per crop diagonal at unit sharpness scale.
///
/// The union over all faces widens the soft outline by several
/// transition widths, so the slope is chosen where the silhouette-optimal
/// mesh scale stays within 1% of the true one.
pub const SHARPNESS_PER_DIAGONAL: f64 = 560.0;

/// Default sharpness for a crop, in inverse raster pixels.
pub fn default_sharpness(crop: &CropWindow) -> f64 {
    SHARPNESS_PER_DIAGONAL / crop.diagonal()
}

pub(crate) type ProjectedVertex = Option<(Vector2<f64>, Matrix2x3<f64>)>;

pub(crate) fn project_vertices(camera: &Camera, crop: &CropWindow, vertices: &[Vector3<f64>]) -> Vec<ProjectedVertex> {
    vertices.iter().map(|v| crop.project_with_jacobian(camera, v)).collect()
}

struct Tri {
    idx: [usize; 3],
    v: [Vector2<f64>; 3],
    orient: f64,
    /// Per edge `e -> e+1`: the edge vector and its inverse length.
    ab: [Vector2<f64>; 3],
    inv_len: [f64; 3],
    xs: (usize, usize),
    ys: (usize, usize),
}

fn triangles(
    projected: &[ProjectedVertex],
    faces: &[[usize; 3]],
    reach: f64,
    width: usize,
    height: usize,
) -> Vec<Tri> {
    let mut out = Vec::with_capacity(faces.len());
    for f in faces {
        let (Some(a), Some(b), Some(c)) = (&projected[f[0]], &projected[f[1]], &projected[f[2]]) else {
            continue;
        };
        let v = [a.0, b.0, c.0];
        let e0 = v[1] - v[0];
        let e1 = v[2] - v[0];
        let area2 = e0.x * e1.y - e0.y * e1.x;
        if area2.abs() < 1e-12 {
            continue;
        }
        let minx = v.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - reach;
        let maxx = v.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + reach;
        let miny = v.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - reach;
        let maxy = v.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + reach;
        // Pixel centers at i + 0.5 inside [min, max].
        let lo = |m: f64| (m - 0.5).ceil().max(0.0);
        let hi = |m: f64, n: usize| ((m - 0.5).floor() + 1.0).clamp(0.0, n as f64);
        let xs = (lo(minx) as usize, hi(maxx, width) as usize);
        let ys = (lo(miny) as usize, hi(maxy, height) as usize);
        if xs.0 >= xs.1 || ys.0 >= ys.1 {
            continue;
        }
        let ab = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
        out.push(Tri {
            idx: *f,
            v,
            orient: area2.signum(),
            ab,
            inv_len: ab.map(|e| 1.0 / e.norm()),
            xs,
            ys,
        });
    }
    out
}

/// Exponent of the smooth minimum used for interior distances. The code
/// below takes its root with three square roots.
const INTERIOR_NORM: i32 = 8;

#[inline]
fn inv_pow8(l: f64) -> f64 {
    let i = 1.0 / l;
    let i2 = i * i;
    let i4 = i2 * i2;
    i4 * i4
}

#[inline]
fn root8(s: f64) -> f64 {
    s.sqrt().sqrt().sqrt()
}

#[inline]
fn edge_lines(p: &Vector2<f64>, tri: &Tri) -> [f64; 3] {
    std::array::from_fn(|e| {
        let ap = p - tri.v[e];
        let ab = tri.ab[e];
        tri.orient * (ab.x * ap.y - ab.y * ap.x) * tri.inv_len[e]
    })
}

/// Signed distance from `p` to the triangle, positive inside, or `None` when
/// it is certainly below `-limit`.
///
/// Outside, this is the exact distance to the nearest edge segment (smooth
/// for a convex triangle). Inside, the three edge-line distances are merged
/// with a `p`-norm minimum so the field has no ridge along the medial axis;
/// it agrees with the exact distance to first order at the edges.
#[inline]
fn signed_distance(p: &Vector2<f64>, tri: &Tri, limit: f64) -> Option<f64> {
    let line = edge_lines(p, tri);
    if line.iter().all(|&l| l > 0.0) {
        let s: f64 = line.iter().map(|&l| inv_pow8(l)).sum();
        return Some(1.0 / root8(s));
    }
    // The distance to a violated half-plane bounds the true distance.
    if line.iter().any(|&l| l < -limit) {
        return None;
    }
    let mut best = f64::INFINITY;
    for e in 0..3 {
        let ab = tri.ab[e];
        let ap = p - tri.v[e];
        let t = (ap.dot(&ab) * tri.inv_len[e] * tri.inv_len[e]).clamp(0.0, 1.0);
        best = best.min((ap - ab * t).norm_squared());
    }
    Some(-best.sqrt())
}

/// [`signed_distance`] and its gradient with respect to the three projected
/// vertices.
fn signed_distance_grad(p: &Vector2<f64>, tri: &Tri, limit: f64) -> Option<(f64, [Vector2<f64>; 3])> {
    let line = edge_lines(p, tri);
    let mut g = [Vector2::zeros(); 3];
    if line.iter().all(|&l| l > 0.0) {
        let s: f64 = line.iter().map(|&l| inv_pow8(l)).sum();
        let d = 1.0 / root8(s);
        for e in 0..3 {
            let a = tri.v[e];
            let b = tri.v[(e + 1) % 3];
            let ap = p - a;
            let inv = tri.inv_len[e];
            let c = line[e] / inv;
            let dc_da = Vector2::new(b.y - p.y, p.x - b.x) * tri.orient;
            let dc_db = Vector2::new(ap.y, -ap.x) * tri.orient;
            let dlen_db = tri.ab[e] * inv;
            let dl_da = dc_da * inv + dlen_db * (c * inv * inv);
            let dl_db = dc_db * inv - dlen_db * (c * inv * inv);
            // d = s^(-1/m), ds/dl = -m l^(-m-1)  =>  dd/dl = (d / l)^(m+1)
            let w = (d / line[e]).powi(INTERIOR_NORM + 1);
            g[e] += dl_da * w;
            g[(e + 1) % 3] += dl_db * w;
        }
        return Some((d, g));
    }
    if line.iter().any(|&l| l < -limit) {
        return None;
    }
    let mut best = (f64::INFINITY, 0usize, 0.0, Vector2::zeros());
    for e in 0..3 {
        let a = tri.v[e];
        let ab = tri.ab[e];
        let ap = p - a;
        let t = (ap.dot(&ab) * tri.inv_len[e] * tri.inv_len[e]).clamp(0.0, 1.0);
        let q = a + ab * t;
        let d2 = (p - q).norm_squared();
        if d2 < best.0 {
            best = (d2, e, t, q);
        }
    }
    let (d2, e, t, q) = best;
    let d = d2.sqrt();
    if d > 0.0 {
        // Envelope: only the endpoints move the closest point.
        let dir = (q - p) / d;
        g[e] = -dir * (1.0 - t);
        g[(e + 1) % 3] = -dir * t;
    }
    Some((-d, g))
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 40.0 {
        z
    } else if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sum of `log(1 - p)` per pixel.
fn log_complement(tris: &[Tri], width: usize, height: usize, sharpness: f64) -> Vec<f64> {
    let mut q = vec![0.0; width * height];
    let limit = SIGMOID_CUTOFF / sharpness;
    for tri in tris {
        for y in tri.ys.0..tri.ys.1 {
            for x in tri.xs.0..tri.xs.1 {
                let i = y * width + x;
                if q[i] < -SATURATED {
                    continue;
                }
                let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                let Some(d) = signed_distance(&p, tri, limit) else { continue };
                let z = sharpness * d;
                if z > -SIGMOID_CUTOFF {
                    q[i] -= softplus(z);
                }
            }
        }
    }
    q
}

/// Forward state kept for [`SoftRender::backward`].
pub struct SoftRender {
    projected: Vec<ProjectedVertex>,
    tris: Vec<Tri>,
    q: Vec<f64>,
    width: usize,
    height: usize,
    sharpness: f64,
}

impl SoftRender {
    pub fn new(camera: &Camera, vertices: &[Vector3<f64>], faces: &[[usize; 3]], crop: &CropWindow, sharpness: f64) -> Self {
        assert!(sharpness > 0.0, "sharpness must be positive");
        let projected = project_vertices(camera, crop, vertices);
        let (w, h) = (crop.out_w, crop.out_h);
        let tris = triangles(&projected, faces, SIGMOID_CUTOFF / sharpness, w, h);
        let q = log_complement(&tris, w, h, sharpness);
        Self { projected, tris, q, width: w, height: h, sharpness }
    }

    pub fn silhouette(&self) -> RenderedSilhouette {
        RenderedSilhouette {
            mask: Raster {
                width: self.width,
                height: self.height,
                data: self.q.iter().map(|&v| -v.exp_m1()).collect(),
            },
            sharpness: self.sharpness,
        }
    }

    /// Gradient of `sum(grad_mask * mask)` with respect to the mesh vertices.
    pub fn backward(&self, grad_mask: &Raster<f64>) -> Vec<Vector3<f64>> {
        let w = self.width;
        assert_eq!((grad_mask.width, grad_mask.height), (w, self.height));
        let k = self.sharpness;
        let limit = SIGMOID_CUTOFF / k;
        // d mask / d log(1 - p) = -exp(Q), shared by every triangle at a pixel.
        let scale: Vec<f64> = grad_mask.data.iter().zip(&self.q).map(|(g, q)| if *q < -SATURATED { 0.0 } else { g * k * q.exp() })
            .collect();
        let mut grad2 = vec![Vector2::zeros(); self.projected.len()];
        for tri in &self.tris {
            for y in tri.ys.0..tri.ys.1 {
                for x in tri.xs.0..tri.xs.1 {
                    let s = scale[y * w + x];
                    if s == 0.0 {
                        continue;
                    }
                    let p = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                    let Some((sd, g)) = signed_distance_grad(&p, tri, limit) else { continue };
                    let z = k * sd;
                    if z <= -SIGMOID_CUTOFF {
                        continue;
                    }
                    let s = s * sigmoid(z);
                    for j in 0..3 {
                        grad2[tri.idx[j]] += g[j] * s;
                    }
                }
            }
        }
        grad2
            .iter()
            .zip(&self.projected)
            .map(|(g, pv)| match pv {
                Some((_, j)) if *g != Vector2::zeros() => j.transpose() * g,
                _ => Vector3::zeros(),
            })
            .collect()
    }
}

/// Soft silhouette of a mesh in a crop.
pub fn rasterize_soft_silhouette(
    camera: &Camera,
    vertices: &[Vector3<f64>],
    faces: &[[usize; 3]],
    crop: &CropWindow,
    sharpness: f64,
) -> RenderedSilhouette {
    SoftRender::new(camera, vertices, faces, crop, sharpness).silhouette()
}

/// Gradient of `sum(grad_mask * mask)` with respect to the mesh vertices.
pub fn soft_silhouette_backward(
    camera: &Camera,
    vertices: &[Vector3<f64>],
    faces: &[[usize; 3]],
    crop: &CropWindow,
    sharpness: f64,
    grad_mask: &Raster<f64>,
) -> Vec<Vector3<f64>> {
    SoftRender::new(camera, vertices, faces, crop, sharpness).backward(grad_mask)
}
