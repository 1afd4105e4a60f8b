//! Z-buffered rasterization: binary coverage and flat vertex-color shading.

use nalgebra::{Vector2, Vector3};

use super::crop::CropWindow;
use super::raster::Raster;
use crate::geometry::Camera;

/// Front-most triangle and its perspective-correct barycentrics per pixel.
#[derive(Debug, Clone)]
pub struct Fragments {
    pub width: usize,
    pub height: usize,
    pub triangle: Vec<Option<usize>>,
    pub bary: Vec<[f64; 3]>,
}

pub fn rasterize_fragments(
    camera: &Camera,
    vertices: &[Vector3<f64>],
    faces: &[[usize; 3]],
    crop: &CropWindow,
) -> Fragments {
    let (w, h) = (crop.out_w, crop.out_h);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut out = Fragments {
        width: w,
        height: h,
        triangle: vec![None; w * h],
        bary: vec![[0.0; 3]; w * h],
    };
    let proj: Vec<Option<(Vector2<f64>, f64)>> = vertices
        .iter()
        .map(|v| {
            let z = camera.to_camera(v).z;
            crop.project(camera, v).map(|p| (p, z))
        })
        .collect();
    for (ti, f) in faces.iter().enumerate() {
        let (Some(a), Some(b), Some(c)) = (proj[f[0]], proj[f[1]], proj[f[2]]) else {
            continue;
        };
        let (p, z) = ([a.0, b.0, c.0], [a.1, b.1, c.1]);
        let area = (p[1] - p[0]).perp(&(p[2] - p[0]));
        if area.abs() < 1e-12 {
            continue;
        }
        let minx = p.iter().map(|q| q.x).fold(f64::INFINITY, f64::min);
        let maxx = p.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max);
        let miny = p.iter().map(|q| q.y).fold(f64::INFINITY, f64::min);
        let maxy = p.iter().map(|q| q.y).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (minx - 0.5).ceil().max(0.0) as usize;
        let x1 = ((maxx - 0.5).floor() + 1.0).clamp(0.0, w as f64) as usize;
        let y0 = (miny - 0.5).ceil().max(0.0) as usize;
        let y1 = ((maxy - 0.5).floor() + 1.0).clamp(0.0, h as f64) as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let q = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                let l = [
                    (p[1] - q).perp(&(p[2] - q)) / area,
                    (p[2] - q).perp(&(p[0] - q)) / area,
                    (p[0] - q).perp(&(p[1] - q)) / area,
                ];
                if l.iter().any(|&v| v < 0.0) {
                    continue;
                }
                let inv: [f64; 3] = std::array::from_fn(|k| l[k] / z[k]);
                let s = inv[0] + inv[1] + inv[2];
                let d = 1.0 / s;
                let i = y * w + x;
                if d < depth[i] {
                    depth[i] = d;
                    out.triangle[i] = Some(ti);
                    out.bary[i] = [inv[0] * d, inv[1] * d, inv[2] * d];
                }
            }
        }
    }
    out
}

/// Binary silhouette with z-buffering.
pub fn rasterize_hard(
    camera: &Camera,
    vertices: &[Vector3<f64>],
    faces: &[[usize; 3]],
    crop: &CropWindow,
) -> Raster<bool> {
    let f = rasterize_fragments(camera, vertices, faces, crop);
    Raster {
        width: f.width,
        height: f.height,
        data: f.triangle.iter().map(Option::is_some).collect(),
    }
}

/// Flat vertex-color render under scalar ambient light; uncovered pixels are black.
pub fn render_color(
    camera: &Camera,
    vertices: &[Vector3<f64>],
    faces: &[[usize; 3]],
    colors: &[Vector3<f64>],
    crop: &CropWindow,
    light: f64,
) -> (Raster<Vector3<f64>>, Fragments) {
    let frags = rasterize_fragments(camera, vertices, faces, crop);
    let data = frags
        .triangle
        .iter()
        .zip(&frags.bary)
        .map(|(t, b)| match t {
            None => Vector3::zeros(),
            Some(t) => {
                let f = faces[*t];
                (colors[f[0]] * b[0] + colors[f[1]] * b[1] + colors[f[2]] * b[2]) * light
            }
        })
        .collect();
    (
        Raster {
            width: frags.width,
            height: frags.height,
            data,
        },
        frags,
    )
}

/// Gradient of `sum(grad_image . image)` with respect to the vertex colors.
pub fn render_color_backward(
    frags: &Fragments,
    faces: &[[usize; 3]],
    n_vertices: usize,
    light: f64,
    grad_image: &Raster<Vector3<f64>>,
) -> Vec<Vector3<f64>> {
    let mut g = vec![Vector3::zeros(); n_vertices];
    for ((t, b), gi) in frags.triangle.iter().zip(&frags.bary).zip(&grad_image.data) {
        if let Some(t) = t {
            let f = faces[*t];
            for k in 0..3 {
                g[f[k]] += gi * (b[k] * light);
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::soft::rasterize_soft_silhouette;

    fn cam() -> Camera {
        Camera::look_at("a", Vector3::new(0.0, -2.0, 0.0), Vector3::zeros(), Vector3::z(), 100.0, 64, 64).unwrap()
    }

    fn octahedron(r: f64) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
        let v = vec![
            Vector3::new(r, 0.0, 0.0),
            Vector3::new(-r, 0.0, 0.0),
            Vector3::new(0.0, r, 0.0),
            Vector3::new(0.0, -r, 0.0),
            Vector3::new(0.0, 0.0, r),
            Vector3::new(0.0, 0.0, -r),
        ];
        let f = vec![
            [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
            [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
        ];
        (v, f)
    }

    #[test]
    fn empty_scene_is_empty() {
        let c = cam();
        let m = rasterize_hard(&c, &[], &[], &CropWindow::full(&c, 100).unwrap());
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn agrees_with_sharp_soft_mask_on_convex_mesh() {
        let c = cam();
        let crop = CropWindow::full(&c, 100).unwrap();
        let (v, f) = octahedron(0.45);
        let hard = rasterize_hard(&c, &v, &f, &crop);
        let soft = rasterize_soft_silhouette(&c, &v, &f, &crop, 1e4).mask.threshold(0.5);
        let diff = hard.data.iter().zip(&soft.data).filter(|(a, b)| a != b).count();
        assert!(hard.count() > 100);
        assert!((diff as f64) < 0.01 * hard.len() as f64);
    }

    #[test]
    fn uniform_gray_renders_uniformly() {
        let c = cam();
        let crop = CropWindow::full(&c, 100).unwrap();
        let (v, f) = octahedron(0.4);
        let gray = vec![Vector3::new(128.0, 128.0, 128.0); v.len()];
        let (img, frags) = render_color(&c, &v, &f, &gray, &crop, 1.0);
        for (px, t) in img.data.iter().zip(&frags.triangle) {
            if t.is_some() {
                assert!((px - Vector3::new(128.0, 128.0, 128.0)).norm() < 1e-9);
            }
        }
        let (dark, _) = render_color(&c, &v, &f, &gray, &crop, 0.0);
        assert!(dark.data.iter().all(|p| *p == Vector3::zeros()));
    }

    #[test]
    fn centroid_blends_vertex_colors() {
        let c = cam();
        let crop = CropWindow::full(&c, 100).unwrap();
        // Triangle facing the camera, centroid on the optical axis.
        let v = vec![Vector3::new(-0.5, 0.0, -0.5), Vector3::new(0.5, 0.0, -0.5), Vector3::new(0.0, 0.0, 1.0)];
        let colors = vec![Vector3::new(255.0, 0.0, 0.0), Vector3::new(0.0, 255.0, 0.0), Vector3::new(0.0, 0.0, 255.0)];
        let (img, _) = render_color(&c, &v, &[[0, 1, 2]], &colors, &crop, 1.0);
        let centroid = (v[0] + v[1] + v[2]) / 3.0;
        let px = crop.project(&c, &centroid).unwrap();
        let p = img.get(px.x as usize, px.y as usize);
        // Oracle: barycentric average (85, 85, 85); one pixel of offset moves
        // each channel by at most ~6 at this scale.
        for k in 0..3 {
            assert!((p[k] - 85.0).abs() < 8.0, "{p:?}");
        }
    }
}
