use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x4, Vector2, Vector3};

use crate::error::{Error, Result};

/// Points closer than this to the image plane are treated as invalid.
pub const MIN_DEPTH: f64 = 1e-6;

/// Calibrated perspective camera with optional Brown radial distortion.
///
/// `rotation`/`translation` map world points into the camera frame:
/// `X_c = R * X + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub id: String,
    pub intrinsics: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: u32,
    pub height: u32,
    /// Radial coefficients `k1`, `k2`, applied to normalized coordinates.
    pub distortion: [f64; 2],
}

impl Camera {
    pub fn new(
        id: impl Into<String>,
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: u32,
        height: u32,
        distortion: [f64; 2],
    ) -> Result<Self> {
        let cam = Self {
            id: id.into(),
            intrinsics,
            rotation,
            translation,
            width,
            height,
            distortion,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        let bad = |m: &str| Err(Error::InvalidCamera(format!("{}: {m}", self.id)));
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 || k[(2, 2)] != 1.0 {
            return bad("intrinsics must be upper triangular with K[2][2] = 1");
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0) {
            return bad("focal lengths must be positive");
        }
        let r = &self.rotation;
        if (r.transpose() * r - Matrix3::identity()).norm() > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
            return bad("rotation is not orthonormal");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive");
        }
        if !self.translation.iter().chain(k.iter()).chain(&self.distortion).all(|x| x.is_finite()) {
            return bad("non-finite parameters");
        }
        Ok(())
    }

    /// Camera looking from `eye` towards `target` with `up` roughly upwards in
    /// the image. Square pixels, principal point at the image center.
    pub fn look_at(
        id: impl Into<String>,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        let k = Matrix3::new(focal, 0.0, width as f64 / 2.0, 0.0, focal, height as f64 / 2.0, 0.0, 0.0, 1.0);
        Self::new(id, k, rotation, translation, width, height, [0.0, 0.0])
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `[R | t]`.
    pub fn extrinsic_matrix(&self) -> Matrix3x4<f64> {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.set_column(3, &self.translation);
        m
    }

    /// `K [R | t]`; exact for undistorted cameras.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        self.intrinsics * self.extrinsic_matrix()
    }

    fn distort(&self, x: Vector2<f64>) -> Vector2<f64> {
        let [k1, k2] = self.distortion;
        let r2 = x.norm_squared();
        x * (1.0 + k1 * r2 + k2 * r2 * r2)
    }

    fn to_pixel(&self, xd: Vector2<f64>) -> Vector2<f64> {
        let k = &self.intrinsics;
        Vector2::new(
            k[(0, 0)] * xd.x + k[(0, 1)] * xd.y + k[(0, 2)],
            k[(1, 1)] * xd.y + k[(1, 2)],
        )
    }

    /// Pixel coordinates of a world point, or `None` when the point is not in
    /// front of the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        let c = self.to_camera(p);
        if !(c.z > MIN_DEPTH) {
            return None;
        }
        Some(self.to_pixel(self.distort(Vector2::new(c.x / c.z, c.y / c.z))))
    }

    /// Projection together with its 2x3 Jacobian with respect to the world point.
    pub fn project_with_jacobian(&self, p: &Vector3<f64>) -> Option<(Vector2<f64>, Matrix2x3<f64>)> {
        let c = self.to_camera(p);
        if !(c.z > MIN_DEPTH) {
            return None;
        }
        let iz = 1.0 / c.z;
        let x = Vector2::new(c.x * iz, c.y * iz);
        let d_norm = Matrix2x3::new(iz, 0.0, -x.x * iz, 0.0, iz, -x.y * iz);
        let [k1, k2] = self.distortion;
        let r2 = x.norm_squared();
        let scale = 1.0 + k1 * r2 + k2 * r2 * r2;
        let dscale_dr2 = k1 + 2.0 * k2 * r2;
        let d_dist = Matrix2::identity() * scale + x * x.transpose() * (2.0 * dscale_dr2);
        let k = &self.intrinsics;
        let d_pix = Matrix2::new(k[(0, 0)], k[(0, 1)], 0.0, k[(1, 1)]);
        let jac = d_pix * d_dist * d_norm * self.rotation;
        Some((self.to_pixel(x * scale), jac))
    }

    /// Undistorted normalized coordinates of a pixel (fixed-point inversion
    /// of the radial model).
    pub fn normalize_pixel(&self, px: &Vector2<f64>) -> Vector2<f64> {
        let k = &self.intrinsics;
        let yd = (px.y - k[(1, 2)]) / k[(1, 1)];
        let xd = (px.x - k[(0, 2)] - k[(0, 1)] * yd) / k[(0, 0)];
        let xd = Vector2::new(xd, yd);
        if self.distortion == [0.0, 0.0] {
            return xd;
        }
        let [k1, k2] = self.distortion;
        let mut x = xd;
        for _ in 0..50 {
            let r2 = x.norm_squared();
            let next = xd / (1.0 + k1 * r2 + k2 * r2 * r2);
            if (next - x).norm() < 1e-15 {
                return next;
            }
            x = next;
        }
        x
    }
}

/// Ordered set of calibrated cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    pub cameras: Vec<Camera>,
    pub fps: f64,
    pub session: String,
}

impl CameraRig {
    pub fn new(cameras: Vec<Camera>, fps: f64, session: impl Into<String>) -> Result<Self> {
        for (i, c) in cameras.iter().enumerate() {
            c.validate()?;
            if cameras[..i].iter().any(|o| o.id == c.id) {
                return Err(Error::InvalidCamera(format!("duplicate camera id `{}`", c.id)));
            }
        }
        if !(fps > 0.0) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        Ok(Self {
            cameras,
            fps,
            session: session.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.cameras.iter().position(|c| c.id == id)
    }

    /// Sub-rig with the cameras at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            cameras: indices.iter().map(|&i| self.cameras[i].clone()).collect(),
            fps: self.fps,
            session: self.session.clone(),
        }
    }
}
