//! Axis-angle rotation utilities.
//!
//! Rotations are stored as 3-vectors whose direction is the rotation axis and
//! whose norm is the angle in radians. All derivatives here are written out
//! by hand so the fitting code can run a reverse pass without an autodiff
//! framework.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

/// Below this angle the closed-form coefficients are replaced by their
/// Taylor expansion.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Threshold under which the derivative coefficients use a series.
const SERIES_ANGLE: f64 = 1e-2;

/// Skew-symmetric cross-product matrix `[v]_x`.
#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `sin(phi)/phi` and `(1 - cos(phi))/phi^2`.
#[inline]
fn coefficients(phi: f64) -> (f64, f64) {
    if phi < SMALL_ANGLE {
        (1.0, 0.5)
    } else {
        let half = (0.5 * phi).sin() / phi;
        (phi.sin() / phi, 2.0 * half * half)
    }
}

/// Derivatives of the coefficients divided by `phi`: `a'(phi)/phi`, `b'(phi)/phi`.
#[inline]
fn derivative_coefficients(phi: f64) -> (f64, f64) {
    if phi < SERIES_ANGLE {
        let p2 = phi * phi;
        let p4 = p2 * p2;
        (
            -1.0 / 3.0 + p2 / 30.0 - p4 / 840.0,
            -1.0 / 12.0 + p2 / 180.0 - p4 / 6720.0,
        )
    } else {
        let (s, c) = phi.sin_cos();
        let p3 = phi * phi * phi;
        (
            (phi * c - s) / p3,
            (phi * s - 2.0 * (1.0 - c)) / (p3 * phi),
        )
    }
}

/// Rotation matrix `exp([v]_x)` of an axis-angle vector.
pub fn rodrigues(v: &Vector3<f64>) -> Matrix3<f64> {
    let phi = v.norm();
    let k = skew(v);
    let (a, b) = coefficients(phi);
    Matrix3::identity() + k * a + k * k * b
}

/// Partial derivatives `dR/dv_k` for `k = 0..3`.
pub fn rodrigues_jacobian(v: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let phi = v.norm();
    let k = skew(v);
    let k2 = k * k;
    let (a, b) = coefficients(phi);
    let (c, d) = derivative_coefficients(phi);
    let tail = k * c + k2 * d;
    std::array::from_fn(|i| {
        let e = skew(&Vector3::ith(i, 1.0));
        e * a + (e * k + k * e) * b + tail * v[i]
    })
}

/// Pulls a gradient with respect to the rotation matrix back onto the
/// axis-angle vector.
pub fn rodrigues_backward(v: &Vector3<f64>, grad_r: &Matrix3<f64>) -> Vector3<f64> {
    let jac = rodrigues_jacobian(v);
    Vector3::new(
        grad_r.component_mul(&jac[0]).sum(),
        grad_r.component_mul(&jac[1]).sum(),
        grad_r.component_mul(&jac[2]).sum(),
    )
}

/// Axis-angle vector of a rotation matrix (the inverse of [`rodrigues`]).
pub fn log_rotation(r: &Matrix3<f64>) -> Vector3<f64> {
    let rot = Rotation3::from_matrix(r);
    UnitQuaternion::from_rotation_matrix(&rot).scaled_axis()
}

/// Finite-difference angular velocity between two axis-angle samples.
///
/// Uses `(dphi * u + [sin(phi) I + (1 - cos(phi)) [u]_x] du) / dt`, evaluated
/// at the first sample. When either sample is within [`SMALL_ANGLE`] of the
/// identity the axis is undefined and the plain difference `dtheta / dt` is
/// used instead.
pub fn angular_velocity(theta0: &Vector3<f64>, theta1: &Vector3<f64>, dt: f64) -> Vector3<f64> {
    debug_assert!(dt > 0.0);
    let phi0 = theta0.norm();
    let phi1 = theta1.norm();
    if phi0 < SMALL_ANGLE || phi1 < SMALL_ANGLE {
        return (theta1 - theta0) / dt;
    }
    let u0 = theta0 / phi0;
    let u1 = theta1 / phi1;
    let du = u1 - u0;
    let (s, c) = phi0.sin_cos();
    (u0 * (phi1 - phi0) + du * s + u0.cross(&du) * (1.0 - c)) / dt
}

/// Jacobians of [`angular_velocity`] with respect to both samples.
pub fn angular_velocity_jacobians(
    theta0: &Vector3<f64>,
    theta1: &Vector3<f64>,
    dt: f64,
) -> (Matrix3<f64>, Matrix3<f64>) {
    let phi0 = theta0.norm();
    let phi1 = theta1.norm();
    let inv_dt = 1.0 / dt;
    if phi0 < SMALL_ANGLE || phi1 < SMALL_ANGLE {
        let i = Matrix3::identity() * inv_dt;
        return (-i, i);
    }
    let u0 = theta0 / phi0;
    let u1 = theta1 / phi1;
    let du = u1 - u0;
    let dphi = phi1 - phi0;
    let (s, c) = phi0.sin_cos();
    let id = Matrix3::identity();
    let proj0 = (id - u0 * u0.transpose()) / phi0;
    let proj1 = (id - u1 * u1.transpose()) / phi1;
    let m = id * s + skew(&u0) * (1.0 - c);

    let j1 = u0 * u1.transpose() + m * proj1;
    let j0 = -u0 * u0.transpose() + proj0 * dphi + du * u0.transpose() * c
        + u0.cross(&du) * u0.transpose() * s
        - skew(&du) * proj0 * (1.0 - c)
        - m * proj0;
    (j0 * inv_dt, j1 * inv_dt)
}
