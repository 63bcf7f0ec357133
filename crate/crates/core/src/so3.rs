//! Rotation-group primitives.
//!
//! Rotations are stored as plain 3×3 matrices (no quaternions). The skew map
//! follows the usual convention `hat(w) * v == w.cross(&v)`.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this angle `exp` and `log` switch to their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Within this distance of π the logarithm extracts the axis from the
/// symmetric part of the matrix instead of the skew part.
const NEAR_PI: f64 = 1e-3;

/// Tolerance used by [`vee`] for the symmetric part of its argument.
pub const SKEW_TOL: f64 = 1e-8;

/// Smallest singular value accepted by [`project_to_so3`].
pub const PROJECTION_MIN_SINGULAR: f64 = 1e-9;

/// An element of SO(3), kept as an orthonormal matrix with unit determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

/// Axis–angle decomposition with `angle` in `[0, π]` and a unit `axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: Vec3,
    pub angle: f64,
}

impl AxisAngle {
    /// The rotation vector `angle * axis`.
    pub fn vector(&self) -> Vec3 {
        self.axis * self.angle
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Wraps a matrix the caller knows to be a rotation.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    /// Wraps `m` after checking orthonormality and determinant to `tol`.
    pub fn try_from_matrix(m: Mat3, tol: f64) -> Result<Self> {
        let r = Rotation(m);
        let err = r.orthonormality_error();
        let det = m.determinant();
        if !err.is_finite() || err > tol || (det - 1.0).abs() > tol {
            return Err(Error::Degenerate(det));
        }
        Ok(r)
    }

    #[inline]
    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    #[inline]
    pub fn into_matrix(self) -> Mat3 {
        self.0
    }

    #[inline]
    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    #[inline]
    pub fn inverse(&self) -> Rotation {
        self.transpose()
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).norm()
    }

    pub fn angle(&self) -> f64 {
        log_so3(self).angle
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<&Rotation> for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<&Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Skew-symmetric matrix of `w`, so that `hat(w) * v == w × v`.
#[inline]
pub fn hat(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`hat`]. Fails if the symmetric part of `m` exceeds [`SKEW_TOL`].
pub fn vee(m: &Mat3) -> Result<Vec3> {
    let sym = (m + m.transpose()).norm() * 0.5;
    if !(sym <= SKEW_TOL) {
        return Err(Error::NotSkew(sym));
    }
    Ok(vee_unchecked(m))
}

/// Axial vector of the skew part of `m`, `vee((m − mᵀ)/2)`.
#[inline]
pub fn vee_unchecked(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Exponential map (Rodrigues formula).
pub fn exp_so3(w: &Vec3) -> Rotation {
    let theta = w.norm();
    let k = hat(w);
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        return Rotation(Mat3::identity() + k + 0.5 * k2);
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Rotation(Mat3::identity() + a * k + b * k2)
}

/// Logarithm map, canonicalized to `angle ∈ [0, π]`.
///
/// The identity maps to axis `(1, 0, 0)` with angle zero.
pub fn log_so3(r: &Rotation) -> AxisAngle {
    let m = r.matrix();
    let s = vee_unchecked(m);
    let sin = s.norm();
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let angle = sin.atan2(cos);

    if sin == 0.0 && cos > 0.0 {
        return AxisAngle {
            axis: Vec3::x(),
            angle: 0.0,
        };
    }

    if PI - angle < NEAR_PI {
        // (R + Rᵀ)/2 − cos θ·I = (1 − cos θ) u uᵀ; read u off the column with
        // the largest diagonal entry and fix its sign from the skew part.
        let sym = (m + m.transpose()) * 0.5 - Mat3::identity() * cos;
        let j = (0..3).max_by(|&a, &b| sym[(a, a)].total_cmp(&sym[(b, b)])).unwrap_or(0);
        let mut axis = sym.column(j).into_owned();
        axis /= axis.norm();
        if axis.dot(&s) < 0.0 {
            axis = -axis;
        }
        return AxisAngle { axis, angle };
    }

    AxisAngle { axis: s / sin, angle }
}

/// Newton polar iteration is used when `‖XᵀX − I‖` is below this.
const NEWTON_POLAR_RADIUS: f64 = 1e-3;
const NEWTON_POLAR_MAX_ITERS: usize = 8;

/// Nearest rotation in Frobenius norm (orthonormal polar factor).
pub fn project_to_so3(m: &Mat3) -> Result<Rotation> {
    let det = m.determinant();
    if !(det > 0.0) {
        return Err(Error::Degenerate(det));
    }
    // Near the manifold the Newton polar iteration X ← (X + X⁻ᵀ)/2 converges
    // quadratically to the same factor at a fraction of the cost of an SVD.
    if (m.transpose() * m - Mat3::identity()).norm() < NEWTON_POLAR_RADIUS {
        let mut x = *m;
        for _ in 0..NEWTON_POLAR_MAX_ITERS {
            let Some(inv) = x.try_inverse() else { break };
            let next = 0.5 * (x + inv.transpose());
            let step = (next - x).norm();
            x = next;
            if step <= 4.0 * f64::EPSILON {
                return Ok(Rotation(x));
            }
        }
    }
    let svd = m.svd(true, true);
    let smin = svd.singular_values.min();
    if smin < PROJECTION_MIN_SINGULAR {
        return Err(Error::Degenerate(smin));
    }
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Degenerate(smin));
    };
    Ok(Rotation(u * v_t))
}

pub fn rot_x(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Rotation(Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
}

pub fn rot_y(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Rotation(Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
}

pub fn rot_z(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Rotation(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
}

/// `R_z(yaw) · R_y(pitch) · R_x(roll)`.
pub fn euler_zyx(yaw: f64, pitch: f64, roll: f64) -> Rotation {
    rot_z(yaw) * rot_y(pitch) * rot_x(roll)
}

/// Inverse of [`euler_zyx`]: returns `(yaw, pitch, roll)` with pitch in
/// `[−π/2, π/2]`.
pub fn euler_zyx_angles(r: &Rotation) -> (f64, f64, f64) {
    let m = r.matrix();
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    (yaw, pitch, roll)
}
