//! Stability diagnostics: attitude error and potential, the windowed
//! persistence-of-excitation metric, the two-scalar ε conditions with their
//! θ* basin bound, and the decomposition of the potential's derivative into a
//! nominal part and a mismatch part.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use nalgebra::Matrix3xX;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigenvalues;
use crate::measurement::{lambda_pinv, SensorChannel};
use crate::so3::{hat, log_so3, Mat3, Rotation, Vec3};

/// Below this cross-product norm two directions count as collinear.
pub const COLLINEAR_TOL: f64 = 1e-9;

/// Bracket width at which the θ* bisection stops.
pub const THETA_STAR_TOL: f64 = 1e-12;

/// Slack on the trace comparison in [`basin_check`], so that an error angle
/// exactly at θ* still counts as inside.
pub const BASIN_TRACE_TOL: f64 = 1e-12;

/// Scalar summaries of `R̃ = R̂Rᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    /// Error angle in `[0, π]`.
    pub theta_tilde: f64,
    /// Potential `tr(I − R̃)`.
    pub v: f64,
    pub trace_r_tilde: f64,
}

pub fn error_metrics(r: &Rotation, r_hat: &Rotation) -> ErrorMetrics {
    error_metrics_of(&(r_hat * &r.transpose()))
}

pub fn error_metrics_of(r_tilde: &Rotation) -> ErrorMetrics {
    let trace = r_tilde.trace();
    ErrorMetrics {
        theta_tilde: log_so3(r_tilde).angle,
        v: 3.0 - trace,
        trace_r_tilde: trace,
    }
}

/// `dV/dt = −tr([Δ]× R̃)` along `dR̃/dt = [Δ]×R̃`.
pub fn v_dot(delta: &Vec3, r_tilde: &Mat3) -> f64 {
    -(hat(delta) * r_tilde).trace()
}

/// Central differences of uniformly sampled values; the two end points are NaN.
pub fn central_difference(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 >= n {
                f64::NAN
            } else {
                (values[i + 1] - values[i - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

/// Sliding-window persistence-of-excitation metric.
///
/// Accumulates `∫ V(s)V(s)ᵀ ds` over the trailing window of length `delta`
/// with the trapezoidal rule and reports the second-smallest eigenvalue of
/// the time average. Until the window has filled, the average is taken over
/// the span covered so far.
#[derive(Debug, Clone)]
pub struct PeWindow {
    delta: f64,
    samples: VecDeque<(f64, Mat3)>,
    integral: Mat3,
    pops_since_refresh: usize,
    mu_hat: f64,
}

impl PeWindow {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::ConfigurationMismatch(format!(
                "PE window must be positive, got {delta}"
            )));
        }
        Ok(PeWindow {
            delta,
            samples: VecDeque::new(),
            integral: Mat3::zeros(),
            pops_since_refresh: 0,
            mu_hat: 0.0,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mu_hat(&self) -> f64 {
        self.mu_hat
    }

    /// Time span currently covered by the window.
    pub fn span(&self) -> f64 {
        match (self.samples.front(), self.samples.back()) {
            (Some(a), Some(b)) => b.0 - a.0,
            _ => 0.0,
        }
    }

    /// Window-averaged Gram matrix.
    pub fn averaged_gram(&self) -> Mat3 {
        let span = self.span();
        if span > 0.0 {
            self.integral / span
        } else {
            self.samples.back().map(|s| s.1).unwrap_or_else(Mat3::zeros)
        }
    }

    /// Adds the sample `V(t)` (columns are the excitation vectors) and
    /// returns the updated `mu_hat`. Times must be non-decreasing.
    pub fn update(&mut self, t: f64, v: &Matrix3xX<f64>) -> Result<f64> {
        if let Some(&(last, _)) = self.samples.back() {
            if t < last {
                return Err(Error::ConfigurationMismatch(format!(
                    "PE samples must be time ordered ({t} < {last})"
                )));
            }
        }
        let g = v * v.transpose();
        if let Some(&(t0, g0)) = self.samples.back() {
            self.integral += (g0 + g) * (0.5 * (t - t0));
        }
        self.samples.push_back((t, g));

        let start = t - self.delta * (1.0 + 1e-9);
        while self.samples.len() > 1 && self.samples[0].0 < start {
            let (ta, ga) = self.samples.pop_front().expect("non-empty");
            let (tb, gb) = self.samples[0];
            self.integral -= (ga + gb) * (0.5 * (tb - ta));
            self.pops_since_refresh += 1;
        }
        // Rebuild the running sum once per window turnover so that the
        // add/subtract round-off cannot accumulate.
        if self.pops_since_refresh >= self.samples.len().max(1) {
            self.integral = self
                .samples
                .iter()
                .zip(self.samples.iter().skip(1))
                .fold(Mat3::zeros(), |acc, (a, b)| acc + (a.1 + b.1) * (0.5 * (b.0 - a.0)));
            self.pops_since_refresh = 0;
        }

        self.mu_hat = symmetric_eigenvalues(&self.averaged_gram())[1].max(0.0);
        Ok(self.mu_hat)
    }
}

fn unit(v: &Vec3, what: &str) -> Result<Vec3> {
    let n = v.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::ConfigurationMismatch(format!(
            "{what} must be a non-zero finite vector"
        )));
    }
    Ok(v / n)
}

fn unit_normal(u: &Vec3, v: &Vec3) -> Result<Vec3> {
    let c = u.cross(v);
    let n = c.norm();
    if !(n > COLLINEAR_TOL) {
        return Err(Error::CollinearReferences(n));
    }
    Ok(c / n)
}

/// `|sin ∠(a, Rᵀb̄)|` with `b̄` the unit normal of `b₁, b₂`: the quantity bounded
/// by ε when two inertial vectors are measured along one body direction.
pub fn epsilon_two_references(a: &Vec3, r: &Rotation, b1: &Vec3, b2: &Vec3) -> Result<f64> {
    let b_bar = unit_normal(b1, b2)?;
    let a_hat = unit(a, "a")?;
    Ok(a_hat.cross(&(r.matrix().transpose() * b_bar)).norm())
}

/// `|sin ∠(ā, Rᵀb₁)|` with `ā` the unit normal of `a₁, a₂`: the quantity
/// bounded by ε when one inertial vector is measured along two body
/// directions.
pub fn epsilon_two_directions(a1: &Vec3, a2: &Vec3, r: &Rotation, b1: &Vec3) -> Result<f64> {
    let a_bar = unit_normal(a1, a2)?;
    let body = unit(&(r.matrix().transpose() * b1), "b1")?;
    Ok(a_bar.cross(&body).norm())
}

/// Largest θ* in `(0, π/2]` with `cos(θ*/2)·cos(θ*) ≥ ε`, found by bisection.
pub fn solve_theta_star(epsilon: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::NoSolution(epsilon));
    }
    if epsilon == 0.0 {
        return Ok(FRAC_PI_2);
    }
    let f = |theta: f64| (0.5 * theta).cos() * theta.cos() - epsilon;
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    while hi - lo > THETA_STAR_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `tr(R̃) ≥ 1 + 2 cos θ*`, i.e. the error angle is at most θ*.
pub fn basin_check(metrics: &ErrorMetrics, theta_star: f64) -> bool {
    debug_assert!(theta_star > 0.0 && theta_star <= FRAC_PI_2);
    metrics.trace_r_tilde >= 1.0 + 2.0 * theta_star.cos() - BASIN_TRACE_TOL
}

/// Basin-of-attraction certificate at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasinCertificate {
    pub theta_star: f64,
    pub epsilon: f64,
    /// `cos(θ*/2)cos(θ*) − ε`; the certificate holds only when positive.
    pub margin: f64,
    pub inside_basin: bool,
}

impl BasinCertificate {
    pub fn evaluate(theta_star: f64, epsilon: f64, metrics: &ErrorMetrics) -> Self {
        BasinCertificate {
            theta_star,
            epsilon,
            margin: (0.5 * theta_star).cos() * theta_star.cos() - epsilon,
            inside_basin: basin_check(metrics, theta_star),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.margin > 0.0
    }
}

/// `dV/dt = V₀ + V_E` split for the two-scalar configurations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovDecomposition {
    /// `−tr([Δ]×R̃)` with `Δ` from the closed-form innovation.
    pub v_dot: f64,
    pub v0: f64,
    pub v_e: f64,
    /// Spectral norm of the mismatch projector `E`.
    pub e_norm: f64,
    /// `−k(1 − q)(cos θ* − ε / cos(θ*/2))`, the certified upper bound on `dV/dt`.
    pub bound_rhs: f64,
}

fn spectral_norm_sym(m: &Mat3) -> f64 {
    let e = symmetric_eigenvalues(m);
    e[0].abs().max(e[2].abs())
}

fn projector_off(v: &Vec3) -> Mat3 {
    Mat3::identity() - v * v.transpose()
}

fn bound_factor(theta_star: f64, epsilon: f64) -> f64 {
    theta_star.cos() - epsilon / (0.5 * theta_star).cos()
}

/// Two inertial vectors `b₁, b₂` measured along one body direction `a`.
///
/// `theta_star` and `epsilon` only enter `bound_rhs`.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_decompose_two_references(
    a: &Vec3,
    r: &Rotation,
    r_hat: &Rotation,
    b1: &Vec3,
    b2: &Vec3,
    k: f64,
    theta_star: f64,
    epsilon: f64,
) -> Result<LyapunovDecomposition> {
    let b_bar = unit_normal(b1, b2).map_err(|e| Error::ConfigurationMismatch(e.to_string()))?;
    let a_hat = unit(a, "a")?;
    let r_tilde = r_hat.matrix() * r.matrix().transpose();

    let ra = r * &a_hat;
    let d = r_hat * &a_hat - ra;
    let w = r_tilde * r_tilde * ra - ra;
    let e = ra * ra.transpose() - b_bar * b_bar.transpose();

    let v0 = -k * d.dot(&(projector_off(&ra) * w));
    let v_e = -k * d.dot(&(e * w));
    let q = ra.dot(&(r_tilde * r_tilde * ra));

    let delta = two_reference_innovation(a, r, r_hat, b1, b2, k)?;

    Ok(LyapunovDecomposition {
        v_dot: v_dot(&delta, &r_tilde),
        v0,
        v_e,
        e_norm: spectral_norm_sym(&e),
        bound_rhs: -k * (1.0 - q) * bound_factor(theta_star, epsilon),
    })
}

/// One inertial vector `b₁` measured along two body directions `a₁, a₂`.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_decompose_two_directions(
    a1: &Vec3,
    a2: &Vec3,
    r: &Rotation,
    r_hat: &Rotation,
    b1: &Vec3,
    k: f64,
    theta_star: f64,
    epsilon: f64,
) -> Result<LyapunovDecomposition> {
    let a_bar = unit_normal(a1, a2).map_err(|e| Error::ConfigurationMismatch(e.to_string()))?;
    let b_hat = unit(b1, "b1")?;
    let r_tilde = r_hat.matrix() * r.matrix().transpose();
    let rt_t = r_tilde.transpose();

    let d = rt_t * b_hat - b_hat;
    let w = rt_t * rt_t * b_hat - b_hat;
    let ra_bar = r * &a_bar;
    let e = b_hat * b_hat.transpose() - ra_bar * ra_bar.transpose();

    let v0 = -k * d.dot(&(projector_off(&b_hat) * w));
    let v_e = -k * d.dot(&(e * w));
    let q = b_hat.dot(&(r_tilde * r_tilde * b_hat));

    let delta = two_direction_innovation(a1, a2, r, r_hat, b1, k)?;

    Ok(LyapunovDecomposition {
        v_dot: v_dot(&delta, &r_tilde),
        v0,
        v_e,
        e_norm: spectral_norm_sym(&e),
        bound_rhs: -k * (1.0 - q) * bound_factor(theta_star, epsilon),
    })
}

/// Innovation for two references along one direction, in closed form:
/// `Δ = k[Π_b̄(R̂â − Râ)]×R̂â` with `Π_b̄ = I − b̄b̄ᵀ`.
pub fn two_reference_innovation(
    a: &Vec3,
    r: &Rotation,
    r_hat: &Rotation,
    b1: &Vec3,
    b2: &Vec3,
    k: f64,
) -> Result<Vec3> {
    let b_bar = unit_normal(b1, b2)?;
    let a_hat = unit(a, "a")?;
    let ra_hat = r_hat * &a_hat;
    let d = ra_hat - r * &a_hat;
    Ok(k * (projector_off(&b_bar) * d).cross(&ra_hat))
}

/// Innovation for one reference along two directions, in closed form:
/// `Δ = k[b̂]× R̃ Π_{Rā}(R̃ᵀb̂ − b̂)`.
pub fn two_direction_innovation(
    a1: &Vec3,
    a2: &Vec3,
    r: &Rotation,
    r_hat: &Rotation,
    b1: &Vec3,
    k: f64,
) -> Result<Vec3> {
    let a_bar = unit_normal(a1, a2)?;
    let b_hat = unit(b1, "b1")?;
    let r_tilde = r_hat.matrix() * r.matrix().transpose();
    let v = r_tilde * projector_off(&(r * &a_bar)) * (r_tilde.transpose() * b_hat - b_hat);
    Ok(k * b_hat.cross(&v))
}

/// Matrices from the at-least-three-scalars analysis: `P = RΛΛ†Rᵀ`,
/// `P̂ = R̃PR̃ᵀ`, and the predicted `dV/dt = −k·tr(P − PR̃²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommonLambdaDiagnostic {
    pub p: Mat3,
    pub p_hat: Mat3,
    pub v_dot_predicted: f64,
}

pub fn common_lambda_diagnostic(
    r: &Rotation,
    r_hat: &Rotation,
    lambda: &Matrix3xX<f64>,
    k: f64,
) -> Result<CommonLambdaDiagnostic> {
    let channel = SensorChannel::new(Vec3::zeros(), lambda.clone())?;
    Ok(common_lambda_from_projector(
        r,
        r_hat,
        &lambda_pinv(&channel).projector,
        k,
    ))
}

/// [`common_lambda_diagnostic`] with the projector `ΛΛ†` already computed.
pub fn common_lambda_from_projector(r: &Rotation, r_hat: &Rotation, proj: &Mat3, k: f64) -> CommonLambdaDiagnostic {
    let rm = r.matrix();
    let p = rm * proj * rm.transpose();
    let r_tilde = r_hat.matrix() * rm.transpose();
    CommonLambdaDiagnostic {
        p,
        p_hat: r_tilde * p * r_tilde.transpose(),
        v_dot_predicted: -k * (p - p * r_tilde * r_tilde).trace(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{gram, measure, SensorBank};
    use crate::observer::{innovation, ObserverState};
    use crate::so3::{euler_zyx, exp_so3, rot_x, rot_z};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn rotation() -> impl Strategy<Value = Rotation> {
        vec3().prop_map(|w| exp_so3(&w))
    }

    #[test]
    fn error_metric_examples() {
        let r = euler_zyx(0.3, 0.5, -1.0);
        let m = error_metrics(&r, &r);
        assert!(m.theta_tilde.abs() < 1e-7);
        assert!(m.v.abs() < 1e-14);

        let m = error_metrics(
            &Rotation::identity(),
            &exp_so3(&(Vec3::new(1.0, 2.0, -0.5).normalize() * PI)),
        );
        assert_relative_eq!(m.v, 4.0, epsilon = 1e-14);

        let r0 = rot_z(-PI / 2.0) * rot_x(PI / 9.0);
        let m = error_metrics(&r0, &Rotation::identity());
        assert!((m.theta_tilde.to_degrees() - 91.7).abs() < 0.05);
    }

    #[test]
    fn pe_constant_direction_collapses() {
        let mut w = PeWindow::new(1.0).unwrap();
        let v = Matrix3xX::from_columns(&[Vec3::new(0.3, -0.4, 0.5)]);
        let mut t = 0.0;
        while t <= 1.5 {
            w.update(t, &v).unwrap();
            t += 1e-3;
        }
        assert!(w.mu_hat() < 1e-9);
        assert!(w.span() <= 1.0 + 1e-9);
    }

    #[test]
    fn pe_rotating_pair_matches_quadrature() {
        // Columns (cos ωt, sin ωt, 0) and e₃. Oracle: the exact window
        // average of cos²(ωt) over [T − δ, T] computed in closed form.
        let omega = 0.8;
        let delta = 2.0;
        let dt = 1e-3;
        let mut w = PeWindow::new(delta).unwrap();
        let steps = 5000;
        for i in 0..=steps {
            let t = i as f64 * dt;
            let c = Vec3::new((omega * t).cos(), (omega * t).sin(), 0.0);
            w.update(t, &Matrix3xX::from_columns(&[c, Vec3::z()])).unwrap();
        }
        let t1 = steps as f64 * dt;
        let t0 = t1 - delta;
        let int_cos2 = 0.5 * delta + ((2.0 * omega * t1).sin() - (2.0 * omega * t0).sin()) / (4.0 * omega);
        let int_cs = ((omega * t1).sin().powi(2) - (omega * t0).sin().powi(2)) / (2.0 * omega);
        let g = Mat3::new(
            int_cos2 / delta,
            int_cs / delta,
            0.0,
            int_cs / delta,
            1.0 - int_cos2 / delta,
            0.0,
            0.0,
            0.0,
            1.0,
        );
        let expected = symmetric_eigenvalues(&g)[1];
        assert!((w.mu_hat() - expected).abs() < 1e-6, "{} vs {expected}", w.mu_hat());
        assert!(w.mu_hat() > 0.1);
    }

    #[test]
    fn pe_rejects_time_reversal() {
        let mut w = PeWindow::new(1.0).unwrap();
        let v = Matrix3xX::from_columns(&[Vec3::x()]);
        w.update(1.0, &v).unwrap();
        assert!(w.update(0.5, &v).is_err());
        assert!(PeWindow::new(0.0).is_err());
    }

    #[test]
    fn epsilon_two_references_examples() {
        let b1 = Vec3::new(0.0, 0.0, 9.8);
        let b2 = Vec3::new(0.5, 0.0, 0.75f64.sqrt());
        let r = euler_zyx(0.4, 0.2, -0.3);
        let b_bar = b1.cross(&b2).normalize();
        let aligned = r.matrix().transpose() * b_bar;
        assert!(epsilon_two_references(&(aligned * 3.0), &r, &b1, &b2).unwrap() < 1e-15);
        let ortho = aligned.cross(&Vec3::new(0.1, 0.7, 0.2)).normalize();
        assert_relative_eq!(
            epsilon_two_references(&ortho, &r, &b1, &b2).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            epsilon_two_references(&ortho, &r, &b1, &(b1 * 2.0)),
            Err(Error::CollinearReferences(_))
        ));
    }

    #[test]
    fn epsilon_two_directions_examples() {
        let a1 = Vec3::new(1.0, 0.2, 0.0);
        let a2 = Vec3::new(1.0, -0.2, 0.1);
        let a_bar = a1.cross(&a2).normalize();
        let r = euler_zyx(-0.4, 0.3, 0.9);
        let b1 = r * (a_bar * 4.0);
        assert!(epsilon_two_directions(&a1, &a2, &r, &b1).unwrap() < 1e-15);
        assert!(epsilon_two_directions(&a1, &a1, &r, &b1).is_err());
    }

    #[test]
    fn theta_star_examples() {
        assert_eq!(solve_theta_star(0.0).unwrap(), FRAC_PI_2);
        let t = solve_theta_star((15.0f64).to_radians().sin()).unwrap();
        assert!((t.to_degrees() - 71.4).abs() < 0.1);
        let t = solve_theta_star(0.9237).unwrap();
        assert!((t.to_degrees() - 20.23).abs() < 0.05);
        assert!(matches!(solve_theta_star(1.0), Err(Error::NoSolution(_))));
        assert!(solve_theta_star(-0.1).is_err());
        assert!(solve_theta_star(f64::NAN).is_err());
    }

    #[test]
    fn basin_check_examples() {
        let theta_star = 0.9;
        let zero = error_metrics(&Rotation::identity(), &Rotation::identity());
        assert!(basin_check(&zero, theta_star));
        let at = error_metrics_of(&exp_so3(&(Vec3::new(1.0, -1.0, 0.5).normalize() * theta_star)));
        assert!(basin_check(&at, theta_star));
        let beyond = error_metrics_of(&exp_so3(&(Vec3::z() * (theta_star + 1e-6))));
        assert!(!basin_check(&beyond, theta_star));
    }

    #[test]
    fn decomposition_vanishes_at_truth() {
        let r = euler_zyx(0.2, 0.1, 0.3);
        let d = lyapunov_decompose_two_references(&Vec3::x(), &r, &r, &Vec3::z(), &Vec3::y(), 1.0, 1.0, 0.1).unwrap();
        assert!(d.v0.abs() < 1e-15 && d.v_e.abs() < 1e-15 && d.v_dot.abs() < 1e-15);
        let d = lyapunov_decompose_two_directions(&Vec3::x(), &Vec3::y(), &r, &r, &Vec3::z(), 1.0, 1.0, 0.1).unwrap();
        assert!(d.v0.abs() < 1e-15 && d.v_e.abs() < 1e-15);
    }

    #[test]
    fn aligned_direction_has_no_mismatch() {
        let b1 = Vec3::new(0.3, 0.1, 1.0);
        let b2 = Vec3::new(-0.5, 1.0, 0.2);
        let r = euler_zyx(1.0, -0.2, 0.4);
        let a = r.matrix().transpose() * b1.cross(&b2).normalize();
        for theta in [0.2, 0.8, 1.4] {
            let r_hat = exp_so3(&(Vec3::new(0.3, -0.6, 0.2).normalize() * theta)) * r;
            let d = lyapunov_decompose_two_references(&a, &r, &r_hat, &b1, &b2, 2.0, 1.0, 0.0).unwrap();
            assert!(d.e_norm < 1e-14);
            assert!(d.v_e.abs() < 1e-14);
            assert!(d.v0 <= 1e-15);
            assert!((d.v_dot - d.v0).abs() < 1e-12);
        }
    }

    #[test]
    fn decomposition_rejects_bad_configurations() {
        let r = Rotation::identity();
        assert!(matches!(
            lyapunov_decompose_two_references(&Vec3::x(), &r, &r, &Vec3::z(), &Vec3::z(), 1.0, 1.0, 0.1),
            Err(Error::ConfigurationMismatch(_))
        ));
        assert!(lyapunov_decompose_two_directions(&Vec3::x(), &Vec3::x(), &r, &r, &Vec3::z(), 1.0, 1.0, 0.1).is_err());
        assert!(
            lyapunov_decompose_two_references(&Vec3::zeros(), &r, &r, &Vec3::z(), &Vec3::x(), 1.0, 1.0, 0.1).is_err()
        );
    }

    #[test]
    fn central_difference_of_quadratic_is_exact() {
        let dt = 0.1;
        let v: Vec<f64> = (0..6).map(|i| (i as f64 * dt).powi(2)).collect();
        let d = central_difference(&v, dt);
        assert!(d[0].is_nan() && d[5].is_nan());
        for (i, di) in d.iter().enumerate().take(5).skip(1) {
            assert!((di - 2.0 * i as f64 * dt).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn potential_is_trig_identity(r in rotation(), r_hat in rotation()) {
            let m = error_metrics(&r, &r_hat);
            prop_assert!((m.v - 2.0 * (1.0 - m.theta_tilde.cos())).abs() < 1e-10);
            prop_assert!((m.trace_r_tilde - (1.0 + 2.0 * m.theta_tilde.cos())).abs() < 1e-10);
        }

        #[test]
        fn theta_star_root_residual(eps in 0.0..0.999f64) {
            let t = solve_theta_star(eps).unwrap();
            prop_assert!(t > 0.0 && t <= FRAC_PI_2);
            prop_assert!(((0.5 * t).cos() * t.cos() - eps).abs() < 1e-9);
        }

        #[test]
        fn two_reference_split_is_exact(r in rotation(), r_hat in rotation(), a in vec3(), b1 in vec3(), b2 in vec3(), k in 0.1..3.0f64) {
            prop_assume!(a.norm() > 0.1 && b1.cross(&b2).norm() > 0.1);
            let d = lyapunov_decompose_two_references(&a, &r, &r_hat, &b1, &b2, k, 0.5, 0.1).unwrap();
            let bank = SensorBank::new(vec![SensorChannel::scalar(b1, a), SensorChannel::scalar(b2, a)]).unwrap();
            let generic = innovation(&bank, &ObserverState::new(r_hat, k).unwrap(), &measure(&bank, &r)).unwrap().delta;
            let r_tilde = r_hat.matrix() * r.matrix().transpose();
            prop_assert!((v_dot(&generic, &r_tilde) - (d.v0 + d.v_e)).abs() < 1e-10);
            prop_assert!((d.v_dot - (d.v0 + d.v_e)).abs() < 1e-10);
            // |E| is the sine of the angle between Râ and b̄.
            let s = (r * a.normalize()).cross(&b1.cross(&b2).normalize()).norm();
            prop_assert!((d.e_norm - s).abs() < 1e-10);
        }

        #[test]
        fn two_direction_split_is_exact(r in rotation(), r_hat in rotation(), a1 in vec3(), a2 in vec3(), b in vec3(), k in 0.1..3.0f64) {
            prop_assume!(b.norm() > 0.1 && a1.cross(&a2).norm() > 0.1);
            let d = lyapunov_decompose_two_directions(&a1, &a2, &r, &r_hat, &b, k, 0.5, 0.1).unwrap();
            let bank = SensorBank::new(vec![SensorChannel::from_directions(b, &[a1, a2]).unwrap()]).unwrap();
            let generic = innovation(&bank, &ObserverState::new(r_hat, k).unwrap(), &measure(&bank, &r)).unwrap().delta;
            let r_tilde = r_hat.matrix() * r.matrix().transpose();
            prop_assert!((v_dot(&generic, &r_tilde) - (d.v0 + d.v_e)).abs() < 1e-10);
            prop_assert!((d.v_dot - (d.v0 + d.v_e)).abs() < 1e-10);
            let s = b.normalize().cross(&(r * a1.cross(&a2).normalize())).norm();
            prop_assert!((d.e_norm - s).abs() < 1e-10);
        }

        #[test]
        fn closed_forms_match_generic(r in rotation(), r_hat in rotation(), a1 in vec3(), a2 in vec3(), b1 in vec3(), b2 in vec3(), k in 0.1..3.0f64) {
            prop_assume!(a1.norm() > 0.1 && b1.cross(&b2).norm() > 0.1 && a1.cross(&a2).norm() > 0.1);
            let state = ObserverState::new(r_hat, k).unwrap();

            let bank = SensorBank::new(vec![SensorChannel::scalar(b1, a1), SensorChannel::scalar(b2, a1)]).unwrap();
            let generic = innovation(&bank, &state, &measure(&bank, &r)).unwrap().delta;
            let closed = two_reference_innovation(&a1, &r, &r_hat, &b1, &b2, k).unwrap();
            // The generic form goes through S†, whose round-off grows with the
            // condition number of S on its range.
            let g = gram(&bank);
            let kappa = g.s.norm() / g.lambda_min_nonzero;
            prop_assert!((generic - closed).norm() < 1e-14 * kappa.max(100.0) * (1.0 + generic.norm()));

            let bank = SensorBank::new(vec![SensorChannel::from_directions(b1, &[a1, a2]).unwrap()]).unwrap();
            let generic = innovation(&bank, &state, &measure(&bank, &r)).unwrap().delta;
            let closed = two_direction_innovation(&a1, &a2, &r, &r_hat, &b1, k).unwrap();
            prop_assert!((generic - closed).norm() < 1e-12 * (1.0 + generic.norm()));
        }

        #[test]
        fn certified_bound_dominates_inside_basin(r in rotation(), axis in vec3(), frac in 0.0..1.0f64, a in vec3()) {
            // Build a configuration whose instantaneous ε is small enough for a
            // θ* of 45°, then check dV/dt ≤ bound ≤ 0 for errors within θ*.
            prop_assume!(axis.norm() > 0.1 && a.norm() > 0.1);
            let theta_star = PI / 4.0;
            let b1 = Vec3::new(0.0, 0.0, 9.8);
            let b2 = Vec3::new(0.5, 0.0, 0.75f64.sqrt());
            let b_bar = b1.cross(&b2).normalize();
            let body = r.matrix().transpose() * b_bar;
            let a = (body + a.normalize() * 0.2).normalize();
            let eps = epsilon_two_references(&a, &r, &b1, &b2).unwrap();
            prop_assume!(eps < (0.5 * theta_star).cos() * theta_star.cos());
            let r_hat = exp_so3(&(axis.normalize() * theta_star * frac)) * r;
            let d = lyapunov_decompose_two_references(&a, &r, &r_hat, &b1, &b2, 1.3, theta_star, eps).unwrap();
            prop_assert!(d.e_norm <= eps + 1e-12);
            prop_assert!(d.v_dot <= d.bound_rhs + 1e-12);
            prop_assert!(d.bound_rhs <= 1e-15);
        }

        #[test]
        fn common_lambda_prediction_matches_innovation(r in rotation(), r_hat in rotation(), frame in rotation(), a in vec3(), k in 0.1..3.0f64) {
            prop_assume!(a.norm() > 0.1);
            // Three scalars along a common direction with an invertible S.
            let bs: Vec<Vec3> = (0..3).map(|j| frame.matrix().column(j) * (1.0 + j as f64)).collect();
            let bank = SensorBank::new(bs.iter().map(|b| SensorChannel::scalar(*b, a)).collect()).unwrap();
            let delta = innovation(&bank, &ObserverState::new(r_hat, k).unwrap(), &measure(&bank, &r)).unwrap().delta;
            let r_tilde = r_hat.matrix() * r.matrix().transpose();
            let diag = common_lambda_diagnostic(&r, &r_hat, &Matrix3xX::from_columns(&[a]), k).unwrap();
            prop_assert!((v_dot(&delta, &r_tilde) - diag.v_dot_predicted).abs() < 1e-10);
            prop_assert!(diag.v_dot_predicted <= 1e-12);
        }
    }
}
