//! Scalar output model: each channel measures the body-frame image `Rᵀb` of
//! a known inertial vector `b` along a handful of body-frame directions,
//! `y = Λᵀ Rᵀ b`.

use nalgebra::{DMatrix, DVector, Matrix3xX, MatrixXx3};

use crate::error::{Error, Result};
use crate::linalg::{svd_pinv, symmetric_pinv, PINV_CUTOFF_FACTOR};
use crate::so3::{Mat3, Rotation, Vec3};

/// One inertial vector and the body directions it is measured along.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorChannel {
    pub b: Vec3,
    /// Columns are the measurement directions `a_1 … a_n`, `1 ≤ n ≤ 3`.
    pub lambda: Matrix3xX<f64>,
}

impl SensorChannel {
    pub fn new(b: Vec3, lambda: Matrix3xX<f64>) -> Result<Self> {
        let n = lambda.ncols();
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidBank(format!(
                "a channel needs between 1 and 3 measurement directions, got {n}"
            )));
        }
        if !lambda.iter().all(|v| v.is_finite()) || !b.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBank("non-finite channel entry".into()));
        }
        Ok(SensorChannel { b, lambda })
    }

    pub fn from_directions(b: Vec3, directions: &[Vec3]) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::InvalidBank("channel without measurement directions".into()));
        }
        Self::new(b, Matrix3xX::from_columns(directions))
    }

    /// A single scalar `aᵀRᵀb`.
    pub fn scalar(b: Vec3, a: Vec3) -> Self {
        SensorChannel {
            b,
            lambda: Matrix3xX::from_columns(&[a]),
        }
    }

    /// A full vector measurement, `Λ = I₃`.
    pub fn vector(b: Vec3) -> Self {
        SensorChannel {
            b,
            lambda: Matrix3xX::from_columns(&[Vec3::x(), Vec3::y(), Vec3::z()]),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.ncols() == 0
    }

    pub fn direction(&self, j: usize) -> Vec3 {
        self.lambda.column(j).into_owned()
    }

    /// True when `Λ = I₃` to within `tol` in every entry.
    pub fn is_full_vector(&self, tol: f64) -> bool {
        self.lambda.ncols() == 3
            && (0..3).all(|i| {
                (0..3).all(|j| {
                    let target = if i == j { 1.0 } else { 0.0 };
                    (self.lambda[(i, j)] - target).abs() <= tol
                })
            })
    }
}

/// Ordered list of channels; `m` is the total number of scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorBank {
    channels: Vec<SensorChannel>,
}

impl SensorBank {
    pub fn new(channels: Vec<SensorChannel>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidBank("a bank needs at least one channel".into()));
        }
        Ok(SensorBank { channels })
    }

    pub fn channels(&self) -> &[SensorChannel] {
        &self.channels
    }

    /// Number of channels `p`.
    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Total scalar count `m = Σ nᵢ`.
    pub fn scalar_count(&self) -> usize {
        self.channels.iter().map(SensorChannel::len).sum()
    }

    pub fn references(&self) -> impl Iterator<Item = &Vec3> {
        self.channels.iter().map(|c| &c.b)
    }

    /// Replaces the inertial vector of channel `i`, keeping its directions.
    pub fn set_reference(&mut self, i: usize, b: Vec3) {
        self.channels[i].b = b;
    }
}

/// Per-channel outputs `yᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    channels: Vec<DVector<f64>>,
}

impl Measurement {
    pub fn from_channels(channels: Vec<DVector<f64>>) -> Self {
        Measurement { channels }
    }

    pub fn channels(&self) -> &[DVector<f64>] {
        &self.channels
    }

    pub fn channels_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.channels
    }

    pub fn channel(&self, i: usize) -> &DVector<f64> {
        &self.channels[i]
    }

    /// Stacked output `y = [y₁ᵀ … y_pᵀ]ᵀ`.
    pub fn stacked(&self) -> DVector<f64> {
        let data: Vec<f64> = self.channels.iter().flat_map(|c| c.iter().copied()).collect();
        DVector::from_vec(data)
    }

    fn check_against(&self, bank: &SensorBank) -> Result<()> {
        if self.channels.len() != bank.len() {
            return Err(Error::DimensionMismatch(format!(
                "measurement has {} channels, bank has {}",
                self.channels.len(),
                bank.len()
            )));
        }
        for (i, (y, c)) in self.channels.iter().zip(bank.channels()).enumerate() {
            if y.len() != c.len() {
                return Err(Error::DimensionMismatch(format!(
                    "channel {i}: measurement has {} scalars, bank expects {}",
                    y.len(),
                    c.len()
                )));
            }
        }
        Ok(())
    }
}

/// `S = Σ bᵢbᵢᵀ` and its pseudoinverse.
#[derive(Debug, Clone, Copy)]
pub struct GramFactorization {
    pub s: Mat3,
    pub s_pinv: Mat3,
    pub rank: usize,
    pub lambda_min_nonzero: f64,
}

impl GramFactorization {
    /// `λ₁(S) ≥ μ`, i.e. full rank with every eigenvalue above `mu`.
    pub fn is_uniformly_definite(&self, mu: f64) -> bool {
        self.rank == 3 && self.lambda_min_nonzero >= mu
    }
}

/// Pseudoinverse data for one channel's `Λ`.
#[derive(Debug, Clone)]
pub struct LambdaPinv {
    /// `(Λᵀ)†`, 3×n.
    pub lambda_t_pinv: Matrix3xX<f64>,
    /// `Λ†`, n×3.
    pub lambda_pinv: MatrixXx3<f64>,
    /// `ΛΛ†`, the orthogonal projector onto the span of the directions.
    pub projector: Mat3,
    pub rank: usize,
}

/// `yᵢ = Λᵢᵀ Rᵀ bᵢ` for every channel.
pub fn measure(bank: &SensorBank, r: &Rotation) -> Measurement {
    let rt = r.matrix().transpose();
    let channels = bank.channels().iter().map(|c| c.lambda.tr_mul(&(rt * c.b))).collect();
    Measurement { channels }
}

/// `ỹᵢ = Λᵢᵀ R̂ᵀ bᵢ − yᵢ`.
pub fn output_error(bank: &SensorBank, r_hat: &Rotation, y: &Measurement) -> Result<Measurement> {
    output_error_mat(bank, r_hat.matrix(), y)
}

pub(crate) fn output_error_mat(bank: &SensorBank, r_hat: &Mat3, y: &Measurement) -> Result<Measurement> {
    y.check_against(bank)?;
    let rt = r_hat.transpose();
    let channels = bank
        .channels()
        .iter()
        .zip(y.channels())
        .map(|(c, yi)| c.lambda.tr_mul(&(rt * c.b)) - yi)
        .collect();
    Ok(Measurement { channels })
}

pub fn gram(bank: &SensorBank) -> GramFactorization {
    gram_with_cutoff(bank, PINV_CUTOFF_FACTOR)
}

/// `S = Σ bᵢbᵢᵀ` without factorizing it.
pub fn gram_matrix(bank: &SensorBank) -> Mat3 {
    bank.references().fold(Mat3::zeros(), |acc, b| acc + b * b.transpose())
}

pub fn gram_with_cutoff(bank: &SensorBank, cutoff_factor: f64) -> GramFactorization {
    let s = gram_matrix(bank);
    let p = symmetric_pinv(&s, cutoff_factor);
    GramFactorization {
        s,
        s_pinv: p.pinv,
        rank: p.rank,
        lambda_min_nonzero: p.lambda_min_nonzero,
    }
}

pub fn lambda_pinv(channel: &SensorChannel) -> LambdaPinv {
    lambda_pinv_with_cutoff(channel, PINV_CUTOFF_FACTOR)
}

pub fn lambda_pinv_with_cutoff(channel: &SensorChannel, cutoff_factor: f64) -> LambdaPinv {
    let n = channel.len();
    let lambda = DMatrix::from_fn(3, n, |i, j| channel.lambda[(i, j)]);
    let (pinv, rank) = svd_pinv(&lambda, cutoff_factor);
    let lambda_pinv = MatrixXx3::from_fn(n, |i, j| pinv[(i, j)]);
    let lambda_t_pinv = lambda_pinv.transpose();
    let projector = &channel.lambda * &lambda_pinv;
    LambdaPinv {
        lambda_t_pinv,
        lambda_pinv,
        projector,
        rank,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::{euler_zyx, exp_so3, rot_x, rot_z};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn rotation() -> impl Strategy<Value = Rotation> {
        vec3().prop_map(|w| exp_so3(&w))
    }

    fn channel() -> impl Strategy<Value = SensorChannel> {
        (vec3(), proptest::collection::vec(vec3(), 1..=3))
            .prop_map(|(b, dirs)| SensorChannel::from_directions(b, &dirs).unwrap())
    }

    fn bank() -> impl Strategy<Value = SensorBank> {
        proptest::collection::vec(channel(), 1..=4).prop_map(|c| SensorBank::new(c).unwrap())
    }

    #[test]
    fn measure_examples() {
        let bank = SensorBank::new(vec![SensorChannel::scalar(Vec3::z(), Vec3::x())]).unwrap();
        assert_eq!(measure(&bank, &Rotation::identity()).stacked()[0], 0.0);

        let b = Vec3::new(0.2, -1.0, 3.0);
        let bank = SensorBank::new(vec![SensorChannel::vector(b)]).unwrap();
        assert_eq!(
            measure(&bank, &Rotation::identity()).channel(0).as_slice(),
            b.as_slice()
        );
    }

    #[test]
    fn measure_initial_accelerometer_scalar() {
        // e₁ᵀ Rᵀ (9.8 e₃) = 9.8 R₃₁. With R = R_z(−π/2) R_x(π/9) the third row
        // of R is (0, sin 20°, cos 20°), so the scalar is zero.
        let r = rot_z(-PI / 2.0) * rot_x(PI / 9.0);
        let bank = SensorBank::new(vec![SensorChannel::scalar(Vec3::new(0.0, 0.0, 9.8), Vec3::x())]).unwrap();
        let y = measure(&bank, &r).stacked()[0];
        assert!(y.abs() < 1e-15);
        // Along e₃ it is 9.8 R₃₃ = 9.8 cos 20°.
        let bank = SensorBank::new(vec![SensorChannel::scalar(Vec3::new(0.0, 0.0, 9.8), Vec3::z())]).unwrap();
        let y = measure(&bank, &r).stacked()[0];
        assert!((y - 9.8 * (PI / 9.0).cos()).abs() < 1e-14);
    }

    #[test]
    fn output_error_examples() {
        let bank = SensorBank::new(vec![
            SensorChannel::scalar(Vec3::z(), Vec3::x()),
            SensorChannel::vector(Vec3::new(1.0, 0.5, 0.0)),
        ])
        .unwrap();
        let r = euler_zyx(0.3, 0.2, -0.4);
        let y = measure(&bank, &r);
        let e = output_error(&bank, &r, &y).unwrap();
        assert!(e.stacked().iter().all(|v| *v == 0.0));

        let y = measure(&bank, &Rotation::identity());
        let e = output_error(&bank, &Rotation::identity(), &y).unwrap();
        assert!(e.stacked().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn output_error_rejects_mismatched_measurement() {
        let bank = SensorBank::new(vec![SensorChannel::scalar(Vec3::z(), Vec3::x())]).unwrap();
        let y = Measurement::from_channels(vec![DVector::zeros(2)]);
        assert!(matches!(
            output_error(&bank, &Rotation::identity(), &y),
            Err(Error::DimensionMismatch(_))
        ));
        let y = Measurement::from_channels(vec![]);
        assert!(output_error(&bank, &Rotation::identity(), &y).is_err());
    }

    #[test]
    fn gram_examples() {
        let r = euler_zyx(0.4, -0.9, 2.0);
        let triad: Vec<_> = (0..3)
            .map(|j| SensorChannel::scalar(r.matrix().column(j).into_owned(), Vec3::x()))
            .collect();
        let g = gram(&SensorBank::new(triad).unwrap());
        assert!((g.s - Mat3::identity()).norm() < 1e-14);
        assert!((g.s_pinv - Mat3::identity()).norm() < 1e-14);
        assert_eq!(g.rank, 3);

        let b = Vec3::new(1.0, -2.0, 2.0).normalize();
        let g = gram(&SensorBank::new(vec![SensorChannel::scalar(b, Vec3::x())]).unwrap());
        assert!((g.s_pinv - b * b.transpose()).norm() < 1e-14);
        assert_eq!(g.rank, 1);
    }

    #[test]
    fn gram_of_orthogonal_pair_projects_off_normal() {
        let b1 = Vec3::new(1.0, 1.0, 0.0).normalize();
        let b2 = Vec3::new(-1.0, 1.0, 1.0).normalize();
        let b2 = (b2 - b1 * b1.dot(&b2)).normalize();
        let bank = SensorBank::new(vec![
            SensorChannel::scalar(b1, Vec3::x()),
            SensorChannel::scalar(b2, Vec3::x()),
        ])
        .unwrap();
        let g = gram(&bank);
        assert_eq!(g.rank, 2);
        let n = b1.cross(&b2);
        let expected = Mat3::identity() - n * n.transpose();
        assert!((g.s_pinv * g.s - expected).norm() < 1e-14);
    }

    #[test]
    fn lambda_pinv_examples() {
        let a = Vec3::new(0.0, 0.6, 0.8);
        let p = lambda_pinv(&SensorChannel::scalar(Vec3::z(), a));
        assert!((p.projector - a * a.transpose()).norm() < 1e-15);

        let a1 = Vec3::new(1.0, 1.0, 0.0).normalize();
        let a2 = Vec3::z();
        let p = lambda_pinv(&SensorChannel::from_directions(Vec3::z(), &[a1, a2]).unwrap());
        let abar = a1.cross(&a2);
        assert!((p.projector - (Mat3::identity() - abar * abar.transpose())).norm() < 1e-15);

        let p = lambda_pinv(&SensorChannel::vector(Vec3::z()));
        assert!((p.lambda_t_pinv.fixed_columns::<3>(0) - Mat3::identity()).norm() < 1e-15);
        assert_eq!(p.rank, 3);
    }

    #[test]
    fn invalid_channels_and_banks() {
        assert!(SensorBank::new(vec![]).is_err());
        assert!(SensorChannel::from_directions(Vec3::z(), &[]).is_err());
        let four = Matrix3xX::from_columns(&[Vec3::x(), Vec3::y(), Vec3::z(), Vec3::x()]);
        assert!(SensorChannel::new(Vec3::z(), four).is_err());
        let nan = Matrix3xX::from_columns(&[Vec3::new(f64::NAN, 0.0, 0.0)]);
        assert!(SensorChannel::new(Vec3::z(), nan).is_err());
    }

    proptest! {
        #[test]
        fn gram_pinv_satisfies_penrose(bank in bank()) {
            let g = gram(&bank);
            let (s, p) = (g.s, g.s_pinv);
            let scale = s.norm().max(1.0);
            prop_assume!(g.rank == 0 || g.lambda_min_nonzero > 1e-6 * scale);
            prop_assert!((s * p * s - s).norm() < 1e-10 * scale);
            prop_assert!((p * s * p - p).norm() < 1e-10 * p.norm().max(1.0));
            prop_assert!((s * p - (s * p).transpose()).norm() < 1e-10);
            prop_assert!((p * s - (p * s).transpose()).norm() < 1e-10);
        }

        #[test]
        fn lambda_pinv_satisfies_penrose(c in channel()) {
            let p = lambda_pinv(&c);
            let l = &c.lambda;
            let lp = &p.lambda_pinv;
            prop_assert!((l * lp * l - l).norm() < 1e-10 * l.norm().max(1.0));
            prop_assert!((p.projector - p.projector.transpose()).norm() < 1e-10);
            let pl = lp * l;
            prop_assert!((&pl - pl.transpose()).norm() < 1e-10);
            // (Λᵀ)† is the transpose of Λ†.
            prop_assert!((p.lambda_t_pinv.transpose() - lp).norm() == 0.0);
        }

        #[test]
        fn gram_trace_is_sum_of_squares(bank in bank()) {
            let g = gram(&bank);
            let total: f64 = bank.references().map(|b| b.norm_squared()).sum();
            prop_assert!((g.s.trace() - total).abs() < 1e-12 * total.max(1.0));
        }

        #[test]
        fn output_error_is_definitional(bank in bank(), r in rotation(), r_hat in rotation()) {
            let y = measure(&bank, &r);
            let e = output_error(&bank, &r_hat, &y).unwrap();
            for (i, c) in bank.channels().iter().enumerate() {
                let direct = c.lambda.transpose() * ((r_hat.matrix().transpose() - r.matrix().transpose()) * c.b);
                prop_assert!((e.channel(i) - direct).norm() < 1e-13 * c.b.norm().max(1.0) * c.lambda.norm().max(1.0));
            }
        }

        #[test]
        fn vector_channels_reproduce_body_vectors(bs in proptest::collection::vec(vec3(), 1..4), r in rotation()) {
            let bank = SensorBank::new(bs.iter().map(|b| SensorChannel::vector(*b)).collect()).unwrap();
            let y = measure(&bank, &r);
            for (i, b) in bs.iter().enumerate() {
                prop_assert!((y.channel(i) - r.matrix().transpose() * b).norm() == 0.0);
            }
        }
    }
}
