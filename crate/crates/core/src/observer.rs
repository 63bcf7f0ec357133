//! Complementary observer `dR̂/dt = R̂[Ω]× + [Δ]×R̂` with the scalar-output
//! innovation, the classical full-vector innovation, and fixed-step RK4
//! propagation of both the estimate and the true attitude.

use crate::error::{Error, Result};
use crate::measurement::{
    gram, gram_matrix, lambda_pinv, output_error_mat, GramFactorization, LambdaPinv, Measurement, SensorBank,
};
use crate::so3::{hat, project_to_so3, Mat3, Rotation, Vec3};

/// Entry tolerance when deciding whether a channel is a full vector (`Λ = I₃`).
pub const VECTOR_BANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverState {
    pub r_hat: Rotation,
    /// Innovation gain, strictly positive.
    pub k: f64,
}

impl ObserverState {
    pub fn new(r_hat: Rotation, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::ConfigurationMismatch(format!("gain must be positive, got {k}")));
        }
        Ok(ObserverState { r_hat, k })
    }
}

/// The innovation `Δ` and the per-channel terms it sums.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationReport {
    pub delta: Vec3,
    pub contributions: Vec<Vec3>,
}

/// `S†` and the per-channel `(Λᵢᵀ)†` for one bank snapshot.
///
/// Banks whose directions never change can reuse the `Λ` part across steps
/// with [`BankFactors::refresh_gram`].
#[derive(Debug, Clone)]
pub struct BankFactors {
    pub gram: GramFactorization,
    pub lambdas: Vec<LambdaPinv>,
}

impl BankFactors {
    pub fn new(bank: &SensorBank) -> Self {
        BankFactors {
            gram: gram(bank),
            lambdas: bank.channels().iter().map(lambda_pinv).collect(),
        }
    }

    /// Recomputes `S†` only, keeping the cached `Λ` pseudoinverses. Skips the
    /// eigen-decomposition when the references have not moved.
    pub fn refresh_gram(&mut self, bank: &SensorBank) {
        if self.gram.s != gram_matrix(bank) {
            self.gram = gram(bank);
        }
    }
}

/// `Δ = k Σᵢ [S†bᵢ]× R̂ (Λᵢᵀ)† ỹᵢ`.
pub fn innovation(bank: &SensorBank, state: &ObserverState, y: &Measurement) -> Result<InnovationReport> {
    let factors = BankFactors::new(bank);
    innovation_with(bank, &factors, state.k, state.r_hat.matrix(), y)
}

/// Same as [`innovation`] with precomputed factors. `r_hat` need not be
/// exactly orthonormal (RK4 stages evaluate it off the manifold).
pub fn innovation_with(
    bank: &SensorBank,
    factors: &BankFactors,
    k: f64,
    r_hat: &Mat3,
    y: &Measurement,
) -> Result<InnovationReport> {
    if factors.lambdas.len() != bank.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} cached Lambda factors for {} channels",
            factors.lambdas.len(),
            bank.len()
        )));
    }
    let err = output_error_mat(bank, r_hat, y)?;
    let mut delta = Vec3::zeros();
    let contributions = bank
        .channels()
        .iter()
        .zip(&factors.lambdas)
        .zip(err.channels())
        .map(|((c, lp), e)| {
            let term = k * hat(&(factors.gram.s_pinv * c.b)) * r_hat * (&lp.lambda_t_pinv * e);
            delta += term;
            term
        })
        .collect();
    Ok(InnovationReport { delta, contributions })
}

/// `Δ` alone, as in [`innovation_with`], without per-channel allocations.
/// Uses `(Λᵀ)†ỹ = ΛΛ†R̂ᵀb − (Λᵀ)†y` with `ỹ = ŷ − y`.
pub fn innovation_delta_with(
    bank: &SensorBank,
    factors: &BankFactors,
    k: f64,
    r_hat: &Mat3,
    y: &Measurement,
) -> Result<Vec3> {
    if factors.lambdas.len() != bank.len() || y.channels().len() != bank.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} cached Lambda factors and {} measured channels for {} channels",
            factors.lambdas.len(),
            y.channels().len(),
            bank.len()
        )));
    }
    let rt = r_hat.transpose();
    let mut sum = Vec3::zeros();
    for ((c, lp), yi) in bank.channels().iter().zip(&factors.lambdas).zip(y.channels()) {
        if yi.len() != lp.lambda_t_pinv.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "channel expects {} scalars, got {}",
                lp.lambda_t_pinv.ncols(),
                yi.len()
            )));
        }
        let mut body = lp.projector * (rt * c.b);
        for (j, v) in yi.iter().enumerate() {
            body -= lp.lambda_t_pinv.column(j) * *v;
        }
        sum += (factors.gram.s_pinv * c.b).cross(&(r_hat * body));
    }
    Ok(k * sum)
}

/// Full-vector complementary filter innovation, `Δ = k R̂ Σᵢ [Rᵀbᵢ]× R̂ᵀbᵢ`,
/// with `Rᵀbᵢ` read from the measurement.
///
/// Requires every channel to have `Λ = I₃`.
pub fn classical_innovation(bank: &SensorBank, state: &ObserverState, y: &Measurement) -> Result<Vec3> {
    classical_innovation_with(bank, state.k, state.r_hat.matrix(), y)
}

pub fn classical_innovation_with(bank: &SensorBank, k: f64, r_hat: &Mat3, y: &Measurement) -> Result<Vec3> {
    if let Some(i) = bank.channels().iter().position(|c| !c.is_full_vector(VECTOR_BANK_TOL)) {
        return Err(Error::NotVectorBank(i));
    }
    if y.channels().len() != bank.len() || y.channels().iter().any(|v| v.len() != 3) {
        return Err(Error::DimensionMismatch(
            "vector bank expects 3 scalars per channel".into(),
        ));
    }
    let rt = r_hat.transpose();
    let sum = bank
        .channels()
        .iter()
        .zip(y.channels())
        .fold(Vec3::zeros(), |acc, (c, yi)| {
            let body = Vec3::new(yi[0], yi[1], yi[2]);
            acc + body.cross(&(rt * c.b))
        });
    Ok(k * (r_hat * sum))
}

/// One RK4 step of `dX/dt = X[Ω]× + [Δ]×X` followed by projection onto SO(3).
///
/// `inputs(offset, x)` returns `(Ω, Δ)` at time `t + offset` for the stage
/// matrix `x`; offsets are `0`, `dt/2` (twice) and `dt`.
pub fn observer_step_with<F>(r_hat: &Rotation, dt: f64, mut inputs: F) -> Result<Rotation>
where
    F: FnMut(f64, &Mat3) -> Result<(Vec3, Vec3)>,
{
    if !(dt > 0.0) {
        return Err(Error::ConfigurationMismatch(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let mut rhs = |offset: f64, x: &Mat3| -> Result<Mat3> {
        let (omega, delta) = inputs(offset, x)?;
        Ok(x * hat(&omega) + hat(&delta) * x)
    };
    let x0 = *r_hat.matrix();
    let k1 = rhs(0.0, &x0)?;
    let k2 = rhs(0.5 * dt, &(x0 + k1 * (0.5 * dt)))?;
    let k3 = rhs(0.5 * dt, &(x0 + k2 * (0.5 * dt)))?;
    let k4 = rhs(dt, &(x0 + k3 * dt))?;
    let x1 = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if !x1.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate(f64::NAN));
    }
    project_to_so3(&x1)
}

/// One step with `Ω` and `Δ` held constant over the interval.
pub fn observer_step(state: &ObserverState, omega: &Vec3, delta: &Vec3, dt: f64) -> Result<ObserverState> {
    let r_hat = observer_step_with(&state.r_hat, dt, |_, _| Ok((*omega, *delta)))?;
    Ok(ObserverState { r_hat, k: state.k })
}

/// One step of `dR/dt = R[Ω]×` with constant `Ω`.
pub fn truth_step(r: &Rotation, omega: &Vec3, dt: f64) -> Result<Rotation> {
    observer_step_with(r, dt, |_, _| Ok((*omega, Vec3::zeros())))
}

/// One step of `dR/dt = R[Ω(t)]×` with `Ω` sampled at the RK4 stage times.
pub fn truth_step_with<F>(r: &Rotation, t: f64, dt: f64, omega: F) -> Result<Rotation>
where
    F: Fn(f64) -> Vec3,
{
    observer_step_with(r, dt, |offset, _| Ok((omega(t + offset), Vec3::zeros())))
}
