//! Truth trajectories, reference vectors and per-variant sensor layouts for
//! the three canonical scenarios plus a constant-rate custom scenario.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3xX;

use crate::analysis::solve_theta_star;
use crate::error::{Error, Result};
use crate::measurement::{SensorBank, SensorChannel};
use crate::so3::{exp_so3, rot_x, rot_y, rot_z, Rotation, Vec3};

/// Gravity magnitude used for the accelerometer reference.
pub const GRAVITY: f64 = 9.8;

/// Segment boundaries of the first scenario: rotation stops after `π` and
/// resumes after `4π`.
pub const SIM1_BREAKS: [f64; 2] = [PI, 4.0 * PI];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    Sim1,
    Sim2,
    Sim3,
    Custom,
}

impl ScenarioId {
    pub const CANONICAL: [ScenarioId; 3] = [ScenarioId::Sim1, ScenarioId::Sim2, ScenarioId::Sim3];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioId::Sim1 => "sim1",
            ScenarioId::Sim2 => "sim2",
            ScenarioId::Sim3 => "sim3",
            ScenarioId::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim1" => Ok(ScenarioId::Sim1),
            "sim2" => Ok(ScenarioId::Sim2),
            "sim3" => Ok(ScenarioId::Sim3),
            "custom" => Ok(ScenarioId::Custom),
            other => Err(Error::ConfigurationMismatch(format!(
                "unknown scenario `{other}` (expected sim1, sim2, sim3 or custom)"
            ))),
        }
    }
}

/// Observer variant run against a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Scalar2,
    Scalar3,
    Scalar6,
    VectorBaseline,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Scalar2 => "scalar-2",
            Variant::Scalar3 => "scalar-3",
            Variant::Scalar6 => "scalar-6",
            Variant::VectorBaseline => "vector-baseline",
        }
    }

    pub fn is_scalar(&self) -> bool {
        !matches!(self, Variant::VectorBaseline)
    }

    /// Variants run when none are requested explicitly.
    pub fn defaults_for(id: ScenarioId, cfg: &ScenarioConfig) -> Vec<Variant> {
        match id {
            ScenarioId::Sim1 => vec![Variant::Scalar3, Variant::Scalar6, Variant::VectorBaseline],
            ScenarioId::Sim2 | ScenarioId::Sim3 => vec![Variant::Scalar2, Variant::VectorBaseline],
            ScenarioId::Custom => {
                let mut v: Vec<Variant> = Variant::scalar_with_count(cfg.custom.scalar_count())
                    .into_iter()
                    .collect();
                v.push(Variant::VectorBaseline);
                v
            }
        }
    }

    fn scalar_with_count(n: usize) -> Option<Variant> {
        match n {
            2 => Some(Variant::Scalar2),
            3 => Some(Variant::Scalar3),
            6 => Some(Variant::Scalar6),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalar-2" => Ok(Variant::Scalar2),
            "scalar-3" => Ok(Variant::Scalar3),
            "scalar-6" => Ok(Variant::Scalar6),
            "vector-baseline" => Ok(Variant::VectorBaseline),
            other => Err(Error::ConfigurationMismatch(format!(
                "unknown variant `{other}` (expected scalar-2, scalar-3, scalar-6 or vector-baseline)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub k_scalar: f64,
    pub k_vector: f64,
}

/// Trajectory parameters. Angles in radians, rates in rad/s.
///
/// Which fields matter depends on the scenario: `psi0`, `phi0`, `omega`,
/// `gamma_dip` and `v_speed` drive the first two; `omega`, `omega_alpha`,
/// `omega_beta`, `alpha_max`, `beta_max`, `gamma_tilt`, `phi_spread` and
/// `v_speed` the third.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryParams {
    /// Yaw oscillation amplitude.
    pub psi0: f64,
    /// Roll oscillation amplitude.
    pub phi0: f64,
    pub omega: f64,
    pub omega_alpha: f64,
    pub omega_beta: f64,
    pub alpha_max: f64,
    pub beta_max: f64,
    pub gamma_dip: f64,
    pub gamma_tilt: f64,
    pub phi_spread: f64,
    pub v_speed: f64,
}

/// Constant-rate scenario with a fixed reference set measured along a
/// common set of body directions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CustomScenario {
    pub omega: Vec3,
    pub references: Vec<Vec3>,
    pub directions: Vec<Vec3>,
}

impl CustomScenario {
    pub fn scalar_count(&self) -> usize {
        self.references.len() * self.directions.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub id: ScenarioId,
    pub duration: f64,
    pub dt: f64,
    pub gains: Gains,
    /// Initial truth; only the custom scenario reads it, the others start
    /// from their trajectory.
    pub r0_true: Rotation,
    pub r0_hat: Rotation,
    pub trajectory: TrajectoryParams,
    pub custom: CustomScenario,
    /// Standard deviation of additive white noise on each body-frame
    /// reference vector, in that reference's units.
    pub noise_std: f64,
    pub seed: u64,
    /// Persistence-of-excitation window length δ.
    pub pe_window: f64,
}

impl ScenarioConfig {
    /// Number of logged samples, `floor(duration/dt) + 1`.
    pub fn sample_count(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize + 1
    }

    /// Times where the truth angular velocity is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.id {
            ScenarioId::Sim1 => SIM1_BREAKS.to_vec(),
            _ => Vec::new(),
        }
    }

    /// Worst-case ε over the trajectory for the two-scalar scenarios.
    pub fn epsilon_bound(&self) -> Option<f64> {
        let p = &self.trajectory;
        match self.id {
            ScenarioId::Sim2 => Some(p.psi0.sin().abs()),
            ScenarioId::Sim3 => Some(pitot_epsilon_bound(p.gamma_tilt, p.alpha_max, p.beta_max)),
            _ => None,
        }
    }

    /// Basin radius θ* certified by [`epsilon_bound`](Self::epsilon_bound).
    pub fn theta_star(&self) -> Option<f64> {
        self.epsilon_bound().and_then(|e| solve_theta_star(e).ok())
    }
}

/// Truth attitude, body angular velocity and inertial reference vectors at
/// one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub r: Rotation,
    pub omega: Vec3,
    /// Inertial references in scenario order: `[g, m₀, v_I]`, `[g, m₀]`,
    /// `[v_I]`, or the custom list.
    pub references: Vec<Vec3>,
}

impl TrajectorySample {
    /// The sensor bank of `layout` at this instant.
    pub fn bank(&self, layout: &VariantLayout) -> SensorBank {
        let channels = layout
            .channels
            .iter()
            .map(|c| SensorChannel {
                b: layout.reference_scale(&self.references[c.reference]) * self.references[c.reference],
                lambda: c.lambda.clone(),
            })
            .collect();
        SensorBank::new(channels).expect("layouts always have channels")
    }

    /// Overwrites the references of a bank built by [`Self::bank`] for the
    /// same layout.
    pub fn update_bank(&self, layout: &VariantLayout, bank: &mut SensorBank) {
        for (i, c) in layout.channels.iter().enumerate() {
            let b = self.references[c.reference];
            bank.set_reference(i, layout.reference_scale(&b) * b);
        }
    }
}

fn magnetic_reference(gamma_dip: f64) -> Vec3 {
    Vec3::new(gamma_dip.cos(), 0.0, gamma_dip.sin())
}

fn gravity_reference() -> Vec3 {
    Vec3::new(0.0, 0.0, GRAVITY)
}

/// Yaw and roll oscillation shared by the first two scenarios:
/// `R = R_z(ψ)R_x(φ)`, `ψ = −π/2 + ψ₀ sin(ωτ)`, `φ = φ₀ cos(ωτ)`.
fn yaw_roll(p: &TrajectoryParams, tau: f64, moving: bool) -> (Rotation, Vec3, f64) {
    let w = p.omega;
    let psi = -PI / 2.0 + p.psi0 * (w * tau).sin();
    let phi = p.phi0 * (w * tau).cos();
    let omega = if moving {
        let psi_dot = p.psi0 * w * (w * tau).cos();
        let phi_dot = -p.phi0 * w * (w * tau).sin();
        Vec3::new(phi_dot, psi_dot * phi.sin(), psi_dot * phi.cos())
    } else {
        Vec3::zeros()
    };
    (rot_z(psi) * rot_x(phi), omega, psi)
}

pub fn sim1_sample(cfg: &ScenarioConfig, t: f64) -> TrajectorySample {
    sim1_sample_within(cfg, t, t)
}

/// Sim 1 evaluated with the segment picked by `probe` rather than `t`, so an
/// integrator step ending on a breakpoint sees the rate of its own segment.
fn sim1_sample_within(cfg: &ScenarioConfig, t: f64, probe: f64) -> TrajectorySample {
    let p = &cfg.trajectory;
    let [stop, resume] = SIM1_BREAKS;
    // The third segment replays the first from the phase where it stopped,
    // so the attitude is continuous at both boundaries.
    let (tau, moving) = if probe <= stop {
        (t, true)
    } else if probe <= resume {
        (stop, false)
    } else {
        (t - (resume - stop), true)
    };
    let (r, omega, psi) = yaw_roll(p, tau, moving);
    let v_i = p.v_speed * Vec3::new(psi.cos(), psi.sin(), 0.0);
    TrajectorySample {
        t,
        r,
        omega,
        references: vec![gravity_reference(), magnetic_reference(p.gamma_dip), v_i],
    }
}

pub fn sim2_sample(cfg: &ScenarioConfig, t: f64) -> TrajectorySample {
    let p = &cfg.trajectory;
    let (r, omega, _) = yaw_roll(p, t, true);
    TrajectorySample {
        t,
        r,
        omega,
        references: vec![gravity_reference(), magnetic_reference(p.gamma_dip)],
    }
}

/// Angle of attack `α(t)` and sideslip `β(t)` of the third scenario.
pub fn sim3_aero_angles(p: &TrajectoryParams, t: f64) -> (f64, f64) {
    (
        p.alpha_max * (p.omega_alpha * t).sin(),
        p.beta_max * (p.omega_beta * t).sin(),
    )
}

/// `R(t) = R_z(ωt − β(t)) R_y(α(t))`, which puts the loiter velocity
/// `V[cos ωt, sin ωt, 0]` at angle of attack `α` and sideslip `β` in the
/// body frame.
pub fn sim3_sample(cfg: &ScenarioConfig, t: f64) -> TrajectorySample {
    let p = &cfg.trajectory;
    let (alpha, beta) = sim3_aero_angles(p, t);
    let alpha_dot = p.alpha_max * p.omega_alpha * (p.omega_alpha * t).cos();
    let beta_dot = p.beta_max * p.omega_beta * (p.omega_beta * t).cos();
    let yaw_rate = p.omega - beta_dot;
    let r = rot_z(p.omega * t - beta) * rot_y(alpha);
    let omega = Vec3::new(-yaw_rate * alpha.sin(), alpha_dot, yaw_rate * alpha.cos());
    let v_i = p.v_speed * Vec3::new((p.omega * t).cos(), (p.omega * t).sin(), 0.0);
    TrajectorySample {
        t,
        r,
        omega,
        references: vec![v_i],
    }
}

/// `R(t) = R₀ exp(t[Ω]×)` with constant body rate.
pub fn custom_sample(cfg: &ScenarioConfig, t: f64) -> TrajectorySample {
    TrajectorySample {
        t,
        r: cfg.r0_true * exp_so3(&(cfg.custom.omega * t)),
        omega: cfg.custom.omega,
        references: cfg.custom.references.clone(),
    }
}

pub fn sample(cfg: &ScenarioConfig, t: f64) -> TrajectorySample {
    sample_within(cfg, t, t)
}

/// Samples at `t` using the piecewise segment that contains `probe`. Only
/// differs from [`sample`] when `t` sits on a breakpoint.
pub fn sample_within(cfg: &ScenarioConfig, t: f64, probe: f64) -> TrajectorySample {
    match cfg.id {
        ScenarioId::Sim1 => sim1_sample_within(cfg, t, probe),
        ScenarioId::Sim2 => sim2_sample(cfg, t),
        ScenarioId::Sim3 => sim3_sample(cfg, t),
        ScenarioId::Custom => custom_sample(cfg, t),
    }
}

/// Pitot probe directions tilted by `gamma_tilt` about `e₂` and spread
/// symmetrically by `±phi_spread` towards `e₂`, with their unit normal.
pub fn pitot_geometry(gamma_tilt: f64, phi_spread: f64) -> Result<(Vec3, Vec3, Vec3)> {
    let axis = Vec3::new(gamma_tilt.cos(), 0.0, gamma_tilt.sin());
    let a1 = phi_spread.cos() * axis + phi_spread.sin() * Vec3::y();
    let a2 = phi_spread.cos() * axis - phi_spread.sin() * Vec3::y();
    let n = a1.cross(&a2);
    let norm = n.norm();
    if !(norm >= 1e-9) {
        return Err(Error::DegenerateGeometry(norm));
    }
    Ok((a1, a2, n / norm))
}

/// `max |sin ∠(ā, Rᵀv̂)|` over `|α| ≤ α_max`, `|β| ≤ β_max`, i.e.
/// `√(1 − cos²β_max · min sin²(γ − α))`.
pub fn pitot_epsilon_bound(gamma_tilt: f64, alpha_max: f64, beta_max: f64) -> f64 {
    let lo = gamma_tilt - alpha_max;
    let hi = gamma_tilt + alpha_max;
    let min_sin = if lo <= 0.0 && hi >= 0.0 {
        0.0
    } else {
        lo.sin().abs().min(hi.sin().abs())
    };
    (1.0 - beta_max.cos().powi(2) * min_sin.powi(2)).max(0.0).sqrt()
}

/// Accelerometer, magnetometer and velocity references each measured along
/// the body `e₁` axis.
pub fn accel_mag_airspeed_bank(gamma_dip: f64, v_i: Vec3) -> SensorBank {
    let channels = [gravity_reference(), magnetic_reference(gamma_dip), v_i]
        .into_iter()
        .map(|b| SensorChannel::scalar(b, Vec3::x()))
        .collect();
    SensorBank::new(channels).expect("three channels")
}

/// One channel of a variant: which reference it reads and along which
/// body directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub reference: usize,
    pub lambda: Matrix3xX<f64>,
}

/// Stability analysis that applies to a variant, with the data it needs.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostics {
    /// At least three scalars sharing one `Λ`.
    CommonLambda {
        lambda: Matrix3xX<f64>,
    },
    /// Two references along one body direction `a`.
    TwoReferencesOneDirection {
        a: Vec3,
        theta_star: f64,
    },
    /// One reference along two body directions.
    OneReferenceTwoDirections {
        a1: Vec3,
        a2: Vec3,
        theta_star: f64,
    },
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantLayout {
    pub variant: Variant,
    pub k: f64,
    pub channels: Vec<ChannelSpec>,
    /// Full-vector variants feed the classical innovation with unit references.
    pub classical: bool,
    pub diagnostics: Diagnostics,
}

impl VariantLayout {
    /// Factor applied to a reference before it enters this variant's bank.
    pub(crate) fn reference_scale(&self, b: &Vec3) -> f64 {
        if self.classical {
            1.0 / b.norm()
        } else {
            1.0
        }
    }
}

fn directions(cols: &[Vec3]) -> Matrix3xX<f64> {
    Matrix3xX::from_columns(cols)
}

fn full_vector() -> Matrix3xX<f64> {
    directions(&[Vec3::x(), Vec3::y(), Vec3::z()])
}

fn uniform(refs: &[usize], lambda: &Matrix3xX<f64>) -> Vec<ChannelSpec> {
    refs.iter()
        .map(|&reference| ChannelSpec {
            reference,
            lambda: lambda.clone(),
        })
        .collect()
}

/// Channels, gain and diagnostics for `variant` in `cfg`'s scenario.
pub fn variant_layout(cfg: &ScenarioConfig, variant: Variant) -> Result<VariantLayout> {
    let incompatible = || Error::IncompatibleVariant {
        variant: variant.to_string(),
        scenario: cfg.id.to_string(),
    };
    let scalar = |channels: Vec<ChannelSpec>, diagnostics: Diagnostics| VariantLayout {
        variant,
        k: cfg.gains.k_scalar,
        channels,
        classical: false,
        diagnostics,
    };
    let vector = |refs: &[usize]| VariantLayout {
        variant,
        k: cfg.gains.k_vector,
        channels: uniform(refs, &full_vector()),
        classical: true,
        diagnostics: Diagnostics::None,
    };
    let theta_star = || {
        cfg.theta_star()
            .ok_or_else(|| Error::NoSolution(cfg.epsilon_bound().unwrap_or(f64::NAN)))
    };

    match (cfg.id, variant) {
        (ScenarioId::Sim1, Variant::Scalar3) => {
            let l = directions(&[Vec3::x()]);
            Ok(scalar(uniform(&[0, 1, 2], &l), Diagnostics::CommonLambda { lambda: l }))
        }
        (ScenarioId::Sim1, Variant::Scalar6) => {
            let l = directions(&[Vec3::x(), Vec3::z()]);
            Ok(scalar(uniform(&[0, 1, 2], &l), Diagnostics::CommonLambda { lambda: l }))
        }
        (ScenarioId::Sim1 | ScenarioId::Sim2, Variant::VectorBaseline) => Ok(vector(&[0, 1])),
        (ScenarioId::Sim2, Variant::Scalar2) => Ok(scalar(
            uniform(&[0, 1], &directions(&[Vec3::x()])),
            Diagnostics::TwoReferencesOneDirection {
                a: Vec3::x(),
                theta_star: theta_star()?,
            },
        )),
        (ScenarioId::Sim3, Variant::Scalar2) => {
            let (a1, a2, _) = pitot_geometry(cfg.trajectory.gamma_tilt, cfg.trajectory.phi_spread)?;
            Ok(scalar(
                uniform(&[0], &directions(&[a1, a2])),
                Diagnostics::OneReferenceTwoDirections {
                    a1,
                    a2,
                    theta_star: theta_star()?,
                },
            ))
        }
        (ScenarioId::Sim3, Variant::VectorBaseline) => Ok(vector(&[0])),
        (ScenarioId::Custom, Variant::VectorBaseline) => {
            let refs: Vec<usize> = (0..cfg.custom.references.len()).collect();
            Ok(vector(&refs))
        }
        (ScenarioId::Custom, v) if Variant::scalar_with_count(cfg.custom.scalar_count()) == Some(v) => {
            let l = directions(&cfg.custom.directions);
            let refs: Vec<usize> = (0..cfg.custom.references.len()).collect();
            Ok(scalar(uniform(&refs, &l), Diagnostics::CommonLambda { lambda: l }))
        }
        _ => Err(incompatible()),
    }
}
