//! Complementary attitude filter on SO(3) driven by scalar measurements:
//! projections `aᵀRᵀb` of known inertial vectors onto known body directions.
//!
//! The observer integrates `dR̂/dt = R̂[Ω]× + [Δ]×R̂` where the innovation
//! `Δ = k Σᵢ [S†bᵢ]× R̂ (Λᵢᵀ)† ỹᵢ` reduces to the classical full-vector
//! filter when every `Λᵢ` is the identity. The crate also carries the
//! stability diagnostics (potential, persistence of excitation, basin
//! certificates), the three reference scenarios, a lockstep simulator, CSV
//! and SVG writers, and the acceptance checks.

// `!(x > tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod check;
pub mod config;
pub mod error;
pub mod linalg;
pub mod measurement;
pub mod observer;
pub mod output;
pub mod scenarios;
pub mod sim;
pub mod so3;

pub use analysis::{
    basin_check, error_metrics, solve_theta_star, BasinCertificate, ErrorMetrics, LyapunovDecomposition, PeWindow,
};
pub use config::ConfigError;
pub use error::{Error, Result};
pub use measurement::{measure, Measurement, SensorBank, SensorChannel};
pub use observer::{classical_innovation, innovation, observer_step, ObserverState};
pub use scenarios::{ScenarioConfig, ScenarioId, TrajectorySample, Variant};
pub use sim::{run, RunManifest, RunRecord, RunRow};
pub use so3::{exp_so3, hat, log_so3, vee, Mat3, Rotation, Vec3};
