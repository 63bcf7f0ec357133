//! Fixtures shared by the benchmarks in `benches/`.

use scalar_cf::measurement::{measure, Measurement, SensorBank, SensorChannel};
use scalar_cf::so3::{euler_zyx, Mat3, Rotation, Vec3};
use scalar_cf::ObserverState;

/// Truth, estimate and output of one benchmark case.
pub struct Case {
    pub bank: SensorBank,
    pub r: Rotation,
    pub state: ObserverState,
    pub y: Measurement,
}

fn case(bank: SensorBank) -> Case {
    let r = euler_zyx(0.4, -0.2, 0.7);
    let state = ObserverState::new(euler_zyx(-0.3, 0.5, 0.1), 1.0).expect("positive gain");
    let y = measure(&bank, &r);
    Case { bank, r, state, y }
}

/// Gravity, magnetic field and velocity, each measured along body `e₁`.
pub fn three_scalars() -> Case {
    let refs = [
        Vec3::new(0.0, 0.0, 9.8),
        Vec3::new(0.5, 0.0, 0.866),
        Vec3::new(12.0, 9.0, 0.0),
    ];
    case(SensorBank::new(refs.iter().map(|&b| SensorChannel::scalar(b, Vec3::x())).collect()).expect("non-empty"))
}

/// The same references measured as full vectors.
pub fn three_vectors() -> Case {
    let refs = [
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.5, 0.0, 0.866),
        Vec3::new(0.8, 0.6, 0.0),
    ];
    case(SensorBank::new(refs.iter().map(|&b| SensorChannel::vector(b)).collect()).expect("non-empty"))
}

/// A symmetric positive semi-definite matrix with a near-repeated pair.
pub fn near_repeated_gram() -> Mat3 {
    let q = euler_zyx(0.3, 1.1, -0.4);
    q.matrix() * Mat3::from_diagonal(&Vec3::new(4.0, 1.0 + 1e-9, 1.0)) * q.matrix().transpose()
}
