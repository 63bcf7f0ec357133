//! Acceptance checks. Each criterion returns a [`Verdict`]; tolerances are
//! the constants below.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{
    epsilon_two_directions, error_metrics, solve_theta_star, two_direction_innovation, two_reference_innovation,
};
use crate::config::bundled;
use crate::error::Result;
use crate::measurement::{measure, SensorBank, SensorChannel};
use crate::observer::{classical_innovation, innovation, ObserverState};
use crate::scenarios::{pitot_epsilon_bound, pitot_geometry, sample, ScenarioConfig, ScenarioId, Variant, SIM1_BREAKS};
use crate::sim::{run, RunRecord};
use crate::so3::{exp_so3, rot_y, rot_z, Rotation, Vec3};

pub const INITIAL_ERROR_TOL_DEG: f64 = 0.5;
pub const THETA_STAR_SIN15_TOL_DEG: f64 = 0.1;
pub const THETA_STAR_PITOT_TOL_DEG: f64 = 0.05;
pub const PITOT_EPSILON: f64 = 0.9237;
pub const PITOT_EPSILON_TOL: f64 = 1e-4;
pub const PITOT_SWEEP_SLACK: f64 = 1e-6;
pub const RANDOM_STATES: usize = 1000;
pub const INNOVATION_TOL: f64 = 1e-12;
pub const MONOTONE_SLACK: f64 = 1e-7;
/// Central differences of `V` against the closed form: `C·dt² + 1e-8`.
pub const V_DOT_DT2_FACTOR: f64 = 10.0;
pub const V_DOT_FLOOR: f64 = 1e-8;
/// `V₀ + V_E` against the closed form, which is the same quantity by algebra.
pub const DECOMPOSITION_TOL: f64 = 1e-10;
pub const PLATEAU_CHANGE_DEG: f64 = 1.0;
pub const PLATEAU_REMAINING_DEG: f64 = 5.0;
/// Time after the stop at `π` before the plateau is measured: three time
/// constants of the decay of the observable error component (about 1 s).
pub const PLATEAU_TRANSIENT_S: f64 = 3.0;
pub const SIM1_FINAL_DEG: f64 = 2.0;
pub const CONVERGED_DEG: f64 = 1.0;
pub const RUNTIME_LIMIT_S: f64 = 2.0;
pub const HALVING_TOL_RAD: f64 = 1e-4;
pub const ORTHONORMALITY_TOL: f64 = 1e-9;
pub const PE_COLLAPSE: f64 = 1e-6;

pub const ACCEPTANCE_DT: f64 = 1e-3;
pub const HALVED_DT: f64 = 5e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub criterion: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(criterion: u8, name: &'static str, passed: bool, detail: String) -> Self {
        Verdict {
            criterion,
            name,
            passed,
            detail,
        }
    }

    /// `PASS  3 epsilon-bound: ...`
    pub fn line(&self) -> String {
        format!(
            "{} {:>2} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.detail
        )
    }
}

/// All default variants of one scenario at one step size.
#[derive(Debug, Clone)]
pub struct ScenarioRuns {
    pub cfg: ScenarioConfig,
    pub records: Vec<RunRecord>,
    pub seconds: f64,
}

impl ScenarioRuns {
    pub fn new(id: ScenarioId, dt: f64) -> Result<Self> {
        let mut cfg = bundled(id)?;
        cfg.dt = dt;
        let variants = Variant::defaults_for(id, &cfg);
        let start = Instant::now();
        let records = run(&cfg, &variants)?;
        Ok(ScenarioRuns {
            cfg,
            records,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn record(&self, v: Variant) -> &RunRecord {
        self.records.iter().find(|r| r.variant == v).expect("default variant")
    }
}

/// Runs of the three canonical scenarios.
#[derive(Debug, Clone)]
pub struct CanonicalRuns {
    pub sims: Vec<ScenarioRuns>,
}

impl CanonicalRuns {
    pub fn new(dt: f64) -> Result<Self> {
        let sims = ScenarioId::CANONICAL
            .iter()
            .map(|&id| ScenarioRuns::new(id, dt))
            .collect::<Result<_>>()?;
        Ok(CanonicalRuns { sims })
    }

    pub fn get(&self, id: ScenarioId) -> &ScenarioRuns {
        self.sims.iter().find(|s| s.cfg.id == id).expect("canonical scenario")
    }
}

pub fn criterion1_initial_error() -> Result<Verdict> {
    let expected = [
        (ScenarioId::Sim1, 91.7),
        (ScenarioId::Sim2, 70.0),
        (ScenarioId::Sim3, 19.0),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (id, want) in expected {
        let cfg = bundled(id)?;
        let theta = error_metrics(&sample(&cfg, 0.0).r, &cfg.r0_hat)
            .theta_tilde
            .to_degrees();
        ok &= (theta - want).abs() <= INITIAL_ERROR_TOL_DEG;
        parts.push(format!("{id} {theta:.3} deg (want {want})"));
    }
    Ok(Verdict::new(1, "initial-error", ok, parts.join(", ")))
}

pub fn criterion2_theta_star() -> Result<Verdict> {
    let a = solve_theta_star(15f64.to_radians().sin())?.to_degrees();
    let b = solve_theta_star(PITOT_EPSILON)?.to_degrees();
    let ok = (a - 71.4).abs() <= THETA_STAR_SIN15_TOL_DEG && (b - 20.23).abs() <= THETA_STAR_PITOT_TOL_DEG;
    Ok(Verdict::new(
        2,
        "theta-star",
        ok,
        format!("theta*(sin 15 deg) = {a:.4} deg, theta*(0.9237) = {b:.4} deg"),
    ))
}

/// Worst-case pitot ε and a dense `(α, β, heading)` sweep of the instantaneous value.
pub fn criterion3_epsilon_bound() -> Result<Verdict> {
    let cfg = bundled(ScenarioId::Sim3)?;
    let p = cfg.trajectory;
    let bound = pitot_epsilon_bound(p.gamma_tilt, p.alpha_max, p.beta_max);
    let (a1, a2, _) = pitot_geometry(p.gamma_tilt, p.phi_spread)?;
    let v = Vec3::x();
    let n = 200;
    let mut worst = 0.0f64;
    for i in 0..=n {
        let alpha = -p.alpha_max + 2.0 * p.alpha_max * i as f64 / n as f64;
        for j in 0..=n {
            let beta = -p.beta_max + 2.0 * p.beta_max * j as f64 / n as f64;
            for heading in [0.0, 1.3, -2.4] {
                let r = rot_z(heading - beta) * rot_y(alpha);
                let v_i = rot_z(heading) * v;
                worst = worst.max(epsilon_two_directions(&a1, &a2, &r, &v_i)?);
            }
        }
    }
    let ok = (bound - PITOT_EPSILON).abs() <= PITOT_EPSILON_TOL && worst <= bound + PITOT_SWEEP_SLACK;
    Ok(Verdict::new(
        3,
        "epsilon-bound",
        ok,
        format!("bound {bound:.6}, sweep max {worst:.6}"),
    ))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    let axis = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    exp_so3(&(axis.normalize() * rng.random_range(0.0..PI)))
}

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

/// Generic innovation against the classical one on orthonormal triads with `Λ = I₃`.
pub fn criterion4_classical_reduction() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..RANDOM_STATES {
        let frame = random_rotation(&mut rng);
        let channels = (0..3)
            .map(|j| SensorChannel::vector(frame.matrix().column(j).into_owned()))
            .collect();
        let bank = SensorBank::new(channels)?;
        let r = random_rotation(&mut rng);
        let state = ObserverState::new(random_rotation(&mut rng), rng.random_range(0.1..5.0))?;
        let y = measure(&bank, &r);
        let generic = innovation(&bank, &state, &y)?.delta;
        let classical = classical_innovation(&bank, &state, &y)?;
        worst = worst.max((generic - classical).norm());
    }
    Ok(Verdict::new(
        4,
        "classical-reduction",
        worst <= INNOVATION_TOL,
        format!("max |difference| {worst:.2e} over {RANDOM_STATES} states"),
    ))
}

/// Closed-form two-scalar innovations against the generic evaluation.
pub fn criterion5_closed_forms() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst1, mut worst2) = (0.0f64, 0.0f64);
    let mut n1 = 0;
    while n1 < RANDOM_STATES {
        let (a, b1, b2) = (
            random_vec(&mut rng, 2.0),
            random_vec(&mut rng, 10.0),
            random_vec(&mut rng, 10.0),
        );
        if a.norm() < 0.1 || b1.cross(&b2).norm() < 0.1 {
            continue;
        }
        let (r, r_hat, k) = (
            random_rotation(&mut rng),
            random_rotation(&mut rng),
            rng.random_range(0.1..5.0),
        );
        let bank = SensorBank::new(vec![SensorChannel::scalar(b1, a), SensorChannel::scalar(b2, a)])?;
        let generic = innovation(&bank, &ObserverState::new(r_hat, k)?, &measure(&bank, &r))?.delta;
        worst1 = worst1.max((generic - two_reference_innovation(&a, &r, &r_hat, &b1, &b2, k)?).norm());
        n1 += 1;
    }
    let mut n2 = 0;
    while n2 < RANDOM_STATES {
        let (a1, a2, b) = (
            random_vec(&mut rng, 2.0),
            random_vec(&mut rng, 2.0),
            random_vec(&mut rng, 10.0),
        );
        if b.norm() < 0.1 || a1.cross(&a2).norm() < 0.1 {
            continue;
        }
        let (r, r_hat, k) = (
            random_rotation(&mut rng),
            random_rotation(&mut rng),
            rng.random_range(0.1..5.0),
        );
        let bank = SensorBank::new(vec![SensorChannel::from_directions(b, &[a1, a2])?])?;
        let generic = innovation(&bank, &ObserverState::new(r_hat, k)?, &measure(&bank, &r))?.delta;
        worst2 = worst2.max((generic - two_direction_innovation(&a1, &a2, &r, &r_hat, &b, k)?).norm());
        n2 += 1;
    }
    Ok(Verdict::new(
        5,
        "closed-forms",
        worst1 <= INNOVATION_TOL && worst2 <= INNOVATION_TOL,
        format!("max |difference| {worst1:.2e} (two references), {worst2:.2e} (two directions)"),
    ))
}

fn straddles(t0: f64, t1: f64, breaks: &[f64]) -> bool {
    breaks.iter().any(|&b| t0 <= b && b <= t1)
}

/// Potential monotonicity where the stability hypotheses hold, and agreement
/// of the three derivative evaluations.
pub fn criterion6_lyapunov(runs: &CanonicalRuns) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for sim in &runs.sims {
        let breaks = sim.cfg.breakpoints();
        for rec in sim.records.iter().filter(|r| r.variant.is_scalar()) {
            let dt = rec.dt;
            let rows = &rec.rows;
            let mut worst_rise = f64::NEG_INFINITY;
            let mut checked = 0usize;
            for w in rows.windows(2) {
                let holds = match rec.theta_star {
                    None => true,
                    Some(_) => w[0].margin > 0.0 && w[0].inside_basin,
                };
                if holds {
                    worst_rise = worst_rise.max(w[1].v - w[0].v);
                    checked += 1;
                }
            }
            let fd_tol = V_DOT_DT2_FACTOR * dt * dt + V_DOT_FLOOR;
            let mut worst_fd = 0.0f64;
            for i in 1..rows.len().saturating_sub(1) {
                if straddles(rows[i - 1].t, rows[i + 1].t, &breaks) {
                    continue;
                }
                worst_fd = worst_fd.max((rows[i].v_dot_numeric - rec.v_dot_closed[i]).abs());
            }
            let worst_split = rows
                .iter()
                .zip(&rec.v_dot_closed)
                .map(|(r, c)| (r.v0 + r.v_e - c).abs())
                .fold(0.0f64, f64::max);
            let pass =
                worst_rise <= MONOTONE_SLACK && checked > 0 && worst_fd <= fd_tol && worst_split <= DECOMPOSITION_TOL;
            ok &= pass;
            parts.push(format!(
                "{} {}: max rise {:.1e} over {} steps, |fd - closed| {:.1e} (tol {:.1e}), |V0+V_E - closed| {:.1e}",
                sim.cfg.id, rec.variant, worst_rise, checked, worst_fd, fd_tol, worst_split
            ));
        }
    }
    Verdict::new(6, "lyapunov", ok, parts.join("; "))
}

fn theta_at(rec: &RunRecord, t: f64) -> f64 {
    let i = ((t / rec.dt).round() as usize).min(rec.rows.len() - 1);
    rec.rows[i].theta_tilde_deg
}

/// Sim 1: the three-scalar observer stalls while rotation stops; the others
/// keep converging; everything ends below 2°.
pub fn criterion7_plateau(runs: &CanonicalRuns) -> Verdict {
    let sim = runs.get(ScenarioId::Sim1);
    let [stop, resume] = SIM1_BREAKS;
    let from = stop + PLATEAU_TRANSIENT_S;

    let s3 = sim.record(Variant::Scalar3);
    let seg: Vec<f64> = s3
        .rows
        .iter()
        .filter(|r| r.t >= from && r.t <= resume)
        .map(|r| r.theta_tilde_deg)
        .collect();
    let hi = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = seg.iter().copied().fold(f64::INFINITY, f64::min);
    let plateau = hi - lo < PLATEAU_CHANGE_DEG && lo > PLATEAU_REMAINING_DEG;
    let mut parts = vec![format!(
        "scalar-3 range on [{from:.2}, {resume:.2}] {:.3} deg at {lo:.2} deg",
        hi - lo
    )];

    // Converging through the stop: the error keeps falling from π to 4π by
    // at least the plateau tolerance, unless it is already below it.
    let mut through = true;
    for v in [Variant::Scalar6, Variant::VectorBaseline] {
        let rec = sim.record(v);
        let (a, b) = (theta_at(rec, stop), theta_at(rec, resume));
        let keeps = b < SIM1_FINAL_DEG || a - b > PLATEAU_CHANGE_DEG;
        through &= keeps;
        parts.push(format!("{v} {a:.2} -> {b:.2} deg"));
    }

    let mut finals = true;
    for rec in &sim.records {
        finals &= rec.final_theta_deg() < SIM1_FINAL_DEG;
        parts.push(format!("{} final {:.3} deg", rec.variant, rec.final_theta_deg()));
    }
    let fast = runs.sims.iter().all(|s| s.seconds < RUNTIME_LIMIT_S);
    parts.push(format!(
        "runtimes {}",
        runs.sims
            .iter()
            .map(|s| format!("{} {:.2}s", s.cfg.id, s.seconds))
            .collect::<Vec<_>>()
            .join(" ")
    ));
    Verdict::new(
        7,
        "sim1-plateau",
        plateau && through && finals && fast,
        parts.join(", "),
    )
}

/// Sims 2 and 3: start inside the basin, stay inside, converge below 1°.
pub fn criterion8_convergence(runs: &CanonicalRuns) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for id in [ScenarioId::Sim2, ScenarioId::Sim3] {
        let rec = runs.get(id).record(Variant::Scalar2);
        let starts_inside = rec.rows[0].inside_basin && rec.rows[0].margin > 0.0;
        let flips = rec
            .rows
            .windows(2)
            .filter(|w| w[0].inside_basin && !w[1].inside_basin)
            .count();
        let last = rec.final_theta_deg();
        ok &= starts_inside && flips == 0 && last < CONVERGED_DEG;
        parts.push(format!(
            "{id} scalar-2: start inside {starts_inside}, exits {flips}, final {last:.2e} deg"
        ));
    }
    Verdict::new(8, "sim2-sim3-convergence", ok, parts.join(", "))
}

/// Halving the step changes no logged error sample by more than the
/// tolerance; the estimate stays orthonormal.
pub fn criterion9_step_halving(coarse: &CanonicalRuns, fine: &CanonicalRuns) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for sim in &coarse.sims {
        let fine_sim = fine.get(sim.cfg.id);
        for rec in &sim.records {
            let f = fine_sim.record(rec.variant);
            let ratio = (rec.dt / f.dt).round() as usize;
            let mut worst = 0.0f64;
            for (i, row) in rec.rows.iter().enumerate() {
                let Some(fr) = f.rows.get(i * ratio) else {
                    ok = false;
                    break;
                };
                worst = worst.max((row.theta_tilde_deg - fr.theta_tilde_deg).abs().to_radians());
            }
            let orth = rec.max_orthonormality_error.max(f.max_orthonormality_error);
            ok &= worst < HALVING_TOL_RAD && orth < ORTHONORMALITY_TOL;
            parts.push(format!(
                "{} {}: {worst:.1e} rad, orth {orth:.1e}",
                sim.cfg.id, rec.variant
            ));
        }
    }
    Verdict::new(9, "step-halving", ok, parts.join("; "))
}

/// Sim 1, three scalars: PE collapses while the attitude is frozen and stays
/// positive while it moves. The floor is reported, not compared to a target.
pub fn criterion10_pe(runs: &CanonicalRuns) -> Verdict {
    let sim = runs.get(ScenarioId::Sim1);
    let rec = sim.record(Variant::Scalar3);
    let delta = sim.cfg.pe_window;
    let [stop, resume] = SIM1_BREAKS;
    let eps = 1e-9;

    let frozen_max = rec
        .rows
        .iter()
        .filter(|r| r.t >= stop + delta + rec.dt && r.t <= resume)
        .map(|r| r.mu_hat)
        .fold(0.0f64, f64::max);
    let moving_min = rec
        .rows
        .iter()
        .filter(|r| (r.t >= delta - eps && r.t <= stop) || r.t >= resume + delta - eps)
        .map(|r| r.mu_hat)
        .fold(f64::INFINITY, f64::min);
    let ok = frozen_max < PE_COLLAPSE && moving_min > PE_COLLAPSE;
    Verdict::new(
        10,
        "pe-metric",
        ok,
        format!("frozen segment max {frozen_max:.2e}, moving segments floor {moving_min:.3e} (window {delta} s)"),
    )
}

/// Every criterion, running the scenarios once at each step size.
pub fn run_all() -> Result<Vec<Verdict>> {
    let coarse = CanonicalRuns::new(ACCEPTANCE_DT)?;
    let fine = CanonicalRuns::new(HALVED_DT)?;
    Ok(vec![
        criterion1_initial_error()?,
        criterion2_theta_star()?,
        criterion3_epsilon_bound()?,
        criterion4_classical_reduction()?,
        criterion5_closed_forms()?,
        criterion6_lyapunov(&coarse),
        criterion7_plateau(&coarse),
        criterion8_convergence(&coarse),
        criterion9_step_halving(&coarse, &fine),
        criterion10_pe(&coarse),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_line_format() {
        let v = Verdict::new(3, "epsilon-bound", true, "ok".into());
        assert_eq!(v.line(), "PASS  3 epsilon-bound: ok");
        let v = Verdict::new(10, "pe-metric", false, "x".into());
        assert_eq!(v.line(), "FAIL 10 pe-metric: x");
    }

    #[test]
    fn straddle_detection() {
        assert!(straddles(PI - 1e-3, PI + 1e-3, &[PI]));
        assert!(!straddles(3.0, 3.1, &[PI]));
    }

    #[test]
    fn fast_criteria_pass() {
        for v in [
            criterion1_initial_error().unwrap(),
            criterion2_theta_star().unwrap(),
            criterion4_classical_reduction().unwrap(),
        ] {
            assert!(v.passed, "{}", v.line());
        }
    }
}
