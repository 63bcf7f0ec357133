//! Lockstep simulation of truth and observer variants with per-step
//! diagnostics.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DVector, Matrix3xX};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    central_difference, common_lambda_from_projector, epsilon_two_directions, epsilon_two_references, error_metrics,
    lyapunov_decompose_two_directions, lyapunov_decompose_two_references, v_dot, BasinCertificate, PeWindow,
};
use crate::error::{Error, Result};
use crate::measurement::{Measurement, SensorBank};
use crate::observer::{classical_innovation_with, innovation_delta_with, observer_step_with, BankFactors};
use crate::scenarios::{
    sample, sample_within, variant_layout, Diagnostics, ScenarioConfig, ScenarioId, TrajectorySample, Variant,
    VariantLayout,
};
use crate::so3::{euler_zyx_angles, Mat3, Rotation, Vec3};

/// One logged sample. Columns that do not apply to a variant are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub t: f64,
    pub theta_tilde_deg: f64,
    pub v: f64,
    pub mu_hat: f64,
    /// Instantaneous ε for the two-scalar variants.
    pub epsilon_value: f64,
    /// `cos(θ*/2)cos(θ*) − ε(t)` for the two-scalar variants.
    pub margin: f64,
    pub inside_basin: bool,
    pub v_dot_numeric: f64,
    pub v0: f64,
    pub v_e: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

impl RunRow {
    /// Fields in CSV column order; `inside_basin` as 0 or 1.
    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.theta_tilde_deg,
            self.v,
            self.mu_hat,
            self.epsilon_value,
            self.margin,
            if self.inside_basin { 1.0 } else { 0.0 },
            self.v_dot_numeric,
            self.v0,
            self.v_e,
            self.yaw_deg,
            self.pitch_deg,
            self.roll_deg,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: ScenarioId,
    pub variant: Variant,
    pub dt: f64,
    pub rows: Vec<RunRow>,
    /// `−tr([Δ]×R̃)` at each sample, with `Δ` as used by the observer.
    pub v_dot_closed: Vec<f64>,
    /// Largest `‖R̂ᵀR̂ − I‖` seen over the run.
    pub max_orthonormality_error: f64,
    /// Basin radius certified for this variant, if any.
    pub theta_star: Option<f64>,
}

impl RunRecord {
    pub fn final_theta_deg(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.theta_tilde_deg)
    }

    /// Equality of every logged value down to the bit pattern (so NaN
    /// columns compare equal to themselves).
    pub fn bit_identical(&self, other: &RunRecord) -> bool {
        let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
        self.scenario == other.scenario
            && self.variant == other.variant
            && same(self.dt, other.dt)
            && self.rows.len() == other.rows.len()
            && self
                .rows
                .iter()
                .zip(&other.rows)
                .all(|(a, b)| a.values().iter().zip(b.values().iter()).all(|(x, y)| same(*x, *y)))
            && self.v_dot_closed.len() == other.v_dot_closed.len()
            && self
                .v_dot_closed
                .iter()
                .zip(&other.v_dot_closed)
                .all(|(a, b)| same(*a, *b))
    }
}

/// Run metadata written next to the CSVs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub scenario: String,
    pub variants: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub wall_clock_s: f64,
    pub verdicts: Vec<crate::check::Verdict>,
}

/// SHA-256 of the resolved configuration.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let digest = Sha256::digest(format!("{cfg:?}").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct VariantState {
    layout: VariantLayout,
    r_hat: Rotation,
    factors: Option<BankFactors>,
    pe: PeWindow,
    rows: Vec<RunRow>,
    v_dot_closed: Vec<f64>,
    max_orth: f64,
}

impl VariantState {
    fn delta(&mut self, bank: &SensorBank, x: &Mat3, y: &Measurement) -> Result<Vec3> {
        match &mut self.factors {
            None => classical_innovation_with(bank, self.layout.k, x, y),
            Some(f) => {
                f.refresh_gram(bank);
                innovation_delta_with(bank, f, self.layout.k, x, y)
            }
        }
    }
}

/// `yᵢ = Λᵢᵀ(Rᵀbᵢ + nᵢ)` with the per-reference noise scaled like the
/// reference itself, written into `y` in place.
fn measure_with_noise(
    s: &TrajectorySample,
    layout: &VariantLayout,
    bank: &SensorBank,
    noise: &[Vec3],
    y: &mut Measurement,
) {
    let rt = s.r.matrix().transpose();
    for ((spec, c), yi) in layout.channels.iter().zip(bank.channels()).zip(y.channels_mut()) {
        let n = noise[spec.reference] * layout.reference_scale(&s.references[spec.reference]);
        let body = rt * c.b + n;
        for (j, v) in yi.iter_mut().enumerate() {
            *v = c.lambda.column(j).dot(&body);
        }
    }
}

/// Banks and outputs for the three RK4 sample points, reused every step.
struct StageBuffers {
    banks: [SensorBank; 3],
    ys: [Measurement; 3],
}

impl StageBuffers {
    fn new(layout: &VariantLayout, s0: &TrajectorySample) -> Self {
        let bank = s0.bank(layout);
        let y = Measurement::from_channels(bank.channels().iter().map(|c| DVector::zeros(c.len())).collect());
        StageBuffers {
            banks: [bank.clone(), bank.clone(), bank],
            ys: [y.clone(), y.clone(), y],
        }
    }

    fn load(&mut self, idx: usize, s: &TrajectorySample, layout: &VariantLayout, noise: &[Vec3]) {
        s.update_bank(layout, &mut self.banks[idx]);
        measure_with_noise(s, layout, &self.banks[idx], noise, &mut self.ys[idx]);
    }
}

fn excitation(layout: &VariantLayout, s: &TrajectorySample) -> Matrix3xX<f64> {
    let r = s.r.matrix();
    match &layout.diagnostics {
        Diagnostics::CommonLambda { lambda } => r * lambda,
        Diagnostics::TwoReferencesOneDirection { a, .. } => Matrix3xX::from_columns(&[r * a]),
        Diagnostics::OneReferenceTwoDirections { .. } => {
            Matrix3xX::from_columns(&[s.references[layout.channels[0].reference]])
        }
        Diagnostics::None => {
            let cols: Vec<Vec3> = layout
                .channels
                .iter()
                .map(|c| s.references[c.reference].normalize())
                .collect();
            Matrix3xX::from_columns(&cols)
        }
    }
}

/// One RK4 step of the observer across `[start, mid, end]`, with the noise
/// held fixed.
fn advance(
    st: &mut VariantState,
    buf: &mut StageBuffers,
    piece: &[TrajectorySample; 3],
    noise: &[Vec3],
) -> Result<Rotation> {
    for (idx, s) in piece.iter().enumerate() {
        buf.load(idx, s, &st.layout, noise);
    }
    let h = piece[2].t - piece[0].t;
    let r_hat = st.r_hat;
    observer_step_with(&r_hat, h, |offset, x| {
        let idx = if offset == 0.0 {
            0
        } else if offset < h {
            1
        } else {
            2
        };
        Ok((piece[idx].omega, st.delta(&buf.banks[idx], x, &buf.ys[idx])?))
    })
}

fn log_row(st: &mut VariantState, s: &TrajectorySample, bank: &SensorBank, y: &Measurement) -> Result<()> {
    let r_hat = st.r_hat;
    let metrics = error_metrics(&s.r, &r_hat);
    let r_tilde = r_hat.matrix() * s.r.matrix().transpose();
    let delta = st.delta(bank, r_hat.matrix(), y)?;
    st.v_dot_closed.push(v_dot(&delta, &r_tilde));
    let mu_hat = st.pe.update(s.t, &excitation(&st.layout, s))?;

    let k = st.layout.k;
    let nan = f64::NAN;
    let (epsilon_value, margin, inside_basin, v0, v_e) = match &st.layout.diagnostics {
        Diagnostics::CommonLambda { .. } => {
            // `delta` above refreshed the cached factors for this bank.
            let f = st.factors.as_ref().expect("scalar variants cache their factors");
            let full = f.gram.rank == 3;
            let v0 = if full {
                common_lambda_from_projector(&s.r, &r_hat, &f.lambdas[0].projector, k).v_dot_predicted
            } else {
                nan
            };
            (nan, nan, metrics.theta_tilde < PI, v0, if full { 0.0 } else { nan })
        }
        Diagnostics::TwoReferencesOneDirection { a, theta_star } => {
            let (b1, b2) = (
                s.references[st.layout.channels[0].reference],
                s.references[st.layout.channels[1].reference],
            );
            let eps = epsilon_two_references(a, &s.r, &b1, &b2)?;
            let cert = BasinCertificate::evaluate(*theta_star, eps, &metrics);
            let d = lyapunov_decompose_two_references(a, &s.r, &r_hat, &b1, &b2, k, *theta_star, eps)?;
            (eps, cert.margin, cert.inside_basin, d.v0, d.v_e)
        }
        Diagnostics::OneReferenceTwoDirections { a1, a2, theta_star } => {
            let b1 = s.references[st.layout.channels[0].reference];
            let eps = epsilon_two_directions(a1, a2, &s.r, &b1)?;
            let cert = BasinCertificate::evaluate(*theta_star, eps, &metrics);
            let d = lyapunov_decompose_two_directions(a1, a2, &s.r, &r_hat, &b1, k, *theta_star, eps)?;
            (eps, cert.margin, cert.inside_basin, d.v0, d.v_e)
        }
        Diagnostics::None => (nan, nan, metrics.theta_tilde < PI, nan, nan),
    };

    let (yaw, pitch, roll) = euler_zyx_angles(&r_hat);
    st.rows.push(RunRow {
        t: s.t,
        theta_tilde_deg: metrics.theta_tilde.to_degrees(),
        v: metrics.v,
        mu_hat,
        epsilon_value,
        margin,
        inside_basin,
        v_dot_numeric: nan,
        v0,
        v_e,
        yaw_deg: yaw.to_degrees(),
        pitch_deg: pitch.to_degrees(),
        roll_deg: roll.to_degrees(),
    });
    Ok(())
}

/// Runs truth and every requested variant in lockstep over the configured
/// horizon. All variants see the same truth samples and the same noise draw
/// for each reference vector.
pub fn run(cfg: &ScenarioConfig, variants: &[Variant]) -> Result<Vec<RunRecord>> {
    let mut states = variants
        .iter()
        .map(|&v| {
            let layout = variant_layout(cfg, v)?;
            let s0 = sample(cfg, 0.0);
            let factors = (!layout.classical).then(|| BankFactors::new(&s0.bank(&layout)));
            Ok(VariantState {
                r_hat: cfg.r0_hat,
                factors,
                pe: PeWindow::new(cfg.pe_window)?,
                rows: Vec::with_capacity(cfg.sample_count()),
                v_dot_closed: Vec::with_capacity(cfg.sample_count()),
                max_orth: cfg.r0_hat.orthonormality_error(),
                layout,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let s0 = sample(cfg, 0.0);
    let mut buffers: Vec<StageBuffers> = states.iter().map(|st| StageBuffers::new(&st.layout, &s0)).collect();

    let n = cfg.sample_count();
    let dt = cfg.dt;
    let n_refs = sample(cfg, 0.0).references.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::ConfigurationMismatch(e.to_string()))?;
    let mut draw = || -> Vec<Vec3> {
        (0..n_refs)
            .map(|_| {
                if cfg.noise_std > 0.0 {
                    Vec3::new(
                        normal.sample(&mut rng),
                        normal.sample(&mut rng),
                        normal.sample(&mut rng),
                    )
                } else {
                    Vec3::zeros()
                }
            })
            .collect()
    };

    let breaks = cfg.breakpoints();
    let mut s_now = sample(cfg, 0.0);
    for i in 0..n {
        let t = i as f64 * dt;
        // Noise is drawn once per step and held over the RK4 stages.
        let noise = draw();
        let last = i + 1 == n;
        let t1 = (i + 1) as f64 * dt;
        let s_next = (!last).then(|| sample(cfg, t1));
        // Steps touching a breakpoint are split there, and every piece is
        // sampled inside its own segment so RK4 never sees the rate jump.
        let pieces: Vec<[TrajectorySample; 3]> = match &s_next {
            Some(_) if breaks.iter().any(|&b| b >= t && b <= t1) => {
                let mut knots = vec![t];
                knots.extend(breaks.iter().copied().filter(|&b| b > t && b < t1));
                knots.push(t1);
                knots
                    .windows(2)
                    .map(|w| {
                        let mid = 0.5 * (w[0] + w[1]);
                        [
                            sample_within(cfg, w[0], mid),
                            sample_within(cfg, mid, mid),
                            sample_within(cfg, w[1], mid),
                        ]
                    })
                    .collect()
            }
            Some(s1) => vec![[s_now.clone(), sample(cfg, t + 0.5 * dt), s1.clone()]],
            None => Vec::new(),
        };

        for (st, buf) in states.iter_mut().zip(buffers.iter_mut()) {
            let non_finite = |st: &VariantState| Error::NonFiniteState {
                variant: st.layout.variant.to_string(),
                step: i,
                t,
            };
            buf.load(0, &s_now, &st.layout, &noise);
            log_row(st, &s_now, &buf.banks[0], &buf.ys[0]).map_err(|e| match e {
                Error::Degenerate(_) => non_finite(st),
                other => other,
            })?;
            for piece in &pieces {
                let next = match advance(st, buf, piece, &noise) {
                    Ok(r) if r.matrix().iter().all(|v| v.is_finite()) => r,
                    _ => return Err(non_finite(st)),
                };
                st.max_orth = st.max_orth.max(next.orthonormality_error());
                st.r_hat = next;
            }
        }
        if let Some(s1) = s_next {
            s_now = s1;
        }
    }

    let theta_star = |l: &VariantLayout| match l.diagnostics {
        Diagnostics::TwoReferencesOneDirection { theta_star, .. }
        | Diagnostics::OneReferenceTwoDirections { theta_star, .. } => Some(theta_star),
        _ => None,
    };
    Ok(states
        .into_iter()
        .map(|mut st| {
            let v: Vec<f64> = st.rows.iter().map(|r| r.v).collect();
            for (row, d) in st.rows.iter_mut().zip(central_difference(&v, dt)) {
                row.v_dot_numeric = d;
            }
            RunRecord {
                scenario: cfg.id,
                variant: st.layout.variant,
                dt,
                theta_star: theta_star(&st.layout),
                rows: st.rows,
                v_dot_closed: st.v_dot_closed,
                max_orthonormality_error: st.max_orth,
            }
        })
        .collect())
}

/// [`run`] plus timing and a manifest; the manifest's verdicts are left
/// empty for the caller to fill.
pub fn run_with_manifest(cfg: &ScenarioConfig, variants: &[Variant]) -> Result<(Vec<RunRecord>, RunManifest)> {
    let start = Instant::now();
    let records = run(cfg, variants)?;
    let manifest = RunManifest {
        scenario: cfg.id.to_string(),
        variants: variants.iter().map(|v| v.to_string()).collect(),
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_owned(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        verdicts: Vec::new(),
    };
    Ok((records, manifest))
}
