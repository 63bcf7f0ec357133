//! TOML scenario files. A file is a flat set of optional keys overlaid on the
//! bundled defaults of its scenario; angles are given in degrees under keys
//! ending in `_deg`.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::scenarios::{CustomScenario, Gains, ScenarioConfig, ScenarioId, TrajectoryParams};
use crate::so3::{euler_zyx, Rotation, Vec3};

const SIM1_TOML: &str = include_str!("../configs/sim1.toml");
const SIM2_TOML: &str = include_str!("../configs/sim2.toml");
const SIM3_TOML: &str = include_str!("../configs/sim3.toml");
const CUSTOM_TOML: &str = include_str!("../configs/custom.toml");

/// Parse or validation failure, pointing at the offending key where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source: String,
    pub line: Option<usize>,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        if let Some(field) = &self.field {
            write!(f, ": `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// One config file as written. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RawConfig {
    pub scenario: Option<String>,
    pub duration: Option<f64>,
    pub dt: Option<f64>,
    pub k_scalar: Option<f64>,
    pub k_vector: Option<f64>,
    pub R0_true_ypr_deg: Option<[f64; 3]>,
    pub R0_hat_ypr_deg: Option<[f64; 3]>,
    pub psi0_deg: Option<f64>,
    pub phi0_deg: Option<f64>,
    pub omega: Option<f64>,
    pub omega_alpha: Option<f64>,
    pub omega_beta: Option<f64>,
    pub alpha_max_deg: Option<f64>,
    pub beta_max_deg: Option<f64>,
    pub gamma_dip_deg: Option<f64>,
    pub gamma_tilt_deg: Option<f64>,
    pub phi_spread_deg: Option<f64>,
    pub V_speed: Option<f64>,
    pub noise_std: Option<f64>,
    pub seed: Option<u64>,
    pub pe_window: Option<f64>,
    pub custom_omega: Option<[f64; 3]>,
    pub custom_b: Option<Vec<[f64; 3]>>,
    pub custom_lambda: Option<Vec<[f64; 3]>>,
}

macro_rules! overlay_fields {
    ($base:ident, $over:ident; $($f:ident),* $(,)?) => {
        $( if $over.$f.is_some() { $base.$f = $over.$f.clone(); } )*
    };
}

impl RawConfig {
    /// Keys set in `over` replace those in `self`.
    pub fn overlay(mut self, over: &RawConfig) -> RawConfig {
        overlay_fields!(self, over;
            scenario, duration, dt, k_scalar, k_vector, R0_true_ypr_deg, R0_hat_ypr_deg,
            psi0_deg, phi0_deg, omega, omega_alpha, omega_beta, alpha_max_deg, beta_max_deg,
            gamma_dip_deg, gamma_tilt_deg, phi_spread_deg, V_speed, noise_std, seed, pe_window,
            custom_omega, custom_b, custom_lambda);
        self
    }
}

/// 1-based line of the first `key = ...` assignment in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

pub fn parse_raw(text: &str, source: &str) -> Result<RawConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let field = e.message().split('`').nth(1).map(str::to_owned);
        ConfigError {
            source: source.to_owned(),
            line,
            field,
            message: e.message().trim().to_owned(),
        }
    })
}

fn bundled_text(id: ScenarioId) -> &'static str {
    match id {
        ScenarioId::Sim1 => SIM1_TOML,
        ScenarioId::Sim2 => SIM2_TOML,
        ScenarioId::Sim3 => SIM3_TOML,
        ScenarioId::Custom => CUSTOM_TOML,
    }
}

/// The bundled defaults of a scenario.
pub fn bundled(id: ScenarioId) -> Result<ScenarioConfig, ConfigError> {
    let text = bundled_text(id);
    let source = format!("<bundled {id}>");
    resolve(&parse_raw(text, &source)?, text, &source)
}

/// Parses `text`, overlays it on the defaults of `id` (or of the scenario the
/// text names when `id` is `None`) and validates the result.
pub fn load_str(text: &str, source: &str, id: Option<ScenarioId>) -> Result<ScenarioConfig, ConfigError> {
    let over = parse_raw(text, source)?;
    let named = match &over.scenario {
        Some(s) => Some(s.parse::<ScenarioId>().map_err(|e| ConfigError {
            source: source.to_owned(),
            line: line_of(text, "scenario"),
            field: Some("scenario".into()),
            message: e.to_string(),
        })?),
        None => None,
    };
    let id = match (id, named) {
        (Some(a), Some(b)) if a != b => {
            return Err(ConfigError {
                source: source.to_owned(),
                line: line_of(text, "scenario"),
                field: Some("scenario".into()),
                message: format!("file is for `{b}` but `{a}` was requested"),
            })
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => {
            return Err(ConfigError {
                source: source.to_owned(),
                line: None,
                field: Some("scenario".into()),
                message: "no scenario given".into(),
            })
        }
    };
    let base = parse_raw(bundled_text(id), "<bundled>")?;
    let mut merged = base.overlay(&over);
    merged.scenario = Some(id.to_string());
    resolve(&merged, text, source)
}

pub fn load_file(path: &Path, id: Option<ScenarioId>) -> Result<ScenarioConfig, ConfigError> {
    let source = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        source: source.clone(),
        line: None,
        field: None,
        message: e.to_string(),
    })?;
    load_str(&text, &source, id)
}

struct Resolver<'a> {
    text: &'a str,
    source: &'a str,
}

impl Resolver<'_> {
    fn err(&self, field: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            source: self.source.to_owned(),
            line: line_of(self.text, field),
            field: Some(field.to_owned()),
            message: message.into(),
        }
    }

    fn req<T: Clone>(&self, v: &Option<T>, field: &str) -> Result<T, ConfigError> {
        v.clone().ok_or_else(|| self.err(field, "missing required key"))
    }

    fn positive(&self, v: &Option<f64>, field: &str) -> Result<f64, ConfigError> {
        let x = self.req(v, field)?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(self.err(field, format!("must be positive and finite, got {x}")));
        }
        Ok(x)
    }

    fn finite(&self, v: &Option<f64>, field: &str) -> Result<f64, ConfigError> {
        let x = self.req(v, field)?;
        if !x.is_finite() {
            return Err(self.err(field, format!("must be finite, got {x}")));
        }
        Ok(x)
    }

    /// Degrees in the open interval `(lo, hi)`, returned in radians.
    fn angle_in(&self, v: &Option<f64>, field: &str, lo: f64, hi: f64) -> Result<f64, ConfigError> {
        let x = self.finite(v, field)?;
        if !(x > lo && x < hi) {
            return Err(self.err(field, format!("must lie in ({lo}, {hi}) degrees, got {x}")));
        }
        Ok(x.to_radians())
    }

    fn ypr(&self, v: &Option<[f64; 3]>, field: &str) -> Result<Rotation, ConfigError> {
        let a = self.req(v, field)?;
        if !a.iter().all(|x| x.is_finite()) {
            return Err(self.err(field, "angles must be finite"));
        }
        Ok(euler_zyx(a[0].to_radians(), a[1].to_radians(), a[2].to_radians()))
    }

    fn vectors(&self, v: &Option<Vec<[f64; 3]>>, field: &str) -> Result<Vec<Vec3>, ConfigError> {
        let list = self.req(v, field)?;
        if list.is_empty() {
            return Err(self.err(field, "needs at least one vector"));
        }
        list.iter()
            .map(|a| {
                let v = Vec3::from(*a);
                if v.iter().all(|x| x.is_finite()) && v.norm() > 0.0 {
                    Ok(v)
                } else {
                    Err(self.err(field, "vectors must be finite and non-zero"))
                }
            })
            .collect()
    }
}

fn resolve(raw: &RawConfig, text: &str, source: &str) -> Result<ScenarioConfig, ConfigError> {
    let r = Resolver { text, source };
    let id: ScenarioId = r
        .req(&raw.scenario, "scenario")?
        .parse()
        .map_err(|e: crate::error::Error| r.err("scenario", e.to_string()))?;

    let duration = r.positive(&raw.duration, "duration")?;
    let dt = r.positive(&raw.dt, "dt")?;
    if dt > duration {
        return Err(r.err("dt", format!("step {dt} exceeds the duration {duration}")));
    }
    let gains = Gains {
        k_scalar: r.positive(&raw.k_scalar, "k_scalar")?,
        k_vector: r.positive(&raw.k_vector, "k_vector")?,
    };
    let r0_hat = r.ypr(&raw.R0_hat_ypr_deg, "R0_hat_ypr_deg")?;
    let noise_std = raw.noise_std.unwrap_or(0.0);
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(r.err("noise_std", format!("must be non-negative, got {noise_std}")));
    }
    let pe_window = r.positive(&raw.pe_window, "pe_window")?;

    let mut trajectory = TrajectoryParams {
        psi0: 0.0,
        phi0: 0.0,
        omega: 0.0,
        omega_alpha: 0.0,
        omega_beta: 0.0,
        alpha_max: 0.0,
        beta_max: 0.0,
        gamma_dip: 0.0,
        gamma_tilt: 0.0,
        phi_spread: 0.0,
        v_speed: 0.0,
    };
    let mut custom = CustomScenario::default();
    let mut r0_true = Rotation::identity();

    let sim_only = |field: &str, set: bool| {
        if set && id != ScenarioId::Custom {
            Err(r.err(field, format!("only applies to the custom scenario, not `{id}`")))
        } else {
            Ok(())
        }
    };
    sim_only("R0_true_ypr_deg", raw.R0_true_ypr_deg.is_some())?;
    sim_only("custom_omega", raw.custom_omega.is_some())?;
    sim_only("custom_b", raw.custom_b.is_some())?;
    sim_only("custom_lambda", raw.custom_lambda.is_some())?;

    match id {
        ScenarioId::Sim1 | ScenarioId::Sim2 => {
            trajectory.psi0 = r.angle_in(&raw.psi0_deg, "psi0_deg", 0.0, 90.0)?;
            trajectory.phi0 = r.angle_in(&raw.phi0_deg, "phi0_deg", 0.0, 90.0)?;
            trajectory.omega = r.positive(&raw.omega, "omega")?;
            trajectory.gamma_dip = r.angle_in(&raw.gamma_dip_deg, "gamma_dip_deg", 0.0, 90.0)?;
            trajectory.v_speed = r.positive(&raw.V_speed, "V_speed")?;
        }
        ScenarioId::Sim3 => {
            trajectory.omega = r.finite(&raw.omega, "omega")?;
            trajectory.omega_alpha = r.finite(&raw.omega_alpha, "omega_alpha")?;
            trajectory.omega_beta = r.finite(&raw.omega_beta, "omega_beta")?;
            trajectory.alpha_max = r.angle_in(&raw.alpha_max_deg, "alpha_max_deg", 0.0, 90.0)?;
            trajectory.beta_max = r.angle_in(&raw.beta_max_deg, "beta_max_deg", 0.0, 90.0)?;
            trajectory.gamma_tilt = r.angle_in(&raw.gamma_tilt_deg, "gamma_tilt_deg", 0.0, 90.0)?;
            trajectory.phi_spread = r.angle_in(&raw.phi_spread_deg, "phi_spread_deg", 0.0, 90.0)?;
            trajectory.v_speed = r.positive(&raw.V_speed, "V_speed")?;
        }
        ScenarioId::Custom => {
            r0_true = r.ypr(&raw.R0_true_ypr_deg, "R0_true_ypr_deg")?;
            let w = r.req(&raw.custom_omega, "custom_omega")?;
            if !w.iter().all(|x| x.is_finite()) {
                return Err(r.err("custom_omega", "rates must be finite"));
            }
            custom = CustomScenario {
                omega: Vec3::from(w),
                references: r.vectors(&raw.custom_b, "custom_b")?,
                directions: r.vectors(&raw.custom_lambda, "custom_lambda")?,
            };
            if custom.directions.len() > 3 {
                return Err(r.err("custom_lambda", "at most three body directions"));
            }
        }
    }

    Ok(ScenarioConfig {
        id,
        duration,
        dt,
        gains,
        r0_true,
        r0_hat,
        trajectory,
        custom,
        noise_std,
        seed: raw.seed.unwrap_or(0),
        pe_window,
    })
}
