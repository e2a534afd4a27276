//! Run configuration: a single JSON document, with dotted-path command-line
//! overrides (`--time.n-points 500` sets `time.n-points`) and a `BJJ_SEED`
//! environment override for the noise seed.
//!
//! Parameter blocks use the reporting units: `J/hbar`, `U/hbar` and
//! `epsilon/hbar` in Hz, `omega0` in rad/s, decay times in ms. Internally
//! everything is converted to rad/s and seconds.

use crate::dynamics_analytic::{ModelError, PendulumParams};
use crate::dynamics_numeric::{DynamicsError, InitialState, TmbhParams};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad override `{0}`: {1}")]
    Override(String, String),
    #[error("BJJ_SEED must be a 64-bit unsigned integer, got `{0}`")]
    BadSeed(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Command selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Synth,
    Fit,
    Convert,
    Validate,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    TmbhNumeric,
    PendulumNumeric,
    #[default]
    Analytic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TmbhBlock {
    /// Tunnel coupling J/hbar in Hz.
    pub j_hz: f64,
    /// On-site interaction U/hbar in Hz.
    pub u_hz: f64,
    pub n_atoms: f64,
    /// Detuning epsilon/hbar in Hz.
    #[serde(default)]
    pub epsilon_hz: f64,
    #[serde(default)]
    pub eta: f64,
}

impl TmbhBlock {
    pub fn to_params(&self) -> Result<TmbhParams, DynamicsError> {
        TmbhParams::new(
            2.0 * PI * self.j_hz,
            2.0 * PI * self.u_hz,
            self.n_atoms,
            2.0 * PI * self.epsilon_hz,
            self.eta,
        )
    }

    pub fn from_params(p: &TmbhParams) -> Self {
        Self {
            j_hz: p.j / (2.0 * PI),
            u_hz: p.u / (2.0 * PI),
            n_atoms: p.n_atoms,
            epsilon_hz: p.epsilon / (2.0 * PI),
            eta: p.eta,
        }
    }
}

fn default_sigma0() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PendulumBlock {
    pub k0: f64,
    /// Plasma frequency in rad/s.
    pub omega0: f64,
    /// Undamped imbalance amplitude N0.
    pub n0_amp: f64,
    /// Envelope decay time in ms; omit for undamped.
    #[serde(default)]
    pub tau_ms: Option<f64>,
    /// Frequency-recovery time in ms; defaults to `tau-ms`.
    #[serde(default)]
    pub tau2_ms: Option<f64>,
    #[serde(default)]
    pub delta_phi: f64,
    #[serde(default)]
    pub delta_n: f64,
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
}

impl PendulumBlock {
    pub fn to_params(&self) -> Result<PendulumParams, ModelError> {
        let tau = match self.tau_ms {
            Some(ms) => ms * 1e-3,
            None => f64::INFINITY,
        };
        let p = PendulumParams::new(
            self.k0,
            self.omega0,
            self.n0_amp,
            tau,
            self.delta_phi,
            self.delta_n,
            self.sigma0,
        )?;
        Ok(match self.tau2_ms {
            Some(ms) => p.with_tau2(ms * 1e-3),
            None => p,
        })
    }

    pub fn from_params(p: &PendulumParams) -> Self {
        let to_ms = |t: f64| if t.is_finite() { Some(t * 1e3) } else { None };
        Self {
            k0: p.k0,
            omega0: p.omega0,
            n0_amp: p.n0_amp,
            tau_ms: to_ms(p.tau),
            tau2_ms: if p.tau2 == p.tau { None } else { to_ms(p.tau2) },
            delta_phi: p.delta_phi,
            delta_n: p.delta_n,
            sigma0: p.sigma0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ParamsBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tmbh: Option<TmbhBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pendulum: Option<PendulumBlock>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct InitialBlock {
    pub n0: f64,
    pub phi0: f64,
}

impl InitialBlock {
    pub fn to_state(&self) -> Result<InitialState, DynamicsError> {
        InitialState::new(self.n0, self.phi0)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TimeBlock {
    /// End of the grid in seconds (the grid always starts at 0).
    pub t_end: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct NoiseBlock {
    #[serde(default)]
    pub sigma_phi: f64,
    #[serde(default)]
    pub sigma_n: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PathsBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imbalance_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FitBlock {
    pub guess: PendulumBlock,
    pub n_atoms: f64,
    #[serde(default)]
    pub n_atoms_sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_phase: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_imbalance: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConvertBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<f64>,
    /// Decay time for tmbh -> pendulum conversion; defaults to the value
    /// implied by the viscosity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub params: ParamsBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseBlock>,
    #[serde(default)]
    pub paths: PathsBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convert: Option<ConvertBlock>,
    /// Separatrix guard half-width as a fraction of tau.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard_fraction: Option<f64>,
}

/// Loads a config file, applies dotted-path overrides in order, then the
/// `BJJ_SEED` environment variable if set.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut doc: serde_json::Value = serde_json::from_str(&text)?;
    for (key, value) in overrides {
        apply_override(&mut doc, key, value)?;
    }
    if let Ok(seed) = std::env::var("BJJ_SEED") {
        let parsed: u64 = seed.parse().map_err(|_| ConfigError::BadSeed(seed.clone()))?;
        apply_override(&mut doc, "noise.seed", &parsed.to_string())?;
    }
    Ok(serde_json::from_value(doc)?)
}

/// Sets `doc[path] = value`, creating intermediate objects. The value is
/// parsed as JSON when possible, otherwise taken as a string.
pub fn apply_override(
    doc: &mut serde_json::Value,
    path: &str,
    raw: &str,
) -> Result<(), ConfigError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(
            path.into(),
            "empty path segment".into(),
        ));
    }
    let mut cur = doc;
    for part in &parts[..parts.len() - 1] {
        let obj = cur.as_object_mut().ok_or_else(|| {
            ConfigError::Override(path.into(), format!("`{part}` is not an object"))
        })?;
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    let leaf = parts[parts.len() - 1];
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| ConfigError::Override(path.into(), "parent is not an object".into()))?;
    let value = serde_json::from_str(raw).unwrap_or(serde_json::Value::String(raw.to_string()));
    obj.insert(leaf.to_string(), value);
    Ok(())
}
