//! JSON documents written by the fit, convert, validate and compare
//! commands. Units follow the reporting convention: `omega0` in rad/s,
//! `J/hbar` and `epsilon/hbar` in Hz, decay times in ms.

use crate::dynamics_analytic::Regime;
use crate::estimation::{DerivedValue, FitReport, PARAM_NAMES};
use serde::Serialize;
use std::f64::consts::PI;
use std::path::Path;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ValueSigma {
    pub value: f64,
    pub sigma: f64,
}

impl ValueSigma {
    fn scaled(v: DerivedValue, factor: f64) -> Self {
        Self {
            value: v.value * factor,
            sigma: v.sigma * factor,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PendulumFitDoc {
    pub k0: ValueSigma,
    /// rad/s
    pub omega0: ValueSigma,
    pub n0_amp: ValueSigma,
    pub tau_ms: ValueSigma,
    pub delta_phi: ValueSigma,
    pub delta_n: ValueSigma,
    pub sigma0: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DerivedTmbhDoc {
    pub lambda: ValueSigma,
    pub j_hz: ValueSigma,
    pub epsilon_hz: ValueSigma,
    pub eta: ValueSigma,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RigidityDoc {
    pub delta: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DiagnosticsDoc {
    pub iterations: usize,
    pub converged: bool,
    pub rank_warning: bool,
    pub flagged_residuals: usize,
    pub regime: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rigidity: Option<RigidityDoc>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitReportDoc {
    pub pendulum: PendulumFitDoc,
    pub derived_tmbh: DerivedTmbhDoc,
    pub mse: f64,
    /// Row/column order of the matrices below.
    pub parameter_order: [&'static str; 6],
    pub correlation: [[f64; 6]; 6],
    pub covariance: [[f64; 6]; 6],
    pub diagnostics: DiagnosticsDoc,
}

pub fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Equilibrium => "equilibrium",
        Regime::JosephsonOscillation => "josephson-oscillation",
        Regime::Separatrix => "separatrix",
        Regime::SelfTrapped => "self-trapped",
    }
}

pub fn fit_report_doc(r: &FitReport) -> FitReportDoc {
    let p = &r.params;
    let vs = |value: f64, sigma: f64| ValueSigma { value, sigma };
    FitReportDoc {
        pendulum: PendulumFitDoc {
            k0: vs(p.k0, r.sigmas[0]),
            omega0: vs(p.omega0, r.sigmas[1]),
            n0_amp: vs(p.n0_amp, r.sigmas[2]),
            tau_ms: vs(p.tau * 1e3, r.sigmas[3] * 1e3),
            delta_phi: vs(p.delta_phi, r.sigmas[4]),
            delta_n: vs(p.delta_n, r.sigmas[5]),
            sigma0: p.sigma0,
        },
        derived_tmbh: DerivedTmbhDoc {
            lambda: ValueSigma::scaled(r.derived.lambda, 1.0),
            j_hz: ValueSigma::scaled(r.derived.j, 1.0 / (2.0 * PI)),
            epsilon_hz: ValueSigma::scaled(r.derived.epsilon, 1.0 / (2.0 * PI)),
            eta: ValueSigma::scaled(r.derived.eta, 1.0),
        },
        mse: r.mse,
        parameter_order: PARAM_NAMES,
        correlation: r.correlation,
        covariance: r.covariance,
        diagnostics: DiagnosticsDoc {
            iterations: r.diagnostics.iterations,
            converged: r.diagnostics.converged,
            rank_warning: r.diagnostics.rank_warning,
            flagged_residuals: r.diagnostics.flagged_residuals,
            regime: regime_name(r.diagnostics.regime).to_string(),
            rigidity: r.diagnostics.rigidity.map(|rr| RigidityDoc {
                delta: rr.delta,
                ok: rr.ok,
            }),
        },
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ValidateDoc {
    pub regime: String,
    pub k0: f64,
    pub rigidity_delta: f64,
    pub rigidity_ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub separatrix_crossing_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ConvertDoc {
    /// Which map produced the output: "general", "simplified" or
    /// "to-pendulum".
    pub map_used: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tmbh: Option<crate::io::config::TmbhBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pendulum: Option<crate::io::config::PendulumBlock>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CompareDoc {
    pub numeric_model: String,
    pub n_points: usize,
    pub max_abs_dphi: f64,
    pub max_abs_dn: f64,
}

/// Pretty-printed JSON with a trailing newline; key order is fixed by the
/// struct definitions, so identical inputs produce identical bytes.
pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(doc)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
    text.push('\n');
    std::fs::write(path, text)
}
