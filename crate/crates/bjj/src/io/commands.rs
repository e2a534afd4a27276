//! Command implementations behind the `bjj` binary. Each command consumes a
//! [`RunConfig`] and writes CSV/JSON files; errors carry the process exit
//! code (2 config/parse, 3 numeric failure, 4 degeneracy).

use crate::dynamics_analytic::{
    classify_regime, evaluate_piecewise, initial_phase_velocity, plasma_frequency,
    rigidity_check, separatrix_crossing_time, PendulumParams, DEFAULT_GUARD_FRACTION,
};
use crate::dynamics_numeric::{
    integrate_pendulum, integrate_tmbh, linspace, DynamicsError, InitialState, TmbhParams,
    Trajectory, TrajectorySource,
};
use crate::estimation::{self, DataSet, FitOptions, SeriesWeights};
use crate::io::config::{ConfigError, Mode, ModelKind, RunConfig};
use crate::io::report::{
    fit_report_doc, regime_name, write_json, CompareDoc, ConvertDoc, ValidateDoc,
};
use crate::io::rng::GaussianSource;
use crate::io::series::{read_series, write_columns, write_series, SeriesError};
use crate::param_map::{decay_time, to_pendulum, to_tmbh_general, to_tmbh_simplified, MapError};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("degeneracy: {0}")]
    Degenerate(String),
}

impl CliError {
    /// Stable exit-code contract: 0 success, 2 config/parse, 3 numeric
    /// failure, 4 degeneracy.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SeriesError> for CliError {
    fn from(e: SeriesError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

fn numeric_err(e: DynamicsError) -> CliError {
    match e {
        DynamicsError::Singularity(_) | DynamicsError::StepUnderflow(_) => {
            CliError::Numeric(e.to_string())
        }
        other => CliError::Config(other.to_string()),
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

// In convert, non-invertible inputs are the documented exit-4 case.
fn convert_err(e: MapError) -> CliError {
    match e {
        MapError::Dynamics(d) => CliError::Config(d.to_string()),
        other => CliError::Degenerate(other.to_string()),
    }
}

pub fn run(mode: Mode, cfg: &RunConfig) -> Result<(), CliError> {
    match mode {
        Mode::Simulate => cmd_simulate(cfg),
        Mode::Synth => cmd_synth(cfg),
        Mode::Fit => cmd_fit(cfg),
        Mode::Convert => cmd_convert(cfg),
        Mode::Validate => cmd_validate(cfg),
        Mode::Compare => cmd_compare(cfg),
    }
}

fn time_grid(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let t = cfg
        .time
        .ok_or_else(|| CliError::Config("a `time` block is required".into()))?;
    if !(t.t_end > 0.0) || !t.t_end.is_finite() || t.n_points < 2 {
        return Err(CliError::Config(format!(
            "time block needs t-end > 0 and n-points >= 2, got t-end = {}, n-points = {}",
            t.t_end, t.n_points
        )));
    }
    Ok(linspace(t.t_end, t.n_points))
}

fn guard_fraction(cfg: &RunConfig) -> Result<f64, CliError> {
    let g = cfg.guard_fraction.unwrap_or(DEFAULT_GUARD_FRACTION);
    if !(g > 0.0) || !g.is_finite() {
        return Err(CliError::Config(format!(
            "guard-fraction must be positive, got {g}"
        )));
    }
    Ok(g)
}

fn tmbh_params(cfg: &RunConfig) -> Result<TmbhParams, CliError> {
    cfg.params
        .tmbh
        .as_ref()
        .ok_or_else(|| CliError::Config("a `params.tmbh` block is required".into()))?
        .to_params()
        .map_err(config_err)
}

fn initial_state(cfg: &RunConfig) -> Result<InitialState, CliError> {
    cfg.initial
        .ok_or_else(|| CliError::Config("an `initial` block is required".into()))?
        .to_state()
        .map_err(config_err)
}

fn convert_tau(cfg: &RunConfig, p: &TmbhParams, phi0: f64) -> f64 {
    cfg.convert
        .as_ref()
        .and_then(|c| c.tau_ms)
        .map(|ms| ms * 1e-3)
        .unwrap_or_else(|| decay_time(p, phi0))
}

/// Pendulum parameters from the config: either the explicit pendulum block
/// or the TMBH block plus initial state, converted through the map.
fn pendulum_params(cfg: &RunConfig) -> Result<PendulumParams, CliError> {
    if let Some(pb) = &cfg.params.pendulum {
        return pb.to_params().map_err(config_err);
    }
    if cfg.params.tmbh.is_some() {
        let p = tmbh_params(cfg)?;
        let s0 = initial_state(cfg)?;
        let tau = convert_tau(cfg, &p, s0.phi0);
        return to_pendulum(&p, &s0, tau).map_err(config_err);
    }
    Err(CliError::Config(
        "either `params.pendulum` or `params.tmbh` (with `initial`) is required".into(),
    ))
}

fn phase_path(cfg: &RunConfig, default: &str) -> PathBuf {
    cfg.paths
        .phase_csv
        .clone()
        .unwrap_or_else(|| PathBuf::from(default))
}

fn imbalance_path(cfg: &RunConfig, default: &str) -> PathBuf {
    cfg.paths
        .imbalance_csv
        .clone()
        .unwrap_or_else(|| PathBuf::from(default))
}

fn report_path(cfg: &RunConfig, default: &str) -> PathBuf {
    cfg.paths
        .report
        .clone()
        .unwrap_or_else(|| PathBuf::from(default))
}

fn write_trajectory(cfg: &RunConfig, traj: &Trajectory) -> Result<(), CliError> {
    let phase_rows: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.phi)
        .map(|(&t, &v)| (t, v))
        .collect();
    let imb_rows: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.n)
        .map(|(&t, &v)| (t, v))
        .collect();
    write_series(&phase_path(cfg, "phase.csv"), "phi", &phase_rows)?;
    write_series(&imbalance_path(cfg, "imbalance.csv"), "n", &imb_rows)?;
    Ok(())
}

fn analytic_trajectory(cfg: &RunConfig, grid: &[f64]) -> Result<Trajectory, CliError> {
    let pp = pendulum_params(cfg)?;
    let guard = guard_fraction(cfg)? * pp.tau;
    let mut phi = Vec::with_capacity(grid.len());
    let mut n = Vec::with_capacity(grid.len());
    for &t in grid {
        let (f, v) = evaluate_piecewise(t, &pp, guard);
        phi.push(f);
        n.push(v);
    }
    Trajectory::new(grid.to_vec(), phi, n, TrajectorySource::Analytic).map_err(config_err)
}

fn pendulum_numeric_trajectory(cfg: &RunConfig, grid: &[f64]) -> Result<Trajectory, CliError> {
    let p = tmbh_params(cfg)?;
    let s0 = initial_state(cfg)?;
    let lam_tot = p.lambda() + s0.phi0.cos();
    let omega0 = plasma_frequency(p.j, p.lambda(), s0.phi0).map_err(config_err)?;
    let tau = convert_tau(cfg, &p, s0.phi0);
    let dphi0 = initial_phase_velocity(&s0, &p);
    let run = integrate_pendulum(omega0, tau, s0.phi0, dphi0, grid).map_err(numeric_err)?;
    Ok(run.into_trajectory(Some(1.0 / (2.0 * p.j * lam_tot))))
}

fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = time_grid(cfg)?;
    let traj = match cfg.model {
        ModelKind::TmbhNumeric => {
            let p = tmbh_params(cfg)?;
            let s0 = initial_state(cfg)?;
            integrate_tmbh(&p, &s0, &grid).map_err(numeric_err)?
        }
        ModelKind::PendulumNumeric => pendulum_numeric_trajectory(cfg, &grid)?,
        ModelKind::Analytic => analytic_trajectory(cfg, &grid)?,
    };
    write_trajectory(cfg, &traj)
}

fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let noise = cfg
        .noise
        .ok_or_else(|| CliError::Config("synth requires a `noise` block".into()))?;
    if !(noise.sigma_phi >= 0.0) || !(noise.sigma_n >= 0.0) {
        return Err(CliError::Config(format!(
            "noise sigmas must be non-negative, got sigma-phi = {}, sigma-n = {}",
            noise.sigma_phi, noise.sigma_n
        )));
    }
    let grid = time_grid(cfg)?;
    let clean = analytic_trajectory(cfg, &grid)?;

    // One variate per noisy sample, all phase samples first. Noiseless
    // series draw nothing, so sigma = 0 reproduces the simulate output
    // byte for byte.
    let mut gauss = GaussianSource::new(noise.seed);
    let phase_rows: Vec<(f64, f64)> = clean
        .times
        .iter()
        .zip(&clean.phi)
        .map(|(&t, &v)| {
            let v = if noise.sigma_phi > 0.0 {
                v + noise.sigma_phi * gauss.next()
            } else {
                v
            };
            (t, v)
        })
        .collect();
    let imb_rows: Vec<(f64, f64)> = clean
        .times
        .iter()
        .zip(&clean.n)
        .map(|(&t, &v)| {
            let v = if noise.sigma_n > 0.0 {
                v + noise.sigma_n * gauss.next()
            } else {
                v
            };
            (t, v)
        })
        .collect();
    write_series(&phase_path(cfg, "phase.csv"), "phi", &phase_rows)?;
    write_series(&imbalance_path(cfg, "imbalance.csv"), "n", &imb_rows)?;
    Ok(())
}

fn read_optional_series(path: Option<&Path>) -> Result<Vec<(f64, f64)>, CliError> {
    match path {
        Some(p) => Ok(read_series(p)?.0),
        None => Ok(Vec::new()),
    }
}

fn cmd_fit(cfg: &RunConfig) -> Result<(), CliError> {
    let fit_block = cfg
        .fit
        .as_ref()
        .ok_or_else(|| CliError::Config("fit requires a `fit` block".into()))?;
    if cfg.paths.phase_csv.is_none() && cfg.paths.imbalance_csv.is_none() {
        return Err(CliError::Config(
            "fit needs paths.phase-csv and/or paths.imbalance-csv".into(),
        ));
    }
    let phase = read_optional_series(cfg.paths.phase_csv.as_deref())?;
    let imbalance = read_optional_series(cfg.paths.imbalance_csv.as_deref())?;
    let data = DataSet {
        phase,
        imbalance,
        weights: SeriesWeights {
            phase: fit_block.weight_phase,
            imbalance: fit_block.weight_imbalance,
        },
        n_atoms: (fit_block.n_atoms, fit_block.n_atoms_sigma),
    };
    let guess = fit_block.guess.to_params().map_err(config_err)?;
    let opts = FitOptions {
        guard_fraction: guard_fraction(cfg)?,
        ..FitOptions::default()
    };
    let report = estimation::fit(&data, &guess, &opts).map_err(config_err)?;
    write_json(&report_path(cfg, "fit_report.json"), &fit_report_doc(&report))?;
    Ok(())
}

fn cmd_convert(cfg: &RunConfig) -> Result<(), CliError> {
    let doc = match (&cfg.params.pendulum, &cfg.params.tmbh) {
        (Some(pb), None) => {
            let pp = pb.to_params().map_err(config_err)?;
            let n_atoms = cfg
                .convert
                .as_ref()
                .and_then(|c| c.n_atoms)
                .ok_or_else(|| {
                    CliError::Config("convert to TMBH needs `convert.n-atoms`".into())
                })?;
            let (tmbh, map_used, warning) = match cfg.initial {
                Some(init) => {
                    let s0 = init.to_state().map_err(config_err)?;
                    match to_tmbh_general(&pp, &s0, n_atoms) {
                        Ok(t) => (t, "general", None),
                        Err(MapError::Degenerate(msg)) => {
                            // Documented fallback: the simplified map with
                            // the degeneracy recorded as a warning.
                            let t = to_tmbh_simplified(&pp, n_atoms).map_err(convert_err)?;
                            (t, "simplified", Some(msg))
                        }
                        Err(e) => return Err(convert_err(e)),
                    }
                }
                None => {
                    let t = to_tmbh_simplified(&pp, n_atoms).map_err(convert_err)?;
                    (t, "simplified", None)
                }
            };
            ConvertDoc {
                map_used: map_used.to_string(),
                warning,
                tmbh: Some(crate::io::config::TmbhBlock::from_params(&tmbh)),
                pendulum: None,
            }
        }
        (None, Some(tb)) => {
            let p = tb.to_params().map_err(config_err)?;
            let s0 = initial_state(cfg)?;
            let tau = convert_tau(cfg, &p, s0.phi0);
            let pp = to_pendulum(&p, &s0, tau).map_err(convert_err)?;
            ConvertDoc {
                map_used: "to-pendulum".to_string(),
                warning: None,
                tmbh: None,
                pendulum: Some(crate::io::config::PendulumBlock::from_params(&pp)),
            }
        }
        _ => {
            return Err(CliError::Config(
                "convert needs exactly one of `params.pendulum` or `params.tmbh`".into(),
            ))
        }
    };
    write_json(&report_path(cfg, "convert.json"), &doc)?;
    Ok(())
}

fn cmd_validate(cfg: &RunConfig) -> Result<(), CliError> {
    let pp = pendulum_params(cfg)?;
    let regime = classify_regime(pp.k0);
    let rigidity = rigidity_check(&pp, regime).map_err(config_err)?;
    let crossing = if pp.k0 > 1.0 && pp.tau.is_finite() {
        Some(separatrix_crossing_time(pp.k0, pp.tau).map_err(config_err)? * 1e3)
    } else {
        None
    };
    let doc = ValidateDoc {
        regime: regime_name(regime).to_string(),
        k0: pp.k0,
        rigidity_delta: rigidity.delta,
        rigidity_ok: rigidity.ok,
        separatrix_crossing_ms: crossing,
    };
    write_json(&report_path(cfg, "validate.json"), &doc)?;
    Ok(())
}

fn cmd_compare(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = time_grid(cfg)?;
    let analytic = analytic_trajectory(cfg, &grid)?;
    let (numeric, model_name) = match cfg.model {
        ModelKind::TmbhNumeric => {
            let p = tmbh_params(cfg)?;
            let s0 = initial_state(cfg)?;
            (
                integrate_tmbh(&p, &s0, &grid).map_err(numeric_err)?,
                "tmbh-numeric",
            )
        }
        ModelKind::PendulumNumeric => {
            (pendulum_numeric_trajectory(cfg, &grid)?, "pendulum-numeric")
        }
        ModelKind::Analytic => {
            return Err(CliError::Config(
                "compare needs model tmbh-numeric or pendulum-numeric".into(),
            ))
        }
    };

    let mut phi_rows = Vec::with_capacity(grid.len());
    let mut n_rows = Vec::with_capacity(grid.len());
    let mut max_dphi = 0.0_f64;
    let mut max_dn = 0.0_f64;
    for i in 0..grid.len() {
        max_dphi = max_dphi.max((analytic.phi[i] - numeric.phi[i]).abs());
        max_dn = max_dn.max((analytic.n[i] - numeric.n[i]).abs());
        phi_rows.push(vec![grid[i], analytic.phi[i], numeric.phi[i]]);
        n_rows.push(vec![grid[i], analytic.n[i], numeric.n[i]]);
    }
    write_columns(
        &phase_path(cfg, "compare_phase.csv"),
        &["t", "phi_analytic", "phi_numeric"],
        &phi_rows,
    )?;
    write_columns(
        &imbalance_path(cfg, "compare_imbalance.csv"),
        &["t", "n_analytic", "n_numeric"],
        &n_rows,
    )?;
    let summary = CompareDoc {
        numeric_model: model_name.to_string(),
        n_points: grid.len(),
        max_abs_dphi: max_dphi,
        max_abs_dn: max_dn,
    };
    let path = cfg
        .paths
        .summary
        .clone()
        .unwrap_or_else(|| PathBuf::from("compare_summary.json"));
    write_json(&path, &summary)?;
    Ok(())
}
