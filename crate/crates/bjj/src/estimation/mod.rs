//! Nonlinear least-squares estimation: fits phase/imbalance time series to
//! the damped analytic model and reports covariance, correlation and
//! propagated uncertainties on the derived TMBH parameters.
//!
//! The fit parameters are `(k0, omega0, N0, tau, delta_phi, delta_n)`.
//! Positivity and range bounds are enforced by an internal log/logit
//! reparameterization; the reported covariance is transformed back to the
//! natural parameters by the chain rule at the solution.

mod lm;

use crate::dynamics_analytic::{
    classify_regime, n_piecewise, phi_piecewise, rigidity_check, PendulumParams, Regime,
    RigidityReport, DEFAULT_GUARD_FRACTION,
};
use crate::dynamics_numeric::{integrate_raw, tmbh_rhs, TmbhParams};
use crate::param_map::to_tmbh_simplified;
use lm::{lm_minimize, LmOptions};
use nalgebra::DMatrix;
use thiserror::Error;

pub const PARAM_NAMES: [&str; 6] = ["k0", "omega0", "n0_amp", "tau", "delta_phi", "delta_n"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("invalid data set: {0}")]
    InvalidData(String),
    #[error("invalid fit guess: {0}")]
    InvalidGuess(String),
    #[error("need more data points than parameters: {n_data} points for {nu} parameters")]
    DegreesOfFreedom { n_data: usize, nu: usize },
    #[error("covariance diagonal entry {0} is not positive")]
    ZeroVariance(usize),
    #[error("gradient and covariance dimensions do not match: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("negative variance {0} from a non-positive-semidefinite covariance")]
    NotPositiveSemidefinite(f64),
}

/// Measured time series of one junction realization.
///
/// The phase and imbalance series may live on disjoint time grids; either
/// one (but not both) may be empty.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    /// `(t, phi)` samples, seconds and radians.
    pub phase: Vec<(f64, f64)>,
    /// `(t, n)` samples, seconds and dimensionless.
    pub imbalance: Vec<(f64, f64)>,
    pub weights: SeriesWeights,
    /// Total atom count and its uncertainty.
    pub n_atoms: (f64, f64),
}

/// Per-series residual scales. `None` means the default: the sample
/// standard deviation of the detrended tail of that series.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SeriesWeights {
    pub phase: Option<f64>,
    pub imbalance: Option<f64>,
}

impl DataSet {
    pub fn validate(&self) -> Result<(), EstimationError> {
        if self.phase.is_empty() && self.imbalance.is_empty() {
            return Err(EstimationError::InvalidData(
                "at least one series must be non-empty".into(),
            ));
        }
        for &(t, v) in self.phase.iter().chain(self.imbalance.iter()) {
            if !t.is_finite() || !v.is_finite() {
                return Err(EstimationError::InvalidData(format!(
                    "non-finite sample ({t}, {v})"
                )));
            }
        }
        if self.imbalance.iter().any(|&(_, n)| n.abs() >= 1.0) {
            return Err(EstimationError::InvalidData(
                "imbalance samples must satisfy |n| < 1".into(),
            ));
        }
        if !(self.n_atoms.0 >= 2.0) || !(self.n_atoms.1 >= 0.0) {
            return Err(EstimationError::InvalidData(format!(
                "atom count {} +- {} is not usable",
                self.n_atoms.0, self.n_atoms.1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.phase.len() + self.imbalance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Effective residual scales: explicit weights where given, otherwise
    /// the detrended-tail standard deviation of each series.
    pub fn effective_weights(&self) -> (f64, f64) {
        (
            self.weights.phase.unwrap_or_else(|| tail_scatter(&self.phase)),
            self.weights
                .imbalance
                .unwrap_or_else(|| tail_scatter(&self.imbalance)),
        )
    }
}

// Scatter of the last fifth of the series (at least 8 points) around a
// straight-line trend; the usual stand-in for the per-point noise level.
fn tail_scatter(series: &[(f64, f64)]) -> f64 {
    if series.len() < 8 {
        return 1.0;
    }
    let tail_len = (series.len() / 5).max(8).min(series.len());
    let tail = &series[series.len() - tail_len..];
    let n = tail.len() as f64;
    let sx: f64 = tail.iter().map(|p| p.0).sum();
    let sy: f64 = tail.iter().map(|p| p.1).sum();
    let sxx: f64 = tail.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = tail.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let (a, b) = if denom.abs() < 1e-300 {
        (sy / n, 0.0)
    } else {
        let b = (n * sxy - sx * sy) / denom;
        ((sy - b * sx) / n, b)
    };
    let ss: f64 = tail
        .iter()
        .map(|&(t, y)| (y - a - b * t).powi(2))
        .sum::<f64>();
    (ss / (n - 2.0)).sqrt().max(1e-9)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative cost-decrease threshold for convergence.
    pub cost_tolerance: f64,
    /// Relative forward-difference step of the Jacobian.
    pub jacobian_step: f64,
    /// Separatrix guard half-width as a fraction of `tau`.
    pub guard_fraction: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            cost_tolerance: 1e-10,
            jacobian_step: 1e-6,
            guard_fraction: DEFAULT_GUARD_FRACTION,
        }
    }
}

/// Central value and propagated standard error of a derived quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedValue {
    pub value: f64,
    pub sigma: f64,
}

/// Derived TMBH parameters (simplified map) with propagated uncertainties.
/// `j` and `epsilon` are angular frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedTmbh {
    pub lambda: DerivedValue,
    pub j: DerivedValue,
    pub epsilon: DerivedValue,
    pub eta: DerivedValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Singular normal matrix encountered; covariance from a pseudo-inverse.
    pub rank_warning: bool,
    /// Residual entries that evaluated non-finite at the solution.
    pub flagged_residuals: usize,
    pub regime: Regime,
    pub rigidity: Option<RigidityReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub params: PendulumParams,
    /// Standard errors in [`PARAM_NAMES`] order.
    pub sigmas: [f64; 6],
    pub covariance: [[f64; 6]; 6],
    pub correlation: [[f64; 6]; 6],
    pub mse: f64,
    pub derived: DerivedTmbh,
    pub diagnostics: FitDiagnostics,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn to_internal(p: &PendulumParams) -> [f64; 6] {
    [
        p.k0.ln(),
        p.omega0.ln(),
        logit(p.n0_amp),
        p.tau.ln(),
        p.delta_phi,
        p.delta_n,
    ]
}

fn from_internal(x: &[f64], sigma0: f64) -> PendulumParams {
    let tau = x[3].exp();
    PendulumParams {
        k0: x[0].exp(),
        omega0: x[1].exp(),
        n0_amp: sigmoid(x[2]),
        tau,
        tau2: tau,
        delta_phi: x[4],
        delta_n: x[5],
        sigma0,
    }
}

// d(natural)/d(internal) at the solution, for the chain rule.
fn internal_scales(p: &PendulumParams) -> [f64; 6] {
    [
        p.k0,
        p.omega0,
        p.n0_amp * (1.0 - p.n0_amp),
        p.tau,
        1.0,
        1.0,
    ]
}

fn param_get(p: &PendulumParams, idx: usize) -> f64 {
    match idx {
        0 => p.k0,
        1 => p.omega0,
        2 => p.n0_amp,
        3 => p.tau,
        4 => p.delta_phi,
        _ => p.delta_n,
    }
}

fn param_set(p: &PendulumParams, idx: usize, v: f64) -> PendulumParams {
    let mut out = *p;
    match idx {
        0 => out.k0 = v,
        1 => out.omega0 = v,
        2 => out.n0_amp = v,
        3 => {
            out.tau = v;
            out.tau2 = v;
        }
        4 => out.delta_phi = v,
        _ => out.delta_n = v,
    }
    out
}

/// Weighted residual vector: `(model - data)/weight` for the phase series
/// followed by the imbalance series. The model is the piecewise damped
/// evaluator; points where it fails to produce a finite value become
/// `f64::INFINITY` entries rather than being dropped.
pub fn residuals(p: &PendulumParams, d: &DataSet) -> Vec<f64> {
    let w = d.effective_weights();
    residuals_with(p, d, w, DEFAULT_GUARD_FRACTION)
}

fn residuals_with(
    p: &PendulumParams,
    d: &DataSet,
    w: (f64, f64),
    guard_fraction: f64,
) -> Vec<f64> {
    let guard = guard_fraction * p.tau;
    let mut out = Vec::with_capacity(d.len());
    for &(t, phi) in &d.phase {
        let r = (phi_piecewise(t, p, guard) - phi) / w.0;
        out.push(if r.is_finite() { r } else { f64::INFINITY });
    }
    for &(t, n) in &d.imbalance {
        let r = (n_piecewise(t, p, guard) - n) / w.1;
        out.push(if r.is_finite() { r } else { f64::INFINITY });
    }
    out
}

/// Levenberg-Marquardt fit of the damped analytic model to `d`.
///
/// Returns a report even when the minimizer stalls (convergence flag
/// false); errors are reserved for unusable inputs. `sigma0` and the
/// `tau2 = tau` tie are taken from the guess and not fitted.
pub fn fit(
    d: &DataSet,
    guess: &PendulumParams,
    opts: &FitOptions,
) -> Result<FitReport, EstimationError> {
    d.validate()?;
    guess
        .validate()
        .map_err(|e| EstimationError::InvalidGuess(e.to_string()))?;
    if !guess.tau.is_finite() {
        return Err(EstimationError::InvalidGuess(
            "the damped fit model needs a finite tau guess".into(),
        ));
    }
    if !(guess.n0_amp > 0.0 && guess.n0_amp < 1.0) || guess.k0 <= 0.0 {
        return Err(EstimationError::InvalidGuess(
            "fit requires k0 > 0 and N0 strictly inside (0, 1)".into(),
        ));
    }
    let n_data = d.len();
    if n_data < 7 {
        return Err(EstimationError::DegreesOfFreedom { n_data, nu: 6 });
    }

    let w = d.effective_weights();
    let sigma0 = guess.sigma0;
    let guard_fraction = opts.guard_fraction;
    let residual_fn =
        move |x: &[f64]| residuals_with(&from_internal(x, sigma0), d, w, guard_fraction);

    let lm_opts = LmOptions {
        max_iterations: opts.max_iterations,
        cost_tolerance: opts.cost_tolerance,
        initial_damping: 1e-3,
        jacobian_step: opts.jacobian_step,
    };
    let sol = lm_minimize(&residual_fn, &to_internal(guess), &lm_opts);
    let params = from_internal(&sol.x, sigma0);

    // Chain rule back to natural parameters: J_nat[:,j] = J_int[:,j]/s_j.
    let scales = internal_scales(&params);
    let mut j_nat = sol.jacobian.clone();
    for j in 0..6 {
        for i in 0..j_nat.nrows() {
            j_nat[(i, j)] /= scales[j];
        }
    }

    let (cov_m, cov_warning) = covariance(&j_nat, sol.cost, n_data, 6)?;
    let corr_m = correlation_lenient(&cov_m);
    let mut covariance_arr = [[0.0; 6]; 6];
    let mut correlation_arr = [[0.0; 6]; 6];
    let mut sigmas = [0.0; 6];
    for i in 0..6 {
        sigmas[i] = cov_m[(i, i)].max(0.0).sqrt();
        for j in 0..6 {
            covariance_arr[i][j] = cov_m[(i, j)];
            correlation_arr[i][j] = corr_m[(i, j)];
        }
    }

    let mse = sol.cost / (n_data - 6) as f64;
    let derived = derived_block(&params, d.n_atoms, &cov_m);
    let regime = classify_regime(params.k0);
    let rigidity = rigidity_check(&params, regime).ok();
    let flagged = sol.residuals.iter().filter(|v| !v.is_finite()).count();

    Ok(FitReport {
        params,
        sigmas,
        covariance: covariance_arr,
        correlation: correlation_arr,
        mse,
        derived,
        diagnostics: FitDiagnostics {
            iterations: sol.iterations,
            converged: sol.converged,
            rank_warning: sol.rank_warning || cov_warning,
            flagged_residuals: flagged,
            regime,
            rigidity,
        },
    })
}

/// Runs [`fit`] from several guesses and keeps the best report: lowest MSE,
/// ties broken by lexicographic parameter order.
pub fn fit_multi(
    d: &DataSet,
    guesses: &[PendulumParams],
    opts: &FitOptions,
) -> Result<FitReport, EstimationError> {
    if guesses.is_empty() {
        return Err(EstimationError::InvalidGuess("no guesses supplied".into()));
    }
    let mut best: Option<FitReport> = None;
    for guess in guesses {
        let report = fit(d, guess, opts)?;
        best = Some(match best.take() {
            None => report,
            Some(cur) => {
                if report_order(&report) < report_order(&cur) {
                    report
                } else {
                    cur
                }
            }
        });
    }
    Ok(best.expect("at least one guess"))
}

fn report_order(r: &FitReport) -> [f64; 7] {
    [
        r.mse,
        r.params.k0,
        r.params.omega0,
        r.params.n0_amp,
        r.params.tau,
        r.params.delta_phi,
        r.params.delta_n,
    ]
}

fn derived_block(params: &PendulumParams, n_atoms: (f64, f64), cov: &DMatrix<f64>) -> DerivedTmbh {
    let eval = |p: &PendulumParams| -> [f64; 4] {
        match to_tmbh_simplified(p, n_atoms.0) {
            Ok(t) => [t.lambda(), t.j, t.epsilon, t.eta],
            Err(_) => [f64::NAN; 4],
        }
    };
    let center = eval(params);
    // Central-difference gradients with respect to the natural parameters.
    let mut grads = [[0.0; 6]; 4];
    for j in 0..6 {
        let v = param_get(params, j);
        let h = 1e-6 * v.abs().max(1e-8);
        let hi = eval(&param_set(params, j, v + h));
        let lo = eval(&param_set(params, j, v - h));
        for q in 0..4 {
            grads[q][j] = (hi[q] - lo[q]) / (2.0 * h);
        }
    }
    let sigma_of = |q: usize| propagate_error(&grads[q], cov).unwrap_or(f64::NAN);
    let mut eta_sigma = sigma_of(3);
    // eta scales linearly with the atom count, which carries its own error.
    if n_atoms.0 > 0.0 {
        let extra = center[3] / n_atoms.0 * n_atoms.1;
        eta_sigma = (eta_sigma * eta_sigma + extra * extra).sqrt();
    }
    DerivedTmbh {
        lambda: DerivedValue {
            value: center[0],
            sigma: sigma_of(0),
        },
        j: DerivedValue {
            value: center[1],
            sigma: sigma_of(1),
        },
        epsilon: DerivedValue {
            value: center[2],
            sigma: sigma_of(2),
        },
        eta: DerivedValue {
            value: center[3],
            sigma: eta_sigma,
        },
    }
}

/// Covariance of the fit parameters: `MSE = R/(n_data - nu)`,
/// `C = (J^T J)^{-1} MSE`. A rank-deficient normal matrix falls back to the
/// SVD pseudo-inverse and sets the warning flag.
pub fn covariance(
    jacobian: &DMatrix<f64>,
    residual_sum: f64,
    n_data: usize,
    nu: usize,
) -> Result<(DMatrix<f64>, bool), EstimationError> {
    if n_data <= nu {
        return Err(EstimationError::DegreesOfFreedom { n_data, nu });
    }
    let mse = residual_sum / (n_data - nu) as f64;
    let h = jacobian.transpose() * jacobian;
    let (inv, warning) = match h.clone().cholesky() {
        Some(ch) => (ch.inverse(), false),
        None => {
            let pinv = h
                .clone()
                .svd(true, true)
                .pseudo_inverse(1e-14 * h.amax().max(1e-300))
                .map_err(|_| EstimationError::ZeroVariance(0))?;
            (pinv, true)
        }
    };
    let mut c = inv * mse;
    // Symmetrize away the last bits of asymmetry from the solve.
    let ct = c.transpose();
    c = (c + ct) * 0.5;
    Ok((c, warning))
}

/// Correlation matrix `corr[i][j] = C[i][j]/sqrt(C[i][i] C[j][j])`, with an
/// exactly unit diagonal. A non-positive diagonal entry is a domain error.
pub fn correlation(c: &DMatrix<f64>) -> Result<DMatrix<f64>, EstimationError> {
    for i in 0..c.nrows() {
        if !(c[(i, i)] > 0.0) {
            return Err(EstimationError::ZeroVariance(i));
        }
    }
    Ok(correlation_lenient(c))
}

// Like `correlation` but maps zero-variance parameters to uncorrelated rows
// instead of failing; used to keep rank-deficient fit reports total.
fn correlation_lenient(c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                out[(i, j)] = 1.0;
            } else {
                let d = (c[(i, i)] * c[(j, j)]).sqrt();
                out[(i, j)] = if d > 0.0 && d.is_finite() {
                    (c[(i, j)] / d).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
            }
        }
    }
    out
}

/// First-order error propagation `sigma_f = sqrt(grad^T C grad)`.
///
/// Errors if the quadratic form is negative beyond rounding noise.
pub fn propagate_error(grad: &[f64], c: &DMatrix<f64>) -> Result<f64, EstimationError> {
    if grad.len() != c.nrows() || !c.is_square() {
        return Err(EstimationError::DimensionMismatch(grad.len(), c.nrows()));
    }
    let mut acc = 0.0;
    let mut scale = 0.0;
    for i in 0..grad.len() {
        for j in 0..grad.len() {
            let term = grad[i] * grad[j] * c[(i, j)];
            acc += term;
            scale += term.abs();
        }
    }
    if acc < 0.0 {
        if acc > -1e-12 * scale.max(1e-300) {
            return Ok(0.0);
        }
        return Err(EstimationError::NotPositiveSemidefinite(acc));
    }
    Ok(acc.sqrt())
}

/// Direct damped-TMBH fit parameters `(J, eta, Lambda, epsilon, n0, phi0)`.
///
/// This parameterization is strongly correlated; it exists to support the
/// comparison against the heuristic-model fit, not as the primary route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmbhDirectParams {
    /// Tunnel coupling `J/hbar` in rad/s.
    pub j: f64,
    pub eta: f64,
    pub lambda: f64,
    /// Detuning `epsilon/hbar` in rad/s.
    pub epsilon: f64,
    pub n0: f64,
    pub phi0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TmbhDirectFit {
    pub params: TmbhDirectParams,
    pub correlation: [[f64; 6]; 6],
    pub mse: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Fits the damped TMBH equations of motion directly by integrating them at
/// every residual evaluation. Atom count is fixed at the data-set value.
pub fn fit_tmbh_direct(
    d: &DataSet,
    guess: &TmbhDirectParams,
    opts: &FitOptions,
) -> Result<TmbhDirectFit, EstimationError> {
    d.validate()?;
    let n_data = d.len();
    if n_data < 7 {
        return Err(EstimationError::DegreesOfFreedom { n_data, nu: 6 });
    }
    if !(guess.j > 0.0 && guess.eta > 0.0 && guess.lambda > 0.0 && guess.n0.abs() < 1.0) {
        return Err(EstimationError::InvalidGuess(
            "direct TMBH fit needs J, eta, Lambda > 0 and |n0| < 1".into(),
        ));
    }
    let w = d.effective_weights();
    let n_atoms = d.n_atoms.0;

    // One merged grid per evaluation; each data point knows its grid slot.
    let mut grid: Vec<f64> = Vec::with_capacity(n_data + 1);
    grid.push(0.0);
    grid.extend(d.phase.iter().chain(d.imbalance.iter()).map(|p| p.0));
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    let slot = |t: f64| grid.binary_search_by(|g| g.partial_cmp(&t).unwrap()).unwrap();
    let phase_slots: Vec<usize> = d.phase.iter().map(|p| slot(p.0)).collect();
    let imb_slots: Vec<usize> = d.imbalance.iter().map(|p| slot(p.0)).collect();

    let unpack = |x: &[f64]| TmbhDirectParams {
        j: x[0].exp(),
        eta: x[1].exp(),
        lambda: x[2].exp(),
        epsilon: x[3],
        n0: x[4].tanh(),
        phi0: x[5],
    };
    let residual_fn = |x: &[f64]| -> Vec<f64> {
        let p = unpack(x);
        let tmbh = TmbhParams {
            j: p.j,
            u: 2.0 * p.j * p.lambda / n_atoms,
            n_atoms,
            epsilon: p.epsilon,
            eta: p.eta,
        };
        // Looser tolerance than the oracle integrations: this runs inside
        // the fit loop.
        let states = integrate_raw(
            |_t, y| tmbh_rhs(y, &tmbh),
            [p.n0, p.phi0],
            &grid,
            1e-9,
            1e-11,
        );
        match states {
            Ok(states) => {
                let mut out = Vec::with_capacity(n_data);
                for (i, &(_, phi)) in d.phase.iter().enumerate() {
                    out.push((states[phase_slots[i]][1] - phi) / w.0);
                }
                for (i, &(_, n)) in d.imbalance.iter().enumerate() {
                    out.push((states[imb_slots[i]][0] - n) / w.1);
                }
                out
            }
            Err(_) => vec![f64::INFINITY; n_data],
        }
    };

    let x0 = [
        guess.j.ln(),
        guess.eta.ln(),
        guess.lambda.ln(),
        guess.epsilon,
        guess.n0.atanh(),
        guess.phi0,
    ];
    let lm_opts = LmOptions {
        max_iterations: opts.max_iterations,
        cost_tolerance: opts.cost_tolerance,
        initial_damping: 1e-3,
        jacobian_step: opts.jacobian_step,
    };
    let sol = lm_minimize(&residual_fn, &x0, &lm_opts);
    let params = unpack(&sol.x);

    let scales = [
        params.j,
        params.eta,
        params.lambda,
        1.0,
        1.0 - params.n0 * params.n0,
        1.0,
    ];
    let mut j_nat = sol.jacobian.clone();
    for j in 0..6 {
        for i in 0..j_nat.nrows() {
            j_nat[(i, j)] /= scales[j];
        }
    }
    let (cov_m, _) = covariance(&j_nat, sol.cost, n_data, 6)?;
    let corr_m = correlation_lenient(&cov_m);
    let mut correlation = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            correlation[i][j] = corr_m[(i, j)];
        }
    }
    Ok(TmbhDirectFit {
        params,
        correlation,
        mse: sol.cost / (n_data - 6) as f64,
        converged: sol.converged,
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics_analytic::evaluate_piecewise;
    use crate::io::rng::GaussianSource;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table1_truth() -> PendulumParams {
        PendulumParams::new(0.57, 2623.0, 0.12, 8.9e-3, -2.0, -0.03, 1.0).unwrap()
    }

    fn synth_dataset(truth: &PendulumParams, n_pts: usize, noise: (f64, f64), seed: u64) -> DataSet {
        let mut gauss = GaussianSource::new(seed);
        let guard = truth.default_guard();
        let t_end = 0.030;
        let mut phase = Vec::new();
        let mut imbalance = Vec::new();
        for i in 0..n_pts {
            let t = i as f64 * t_end / (n_pts - 1) as f64;
            let (phi, n) = evaluate_piecewise(t, truth, guard);
            phase.push((t, phi + noise.0 * gauss.next()));
            imbalance.push((t, (n + noise.1 * gauss.next()).clamp(-0.999, 0.999)));
        }
        DataSet {
            phase,
            imbalance,
            weights: SeriesWeights::default(),
            n_atoms: (3500.0, 300.0),
        }
    }

    #[test]
    fn residuals_vanish_on_exact_data() {
        let truth = table1_truth();
        let d = synth_dataset(&truth, 40, (0.0, 0.0), 1);
        let r = residuals(&truth, &d);
        assert_eq!(r.len(), 80);
        assert!(r.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn residual_rms_tracks_noise_level() {
        // With explicit unit weights the residual RMS at truth is the noise
        // sigma; averaged over seeds it must match to a few percent.
        let truth = table1_truth();
        let sigma = 0.1;
        let mut total = 0.0;
        let mut count = 0usize;
        for seed in 0..100 {
            let mut d = synth_dataset(&truth, 30, (sigma, 0.0), seed);
            d.imbalance.clear();
            d.weights.phase = Some(1.0);
            let r = residuals(&truth, &d);
            total += r.iter().map(|v| v * v).sum::<f64>();
            count += r.len();
        }
        let rms = (total / count as f64).sqrt();
        assert!((rms / sigma - 1.0).abs() < 0.05, "rms = {rms}");
    }

    #[test]
    fn empty_imbalance_series_gives_phase_only_residuals() {
        let truth = table1_truth();
        let mut d = synth_dataset(&truth, 25, (0.0, 0.0), 2);
        d.imbalance.clear();
        assert_eq!(residuals(&truth, &d).len(), 25);
    }

    #[test]
    fn noiseless_fit_recovers_truth() {
        let truth = table1_truth();
        let d = synth_dataset(&truth, 60, (0.0, 0.0), 3);
        // 20% perturbed guess.
        let guess = PendulumParams::new(
            0.57 * 1.2,
            2623.0 * 0.8,
            0.12 * 1.2,
            8.9e-3 * 0.8,
            -2.0 * 1.2,
            -0.03 * 0.8,
            1.0,
        )
        .unwrap();
        let report = fit(&d, &guess, &FitOptions::default()).unwrap();
        assert!(report.diagnostics.converged);
        assert_relative_eq!(report.params.k0, truth.k0, max_relative = 1e-6);
        assert_relative_eq!(report.params.omega0, truth.omega0, max_relative = 1e-6);
        assert_relative_eq!(report.params.n0_amp, truth.n0_amp, max_relative = 1e-6);
        assert_relative_eq!(report.params.tau, truth.tau, max_relative = 1e-6);
        assert_relative_eq!(report.params.delta_phi, truth.delta_phi, max_relative = 1e-6);
        assert!((report.params.delta_n - truth.delta_n).abs() < 1e-7);
    }

    #[test]
    fn fit_is_deterministic() {
        let truth = table1_truth();
        let d = synth_dataset(&truth, 40, (0.1, 0.02), 7);
        let guess = PendulumParams::new(0.5, 2500.0, 0.15, 0.01, -1.5, 0.0, 1.0).unwrap();
        let a = fit(&d, &guess, &FitOptions::default()).unwrap();
        let b = fit(&d, &guess, &FitOptions::default()).unwrap();
        assert_eq!(a.params.k0.to_bits(), b.params.k0.to_bits());
        assert_eq!(a.mse.to_bits(), b.mse.to_bits());
        for i in 0..6 {
            assert_eq!(a.sigmas[i].to_bits(), b.sigmas[i].to_bits());
            for j in 0..6 {
                assert_eq!(
                    a.covariance[i][j].to_bits(),
                    b.covariance[i][j].to_bits()
                );
            }
        }
    }

    #[test]
    fn multi_start_picks_lowest_mse() {
        let truth = table1_truth();
        let d = synth_dataset(&truth, 50, (0.05, 0.01), 11);
        let good = PendulumParams::new(0.6, 2600.0, 0.13, 0.009, -1.9, -0.02, 1.0).unwrap();
        let far = PendulumParams::new(0.1, 1200.0, 0.5, 0.1, 0.0, 0.2, 1.0).unwrap();
        let best = fit_multi(&d, &[far, good], &FitOptions::default()).unwrap();
        let direct = fit(&d, &good, &FitOptions::default()).unwrap();
        assert!(best.mse <= direct.mse * (1.0 + 1e-12));
    }

    #[test]
    fn covariance_matches_ols_oracle() {
        // Linear model y = a x: closed-form variance MSE/sum(x^2).
        let xs: Vec<f64> = (1..=20).map(|i| i as f64 * 0.3).collect();
        let mut jac = DMatrix::zeros(xs.len(), 1);
        for (i, &x) in xs.iter().enumerate() {
            jac[(i, 0)] = x;
        }
        let residual_sum = 4.2;
        let (c, warn) = covariance(&jac, residual_sum, xs.len(), 1).unwrap();
        assert!(!warn);
        let mse = residual_sum / 19.0;
        let sum_x2: f64 = xs.iter().map(|x| x * x).sum();
        assert_relative_eq!(c[(0, 0)], mse / sum_x2, max_relative = 1e-12);

        // Homogeneity: scaling the residuals by c scales C by c^2.
        let (c4, _) = covariance(&jac, 4.0 * residual_sum, xs.len(), 1).unwrap();
        assert_relative_eq!(c4[(0, 0)], 4.0 * c[(0, 0)], max_relative = 1e-12);
    }

    #[test]
    fn covariance_flags_rank_deficiency() {
        let mut jac = DMatrix::zeros(10, 2);
        for i in 0..10 {
            jac[(i, 0)] = i as f64;
            jac[(i, 1)] = i as f64; // duplicate column
        }
        let (_, warn) = covariance(&jac, 1.0, 10, 2).unwrap();
        assert!(warn);
    }

    #[test]
    fn correlation_normalization() {
        let mut c = DMatrix::zeros(2, 2);
        c[(0, 0)] = 4.0;
        c[(1, 1)] = 9.0;
        let corr = correlation(&c).unwrap();
        assert_eq!(corr[(0, 0)], 1.0);
        assert_eq!(corr[(1, 1)], 1.0);
        assert_eq!(corr[(0, 1)], 0.0);

        // The quoted sigma_k = 0.03, sigma_tau = 0.9 ms with the -0.65
        // correlation give the covariance entry back.
        let mut c = DMatrix::zeros(2, 2);
        c[(0, 0)] = 0.03_f64.powi(2);
        c[(1, 1)] = 0.9_f64.powi(2);
        c[(0, 1)] = -0.65 * 0.03 * 0.9;
        c[(1, 0)] = c[(0, 1)];
        let corr = correlation(&c).unwrap();
        assert_relative_eq!(corr[(0, 1)], -0.65, max_relative = 1e-12);
        assert!(corr.iter().all(|v| v.abs() <= 1.0));

        let mut z = DMatrix::zeros(2, 2);
        z[(1, 1)] = 1.0;
        assert!(matches!(
            correlation(&z),
            Err(EstimationError::ZeroVariance(0))
        ));
    }

    #[test]
    fn propagation_basics() {
        let mut c = DMatrix::zeros(2, 2);
        c[(0, 0)] = 2.25;
        c[(1, 1)] = 1.0;
        assert_relative_eq!(
            propagate_error(&[1.0, 0.0], &c).unwrap(),
            1.5,
            max_relative = 1e-14
        );
        // Fully correlated difference cancels exactly.
        let mut c = DMatrix::zeros(2, 2);
        let v = 0.7;
        c[(0, 0)] = v;
        c[(1, 1)] = v;
        c[(0, 1)] = v;
        c[(1, 0)] = v;
        assert_eq!(propagate_error(&[1.0, -1.0], &c).unwrap(), 0.0);
    }

    #[test]
    fn sigma_j_reproduces_published_error() {
        // Covariance entries for (omega0, N0, k): sigma_w0 = 13,
        // sigma_N0 = 0.06, sigma_k = 0.03, cov(w0,N0) = -0.06,
        // cov(k,w0) = -0.1, cov(k,N0) = 0.0003. J = w0 N0/(4k) then carries
        // sigma_J ~ 10.9 Hz against the published 11.
        let (w0, n0, k) = (2623.0_f64, 0.12_f64, 0.57_f64);
        let mut c = DMatrix::zeros(3, 3);
        c[(0, 0)] = 13.0_f64.powi(2);
        c[(1, 1)] = 0.06_f64.powi(2);
        c[(2, 2)] = 0.03_f64.powi(2);
        c[(0, 1)] = -0.06;
        c[(1, 0)] = -0.06;
        c[(0, 2)] = -0.1;
        c[(2, 0)] = -0.1;
        c[(1, 2)] = 0.0003;
        c[(2, 1)] = 0.0003;
        // J in Hz so the result reads in table units.
        let j_hz = w0 * n0 / (4.0 * k) / (2.0 * std::f64::consts::PI);
        let grad = [
            j_hz / w0,  // dJ/dw0
            j_hz / n0,  // dJ/dN0
            -j_hz / k,  // dJ/dk
        ];
        let sigma_j = propagate_error(&grad, &c).unwrap();
        assert!((sigma_j - 10.9).abs() < 0.1, "sigma_J = {sigma_j}");
    }

    #[test]
    fn heuristic_correlations_beat_direct_tmbh_fit() {
        // Synthetic Table I(a)-like data: the heuristic parameterization
        // must show weaker correlations than the raw damped-TMBH one.
        let truth = table1_truth();
        let d = synth_dataset(&truth, 30, (0.1, 0.02), 42);
        let guess = PendulumParams::new(0.6, 2600.0, 0.13, 0.009, -1.9, -0.02, 1.0).unwrap();
        let heuristic = fit(&d, &guess, &FitOptions::default()).unwrap();

        let tmbh = to_tmbh_simplified(&truth, 3500.0).unwrap();
        let (phi0, n0) = {
            let (phi, n) = evaluate_piecewise(0.0, &truth, truth.default_guard());
            (phi, n)
        };
        let direct_guess = TmbhDirectParams {
            j: tmbh.j,
            eta: tmbh.eta.max(1.0),
            lambda: tmbh.lambda(),
            epsilon: tmbh.epsilon,
            n0,
            phi0,
        };
        let mut opts = FitOptions::default();
        opts.max_iterations = 60;
        let direct = fit_tmbh_direct(&d, &direct_guess, &opts).unwrap();

        let max_off = |m: &[[f64; 6]; 6]| {
            let mut v = 0.0_f64;
            for i in 0..6 {
                for j in 0..6 {
                    if i != j {
                        v = v.max(m[i][j].abs());
                    }
                }
            }
            v
        };
        let h = max_off(&heuristic.correlation);
        let t = max_off(&direct.correlation);
        assert!(
            h < t,
            "heuristic max off-diagonal {h} should be below direct TMBH {t}"
        );
    }

    #[test]
    fn covariance_scales_with_noise() {
        // Doubling the noise roughly doubles every fitted sigma.
        let truth = table1_truth();
        let mut ratio_sum = [0.0_f64; 6];
        let seeds = 6;
        for seed in 0..seeds {
            let d1 = synth_dataset(&truth, 40, (0.05, 0.01), 100 + seed);
            let d2 = synth_dataset(&truth, 40, (0.10, 0.02), 100 + seed);
            let guess = PendulumParams::new(0.6, 2600.0, 0.13, 0.0095, -1.9, -0.02, 1.0).unwrap();
            let r1 = fit(&d1, &guess, &FitOptions::default()).unwrap();
            let r2 = fit(&d2, &guess, &FitOptions::default()).unwrap();
            for i in 0..6 {
                ratio_sum[i] += r2.sigmas[i] / r1.sigmas[i];
            }
        }
        for (i, s) in ratio_sum.iter().enumerate() {
            let mean = s / seeds as f64;
            assert!(
                (mean / 2.0 - 1.0).abs() < 0.2,
                "sigma ratio for {} is {mean}, expected ~2",
                PARAM_NAMES[i]
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn propagation_equals_quadratic_form(
            a in proptest::collection::vec(-2.0..2.0f64, 9),
            g in proptest::collection::vec(-3.0..3.0f64, 3),
        ) {
            // C = A^T A is PSD by construction.
            let a = DMatrix::from_vec(3, 3, a);
            let c = a.transpose() * &a;
            let direct = propagate_error(&g, &c).unwrap();
            // Manual double sum, the textbook form.
            let mut acc = 0.0;
            for i in 0..3 {
                acc += c[(i, i)] * g[i] * g[i];
            }
            for i in 0..3 {
                for j in (i + 1)..3 {
                    acc += 2.0 * g[i] * g[j] * c[(i, j)];
                }
            }
            prop_assert!((direct * direct - acc).abs() <= 1e-9 * acc.abs().max(1e-12));
        }
    }
}
