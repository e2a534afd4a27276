//! Closed-form Jacobi-elliptic solutions of the junction in every dynamical
//! regime: undamped symmetric, detuned, and the dissipative heuristic
//! solutions, together with regime classification and the rigid-pendulum
//! validity check.
//!
//! All evaluators are pure functions of a [`PendulumParams`] value, the
//! observable "data-side" parameterization of the junction.

use crate::elliptic::{inv_sn, jacobi_am, jacobi_sn_cn_dn, EllipticError};
use thiserror::Error;

/// Fraction of `tau` used as the half-width of the excluded band around the
/// separatrix-crossing time.
pub const DEFAULT_GUARD_FRACTION: f64 = 0.02;

/// Effective-`k` value at which the post-crossing evaluation switches from
/// the large-oscillation form back to the full-amplitude form.
const BRANCH_RETURN_K: f64 = 0.5;

/// Rigid-pendulum acceptance threshold on the maximal length variation.
pub const RIGIDITY_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("inverted pendulum: Lambda + cos(phi0) = {0} must be positive")]
    InvertedPendulum(f64),
    #[error("overdamped: omega0*tau = {0} does not exceed 1")]
    Overdamped(f64),
    #[error("initial amplitude outside the oscillation bound: {0}")]
    AmplitudeBound(String),
    #[error(
        "t = {t} s lies in the guard band around the separatrix crossing t_c = {t_c} s; \
         use the piecewise evaluator"
    )]
    GuardBand { t: f64, t_c: f64 },
    #[error("k0 = {0} never reaches the separatrix (requires k0 > 1)")]
    NotSelfTrapped(f64),
    #[error("undamped dynamics never cross the separatrix (tau is infinite)")]
    NoCrossingWithoutDamping,
    #[error("large-oscillation form only valid after the crossing: k0*exp(-t/tau) = {0} > 1")]
    PreSeparatrix(f64),
    #[error("imbalance reach N0 + |delta_n| = {0} exceeds 1")]
    RigidityDomain(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
}

/// Observable pendulum parameters of the junction.
///
/// `k0` is the energy ratio: `k0 < 1` oscillating, `k0 = 1` separatrix,
/// `k0 > 1` self-trapped. `n0_amp` is the undamped imbalance amplitude
/// (called `N0` in the formulas), `delta_phi` the dephasing in elliptic
/// argument units, `delta_n` the equilibrium imbalance offset and `sigma0`
/// the sign of `n0 - delta_n` at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    pub k0: f64,
    /// Plasma frequency in rad/s, > 0.
    pub omega0: f64,
    /// Undamped imbalance amplitude, in [0, 1]; 0 only at equilibrium.
    pub n0_amp: f64,
    /// Envelope decay time in seconds; `f64::INFINITY` for undamped.
    pub tau: f64,
    /// Frequency-recovery decay time in seconds; defaults to `tau`.
    pub tau2: f64,
    pub delta_phi: f64,
    pub delta_n: f64,
    /// +1 or -1.
    pub sigma0: f64,
}

impl PendulumParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k0: f64,
        omega0: f64,
        n0_amp: f64,
        tau: f64,
        delta_phi: f64,
        delta_n: f64,
        sigma0: f64,
    ) -> Result<Self, ModelError> {
        let p = Self {
            k0,
            omega0,
            n0_amp,
            tau,
            tau2: tau,
            delta_phi,
            delta_n,
            sigma0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Undamped parameters (`tau` infinite).
    pub fn undamped(
        k0: f64,
        omega0: f64,
        n0_amp: f64,
        delta_phi: f64,
        delta_n: f64,
        sigma0: f64,
    ) -> Result<Self, ModelError> {
        Self::new(k0, omega0, n0_amp, f64::INFINITY, delta_phi, delta_n, sigma0)
    }

    /// Overrides the frequency-recovery timescale.
    pub fn with_tau2(mut self, tau2: f64) -> Self {
        self.tau2 = tau2;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidParameter(msg));
        if !(self.k0 >= 0.0) || !self.k0.is_finite() {
            return bad(format!("k0 must be finite and non-negative, got {}", self.k0));
        }
        if !(self.omega0 > 0.0) || !self.omega0.is_finite() {
            return bad(format!("omega0 must be positive, got {}", self.omega0));
        }
        if !(0.0..=1.0 + 1e-12).contains(&self.n0_amp) {
            return bad(format!("N0 must lie in [0, 1], got {}", self.n0_amp));
        }
        if !(self.tau > 0.0) || !(self.tau2 > 0.0) {
            return bad(format!(
                "decay times must be positive, got tau = {}, tau2 = {}",
                self.tau, self.tau2
            ));
        }
        if self.tau.is_finite() && self.omega0 * self.tau <= 1.0 {
            return Err(ModelError::Overdamped(self.omega0 * self.tau));
        }
        if !self.delta_phi.is_finite() {
            return bad(format!("delta_phi must be finite, got {}", self.delta_phi));
        }
        if !(self.delta_n.abs() < 1.0) {
            return bad(format!("|delta_n| must be below 1, got {}", self.delta_n));
        }
        if self.sigma0 != 1.0 && self.sigma0 != -1.0 {
            return bad(format!("sigma0 must be +1 or -1, got {}", self.sigma0));
        }
        Ok(())
    }

    /// Damped oscillation frequency `sqrt(omega0^2 - 1/tau^2)`.
    ///
    /// Returns `omega0` itself (bit-exactly) when `tau` is infinite.
    pub fn omega(&self) -> f64 {
        if self.tau.is_finite() {
            (self.omega0 * self.omega0 - 1.0 / (self.tau * self.tau)).sqrt()
        } else {
            self.omega0
        }
    }

    /// Initial phase recovered from the dephasing,
    /// `phi0 = 2 sigma0 am(delta_phi | k0^-2)`.
    pub fn initial_phase(&self) -> f64 {
        if self.k0 == 0.0 {
            return 0.0;
        }
        2.0 * self.sigma0 * jacobi_am(self.delta_phi, 1.0 / (self.k0 * self.k0))
    }

    /// `lambda = cos(phi0)` of the generating initial state.
    pub fn cos_phi0(&self) -> f64 {
        self.initial_phase().cos()
    }

    /// Separatrix guard half-width used by the default evaluators.
    pub fn default_guard(&self) -> f64 {
        DEFAULT_GUARD_FRACTION * self.tau
    }
}

/// Dynamical regime, determined solely by the energy ratio `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Equilibrium,
    JosephsonOscillation,
    Separatrix,
    SelfTrapped,
}

/// `k = 0` equilibrium, `0 < k < 1` oscillation, `|k - 1| <= 1e-9`
/// separatrix, `k > 1` self-trapping.
pub fn classify_regime(k: f64) -> Regime {
    assert!(k >= 0.0, "energy ratio must be non-negative, got {k}");
    if k == 0.0 {
        Regime::Equilibrium
    } else if (k - 1.0).abs() <= 1e-9 {
        Regime::Separatrix
    } else if k < 1.0 {
        Regime::JosephsonOscillation
    } else {
        Regime::SelfTrapped
    }
}

/// Plasma frequency `omega0 = 2 J sqrt(Lambda + cos(phi0))` in rad/s.
pub fn plasma_frequency(j: f64, lambda: f64, phi0: f64) -> Result<f64, ModelError> {
    let lam_tot = lambda + phi0.cos();
    if lam_tot <= 0.0 {
        return Err(ModelError::InvertedPendulum(lam_tot));
    }
    Ok(2.0 * j * lam_tot.sqrt())
}

/// Initial phase velocity `dphi0 = epsilon + 2 J (Lambda + cos(phi0)) n0`
/// in rad/s.
pub fn initial_phase_velocity(
    s0: &crate::dynamics_numeric::InitialState,
    p: &crate::dynamics_numeric::TmbhParams,
) -> f64 {
    p.epsilon + 2.0 * p.j * (p.lambda() + s0.phi0.cos()) * s0.n0
}

/// Energy ratio `k0 = sqrt(dphi0^2 + 4 w^2 sin^2(phi0/2)) / (2 w)` with
/// `w = sqrt(omega0^2 - 1/tau^2)`.
///
/// `tau` may be infinite; a finite `tau` with `omega0*tau <= 1` is
/// overdamped and rejected.
pub fn energy_ratio_k(
    s0: &crate::dynamics_numeric::InitialState,
    p: &crate::dynamics_numeric::TmbhParams,
    tau: f64,
) -> Result<f64, ModelError> {
    let omega0 = plasma_frequency(p.j, p.lambda(), s0.phi0)?;
    let omega = damped_omega(omega0, tau)?;
    let dphi0 = initial_phase_velocity(s0, p);
    let s = (0.5 * s0.phi0).sin();
    Ok((dphi0 * dphi0 + 4.0 * omega * omega * s * s).sqrt() / (2.0 * omega))
}

/// `sqrt(omega0^2 - 1/tau^2)`, bit-exactly `omega0` for infinite `tau`.
pub(crate) fn damped_omega(omega0: f64, tau: f64) -> Result<f64, ModelError> {
    if !tau.is_finite() {
        return Ok(omega0);
    }
    let wt = omega0 * tau;
    if wt <= 1.0 {
        return Err(ModelError::Overdamped(wt));
    }
    Ok((omega0 * omega0 - 1.0 / (tau * tau)).sqrt())
}

/// Dephasing `delta_phi = inv_sn(sin(phi0/2) | k^-2)`.
///
/// In the oscillating regime the initial amplitude must satisfy
/// `|sin(phi0/2)| <= k`.
pub fn dephasing(phi0: f64, k: f64) -> Result<f64, ModelError> {
    let s = (0.5 * phi0).sin();
    if k == 0.0 {
        if s == 0.0 {
            return Ok(0.0);
        }
        return Err(ModelError::AmplitudeBound(format!(
            "k = 0 admits only phi0 = 0, got phi0 = {phi0}"
        )));
    }
    inv_sn(s, 1.0 / (k * k)).map_err(|e| match e {
        EllipticError::InverseRange { .. } => ModelError::AmplitudeBound(format!(
            "|sin(phi0/2)| = {} exceeds the oscillation bound k = {k}",
            s.abs()
        )),
        other => ModelError::Elliptic(other),
    })
}

// Shared phase evaluator. `k_eff` is the instantaneous energy ratio and
// `base_arg = w t + delta_phi / k0`; the Jacobi argument of the raw formulas
// is `k_eff * base_arg` and the parameter is `k_eff^-2`. Writing it this way
// keeps the oscillating branch free of overflowing `exp(2t/tau)` factors.
fn phi_jacobi(sigma0: f64, k_eff: f64, base_arg: f64) -> f64 {
    if k_eff == 0.0 {
        return 0.0;
    }
    if k_eff < 1.0 {
        let (sn, _, _) = jacobi_sn_cn_dn(base_arg, k_eff * k_eff);
        2.0 * sigma0 * (k_eff * sn).asin()
    } else {
        2.0 * sigma0 * jacobi_am(k_eff * base_arg, 1.0 / (k_eff * k_eff))
    }
}

/// Undamped relative phase `phi(t) = 2 sigma0 am(k0 w0 t + delta_phi | k0^-2)`.
///
/// Returns 0 at equilibrium (`k0 = 0`).
pub fn phi_undamped(t: f64, p: &PendulumParams) -> f64 {
    if p.k0 == 0.0 {
        return 0.0;
    }
    phi_jacobi(p.sigma0, p.k0, p.omega0 * t + p.delta_phi / p.k0)
}

/// Undamped imbalance
/// `n(t) = sigma0 (N0 dn(k0 w0 t + delta_phi | k0^-2) - nbar) + delta_n`.
///
/// The mean term `nbar` enters with the trajectory sign so that initial
/// states on either side of `delta_n` are related by the
/// `(phi, n - delta_n) -> (-phi, -(n - delta_n))` symmetry.
pub fn n_undamped(t: f64, p: &PendulumParams) -> f64 {
    if p.k0 == 0.0 {
        return p.delta_n;
    }
    let base_arg = p.omega0 * t + p.delta_phi / p.k0;
    // dn(A | k0^-2) reduced with the same scaled argument as the phase:
    // for k0 < 1 the reciprocal-modulus identity turns dn into cn.
    let dn = if p.k0 < 1.0 {
        jacobi_sn_cn_dn(base_arg, p.k0 * p.k0).1
    } else {
        jacobi_sn_cn_dn(p.k0 * base_arg, 1.0 / (p.k0 * p.k0)).2
    };
    let nbar = mean_imbalance(p.n0_amp, p.k0);
    p.sigma0 * (p.n0_amp * dn - nbar) + p.delta_n
}

/// Mean imbalance offset of the self-trapped regime:
/// `0` for `k <= 1`, `N0 (sqrt(1 - k^-2) + 1)/2` for `k > 1`.
///
/// Discontinuous at `k = 1` by construction; no smoothing is applied, the
/// two one-sided values are what the branches return.
pub fn mean_imbalance(n0_amp: f64, k: f64) -> f64 {
    if k <= 1.0 {
        0.0
    } else {
        0.5 * n0_amp * ((1.0 - 1.0 / (k * k)).sqrt() + 1.0)
    }
}

/// Heuristic damped phase (full-amplitude form),
/// `phi(t) = 2 sigma0 am((w k0 t + delta_phi) e^{-t/tau} | k0^-2 e^{2t/tau})`.
///
/// For a self-trapped start the band of half-width
/// [`PendulumParams::default_guard`] around the crossing time
/// `t_c = tau ln(k0)` is excluded; use [`evaluate_piecewise`] there.
pub fn phi_damped(t: f64, p: &PendulumParams) -> Result<f64, ModelError> {
    if p.k0 > 1.0 && p.tau.is_finite() {
        let t_c = p.tau * p.k0.ln();
        if (t - t_c).abs() < p.default_guard() {
            return Err(ModelError::GuardBand { t, t_c });
        }
    }
    Ok(phi_damped_raw(t, p))
}

fn phi_damped_raw(t: f64, p: &PendulumParams) -> f64 {
    if p.k0 == 0.0 {
        return 0.0;
    }
    let k_eff = p.k0 * (-t / p.tau).exp();
    phi_jacobi(p.sigma0, k_eff, p.omega() * t + p.delta_phi / p.k0)
}

/// Two-timescale damped phase for large post-crossing oscillations:
/// the envelope `2 sigma0 asin(k0 e^{-t/tau})` times the Jacobi SN
/// normalized by its own amplitude (decaying with `tau2`).
pub fn phi_damped_large(t: f64, p: &PendulumParams) -> Result<f64, ModelError> {
    let k_env = p.k0 * (-t / p.tau).exp();
    if k_env > 1.0 {
        return Err(ModelError::PreSeparatrix(k_env));
    }
    Ok(phi_damped_large_raw(t, p))
}

fn phi_damped_large_raw(t: f64, p: &PendulumParams) -> f64 {
    if p.k0 == 0.0 {
        return 0.0;
    }
    let k_env = (p.k0 * (-t / p.tau).exp()).min(1.0);
    let base_arg = p.omega() * t + p.delta_phi / p.k0;
    let k2 = p.k0 * (-t / p.tau2).exp();
    // sn at parameter k2^-2 divided by k2, reduced to the bounded branch.
    let osc = if k2 <= 1.0 {
        jacobi_sn_cn_dn(base_arg, k2 * k2).0
    } else {
        jacobi_sn_cn_dn(k2 * base_arg, 1.0 / (k2 * k2)).0 / k2
    };
    2.0 * p.sigma0 * k_env.asin() * osc
}

/// Time at which a damped self-trapped trajectory reaches the separatrix,
/// `t_c = tau ln(k0)`.
pub fn separatrix_crossing_time(k0: f64, tau: f64) -> Result<f64, ModelError> {
    if !(k0 > 1.0) {
        return Err(ModelError::NotSelfTrapped(k0));
    }
    if !tau.is_finite() {
        return Err(ModelError::NoCrossingWithoutDamping);
    }
    Ok(tau * k0.ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Branch {
    /// Full-amplitude damped form.
    Full,
    /// Post-crossing large-oscillation form.
    Large,
    /// Linear bridge across the guard band.
    Bridge { t_lo: f64, t_hi: f64 },
}

fn dispatch(t: f64, p: &PendulumParams, guard: f64) -> Branch {
    if p.k0 <= 1.0 || !p.tau.is_finite() {
        return Branch::Full;
    }
    let t_c = p.tau * p.k0.ln();
    if t < t_c - guard {
        Branch::Full
    } else if t <= t_c + guard {
        Branch::Bridge {
            t_lo: t_c - guard,
            t_hi: t_c + guard,
        }
    } else if p.k0 * (-t / p.tau).exp() >= BRANCH_RETURN_K {
        Branch::Large
    } else {
        Branch::Full
    }
}

fn branch_phi(branch: Branch, t: f64, p: &PendulumParams) -> f64 {
    match branch {
        Branch::Full => phi_damped_raw(t, p),
        Branch::Large => phi_damped_large_raw(t, p),
        Branch::Bridge { t_lo, t_hi } => {
            let lo = phi_damped_raw(t_lo, p);
            let hi_branch = if p.k0 * (-t_hi / p.tau).exp() >= BRANCH_RETURN_K {
                Branch::Large
            } else {
                Branch::Full
            };
            let hi = branch_phi(hi_branch, t_hi, p);
            let w = (t - t_lo) / (t_hi - t_lo);
            lo + w * (hi - lo)
        }
    }
}

/// Damped phase and imbalance at `t`, dispatching between the
/// full-amplitude form, the guard-band bridge and the post-crossing
/// large-oscillation form. Total for any valid parameters; `guard` is the
/// band half-width in seconds.
pub fn evaluate_piecewise(t: f64, p: &PendulumParams, guard: f64) -> (f64, f64) {
    (phi_piecewise(t, p, guard), n_piecewise(t, p, guard))
}

/// Phase component of [`evaluate_piecewise`].
pub fn phi_piecewise(t: f64, p: &PendulumParams, guard: f64) -> f64 {
    branch_phi(dispatch(t, p, guard), t, p)
}

/// Imbalance component of [`evaluate_piecewise`].
pub fn n_piecewise(t: f64, p: &PendulumParams, guard: f64) -> f64 {
    n_damped_with_guard(t, p, guard)
}

/// Damped imbalance `n(t) = N0/(2 w k0) * dphi/dt + delta_n`, with the phase
/// derivative taken by 5-point central differences of the active branch.
///
/// Uses the default guard band; total for valid parameters.
pub fn n_damped(t: f64, p: &PendulumParams) -> f64 {
    n_damped_with_guard(t, p, p.default_guard())
}

fn n_damped_with_guard(t: f64, p: &PendulumParams, guard: f64) -> f64 {
    if p.k0 == 0.0 {
        return p.delta_n;
    }
    let omega = p.omega();
    let branch = dispatch(t, p, guard);
    let h = 1e-4 / omega;
    let f = |x: f64| branch_phi(branch, x, p);
    let dphi = (f(t - 2.0 * h) - 8.0 * f(t - h) + 8.0 * f(t + h) - f(t + 2.0 * h)) / (12.0 * h);
    p.n0_amp / (2.0 * omega * p.k0) * dphi + p.delta_n
}

/// Result of the rigid-pendulum validity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidityReport {
    /// Maximal variation of the pendulum length over the trajectory.
    pub delta: f64,
    /// True when `|delta| <= 0.05`.
    pub ok: bool,
}

/// Maximal pendulum-length variation for the given regime:
/// `delta_JO = sqrt(1-(N0+dn)^2) - sqrt(1-dn^2)` while oscillating,
/// `delta_MQST = sqrt(1-(N0+dn)^2) - sqrt(1-(N0 sqrt(1-k^-2)+dn)^2)` when
/// self-trapped.
pub fn rigidity_check(p: &PendulumParams, regime: Regime) -> Result<RigidityReport, ModelError> {
    let reach = p.n0_amp + p.delta_n.abs();
    if reach > 1.0 {
        return Err(ModelError::RigidityDomain(reach));
    }
    let outer = (1.0 - (p.n0_amp + p.delta_n).powi(2)).sqrt();
    let delta = match regime {
        Regime::SelfTrapped => {
            let inner_amp = p.n0_amp * (1.0 - 1.0 / (p.k0 * p.k0)).max(0.0).sqrt() + p.delta_n;
            outer - (1.0 - inner_amp * inner_amp).sqrt()
        }
        _ => outer - (1.0 - p.delta_n * p.delta_n).sqrt(),
    };
    Ok(RigidityReport {
        delta,
        ok: delta.abs() <= RIGIDITY_THRESHOLD,
    })
}
