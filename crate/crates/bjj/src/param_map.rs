//! Bidirectional conversion between the observable pendulum parameters and
//! the physical TMBH parameters, including the viscosity map and the
//! anharmonic/damped frequency relations.
//!
//! The pendulum-side quantities (`k0`, `omega0`, `N0`, `tau`, `delta_phi`,
//! `delta_n`) are weakly correlated and directly measurable; the TMBH side
//! (`J`, `U`/`Lambda`, `epsilon`, `eta`) is the theory parameterization.

use crate::dynamics_analytic::{
    damped_omega, dephasing, energy_ratio_k, plasma_frequency, ModelError, PendulumParams,
};
use crate::dynamics_numeric::{DynamicsError, InitialState, TmbhParams};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("degenerate conversion: {0}")]
    Degenerate(String),
    #[error("imbalance amplitude N0 = {0} exceeds 1; the state is outside the pendulum model")]
    AmplitudeBound(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Decay time implied by the viscosity, `tau = N / (J eta (Lambda + cos phi0))`.
///
/// Infinite for `eta = 0`.
pub fn decay_time(p: &TmbhParams, phi0: f64) -> f64 {
    if p.eta == 0.0 {
        return f64::INFINITY;
    }
    p.n_atoms / (p.j * p.eta * (p.lambda() + phi0.cos()))
}

/// Assembles the pendulum parameters of a TMBH junction started at `s0`,
/// with envelope decay time `tau` (pass [`decay_time`] or `f64::INFINITY`).
///
/// Initial states on the negative side of the equilibrium offset are mapped
/// through the `(phi, n - delta_n) -> (-phi, -(n - delta_n))` symmetry: the
/// stored dephasing is computed from the reflected phase and `sigma0 = -1`
/// restores the sign on evaluation.
pub fn to_pendulum(
    p: &TmbhParams,
    s0: &InitialState,
    tau: f64,
) -> Result<PendulumParams, MapError> {
    let lam_tot = p.lambda() + s0.phi0.cos();
    let omega0 = plasma_frequency(p.j, p.lambda(), s0.phi0)?;
    let k0 = energy_ratio_k(s0, p, tau)?;
    let n0_amp = 2.0 * k0 / lam_tot.sqrt();
    if n0_amp > 1.0 + 1e-12 {
        return Err(MapError::AmplitudeBound(n0_amp));
    }
    let delta_n = -p.epsilon / (2.0 * p.j * lam_tot);
    let sigma0 = if s0.n0 == delta_n {
        1.0
    } else {
        (s0.n0 - delta_n).signum()
    };
    let delta_phi = if k0 == 0.0 {
        0.0
    } else {
        dephasing(sigma0 * s0.phi0, k0)?
    };
    PendulumParams::new(k0, omega0, n0_amp, tau, delta_phi, delta_n, sigma0).map_err(Into::into)
}

/// General inverse map valid for any non-degenerate initial state:
///
/// ```text
/// J       = omega0 sqrt(|N0^2 - (n0 - delta_n)^2|) / (4 |sin(phi0/2)|)
/// Lambda  = 4 sin^2(phi0/2) / |N0^2 - (n0 - delta_n)^2| - cos(phi0)
/// epsilon = -2 omega0 |sin(phi0/2)| delta_n / sqrt(|N0^2 - (n0 - delta_n)^2|)
/// ```
///
/// `U` follows from `Lambda = N U / (2 J)` and `eta` from the decay time.
/// Degenerate inputs (`phi0 = 0`, or the initial state sitting at the
/// imbalance turning point `|n0 - delta_n| = N0`) cannot be inverted; use
/// [`to_tmbh_simplified`] or refit.
pub fn to_tmbh_general(
    pp: &PendulumParams,
    s0: &InitialState,
    n_atoms: f64,
) -> Result<TmbhParams, MapError> {
    let s = (0.5 * s0.phi0).sin();
    if s.abs() < 1e-10 {
        return Err(MapError::Degenerate(
            "phi0 = 0: the general map loses the phase scale; use the simplified map".into(),
        ));
    }
    let off = s0.n0 - pp.delta_n;
    let d = pp.n0_amp * pp.n0_amp - off * off;
    if d.abs() < 1e-12 * pp.n0_amp.max(1e-300) * pp.n0_amp.max(1e-300) {
        return Err(MapError::Degenerate(
            "initial state sits at the imbalance turning point |n0 - delta_n| = N0".into(),
        ));
    }
    let root = d.abs().sqrt();
    let j = pp.omega0 * root / (4.0 * s.abs());
    let lam_tot = 4.0 * s * s / d.abs();
    let lambda = lam_tot - s0.phi0.cos();
    let u = 2.0 * j * lambda / n_atoms;
    let epsilon = -2.0 * pp.omega0 * s.abs() * pp.delta_n / root;
    let eta = if pp.tau.is_finite() {
        n_atoms / (j * pp.tau * lam_tot)
    } else {
        0.0
    };
    TmbhParams::new(j, u, n_atoms, epsilon, eta).map_err(Into::into)
}

/// Small-asymmetry inverse map:
///
/// ```text
/// J = omega0 N0 / (4 k0),  Lambda = 4 k0^2 / N0^2 - lambda,
/// epsilon = -2 omega0 k0 delta_n / N0
/// ```
///
/// `lambda = cos(phi0)` is recovered from the stored dephasing; use
/// [`to_tmbh_simplified_with_lambda`] to pin it (e.g. to 1).
pub fn to_tmbh_simplified(pp: &PendulumParams, n_atoms: f64) -> Result<TmbhParams, MapError> {
    to_tmbh_simplified_with_lambda(pp, n_atoms, pp.cos_phi0())
}

/// [`to_tmbh_simplified`] with an explicit `lambda = cos(phi0)` value.
pub fn to_tmbh_simplified_with_lambda(
    pp: &PendulumParams,
    n_atoms: f64,
    lambda_small: f64,
) -> Result<TmbhParams, MapError> {
    if pp.k0 <= 0.0 || pp.n0_amp <= 0.0 {
        return Err(MapError::Degenerate(format!(
            "simplified map needs k0 > 0 and N0 > 0, got k0 = {}, N0 = {}",
            pp.k0, pp.n0_amp
        )));
    }
    let j = pp.omega0 * pp.n0_amp / (4.0 * pp.k0);
    let lambda = 4.0 * pp.k0 * pp.k0 / (pp.n0_amp * pp.n0_amp) - lambda_small;
    let u = 2.0 * j * lambda / n_atoms;
    let epsilon = -2.0 * pp.omega0 * pp.k0 * pp.delta_n / pp.n0_amp;
    let eta = viscosity_eta(pp, n_atoms);
    TmbhParams::new(j, u, n_atoms, epsilon, eta).map_err(Into::into)
}

/// Viscosity from measurable quantities, `eta = N N0 / (k0 tau omega0)`;
/// zero for infinite `tau`.
pub fn viscosity_eta(pp: &PendulumParams, n_atoms: f64) -> f64 {
    if !pp.tau.is_finite() {
        return 0.0;
    }
    n_atoms * pp.n0_amp / (pp.k0 * pp.tau * pp.omega0)
}

/// First-order anharmonic frequency `omega = omega0 (1 - Phi0^2/16)` for a
/// phase-oscillation amplitude `Phi0`.
pub fn corrected_frequency(omega0: f64, phase_amplitude: f64) -> f64 {
    omega0 * (1.0 - phase_amplitude * phase_amplitude / 16.0)
}

/// Damped oscillation frequency `omega = sqrt(omega0^2 - 1/tau^2)`.
///
/// Errors when overdamped (`omega0 tau <= 1`); returns `omega0` bit-exactly
/// for infinite `tau`.
pub fn damped_frequency(omega0: f64, tau: f64) -> Result<f64, MapError> {
    damped_omega(omega0, tau).map_err(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics_analytic::{classify_regime, Regime};
    use crate::elliptic::complete_k;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn table1_row_a() -> PendulumParams {
        PendulumParams::new(0.57, 2623.0, 0.12, 8.9e-3, -2.0, -0.03, 1.0).unwrap()
    }

    #[test]
    fn table1_simplified_map() {
        let pp = table1_row_a();
        let t = to_tmbh_simplified(&pp, 3500.0).unwrap();
        // J = 2623*0.12/(4*0.57) = 138.1 rad/s = 22.0 Hz.
        assert!(
            (t.j / (2.0 * PI) - 22.0).abs() < 0.5,
            "J = {} Hz",
            t.j / (2.0 * PI)
        );
        // Lambda ~ 89.3 (paper quotes 92 +- 87).
        assert!((t.lambda() - 89.25).abs() < 0.1, "Lambda = {}", t.lambda());
        // epsilon ~ 119 Hz (paper quotes 103 +- 92).
        assert!(
            (t.epsilon / (2.0 * PI) - 119.0).abs() < 1.0,
            "epsilon = {} Hz",
            t.epsilon / (2.0 * PI)
        );
        // eta ~ 31.6 (paper text 32(7), table 29).
        assert!((t.eta - 31.6).abs() < 0.1, "eta = {}", t.eta);
    }

    #[test]
    fn viscosity_cases() {
        let pp = table1_row_a();
        assert!((viscosity_eta(&pp, 3500.0) - 31.563).abs() < 5e-3);
        let undamped = PendulumParams::undamped(0.57, 2623.0, 0.12, -2.0, -0.03, 1.0).unwrap();
        assert_eq!(viscosity_eta(&undamped, 3500.0), 0.0);
    }

    #[test]
    fn viscosity_round_trip_through_decay_time() {
        let pp = table1_row_a();
        let t = to_tmbh_simplified(&pp, 3500.0).unwrap();
        let phi0 = pp.initial_phase();
        assert_relative_eq!(decay_time(&t, phi0), pp.tau, max_relative = 1e-10);
    }

    #[test]
    fn general_map_round_trip() {
        // TMBH -> pendulum -> TMBH must be the identity for non-degenerate
        // states, with and without damping and detuning.
        let j = 2.0 * PI * 50.0;
        let u = 2.0 * PI * 0.8;
        let n_atoms = 5000.0;
        for (eps, eta) in [(0.0, 0.0), (2.0 * PI * 30.0, 0.0), (2.0 * PI * 30.0, 60.0)] {
            let t0 = TmbhParams::new(j, u, n_atoms, eps, eta).unwrap();
            let s0 = InitialState::new(0.1, 1.2).unwrap();
            let tau = decay_time(&t0, s0.phi0);
            let pp = to_pendulum(&t0, &s0, tau).unwrap();
            let t1 = to_tmbh_general(&pp, &s0, n_atoms).unwrap();
            assert_relative_eq!(t1.j, t0.j, max_relative = 1e-10);
            assert_relative_eq!(t1.u, t0.u, max_relative = 1e-10);
            assert_relative_eq!(t1.lambda(), t0.lambda(), max_relative = 1e-10);
            if eps != 0.0 {
                assert_relative_eq!(t1.epsilon, t0.epsilon, max_relative = 1e-10);
            } else {
                assert!(t1.epsilon.abs() < 1e-9);
            }
            if eta > 0.0 {
                assert_relative_eq!(t1.eta, t0.eta, max_relative = 1e-10);
            } else {
                assert_eq!(t1.eta, 0.0);
            }
        }
    }

    #[test]
    fn general_map_reduces_to_simplified_at_offset_start() {
        // n0 = delta_n makes the two maps coincide.
        let j = 2.0 * PI * 40.0;
        let n_atoms = 4000.0;
        let u = 2.0 * 60.0 * j / n_atoms;
        let eps = 2.0 * PI * 10.0;
        let t0 = TmbhParams::new(j, u, n_atoms, eps, 0.0).unwrap();
        let delta_n = -eps / (2.0 * j * (t0.lambda() + (0.9_f64).cos()));
        let s0 = InitialState::new(delta_n, 0.9).unwrap();
        let pp = to_pendulum(&t0, &s0, f64::INFINITY).unwrap();
        let general = to_tmbh_general(&pp, &s0, n_atoms).unwrap();
        let simplified = to_tmbh_simplified(&pp, n_atoms).unwrap();
        assert_relative_eq!(general.j, simplified.j, max_relative = 1e-9);
        assert_relative_eq!(general.lambda(), simplified.lambda(), max_relative = 1e-9);
        assert_relative_eq!(general.epsilon, simplified.epsilon, max_relative = 1e-9);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let pp = table1_row_a();
        // phi0 = 0 start.
        let s_zero = InitialState::new(0.05, 0.0).unwrap();
        assert!(matches!(
            to_tmbh_general(&pp, &s_zero, 3500.0),
            Err(MapError::Degenerate(_))
        ));
        // Turning-point start.
        let s_turn = InitialState::new(pp.n0_amp + pp.delta_n, 1.0).unwrap();
        assert!(matches!(
            to_tmbh_general(&pp, &s_turn, 3500.0),
            Err(MapError::Degenerate(_))
        ));
        // Simplified map needs motion.
        let still = PendulumParams::undamped(0.0, 100.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            to_tmbh_simplified(&still, 1000.0),
            Err(MapError::Degenerate(_))
        ));
    }

    #[test]
    fn to_pendulum_fig2_state() {
        let t = TmbhParams::symmetric(2.0 * PI * 50.0, 2.0 * PI * 0.8, 5000.0).unwrap();
        let s0 = InitialState::new(0.0, 0.8 * PI).unwrap();
        let pp = to_pendulum(&t, &s0, f64::INFINITY).unwrap();
        assert_relative_eq!(pp.k0, (0.4 * PI).sin(), max_relative = 1e-12);
        let expected_n0 = 2.0 * (0.4 * PI).sin() / (40.0 + (0.8 * PI).cos()).sqrt();
        assert_relative_eq!(pp.n0_amp, expected_n0, max_relative = 1e-12);
        assert_eq!(pp.sigma0, 1.0);
        assert_eq!(pp.delta_n, 0.0);
        // Phase at t = 0 reproduces the initial state.
        assert_relative_eq!(pp.initial_phase(), 0.8 * PI, epsilon = 1e-10);
    }

    #[test]
    fn to_pendulum_equilibrium_states() {
        let t = TmbhParams::symmetric(2.0 * PI * 50.0, 2.0 * PI * 0.8, 5000.0).unwrap();
        let ground = InitialState::new(0.0, 0.0).unwrap();
        let pp = to_pendulum(&t, &ground, f64::INFINITY).unwrap();
        assert_eq!(pp.k0, 0.0);
        assert_eq!(classify_regime(pp.k0), Regime::Equilibrium);

        // The k-minimizing detuning with phi0 = 0 is also an equilibrium.
        let j = 2.0 * PI * 20.0;
        let n_atoms = 5000.0;
        let u = 2.0 * 100.0 * j / n_atoms;
        let n0 = 0.2;
        let eps_l = -2.0 * j * 101.0 * n0;
        let det = TmbhParams::new(j, u, n_atoms, eps_l, 0.0).unwrap();
        let s0 = InitialState::new(n0, 0.0).unwrap();
        let pp = to_pendulum(&det, &s0, f64::INFINITY).unwrap();
        assert!(pp.k0 < 1e-12, "k0 = {}", pp.k0);
    }

    #[test]
    fn negative_side_state_round_trips() {
        // sigma0 = -1 input: the phase at t = 0 must still match.
        let t = TmbhParams::symmetric(2.0 * PI * 50.0, 2.0 * PI * 0.8, 5000.0).unwrap();
        let s0 = InitialState::new(-0.12, 0.6).unwrap();
        let pp = to_pendulum(&t, &s0, f64::INFINITY).unwrap();
        assert_eq!(pp.sigma0, -1.0);
        assert_relative_eq!(pp.initial_phase(), 0.6, epsilon = 1e-10);
        assert_relative_eq!(
            crate::dynamics_analytic::phi_undamped(0.0, &pp),
            0.6,
            epsilon = 1e-10
        );
        assert_relative_eq!(
            crate::dynamics_analytic::n_undamped(0.0, &pp),
            -0.12,
            epsilon = 1e-9
        );
        // And the general map inverts it.
        let t1 = to_tmbh_general(&pp, &s0, 5000.0).unwrap();
        assert_relative_eq!(t1.j, t.j, max_relative = 1e-10);
        assert_relative_eq!(t1.u, t.u, max_relative = 1e-10);
    }

    #[test]
    fn corrected_frequency_against_elliptic_period() {
        let w0 = 1234.0;
        assert_eq!(corrected_frequency(w0, 0.0), w0);
        // Phi0 = 0.4: first order matches the exact elliptic frequency to 0.1%.
        let phi_amp = 0.4_f64;
        let exact = PI * w0 / (2.0 * complete_k((0.5 * phi_amp).sin().powi(2)).unwrap());
        let first = corrected_frequency(w0, phi_amp);
        assert!((first / exact - 1.0).abs() < 1e-3);
        // Phi0 = pi/2: larger error with a definite ordering
        // (first order < exact < omega0).
        let phi_amp = PI / 2.0;
        let exact = PI * w0 / (2.0 * complete_k((0.5 * phi_amp).sin().powi(2)).unwrap());
        let first = corrected_frequency(w0, phi_amp);
        assert!(first < exact && exact < w0, "first={first}, exact={exact}");
    }

    #[test]
    fn damped_frequency_cases() {
        let w0 = 876.0;
        assert_eq!(
            damped_frequency(w0, f64::INFINITY).unwrap().to_bits(),
            w0.to_bits()
        );
        let tau = 2.0_f64.sqrt() / w0;
        assert_relative_eq!(
            damped_frequency(w0, tau).unwrap(),
            w0 / 2.0_f64.sqrt(),
            max_relative = 1e-12
        );
        assert!(matches!(
            damped_frequency(w0, 1.0 / w0),
            Err(MapError::Model(ModelError::Overdamped(_)))
        ));
    }

    #[test]
    fn reporting_units_do_not_touch_stored_values() {
        // Converting rad/s to Hz for display is a pure output operation.
        let pp = table1_row_a();
        let t = to_tmbh_simplified(&pp, 3500.0).unwrap();
        let j_hz = t.j / (2.0 * PI);
        assert_relative_eq!(j_hz * 2.0 * PI, t.j, max_relative = 1e-15);
        // Branch decisions (regime) are unit-independent by construction:
        // k0 is dimensionless.
        assert_eq!(classify_regime(pp.k0), Regime::JosephsonOscillation);
    }
}
