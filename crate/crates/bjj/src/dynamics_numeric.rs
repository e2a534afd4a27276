//! Numerical reference dynamics: adaptive Runge-Kutta integration of the
//! mean-field two-mode Bose-Hubbard (TMBH) equations of motion, with or
//! without detuning and dissipation, and of the rigid-pendulum equation,
//! plus the conserved quantities used to validate them.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("pendulum length collapsed: |n| reached 1 (n = {0})")]
    Singularity(f64),
    #[error("step size underflow at t = {0} s")]
    StepUnderflow(f64),
    #[error("time grid must be strictly increasing and start at 0")]
    InvalidGrid,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Physical TMBH parameters. All energies are angular frequencies `E/hbar`
/// in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmbhParams {
    /// Tunnel-coupling energy `J/hbar` (rad/s), > 0.
    pub j: f64,
    /// On-site interaction energy `U/hbar` (rad/s), >= 0.
    pub u: f64,
    /// Total atom number, >= 2.
    pub n_atoms: f64,
    /// Detuning energy `epsilon/hbar` (rad/s), signed.
    pub epsilon: f64,
    /// Dimensionless viscosity, >= 0.
    pub eta: f64,
}

impl TmbhParams {
    pub fn new(
        j: f64,
        u: f64,
        n_atoms: f64,
        epsilon: f64,
        eta: f64,
    ) -> Result<Self, DynamicsError> {
        if !(j > 0.0) {
            return Err(DynamicsError::InvalidParameter(format!(
                "tunnel coupling J must be positive, got {j}"
            )));
        }
        if !(u >= 0.0) {
            return Err(DynamicsError::InvalidParameter(format!(
                "interaction U must be non-negative, got {u}"
            )));
        }
        if !(n_atoms >= 2.0) {
            return Err(DynamicsError::InvalidParameter(format!(
                "atom number must be at least 2, got {n_atoms}"
            )));
        }
        if !epsilon.is_finite() {
            return Err(DynamicsError::InvalidParameter(format!(
                "detuning must be finite, got {epsilon}"
            )));
        }
        if !(eta >= 0.0) {
            return Err(DynamicsError::InvalidParameter(format!(
                "viscosity must be non-negative, got {eta}"
            )));
        }
        Ok(Self {
            j,
            u,
            n_atoms,
            epsilon,
            eta,
        })
    }

    /// Symmetric, undamped junction (`epsilon = 0`, `eta = 0`).
    pub fn symmetric(j: f64, u: f64, n_atoms: f64) -> Result<Self, DynamicsError> {
        Self::new(j, u, n_atoms, 0.0, 0.0)
    }

    /// Interaction-to-tunneling ratio `Lambda = N U / (2 J)`.
    ///
    /// Always derived from the stored fields, never cached.
    pub fn lambda(&self) -> f64 {
        self.n_atoms * self.u / (2.0 * self.j)
    }
}

/// Initial state of a trajectory: normalized imbalance and relative phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialState {
    /// Normalized atom-number imbalance, |n0| < 1.
    pub n0: f64,
    /// Relative phase in radians.
    pub phi0: f64,
}

impl InitialState {
    pub fn new(n0: f64, phi0: f64) -> Result<Self, DynamicsError> {
        if !(n0.abs() < 1.0) {
            return Err(DynamicsError::InvalidParameter(format!(
                "imbalance must satisfy |n0| < 1, got {n0}"
            )));
        }
        if !phi0.is_finite() {
            return Err(DynamicsError::InvalidParameter(format!(
                "phase must be finite, got {phi0}"
            )));
        }
        Ok(Self { n0, phi0 })
    }
}

/// Provenance tag of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectorySource {
    NumericTmbh,
    NumericPendulum,
    Analytic,
}

/// Sampled time evolution of the relative phase and imbalance.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Sample times in seconds, strictly increasing.
    pub times: Vec<f64>,
    /// Relative phase in radians, one entry per time.
    pub phi: Vec<f64>,
    /// Normalized imbalance, one entry per time.
    pub n: Vec<f64>,
    pub source: TrajectorySource,
}

impl Trajectory {
    pub fn new(
        times: Vec<f64>,
        phi: Vec<f64>,
        n: Vec<f64>,
        source: TrajectorySource,
    ) -> Result<Self, DynamicsError> {
        if times.len() != phi.len() || times.len() != n.len() {
            return Err(DynamicsError::InvalidParameter(
                "trajectory columns must have equal lengths".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DynamicsError::InvalidGrid);
        }
        Ok(Self {
            times,
            phi,
            n,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Right-hand side of the damped TMBH equations of motion for the state
/// `[n, phi]`, returning `[dn/dt, dphi/dt]` in rad/s.
///
/// The viscosity acts on the full phase velocity, which is evaluated first
/// and substituted into the imbalance equation.
pub fn tmbh_rhs(state: [f64; 2], p: &TmbhParams) -> Result<[f64; 2], DynamicsError> {
    let [n, phi] = state;
    if n.abs() >= 1.0 - 1e-12 {
        return Err(DynamicsError::Singularity(n));
    }
    let root = (1.0 - n * n).sqrt();
    let dphi = p.epsilon + 2.0 * p.j * (p.lambda() * n + n * phi.cos() / root);
    let dn = -2.0 * p.j * root * phi.sin() - p.eta / p.n_atoms * dphi;
    Ok([dn, dphi])
}

/// Energy-like invariant of the symmetric undamped junction,
/// `alpha = (Lambda/2) n^2 - sqrt(1 - n^2) cos(phi)`, in `[-1, Lambda/2]`.
pub fn alpha_invariant(n: f64, phi: f64, lambda: f64) -> f64 {
    0.5 * lambda * n * n - (1.0 - n * n).sqrt() * phi.cos()
}

/// Conserved pendulum energy `E = dphi^2 + 4 omega0^2 sin^2(phi/2)`
/// in rad^2/s^2.
pub fn pendulum_energy(phi: f64, dphi: f64, omega0: f64) -> f64 {
    dphi * dphi + 4.0 * omega0 * omega0 * (0.5 * phi).sin().powi(2)
}

/// Integrates the TMBH equations of motion on the given time grid.
///
/// The grid must be strictly increasing and start at 0. Integration uses an
/// embedded Dormand-Prince 4(5) scheme with dense output at relative
/// tolerance 1e-10 and absolute tolerance 1e-12; the result is deterministic
/// for fixed inputs.
pub fn integrate_tmbh(
    p: &TmbhParams,
    s0: &InitialState,
    grid: &[f64],
) -> Result<Trajectory, DynamicsError> {
    validate_grid(grid)?;
    let states = integrate_raw(
        |_t, y| tmbh_rhs(y, p),
        [s0.n0, s0.phi0],
        grid,
        RTOL,
        ATOL,
    )?;
    Trajectory::new(
        grid.to_vec(),
        states.iter().map(|s| s[1]).collect(),
        states.iter().map(|s| s[0]).collect(),
        TrajectorySource::NumericTmbh,
    )
}

/// Phase track of a numeric pendulum integration.
#[derive(Debug, Clone, PartialEq)]
pub struct PendulumRun {
    pub times: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
}

impl PendulumRun {
    /// Converts to a [`Trajectory`]. When the TMBH context is known the
    /// imbalance follows from `n = dphi / (2 J (Lambda + lambda))`; pass
    /// that factor as `n_scale`. Without context the imbalance column is
    /// filled with zeros.
    pub fn into_trajectory(self, n_scale: Option<f64>) -> Trajectory {
        let n = match n_scale {
            Some(s) => self.dphi.iter().map(|d| s * d).collect(),
            None => vec![0.0; self.dphi.len()],
        };
        Trajectory {
            times: self.times,
            phi: self.phi,
            n,
            source: TrajectorySource::NumericPendulum,
        }
    }
}

/// Integrates the damped rigid-pendulum equation
/// `phi'' + (2/tau) phi' + omega0^2 sin(phi) = 0`.
///
/// `tau` may be `f64::INFINITY` for the undamped case. Tolerances match
/// [`integrate_tmbh`].
pub fn integrate_pendulum(
    omega0: f64,
    tau: f64,
    phi0: f64,
    dphi0: f64,
    grid: &[f64],
) -> Result<PendulumRun, DynamicsError> {
    if !(omega0 > 0.0) {
        return Err(DynamicsError::InvalidParameter(format!(
            "plasma frequency must be positive, got {omega0}"
        )));
    }
    if !(tau > 0.0) {
        return Err(DynamicsError::InvalidParameter(format!(
            "decay time must be positive or infinite, got {tau}"
        )));
    }
    validate_grid(grid)?;
    let damping = 2.0 / tau; // exactly 0 for tau = inf
    let w2 = omega0 * omega0;
    let states = integrate_raw(
        |_t, y: [f64; 2]| Ok([y[1], -damping * y[1] - w2 * y[0].sin()]),
        [phi0, dphi0],
        grid,
        RTOL,
        ATOL,
    )?;
    Ok(PendulumRun {
        times: grid.to_vec(),
        phi: states.iter().map(|s| s[0]).collect(),
        dphi: states.iter().map(|s| s[1]).collect(),
    })
}

/// Uniform time grid from 0 to `t_end` with `n_points` samples.
pub fn linspace(t_end: f64, n_points: usize) -> Vec<f64> {
    assert!(n_points >= 2, "a grid needs at least two points");
    let dt = t_end / (n_points - 1) as f64;
    (0..n_points)
        .map(|i| {
            if i + 1 == n_points {
                t_end
            } else {
                i as f64 * dt
            }
        })
        .collect()
}

fn validate_grid(grid: &[f64]) -> Result<(), DynamicsError> {
    if grid.is_empty() || grid[0] != 0.0 || grid.iter().any(|t| !t.is_finite()) {
        return Err(DynamicsError::InvalidGrid);
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DynamicsError::InvalidGrid);
    }
    Ok(())
}

pub(crate) const RTOL: f64 = 1e-10;
pub(crate) const ATOL: f64 = 1e-12;

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Dense-output weights (Hairer, Norsett & Wanner).
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

type State = [f64; 2];

/// Adaptive Dormand-Prince integration of a 2-component system, sampling the
/// dense-output interpolant on `grid`. The right-hand side is fallible; a
/// failure during a trial step first forces step-size reduction and is only
/// reported once the step size underflows.
pub(crate) fn integrate_raw<F>(
    f: F,
    y0: State,
    grid: &[f64],
    rtol: f64,
    atol: f64,
) -> Result<Vec<State>, DynamicsError>
where
    F: Fn(f64, State) -> Result<State, DynamicsError>,
{
    let t0 = grid[0];
    let t_end = *grid.last().unwrap();
    let mut out = Vec::with_capacity(grid.len());
    out.push(y0);
    if grid.len() == 1 {
        return Ok(out);
    }

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, y)?;
    let mut next = 1usize;

    // Crude but safe initial step from the state/derivative magnitudes.
    let mut h = {
        let d0 = scaled_norm(y, atol, rtol, &y);
        let d1 = scaled_norm(k1, atol, rtol, &y);
        let guess = if d0 < 1e-10 || d1 < 1e-10 {
            1e-6 * (t_end - t0)
        } else {
            0.01 * d0 / d1
        };
        guess.min(0.1 * (t_end - t0)).max(f64::MIN_POSITIVE)
    };

    while t < t_end {
        h = h.min(t_end - t);
        if h <= f64::EPSILON * 16.0 * t.abs().max(1.0) {
            return Err(DynamicsError::StepUnderflow(t));
        }

        let (y_new, k_all) = match dopri_step(&f, t, y, k1, h) {
            Ok(v) => v,
            Err(e) => {
                // A stage left the admissible region; retry smaller.
                h *= 0.25;
                if h <= f64::EPSILON * 16.0 * t.abs().max(1.0) {
                    return Err(e);
                }
                continue;
            }
        };

        let mut err_acc = 0.0;
        for j in 0..2 {
            let e_j: f64 = (0..7).map(|i| E[i] * k_all[i][j]).sum::<f64>() * h;
            let sk = atol + rtol * y[j].abs().max(y_new[j].abs());
            err_acc += (e_j / sk) * (e_j / sk);
        }
        let err = (0.5 * err_acc).sqrt();

        if err <= 1.0 {
            // Dense-output coefficients for this accepted interval.
            let mut rcont = [[0.0; 2]; 5];
            for j in 0..2 {
                let ydiff = y_new[j] - y[j];
                let bspl = h * k_all[0][j] - ydiff;
                rcont[0][j] = y[j];
                rcont[1][j] = ydiff;
                rcont[2][j] = bspl;
                rcont[3][j] = ydiff - h * k_all[6][j] - bspl;
                rcont[4][j] = h * (0..7).map(|i| D[i] * k_all[i][j]).sum::<f64>();
            }
            let t_new = t + h;
            while next < grid.len() && grid[next] <= t_new + 1e-14 * t_new.abs() {
                let theta = ((grid[next] - t) / h).clamp(0.0, 1.0);
                out.push(dense_eval(&rcont, theta));
                next += 1;
            }
            t = t_new;
            y = y_new;
            k1 = k_all[6]; // FSAL
            let fac = (0.9 * (1.0 / err).powf(0.2)).min(10.0).max(0.2);
            h *= fac;
        } else {
            let fac = (0.9 * (1.0 / err).powf(0.2)).min(1.0).max(0.2);
            h *= fac;
        }
    }
    while next < grid.len() {
        out.push(y);
        next += 1;
    }
    Ok(out)
}

fn dense_eval(rcont: &[[f64; 2]; 5], theta: f64) -> State {
    let th1 = 1.0 - theta;
    let mut y = [0.0; 2];
    for j in 0..2 {
        y[j] = rcont[0][j]
            + theta
                * (rcont[1][j] + th1 * (rcont[2][j] + theta * (rcont[3][j] + th1 * rcont[4][j])));
    }
    y
}

fn scaled_norm(v: State, atol: f64, rtol: f64, scale: &State) -> f64 {
    let mut acc = 0.0;
    for j in 0..2 {
        let sk = atol + rtol * scale[j].abs();
        let x = v[j] / sk;
        acc += x * x;
    }
    (0.5 * acc).sqrt()
}

#[allow(clippy::type_complexity)]
fn dopri_step<F>(
    f: &F,
    t: f64,
    y: State,
    k1: State,
    h: f64,
) -> Result<(State, [State; 7]), DynamicsError>
where
    F: Fn(f64, State) -> Result<State, DynamicsError>,
{
    let add = |ks: &[State], ws: &[f64]| -> State {
        let mut out = y;
        for (k, w) in ks.iter().zip(ws) {
            out[0] += h * w * k[0];
            out[1] += h * w * k[1];
        }
        out
    };
    let k2 = f(t + C[1] * h, add(&[k1], &A2))?;
    let k3 = f(t + C[2] * h, add(&[k1, k2], &A3))?;
    let k4 = f(t + C[3] * h, add(&[k1, k2, k3], &A4))?;
    let k5 = f(t + C[4] * h, add(&[k1, k2, k3, k4], &A5))?;
    let k6 = f(t + C[5] * h, add(&[k1, k2, k3, k4, k5], &A6))?;
    let y_new = add(&[k1, k2, k3, k4, k5, k6], &B);
    let k7 = f(t + h, y_new)?;
    Ok((y_new, [k1, k2, k3, k4, k5, k6, k7]))
}
