//! Dynamics of a bosonic Josephson junction (BJJ): two tunnel-coupled
//! Bose-Einstein condensates in a double-well potential.
//!
//! The crate evaluates the closed-form Jacobi-elliptic pendulum solutions of
//! the junction (symmetric, detuned and dissipative), cross-validates them
//! against direct numerical integration of the mean-field two-mode
//! Bose-Hubbard (TMBH) equations, and fits time series of the relative phase
//! and atom-number imbalance to extract physical parameters with full
//! covariance, correlation and propagated-error reporting.
//!
//! # Unit convention
//!
//! All energies are stored as angular frequencies `E/hbar` in rad/s and all
//! times in seconds. Reporting layers divide by 2*pi to print Hz values for
//! `J`, `U` and `epsilon`; the plasma frequency `omega0` is reported in rad/s
//! and decay times in ms.

pub mod dynamics_analytic;
pub mod dynamics_numeric;
pub mod elliptic;
pub mod estimation;
pub mod io;
pub mod param_map;

pub use dynamics_analytic::{PendulumParams, Regime};
pub use dynamics_numeric::{InitialState, TmbhParams, Trajectory, TrajectorySource};
pub use estimation::{DataSet, FitOptions, FitReport};
