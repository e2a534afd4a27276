//! Levenberg-Marquardt minimizer over a fallible residual closure.
//!
//! Damping schedule: start at 1e-3, multiply by 10 on a rejected step and
//! divide by 10 on an accepted one, with a Marquardt diagonal scaling of
//! the normal matrix. The Jacobian is a forward finite difference with
//! relative step 1e-6. Non-finite residual entries are treated as an
//! infinite cost, so steps into invalid parameter regions are rejected
//! rather than propagated.

use nalgebra::{DMatrix, DVector};

pub(crate) struct LmOptions {
    pub max_iterations: usize,
    /// Converged when an accepted step decreases the cost by less than this
    /// fraction.
    pub cost_tolerance: f64,
    pub initial_damping: f64,
    /// Relative forward-difference step for the Jacobian.
    pub jacobian_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            cost_tolerance: 1e-10,
            initial_damping: 1e-3,
            jacobian_step: 1e-6,
        }
    }
}

pub(crate) struct LmResult {
    pub x: Vec<f64>,
    pub cost: f64,
    /// Residual Jacobian at the solution.
    pub jacobian: DMatrix<f64>,
    pub residuals: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when a singular normal matrix forced a pseudo-inverse solve.
    pub rank_warning: bool,
}

fn cost_of(r: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for v in r.iter() {
        if !v.is_finite() {
            return f64::INFINITY;
        }
        acc += v * v;
    }
    acc
}

pub(crate) fn jacobian<F>(f: &F, x: &[f64], r0: &DVector<f64>, rel_step: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = r0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = rel_step * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let rp = f(&xp);
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - r0[i]) / h;
        }
    }
    jac
}

pub(crate) fn lm_minimize<F>(f: &F, x0: &[f64], opts: &LmOptions) -> LmResult
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = x0.to_vec();
    let mut r = DVector::from_vec(f(&x));
    let mut cost = cost_of(&r);
    let mut mu = opts.initial_damping;
    let mut converged = false;
    let mut rank_warning = false;
    let mut iterations = 0;

    if cost.is_finite() {
        'outer: for iter in 1..=opts.max_iterations {
            iterations = iter;
            let jac = jacobian(f, &x, &r, opts.jacobian_step);
            let grad = jac.transpose() * &r;
            let hess = jac.transpose() * &jac;

            loop {
                let mut damped = hess.clone();
                for i in 0..damped.nrows() {
                    let d = hess[(i, i)].max(1e-30);
                    damped[(i, i)] = hess[(i, i)] + mu * d;
                }
                let step = match damped.clone().cholesky() {
                    Some(ch) => ch.solve(&(-&grad)),
                    None => {
                        rank_warning = true;
                        match damped.svd(true, true).solve(&(-&grad), 1e-14) {
                            Ok(s) => s,
                            Err(_) => break 'outer,
                        }
                    }
                };
                let x_new: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
                let r_new = DVector::from_vec(f(&x_new));
                let cost_new = cost_of(&r_new);
                if cost_new <= cost {
                    let decrease = cost - cost_new;
                    x = x_new;
                    r = r_new;
                    let prev = cost;
                    cost = cost_new;
                    mu = (mu / 10.0).max(1e-14);
                    if decrease <= opts.cost_tolerance * prev.max(f64::MIN_POSITIVE) {
                        converged = true;
                    }
                    break;
                }
                mu *= 10.0;
                if mu > 1e14 {
                    // No descent direction left at working precision.
                    converged = true;
                    break 'outer;
                }
            }
            if converged {
                break;
            }
        }
    }

    let jac = jacobian(f, &x, &r, opts.jacobian_step);
    LmResult {
        x,
        cost,
        jacobian: jac,
        residuals: r,
        iterations,
        converged,
        rank_warning,
    }
}
