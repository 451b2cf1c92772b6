//! Trajectory metrics and closed-loop performance evaluation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::grid::{model::spectral_radius, Trajectory};

/// Scalar summary of one experiment run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Metrics {
    /// Worst frequency deviation over buses and time (signed, p.u.).
    pub nadir: f64,
    /// Steps after controller activation until every bus is back within
    /// 10 % of the nadir magnitude; absent when nothing dipped below zero.
    pub recovery_steps: Option<usize>,
    /// Max |Δω| over the trailing window.
    pub steady_state_error: f64,
    /// Mean |Δω| over the trailing window (noise-floor criterion for
    /// stochastic runs).
    pub trailing_mean_abs: f64,
    /// Deviation beyond 10 % of the nadir magnitude on the side opposite
    /// the dip, after activation.
    pub overshoot: bool,
    pub closed_loop_h2_sq: Option<f64>,
    pub link_count: Option<usize>,
    pub objective: Option<f64>,
}

/// Computes metrics from the frequency block of a trajectory. Pure in the
/// trajectory contents, so the same numbers are recoverable from the CSV
/// emitted alongside.
pub fn compute_metrics(
    traj: &Trajectory,
    omega: std::ops::Range<usize>,
    activation_step: usize,
    trailing_window: usize,
) -> Metrics {
    let steps = traj.states.len();
    let mut nadir = 0.0f64;
    for x in &traj.states {
        for i in omega.clone() {
            nadir = nadir.min(x[i]);
        }
    }

    let band = 0.1 * nadir.abs();
    let mut recovery_steps = None;
    if nadir < 0.0 {
        for (k, x) in traj.states.iter().enumerate().skip(activation_step) {
            let worst = omega.clone().map(|i| x[i].abs()).fold(0.0f64, f64::max);
            if worst <= band {
                recovery_steps = Some(k - activation_step);
                break;
            }
        }
    }

    let tail = trailing_window.min(steps);
    let mut steady_state_error = 0.0f64;
    let mut trailing_sum = 0.0f64;
    let mut trailing_count = 0usize;
    for x in &traj.states[steps - tail..] {
        for i in omega.clone() {
            steady_state_error = steady_state_error.max(x[i].abs());
            trailing_sum += x[i].abs();
            trailing_count += 1;
        }
    }

    let mut overshoot = false;
    if nadir < 0.0 {
        for x in traj.states.iter().skip(activation_step) {
            for i in omega.clone() {
                if x[i] > band {
                    overshoot = true;
                }
            }
        }
    }

    Metrics {
        nadir,
        recovery_steps,
        steady_state_error,
        trailing_mean_abs: trailing_sum / trailing_count.max(1) as f64,
        overshoot,
        closed_loop_h2_sq: None,
        link_count: None,
        objective: None,
    }
}

/// Solves the discrete Lyapunov equation `A·P·Aᵀ − P + Q = 0` by doubling;
/// requires `ρ(A) < 1`.
pub fn dlyap(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, HarnessError> {
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(HarnessError::UnstableClosedLoop { rho });
    }
    let mut p = q.clone();
    let mut a_k = a.clone();
    for _ in 0..200 {
        let increment = &a_k * &p * a_k.transpose();
        let inc_norm = increment.amax();
        p += increment;
        a_k = &a_k * &a_k;
        if inc_norm <= 1e-300 || inc_norm <= f64::EPSILON * p.amax() {
            break;
        }
    }
    Ok(p)
}

/// Squared closed-loop H2 norm of `(A + B·K, B_d, C_e + D_eu·K)`:
/// `trace((C_e + D_eu·K)·P_c·(C_e + D_eu·K)ᵀ)` with `P_c` the disturbance
/// controllability Gramian.
pub fn compute_closed_loop_h2(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    b_d: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    c_e: &DMatrix<f64>,
    d_eu: &DMatrix<f64>,
) -> Result<f64, HarnessError> {
    let a_cl = a + b * gain;
    let p_c = dlyap(&a_cl, &(b_d * b_d.transpose()))?;
    let c_cl = c_e + d_eu * gain;
    Ok((&c_cl * p_c * c_cl.transpose()).trace())
}
