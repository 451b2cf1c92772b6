//! Robust data-driven H2 controller synthesis: LMI assembly, bisection on
//! the performance level, controller recovery and weight design.

mod assemble;
mod structure;
mod weights;

pub use assemble::{
    add_performance, add_stability_lmi, add_structural_zeros, assemble_h2_lmis,
    declare_stability_vars, SynthVars, SynthesisSpec,
};
pub use structure::{structural_equalities, StructuralTarget, StructuralZero};
pub use weights::{build_weights, WeightScales, WeightSet};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::check_persistency;
use crate::grid::StateMap;
use crate::multiplier::MultiplierError;
use crate::sdp::{registry, SdpError, SdpSolution, SdpSolver, SolveStatus, SolverOptions};

#[derive(Error, Debug)]
pub enum SynthError {
    #[error("synthesis infeasible up to gamma = {gamma_cap}")]
    Infeasible { gamma_cap: f64 },
    #[error("dataset is not persistently exciting (rank {rank} of {required})")]
    Persistency { rank: usize, required: usize },
    #[error("slack matrix numerically singular (min σ {min_sv:.3e}, max σ {max_sv:.3e})")]
    NearSingularSlack { min_sv: f64, max_sv: f64 },
    #[error("controller recovery residual {residual:.3e} exceeds bound {bound:.3e}")]
    RecoveryResidual { residual: f64, bound: f64 },
    #[error("weight construction: {0}")]
    Weights(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Multiplier(#[from] MultiplierError),
}

/// Multiplier weights and matrix certificates extracted from the solver.
#[derive(Clone, Debug)]
pub struct Certificates {
    pub lyap: DMatrix<f64>,
    pub slack: DMatrix<f64>,
    pub gain_param: DMatrix<f64>,
    pub perf: DMatrix<f64>,
    pub tau_d: Option<f64>,
    pub tau_pr: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct SynthDiagnostics {
    pub solves: usize,
    pub infeasible_solves: usize,
    pub failed_solves: usize,
    pub total_solve_time: f64,
    pub solver: String,
}

#[derive(Clone, Debug)]
pub struct SynthesisResult {
    /// Recovered state-feedback gain.
    pub gain: DMatrix<f64>,
    /// Smallest certified performance level found.
    pub gamma: f64,
    pub certificates: Certificates,
    pub diagnostics: SynthDiagnostics,
}

impl SynthesisResult {
    /// Largest gain magnitude on entries a topology forbids; `None` without
    /// structural constraints.
    pub fn max_forbidden_gain(&self, topology: &crate::topo::CommTopology) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..topology.n_agents() {
            for j in 0..topology.n_agents() {
                if i == j || topology.link(i, j) {
                    continue;
                }
                for (r, c) in topology.gain_block(i, j) {
                    worst = worst.max(self.gain[(r, c)].abs());
                }
            }
        }
        worst
    }
}

/// Recovers `K = Y·G⁻¹`, guarding against ill-conditioned slack matrices.
pub fn recover_controller(
    gain_param: &DMatrix<f64>,
    slack: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SynthError> {
    let svd = slack.clone().svd(false, false);
    let max_sv = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let min_sv = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_sv > 1e-9 * max_sv) || max_sv == 0.0 {
        return Err(SynthError::NearSingularSlack { min_sv, max_sv });
    }
    // K·G = Y  ⇔  Gᵀ·Kᵀ = Yᵀ
    let k_t = slack
        .transpose()
        .lu()
        .solve(&gain_param.transpose())
        .ok_or(SynthError::NearSingularSlack { min_sv, max_sv })?;
    let k = k_t.transpose();
    let residual = (gain_param - &k * slack).norm();
    let bound = 1e-8 * gain_param.norm().max(1e-300);
    if residual > bound && gain_param.norm() > 0.0 {
        return Err(SynthError::RecoveryResidual { residual, bound });
    }
    Ok(k)
}

/// Disturbance input for the fully data-driven mode: identity restricted to
/// the frequency rows, one column per inertia bus.
pub fn frequency_rows_bd(map: &StateMap) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(map.n(), map.n_inertia);
    for bus in 0..map.n_inertia {
        b[(map.omega_index(bus), bus)] = 1.0;
    }
    b
}

#[derive(Clone, Debug)]
pub struct BisectOptions {
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    /// Relative bracket width at which bisection stops.
    pub tol_rel: f64,
    pub max_iter: usize,
    /// Upper-bracket doubling stops here; still infeasible means failure.
    pub gamma_cap: f64,
    /// Seed for the perturbed retries on numerical failures.
    pub retry_seed: u64,
    pub solver: SolverOptions,
}

impl Default for BisectOptions {
    fn default() -> Self {
        BisectOptions {
            gamma_lo: 0.0,
            gamma_hi: 1e3,
            tol_rel: 1e-2,
            max_iter: 40,
            gamma_cap: 1e6,
            retry_seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

/// Finds the smallest `γ` (within relative tolerance) for which the
/// synthesis program is feasible and returns the controller at that level.
///
/// Numerical failures retry the candidate perturbed by `±u·width`,
/// `u ~ U[0, 0.1]`, up to three times before the level is classified
/// infeasible. A feasible solve also certifies `γ = √trace(Gamma)` for its
/// own solution, which tightens the upper bracket faster than halving.
pub fn bisect_gamma(
    spec: &SynthesisSpec,
    opts: &BisectOptions,
) -> Result<SynthesisResult, SynthError> {
    let report = check_persistency(spec.dataset);
    if !report.pass {
        return Err(SynthError::Persistency { rank: report.rank, required: report.required });
    }
    let solver = registry::default_solver();
    bisect_gamma_with(spec, opts, solver.as_ref())
}

pub fn bisect_gamma_with(
    spec: &SynthesisSpec,
    opts: &BisectOptions,
    solver: &dyn SdpSolver,
) -> Result<SynthesisResult, SynthError> {
    let mut diag = SynthDiagnostics { solver: solver.name().to_string(), ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.retry_seed);

    let mut lo = opts.gamma_lo.max(0.0);
    let mut hi = if opts.gamma_hi > lo { opts.gamma_hi } else { (lo * 2.0).max(1.0) };

    // Verification solve at the lower bracket: if it is already feasible
    // the search is over.
    if lo > 0.0 {
        if let Some(sol) = try_level(spec, lo, lo, hi, solver, opts, &mut diag, &mut rng)? {
            let gamma = certified_gamma(&sol).unwrap_or(lo).min(lo);
            return finish(spec, gamma, sol, diag);
        }
    }

    // Establish a feasible upper bracket, doubling up to the cap.
    let mut best: (f64, SdpSolution) = loop {
        if let Some(sol) = try_level(spec, hi, lo, hi, solver, opts, &mut diag, &mut rng)? {
            if let Some(g) = certified_gamma(&sol) {
                if g < hi {
                    hi = g.max(lo * (1.0 + opts.tol_rel * 0.1)).max(f64::MIN_POSITIVE);
                }
            }
            break (hi, sol);
        }
        lo = hi;
        hi *= 2.0;
        if hi > opts.gamma_cap {
            return Err(SynthError::Infeasible { gamma_cap: opts.gamma_cap });
        }
    };

    for _ in 0..opts.max_iter {
        if hi - lo <= opts.tol_rel * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match try_level(spec, mid, lo, hi, solver, opts, &mut diag, &mut rng)? {
            Some(sol) => {
                let mut new_hi = mid;
                if let Some(g) = certified_gamma(&sol) {
                    if g < new_hi {
                        new_hi = g;
                    }
                }
                hi = new_hi.max(lo);
                best = (hi, sol);
            }
            None => lo = mid,
        }
    }

    let (gamma, sol) = best;
    finish(spec, gamma, sol, diag)
}

/// γ certified by a solution's own trace value.
fn certified_gamma(sol: &SdpSolution) -> Option<f64> {
    sol.objective_value.filter(|t| t.is_finite() && *t >= 0.0).map(f64::sqrt)
}

#[allow(clippy::too_many_arguments)]
fn try_level(
    spec: &SynthesisSpec,
    gamma: f64,
    lo: f64,
    hi: f64,
    solver: &dyn SdpSolver,
    opts: &BisectOptions,
    diag: &mut SynthDiagnostics,
    rng: &mut ChaCha8Rng,
) -> Result<Option<SdpSolution>, SynthError> {
    let width = (hi - lo).max(1e-12 * hi.max(1.0));
    let mut candidate = gamma;
    for attempt in 0..4 {
        let (pb, _) = assemble_h2_lmis(spec, candidate)?;
        let sol = solver.solve(&pb, &opts.solver)?;
        diag.solves += 1;
        diag.total_solve_time += sol.solve_time;
        match sol.status {
            SolveStatus::Optimal => return Ok(Some(sol)),
            SolveStatus::Infeasible => {
                diag.infeasible_solves += 1;
                return Ok(None);
            }
            SolveStatus::NumericalFailure => {
                diag.failed_solves += 1;
                if attempt == 3 {
                    // After three perturbed retries the level counts as
                    // infeasible rather than aborting the search.
                    return Ok(None);
                }
                let u: f64 = rng.gen_range(0.0..0.1);
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                candidate = (gamma + sign * u * width).clamp(
                    lo + 1e-9 * width,
                    (hi - 1e-9 * width).max(lo + 2e-9 * width),
                );
            }
        }
    }
    unreachable!()
}

fn finish(
    spec: &SynthesisSpec,
    gamma: f64,
    sol: SdpSolution,
    diagnostics: SynthDiagnostics,
) -> Result<SynthesisResult, SynthError> {
    let slack = sol.matrix("G").clone();
    let gain_param = sol.matrix("Y").clone();
    let gain = recover_controller(&gain_param, &slack)?;
    let certificates = Certificates {
        lyap: sol.matrix("P").clone(),
        slack,
        gain_param,
        perf: sol.matrix("Gamma").clone(),
        tau_d: spec.multiplier.learned.as_ref().map(|_| sol.scalar("tau_d")),
        tau_pr: spec.multiplier.prior.as_ref().map(|_| sol.scalar("tau_pr")),
    };
    Ok(SynthesisResult { gain, gamma, certificates, diagnostics })
}

/// Flat, serializable form of a synthesis result for the CLI.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisResultFile {
    pub gain_rows: usize,
    pub gain_cols: usize,
    /// Row-major gain entries.
    pub gain: Vec<f64>,
    pub gamma: f64,
    pub tau_d: Option<f64>,
    pub tau_pr: Option<f64>,
    pub solves: usize,
    pub total_solve_time: f64,
    pub solver: String,
}

impl SynthesisResultFile {
    pub fn from_result(r: &SynthesisResult) -> Self {
        SynthesisResultFile {
            gain_rows: r.gain.nrows(),
            gain_cols: r.gain.ncols(),
            gain: r.gain.transpose().as_slice().to_vec(),
            gamma: r.gamma,
            tau_d: r.certificates.tau_d,
            tau_pr: r.certificates.tau_pr,
            solves: r.diagnostics.solves,
            total_solve_time: r.diagnostics.total_solve_time,
            solver: r.diagnostics.solver.clone(),
        }
    }

    pub fn gain_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.gain_rows, self.gain_cols, &self.gain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovery_is_exact_for_identity_slack() {
        let y = DMatrix::from_row_slice(1, 2, &[0.5, -1.0]);
        let g = DMatrix::identity(2, 2);
        let k = recover_controller(&y, &g).unwrap();
        assert!((k - y).amax() < 1e-15);
    }

    #[test]
    fn recovery_inverts_constructed_product() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = 4;
            let g = DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    2.0 + rng.gen_range(0.0..1.0)
                } else {
                    rng.gen_range(-0.3..0.3)
                }
            });
            let k0 = DMatrix::from_fn(2, n, |_, _| rng.gen_range(-1.0..1.0));
            let y = &k0 * &g;
            let k = recover_controller(&y, &g).unwrap();
            assert!((k - k0).amax() < 1e-10);
        }
    }

    #[test]
    fn singular_slack_is_reported() {
        let y = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            recover_controller(&y, &g),
            Err(SynthError::NearSingularSlack { .. })
        ));
    }

    /// Structured parameterization: block-triangular (Y, G) from a 2-agent
    /// topology keeps the recovered gain block-triangular, because the
    /// inverse of a block-triangular slack stays block-triangular.
    #[test]
    fn structured_parameterization_keeps_gain_block() {
        let g = DMatrix::from_row_slice(
            4,
            4,
            &[
                2.0, 0.3, 0.0, 0.0, //
                -0.2, 1.8, 0.0, 0.0, //
                0.4, -0.1, 2.2, 0.2, //
                0.1, 0.3, -0.3, 1.9,
            ],
        );
        let y = DMatrix::from_row_slice(
            2,
            4,
            &[
                0.5, -0.2, 0.0, 0.0, //
                0.3, 0.1, -0.4, 0.2,
            ],
        );
        let k = recover_controller(&y, &g).unwrap();
        // Agent 0 (input 0, states 0..2) must not read agent 1's states 2..4.
        assert!(k[(0, 2)].abs() < 1e-12);
        assert!(k[(0, 3)].abs() < 1e-12);
    }

    #[test]
    fn frequency_rows_target_omega_states() {
        let map = StateMap { n_inertia: 2, ibr_buses: vec![1], sg_buses: vec![0] };
        let b = frequency_rows_bd(&map);
        assert_eq!(b.nrows(), map.n());
        assert_eq!(b[(map.omega_index(0), 0)], 1.0);
        assert_eq!(b[(map.omega_index(1), 1)], 1.0);
        assert_eq!(b.iter().map(|v| v.abs()).sum::<f64>(), 2.0);
    }
}
