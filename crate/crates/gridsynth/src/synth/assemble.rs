//! Assembly of the robust H2 synthesis program.
//!
//! Variables: certificate matrix `Gamma`, Lyapunov-like matrix `P`, slack
//! `G`, gain parameterization `Y` (the controller is `K = Y·G⁻¹`) and the
//! nonnegative multiplier weights. Constraints:
//!
//! * trace bound `trace(Gamma) ≤ γ²`,
//! * performance block `[[Gamma, C_e·G + D_eu·Y], [*, G + Gᵀ − P]] ≻ 0`,
//! * robust stability block `≺ 0` combining the disturbance Gramian term
//!   `B_d·B_dᵀ − P`, the permuted multiplier, and the `[G; Y]` coupling,
//! * `P, Gamma ≻ 0`, with strictness realized as shifted cones.
//!
//! Fixing a topology adds linear equalities zeroing entries of `Y` and `G`.

use nalgebra::DMatrix;

use super::structure::{structural_equalities, StructuralTarget, StructuralZero};
use super::{SynthError, WeightSet};
use crate::data::DataSet;
use crate::multiplier::{permute_to_residual_first, MultiplierTemplate};
use crate::sdp::{LinExpr, LmiSense, MatExpr, SdpProblem, VarId};
use crate::topo::CommTopology;

/// Everything the synthesis stage needs to assemble its program.
pub struct SynthesisSpec<'a> {
    pub dataset: &'a DataSet,
    pub multiplier: &'a MultiplierTemplate,
    pub weights: &'a WeightSet,
    pub sparsity: Option<&'a CommTopology>,
    /// Disturbance input matrix used in the Gramian term.
    pub b_d: DMatrix<f64>,
    /// Margin realizing strict inequalities as shifted cones.
    pub eps: f64,
}

/// Handles to the declared decision variables.
#[derive(Clone, Copy, Debug)]
pub struct SynthVars {
    pub perf: Option<VarId>,
    pub lyap: VarId,
    pub slack: VarId,
    pub gain: VarId,
    pub tau_d: Option<VarId>,
    pub tau_pr: Option<VarId>,
}

/// Declares `P`, `G`, `Y` and the multiplier weights.
pub fn declare_stability_vars(
    pb: &mut SdpProblem,
    n: usize,
    m: usize,
    mult: &MultiplierTemplate,
) -> Result<SynthVars, SynthError> {
    let lyap = pb.sym_var("P", n)?;
    let slack = pb.mat_var("G", n, n)?;
    let gain = pb.mat_var("Y", m, n)?;
    let tau_d = match &mult.learned {
        Some(_) => Some(pb.scalar_var("tau_d", true)?),
        None => None,
    };
    let tau_pr = match &mult.prior {
        Some(_) => Some(pb.scalar_var("tau_pr", true)?),
        None => None,
    };
    Ok(SynthVars { perf: None, lyap, slack, gain, tau_d, tau_pr })
}

/// Adds the robust stability LMI (`≺ -eps·I`) and `P ⪰ eps·I`.
///
/// Block layout over `(w, z, slack)` with `z = (x, u)`:
/// rows `0..n` carry `B_d·B_dᵀ - P` plus the residual block of the permuted
/// multiplier, rows `n..2n+m` the regressor block, rows `2n+m..3n+m` the
/// slack coupling `-(G + Gᵀ - P)` tied through `[G; Y]`.
pub fn add_stability_lmi(
    pb: &mut SdpProblem,
    vars: &SynthVars,
    mult: &MultiplierTemplate,
    b_d: &DMatrix<f64>,
    eps: f64,
) -> Result<(), SynthError> {
    let n = mult.n;
    let m = mult.m;
    if b_d.nrows() != n {
        return Err(SynthError::Dimension(format!(
            "disturbance input has {} rows for {n} states",
            b_d.nrows()
        )));
    }
    let ns = 3 * n + m;
    let mut block = MatExpr::zeros(ns);

    block.add_const(0, 0, &(b_d * b_d.transpose()));
    block.add_var(pb, 0, 0, vars.lyap, -1.0, false);

    if let (Some(base), Some(tau)) = (&mult.learned, vars.tau_d) {
        block.add_scalar_times(pb, 0, 0, tau, &permute_to_residual_first(base, n, m));
    }
    if let (Some(base), Some(tau)) = (&mult.prior, vars.tau_pr) {
        block.add_scalar_times(pb, 0, 0, tau, &permute_to_residual_first(base, n, m));
    }

    // Coupling column [G; Y] and its transpose row.
    block.add_var(pb, n, 2 * n + m, vars.slack, 1.0, false);
    block.add_var(pb, 2 * n, 2 * n + m, vars.gain, 1.0, false);
    block.add_var(pb, 2 * n + m, n, vars.slack, 1.0, true);
    block.add_var(pb, 2 * n + m, 2 * n, vars.gain, 1.0, true);

    // -(G + Gᵀ - P) in the trailing diagonal block.
    block.add_var(pb, 2 * n + m, 2 * n + m, vars.slack, -1.0, false);
    block.add_var(pb, 2 * n + m, 2 * n + m, vars.slack, -1.0, true);
    block.add_var(pb, 2 * n + m, 2 * n + m, vars.lyap, 1.0, false);

    pb.add_lmi("stability", block, LmiSense::NegativeSemidefinite { shift: eps })?;

    let mut p_pos = MatExpr::zeros(n);
    p_pos.add_var(pb, 0, 0, vars.lyap, 1.0, false);
    pb.add_lmi("lyapunov_positive", p_pos, LmiSense::PositiveSemidefinite { shift: eps })?;
    Ok(())
}

/// Adds the certificate matrix, the performance LMI and the trace bound for
/// a fixed `γ`.
pub fn add_performance(
    pb: &mut SdpProblem,
    vars: &mut SynthVars,
    weights: &WeightSet,
    gamma: f64,
    eps: f64,
) -> Result<(), SynthError> {
    let p_e = weights.p_e();
    let n = weights.c_e.ncols();
    let perf = pb.sym_var("Gamma", p_e)?;
    vars.perf = Some(perf);

    let mut block = MatExpr::zeros(p_e + n);
    block.add_var(pb, 0, 0, perf, 1.0, false);
    block.add_product(pb, 0, p_e, 1.0, Some(&weights.c_e), vars.slack, false, None);
    block.add_product(pb, 0, p_e, 1.0, Some(&weights.d_eu), vars.gain, false, None);
    let c_e_t = weights.c_e.transpose();
    let d_eu_t = weights.d_eu.transpose();
    block.add_product(pb, p_e, 0, 1.0, None, vars.slack, true, Some(&c_e_t));
    block.add_product(pb, p_e, 0, 1.0, None, vars.gain, true, Some(&d_eu_t));
    block.add_var(pb, p_e, p_e, vars.slack, 1.0, false);
    block.add_var(pb, p_e, p_e, vars.slack, 1.0, true);
    block.add_var(pb, p_e, p_e, vars.lyap, -1.0, false);
    pb.add_lmi("performance", block, LmiSense::PositiveSemidefinite { shift: eps })?;

    let mut cert_pos = MatExpr::zeros(p_e);
    cert_pos.add_var(pb, 0, 0, perf, 1.0, false);
    pb.add_lmi("certificate_positive", cert_pos, LmiSense::PositiveSemidefinite { shift: eps })?;

    let mut bound = LinExpr::constant(gamma * gamma);
    bound.add(&pb.trace(perf).scaled(-1.0));
    pb.add_geq0("trace_bound", bound);
    Ok(())
}

/// Adds equality constraints zeroing entries of `Y`/`G`.
pub fn add_structural_zeros(pb: &mut SdpProblem, vars: &SynthVars, zeros: &[StructuralZero]) {
    for z in zeros {
        let var = match z.target {
            StructuralTarget::Gain => vars.gain,
            StructuralTarget::Slack => vars.slack,
        };
        let name = match z.target {
            StructuralTarget::Gain => format!("Y[{},{}]=0", z.row, z.col),
            StructuralTarget::Slack => format!("G[{},{}]=0", z.row, z.col),
        };
        pb.add_eq(&name, pb.entry(var, z.row, z.col));
    }
}

/// Assembles the full synthesis program at a fixed `γ`, minimizing
/// `trace(Gamma)` so a feasible solve also certifies the smallest `γ` its
/// own solution supports.
pub fn assemble_h2_lmis(
    spec: &SynthesisSpec,
    gamma: f64,
) -> Result<(SdpProblem, SynthVars), SynthError> {
    if gamma <= 0.0 {
        return Err(SynthError::Dimension(format!("gamma must be positive, got {gamma}")));
    }
    let n = spec.dataset.n();
    let m = spec.dataset.m();
    if spec.multiplier.n != n || spec.multiplier.m != m {
        return Err(SynthError::Dimension("multiplier built for a different system".into()));
    }
    if spec.weights.c_e.ncols() != n || spec.weights.d_eu.ncols() != m {
        return Err(SynthError::Dimension(format!(
            "weights sized for ({}, {}), dataset is ({n}, {m})",
            spec.weights.c_e.ncols(),
            spec.weights.d_eu.ncols()
        )));
    }

    let mut pb = SdpProblem::new();
    let mut vars = declare_stability_vars(&mut pb, n, m, spec.multiplier)?;
    add_stability_lmi(&mut pb, &vars, spec.multiplier, &spec.b_d, spec.eps)?;
    add_performance(&mut pb, &mut vars, spec.weights, gamma, spec.eps)?;
    if let Some(topology) = spec.sparsity {
        add_structural_zeros(&mut pb, &vars, &structural_equalities(topology));
    }
    if let Some(perf) = vars.perf {
        pb.set_objective(pb.trace(perf));
    }
    Ok((pb, vars))
}
