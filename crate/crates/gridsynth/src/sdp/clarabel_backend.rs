//! Clarabel interior-point backend.
//!
//! Maps the problem onto Clarabel's `min ½xᵀPx + qᵀx  s.t.  Ax + s = b,
//! s ∈ K` form: equalities into the zero cone, scalar inequalities and
//! nonnegative scalars into the nonnegative cone, each LMI block into a
//! scaled-triangle PSD cone (upper triangle, column-major, off-diagonal
//! entries scaled by √2).

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::solver::{SdpSolution, SdpSolver, SolveStatus, SolverOptions};
use super::{LinExpr, SdpError, SdpProblem, VarShape};

pub struct ClarabelSolver;

const SQRT2: f64 = std::f64::consts::SQRT_2;

impl SdpSolver for ClarabelSolver {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution, SdpError> {
        let n = problem.n_scalars();
        let mut rows: Vec<(LinExpr, f64)> = Vec::new(); // (row expr, scale); s_row = scale*expr
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        // Zero cone: equalities expr == 0  =>  s = expr ∈ {0}.
        let n_eq = problem
            .linear_constraints()
            .iter()
            .filter(|c| matches!(c.sense, super::LinSense::Eq))
            .count();
        if n_eq > 0 {
            for c in problem.linear_constraints() {
                if matches!(c.sense, super::LinSense::Eq) {
                    rows.push((c.expr.clone(), 1.0));
                }
            }
            cones.push(SupportedConeT::ZeroConeT(n_eq));
        }

        // Nonnegative cone: inequalities expr >= 0 and sign-constrained scalars.
        let mut n_pos = 0;
        for c in problem.linear_constraints() {
            if matches!(c.sense, super::LinSense::Geq) {
                rows.push((c.expr.clone(), 1.0));
                n_pos += 1;
            }
        }
        for (_, shape, offset) in problem.vars() {
            if matches!(shape, VarShape::Scalar { nonneg: true }) {
                rows.push((LinExpr::term(offset, 1.0), 1.0));
                n_pos += 1;
            }
        }
        if n_pos > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(n_pos));
        }

        // PSD cones: svec of each normalized block.
        for lmi in problem.lmis() {
            let d = lmi.dim;
            for j in 0..d {
                for i in 0..=j {
                    let scale = if i == j { 1.0 } else { SQRT2 };
                    rows.push((lmi.normalized_entry(i, j), scale));
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(d));
        }

        let m_rows = rows.len();
        // s = scale*expr  =>  A = -scale*coeffs, b = scale*const.
        let mut b = vec![0.0f64; m_rows];
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        for (r, (expr, scale)) in rows.iter().enumerate() {
            b[r] = expr.constant * scale;
            for &(col, coeff) in &expr.terms {
                triplets.push((r, col, -coeff * scale));
            }
        }
        let a = csc_from_triplets(m_rows, n, &mut triplets);

        let mut q = vec![0.0f64; n];
        for &(col, coeff) in &problem.objective().terms {
            q[col] += coeff;
        }
        let p = CscMatrix::zeros((n, n));

        let mut builder = DefaultSettingsBuilder::default();
        builder
            .verbose(options.verbose)
            .max_iter(options.max_iter)
            .tol_feas(options.accuracy)
            .tol_gap_abs(options.accuracy)
            .tol_gap_rel(options.accuracy);
        if let Some(t) = options.time_limit {
            builder.time_limit(t);
        }
        let settings = builder.build().map_err(|e| SdpError::Backend(e.to_string()))?;

        let start = Instant::now();
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| SdpError::Backend(format!("{e:?}")))?;
        solver.solve();
        let solve_time = start.elapsed().as_secs_f64();

        let backend_status = format!("{:?}", solver.solution.status);
        let status = map_status(solver.solution.status);
        let mut values = std::collections::BTreeMap::new();
        let mut objective_value = None;
        if status == SolveStatus::Optimal {
            let x = &solver.solution.x;
            for (idx, (name, _, _)) in problem.vars().enumerate() {
                values.insert(name.to_string(), problem.extract(idx, x));
            }
            objective_value = Some(problem.objective().eval(x));
        }

        Ok(SdpSolution {
            status,
            values,
            objective_value,
            backend_status,
            iterations: solver.solution.iterations,
            solve_time,
        })
    }
}

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        _ => SolveStatus::NumericalFailure,
    }
}

/// Builds a CSC matrix from unsorted triplets, summing duplicates.
fn csc_from_triplets(
    m_rows: usize,
    n_cols: usize,
    triplets: &mut Vec<(usize, usize, f64)>,
) -> CscMatrix<f64> {
    triplets.sort_by_key(|&(r, c, _)| (c, r));
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
    for &(r, c, v) in triplets.iter() {
        match merged.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += v,
            _ => merged.push((r, c, v)),
        }
    }
    let mut colptr = vec![0usize; n_cols + 1];
    for &(_, c, _) in &merged {
        colptr[c + 1] += 1;
    }
    for c in 0..n_cols {
        colptr[c + 1] += colptr[c];
    }
    let rowval = merged.iter().map(|t| t.0).collect();
    let nzval = merged.iter().map(|t| t.2).collect();
    CscMatrix::new(m_rows, n_cols, colptr, rowval, nzval)
}
