//! Post-solve verification: substitutes a solution back into every
//! constraint and reports residuals.

use nalgebra::{DMatrix, SymmetricEigen};

use super::solver::{SdpSolution, SolveStatus, Value};
use super::{LinSense, SdpError, SdpProblem, VarShape};

/// Residual of one LMI block, in the normalized `S(x) ⪰ 0` form.
#[derive(Clone, Debug)]
pub struct LmiResidual {
    pub name: String,
    pub min_eigenvalue: f64,
    pub violated: bool,
}

#[derive(Clone, Debug)]
pub struct ConstraintReport {
    pub lmi: Vec<LmiResidual>,
    /// Worst |expr| across equality constraints.
    pub max_eq_violation: f64,
    /// Worst max(0, -expr) across inequality constraints and nonnegative scalars.
    pub max_ineq_violation: f64,
    pub feas_tol: f64,
}

impl ConstraintReport {
    pub fn is_feasible(&self) -> bool {
        self.max_eq_violation <= self.feas_tol
            && self.max_ineq_violation <= self.feas_tol
            && self.lmi.iter().all(|l| !l.violated)
    }

    /// Largest violation across all constraint families.
    pub fn worst_violation(&self) -> f64 {
        let lmi_worst = self
            .lmi
            .iter()
            .map(|l| (-l.min_eigenvalue).max(0.0))
            .fold(0.0f64, f64::max);
        lmi_worst.max(self.max_eq_violation).max(self.max_ineq_violation)
    }
}

/// Re-substitutes `solution` into `problem`. Requires optimal status.
pub fn check_solution(
    problem: &SdpProblem,
    solution: &SdpSolution,
    feas_tol: f64,
) -> Result<ConstraintReport, SdpError> {
    if solution.status != SolveStatus::Optimal {
        return Err(SdpError::NotOptimal);
    }
    let x = flatten(problem, solution)?;

    let mut lmi = Vec::with_capacity(problem.lmis().len());
    for block in problem.lmis() {
        let s = block.evaluate_normalized(&x);
        let min_eig = min_eigenvalue(&s);
        lmi.push(LmiResidual {
            name: block.name.clone(),
            min_eigenvalue: min_eig,
            violated: min_eig < -feas_tol,
        });
    }

    let mut max_eq: f64 = 0.0;
    let mut max_ineq: f64 = 0.0;
    for c in problem.linear_constraints() {
        let v = c.expr.eval(&x);
        match c.sense {
            LinSense::Eq => max_eq = max_eq.max(v.abs()),
            LinSense::Geq => max_ineq = max_ineq.max(-v),
        }
    }
    for (name, shape, _) in problem.vars() {
        if matches!(shape, VarShape::Scalar { nonneg: true }) {
            let v = solution
                .value(name)
                .ok_or_else(|| SdpError::Backend(format!("missing value for `{name}`")))?
                .as_scalar();
            max_ineq = max_ineq.max(-v);
        }
    }

    Ok(ConstraintReport {
        lmi,
        max_eq_violation: max_eq,
        max_ineq_violation: max_ineq.max(0.0),
        feas_tol,
    })
}

/// Rebuilds the flat decision vector from named values.
fn flatten(problem: &SdpProblem, solution: &SdpSolution) -> Result<Vec<f64>, SdpError> {
    let mut x = vec![0.0f64; problem.n_scalars()];
    for (name, shape, offset) in problem.vars() {
        let value = solution
            .value(name)
            .ok_or_else(|| SdpError::Backend(format!("missing value for `{name}`")))?;
        match (shape, value) {
            (VarShape::Scalar { .. }, Value::Scalar(s)) => x[offset] = *s,
            (VarShape::Rect(r, c), Value::Matrix(m)) => {
                if m.nrows() != *r || m.ncols() != *c {
                    return Err(SdpError::Dimension(format!(
                        "value for `{name}` is {}x{}, declared {r}x{c}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                for i in 0..*r {
                    for j in 0..*c {
                        x[offset + i * c + j] = m[(i, j)];
                    }
                }
            }
            (VarShape::Symmetric(d), Value::Matrix(m)) => {
                if m.nrows() != *d || m.ncols() != *d {
                    return Err(SdpError::Dimension(format!(
                        "value for `{name}` is {}x{}, declared {d}x{d}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                for j in 0..*d {
                    for i in 0..=j {
                        x[offset + j * (j + 1) / 2 + i] = 0.5 * (m[(i, j)] + m[(j, i)]);
                    }
                }
            }
            _ => {
                return Err(SdpError::Dimension(format!(
                    "value kind for `{name}` does not match its declaration"
                )))
            }
        }
    }
    Ok(x)
}

/// Smallest eigenvalue of the symmetric part of `s`.
pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    let sym = 0.5 * (s + s.transpose());
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
