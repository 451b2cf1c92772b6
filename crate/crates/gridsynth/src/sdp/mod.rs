//! Solver-agnostic semidefinite programming layer.
//!
//! A [`SdpProblem`] holds named matrix/scalar decision variables, affine LMI
//! blocks, scalar linear constraints and a linear objective. Backends
//! implementing [`solver::SdpSolver`] translate the problem into their native
//! form; the built-in backend wraps the Clarabel interior-point solver.
//! Strict matrix inequalities are encoded as shifted semidefinite cones
//! (`⪰ shift·I` / `⪯ -shift·I`).

mod check;
mod clarabel_backend;
pub mod solver;

pub use check::{check_solution, min_eigenvalue, ConstraintReport, LmiResidual};

pub use solver::{registry, SdpSolution, SdpSolver, SolveStatus, SolverOptions, Value};

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

/// Maximum tolerated asymmetry in an LMI block before assembly is rejected.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Error, Debug)]
pub enum SdpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("LMI block `{name}` is asymmetric (max asymmetry {max_asym:.3e})")]
    Asymmetric { name: String, max_asym: f64 },
    #[error("unknown solver `{0}` (registered: {1})")]
    UnknownSolver(String, String),
    #[error("solver backend error: {0}")]
    Backend(String),
    #[error("solution does not carry optimal status")]
    NotOptimal,
}

/// Handle to a declared decision variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct VarId(usize);

/// Shape of a decision variable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum VarShape {
    /// Square symmetric matrix; only the upper triangle is stored.
    Symmetric(usize),
    /// General rectangular matrix, row-major storage.
    Rect(usize, usize),
    /// Single scalar, optionally constrained nonnegative.
    Scalar { nonneg: bool },
}

impl VarShape {
    fn scalar_count(&self) -> usize {
        match *self {
            VarShape::Symmetric(d) => d * (d + 1) / 2,
            VarShape::Rect(r, c) => r * c,
            VarShape::Scalar { .. } => 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
struct VarDecl {
    name: String,
    shape: VarShape,
    offset: usize,
}

/// Sparse affine form `constant + Σ coeff·x[idx]` over the flattened
/// decision vector. Terms are kept sorted by index with no duplicates.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr { constant: c, terms: Vec::new() }
    }

    pub fn term(idx: usize, coeff: f64) -> Self {
        LinExpr { constant: 0.0, terms: vec![(idx, coeff)] }
    }

    pub fn push(&mut self, idx: usize, coeff: f64) {
        if coeff != 0.0 {
            self.terms.push((idx, coeff));
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.constant *= s;
        for t in &mut self.terms {
            t.1 *= s;
        }
        self
    }

    pub fn add(&mut self, other: &LinExpr) {
        self.constant += other.constant;
        self.terms.extend_from_slice(&other.terms);
        self.canonicalize();
    }

    /// Sorts terms by index and merges duplicates, dropping exact zeros.
    pub fn canonicalize(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    fn max_abs(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.1.abs())
            .fold(self.constant.abs(), f64::max)
    }
}

/// Sense of an LMI block relative to the shifted identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum LmiSense {
    /// Expression ⪰ shift·I.
    PositiveSemidefinite { shift: f64 },
    /// Expression ⪯ -shift·I.
    NegativeSemidefinite { shift: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct LmiConstraint {
    pub name: String,
    pub dim: usize,
    pub sense: LmiSense,
    /// Row-major affine entries, symmetrized at insertion.
    entries: Vec<LinExpr>,
}

impl LmiConstraint {
    /// Entries of the normalized form `S(x) ⪰ 0` (shift folded in, sense
    /// flipped for NSD blocks).
    pub fn normalized_entry(&self, r: usize, c: usize) -> LinExpr {
        let e = &self.entries[r * self.dim + c];
        match self.sense {
            LmiSense::PositiveSemidefinite { shift } => {
                let mut out = e.clone();
                if r == c {
                    out.constant -= shift;
                }
                out
            }
            LmiSense::NegativeSemidefinite { shift } => {
                let mut out = e.clone().scaled(-1.0);
                if r == c {
                    out.constant -= shift;
                }
                out
            }
        }
    }

    /// Evaluates the normalized PSD form at a flattened decision vector.
    pub fn evaluate_normalized(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| self.normalized_entry(r, c).eval(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum LinSense {
    /// expr = 0
    Eq,
    /// expr ≥ 0
    Geq,
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearConstraint {
    pub name: String,
    pub sense: LinSense,
    pub expr: LinExpr,
}

/// A conic program with matrix variables, LMI blocks, scalar linear
/// constraints and a linear objective (minimized).
///
/// Problems are immutable once handed to a solver; assembly is cheap and
/// deterministic (variable ordering follows declaration order), so the same
/// inputs always serialize to the identical canonical form.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SdpProblem {
    vars: Vec<VarDecl>,
    lmis: Vec<LmiConstraint>,
    linear: Vec<LinearConstraint>,
    objective: LinExpr,
    n_scalars: usize,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    fn declare(&mut self, name: &str, shape: VarShape) -> Result<VarId, SdpError> {
        if self.vars.iter().any(|v| v.name == name) {
            return Err(SdpError::DuplicateVariable(name.to_string()));
        }
        let decl = VarDecl { name: name.to_string(), shape, offset: self.n_scalars };
        self.n_scalars += decl.shape.scalar_count();
        self.vars.push(decl);
        Ok(VarId(self.vars.len() - 1))
    }

    /// Declares a symmetric `dim × dim` matrix variable.
    pub fn sym_var(&mut self, name: &str, dim: usize) -> Result<VarId, SdpError> {
        self.declare(name, VarShape::Symmetric(dim))
    }

    /// Declares a general `rows × cols` matrix variable.
    pub fn mat_var(&mut self, name: &str, rows: usize, cols: usize) -> Result<VarId, SdpError> {
        self.declare(name, VarShape::Rect(rows, cols))
    }

    /// Declares a scalar variable; `nonneg` adds the sign constraint.
    pub fn scalar_var(&mut self, name: &str, nonneg: bool) -> Result<VarId, SdpError> {
        self.declare(name, VarShape::Scalar { nonneg })
    }

    pub fn n_scalars(&self) -> usize {
        self.n_scalars
    }

    pub fn var_name(&self, id: VarId) -> &str {
        &self.vars[id.0].name
    }

    pub fn var_shape(&self, id: VarId) -> &VarShape {
        &self.vars[id.0].shape
    }

    pub fn var_names(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|v| v.name.as_str())
    }

    pub(crate) fn vars(&self) -> impl Iterator<Item = (&str, &VarShape, usize)> {
        self.vars.iter().map(|v| (v.name.as_str(), &v.shape, v.offset))
    }

    pub fn lmis(&self) -> &[LmiConstraint] {
        &self.lmis
    }

    pub fn linear_constraints(&self) -> &[LinearConstraint] {
        &self.linear
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    /// Flattened index of entry `(i, j)` of a matrix variable.
    pub fn scalar_index(&self, id: VarId, i: usize, j: usize) -> usize {
        let d = &self.vars[id.0];
        match d.shape {
            VarShape::Symmetric(dim) => {
                assert!(i < dim && j < dim, "entry ({i},{j}) outside {dim}x{dim} `{}`", d.name);
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                d.offset + hi * (hi + 1) / 2 + lo
            }
            VarShape::Rect(r, c) => {
                assert!(i < r && j < c, "entry ({i},{j}) outside {r}x{c} `{}`", d.name);
                d.offset + i * c + j
            }
            VarShape::Scalar { .. } => {
                assert!(i == 0 && j == 0);
                d.offset
            }
        }
    }

    /// Affine expression selecting a single variable entry.
    pub fn entry(&self, id: VarId, i: usize, j: usize) -> LinExpr {
        LinExpr::term(self.scalar_index(id, i, j), 1.0)
    }

    /// Affine expression for the trace of a square matrix variable.
    pub fn trace(&self, id: VarId) -> LinExpr {
        let dim = match *self.var_shape(id) {
            VarShape::Symmetric(d) => d,
            VarShape::Rect(r, c) if r == c => r,
            ref s => panic!("trace of non-square variable {s:?}"),
        };
        let mut e = LinExpr::default();
        for i in 0..dim {
            e.push(self.scalar_index(id, i, i), 1.0);
        }
        e.canonicalize();
        e
    }

    pub fn set_objective(&mut self, expr: LinExpr) {
        let mut e = expr;
        e.canonicalize();
        self.objective = e;
    }

    pub fn add_eq(&mut self, name: &str, expr: LinExpr) {
        let mut e = expr;
        e.canonicalize();
        self.linear.push(LinearConstraint { name: name.to_string(), sense: LinSense::Eq, expr: e });
    }

    pub fn add_geq0(&mut self, name: &str, expr: LinExpr) {
        let mut e = expr;
        e.canonicalize();
        self.linear.push(LinearConstraint { name: name.to_string(), sense: LinSense::Geq, expr: e });
    }

    /// Adds an LMI block. The expression is symmetrized as `(M + Mᵀ)/2`;
    /// asymmetry beyond [`SYMMETRY_TOL`] (relative to the largest
    /// coefficient) is rejected.
    pub fn add_lmi(&mut self, name: &str, expr: MatExpr, sense: LmiSense) -> Result<(), SdpError> {
        let dim = expr.dim;
        let mut entries = expr.entries;
        for e in &mut entries {
            e.canonicalize();
        }
        let mut max_asym: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for r in 0..dim {
            for c in (r + 1)..dim {
                let a = entries[r * dim + c].clone();
                let b = entries[c * dim + r].clone();
                scale = scale.max(a.max_abs()).max(b.max_abs());
                max_asym = max_asym.max(asymmetry(&a, &b));
                let mut avg = a;
                avg.add(&b);
                let avg = avg.scaled(0.5);
                entries[r * dim + c] = avg.clone();
                entries[c * dim + r] = avg;
            }
        }
        if max_asym > SYMMETRY_TOL * scale.max(1.0) {
            return Err(SdpError::Asymmetric { name: name.to_string(), max_asym });
        }
        self.lmis.push(LmiConstraint { name: name.to_string(), dim, sense, entries });
        Ok(())
    }

    /// Canonical JSON form, stable across runs for identical assembly.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serialization cannot fail")
    }

    /// Extracts a named value from a solved decision vector.
    pub(crate) fn extract(&self, decl_idx: usize, x: &[f64]) -> Value {
        let d = &self.vars[decl_idx];
        match d.shape {
            VarShape::Scalar { .. } => Value::Scalar(x[d.offset]),
            VarShape::Rect(r, c) => {
                Value::Matrix(DMatrix::from_fn(r, c, |i, j| x[d.offset + i * c + j]))
            }
            VarShape::Symmetric(dim) => Value::Matrix(DMatrix::from_fn(dim, dim, |i, j| {
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                x[d.offset + hi * (hi + 1) / 2 + lo]
            })),
        }
    }
}

fn asymmetry(a: &LinExpr, b: &LinExpr) -> f64 {
    let mut diff = a.clone();
    diff.add(&b.clone().scaled(-1.0));
    diff.max_abs()
}

/// Affine symmetric-matrix expression under assembly.
///
/// Entries are accumulated additively; helpers place constant blocks,
/// variable blocks, scalar-scaled constant matrices and sandwich products
/// `coeff·L·X·R` at arbitrary offsets.
#[derive(Clone, Debug)]
pub struct MatExpr {
    dim: usize,
    entries: Vec<LinExpr>,
}

impl MatExpr {
    pub fn zeros(dim: usize) -> Self {
        MatExpr { dim, entries: vec![LinExpr::default(); dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn at(&mut self, r: usize, c: usize) -> &mut LinExpr {
        assert!(r < self.dim && c < self.dim, "entry ({r},{c}) outside {0}x{0} block", self.dim);
        &mut self.entries[r * self.dim + c]
    }

    /// Adds a constant block with top-left corner `(r0, c0)`.
    pub fn add_const(&mut self, r0: usize, c0: usize, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    self.at(r0 + i, c0 + j).constant += m[(i, j)];
                }
            }
        }
    }

    /// Adds `coeff·X` (or `coeff·Xᵀ`) at `(r0, c0)`.
    pub fn add_var(
        &mut self,
        pb: &SdpProblem,
        r0: usize,
        c0: usize,
        var: VarId,
        coeff: f64,
        transpose: bool,
    ) {
        let (rows, cols) = var_dims(pb, var);
        let (br, bc) = if transpose { (cols, rows) } else { (rows, cols) };
        for i in 0..br {
            for j in 0..bc {
                let (vi, vj) = if transpose { (j, i) } else { (i, j) };
                self.at(r0 + i, c0 + j).push(pb.scalar_index(var, vi, vj), coeff);
            }
        }
    }

    /// Adds `s·M` for a scalar variable `s` and constant matrix `M`.
    pub fn add_scalar_times(
        &mut self,
        pb: &SdpProblem,
        r0: usize,
        c0: usize,
        scalar: VarId,
        m: &DMatrix<f64>,
    ) {
        let idx = pb.scalar_index(scalar, 0, 0);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    self.at(r0 + i, c0 + j).push(idx, m[(i, j)]);
                }
            }
        }
    }

    /// Adds `coeff·L·X·R` at `(r0, c0)`; `L`/`R` default to identity and
    /// `transpose` applies to the variable in the product.
    pub fn add_product(
        &mut self,
        pb: &SdpProblem,
        r0: usize,
        c0: usize,
        coeff: f64,
        left: Option<&DMatrix<f64>>,
        var: VarId,
        transpose: bool,
        right: Option<&DMatrix<f64>>,
    ) {
        let (vr, vc) = var_dims(pb, var);
        let (xr, xc) = if transpose { (vc, vr) } else { (vr, vc) };
        let out_rows = left.map_or(xr, |l| l.nrows());
        let out_cols = right.map_or(xc, |r| r.ncols());
        if let Some(l) = left {
            assert_eq!(l.ncols(), xr, "left factor column mismatch");
        }
        if let Some(r) = right {
            assert_eq!(r.nrows(), xc, "right factor row mismatch");
        }
        for i in 0..out_rows {
            for j in 0..out_cols {
                let dst = self.at(r0 + i, c0 + j);
                for p in 0..xr {
                    let lcoef = left.map_or(if i == p { 1.0 } else { 0.0 }, |l| l[(i, p)]);
                    if lcoef == 0.0 {
                        continue;
                    }
                    for q in 0..xc {
                        let rcoef = right.map_or(if q == j { 1.0 } else { 0.0 }, |r| r[(q, j)]);
                        if rcoef == 0.0 {
                            continue;
                        }
                        let (vi, vj) = if transpose { (q, p) } else { (p, q) };
                        dst.push(pb.scalar_index(var, vi, vj), coeff * lcoef * rcoef);
                    }
                }
            }
        }
    }
}

fn var_dims(pb: &SdpProblem, var: VarId) -> (usize, usize) {
    match *pb.var_shape(var) {
        VarShape::Symmetric(d) => (d, d),
        VarShape::Rect(r, c) => (r, c),
        VarShape::Scalar { .. } => (1, 1),
    }
}
