//! Solver adapter contract and runtime registry.
//!
//! Every conic backend sits behind [`SdpSolver`]; instances are registered by
//! name and selected at runtime (config or `--solver` flag). The Clarabel
//! interior-point backend ships built in and is the default.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;
use once_cell::sync::Lazy;

use super::{SdpError, SdpProblem};

/// Backend-independent solve options.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub verbose: bool,
    pub max_iter: u32,
    /// Wall-clock limit in seconds; `None` leaves the backend unlimited.
    pub time_limit: Option<f64>,
    /// Target feasibility/optimality accuracy handed to the backend.
    pub accuracy: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { verbose: false, max_iter: 200, time_limit: None, accuracy: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub enum Value {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

impl Value {
    pub fn as_scalar(&self) -> f64 {
        match self {
            Value::Scalar(s) => *s,
            Value::Matrix(_) => panic!("matrix value used as scalar"),
        }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        match self {
            Value::Matrix(m) => m,
            Value::Scalar(_) => panic!("scalar value used as matrix"),
        }
    }
}

/// Outcome of a solve. `values` is populated only for `Optimal` status.
#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub values: BTreeMap<String, Value>,
    pub objective_value: Option<f64>,
    /// Backend status string, kept verbatim for diagnostics.
    pub backend_status: String,
    pub iterations: u32,
    pub solve_time: f64,
}

impl SdpSolution {
    pub fn value(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn matrix(&self, name: &str) -> &DMatrix<f64> {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("no value for variable `{name}`"))
            .as_matrix()
    }

    pub fn scalar(&self, name: &str) -> f64 {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("no value for variable `{name}`"))
            .as_scalar()
    }
}

/// Adapter contract for interior-point conic solvers.
///
/// Implementations must map solver divergence to
/// [`SolveStatus::NumericalFailure`] rather than erroring; `Err` is reserved
/// for malformed problems and backend misuse.
pub trait SdpSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution, SdpError>;
}

static SOLVERS: Lazy<RwLock<BTreeMap<String, Arc<dyn SdpSolver>>>> = Lazy::new(|| {
    let mut map: BTreeMap<String, Arc<dyn SdpSolver>> = BTreeMap::new();
    let clarabel = Arc::new(super::clarabel_backend::ClarabelSolver);
    map.insert(clarabel.name().to_string(), clarabel);
    RwLock::new(map)
});

/// Registry of available solver backends.
pub mod registry {
    use super::*;

    pub const DEFAULT: &str = "clarabel";

    pub fn register(solver: Arc<dyn SdpSolver>) {
        SOLVERS.write().unwrap().insert(solver.name().to_string(), solver);
    }

    pub fn get(name: &str) -> Result<Arc<dyn SdpSolver>, SdpError> {
        SOLVERS
            .read()
            .unwrap()
            .get(name)
            .cloned()
            .ok_or_else(|| SdpError::UnknownSolver(name.to_string(), names().join(", ")))
    }

    pub fn default_solver() -> Arc<dyn SdpSolver> {
        get(DEFAULT).expect("built-in solver always registered")
    }

    pub fn names() -> Vec<String> {
        SOLVERS.read().unwrap().keys().cloned().collect()
    }
}
