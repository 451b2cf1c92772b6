//! Linearized power-system frequency model: case description, network
//! reduction, state-space assembly, discretization and simulation.

pub mod case;
pub mod model;
pub mod reduce;
pub mod sim;

pub use case::{DeviceParams, GridCase, Line};
pub use model::{build_continuous, build_model, discretize_zoh, LtiModel, StateMap};
pub use reduce::{kron_reduce, ReducedNetwork};
pub use sim::{
    disturbance_components, disturbance_sequence, simulate, simulate_with_sequence,
    DisturbanceSpec, InputPolicy, SaturationSpec, StepDisturbance, Trajectory,
};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum GridError {
    #[error("load-bus susceptance block is numerically singular (min σ {min_sv:.3e}, max σ {max_sv:.3e}): cannot form the Schur complement eliminating load buses")]
    SingularLoadBlock { min_sv: f64, max_sv: f64 },
    #[error("susceptance matrix asymmetric: max |B - Bᵀ| = {0:.3e}")]
    AsymmetricSusceptance(f64),
    #[error("state diverged (non-finite) at step {step}")]
    Diverged { step: usize },
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("case file parse error: {0}")]
    Parse(String),
}
