//! Communication topology design: link-benefit estimation, Big-M coupling
//! of boolean links to the controller parameterization, and branch-and-bound
//! over the resulting mixed-integer semidefinite program.

mod benefits;
mod bigm;
mod solve;
mod topology;

pub use benefits::{benefits_for_topology, estimate_link_benefits, least_squares_model};
pub use bigm::{big_m_inequalities, BigMBound, BigMRow};
pub use solve::{
    solve_topology, sweep_costs, DeltaState, SweepLevel, TopoOptions, TopologyResult,
};
pub use topology::CommTopology;

use thiserror::Error;

use crate::sdp::SdpError;
use crate::synth::SynthError;

#[derive(Error, Debug)]
pub enum TopoError {
    #[error("dense topology admits no stability certificate; no structure can be feasible")]
    DenseInfeasible,
    #[error("search budget exhausted with no feasible topology found")]
    NoIncumbent,
    #[error("regressor matrix is rank deficient (rank {rank} of {required}); cannot fit link benefits")]
    RankDeficient { rank: usize, required: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}
