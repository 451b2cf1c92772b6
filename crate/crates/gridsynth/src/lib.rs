//! Data-driven synthesis of distributed secondary frequency regulation:
//! linearized grid modelling, experiment data collection, robust H2
//! controller design from data, and mixed-integer communication topology
//! co-design, with a command-line harness reproducing the bundled 39-bus
//! case studies.

pub mod data;
pub mod grid;
pub mod multiplier;
pub mod sdp;
pub mod synth;
pub mod topo;

pub use sdp::{SdpError, SdpProblem};
