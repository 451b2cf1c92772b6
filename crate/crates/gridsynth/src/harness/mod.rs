//! Case-study harness: 39-bus case generation, the experiment pipeline,
//! metrics and file outputs behind the command-line interface.

mod config;
mod experiments;
mod ieee39;
mod metrics;
mod output;

pub use config::ExperimentConfig;
pub use experiments::{
    run_saturation_experiment, run_step_experiment, run_stochastic_experiment,
    run_tradeoff_sweep, ExperimentArtifacts, PipelineContext, TradeoffRow,
};
pub use ieee39::{build_ieee39_case, CaseBounds};
pub use metrics::{compute_closed_loop_h2, compute_metrics, dlyap, Metrics};
pub use output::{write_gnuplot_script, write_input_csv, write_metrics_json, write_frequency_csv, write_tradeoff_csv};

use thiserror::Error;

use crate::data::DataError;
use crate::grid::GridError;
use crate::synth::SynthError;
use crate::topo::TopoError;

#[derive(Error, Debug)]
pub enum HarnessError {
    #[error("closed loop is unstable (spectral radius {rho:.6})")]
    UnstableClosedLoop { rho: f64 },
    #[error("no stable open-loop case found in {attempts} draws")]
    NoStableCase { attempts: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("scenario infeasible: {0}")]
    InfeasibleScenario(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Topo(#[from] TopoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(String),
}
