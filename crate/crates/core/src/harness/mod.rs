//! Experiment orchestration: run specs, seeded training runs, sweeps and reports.

mod report;
mod run;
mod spec;

pub use report::{compare, format_compare, format_lookahead, lookahead_report, CompareRow, LookaheadRow};
pub use run::{
    normalize, run, run_seed, spec_shield, sweep, sweep_point, thread_cap, MeanSummary, MetricsRow, RunSummary,
    SeedSummary, SweepParam, ALPHA_GRID, EMA_FACTOR, EPSILON_GRID, TRAILING_WINDOW,
};
pub use spec::{parse_key_values, RunSpec};

use crate::agents::AgentError;
use crate::shield::ShieldError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("run spec line {line}: {msg}")]
    Spec { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("{context}: {source}")]
    Run {
        context: String,
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Shield(#[from] ShieldError),
}
