//! Derivative-free optimization of control parameters.

pub mod line;
pub mod powell;
pub mod search;

use thiserror::Error;

pub use line::{bracket_minimum, brent_min, golden_ratio, Bracket, LineMin};
pub use powell::{powell_min, PowellConfig, PowellResult};
pub use search::{
    multi_start, optimize_ansatz, optimize_polynomial, poly_schedule, AnsatzFamily, Objective,
    RunSummary, SearchResult, POLY_INIT_RANGE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("bracket must satisfy a < b < c (or reversed) with f(b) below f(a) and f(c)")]
    InvalidBracket,
    #[error("evaluation budget exhausted after {0} evaluations")]
    EvaluationBudget(usize),
    #[error("objective returned a non-finite value")]
    NonFinite,
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
}
