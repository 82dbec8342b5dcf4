//! Signal temporal logic: formula trees, sampled signals, and exact/smooth
//! quantitative semantics with reverse-mode gradients.

mod formula;
mod semantics;
mod signal;

pub use formula::{Interval, Predicate, Relation, StlFormula};
pub use semantics::{
    eval_exact, eval_smooth, grad_smooth, robustness_report, softmax, softmin, Evaluator,
    RobustnessReport,
};
pub use signal::Signal;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("invalid formula: {0}")]
    InvalidFormula(String),
    #[error("formula references undeclared channel `{0}`")]
    UnknownChannel(String),
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error("signal too short: node {node} ({kind}) needs {required} samples, signal has {available}")]
    HorizonOverflow {
        node: usize,
        kind: &'static str,
        required: usize,
        available: usize,
    },
}
