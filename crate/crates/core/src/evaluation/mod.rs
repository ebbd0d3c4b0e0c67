//! Stability and regret harnesses.

mod regret;
mod stability;

use std::collections::BTreeSet;

use thiserror::Error;

pub use regret::{
    analyze_regret, regret_experiment, simulate_regret, write_trials_csv, LemmaCheck, RegretConfig,
    RegretReport, RegretSimulation, RoundSummary, TrialRound, LEMMA_FRACTIONS,
};
pub use stability::{
    explain_once, stability_experiment, stability_from_explainer, ExplainerConfig,
    StabilityOptions, StabilityReport,
};

use crate::blackbox::ModelError;
use crate::engine::EngineError;
use crate::explainers::ExplainError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("Jaccard distance of two empty sets is undefined")]
    BothEmpty,
    #[error("need at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("no index sample produced 2 successful runs")]
    NoUsableSamples,
    #[error("{0}")]
    InvalidConfig(String),
    #[error("grid oracle supports d <= 2, got d = {0}")]
    GridTooLarge(usize),
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error(transparent)]
    Engine(#[from] Box<EngineError>),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<EngineError> for EvalError {
    fn from(e: EngineError) -> Self {
        EvalError::Engine(Box::new(e))
    }
}

/// `1 - |A ∩ B| / |A ∪ B|`.
pub fn jaccard_distance<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Result<f64, EvalError> {
    let union = a.union(b).count();
    if union == 0 {
        return Err(EvalError::BothEmpty);
    }
    let inter = a.intersection(b).count();
    Ok(1.0 - inter as f64 / union as f64)
}
