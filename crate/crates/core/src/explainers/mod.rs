//! Feature-importance scores from a fitted GP or a surrogate dataset.

mod ard;
mod lasso;
mod lime;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use ard::ard_importance;
pub use lasso::{default_lambda, lasso, sparse_linear_importance, LassoFit, MAX_SWEEPS};
pub use lime::{lime_baseline, LimeOptions};

use crate::blackbox::ModelError;
use crate::gpr::GpError;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("ARD importance needs a Matern ARD kernel, got a linear kernel")]
    NotArd,
    #[error("need at least 2 distinct points, have {0}")]
    TooFewPoints(usize),
    #[error("lambda must be finite and >= 0, got {0}")]
    BadLambda(f64),
    #[error("coordinate descent did not converge in {0} sweeps")]
    NonConvergence(usize),
    #[error("every locality weight is below 1e-12")]
    DegenerateWeights,
    #[error("need at least d + 1 = {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("top-{k} requested from {d} features")]
    KTooLarge { k: usize, d: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gp(#[from] GpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImportanceMethod {
    Ard,
    SparseLinear,
    LimeBaseline,
}

impl ImportanceMethod {
    pub fn label(self) -> &'static str {
        match self {
            ImportanceMethod::Ard => "ard",
            ImportanceMethod::SparseLinear => "sparse-linear",
            ImportanceMethod::LimeBaseline => "lime-baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    pub feature_names: Vec<String>,
    pub magnitudes: Vec<f64>,
    pub signs: Vec<i8>,
    pub signed_scores: Vec<f64>,
    pub method: ImportanceMethod,
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("f{i}")).collect()
}

fn sign_of(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

impl ImportanceScores {
    pub fn new(magnitudes: Vec<f64>, signs: Vec<i8>, method: ImportanceMethod) -> Self {
        let signed_scores = magnitudes
            .iter()
            .zip(&signs)
            .map(|(m, s)| m * *s as f64)
            .collect();
        ImportanceScores {
            feature_names: default_feature_names(magnitudes.len()),
            magnitudes,
            signs,
            signed_scores,
            method,
        }
    }

    /// Scores whose magnitude and sign come from one signed vector.
    pub fn from_signed(signed: Vec<f64>, method: ImportanceMethod) -> Self {
        let magnitudes = signed.iter().map(|v| v.abs()).collect();
        let signs = signed.iter().map(|v| sign_of(*v)).collect();
        ImportanceScores {
            feature_names: default_feature_names(signed.len()),
            magnitudes,
            signs,
            signed_scores: signed,
            method,
        }
    }

    pub fn with_names(mut self, names: &[String]) -> Self {
        if names.len() == self.magnitudes.len() {
            self.feature_names = names.to_vec();
        }
        self
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    /// Feature indices by magnitude, largest first, ties by index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.magnitudes[b]
                .total_cmp(&self.magnitudes[a])
                .then(a.cmp(&b))
        });
        idx
    }

    /// `{"method": .., "features": [{"name", "score", "magnitude"}, ..]}`
    /// sorted by magnitude descending.
    pub fn to_json(&self) -> serde_json::Value {
        let features: Vec<_> = self
            .ranking()
            .into_iter()
            .map(|i| {
                json!({
                    "name": self.feature_names[i],
                    "score": self.signed_scores[i],
                    "magnitude": self.magnitudes[i],
                })
            })
            .collect();
        json!({ "method": self.method.label(), "features": features })
    }
}

/// The `k` features with the largest magnitudes, ties broken by index.
pub fn top_k(scores: &ImportanceScores, k: usize) -> Result<Vec<usize>, ExplainError> {
    if k > scores.len() {
        return Err(ExplainError::KTooLarge { k, d: scores.len() });
    }
    let mut r = scores.ranking();
    r.truncate(k);
    Ok(r)
}
