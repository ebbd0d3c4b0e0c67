use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GpError, GpModel, KernelSpec};
use crate::optimize::PatternSearch;

/// Knobs for the marginal-likelihood search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperOptions {
    /// Total pattern-search runs; the first starts from the given kernel,
    /// the rest from log-uniform draws inside the bounds.
    pub restarts: usize,
    /// Initial poll step in log units.
    pub initial_step: f64,
    /// Stop once every step is below this (log units).
    pub min_step: f64,
    /// Likelihood evaluations allowed per run.
    pub max_evals: usize,
}

impl Default for HyperOptions {
    fn default() -> Self {
        HyperOptions {
            restarts: 3,
            initial_step: 1.0,
            min_step: 1e-2,
            max_evals: 4000,
        }
    }
}

impl HyperOptions {
    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }
}

/// Maximize the log marginal likelihood over log-space hyperparameters.
pub fn optimize_hyperparameters(
    x: &[Vec<f64>],
    y: &[f64],
    k0: &KernelSpec,
    options: &HyperOptions,
    seed: u64,
) -> Result<KernelSpec, GpError> {
    if x.len() < 2 {
        return Err(GpError::TooFewPoints(x.len()));
    }
    k0.validate()?;
    // surface shape errors up front instead of as "all restarts failed"
    GpModel::fit(&x[..1], &y[..1], k0)?;

    let (lower, upper) = k0.log_bounds();
    let search = PatternSearch {
        initial_step: vec![options.initial_step; lower.len()],
        min_step: vec![options.min_step; lower.len()],
        shrink: 0.5,
        max_evals: options.max_evals,
    };
    let objective = |p: &[f64]| match GpModel::fit(x, y, &k0.with_log_params(p)) {
        Ok(gp) => gp.log_marginal_likelihood(),
        Err(_) => f64::NEG_INFINITY,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for run in 0..options.restarts.max(1) {
        let start = if run == 0 {
            k0.to_log_params()
        } else {
            lower
                .iter()
                .zip(&upper)
                .map(|(l, u)| rng.random_range(*l..*u))
                .collect()
        };
        let r = search.maximize(objective, &start, &lower, &upper);
        log::trace!(
            "hyper run {run}: lml {:.6} after {} evals",
            r.value,
            r.evals
        );
        if r.value.is_finite() && best.as_ref().is_none_or(|(_, v)| r.value > *v) {
            best = Some((r.x, r.value));
        }
    }
    best.map(|(p, _)| k0.with_log_params(&p))
        .ok_or(GpError::AllRestartsFailed)
}
