use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::lasso::{default_lambda, lasso};
use super::{ExplainError, ImportanceMethod, ImportanceScores};
use crate::blackbox::BlackBoxModel;
use crate::engine::rng_stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeOptions {
    pub n_samples: usize,
    pub kernel_width: f64,
    /// `None` picks [`default_lambda`] on the weighted sample.
    pub lambda: Option<f64>,
    pub seed: u64,
}

impl LimeOptions {
    /// Kernel width `0.75 * sqrt(d)`.
    pub fn new(d: usize, n_samples: usize, seed: u64) -> Self {
        LimeOptions {
            n_samples,
            kernel_width: 0.75 * (d as f64).sqrt(),
            lambda: None,
            seed,
        }
    }
}

/// Gaussian perturbations around `x0`, exponential locality weights and a
/// weighted LASSO fit.
pub fn lime_baseline<M: BlackBoxModel + ?Sized>(
    x0: &[f64],
    model: &mut M,
    sigma_d: &[f64],
    opts: &LimeOptions,
) -> Result<ImportanceScores, ExplainError> {
    let d = x0.len();
    if sigma_d.len() != d {
        return Err(ExplainError::DimensionMismatch {
            expected: d,
            got: sigma_d.len(),
        });
    }
    if model.dim() != d {
        return Err(ExplainError::DimensionMismatch {
            expected: model.dim(),
            got: d,
        });
    }
    if opts.n_samples < d + 1 {
        return Err(ExplainError::TooFewSamples {
            needed: d + 1,
            got: opts.n_samples,
        });
    }
    let mut rng = rng_stream(opts.seed, 1);
    let width2 = opts.kernel_width * opts.kernel_width;
    let mut x = Vec::with_capacity(opts.n_samples);
    let mut y = Vec::with_capacity(opts.n_samples);
    let mut w = Vec::with_capacity(opts.n_samples);
    for _ in 0..opts.n_samples {
        let xi: Vec<f64> = x0
            .iter()
            .zip(sigma_d)
            .map(|(c, s)| {
                let eta: f64 = StandardNormal.sample(&mut rng);
                c + s * eta
            })
            .collect();
        let dist2: f64 = xi.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
        w.push((-dist2 / width2).exp());
        y.push(model.predict(&xi)?);
        x.push(xi);
    }
    if w.iter().all(|v| *v < 1e-12) {
        return Err(ExplainError::DegenerateWeights);
    }
    let lambda = match opts.lambda {
        Some(l) => l,
        None => default_lambda(&x, &y, Some(&w))?,
    };
    let fit = lasso(&x, &y, Some(&w), lambda)?;
    Ok(ImportanceScores::from_signed(
        fit.coefficients,
        ImportanceMethod::LimeBaseline,
    ))
}
