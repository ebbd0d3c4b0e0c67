use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{jaccard_distance, EvalError};
use crate::blackbox::BlackBoxModel;
use crate::dataset::FeatureStats;
use crate::engine::{run_unravel, ExplainRequest};
use crate::explainers::{
    ard_importance, lime_baseline, sparse_linear_importance, top_k, ImportanceScores, LimeOptions,
};
use crate::gpr::KernelFamily;

/// One explainer under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum ExplainerConfig {
    /// Active sampling, then ARD length-scale importance.
    Unravel {
        budget: usize,
        kernel: KernelFamily,
        /// Random starts of the acquisition search; `None` means `8 + 2d`.
        #[serde(default)]
        starts: Option<usize>,
    },
    /// Active sampling, then unweighted LASSO on the surrogate points.
    UnravelLime {
        budget: usize,
        kernel: KernelFamily,
        lambda: Option<f64>,
        #[serde(default)]
        starts: Option<usize>,
    },
    /// Gaussian perturbations with locality weights.
    Lime {
        n_samples: usize,
        kernel_width: Option<f64>,
        lambda: Option<f64>,
    },
}

impl ExplainerConfig {
    pub fn label(&self) -> &'static str {
        match self {
            ExplainerConfig::Unravel { .. } => "unravel",
            ExplainerConfig::UnravelLime { .. } => "unravel-lime",
            ExplainerConfig::Lime { .. } => "lime",
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        match self {
            ExplainerConfig::Unravel { kernel, .. } if !kernel.is_ard() => {
                Err(EvalError::InvalidConfig(
                    "the unravel method reads ARD length-scales and needs a Matern kernel".into(),
                ))
            }
            ExplainerConfig::Unravel { budget: 0, .. }
            | ExplainerConfig::UnravelLime { budget: 0, .. } => {
                Err(EvalError::InvalidConfig("budget must be >= 1".into()))
            }
            ExplainerConfig::Lime {
                kernel_width: Some(w),
                ..
            } if !(*w > 0.0) => Err(EvalError::InvalidConfig(format!(
                "kernel width must be > 0, got {w}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Run one explanation of `x0` with the given seed.
pub fn explain_once<M: BlackBoxModel + ?Sized>(
    config: &ExplainerConfig,
    model: &mut M,
    x0: &[f64],
    stats: &FeatureStats,
    seed: u64,
) -> Result<ImportanceScores, EvalError> {
    match config {
        ExplainerConfig::Unravel {
            budget,
            kernel,
            starts,
        } => {
            let mut req = ExplainRequest::new(x0.to_vec(), *budget, *kernel, stats, seed);
            req.search.starts = *starts;
            let (_, gp) = run_unravel(&req, model)?;
            Ok(ard_importance(&gp, x0, &stats.sigma_per_feature)?)
        }
        ExplainerConfig::UnravelLime {
            budget,
            kernel,
            lambda,
            starts,
        } => {
            let mut req = ExplainRequest::new(x0.to_vec(), *budget, *kernel, stats, seed);
            req.search.starts = *starts;
            let (ds, _) = run_unravel(&req, model)?;
            Ok(sparse_linear_importance(&ds, *lambda)?)
        }
        ExplainerConfig::Lime {
            n_samples,
            kernel_width,
            lambda,
        } => {
            let mut opts = LimeOptions::new(x0.len(), *n_samples, seed);
            if let Some(w) = kernel_width {
                opts.kernel_width = *w;
            }
            opts.lambda = *lambda;
            Ok(lime_baseline(x0, model, &stats.sigma_per_feature, &opts)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    pub runs: usize,
    pub top_k: usize,
    pub base_seed: u64,
    /// Use `base_seed` for every run instead of `base_seed + r`.
    pub force_seed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub method: String,
    pub runs: usize,
    pub top_k: usize,
    pub base_seed: u64,
    pub force_seed: bool,
    /// Mean pairwise distance per index sample; `None` when fewer than two
    /// runs succeeded.
    pub per_index_sample: Vec<Option<f64>>,
    /// Pairs averaged per index sample.
    pub pairs: Vec<usize>,
    /// Failed runs per index sample.
    pub excluded: Vec<usize>,
    pub excluded_total: usize,
    /// One message per failed run, `sample <i> run <r>: <error>`.
    pub failures: Vec<String>,
    pub overall_mean: f64,
}

/// Harness core: `explain(x0, seed)` is called `runs` times per sample.
pub fn stability_from_explainer<F>(
    label: &str,
    index_samples: &[Vec<f64>],
    opts: &StabilityOptions,
    mut explain: F,
) -> Result<StabilityReport, EvalError>
where
    F: FnMut(&[f64], u64) -> Result<ImportanceScores, EvalError>,
{
    if opts.runs < 2 {
        return Err(EvalError::TooFewRuns(opts.runs));
    }
    if opts.top_k == 0 {
        return Err(EvalError::InvalidConfig("top-k must be >= 1".into()));
    }
    if index_samples.is_empty() {
        return Err(EvalError::InvalidConfig("no index samples".into()));
    }
    let mut per_index_sample = Vec::new();
    let mut pairs = Vec::new();
    let mut excluded = Vec::new();
    let mut failures = Vec::new();
    for (i, x0) in index_samples.iter().enumerate() {
        let mut sets: Vec<BTreeSet<usize>> = Vec::new();
        let mut failed = 0;
        for r in 0..opts.runs {
            let seed = if opts.force_seed {
                opts.base_seed
            } else {
                opts.base_seed.wrapping_add(r as u64)
            };
            match explain(x0, seed).and_then(|s| Ok(top_k(&s, opts.top_k)?)) {
                Ok(t) => sets.push(t.into_iter().collect()),
                Err(e) => {
                    log::warn!("{label}: sample {i} run {r} failed: {e}");
                    failures.push(format!("sample {i} run {r}: {e}"));
                    failed += 1;
                }
            }
        }
        let mut total = 0.0;
        let mut count = 0;
        for a in 0..sets.len() {
            for b in a + 1..sets.len() {
                total += jaccard_distance(&sets[a], &sets[b])?;
                count += 1;
            }
        }
        per_index_sample.push((count > 0).then(|| total / count as f64));
        pairs.push(count);
        excluded.push(failed);
    }
    let usable: Vec<f64> = per_index_sample.iter().flatten().cloned().collect();
    if usable.is_empty() {
        return Err(EvalError::NoUsableSamples);
    }
    let overall_mean = usable.iter().sum::<f64>() / usable.len() as f64;
    Ok(StabilityReport {
        method: label.to_string(),
        runs: opts.runs,
        top_k: opts.top_k,
        base_seed: opts.base_seed,
        force_seed: opts.force_seed,
        per_index_sample,
        pairs,
        excluded_total: excluded.iter().sum(),
        excluded,
        failures,
        overall_mean,
    })
}

/// Repeated explanations of each index sample, scored by mean pairwise
/// Jaccard distance between top-k sets.
pub fn stability_experiment<M: BlackBoxModel + ?Sized>(
    config: &ExplainerConfig,
    model: &mut M,
    index_samples: &[Vec<f64>],
    stats: &FeatureStats,
    opts: &StabilityOptions,
) -> Result<StabilityReport, EvalError> {
    config.validate()?;
    if let Some(x) = index_samples.iter().find(|x| x.len() != model.dim()) {
        return Err(EvalError::InvalidConfig(format!(
            "index sample has d = {}, model has d = {}",
            x.len(),
            model.dim()
        )));
    }
    if opts.top_k > model.dim() {
        return Err(EvalError::InvalidConfig(format!(
            "top-k {} exceeds d = {}",
            opts.top_k,
            model.dim()
        )));
    }
    stability_from_explainer(config.label(), index_samples, opts, |x0, seed| {
        explain_once(config, model, x0, stats, seed)
    })
}
