//! Exact Gaussian-process regression.
//!
//! Targets are centered before fitting (zero-mean prior) and the mean is
//! added back to posterior means. The Gram matrix is factored with a
//! diagonal jitter that starts at `1e-10 * mean(diag K)` and grows tenfold
//! up to `1e-4 * mean(diag K)` before giving up.

mod hyper;
mod kernel;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use hyper::{optimize_hyperparameters, HyperOptions};
pub use kernel::{
    KernelFamily, KernelKind, KernelSpec, LOG_LENGTH_SCALE_BOUNDS, LOG_LINEAR_VARIANCE_BOUNDS,
    LOG_NOISE_VARIANCE_BOUNDS, LOG_SIGNAL_VARIANCE_BOUNDS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("no training data")]
    Empty,
    #[error("{0} inputs but {1} targets")]
    LengthMismatch(usize, usize),
    #[error("non-finite training data")]
    NonFinite,
    #[error("cholesky failed even with jitter {0:e}")]
    Factorization(f64),
    #[error("need at least 2 points to optimize hyperparameters, have {0}")]
    TooFewPoints(usize),
    #[error("every hyperparameter restart failed to factor")]
    AllRestartsFailed,
}

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// A fitted posterior.
#[derive(Debug, Clone)]
pub struct GpModel {
    n: usize,
    d: usize,
    /// Training inputs row-major; divided by the length-scales for ARD kernels.
    features: Vec<f64>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    y_mean: f64,
    kernel: KernelSpec,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// Posterior mean and variance at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Gram matrix `K` (noise excluded).
pub fn gram_matrix(kernel: &KernelSpec, x: &[Vec<f64>]) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval_unchecked(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

impl GpModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], kernel: &KernelSpec) -> Result<GpModel, GpError> {
        kernel.validate()?;
        let n = x.len();
        if n == 0 {
            return Err(GpError::Empty);
        }
        if y.len() != n {
            return Err(GpError::LengthMismatch(n, y.len()));
        }
        let d = kernel.dim();
        for row in x {
            if row.len() != d {
                return Err(GpError::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(GpError::NonFinite);
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFinite);
        }

        let gram = gram_matrix(kernel, x);
        let mean_diag = gram.diagonal().mean();
        let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        let mut jitter = JITTER_START * scale;
        let chol = loop {
            let mut a = gram.clone();
            for i in 0..n {
                a[(i, i)] += kernel.noise_variance + jitter;
            }
            if let Some(c) = a.cholesky() {
                break c;
            }
            jitter *= 10.0;
            if jitter > JITTER_MAX * scale * (1.0 + 1e-9) {
                return Err(GpError::Factorization(jitter / 10.0));
            }
        };

        let y_mean = y.iter().sum::<f64>() / n as f64;
        let centered = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let alpha = chol.solve(&centered);
        let chol = chol.unpack();

        let features = match kernel.length_scales() {
            Some(ls) => x
                .iter()
                .flat_map(|row| row.iter().zip(ls).map(|(v, l)| v / l))
                .collect(),
            None => x.iter().flatten().copied().collect(),
        };
        Ok(GpModel {
            n,
            d,
            features,
            x: x.to_vec(),
            y: y.to_vec(),
            y_mean,
            kernel: kernel.clone(),
            chol,
            alpha,
            jitter,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn target_mean(&self) -> f64 {
        self.y_mean
    }

    /// Diagonal jitter that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular factor of `K + (noise + jitter) I`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// `k(x, x_i)` for every training point.
    fn cross_covariance(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        match &self.kernel.kind {
            KernelKind::Matern52Ard {
                length_scales,
                signal_variance,
            }
            | KernelKind::Matern32Ard {
                length_scales,
                signal_variance,
            } => {
                let mut q = [0.0f64; 64];
                let scaled: Vec<f64>;
                let q: &[f64] = if d <= 64 {
                    for i in 0..d {
                        q[i] = x[i] / length_scales[i];
                    }
                    &q[..d]
                } else {
                    scaled = x.iter().zip(length_scales).map(|(v, l)| v / l).collect();
                    &scaled
                };
                let is52 = matches!(self.kernel.kind, KernelKind::Matern52Ard { .. });
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &self.features[i * d..(i + 1) * d];
                    let r2: f64 = q.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
                    let r = r2.sqrt();
                    *o = signal_variance
                        * if is52 {
                            kernel::matern52(r)
                        } else {
                            kernel::matern32(r)
                        };
                }
            }
            KernelKind::Linear {
                linear_variances,
                offset,
            } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &self.features[i * d..(i + 1) * d];
                    let mut s = *offset;
                    for j in 0..d {
                        s += linear_variances[j] * x[j] * row[j];
                    }
                    *o = s;
                }
            }
        }
    }

    pub fn posterior(&self, x: &[f64]) -> Result<Posterior, GpError> {
        if x.len() != self.d {
            return Err(GpError::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(self.posterior_unchecked(x))
    }

    /// Posterior without the dimension check; `x.len()` must equal `dim()`.
    pub fn posterior_unchecked(&self, x: &[f64]) -> Posterior {
        let n = self.n;
        let mut kv = vec![0.0; n];
        self.cross_covariance(x, &mut kv);
        let mean = self.y_mean
            + kv.iter()
                .zip(self.alpha.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>();
        // forward substitution L v = k, column by column
        let l = self.chol.as_slice();
        for j in 0..n {
            let col = &l[j * n..(j + 1) * n];
            let vj = kv[j] / col[j];
            kv[j] = vj;
            for (k, c) in kv[j + 1..].iter_mut().zip(&col[j + 1..]) {
                *k -= c * vj;
            }
        }
        let prior = self.kernel.eval_unchecked(x, x);
        let variance = (prior - kv.iter().map(|v| v * v).sum::<f64>()).max(0.0);
        Posterior { mean, variance }
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        let mut kv = vec![0.0; self.n];
        self.cross_covariance(x, &mut kv);
        self.y_mean
            + kv.iter()
                .zip(self.alpha.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// `-1/2 y^T alpha - sum log diag(L) - n/2 log 2 pi` on centered targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let data_fit: f64 = self
            .y
            .iter()
            .zip(self.alpha.iter())
            .map(|(y, a)| (y - self.y_mean) * a)
            .sum();
        let log_det: f64 = (0..self.n).map(|i| self.chol[(i, i)].ln()).sum();
        -0.5 * data_fit - log_det - 0.5 * self.n as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}
