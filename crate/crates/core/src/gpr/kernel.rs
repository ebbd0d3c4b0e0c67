use serde::{Deserialize, Serialize};

use super::GpError;

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

/// Log-space box for the hyperparameter search.
pub const LOG_LENGTH_SCALE_BOUNDS: (f64, f64) = (-6.907_755_278_982_137, 6.907_755_278_982_137);
pub const LOG_SIGNAL_VARIANCE_BOUNDS: (f64, f64) = (-10.0, 10.0);
pub const LOG_NOISE_VARIANCE_BOUNDS: (f64, f64) = (-12.0, 2.0);
pub const LOG_LINEAR_VARIANCE_BOUNDS: (f64, f64) = (-10.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    Matern52Ard,
    Matern32Ard,
    Linear,
}

impl KernelFamily {
    pub fn is_ard(self) -> bool {
        !matches!(self, KernelFamily::Linear)
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "matern52" | "matern52-ard" => Ok(KernelFamily::Matern52Ard),
            "matern32" | "matern32-ard" => Ok(KernelFamily::Matern32Ard),
            "linear" => Ok(KernelFamily::Linear),
            other => Err(format!(
                "unknown kernel `{other}` (expected matern52, matern32 or linear)"
            )),
        }
    }
}

/// Covariance family with its own hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelKind {
    Matern52Ard {
        length_scales: Vec<f64>,
        signal_variance: f64,
    },
    Matern32Ard {
        length_scales: Vec<f64>,
        signal_variance: f64,
    },
    Linear {
        linear_variances: Vec<f64>,
        offset: f64,
    },
}

/// Kernel plus observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    pub noise_variance: f64,
}

impl KernelSpec {
    pub fn matern52(length_scales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Matern52Ard {
                length_scales,
                signal_variance,
            },
            noise_variance,
        }
    }

    pub fn matern32(length_scales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Matern32Ard {
                length_scales,
                signal_variance,
            },
            noise_variance,
        }
    }

    pub fn linear(linear_variances: Vec<f64>, offset: f64, noise_variance: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Linear {
                linear_variances,
                offset,
            },
            noise_variance,
        }
    }

    /// Starting template: length-scales at the feature scale, unit signal
    /// variance and small noise.
    pub fn template(family: KernelFamily, sigma_d: &[f64]) -> Self {
        match family {
            KernelFamily::Matern52Ard => KernelSpec::matern52(sigma_d.to_vec(), 1.0, 1e-4),
            KernelFamily::Matern32Ard => KernelSpec::matern32(sigma_d.to_vec(), 1.0, 1e-4),
            KernelFamily::Linear => KernelSpec::linear(vec![1.0; sigma_d.len()], 1.0, 1e-4),
        }
    }

    pub fn family(&self) -> KernelFamily {
        match self.kind {
            KernelKind::Matern52Ard { .. } => KernelFamily::Matern52Ard,
            KernelKind::Matern32Ard { .. } => KernelFamily::Matern32Ard,
            KernelKind::Linear { .. } => KernelFamily::Linear,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            KernelKind::Matern52Ard { length_scales, .. }
            | KernelKind::Matern32Ard { length_scales, .. } => length_scales.len(),
            KernelKind::Linear {
                linear_variances, ..
            } => linear_variances.len(),
        }
    }

    pub fn length_scales(&self) -> Option<&[f64]> {
        match &self.kind {
            KernelKind::Matern52Ard { length_scales, .. }
            | KernelKind::Matern32Ard { length_scales, .. } => Some(length_scales),
            KernelKind::Linear { .. } => None,
        }
    }

    pub fn signal_variance(&self) -> Option<f64> {
        match &self.kind {
            KernelKind::Matern52Ard {
                signal_variance, ..
            }
            | KernelKind::Matern32Ard {
                signal_variance, ..
            } => Some(*signal_variance),
            KernelKind::Linear { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), GpError> {
        let bad = |what: &str| Err(GpError::InvalidKernel(what.to_string()));
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad("noise variance must be finite and >= 0");
        }
        match &self.kind {
            KernelKind::Matern52Ard {
                length_scales,
                signal_variance,
            }
            | KernelKind::Matern32Ard {
                length_scales,
                signal_variance,
            } => {
                if length_scales.is_empty() {
                    return bad("no length-scales");
                }
                if length_scales.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                    return bad("length-scales must be finite and > 0");
                }
                if !(*signal_variance >= 0.0 && signal_variance.is_finite()) {
                    return bad("signal variance must be finite and >= 0");
                }
            }
            KernelKind::Linear {
                linear_variances,
                offset,
            } => {
                if linear_variances.is_empty() {
                    return bad("no linear variances");
                }
                if linear_variances
                    .iter()
                    .chain(std::iter::once(offset))
                    .any(|v| !(*v >= 0.0 && v.is_finite()))
                {
                    return bad("linear variances and offset must be finite and >= 0");
                }
            }
        }
        Ok(())
    }

    /// Covariance between two points (noise excluded).
    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> Result<f64, GpError> {
        let d = self.dim();
        if x1.len() != d || x2.len() != d {
            return Err(GpError::DimensionMismatch {
                expected: d,
                got: if x1.len() != d { x1.len() } else { x2.len() },
            });
        }
        Ok(self.eval_unchecked(x1, x2))
    }

    pub(crate) fn eval_unchecked(&self, x1: &[f64], x2: &[f64]) -> f64 {
        match &self.kind {
            KernelKind::Matern52Ard {
                length_scales,
                signal_variance,
            } => signal_variance * matern52(scaled_distance(x1, x2, length_scales)),
            KernelKind::Matern32Ard {
                length_scales,
                signal_variance,
            } => signal_variance * matern32(scaled_distance(x1, x2, length_scales)),
            KernelKind::Linear {
                linear_variances,
                offset,
            } => {
                offset
                    + linear_variances
                        .iter()
                        .zip(x1.iter().zip(x2))
                        .map(|(v, (a, b))| v * a * b)
                        .sum::<f64>()
            }
        }
    }

    /// Hyperparameters as an unconstrained log vector:
    /// `[log l_1.., log sf2, log sn2]` or `[log v_1.., log offset, log sn2]`.
    pub fn to_log_params(&self) -> Vec<f64> {
        let (lo, hi) = self.log_bounds();
        let mut p: Vec<f64> = match &self.kind {
            KernelKind::Matern52Ard {
                length_scales,
                signal_variance,
            }
            | KernelKind::Matern32Ard {
                length_scales,
                signal_variance,
            } => length_scales
                .iter()
                .map(|l| l.ln())
                .chain(std::iter::once(signal_variance.ln()))
                .collect(),
            KernelKind::Linear {
                linear_variances,
                offset,
            } => linear_variances
                .iter()
                .chain(std::iter::once(offset))
                .map(|v| v.ln())
                .collect(),
        };
        p.push(self.noise_variance.ln());
        for ((v, l), h) in p.iter_mut().zip(&lo).zip(&hi) {
            *v = v.clamp(*l, *h);
        }
        p
    }

    pub fn with_log_params(&self, p: &[f64]) -> KernelSpec {
        let d = self.dim();
        debug_assert_eq!(p.len(), d + 2);
        let noise_variance = p[d + 1].exp();
        let kind = match &self.kind {
            KernelKind::Matern52Ard { .. } => KernelKind::Matern52Ard {
                length_scales: p[..d].iter().map(|v| v.exp()).collect(),
                signal_variance: p[d].exp(),
            },
            KernelKind::Matern32Ard { .. } => KernelKind::Matern32Ard {
                length_scales: p[..d].iter().map(|v| v.exp()).collect(),
                signal_variance: p[d].exp(),
            },
            KernelKind::Linear { .. } => KernelKind::Linear {
                linear_variances: p[..d].iter().map(|v| v.exp()).collect(),
                offset: p[d].exp(),
            },
        };
        KernelSpec {
            kind,
            noise_variance,
        }
    }

    pub fn log_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let (first, second) = if self.family().is_ard() {
            (LOG_LENGTH_SCALE_BOUNDS, LOG_SIGNAL_VARIANCE_BOUNDS)
        } else {
            (LOG_LINEAR_VARIANCE_BOUNDS, LOG_LINEAR_VARIANCE_BOUNDS)
        };
        let mut lo = vec![first.0; d];
        let mut hi = vec![first.1; d];
        lo.push(second.0);
        hi.push(second.1);
        lo.push(LOG_NOISE_VARIANCE_BOUNDS.0);
        hi.push(LOG_NOISE_VARIANCE_BOUNDS.1);
        (lo, hi)
    }
}

#[inline]
fn scaled_distance(x1: &[f64], x2: &[f64], length_scales: &[f64]) -> f64 {
    x1.iter()
        .zip(x2)
        .zip(length_scales)
        .map(|((a, b), l)| {
            let t = (a - b) / l;
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub(crate) fn matern52(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[inline]
pub(crate) fn matern32(r: f64) -> f64 {
    let s = SQRT3 * r;
    (1.0 + s) * (-s).exp()
}
