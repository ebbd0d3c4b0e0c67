//! Acquisition scores and their maximizer.
//!
//! FUR scores a candidate by its posterior standard deviation minus its
//! distance to a randomly shifted copy of the index sample:
//!
//! ```text
//! fur(x) = -|| x - x0 - (sigma_bar * eps / ln n) 1 || + sigma_n(x)
//! ```
//!
//! `eps ~ N(0, 1)` is drawn once per maximization and broadcast to every
//! coordinate unless [`ShiftMode::PerCoordinate`] is selected.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gpr::GpModel;
use crate::optimize::PatternSearch;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcquisitionError {
    #[error("UCB beta must be >= 0, got {0}")]
    NegativeBeta(f64),
    #[error("FUR needs iteration index n >= 2, got {0}")]
    IterationTooSmall(usize),
    #[error("FUR sigma_bar must be > 0, got {0}")]
    BadSigmaBar(f64),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, AcquisitionError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(AcquisitionError::InvalidDomain(format!(
                "bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l < u) || !l.is_finite() || !u.is_finite() {
                return Err(AcquisitionError::InvalidDomain(format!(
                    "coordinate {i}: [{l}, {u}]"
                )));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    /// `[center - radius, center + radius]` per coordinate.
    pub fn around(center: &[f64], radius: &[f64]) -> Result<Self, AcquisitionError> {
        if center.len() != radius.len() {
            return Err(AcquisitionError::DimensionMismatch {
                expected: center.len(),
                got: radius.len(),
            });
        }
        BoxDomain::new(
            center.iter().zip(radius).map(|(c, r)| c - r).collect(),
            center.iter().zip(radius).map(|(c, r)| c + r).collect(),
        )
    }

    pub fn unit(d: usize) -> Self {
        BoxDomain {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    pub fn clip(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }

    pub fn sample_uniform(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + (u - l) * rng.random::<f64>())
            .collect()
    }
}

/// Exploration weight for UCB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Beta {
    Fixed(f64),
    /// `2 ln(n^2 pi^2 / 0.6)`.
    Schedule,
}

impl Beta {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            Beta::Fixed(b) => b,
            Beta::Schedule => {
                let n = n.max(1) as f64;
                2.0 * (n * n * std::f64::consts::PI.powi(2) / 0.6).ln()
            }
        }
    }
}

/// How the FUR shift `sigma_bar * eps / ln n` is spread over coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftMode {
    /// One draw, added to every coordinate.
    #[default]
    Broadcast,
    /// An independent draw per coordinate.
    PerCoordinate,
}

/// Acquisition choice without the per-request anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AcquisitionKind {
    Ucb { beta: Beta },
    Ur,
    Fur { shift: ShiftMode },
}

impl AcquisitionKind {
    pub fn fur() -> Self {
        AcquisitionKind::Fur {
            shift: ShiftMode::Broadcast,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AcquisitionKind::Ucb { .. } => "ucb",
            AcquisitionKind::Ur => "ur",
            AcquisitionKind::Fur { .. } => "fur",
        }
    }
}

impl std::str::FromStr for AcquisitionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ucb" => Ok(AcquisitionKind::Ucb {
                beta: Beta::Schedule,
            }),
            "ur" => Ok(AcquisitionKind::Ur),
            "fur" => Ok(AcquisitionKind::fur()),
            other => Err(format!(
                "unknown acquisition `{other}` (expected ucb, ur or fur)"
            )),
        }
    }
}

/// A fully specified acquisition function.
#[derive(Debug, Clone, PartialEq)]
pub enum AcquisitionSpec {
    Ucb {
        beta: Beta,
    },
    Ur,
    Fur {
        x0: Vec<f64>,
        sigma_bar: f64,
        shift: ShiftMode,
    },
}

impl AcquisitionSpec {
    pub fn from_kind(kind: AcquisitionKind, x0: &[f64], sigma_bar: f64) -> Self {
        match kind {
            AcquisitionKind::Ucb { beta } => AcquisitionSpec::Ucb { beta },
            AcquisitionKind::Ur => AcquisitionSpec::Ur,
            AcquisitionKind::Fur { shift } => AcquisitionSpec::Fur {
                x0: x0.to_vec(),
                sigma_bar,
                shift,
            },
        }
    }

    pub fn validate(&self) -> Result<(), AcquisitionError> {
        match self {
            AcquisitionSpec::Ucb {
                beta: Beta::Fixed(b),
            } if !(*b >= 0.0) => Err(AcquisitionError::NegativeBeta(*b)),
            AcquisitionSpec::Fur { sigma_bar, .. }
                if !(*sigma_bar > 0.0 && sigma_bar.is_finite()) =>
            {
                Err(AcquisitionError::BadSigmaBar(*sigma_bar))
            }
            _ => Ok(()),
        }
    }
}

pub fn ucb_score(gp: &GpModel, x: &[f64], beta: f64) -> Result<f64, AcquisitionError> {
    if !(beta >= 0.0) {
        return Err(AcquisitionError::NegativeBeta(beta));
    }
    let p = gp.posterior_unchecked(x);
    Ok(p.mean + beta.sqrt() * p.std())
}

pub fn ur_score(gp: &GpModel, x: &[f64]) -> f64 {
    gp.posterior_unchecked(x).std()
}

/// `|| x - x0 - shift ||_2`, the distance penalty of FUR.
pub fn fur_distance(x: &[f64], x0: &[f64], shift: &[f64]) -> f64 {
    x.iter()
        .zip(x0)
        .zip(shift)
        .map(|((a, b), s)| {
            let t = a - b - s;
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

/// FUR with a scalar draw `eps` broadcast over coordinates.
pub fn fur_score(
    gp: &GpModel,
    x: &[f64],
    x0: &[f64],
    sigma_bar: f64,
    eps: f64,
    n: usize,
) -> Result<f64, AcquisitionError> {
    let shift = fur_shift(sigma_bar, &vec![eps; x.len()], n)?;
    Ok(fur_score_shifted(gp, x, x0, &shift))
}

/// `sigma_bar * eps_i / ln n` per coordinate.
pub fn fur_shift(sigma_bar: f64, eps: &[f64], n: usize) -> Result<Vec<f64>, AcquisitionError> {
    if n < 2 {
        return Err(AcquisitionError::IterationTooSmall(n));
    }
    let ln_n = (n as f64).ln();
    Ok(eps.iter().map(|e| sigma_bar * e / ln_n).collect())
}

pub fn fur_score_shifted(gp: &GpModel, x: &[f64], x0: &[f64], shift: &[f64]) -> f64 {
    -fur_distance(x, x0, shift) + ur_score(gp, x)
}

/// Search settings for [`maximize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximizeOptions {
    /// Random starts; `None` means `8 + 2d`.
    pub starts: Option<usize>,
    /// First poll step as a fraction of the box width.
    pub initial_step: f64,
    /// Stop when every step is below this fraction of the box width.
    pub min_step: f64,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        MaximizeOptions {
            starts: None,
            initial_step: 0.25,
            min_step: 1e-6,
        }
    }
}

/// Result of one acquisition maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub x: Vec<f64>,
    pub score: f64,
    /// The FUR shift used, if any.
    pub shift: Option<Vec<f64>>,
    pub start_index: usize,
}

/// Multi-start pattern search for the acquisition maximum over `domain`.
///
/// For FUR the draw `eps` comes off `rng` first, then the starts; `x0`
/// (clipped) is start 0 and the random starts follow. Equal scores keep
/// the lowest start index.
pub fn maximize(
    gp: &GpModel,
    spec: &AcquisitionSpec,
    domain: &BoxDomain,
    n: usize,
    rng: &mut ChaCha8Rng,
    options: &MaximizeOptions,
) -> Result<Proposal, AcquisitionError> {
    spec.validate()?;
    let d = domain.dim();
    if gp.dim() != d {
        return Err(AcquisitionError::DimensionMismatch {
            expected: gp.dim(),
            got: d,
        });
    }

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let shift = match spec {
        AcquisitionSpec::Fur {
            x0,
            sigma_bar,
            shift,
            ..
        } => {
            if x0.len() != d {
                return Err(AcquisitionError::DimensionMismatch {
                    expected: d,
                    got: x0.len(),
                });
            }
            let eps: Vec<f64> = match shift {
                ShiftMode::Broadcast => vec![StandardNormal.sample(rng); d],
                ShiftMode::PerCoordinate => (0..d).map(|_| StandardNormal.sample(rng)).collect(),
            };
            starts.push(domain.clip(x0));
            Some(fur_shift(*sigma_bar, &eps, n)?)
        }
        _ => None,
    };
    let n_random = options.starts.unwrap_or(8 + 2 * d);
    for _ in 0..n_random {
        starts.push(domain.sample_uniform(rng));
    }

    let beta = match spec {
        AcquisitionSpec::Ucb { beta } => beta.at(n),
        _ => 0.0,
    };
    let objective = |x: &[f64]| -> f64 {
        match spec {
            AcquisitionSpec::Ucb { .. } => {
                let p = gp.posterior_unchecked(x);
                p.mean + beta.sqrt() * p.std()
            }
            AcquisitionSpec::Ur => ur_score(gp, x),
            AcquisitionSpec::Fur { x0, .. } => {
                fur_score_shifted(gp, x, x0, shift.as_deref().unwrap())
            }
        }
    };

    let search = PatternSearch::relative(
        domain.lower(),
        domain.upper(),
        options.initial_step,
        options.min_step,
    );
    let mut best: Option<Proposal> = None;
    for (i, start) in starts.iter().enumerate() {
        let r = search.maximize(objective, start, domain.lower(), domain.upper());
        if best.as_ref().is_none_or(|b| r.value > b.score) {
            best = Some(Proposal {
                x: r.x,
                score: r.value,
                shift: shift.clone(),
                start_index: i,
            });
        }
    }
    Ok(best.expect("at least one start"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::{GpModel, KernelSpec};
    use rand::SeedableRng;

    fn two_point_gp() -> GpModel {
        GpModel::fit(
            &[vec![0.2], vec![0.8]],
            &[1.0, -1.0],
            &KernelSpec::matern52(vec![0.3], 1.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn ucb_degenerates_to_mean() {
        let gp = two_point_gp();
        let p = gp.posterior(&[0.45]).unwrap();
        assert_eq!(ucb_score(&gp, &[0.45], 0.0).unwrap(), p.mean);
        assert!((ucb_score(&gp, &[0.2], 4.0).unwrap() - 1.0).abs() < 1e-4);
        assert_eq!(
            ucb_score(&gp, &[0.3], -1.0),
            Err(AcquisitionError::NegativeBeta(-1.0))
        );
        let want = p.mean + 2.0 * p.std();
        assert!((ucb_score(&gp, &[0.45], 4.0).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn ur_at_data_and_far_away() {
        let gp = two_point_gp();
        assert!(ur_score(&gp, &[0.8]) < 1e-4);
        assert!((ur_score(&gp, &[40.0]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fur_centered_and_cancelled() {
        let gp = two_point_gp();
        let x0 = [0.5];
        assert_eq!(
            fur_score(&gp, &x0, &x0, 1.0, 0.0, 2).unwrap(),
            ur_score(&gp, &x0)
        );
        let s = 0.7 * 1.3 / 5f64.ln();
        let x = [0.5 + s];
        assert!((fur_score(&gp, &x, &x0, 0.7, 1.3, 5).unwrap() - ur_score(&gp, &x)).abs() < 1e-15);
        assert_eq!(
            fur_score(&gp, &x, &x0, 0.7, 1.3, 1),
            Err(AcquisitionError::IterationTooSmall(1))
        );
    }

    #[test]
    fn beta_schedule() {
        let b = Beta::Schedule.at(3);
        assert!((b - 2.0 * (9.0 * std::f64::consts::PI.powi(2) / 0.6).ln()).abs() < 1e-12);
        assert_eq!(Beta::Fixed(0.5).at(100), 0.5);
    }

    #[test]
    fn domain_validation() {
        assert!(BoxDomain::new(vec![0.0], vec![0.0]).is_err());
        assert!(BoxDomain::new(vec![0.0, 1.0], vec![1.0]).is_err());
        let b = BoxDomain::around(&[0.5, 1.0], &[0.5, 2.0]).unwrap();
        assert_eq!(b.lower(), &[0.0, -1.0]);
        assert_eq!(b.upper(), &[1.0, 3.0]);
        assert!((b.diameter() - 17f64.sqrt()).abs() < 1e-15);
        assert_eq!(b.clip(&[2.0, -5.0]), vec![1.0, -1.0]);
    }

    #[test]
    fn maximize_is_seed_deterministic() {
        let gp = two_point_gp();
        let spec = AcquisitionSpec::Fur {
            x0: vec![0.5],
            sigma_bar: 0.3,
            shift: ShiftMode::Broadcast,
        };
        let dom = BoxDomain::unit(1);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            maximize(&gp, &spec, &dom, 3, &mut rng, &MaximizeOptions::default()).unwrap()
        };
        assert_eq!(run(4), run(4));
        assert!(dom.contains(&run(4).x, 0.0));
    }
}
