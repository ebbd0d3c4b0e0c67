//! The active sampling loop.
//!
//! Starting from the index sample, each round maximizes the acquisition
//! score over `[x0 - sigma_D, x0 + sigma_D]`, queries the model at the
//! maximizer, appends the answer and refits the GP. Hyperparameters are
//! re-optimized every `refit_every` rounds, warm-started from the previous
//! optimum. A run makes exactly `budget + 1` model queries.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{
    self, AcquisitionError, AcquisitionKind, AcquisitionSpec, BoxDomain, MaximizeOptions, Proposal,
};
use crate::blackbox::{BlackBoxModel, ModelError};
use crate::dataset::FeatureStats;
use crate::gpr::{
    optimize_hyperparameters, GpError, GpModel, HyperOptions, KernelFamily, KernelSpec,
};

#[derive(Debug, Error)]
pub enum EngineErrorKind {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
}

/// A failed run with everything gathered before the failure.
#[derive(Debug, Error)]
#[error("{kind} (after {} surrogate points)", partial.len())]
pub struct EngineError {
    pub kind: EngineErrorKind,
    pub partial: SurrogateDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainRequest {
    pub x0: Vec<f64>,
    pub budget: usize,
    pub kernel: KernelSpec,
    pub acquisition: AcquisitionKind,
    pub sigma_d: Vec<f64>,
    pub sigma_bar: f64,
    pub seed: u64,
    pub refit_every: usize,
    pub hyper: HyperOptions,
    pub search: MaximizeOptions,
}

impl ExplainRequest {
    /// Request with the default FUR acquisition, a kernel template at the
    /// feature scale and re-optimization every 5 rounds.
    pub fn new(
        x0: Vec<f64>,
        budget: usize,
        family: KernelFamily,
        stats: &FeatureStats,
        seed: u64,
    ) -> Self {
        ExplainRequest {
            kernel: KernelSpec::template(family, &stats.sigma_per_feature),
            x0,
            budget,
            acquisition: AcquisitionKind::fur(),
            sigma_d: stats.sigma_per_feature.clone(),
            sigma_bar: stats.sigma_bar,
            seed,
            refit_every: 5,
            hyper: HyperOptions::default().with_restarts(2),
            search: MaximizeOptions::default(),
        }
    }

    pub fn with_acquisition(mut self, acquisition: AcquisitionKind) -> Self {
        self.acquisition = acquisition;
        self
    }

    pub fn validate(&self) -> Result<(), EngineErrorKind> {
        let bad = |m: String| Err(EngineErrorKind::InvalidRequest(m));
        let d = self.x0.len();
        if d == 0 {
            return bad("empty index sample".into());
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("non-finite index sample".into());
        }
        if self.budget == 0 {
            return bad("budget must be >= 1".into());
        }
        if self.refit_every == 0 {
            return bad("refit_every must be >= 1".into());
        }
        if self.sigma_d.len() != d {
            return bad(format!(
                "sigma_D has {} entries for d = {d}",
                self.sigma_d.len()
            ));
        }
        if self.sigma_d.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("sigma_D entries must be finite and > 0".into());
        }
        if self.kernel.dim() != d {
            return bad(format!(
                "kernel has dimension {} for d = {d}",
                self.kernel.dim()
            ));
        }
        self.kernel.validate()?;
        AcquisitionSpec::from_kind(self.acquisition, &self.x0, self.sigma_bar).validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePoint {
    pub x: Vec<f64>,
    pub y: f64,
    pub iteration: usize,
}

/// Query records in acquisition order; entry 0 is the index sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurrogateDataset {
    pub points: Vec<SurrogatePoint>,
}

impl SurrogateDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.x.clone()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.x.len())
    }

    /// `iteration,x_0..x_{d-1},y` with shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.dim();
        let mut header = vec!["iteration".to_string()];
        header.extend((0..d).map(|i| format!("x_{i}")));
        header.push("y".into());
        w.write_record(&header)?;
        for p in &self.points {
            let mut rec = vec![p.iteration.to_string()];
            rec.extend(p.x.iter().map(|v| v.to_string()));
            rec.push(p.y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> csv::Result<SurrogateDataset> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let mut points = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
            let iteration = rec[0].parse::<usize>().unwrap_or(usize::MAX);
            let k = rec.len();
            points.push(SurrogatePoint {
                iteration,
                x: (1..k - 1).map(|i| parse(&rec[i])).collect(),
                y: parse(&rec[k - 1]),
            });
        }
        Ok(SurrogateDataset { points })
    }
}

/// What an observer sees each round, before the model is queried.
#[derive(Debug)]
pub struct Round<'a> {
    /// Round number `l`, starting at 1.
    pub iteration: usize,
    /// Acquisition index `|D| + 1`.
    pub n: usize,
    pub gp: &'a GpModel,
    pub proposal: &'a Proposal,
    pub domain: &'a BoxDomain,
}

/// Independent deterministic stream `stream` derived from `seed`.
pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn run_unravel<M: BlackBoxModel + ?Sized>(
    req: &ExplainRequest,
    model: &mut M,
) -> Result<(SurrogateDataset, GpModel), EngineError> {
    run_active_loop(req, None, model, &mut |_| {})
}

/// The loop behind [`run_unravel`], with an optional domain override and a
/// per-round observer.
pub fn run_active_loop<M: BlackBoxModel + ?Sized>(
    req: &ExplainRequest,
    domain: Option<&BoxDomain>,
    model: &mut M,
    observer: &mut dyn FnMut(&Round<'_>),
) -> Result<(SurrogateDataset, GpModel), EngineError> {
    let mut ds = SurrogateDataset::default();
    let fail = |kind: EngineErrorKind, ds: &SurrogateDataset| EngineError {
        kind,
        partial: ds.clone(),
    };

    req.validate().map_err(|k| fail(k, &ds))?;
    let d = req.x0.len();
    if model.dim() != d {
        return Err(fail(
            EngineErrorKind::InvalidRequest(format!(
                "model `{}` has d = {}, index sample has {d}",
                model.name(),
                model.dim()
            )),
            &ds,
        ));
    }
    let domain = match domain {
        Some(b) => b.clone(),
        None => BoxDomain::around(&req.x0, &req.sigma_d).map_err(|e| fail(e.into(), &ds))?,
    };
    let spec = AcquisitionSpec::from_kind(req.acquisition, &req.x0, req.sigma_bar);
    let mut rng = rng_stream(req.seed, 0);

    let y0 = model.predict(&req.x0).map_err(|e| fail(e.into(), &ds))?;
    ds.points.push(SurrogatePoint {
        x: req.x0.clone(),
        y: y0,
        iteration: 0,
    });
    let mut kernel = req.kernel.clone();
    let mut gp =
        GpModel::fit(&ds.inputs(), &ds.targets(), &kernel).map_err(|e| fail(e.into(), &ds))?;

    for l in 1..=req.budget {
        let n = ds.len() + 1;
        let proposal = acquisition::maximize(&gp, &spec, &domain, n, &mut rng, &req.search)
            .map_err(|e| fail(e.into(), &ds))?;
        observer(&Round {
            iteration: l,
            n,
            gp: &gp,
            proposal: &proposal,
            domain: &domain,
        });
        let y = model
            .predict(&proposal.x)
            .map_err(|e| fail(e.into(), &ds))?;
        ds.points.push(SurrogatePoint {
            x: proposal.x,
            y,
            iteration: l,
        });
        let (x, ys) = (ds.inputs(), ds.targets());
        if (l - 1) % req.refit_every == 0 {
            let hyper_seed = req
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(l as u64);
            kernel = optimize_hyperparameters(&x, &ys, &kernel, &req.hyper, hyper_seed)
                .map_err(|e| fail(e.into(), &ds))?;
            log::debug!("round {l}: hyperparameters {kernel:?}");
        }
        gp = GpModel::fit(&x, &ys, &kernel).map_err(|e| fail(e.into(), &ds))?;
    }
    Ok((ds, gp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub distance_to_x0: f64,
    /// Posterior std at `x0` given the points up to this iteration.
    pub sigma_at_x0: f64,
}

/// Per-iteration convergence diagnostics. The posterior at each prefix is
/// refit with `kernel` (normally the final run's hyperparameters).
pub fn sample_efficiency_trace(
    ds: &SurrogateDataset,
    x0: &[f64],
    kernel: &KernelSpec,
) -> Result<Vec<TraceEntry>, GpError> {
    let (x, y) = (ds.inputs(), ds.targets());
    (0..ds.len())
        .map(|i| {
            let gp = GpModel::fit(&x[..=i], &y[..=i], kernel)?;
            let p = gp.posterior(x0)?;
            Ok(TraceEntry {
                iteration: ds.points[i].iteration,
                distance_to_x0: euclidean(&ds.points[i].x, x0),
                sigma_at_x0: p.std(),
            })
        })
        .collect()
}

pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "distance_to_x0", "sigma_at_x0"])?;
    for t in trace {
        w.write_record([
            t.iteration.to_string(),
            t.distance_to_x0.to_string(),
            t.sigma_at_x0.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}
