use std::io::Write;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::acquisition::{self, AcquisitionSpec, Beta, BoxDomain};
use crate::blackbox::BlackBoxModel;
use crate::dataset::FeatureStats;
use crate::engine::{euclidean, rng_stream, run_active_loop, ExplainRequest};
use crate::gpr::KernelFamily;

/// `eps_1` values for the Markov check, as fractions of the box diameter.
pub const LEMMA_FRACTIONS: [f64; 3] = [0.1, 0.5, 0.9];

const GRID_1D: usize = 10_000;
const GRID_2D: usize = 256;
const COINCIDENCE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretConfig {
    pub x0: Vec<f64>,
    pub domain: BoxDomain,
    pub budget: usize,
    pub trials: usize,
    pub seed: u64,
    pub kernel: KernelFamily,
}

/// One round of one trial: the FUR choice that was queried and the UCB
/// choice computed on the same posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRound {
    pub trial: usize,
    pub round: usize,
    pub x_g: Vec<f64>,
    pub x_l: Vec<f64>,
    pub f_g: f64,
    pub f_l: f64,
}

/// Raw trials, reusable across several `eps_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSimulation {
    pub config: RegretConfig,
    pub gamma: f64,
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub f_x0: f64,
    /// Largest slope between neighbouring grid points.
    pub lipschitz: f64,
    /// `trials[t][l - 1]` is round `l` of trial `t`.
    pub trials: Vec<Vec<TrialRound>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub eps_1: f64,
    /// Fraction of trials with `|x_g - x_l| >= eps_1`.
    pub empirical: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub mean_r_g: f64,
    pub mean_r_l: f64,
    pub mean_abs_diff: f64,
    pub d_0g: f64,
    pub beta_0: f64,
    pub delta: f64,
    pub eta_1: f64,
    pub eta_2: f64,
    /// `A / eta_1 + M / eta_2`, so that `Pr >= 1 - zeta`.
    pub zeta: f64,
    /// `1 - A / eta_1 - M / eta_2`, the expression as stated next to the
    /// theorem.
    pub zeta_statement: f64,
    pub vacuous: bool,
    pub empirical_frequency: f64,
    /// `None` when the bound is vacuous.
    pub bound_holds: Option<bool>,
    pub lemma: Vec<LemmaCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub eps_l: f64,
    pub gamma: f64,
    pub lipschitz: f64,
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub trials: usize,
    pub budget: usize,
    pub rounds: Vec<RoundSummary>,
    pub non_vacuous_rounds: usize,
    pub all_bounds_hold: bool,
    pub all_lemma_checks_hold: bool,
}

fn grid_points(domain: &BoxDomain) -> Result<Vec<Vec<Vec<f64>>>, EvalError> {
    let axis = |j: usize, k: usize| -> Vec<f64> {
        let (lo, hi) = (domain.lower()[j], domain.upper()[j]);
        (0..k)
            .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
            .collect()
    };
    match domain.dim() {
        1 => Ok(vec![axis(0, GRID_1D)
            .into_iter()
            .map(|v| vec![v])
            .collect()]),
        2 => {
            let (a, b) = (axis(0, GRID_2D), axis(1, GRID_2D));
            Ok(a.iter()
                .map(|u| b.iter().map(|v| vec![*u, *v]).collect())
                .collect())
        }
        d => Err(EvalError::GridTooLarge(d)),
    }
}

/// Grid minimum and the largest slope between axis neighbours.
fn grid_oracle<M: BlackBoxModel + ?Sized>(
    objective: &mut M,
    domain: &BoxDomain,
) -> Result<(Vec<f64>, f64, f64), EvalError> {
    let grid = grid_points(domain)?;
    let mut values = Vec::with_capacity(grid.len());
    for row in &grid {
        let mut v = Vec::with_capacity(row.len());
        for x in row {
            let y = objective.predict(x)?;
            if !y.is_finite() {
                return Err(EvalError::DegenerateGrid(format!(
                    "objective is {y} at {x:?}"
                )));
            }
            v.push(y);
        }
        values.push(v);
    }
    let mut best = (grid[0][0].clone(), values[0][0]);
    let mut slope: f64 = 0.0;
    for (i, row) in grid.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            let y = values[i][j];
            if y < best.1 {
                best = (x.clone(), y);
            }
            if j + 1 < row.len() {
                slope = slope.max((values[i][j + 1] - y).abs() / euclidean(&row[j + 1], x));
            }
            if i + 1 < grid.len() {
                slope = slope.max((values[i + 1][j] - y).abs() / euclidean(&grid[i + 1][j], x));
            }
        }
    }
    Ok((best.0, best.1, slope))
}

/// Paired trials: each trial runs the FUR loop from `x0` and, every round,
/// also maximizes UCB on the same posterior.
pub fn simulate_regret<M: BlackBoxModel + ?Sized>(
    objective: &mut M,
    config: &RegretConfig,
) -> Result<RegretSimulation, EvalError> {
    let d = config.domain.dim();
    if objective.dim() != d || config.x0.len() != d {
        return Err(EvalError::InvalidConfig(format!(
            "objective d = {}, domain d = {d}, x0 d = {}",
            objective.dim(),
            config.x0.len()
        )));
    }
    if !config.domain.contains(&config.x0, 0.0) {
        return Err(EvalError::InvalidConfig(
            "x0 lies outside the domain".into(),
        ));
    }
    if config.trials == 0 || config.budget == 0 {
        return Err(EvalError::InvalidConfig(
            "trials and budget must be >= 1".into(),
        ));
    }
    let (x_star, f_star, lipschitz) = grid_oracle(objective, &config.domain)?;
    let f_x0 = objective.predict(&config.x0)?;
    let half: Vec<f64> = config
        .domain
        .lower()
        .iter()
        .zip(config.domain.upper())
        .map(|(l, u)| 0.5 * (u - l))
        .collect();
    let stats = FeatureStats {
        sigma_bar: half.iter().sum::<f64>() / d as f64,
        mean_per_feature: vec![0.0; d],
        sigma_per_feature: half,
    };
    let ucb = AcquisitionSpec::Ucb {
        beta: Beta::Schedule,
    };

    let mut trials = Vec::with_capacity(config.trials);
    for t in 0..config.trials {
        let seed = config.seed.wrapping_add(t as u64);
        let req = ExplainRequest::new(
            config.x0.clone(),
            config.budget,
            config.kernel,
            &stats,
            seed,
        );
        let mut rng_g = rng_stream(seed, 2);
        let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        let mut ucb_err = None;
        run_active_loop(&req, Some(&config.domain), objective, &mut |round| {
            match acquisition::maximize(
                round.gp,
                &ucb,
                round.domain,
                round.n,
                &mut rng_g,
                &req.search,
            ) {
                Ok(p) => pairs.push((p.x, round.proposal.x.clone())),
                Err(e) => {
                    ucb_err.get_or_insert(e);
                }
            }
        })?;
        if let Some(e) = ucb_err {
            return Err(EvalError::InvalidConfig(format!(
                "UCB maximization failed: {e}"
            )));
        }
        let mut rounds = Vec::with_capacity(pairs.len());
        for (i, (x_g, x_l)) in pairs.into_iter().enumerate() {
            rounds.push(TrialRound {
                trial: t,
                round: i + 1,
                f_g: objective.predict(&x_g)?,
                f_l: objective.predict(&x_l)?,
                x_g,
                x_l,
            });
        }
        trials.push(rounds);
    }
    Ok(RegretSimulation {
        config: config.clone(),
        gamma: config.domain.diameter(),
        x_star,
        f_star,
        f_x0,
        lipschitz,
        trials,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Bound quantities and empirical frequencies per round for one `eps_l`.
pub fn analyze_regret(sim: &RegretSimulation, eps_l: f64) -> Result<RegretReport, EvalError> {
    if !(eps_l > 0.0 && eps_l.is_finite()) {
        return Err(EvalError::InvalidConfig(format!(
            "eps_l must be > 0, got {eps_l}"
        )));
    }
    let gamma = sim.gamma;
    let m = sim.lipschitz;
    let x0 = &sim.config.x0;
    let n_trials = sim.trials.len();
    let mut rounds = Vec::new();
    for l in 0..sim.config.budget {
        let at: Vec<&TrialRound> = sim.trials.iter().map(|t| &t[l]).collect();
        let diffs: Vec<f64> = at.iter().map(|r| (r.f_g - r.f_l).abs()).collect();
        let d_0g = mean(at.iter().map(|r| euclidean(x0, &r.x_g)));
        let beta_0 = at
            .iter()
            .filter(|r| euclidean(x0, &r.x_l) <= COINCIDENCE_TOL * gamma)
            .count() as f64
            / n_trials as f64;
        let delta = mean(at.iter().map(|r| (r.f_g - sim.f_x0).abs()));
        let a = d_0g + (1.0 - beta_0) * gamma;
        let c = eps_l + delta;
        // a flat objective has m = 0: the bound wants eta_1 as large as allowed
        let raw = if m > 0.0 {
            (a * c / m).sqrt()
        } else {
            f64::INFINITY
        };
        let eta_1 = raw.clamp(1e-12 * gamma, 1e6 * gamma);
        let eta_2 = c / eta_1;
        let zeta = a / eta_1 + m / eta_2;
        let zeta_statement = 1.0 - a / eta_1 - m / eta_2;
        let vacuous = zeta >= 1.0;
        let empirical_frequency =
            diffs.iter().filter(|v| **v < eps_l).count() as f64 / n_trials as f64;
        let lemma = LEMMA_FRACTIONS
            .iter()
            .map(|f| {
                let eps_1 = f * gamma;
                let empirical = at
                    .iter()
                    .filter(|r| euclidean(&r.x_g, &r.x_l) >= eps_1)
                    .count() as f64
                    / n_trials as f64;
                let bound = a / eps_1;
                LemmaCheck {
                    eps_1,
                    empirical,
                    bound,
                    holds: empirical <= bound,
                }
            })
            .collect();
        rounds.push(RoundSummary {
            round: l + 1,
            mean_r_g: mean(at.iter().map(|r| r.f_g - sim.f_star)),
            mean_r_l: mean(at.iter().map(|r| r.f_l - sim.f_star)),
            mean_abs_diff: mean(diffs.iter().cloned()),
            d_0g,
            beta_0,
            delta,
            eta_1,
            eta_2,
            zeta,
            zeta_statement,
            vacuous,
            empirical_frequency,
            bound_holds: (!vacuous).then_some(empirical_frequency >= 1.0 - zeta),
            lemma,
        });
    }
    Ok(RegretReport {
        eps_l,
        gamma,
        lipschitz: m,
        x_star: sim.x_star.clone(),
        f_star: sim.f_star,
        trials: n_trials,
        budget: sim.config.budget,
        non_vacuous_rounds: rounds.iter().filter(|r| !r.vacuous).count(),
        all_bounds_hold: rounds.iter().all(|r| r.bound_holds != Some(false)),
        all_lemma_checks_hold: rounds.iter().all(|r| r.lemma.iter().all(|c| c.holds)),
        rounds,
    })
}

pub fn regret_experiment<M: BlackBoxModel + ?Sized>(
    objective: &mut M,
    config: &RegretConfig,
    eps_l: f64,
) -> Result<RegretReport, EvalError> {
    if !(eps_l > 0.0 && eps_l.is_finite()) {
        return Err(EvalError::InvalidConfig(format!(
            "eps_l must be > 0, got {eps_l}"
        )));
    }
    analyze_regret(&simulate_regret(objective, config)?, eps_l)
}

/// One row per trial and round.
pub fn write_trials_csv<W: Write>(sim: &RegretSimulation, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = sim.config.x0.len();
    let mut header = vec!["trial".to_string(), "round".to_string()];
    header.extend((0..d).map(|i| format!("x_g_{i}")));
    header.extend((0..d).map(|i| format!("x_l_{i}")));
    header.extend(["f_g", "f_l", "r_g", "r_l", "abs_diff"].map(String::from));
    w.write_record(&header)?;
    for r in sim.trials.iter().flatten() {
        let mut rec = vec![r.trial.to_string(), r.round.to_string()];
        rec.extend(r.x_g.iter().map(|v| v.to_string()));
        rec.extend(r.x_l.iter().map(|v| v.to_string()));
        rec.extend(
            [
                r.f_g,
                r.f_l,
                r.f_g - sim.f_star,
                r.f_l - sim.f_star,
                (r.f_g - r.f_l).abs(),
            ]
            .map(|v| v.to_string()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
