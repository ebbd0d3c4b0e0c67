use nalgebra::{DMatrix, DVector};

use super::{ExplainError, ImportanceMethod, ImportanceScores};
use crate::engine::SurrogateDataset;

pub const MAX_SWEEPS: usize = 100_000;
const TOL: f64 = 1e-8;
const POLISH_EVERY: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub sweeps: usize,
}

/// Rows and targets centered by their (weighted) means and scaled by the
/// square root of the weights, so the intercept drops out of the problem.
struct Centered {
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

fn center(x: &[Vec<f64>], y: &[f64], weights: Option<&[f64]>) -> Result<Centered, ExplainError> {
    let n = x.len();
    if n == 0 {
        return Err(ExplainError::TooFewPoints(0));
    }
    if y.len() != n {
        return Err(ExplainError::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let d = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(ExplainError::DimensionMismatch {
            expected: d,
            got: r.len(),
        });
    }
    let w: Vec<f64> = match weights {
        Some(w) if w.len() != n => {
            return Err(ExplainError::DimensionMismatch {
                expected: n,
                got: w.len(),
            })
        }
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let total: f64 = w.iter().sum();
    if !(total > 0.0) || w.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(ExplainError::DegenerateWeights);
    }
    let x_mean: Vec<f64> = (0..d)
        .map(|j| x.iter().zip(&w).map(|(r, wi)| wi * r[j]).sum::<f64>() / total)
        .collect();
    let y_mean = y.iter().zip(&w).map(|(v, wi)| wi * v).sum::<f64>() / total;
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let cols = (0..d)
        .map(|j| {
            x.iter()
                .zip(&sw)
                .map(|(r, s)| s * (r[j] - x_mean[j]))
                .collect()
        })
        .collect();
    let y = y.iter().zip(&sw).map(|(v, s)| s * (v - y_mean)).collect();
    Ok(Centered {
        cols,
        y,
        x_mean,
        y_mean,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn soft_threshold(rho: f64, lambda: f64) -> f64 {
    (rho.abs() - lambda).max(0.0) * rho.signum()
}

fn objective(c: &Centered, w: &[f64], lambda: f64) -> f64 {
    let mut resid = c.y.clone();
    for (col, v) in c.cols.iter().zip(w) {
        if *v != 0.0 {
            for (r, x) in resid.iter_mut().zip(col) {
                *r -= v * x;
            }
        }
    }
    0.5 * dot(&resid, &resid) + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Exact refinement by feature-sign search, started from `w`.
///
/// Each step solves the stationarity equations on the current support with
/// fixed signs, then moves to the best point on the segment towards that
/// solution, stopping where a coefficient crosses zero if that is better.
/// Coordinate descent stops on the step size, which on collinear designs
/// can leave the iterate far from the optimum; this finishes the job. Returns
/// `None` if the optimality conditions are not met within the step limit.
fn feature_sign(c: &Centered, w: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let d = w.len();
    let gram = DMatrix::from_fn(d, d, |a, b| dot(&c.cols[a], &c.cols[b]));
    let xty: Vec<f64> = c.cols.iter().map(|col| dot(col, &c.y)).collect();
    let tol = 1e-9 * xty.iter().fold(lambda.max(1.0), |m, v| m.max(v.abs()));
    let grad = |w: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|j| xty[j] - (0..d).map(|k| gram[(j, k)] * w[k]).sum::<f64>())
            .collect()
    };
    let mut w = w.to_vec();
    let mut signs: Vec<f64> = w
        .iter()
        .map(|v| if *v == 0.0 { 0.0 } else { v.signum() })
        .collect();

    for _ in 0..10 * d + 50 {
        let g = grad(&w);
        let on_support = (0..d)
            .filter(|&j| w[j] != 0.0)
            .all(|j| (g[j] - lambda * signs[j]).abs() <= tol);
        if on_support {
            let entering = (0..d)
                .filter(|&j| w[j] == 0.0 && g[j].abs() > lambda + tol)
                .max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs()));
            match entering {
                None => return Some(w),
                Some(j) => signs[j] = g[j].signum(),
            }
        }
        let support: Vec<usize> = (0..d).filter(|&j| signs[j] != 0.0).collect();
        let k = support.len();
        let sub = DMatrix::from_fn(k, k, |a, b| gram[(support[a], support[b])]);
        let rhs = DVector::from_fn(k, |a, _| xty[support[a]] - lambda * signs[support[a]]);
        let target = sub.cholesky()?.solve(&rhs);

        // candidates: the full step and every zero crossing on the way
        let mut best = w.clone();
        let mut best_f = objective(c, &w, lambda);
        let mut try_point = |t: f64, zero: Option<usize>| {
            let mut p = w.clone();
            for (a, &j) in support.iter().enumerate() {
                p[j] = w[j] + t * (target[a] - w[j]);
            }
            if let Some(j) = zero {
                p[j] = 0.0;
            }
            let f = objective(c, &p, lambda);
            if f < best_f {
                best_f = f;
                best = p;
            }
        };
        try_point(1.0, None);
        for (a, &j) in support.iter().enumerate() {
            if w[j] != 0.0 && target[a].signum() != w[j].signum() {
                try_point(w[j] / (w[j] - target[a]), Some(j));
            }
        }
        if best == w {
            // no descent from here: either optimal up to rounding or stuck
            return None;
        }
        w = best;
        for j in 0..d {
            if w[j] == 0.0 || w[j].signum() != signs[j] {
                signs[j] = if w[j] == 0.0 { 0.0 } else { w[j].signum() };
            }
        }
    }
    None
}

/// The smallest `lambda` at which every coefficient is zero, divided by 100.
pub fn default_lambda(
    x: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
) -> Result<f64, ExplainError> {
    let c = center(x, y, weights)?;
    let lambda_max = c
        .cols
        .iter()
        .map(|col| dot(col, &c.y).abs())
        .fold(0.0, f64::max);
    Ok(lambda_max / 100.0)
}

/// Minimizes `1/2 sum_i w_i (y_i - x_i.w - b)^2 + lambda |w|_1` by cyclic
/// coordinate descent. The intercept is not penalized.
pub fn lasso(
    x: &[Vec<f64>],
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
) -> Result<LassoFit, ExplainError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(ExplainError::BadLambda(lambda));
    }
    let c = center(x, y, weights)?;
    let d = c.cols.len();
    let norms: Vec<f64> = c.cols.iter().map(|col| dot(col, col)).collect();
    let mut w = vec![0.0; d];
    let mut resid = c.y.clone();

    let mut sweeps = 0;
    loop {
        if sweeps == MAX_SWEEPS {
            return Err(ExplainError::NonConvergence(MAX_SWEEPS));
        }
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..d {
            if norms[j] <= 0.0 {
                continue;
            }
            let col = &c.cols[j];
            let rho = dot(col, &resid) + norms[j] * w[j];
            let next = soft_threshold(rho, lambda) / norms[j];
            let delta = next - w[j];
            if delta != 0.0 {
                for (r, v) in resid.iter_mut().zip(col) {
                    *r -= delta * v;
                }
                w[j] = next;
            }
            max_change = max_change.max(delta.abs());
        }
        if max_change < TOL {
            break;
        }
        // on collinear designs descent crawls long after the support settles
        if sweeps % POLISH_EVERY == 0 {
            if let Some(exact) = feature_sign(&c, &w, lambda) {
                w = exact;
                break;
            }
        }
    }
    if let Some(exact) = feature_sign(&c, &w, lambda) {
        w = exact;
    }
    let intercept = c.y_mean - dot(&c.x_mean, &w);
    Ok(LassoFit {
        coefficients: w,
        intercept,
        sweeps,
    })
}

/// LASSO on the raw surrogate points, unweighted. `lambda = None` uses
/// [`default_lambda`].
pub fn sparse_linear_importance(
    ds: &SurrogateDataset,
    lambda: Option<f64>,
) -> Result<ImportanceScores, ExplainError> {
    let x = ds.inputs();
    let distinct = {
        let mut seen: Vec<&Vec<f64>> = Vec::new();
        for r in &x {
            if !seen.contains(&r) {
                seen.push(r);
            }
        }
        seen.len()
    };
    if distinct < 2 {
        return Err(ExplainError::TooFewPoints(distinct));
    }
    let y = ds.targets();
    let lambda = match lambda {
        Some(l) => l,
        None => default_lambda(&x, &y, None)?,
    };
    let fit = lasso(&x, &y, None, lambda)?;
    Ok(ImportanceScores::from_signed(
        fit.coefficients,
        ImportanceMethod::SparseLinear,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SurrogatePoint;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
            .collect()
    }

    /// Least squares with an intercept column via the normal equations.
    fn ols_oracle(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
        let (n, d) = (x.len(), x[0].len());
        let a = DMatrix::from_fn(n, d + 1, |i, j| if j == d { 1.0 } else { x[i][j] });
        let b = DVector::from_column_slice(y);
        let sol = (a.transpose() * &a)
            .lu()
            .solve(&(a.transpose() * b))
            .unwrap();
        (sol.rows(0, d).iter().cloned().collect(), sol[d])
    }

    fn dataset(x: &[Vec<f64>], y: &[f64]) -> SurrogateDataset {
        SurrogateDataset {
            points: x
                .iter()
                .zip(y)
                .enumerate()
                .map(|(i, (x, y))| SurrogatePoint {
                    x: x.clone(),
                    y: *y,
                    iteration: i,
                })
                .collect(),
        }
    }

    #[test]
    fn orthonormal_design_is_least_squares() {
        // centered orthonormal columns
        let x = vec![
            vec![0.5, 0.5],
            vec![0.5, -0.5],
            vec![-0.5, 0.5],
            vec![-0.5, -0.5],
        ];
        let y = vec![3.0, 1.0, -1.0, 0.5];
        let fit = lasso(&x, &y, None, 0.0).unwrap();
        let (w, b) = ols_oracle(&x, &y);
        for (got, want) in fit.coefficients.iter().zip(&w) {
            assert!((got - want).abs() < 1e-8);
        }
        assert!((fit.intercept - b).abs() < 1e-8);
    }

    #[test]
    fn full_shrinkage_at_lambda_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = gaussian(&mut rng, 15, 3);
        let y: Vec<f64> = x.iter().map(|r| r[0] - 2.0 * r[2] + 0.5).collect();
        let lambda_max = 100.0 * default_lambda(&x, &y, None).unwrap();
        let fit = lasso(&x, &y, None, lambda_max).unwrap();
        assert!(fit.coefficients.iter().all(|w| *w == 0.0));
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        assert!((fit.intercept - ybar).abs() < 1e-12);
        let fit = lasso(&x, &y, None, 0.99 * lambda_max).unwrap();
        assert!(fit.coefficients.iter().any(|w| *w != 0.0));
    }

    #[test]
    fn single_feature_soft_threshold() {
        // centered unit-norm column with x.y = 2
        let s = 0.5f64.sqrt();
        let x = vec![vec![s], vec![-s], vec![0.0]];
        let y = vec![2.0 * s, -2.0 * s, 0.0];
        let fit = lasso(&x, &y, None, 0.5).unwrap();
        let rho: f64 = 2.0;
        let oracle = (rho.abs() - 0.5).max(0.0) * rho.signum();
        assert!((fit.coefficients[0] - oracle).abs() < 1e-12);
        assert!((oracle - 1.5).abs() < 1e-15);
    }

    #[test]
    fn weighted_fit_matches_replicated_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = gaussian(&mut rng, 6, 2);
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1] + r[1]).collect();
        let weights = [1.0, 2.0, 1.0, 3.0, 1.0, 2.0];
        let mut xr = Vec::new();
        let mut yr = Vec::new();
        for i in 0..6 {
            for _ in 0..weights[i] as usize {
                xr.push(x[i].clone());
                yr.push(y[i]);
            }
        }
        let a = lasso(&x, &y, Some(&weights), 0.3).unwrap();
        let b = lasso(&xr, &yr, None, 0.3).unwrap();
        for j in 0..2 {
            assert!((a.coefficients[j] - b.coefficients[j]).abs() < 1e-7);
        }
        assert!((a.intercept - b.intercept).abs() < 1e-7);
    }

    #[test]
    fn near_square_design_reaches_least_squares() {
        // n = d + 2, a case where the step-size stopping rule alone was not enough
        let mut rng = ChaCha8Rng::seed_from_u64(7080);
        let x = gaussian(&mut rng, 7, 5);
        let y: Vec<f64> = gaussian(&mut rng, 7, 1).into_iter().map(|r| r[0]).collect();
        let fit = lasso(&x, &y, None, 0.0).unwrap();
        let (w, _) = ols_oracle(&x, &y);
        for (got, want) in fit.coefficients.iter().zip(&w) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn nearly_collinear_columns_converge() {
        // points spread along the diagonal, as broadcast FUR shifts produce
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 12;
        let x: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let t: f64 = StandardNormal.sample(&mut rng);
                (0..d)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        t + 1e-5 * e
                    })
                    .collect()
            })
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 1.0 / (1.0 + (-r.iter().sum::<f64>() / 5.0).exp()))
            .collect();
        let lambda = default_lambda(&x, &y, None).unwrap();
        let fit = lasso(&x, &y, None, lambda).unwrap();
        let n = x.len() as f64;
        let xm: Vec<f64> = (0..d)
            .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let ym = y.iter().sum::<f64>() / n;
        let r: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(xi, yi)| {
                yi - ym
                    - (0..d)
                        .map(|j| (xi[j] - xm[j]) * fit.coefficients[j])
                        .sum::<f64>()
            })
            .collect();
        for j in 0..d {
            let g: f64 = x.iter().zip(&r).map(|(xi, ri)| (xi[j] - xm[j]) * ri).sum();
            let w = fit.coefficients[j];
            if w != 0.0 {
                assert!((g - lambda * w.signum()).abs() < 1e-9, "active {j}: {g}");
            } else {
                assert!(g.abs() <= lambda + 1e-9, "inactive {j}: {g}");
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            lasso(&x, &[0.0, 1.0], None, -1.0),
            Err(ExplainError::BadLambda(_))
        ));
        assert!(matches!(
            lasso(&x, &[0.0, 1.0], Some(&[0.0, 0.0]), 0.0),
            Err(ExplainError::DegenerateWeights)
        ));
        let same = dataset(&[vec![1.0], vec![1.0]], &[0.0, 1.0]);
        assert!(matches!(
            sparse_linear_importance(&same, None),
            Err(ExplainError::TooFewPoints(1))
        ));
    }

    #[test]
    fn surrogate_scores_are_coefficients() {
        let x: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![i as f64, (i * i % 7) as f64])
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] - r[1] + 1.0).collect();
        let s = sparse_linear_importance(&dataset(&x, &y), Some(0.0)).unwrap();
        assert!((s.signed_scores[0] - 2.0).abs() < 1e-6);
        assert!((s.signed_scores[1] + 1.0).abs() < 1e-6);
        assert_eq!(s.signs, vec![1, -1]);
        assert_eq!(s.method, ImportanceMethod::SparseLinear);
    }

    proptest! {
        #[test]
        fn kkt_conditions_hold(seed in 0u64..10_000, n in 3usize..25, d in 1usize..7, frac in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = gaussian(&mut rng, n, d);
            let y: Vec<f64> = gaussian(&mut rng, n, 1).into_iter().map(|r| r[0]).collect();
            let lambda = frac * 100.0 * default_lambda(&x, &y, None).unwrap();
            let fit = lasso(&x, &y, None, lambda).unwrap();
            let r: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| yi - dot(xi, &fit.coefficients) - fit.intercept).collect();
            prop_assert!(r.iter().sum::<f64>().abs() < 1e-6);
            for j in 0..d {
                let g: f64 = x.iter().zip(&r).map(|(xi, ri)| xi[j] * ri).sum();
                if fit.coefficients[j] != 0.0 {
                    prop_assert!((g - lambda * fit.coefficients[j].signum()).abs() < 1e-6, "active {j}: {g} vs {lambda}");
                } else {
                    prop_assert!(g.abs() <= lambda + 1e-6, "inactive {j}: {g} vs {lambda}");
                }
            }
        }

        #[test]
        fn zero_lambda_is_least_squares(seed in 0u64..10_000, d in 1usize..6, extra in 2usize..15) {
            let n = (d + extra).min(20);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = gaussian(&mut rng, n, d);
            let y: Vec<f64> = gaussian(&mut rng, n, 1).into_iter().map(|r| r[0]).collect();
            let fit = lasso(&x, &y, None, 0.0).unwrap();
            let (w, b) = ols_oracle(&x, &y);
            for j in 0..d {
                prop_assert!((fit.coefficients[j] - w[j]).abs() < 1e-6, "{:?} vs {:?}", fit.coefficients, w);
            }
            prop_assert!((fit.intercept - b).abs() < 1e-6);
        }
    }
}
