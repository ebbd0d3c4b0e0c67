//! Bounded coordinate-wise pattern search.
//!
//! Polls `x ± step_i e_i` one coordinate at a time, keeps the first
//! improvement and keeps stepping in that direction while it still
//! improves. When a full sweep finds nothing the steps shrink. The search
//! stops once every step is below its minimum or the evaluation budget is
//! spent. No randomness: the result is a pure function of the inputs.

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSearch {
    pub initial_step: Vec<f64>,
    pub min_step: Vec<f64>,
    pub shrink: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

impl PatternSearch {
    /// Steps as fractions of the box width per coordinate.
    pub fn relative(lower: &[f64], upper: &[f64], initial: f64, min: f64) -> Self {
        let width: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| u - l).collect();
        PatternSearch {
            initial_step: width.iter().map(|w| w * initial).collect(),
            min_step: width.iter().map(|w| w * min).collect(),
            shrink: 0.5,
            max_evals: usize::MAX,
        }
    }

    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    /// Maximize `f` over the box `[lower, upper]` starting at `start`
    /// (clipped into the box). Non-finite values count as `-inf`.
    pub fn maximize<F>(&self, mut f: F, start: &[f64], lower: &[f64], upper: &[f64]) -> SearchResult
    where
        F: FnMut(&[f64]) -> f64,
    {
        let d = start.len();
        debug_assert!(lower.len() == d && upper.len() == d && self.initial_step.len() == d);
        let mut eval = |x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        };
        let mut x: Vec<f64> = (0..d).map(|i| start[i].clamp(lower[i], upper[i])).collect();
        let mut fx = eval(&x);
        let mut evals = 1;
        let mut step = self.initial_step.clone();
        let mut cand = x.clone();

        'outer: while evals < self.max_evals {
            let mut improved = false;
            for i in 0..d {
                if step[i] < self.min_step[i] {
                    continue;
                }
                for dir in [1.0, -1.0] {
                    let mut moved = false;
                    loop {
                        let next = (x[i] + dir * step[i]).clamp(lower[i], upper[i]);
                        if next == x[i] {
                            break;
                        }
                        cand[i] = next;
                        let fc = eval(&cand);
                        evals += 1;
                        if fc > fx {
                            x[i] = next;
                            fx = fc;
                            moved = true;
                        } else {
                            cand[i] = x[i];
                            break;
                        }
                        if evals >= self.max_evals {
                            break 'outer;
                        }
                    }
                    if evals >= self.max_evals {
                        break 'outer;
                    }
                    if moved {
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                let mut all_small = true;
                for (s, m) in step.iter_mut().zip(&self.min_step) {
                    *s *= self.shrink;
                    all_small &= *s < *m;
                }
                if all_small {
                    break;
                }
            }
        }
        SearchResult {
            x,
            value: fx,
            evals,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum() {
        let ps = PatternSearch::relative(&[-2.0, -2.0], &[2.0, 2.0], 0.25, 1e-9);
        let r = ps.maximize(
            |x| -(x[0] - 0.3).powi(2) - 2.0 * (x[1] + 0.7).powi(2),
            &[1.5, 1.5],
            &[-2.0, -2.0],
            &[2.0, 2.0],
        );
        assert!(
            (r.x[0] - 0.3).abs() < 1e-7 && (r.x[1] + 0.7).abs() < 1e-7,
            "{:?}",
            r
        );
    }

    #[test]
    fn respects_bounds() {
        let ps = PatternSearch::relative(&[0.0], &[1.0], 0.25, 1e-9);
        let r = ps.maximize(|x| x[0], &[0.2], &[0.0], &[1.0]);
        assert_eq!(r.x, vec![1.0]);
        let r = ps.maximize(|x| x[0], &[5.0], &[0.0], &[1.0]);
        assert_eq!(r.x, vec![1.0]);
    }

    #[test]
    fn flat_objective_stays_at_start() {
        let ps = PatternSearch::relative(&[0.0, 0.0], &[1.0, 1.0], 0.25, 1e-6);
        let r = ps.maximize(|_| 1.0, &[0.4, 0.6], &[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(r.x, vec![0.4, 0.6]);
    }

    #[test]
    fn eval_budget_honoured() {
        let ps = PatternSearch::relative(&[-1.0; 3], &[1.0; 3], 0.25, 1e-12).with_max_evals(17);
        let r = ps.maximize(
            |x| -x.iter().map(|v| (v - 0.1).abs()).sum::<f64>(),
            &[0.9; 3],
            &[-1.0; 3],
            &[1.0; 3],
        );
        assert!(r.evals <= 17);
    }

    #[test]
    fn nan_treated_as_worst() {
        let ps = PatternSearch::relative(&[0.0], &[1.0], 0.25, 1e-6);
        let r = ps.maximize(
            |x| if x[0] > 0.5 { f64::NAN } else { x[0] },
            &[0.1],
            &[0.0],
            &[1.0],
        );
        assert!(r.x[0] <= 0.5 && r.x[0] > 0.49);
    }
}
