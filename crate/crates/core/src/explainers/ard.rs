use super::{ExplainError, ImportanceMethod, ImportanceScores};
use crate::gpr::GpModel;

/// Relevance from inverse length-scales, normalized to unit max. Signs come
/// from a central difference of the posterior mean at `x0` with step
/// `1e-3 * sigma_d[j]`.
pub fn ard_importance(
    gp: &GpModel,
    x0: &[f64],
    sigma_d: &[f64],
) -> Result<ImportanceScores, ExplainError> {
    let ls = gp.kernel().length_scales().ok_or(ExplainError::NotArd)?;
    let d = ls.len();
    for got in [x0.len(), sigma_d.len()] {
        if got != d {
            return Err(ExplainError::DimensionMismatch { expected: d, got });
        }
    }
    let inv: Vec<f64> = ls.iter().map(|l| 1.0 / l).collect();
    let top = inv.iter().cloned().fold(0.0, f64::max);
    let magnitudes: Vec<f64> = inv.iter().map(|v| v / top).collect();

    let mut signs = Vec::with_capacity(d);
    let mut x = x0.to_vec();
    for j in 0..d {
        let h = 1e-3 * sigma_d[j];
        x[j] = x0[j] + h;
        let up = gp.mean(&x);
        x[j] = x0[j] - h;
        let down = gp.mean(&x);
        x[j] = x0[j];
        let diff = up - down;
        signs.push(if diff > 0.0 {
            1
        } else if diff < 0.0 {
            -1
        } else {
            0
        });
    }
    Ok(ImportanceScores::new(
        magnitudes,
        signs,
        ImportanceMethod::Ard,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::{optimize_hyperparameters, HyperOptions, KernelSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_2d(k: usize) -> Vec<Vec<f64>> {
        let mut x = Vec::new();
        for i in 0..k {
            for j in 0..k {
                x.push(vec![i as f64 / (k - 1) as f64, j as f64 / (k - 1) as f64]);
            }
        }
        x
    }

    #[test]
    fn reciprocal_length_scales() {
        let x = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.5, 0.2]];
        let gp = GpModel::fit(
            &x,
            &[0.0, 1.0],
            &KernelSpec::matern52(vec![1.0, 2.0, 4.0], 1.0, 1e-4),
        )
        .unwrap();
        let s = ard_importance(&gp, &[0.5; 3], &[1.0; 3]).unwrap();
        assert_eq!(s.magnitudes, vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn linear_kernel_rejected() {
        let gp = GpModel::fit(
            &[vec![0.0], vec![1.0]],
            &[0.0, 1.0],
            &KernelSpec::linear(vec![1.0], 1.0, 1e-4),
        )
        .unwrap();
        assert!(matches!(
            ard_importance(&gp, &[0.0], &[1.0]),
            Err(ExplainError::NotArd)
        ));
    }

    #[test]
    fn irrelevant_feature_fades() {
        let x = grid_2d(6);
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let k0 = KernelSpec::matern52(vec![1.0, 1.0], 1.0, 1e-3);
        let k = optimize_hyperparameters(&x, &y, &k0, &HyperOptions::default(), 2).unwrap();
        let gp = GpModel::fit(&x, &y, &k).unwrap();
        let s = ard_importance(&gp, &[0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert!(
            s.magnitudes[1] < 0.1 * s.magnitudes[0],
            "{:?} {k:?}",
            s.magnitudes
        );
        assert_eq!(s.signs[0], 1);
    }

    #[test]
    fn sign_follows_slope() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0, 0.3]).collect();
        let y: Vec<f64> = x.iter().map(|r| -2.0 * r[0]).collect();
        let gp = GpModel::fit(&x, &y, &KernelSpec::matern52(vec![0.5, 0.5], 1.0, 1e-6)).unwrap();
        let s = ard_importance(&gp, &[0.5, 0.3], &[0.5, 0.5]).unwrap();
        assert_eq!(s.signs[0], -1);
        assert_eq!(s.signed_scores[0], -s.magnitudes[0]);
    }

    proptest! {
        #[test]
        fn permutation_equivariant(
            ls in prop::collection::vec(0.05f64..20.0, 3),
            perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let y: Vec<f64> = x.iter().map(|r| r[0] - r[1] * r[2]).collect();
            let permute = |v: &[f64]| perm.iter().map(|&p| v[p]).collect::<Vec<f64>>();
            let x0 = [0.1, -0.2, 0.3];

            let gp = GpModel::fit(&x, &y, &KernelSpec::matern32(ls.clone(), 1.0, 1e-4)).unwrap();
            let xp: Vec<Vec<f64>> = x.iter().map(|r| permute(r)).collect();
            let gpp = GpModel::fit(&xp, &y, &KernelSpec::matern32(permute(&ls), 1.0, 1e-4)).unwrap();
            let a = ard_importance(&gp, &x0, &[1.0; 3]).unwrap();
            let b = ard_importance(&gpp, &permute(&x0), &[1.0; 3]).unwrap();
            prop_assert_eq!(permute(&a.magnitudes), b.magnitudes);
        }
    }
}
