mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use brainscore::encode::{pearson, standardize, LambdaGrid, RidgeSvd};
use common::*;

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn svd_weights_match_normal_equations(
        n in 6usize..30,
        p in 1usize..8,
        t in 1usize..4,
        log_lambda in -2.0f64..6.0,
        seed in any::<u64>(),
    ) {
        let lambda = 10f64.powf(log_lambda);
        let x = normal(n, p, seed);
        let y = normal(n, t, seed ^ 0xABCD);
        let svd = RidgeSvd::new(&x).unwrap();
        let w = svd.weights(&y, &vec![lambda; t]).unwrap();
        let want = ridge_normal_equations(&x, &y, lambda);
        let scale = want.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(max_abs_diff(&w, &want) <= 1e-8 * scale);
    }

    #[test]
    fn loo_shortcut_equals_refitting(
        n in 5usize..16,
        p in 1usize..6,
        log_lambda in -1.0f64..4.0,
        seed in any::<u64>(),
    ) {
        let lambda = 10f64.powf(log_lambda);
        let x = normal(n, p, seed);
        let y: Vec<f64> = normal(n, 1, seed.wrapping_add(1)).iter().copied().collect();
        let svd = RidgeSvd::new(&x).unwrap();
        let fast = svd.loo_residuals(&y, lambda).unwrap();
        let slow = loo_refit_residuals(&x, &y, lambda);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn chosen_lambda_minimizes_loo_error(
        n in 8usize..24,
        p in 1usize..6,
        t in 1usize..5,
        seed in any::<u64>(),
    ) {
        let x = normal(n, p, seed);
        let y = normal(n, t, seed ^ 7);
        let grid = LambdaGrid::log_spaced(0.1, 1e4, 9).unwrap();
        let fit = RidgeSvd::new(&x).unwrap().fit(&y, &grid).unwrap();
        for j in 0..t {
            let col = fit.loo_mse.column(j);
            let best = col.iter().copied().fold(f64::INFINITY, f64::min);
            let k = fit.chosen_index[j];
            prop_assert_eq!(col[k], best);
            // ties resolve to the larger penalty
            prop_assert!(col.iter().skip(k + 1).all(|&v| v > best));
            prop_assert_eq!(fit.chosen_lambda[j], grid.values()[k]);
        }
    }

    #[test]
    fn weights_shrink_as_lambda_grows(n in 6usize..20, p in 1usize..6, seed in any::<u64>()) {
        let x = normal(n, p, seed);
        let y = normal(n, 1, !seed);
        let svd = RidgeSvd::new(&x).unwrap();
        let norms: Vec<f64> = [0.1, 1.0, 10.0, 100.0, 1e4]
            .iter()
            .map(|&l| svd.weights(&y, &[l]).unwrap().norm())
            .collect();
        for w in norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn standardized_train_columns_have_zero_mean_unit_std(
        n in 3usize..20,
        p in 1usize..5,
        seed in any::<u64>(),
        offset in -50.0f64..50.0,
    ) {
        let x = normal(n, p, seed).add_scalar(offset);
        let (train, _, _) = standardize(&x, &x).unwrap();
        for c in train.column_iter() {
            let mean = c.iter().sum::<f64>() / n as f64;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pearson_matches_direct_formula(n in 3usize..40, seed in any::<u64>()) {
        let a: Vec<f64> = normal(n, 1, seed).iter().copied().collect();
        let b: Vec<f64> = normal(n, 1, seed ^ 99).iter().copied().collect();
        let r = pearson(&a, &b).unwrap();
        prop_assert!(r.defined);
        prop_assert!((r.r - pearson_direct(&a, &b)).abs() < 1e-12);
        prop_assert!(r.r.abs() <= 1.0);
    }
}

#[test]
fn constant_column_standardizes_to_zero() {
    let x = DMatrix::from_fn(5, 2, |r, c| if c == 0 { 3.0 } else { r as f64 });
    let (train, test, _) = standardize(&x, &x).unwrap();
    assert!(train.column(0).iter().all(|&v| v == 0.0));
    assert!(test.column(0).iter().all(|&v| v == 0.0));
}

#[test]
fn constant_series_correlation_is_undefined() {
    let r = pearson(&[1.0, 1.0, 1.0, 1.0], &[0.1, 0.2, 0.3, 0.4]).unwrap();
    assert!(!r.defined);
}
