use proptest::prelude::*;

use synthcause_core::data::{Kind, Matrix, Standardizer};
use synthcause_core::diagnostics::{ate_sensitivity_check, dcr_matrix, joint_loss_identity, LossDecomposition};
use synthcause_core::dgp::{self, BenchmarkConfig, Regime};
use synthcause_core::estimators::{ipw_from_weights, Estimator, IpwFlavor};
use synthcause_core::nuisance::PropensityClosure;
use synthcause_core::parallel::Execution;
use synthcause_core::positivity::{detect_extreme_at, pair_synthetic, TailMode};
use synthcause_core::simengine::MetricRow;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-50.0..50.0f64, rows * cols).prop_map(move |v| Matrix::from_row_major(v, cols).unwrap())
}

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, k).prop_map(|mut v| {
        let s: f64 = v.iter().sum();
        if s == 0.0 {
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= s);
        }
        v
    })
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardized_columns_have_zero_mean_unit_sd(w in matrix(30, 3)) {
        let kinds = [Kind::Continuous; 3];
        let std = Standardizer::fit_matrix(&w, &kinds);
        let z = std.apply(&w);
        for j in 0..3 {
            let col: Vec<f64> = z.column(j).collect();
            let mean = col.iter().sum::<f64>() / 30.0;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 29.0).sqrt();
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((sd - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dcr_ignores_row_order(real in matrix(20, 2), syn in matrix(15, 2), pr in permutation(20), ps in permutation(15)) {
        let std = Standardizer::fit_matrix(&real, &[Kind::Continuous; 2]);
        let base = dcr_matrix(&real, &syn, &std, Execution::Serial).unwrap();
        let shuffled = dcr_matrix(&real.select_rows(&pr), &syn.select_rows(&ps), &std, Execution::Parallel).unwrap();
        for (i, &p) in ps.iter().enumerate() {
            prop_assert_eq!(shuffled.distances[i], base.distances[p]);
        }
        prop_assert_eq!(base.mean, shuffled.mean);
        prop_assert_eq!(base.q50, shuffled.q50);
    }

    #[test]
    fn sensitivity_bound_holds(
        (p, ps, d, ds) in (2usize..6).prop_flat_map(|k| (
            simplex(k),
            simplex(k),
            prop::collection::vec(-1.0..=1.0f64, k),
            prop::collection::vec(-1.0..=1.0f64, k),
        ))
    ) {
        let report = ate_sensitivity_check(&p, &ps, &d, &ds).unwrap();
        prop_assert!(report.lhs <= report.rhs() + 1e-12);
    }

    #[test]
    fn joint_loss_identity_is_exact(lwf in 0.0..10.0f64, lyf in 0.0..10.0f64, lwg in 0.0..10.0f64, lyg in 0.0..10.0f64, d in 1usize..50) {
        let f = LossDecomposition::new(lwf, lyf, d).unwrap();
        let g = LossDecomposition::new(lwg, lyg, d).unwrap();
        let diff = joint_loss_identity(f.l_joint, g.l_joint, f.l_w, g.l_w, d);
        prop_assert!((diff - (lyf - lyg)).abs() <= 1e-12 * (1.0 + d as f64) * 10.0);
    }

    #[test]
    fn mse_is_bias_squared_plus_variance(est in prop::collection::vec(-2.0..2.0f64, 2..200), psi in -1.0..1.0f64) {
        let row = MetricRow::from_estimates(Estimator::Ipw, &est, 0, psi);
        prop_assert!((row.mse - (row.bias * row.bias + row.variance)).abs() <= 1e-12);
        prop_assert!((row.rmse * row.rmse - row.mse).abs() <= 1e-12);
    }

    #[test]
    fn hajek_is_invariant_to_arm_weight_scale(
        rows in prop::collection::vec((0..2u8, 0..2u8, 0.05..0.95f64), 4..60),
        c1 in 0.1..10.0f64,
        c0 in 0.1..10.0f64,
    ) {
        let a: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
        prop_assume!(a.iter().any(|&x| x == 1.0) && a.iter().any(|&x| x == 0.0));
        let y: Vec<f64> = rows.iter().map(|r| r.1 as f64).collect();
        let w1: Vec<f64> = rows.iter().map(|r| 1.0 / r.2).collect();
        let w0: Vec<f64> = rows.iter().map(|r| 1.0 / (1.0 - r.2)).collect();
        let s1: Vec<f64> = w1.iter().map(|w| w * c1).collect();
        let s0: Vec<f64> = w0.iter().map(|w| w * c0).collect();
        let (base, _) = ipw_from_weights(&a, &y, &w1, &w0, IpwFlavor::Hajek).unwrap();
        let (scaled, _) = ipw_from_weights(&a, &y, &s1, &s0, IpwFlavor::Hajek).unwrap();
        prop_assert!((base - scaled).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pairing_ignores_pool_order(seed in 0u64..1000, perm in permutation(300)) {
        let ds = dgp::sample_dataset(&BenchmarkConfig { regime: Regime::Observational, n: 200, seed }).unwrap();
        let g = PropensityClosure(dgp::propensity);
        let ext = detect_extreme_at(&ds, &g, TailMode::Both, 0.02);
        let pool = dgp::sample_covariate_matrix(300, seed + 1);
        let std = Standardizer::fit(&ds);
        let a = pair_synthetic(&ext, &ds, &pool, 2, &std).unwrap();
        let b = pair_synthetic(&ext, &ds, &pool.select_rows(&perm), 2, &std).unwrap();
        prop_assert_eq!(a.pairs.len(), b.pairs.len());
        for (x, y) in a.pairs.iter().zip(&b.pairs) {
            prop_assert_eq!(x.real_index, y.real_index);
            prop_assert_eq!(&x.covariates, &y.covariates);
            prop_assert_eq!(perm[y.pool_index], x.pool_index);
        }
    }
}
