mod common;

use common::{coordinate_descent, gradient_error, prox_grid_search, random_instance};
use multivar_core::metrics::{bias_rmse, mcc, sensitivity_specificity};
use multivar_core::solver::{fista_solve, prox_weighted_l1, SolverConfig};
use multivar_core::weights::weighted_median;
use multivar_core::{ConfusionCounts, EffectsDecomposition};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn tight() -> SolverConfig<f64> {
    SolverConfig { max_iter: 200_000, tol: 1e-13, ..SolverConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn fista_matches_coordinate_descent(seed in any::<u64>()) {
        let inst = random_instance(seed);
        let fista = fista_solve(&inst.problem, &inst.pen, &tight(), None).unwrap();
        let cd = coordinate_descent(&inst, 100_000);
        let f = inst.problem.objective(&fista.decomposition, &inst.pen).unwrap();
        let c = inst.problem.objective(&cd, &inst.pen).unwrap();
        prop_assert!(f <= c + 1e-6, "fista {f} vs cd {c}");
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), shift in -0.5f64..0.5) {
        let inst = random_instance(seed);
        let (d, dp) = (inst.regs[0].dim(), inst.regs[0].z.nrows());
        let k = inst.regs.len();
        let at = EffectsDecomposition {
            common: DMatrix::from_fn(d, dp, |i, j| shift * (i as f64 - j as f64)),
            unique: (0..k).map(|s| DMatrix::from_element(d, dp, shift / (s + 1) as f64)).collect(),
        };
        prop_assert!(gradient_error(&inst.problem, &at) < 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn prox_matches_grid_search(v in -5.0f64..5.0, thr in 0.0f64..3.0, w in 0.0f64..3.0) {
        let got = prox_weighted_l1(&DMatrix::from_element(1, 1, v), thr, &DMatrix::from_element(1, 1, w))[(0, 0)];
        prop_assert!((got - prox_grid_search(v, thr * w)).abs() < 1e-10);
    }

    #[test]
    fn weighted_median_matches_expanded_sort(pairs in prop::collection::vec((-10i32..10, 1u32..5), 1..12)) {
        let values: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let mut expanded: Vec<f64> = pairs.iter().flat_map(|&(v, w)| std::iter::repeat(v as f64).take(w as usize)).collect();
        expanded.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect = expanded[(expanded.len() - 1) / 2];
        prop_assert_eq!(weighted_median(&values, &weights), Some(expect));
    }

    #[test]
    fn equal_weight_median_is_lower_median(values in prop::collection::vec(-100.0f64..100.0, 1..20)) {
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ones = vec![1.0; values.len()];
        prop_assert_eq!(weighted_median(&values, &ones), Some(sorted[(values.len() - 1) / 2]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn metric_bounds(tp in 0u64..50, tn in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
        let c = ConfusionCounts { tp, tn, fp, fn_ };
        let m = mcc(&c);
        prop_assert!((-1.0..=1.0).contains(&m));
        let (se, sp) = sensitivity_specificity(&c);
        prop_assert!((0.0..=1.0).contains(&se) && (0.0..=1.0).contains(&sp));
    }

    #[test]
    fn rmse_dominates_bias(errs in prop::collection::vec(-3.0f64..3.0, 1..30)) {
        let truth = DMatrix::zeros(1, errs.len());
        let est = DMatrix::from_row_slice(1, errs.len(), &errs);
        let (b, r) = bias_rmse(&[truth], &[est]).unwrap();
        prop_assert!(r + 1e-12 >= b);
    }
}
