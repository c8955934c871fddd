//! Property tests for the distribution calculus and the quadrangle layer.
//! Samples are generated on a dyadic grid with rational weights so that the
//! exact set-valued identities can be asserted without numerical hedging.

use proptest::prelude::*;

use rqsvr::distribution::{
    cdf_pair, cvar, cvar_norm, cvar_via_min, dual_cvar_max, mean_excess, quantile_interval,
    vapnik_error, EmpiricalSample,
};
use rqsvr::quadrangle::{
    alpha_set, cvar_norm_quadrangle, hausdorff_distance, qsa_quadrangle, statistic_avg_quantiles,
    vapnik_center_argmin,
};

fn sample_strategy(max_len: usize) -> impl Strategy<Value = EmpiricalSample> {
    proptest::collection::vec((-640i32..=640i32, 1u32..=8u32), 1..=max_len).prop_map(|pairs| {
        let values: Vec<f64> = pairs.iter().map(|&(v, _)| v as f64 / 64.0).collect();
        let total: u32 = pairs.iter().map(|&(_, c)| c).sum();
        let weights: Vec<f64> = pairs
            .iter()
            .map(|&(_, c)| c as f64 / total as f64)
            .collect();
        EmpiricalSample::new(values, weights).expect("valid generated sample")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cvar_min_formula_matches_tail_integral(
        s in sample_strategy(30),
        k in 1u32..100u32,
    ) {
        let alpha = k as f64 / 100.0;
        let (value, argmin) = cvar_via_min(&s, alpha).unwrap();
        let direct = cvar(&s, alpha).unwrap();
        prop_assert!((value - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        let q = quantile_interval(&s, alpha).unwrap();
        prop_assert_eq!(argmin, q);
    }

    #[test]
    fn dual_formula_matches_mean_excess(
        s in sample_strategy(30),
        x_grid in -700i32..700i32,
    ) {
        let x = x_grid as f64 / 64.0;
        let (value, argmax) = dual_cvar_max(&s, x);
        let excess = mean_excess(&s, x);
        prop_assert!((value - excess).abs() <= 1e-10);
        let (strict, weak) = cdf_pair(&s, x);
        prop_assert_eq!((argmax.lo, argmax.hi), (strict, weak));
    }

    #[test]
    fn cvar_monotone_and_tail_mass_concave(s in sample_strategy(30)) {
        // nondecreasing in the level, and (1 - a) * cvar concave over the
        // breakpoint grid
        let mut grid: Vec<f64> = vec![0.0];
        grid.extend(s.cum_weights().iter().copied().filter(|&c| c < 1.0));
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        let values: Vec<f64> = grid.iter().map(|&a| cvar(&s, a).unwrap()).collect();
        for w in values.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
        let mass: Vec<f64> = grid
            .iter()
            .zip(&values)
            .map(|(&a, &v)| (1.0 - a) * v)
            .collect();
        for k in 1..grid.len().saturating_sub(1) {
            let (a0, a1, a2) = (grid[k - 1], grid[k], grid[k + 1]);
            let interp = mass[k - 1] + (mass[k + 1] - mass[k - 1]) * (a1 - a0) / (a2 - a0);
            prop_assert!(mass[k] >= interp - 1e-10);
        }
    }

    #[test]
    fn cvar_dominates_mean(s in sample_strategy(30), k in 0u32..100u32) {
        let alpha = k as f64 / 100.0;
        let c = cvar(&s, alpha).unwrap();
        prop_assert!(c >= s.mean() - 1e-12);
        if alpha == 0.0 || s.atoms().len() == 1 {
            prop_assert!((c - s.mean()).abs() <= 1e-12 * (1.0 + s.mean().abs()));
        } else {
            // aversity: strictly above the mean for nonconstant samples
            prop_assert!(c > s.mean());
        }
    }

    #[test]
    fn permutation_invariance(s in sample_strategy(20), k in 0u32..=100u32, salt in any::<u64>()) {
        let alpha = k as f64 / 100.0;
        let l = s.len();
        let mut order: Vec<usize> = (0..l).collect();
        // cheap deterministic shuffle
        for i in (1..l).rev() {
            let j = ((salt.wrapping_mul(2654435761).wrapping_add(i as u64)) % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        let values: Vec<f64> = order.iter().map(|&i| s.values()[i]).collect();
        let weights: Vec<f64> = order.iter().map(|&i| s.weights()[i]).collect();
        let p = EmpiricalSample::new(values, weights).unwrap();
        prop_assert_eq!(cvar(&s, alpha).unwrap(), cvar(&p, alpha).unwrap());
        prop_assert_eq!(quantile_interval(&s, alpha).unwrap(), quantile_interval(&p, alpha).unwrap());
        prop_assert_eq!(mean_excess(&s, 0.5), mean_excess(&p, 0.5));
    }

    #[test]
    fn norm_axioms_on_shared_index_set(
        pairs in proptest::collection::vec((-640i32..=640i32, -640i32..=640i32), 2..=25),
        k in 0u32..100u32,
        scale_grid in -64i32..=64i32,
    ) {
        let alpha = k as f64 / 100.0;

        let xs: Vec<f64> = pairs.iter().map(|&(a, _)| a as f64 / 64.0).collect();
        let ys: Vec<f64> = pairs.iter().map(|&(_, b)| b as f64 / 64.0).collect();
        let x = EmpiricalSample::equiprobable(xs.clone()).unwrap();
        let y = EmpiricalSample::equiprobable(ys.clone()).unwrap();
        let nx = cvar_norm(&x, alpha, false).unwrap();
        let ny = cvar_norm(&y, alpha, false).unwrap();
        // triangle inequality outcome-wise on the shared probability space
        let sum = x.zip_with(&y, |a, b| a + b).unwrap();
        let ns = cvar_norm(&sum, alpha, false).unwrap();
        prop_assert!(ns <= nx + ny + 1e-10, "{} vs {}", ns, nx + ny);
        // absolute homogeneity
        let lam = scale_grid as f64 / 16.0;
        let scaled = x.scale(lam);
        let nscaled = cvar_norm(&scaled, alpha, false).unwrap();
        prop_assert!((nscaled - lam.abs() * nx).abs() <= 1e-10 * (1.0 + nx));
        // zero exactly when all atoms vanish
        let zero = xs.iter().all(|&v| v == 0.0);
        prop_assert_eq!(nx == 0.0, zero);
    }

    #[test]
    fn quartet_relationships_hold(s in sample_strategy(25), k in 0u32..100u32) {
        let alpha = k as f64 / 100.0;
        let q = cvar_norm_quadrangle(&s, alpha).unwrap();
        let mean = s.mean();
        prop_assert!((q.deviation - (q.risk - mean)).abs() <= 1e-10);
        prop_assert!((q.error - (q.regret - mean)).abs() <= 1e-10);
        prop_assert!(q.deviation >= -1e-12);
        prop_assert!(q.error >= -1e-12);
    }

    #[test]
    fn quartet_positive_homogeneity(s in sample_strategy(20), k in 0u32..100u32, lam_grid in 1i32..=64i32) {
        let alpha = k as f64 / 100.0;
        let lam = lam_grid as f64 / 16.0;
        let base = cvar_norm_quadrangle(&s, alpha).unwrap();
        let scaled = cvar_norm_quadrangle(&s.scale(lam), alpha).unwrap();
        let tol = 1e-10 * (1.0 + base.risk.abs() + base.regret.abs()) * lam.max(1.0);
        prop_assert!((scaled.risk - lam * base.risk).abs() <= tol);
        prop_assert!((scaled.deviation - lam * base.deviation).abs() <= tol);
        prop_assert!((scaled.error - lam * base.error).abs() <= tol);
        prop_assert!((scaled.regret - lam * base.regret).abs() <= tol);
        let expect: Vec<_> = base.statistic.iter().map(|iv| iv.scale(lam)).collect();
        prop_assert!(hausdorff_distance(&scaled.statistic, &expect) <= tol);
    }

    #[test]
    fn statistic_translation_covariance(s in sample_strategy(20), k in 0u32..100u32, c_grid in -64i32..=64i32) {
        let alpha = k as f64 / 100.0;
        let c = c_grid as f64 / 8.0;
        let base = statistic_avg_quantiles(&s, alpha).unwrap();
        let shifted = statistic_avg_quantiles(&s.shift(c), alpha).unwrap();
        prop_assert!((shifted.lo - (base.lo + c)).abs() <= 1e-12 * (1.0 + c.abs()));
        prop_assert!((shifted.hi - (base.hi + c)).abs() <= 1e-12 * (1.0 + c.abs()));
    }

    #[test]
    fn qsa_value_constant_over_admissible_levels(
        s in sample_strategy(20),
        frac in 1u32..=9u32,
    ) {
        let half_range = 0.5 * (s.max_atom() - s.min_atom());
        prop_assume!(half_range > 0.0);
        let eps = half_range * frac as f64 / 10.0;
        let set = alpha_set(&s, eps).unwrap();
        let quartet = qsa_quadrangle(&s, eps).unwrap();
        for a in [set.min_alpha(), set.max_alpha(), 0.5 * (set.min_alpha() + set.max_alpha())] {
            if !set.contains(a, 0.0) {
                continue;
            }
            let base = cvar_norm_quadrangle(&s, a).unwrap();
            let shift = (1.0 - a) * eps;
            prop_assert!((base.risk - shift - quartet.risk).abs() <= 1e-10 * (1.0 + quartet.risk.abs()));
            prop_assert!((base.deviation - shift - quartet.deviation).abs() <= 1e-10 * (1.0 + quartet.deviation.abs()));
        }
    }

    #[test]
    fn qsa_deviation_is_center_minimum(
        s in sample_strategy(20),
        frac in 1u32..=9u32,
    ) {
        let half_range = 0.5 * (s.max_atom() - s.min_atom());
        prop_assume!(half_range > 0.0);
        let eps = half_range * frac as f64 / 10.0;
        let quartet = qsa_quadrangle(&s, eps).unwrap();
        let (min_value, argmin) = vapnik_center_argmin(&s, eps);
        prop_assert!((quartet.deviation - min_value).abs() <= 1e-10 * (1.0 + min_value.abs()));
        prop_assert!(hausdorff_distance(&quartet.statistic, &[argmin]) <= 1e-12);
        // dense-grid cross-check of the minimum value
        let lo = s.min_atom() - eps;
        let hi = s.max_atom() + eps;
        let mut grid_min = f64::INFINITY;
        for kk in 0..=500 {
            let c = lo + (hi - lo) * kk as f64 / 500.0;
            let v = vapnik_error(&s.shift(-c), eps).unwrap();
            if v < grid_min {
                grid_min = v;
            }
        }
        prop_assert!(min_value <= grid_min + 1e-12);
    }

    #[test]
    fn qsa_statistic_inside_symmetric_average_union(
        s in sample_strategy(20),
        frac in 1u32..=9u32,
    ) {
        // the exact minimizer set is always covered by the union of the
        // symmetric quantile averages over the admissible levels
        let half_range = 0.5 * (s.max_atom() - s.min_atom());
        prop_assume!(half_range > 0.0);
        let eps = half_range * frac as f64 / 10.0;
        let set = alpha_set(&s, eps).unwrap();
        let quartet = qsa_quadrangle(&s, eps).unwrap();
        let mut grid = vec![set.min_alpha(), set.max_alpha()];
        for k in 1..20 {
            let a = set.min_alpha() + (set.max_alpha() - set.min_alpha()) * k as f64 / 20.0;
            grid.push(a);
        }
        let union: Vec<_> = grid
            .iter()
            .filter(|&&a| set.contains(a, 1e-12))
            .map(|&a| statistic_avg_quantiles(&s, a).unwrap())
            .collect();
        let lo = union.iter().map(|iv| iv.lo).fold(f64::INFINITY, f64::min);
        let hi = union.iter().map(|iv| iv.hi).fold(f64::NEG_INFINITY, f64::max);
        for iv in &quartet.statistic {
            prop_assert!(iv.lo >= lo - 1e-9 && iv.hi <= hi + 1e-9,
                "argmin [{}, {}] escapes union hull [{lo}, {hi}]", iv.lo, iv.hi);
        }
    }
}
