//! Cross-formulation invariants on simulated data: the three nu-family
//! routes and the matched dual agree; the analytic intercept is optimal; the
//! alpha = 0 fit collapses to L1 regression; the robust reweighting forms a
//! saddle with the fitted slope.

use rqsvr::case_study::{equivalence_report, simulate};
use rqsvr::distribution::{cvar, EmpiricalSample};
use rqsvr::drr::{optimal_weights, worst_case_objective};
use rqsvr::kernel::KernelSpec;
use rqsvr::linalg::{norm2_sq, SparseMat};
use rqsvr::qp::{solve_qp, ConvexQp, QpSettings, QpStatus};
use rqsvr::quadrangle::statistic_avg_quantiles;
use rqsvr::svr::{train, Dataset, Formulation, Regularization, SvrConfig, SvrModel, SvrParameter};

fn fit(d: &Dataset, formulation: Formulation, alpha: f64, lambda: f64) -> SvrModel {
    // a ridge weight routes the dual through the exact capacity map, so all
    // formulations solve the same problem
    train(
        d,
        &SvrConfig {
            parameter: SvrParameter::Alpha(alpha),
            regularization: Regularization::Lambda(lambda),
            formulation,
            kernel: KernelSpec::Linear,
        },
    )
    .unwrap_or_else(|e| panic!("{formulation}: {e}"))
}

#[test]
fn nu_family_agreement_across_levels() {
    let d = simulate(200, 31).unwrap();
    let lambda = 1.0 / (2.0 * 200.0);
    for alpha in [0.25, 0.5, 0.75] {
        let nu = fit(&d, Formulation::NuPrimal, alpha, lambda);
        let dev = fit(&d, Formulation::NuDeviation, alpha, lambda);
        let dual = fit(&d, Formulation::NuDual, alpha, lambda);
        for (tag, other) in [("deviation", &dev), ("dual", &dual)] {
            let dw = (nu.weights.as_ref().unwrap()[0] - other.weights.as_ref().unwrap()[0]).abs();
            let db = (nu.intercept - other.intercept).abs();
            assert!(dw <= 1e-3, "alpha {alpha} {tag}: dw {dw}");
            assert!(db <= 1e-3, "alpha {alpha} {tag}: db {db}");
            let nu_obj = |m: &SvrModel| {
                (1.0 - alpha) * cvar(&m.residuals.abs(), alpha).unwrap()
                    + 0.5 * lambda * norm2_sq(m.weights.as_ref().unwrap())
            };
            let rel = (nu_obj(&nu) - nu_obj(other)).abs() / (1.0 + nu_obj(&nu).abs());
            assert!(rel <= 1e-6, "alpha {alpha} {tag}: objective gap {rel}");
            let report = equivalence_report(&nu, other, 1e-3).unwrap();
            assert!(report.pass, "alpha {alpha} {tag}: {report:?}");
        }
    }
}

#[test]
fn linked_eps_round_trip_at_scale() {
    let d = simulate(200, 77).unwrap();
    let lambda = 1.0 / (2.0 * 200.0);
    let alpha = 0.5;
    let nu = fit(&d, Formulation::NuPrimal, alpha, lambda);
    let eps = nu.linked_eps.midpoint();
    let ep = train(
        &d,
        &SvrConfig {
            parameter: SvrParameter::Epsilon(eps),
            regularization: Regularization::Lambda(lambda),
            formulation: Formulation::EpsPrimal,
            kernel: KernelSpec::Linear,
        },
    )
    .unwrap();
    let report = equivalence_report(&nu, &ep, 1e-3).unwrap();
    assert!(report.pass, "{report:?}");
    // closed linked interval of the eps fit recovers the level
    assert!(
        ep.linked_alpha.lo - 5e-3 <= alpha && alpha <= ep.linked_alpha.hi + 5e-3,
        "alpha {alpha} vs [{}, {})",
        ep.linked_alpha.lo,
        ep.linked_alpha.hi
    );
}

#[test]
fn analytic_intercept_is_optimal() {
    let d = simulate(150, 13).unwrap();
    let lambda = 0.01;
    let alpha = 0.6;
    let m = fit(&d, Formulation::NuPrimal, alpha, lambda);
    let w = m.weights.as_ref().unwrap().clone();
    let objective_at = |b: f64| {
        let z: Vec<f64> = (0..d.len())
            .map(|i| d.targets()[i] - w[0] * d.features().get(i, 0) - b)
            .collect();
        let s = EmpiricalSample::equiprobable(z).unwrap();
        (1.0 - alpha) * cvar(&s.abs(), alpha).unwrap() + 0.5 * lambda * norm2_sq(&w)
    };
    let base = objective_at(m.intercept);
    // flат inside the statistic interval
    let interval = statistic_avg_quantiles(&m.pre_intercept_residuals, alpha).unwrap();
    assert!(objective_at(interval.lo) <= base + 1e-9);
    assert!(objective_at(interval.hi) <= base + 1e-9);
    // strictly worse once pushed outside
    let delta = 1e-3;
    assert!(objective_at(interval.lo - delta) > base + 1e-12);
    assert!(objective_at(interval.hi + delta) > base + 1e-12);
}

#[test]
fn alpha_zero_collapses_to_l1_regression() {
    let d = simulate(60, 5).unwrap();
    let lambda = 0.05;
    let m = fit(&d, Formulation::NuPrimal, 0.0, lambda);
    // direct least-absolute-deviations QP: (1/l) sum t + (lambda/2) w^2
    let l = d.len();
    let nv = 2 + l;
    let mut p = vec![Vec::new(); nv];
    p[0] = vec![(0usize, lambda)];
    let mut c = vec![0.0; nv];
    for i in 0..l {
        c[2 + i] = 1.0 / l as f64;
    }
    let mut g = Vec::new();
    let mut h = Vec::new();
    for i in 0..l {
        let x = d.features().get(i, 0);
        let y = d.targets()[i];
        g.push(vec![(0, -x), (1, -1.0), (2 + i, -1.0)]);
        h.push(-y);
        g.push(vec![(0, x), (1, 1.0), (2 + i, -1.0)]);
        h.push(y);
    }
    let qp = ConvexQp::new(
        SparseMat::from_row_entries(nv, nv, p),
        c,
        SparseMat::zeros(0, nv),
        vec![],
        SparseMat::from_row_entries(2 * l, nv, g),
        h,
        vec![],
    )
    .unwrap();
    let sol = solve_qp(&qp, &QpSettings::default());
    assert_eq!(sol.status, QpStatus::Optimal);
    assert!(
        (m.weights.as_ref().unwrap()[0] - sol.x[0]).abs() <= 1e-6,
        "nu fit {} vs direct L1 {}",
        m.weights.as_ref().unwrap()[0],
        sol.x[0]
    );
    // intercept sits on the median interval of the no-intercept residuals
    let median = statistic_avg_quantiles(&m.pre_intercept_residuals, 0.0).unwrap();
    assert!(median.contains(m.intercept, 1e-9));
}

#[test]
fn robust_weights_form_saddle_with_fit() {
    // minimizing the cvar norm is the same as minimizing the worst-case
    // weighted absolute residual; at the fit, the closed-form weights attain
    // the inner maximum and the fit minimizes the weighted objective
    let d = simulate(80, 21).unwrap();
    let alpha = 0.5;
    let lambda_prime = 0.02;
    let m = fit(&d, Formulation::NuPrimal, alpha, lambda_prime);
    let w0 = m.weights.as_ref().unwrap()[0];
    let b0 = m.intercept;
    let lambda_drr = lambda_prime / (2.0 * (1.0 - alpha));
    let weights = optimal_weights(&m.residuals, alpha).unwrap();
    // inner maximum attained: scaled norm identity
    let wc = worst_case_objective(&m.residuals, alpha).unwrap();
    let scaled = cvar(&m.residuals.abs(), alpha).unwrap();
    assert!((wc - scaled).abs() <= 1e-10);
    let non_scaled = (1.0 - alpha) * scaled;
    assert!((wc - non_scaled / (1.0 - alpha)).abs() <= 1e-10);
    // any feasible reweighting stays below the worst case at the fit
    let l = d.len();
    let cap = 1.0 / (l as f64 * (1.0 - alpha));
    let mut rng = rqsvr::rng::Xoshiro256PlusPlus::seed_from_u64(99);
    for _ in 0..20 {
        let raw: Vec<f64> = (0..l).map(|_| rng.uniform_open01()).collect();
        let total: f64 = raw.iter().sum();
        let q: Vec<f64> = raw.iter().map(|r| (r / total).min(cap)).collect();
        let value: f64 = q
            .iter()
            .zip(m.residuals.values())
            .map(|(&qi, &z)| qi * z.abs())
            .sum();
        // sub-stochastic after capping, so still dominated by the maximum
        assert!(value <= wc + 1e-12);
    }
    // outer minimum: perturbing the fit cannot reduce the worst-case
    // objective, with the inner maximum re-solved at the perturbed point
    let robust = |w: f64, b: f64| {
        let z: Vec<f64> = (0..l)
            .map(|i| d.targets()[i] - w * d.features().get(i, 0) - b)
            .collect();
        let s = EmpiricalSample::equiprobable(z).unwrap();
        worst_case_objective(&s, alpha).unwrap() + lambda_drr * w * w
    };
    let attained: f64 = weights
        .weights
        .iter()
        .zip(m.residuals.values())
        .map(|(&qi, &z)| qi * z.abs())
        .sum();
    assert!((attained - wc).abs() <= 1e-10);
    let base = robust(w0, b0);
    for dw in [-0.05, -0.01, 0.01, 0.05] {
        for db in [-0.05, 0.0, 0.05] {
            assert!(
                robust(w0 + dw, b0 + db) >= base - 1e-7,
                "robust objective improved at dw {dw} db {db}"
            );
        }
    }
}

#[test]
fn training_is_thread_safe_on_shared_data() {
    let d = std::sync::Arc::new(simulate(50, 2).unwrap());
    let handles: Vec<_> = [0.25, 0.5, 0.75]
        .into_iter()
        .map(|alpha| {
            let d = d.clone();
            std::thread::spawn(move || fit(&d, Formulation::NuPrimal, alpha, 0.01).intercept)
        })
        .collect();
    for h in handles {
        assert!(h.join().unwrap().is_finite());
    }
}
