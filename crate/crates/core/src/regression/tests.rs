use super::*;
use crate::dataio::{simulate_regression, DesignMatrix};
use approx::assert_relative_eq;

/// Shape vector of the estimator-accuracy simulation design:
/// (p₁, p₂, τ₁, τ₂, ν₁, ν₂) = (1.5, 1, 2, 1.5, 2, 1.5) on the log scale.
pub(crate) fn sim_alpha() -> [f64; 6] {
    [1.5_f64.ln(), 0.0, 2.0_f64.ln(), 1.5_f64.ln(), 2.0_f64.ln(), 1.5_f64.ln()]
}

fn dataset(n: usize, seed: u64) -> (Vec<f64>, DesignMatrix) {
    let ds = simulate_regression(n, &[2.0, 0.5, 0.2], &sim_alpha(), seed).unwrap();
    let dm = crate::dataio::design_matrix(&ds, &["x1".to_string(), "x2".to_string()]).unwrap();
    (ds.response, dm)
}

#[test]
fn location_examples() {
    let beta = [2.0, 0.5, 0.2];
    assert_relative_eq!(location(&[1.0, 0.0, 0.0], &beta).unwrap(), 2.0_f64.exp(), epsilon = 1e-12);
    assert_relative_eq!(location(&[1.0], &[0.0]).unwrap(), 1.0, epsilon = 1e-15);
    assert_relative_eq!(
        location(&[1.0, 1.0, 1.0], &beta).unwrap(),
        2.7_f64.exp(),
        epsilon = 1e-12
    );
    assert!(location(&[1.0, 2.0], &beta).is_err());
}

#[test]
fn threshold_examples() {
    // Density-figure default shapes with μ₂(x) = 2 give u = √2.
    let alpha = [1.5_f64.ln(), 2.0_f64.ln(), 2.5_f64.ln(), 1.5_f64.ln(), 1.5_f64.ln(), 1.5_f64.ln()];
    let beta = [2.0_f64.ln()];
    let u = threshold(&[1.0], &beta, &alpha).unwrap();
    assert_relative_eq!(u, 2.0_f64.sqrt(), epsilon = 1e-12);
    // doubling μ₂ doubles u
    let beta2 = [4.0_f64.ln()];
    assert_relative_eq!(threshold(&[1.0], &beta2, &alpha).unwrap(), 2.0 * u, epsilon = 1e-12);
    // p₂ν₂ ≤ 1 is a constraint error
    let bad = [0.0, 0.0, 0.0, 0.0, 0.0, -0.5];
    assert!(matches!(threshold(&[1.0], &beta, &bad), Err(Error::Constraint(_))));
}

#[test]
fn threshold_spans_orders_of_magnitude_with_covariates() {
    let alpha = sim_alpha();
    let beta = [5.0, 2.0, -2.0];
    let mut us = Vec::new();
    for (x1, x2) in [(-3.0, 3.0), (0.0, 0.0), (3.0, -3.0)] {
        us.push(threshold(&[1.0, x1, x2], &beta, &alpha).unwrap());
    }
    assert!(us[2] / us[0] > 1e3, "threshold range too narrow: {us:?}");
    // monotone in the linear predictor
    assert!(us[0] < us[1] && us[1] < us[2]);
}

#[test]
fn conditional_moment_matches_composite_and_links() {
    let alpha = sim_alpha();
    let beta = [2.0, 0.5, 0.2];
    let x = [1.0, 0.3, -0.4];
    assert_relative_eq!(conditional_moment(0.0, &x, &beta, &alpha).unwrap(), 1.0, epsilon = 1e-12);

    let (head, tail) = shapes_from_alpha(&alpha).unwrap();
    let dist = CompositeDist::new(
        CompositeParams::new(location(&x, &beta).unwrap(), head, tail).unwrap(),
    )
    .unwrap();
    assert_relative_eq!(
        conditional_moment(1.0, &x, &beta, &alpha).unwrap(),
        dist.moment(1.0).unwrap(),
        epsilon = 1e-10
    );

    // shifting xᵀβ by ln 2 doubles E[Y]
    let mut beta_up = beta;
    beta_up[0] += 2.0_f64.ln();
    assert_relative_eq!(
        conditional_moment(1.0, &x, &beta_up, &alpha).unwrap(),
        2.0 * conditional_moment(1.0, &x, &beta, &alpha).unwrap(),
        epsilon = 1e-10
    );
}

#[test]
fn loglik_equals_sum_of_composite_log_densities() {
    let (y, dm) = dataset(300, 5);
    let data = RegressionData::new(&y, &dm).unwrap();
    let alpha = sim_alpha();
    let beta = [1.9, 0.45, 0.25];
    let ll = loglik(&data, &beta, &alpha).unwrap();

    let (head, tail) = shapes_from_alpha(&alpha).unwrap();
    let mut direct = 0.0;
    for i in 0..data.n() {
        let mu2 = location(dm.row(i), &beta).unwrap();
        let dist = CompositeDist::new(CompositeParams::new(mu2, head, tail).unwrap()).unwrap();
        direct += dist.ln_pdf(y[i]).unwrap();
    }
    assert!((ll - direct).abs() < 1e-10 * ll.abs().max(1.0), "{ll} vs {direct}");
}

#[test]
fn loglik_single_observation_is_composite_density() {
    let dm = DesignMatrix::intercept_only(1);
    let y = [1.7];
    let data = RegressionData::new(&y, &dm).unwrap();
    let alpha = sim_alpha();
    let beta = [0.4];
    let ll = loglik(&data, &beta, &alpha).unwrap();
    let (head, tail) = shapes_from_alpha(&alpha).unwrap();
    let dist =
        CompositeDist::new(CompositeParams::new(beta[0].exp(), head, tail).unwrap()).unwrap();
    assert_relative_eq!(ll, dist.ln_pdf(1.7).unwrap(), epsilon = 1e-12);
}

#[test]
fn loglik_is_permutation_invariant() {
    let (y, dm) = dataset(64, 6);
    let data = RegressionData::new(&y, &dm).unwrap();
    let alpha = sim_alpha();
    let beta = [2.0, 0.5, 0.2];
    let ll = loglik(&data, &beta, &alpha).unwrap();

    let perm: Vec<usize> = (0..64).rev().collect();
    let y2: Vec<f64> = perm.iter().map(|i| y[*i]).collect();
    let rows: Vec<Vec<f64>> = perm.iter().map(|i| dm.row(*i).to_vec()).collect();
    let dm2 = DesignMatrix::from_rows(dm.names().to_vec(), &rows).unwrap();
    let data2 = RegressionData::new(&y2, &dm2).unwrap();
    let ll2 = loglik(&data2, &beta, &alpha).unwrap();
    assert!((ll - ll2).abs() <= 1e-12 * ll.abs());
}

/// Central finite difference of the log-likelihood in every coordinate.
fn fd_gradient(data: &RegressionData, beta: &[f64], alpha: &[f64; 6]) -> Vec<f64> {
    let mut grad = Vec::new();
    let eval = |b: &[f64], a: &[f64; 6]| loglik(data, b, a).unwrap();
    for j in 0..beta.len() {
        let h = 1e-6 * beta[j].abs().max(1.0);
        let mut up = beta.to_vec();
        up[j] += h;
        let mut dn = beta.to_vec();
        dn[j] -= h;
        grad.push((eval(&up, alpha) - eval(&dn, alpha)) / (2.0 * h));
    }
    for j in 0..6 {
        let h = 1e-6 * alpha[j].abs().max(1.0);
        let mut up = *alpha;
        up[j] += h;
        let mut dn = *alpha;
        dn[j] -= h;
        grad.push((eval(beta, &up) - eval(beta, &dn)) / (2.0 * h));
    }
    grad
}

#[test]
fn gradient_matches_finite_differences() {
    let (y, dm) = dataset(250, 7);
    let data = RegressionData::new(&y, &dm).unwrap();
    // Evaluate away from the fitted optimum and away from indicator
    // boundaries (the simulated responses are continuous, so exact boundary
    // hits have probability zero).
    let alpha = sim_alpha();
    let beta = [1.8, 0.4, 0.3];
    let analytic = grad_loglik(&data, &beta, &alpha).unwrap();
    let numeric = fd_gradient(&data, &beta, &alpha);
    for (i, (a, f)) in analytic.iter().zip(&numeric).enumerate() {
        assert!(
            (a - f).abs() <= 1e-5 * f.abs().max(1.0),
            "coordinate {i}: analytic {a} vs fd {f}"
        );
    }
}

#[test]
fn gradient_matches_fd_on_random_configurations() {
    // 20 random (data, parameter) configurations exercising every family.
    let mut checked = 0;
    for rep in 0..20u64 {
        let (y, dm) = dataset(120, 100 + rep);
        let data = RegressionData::new(&y, &dm).unwrap();
        let jitter = |v: f64, s: u64| v + 0.1 * ((s * 2654435761 % 17) as f64 / 17.0 - 0.5);
        let alpha = {
            let base = sim_alpha();
            let mut a = base;
            for (j, slot) in a.iter_mut().enumerate() {
                *slot = jitter(*slot, rep + j as u64);
            }
            // keep the mode constraints comfortably satisfied
            a[ALPHA_P1] = a[ALPHA_P1].max(0.5);
            a[ALPHA_P2] = a[ALPHA_P2].max(0.5);
            a
        };
        let beta = [jitter(2.0, rep), jitter(0.5, rep + 31), jitter(0.2, rep + 77)];
        let analytic = grad_loglik(&data, &beta, &alpha).unwrap();
        let numeric = fd_gradient(&data, &beta, &alpha);
        for (i, (a, f)) in analytic.iter().zip(&numeric).enumerate() {
            assert!(
                (a - f).abs() <= 1e-5 * f.abs().max(1.0),
                "rep {rep}, coordinate {i}: analytic {a} vs fd {f}"
            );
        }
        checked += 1;
    }
    assert_eq!(checked, 20);
}

#[test]
fn param_map_round_trips_every_family() {
    for family in CompositeFamily::ALL {
        let map = ParamMap::new(family, 2);
        assert_eq!(map.n_free, 2 + family.n_free_shapes());
        let theta: Vec<f64> = (0..map.n_free).map(|i| 0.1 * i as f64 + 0.2).collect();
        let (beta, alpha) = map.expand(&theta);
        let packed = map.pack(&beta, &alpha);
        assert_eq!(packed, theta, "pack/expand mismatch for {family}");
        // tied slots mirror their target
        if family == CompositeFamily::Pg {
            assert_eq!(alpha[ALPHA_TAU1], alpha[ALPHA_P1]);
        }
        if family == CompositeFamily::Ipg {
            assert_eq!(alpha[ALPHA_NU1], alpha[ALPHA_P1]);
        }
    }
}

#[test]
fn family_parameter_counts_match_roster() {
    let expect = [
        (CompositeFamily::ComGbii, 7),
        (CompositeFamily::Gbiig, 6),
        (CompositeFamily::Biig, 5),
        (CompositeFamily::Bg, 5),
        (CompositeFamily::Ibg, 5),
        (CompositeFamily::Pg, 4),
        (CompositeFamily::Ipg, 4),
    ];
    for (family, npars) in expect {
        assert_eq!(family.n_distribution_params(), npars, "{family}");
    }
    assert_eq!(CompositeFamily::parse("bg").unwrap(), CompositeFamily::Bg);
    assert!(CompositeFamily::parse("WIW").is_err());
}

#[test]
fn tied_family_gradient_matches_fd() {
    // Paralogistic head ties τ₁ to p₁; check the contracted gradient.
    let (y, dm) = dataset(150, 42);
    let data = RegressionData::new(&y, &dm).unwrap();
    let map = ParamMap::new(CompositeFamily::Pg, 3);
    let theta: Vec<f64> = {
        let alpha = [0.9, 0.8, 0.9, 0.3, 0.0, -2.0_f64.ln()];
        map.pack(&[1.9, 0.4, 0.25], &alpha)
    };
    let ll_at = |t: &[f64]| {
        let (beta, alpha) = map.expand(t);
        loglik(&data, &beta, &alpha).unwrap()
    };
    let (beta, alpha) = map.expand(&theta);
    let sc = ShapeConstants::new(&alpha).unwrap();
    let assign = assignments(&data, &beta, &sc);
    let (d_beta, d_alpha) = grad_loglik_frozen(&data, &beta, &alpha, &sc, &assign).unwrap();
    let contracted = map.contract(&d_beta, &d_alpha);
    for j in 0..map.n_free {
        let h = 1e-6 * theta[j].abs().max(1.0);
        let mut up = theta.clone();
        up[j] += h;
        let mut dn = theta.clone();
        dn[j] -= h;
        let fd = (ll_at(&up) - ll_at(&dn)) / (2.0 * h);
        assert!(
            (contracted[j] - fd).abs() <= 2e-5 * fd.abs().max(1.0),
            "coordinate {j}: {} vs {fd}",
            contracted[j]
        );
    }
}

#[test]
fn fit_recovers_parameters_on_moderate_sample() {
    let (y, dm) = dataset(1500, 11);
    let data = RegressionData::new(&y, &dm).unwrap();
    let config = FitConfig {
        solver: crate::solver::SolverConfig { restarts: 1, ..Default::default() },
        compute_covariance: false,
        ..Default::default()
    };
    let (model, report) = fit(&data, CompositeFamily::ComGbii, &config).unwrap();
    assert!(report.assignments_stable, "assignments did not stabilize");
    assert!((model.beta[1] - 0.5).abs() < 0.1, "beta1 = {}", model.beta[1]);
    assert!((model.beta[2] - 0.2).abs() < 0.1, "beta2 = {}", model.beta[2]);
    // stationarity at the reported optimum
    assert!(report.grad_norm <= 1e-4, "gradient norm {}", report.grad_norm);
    assert!(report.max_constraint <= 1e-6);
}

#[test]
fn fit_rejects_undersized_samples() {
    let dm = DesignMatrix::intercept_only(5);
    let y = [1.0, 2.0, 3.0, 1.5, 0.7];
    let data = RegressionData::new(&y, &dm).unwrap();
    let err = fit(&data, CompositeFamily::Bg, &FitConfig::default()).unwrap_err();
    assert!(err.to_string().contains("n = 5"), "{err}");
}

#[test]
fn fit_rejects_rank_deficient_design() {
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let x = i as f64 / 10.0;
            vec![1.0, x, 2.0 * x]
        })
        .collect();
    let dm = DesignMatrix::from_rows(
        vec!["Intercept".into(), "a".into(), "b".into()],
        &rows,
    )
    .unwrap();
    let y: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
    let data = RegressionData::new(&y, &dm).unwrap();
    assert!(matches!(
        fit(&data, CompositeFamily::Bg, &FitConfig::default()),
        Err(Error::Singular(_))
    ));
}

#[test]
fn predict_var_multiplicative_in_covariates() {
    let alpha = sim_alpha();
    let model = RegressionModel {
        family: CompositeFamily::ComGbii,
        beta: vec![2.0, -0.03],
        covariate_names: vec!["Intercept".into(), "Gender_female".into()],
        alpha,
        covariance: None,
    };
    let q = 0.9;
    let male = predict_var(&model, &[1.0, 0.0], q).unwrap();
    let female = predict_var(&model, &[1.0, 1.0], q).unwrap();
    assert_relative_eq!(female / male, (-0.03_f64).exp(), epsilon = 1e-9);

    // at the threshold's own cdf level, the prediction is u(x)
    let x = [1.0, 1.0];
    let dist = model.distribution_at(&x).unwrap();
    let q_u = dist.cdf(dist.threshold()).unwrap();
    assert_relative_eq!(
        predict_var(&model, &x, q_u).unwrap(),
        model.threshold_at(&x).unwrap(),
        epsilon = 1e-8
    );

    // bisection oracle on the per-observation cdf
    let target = 0.97;
    let (mut lo, mut hi) = (1e-6, 1e9);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dist.cdf(mid).unwrap() < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((predict_var(&model, &x, target).unwrap() - 0.5 * (lo + hi)).abs() < 1e-6);
}

#[test]
fn observation_fits_report_components() {
    let (y, dm) = dataset(50, 3);
    let data = RegressionData::new(&y, &dm).unwrap();
    let model = RegressionModel {
        family: CompositeFamily::ComGbii,
        beta: vec![2.0, 0.5, 0.2],
        covariate_names: dm.names().to_vec(),
        alpha: sim_alpha(),
        covariance: None,
    };
    let fits = observation_fits(&model, &data).unwrap();
    assert_eq!(fits.len(), 50);
    for (i, f) in fits.iter().enumerate() {
        assert_relative_eq!(f.threshold / f.mu2, fits[0].threshold / fits[0].mu2, epsilon = 1e-12);
        assert_eq!(f.is_head, y[i] <= f.threshold);
    }
}

