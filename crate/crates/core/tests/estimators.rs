mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use ncmsg::bench::{mse, nll_problem, Estimator, MseConfig};
use ncmsg::datagen::{apply_rigid, haar_orthogonal, sample_batch, standard_normal_matrix, standard_normal_vector};
use ncmsg::estimators::*;
use ncmsg::{BatchDataset, Error, OptimizerConfig, ParameterPoint, RegularizationSpec};

fn gaussian_data(seed: u64, n: usize, p: usize) -> BatchDataset {
    let mut r = rng(seed);
    BatchDataset::new(standard_normal_matrix(&mut r, n, p), None).unwrap()
}

/// `exp(E log(χ²_p / p))` for `p = 3`; `ψ(3/2) = 2 − γ − 2 log 2`.
fn unit_product_gaussian_scale() -> f64 {
    let euler_gamma = 0.577_215_664_901_532_9;
    let digamma = 2.0 - euler_gamma - 2.0 * std::f64::consts::LN_2;
    (digamma + std::f64::consts::LN_2 - 3f64.ln()).exp()
}

#[test]
fn gaussian_estimates_match_naive_sums() {
    let mut r = rng(51);
    let x = standard_normal_matrix(&mut r, 17, 4) * 3.0;
    let data = BatchDataset::new(x.clone(), None).unwrap();
    let g = gaussian_estimates(&data);
    let (n, p) = (17, 4);
    let mut mean = vec![0.0; p];
    for i in 0..n {
        for a in 0..p {
            mean[a] += x[(i, a)] / n as f64;
        }
    }
    for a in 0..p {
        assert!((g.mean[a] - mean[a]).abs() < 1e-12);
        for b in 0..p {
            let (mut scm, mut m0) = (0.0, 0.0);
            for i in 0..n {
                scm += (x[(i, a)] - mean[a]) * (x[(i, b)] - mean[b]);
                m0 += x[(i, a)] * x[(i, b)];
            }
            assert!((g.scm[(a, b)] - scm / n as f64).abs() < 1e-12);
            assert!((g.second_moment[(a, b)] - m0 / n as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn gaussian_estimates_trivial_cases() {
    let data = BatchDataset::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), None).unwrap();
    let g = gaussian_estimates(&data);
    assert_eq!((g.mean[0], g.scm[(0, 0)], g.second_moment[(0, 0)]), (0.0, 1.0, 1.0));
    let constant = BatchDataset::new(DMatrix::from_element(5, 3, 2.5), None).unwrap();
    assert_eq!(gaussian_estimates(&constant).scm, DMatrix::zeros(3, 3));
}

#[test]
fn tyler_joint_on_spherical_data() {
    let data = gaussian_data(52, 10_000, 3);
    let cfg = TylerConfig::default();
    let (mu, sigma) = tyler_joint(&data, &cfg).unwrap();
    assert!(mu.norm() < 0.05, "{mu}");
    let c = unit_product_gaussian_scale();
    assert!((&sigma - DMatrix::identity(3, 3) * c).norm() < 0.1, "{sigma}");
    assert!(tyler_joint_residual(&data, &mu, &sigma).unwrap() < cfg.tol * 10.0);
}

#[test]
fn tyler_fixed_location_on_spherical_data() {
    let data = gaussian_data(53, 10_000, 3);
    let cfg = TylerConfig::default();
    let mu = DVector::zeros(3);
    let sigma = tyler_fixed_location(&data, &mu, &cfg).unwrap();
    let c = unit_product_gaussian_scale();
    assert!((&sigma - DMatrix::identity(3, 3) * c).norm() < 0.1, "{sigma}");
    assert!(tyler_fixed_residual(&data, &mu, &sigma).unwrap() < cfg.tol);
}

#[test]
fn tyler_fixed_points_are_stable_and_unit_product() {
    let (truth, data) = nll_problem(4, 200, 1.0, 54).unwrap();
    let cfg = TylerConfig::default();
    let (mu, sigma) = tyler_joint(&data, &cfg).unwrap();
    assert!(tyler_joint_residual(&data, &mu, &sigma).unwrap() < 10.0 * cfg.tol);
    let fixed = tyler_fixed_location(&data, truth.mu(), &cfg).unwrap();
    assert!(tyler_fixed_residual(&data, truth.mu(), &fixed).unwrap() < cfg.tol);
    let s_inv = fixed.clone().try_inverse().unwrap();
    let log_prod: f64 = (0..data.n())
        .map(|i| {
            let r = data.sample(i) - truth.mu();
            (r.dot(&(&s_inv * &r)) / 4.0).ln()
        })
        .sum();
    assert!(log_prod.abs() < 1e-8);
}

#[test]
fn tyler_rejects_degenerate_data() {
    let line = DMatrix::from_fn(20, 2, |i, j| (i as f64 + 1.0) * (j as f64 + 1.0));
    let data = BatchDataset::new(line, None).unwrap();
    let cfg = TylerConfig::default();
    assert!(matches!(tyler_joint(&data, &cfg), Err(Error::DegenerateData(_))));
    assert!(matches!(tyler_fixed_location(&data, &DVector::zeros(2), &cfg), Err(Error::DegenerateData(_))));
    let few = gaussian_data(55, 3, 3);
    assert!(matches!(tyler_joint(&few, &cfg), Err(Error::DegenerateData(_))));
    // A sample exactly at the location has no direction.
    let data = gaussian_data(56, 30, 2);
    let at_sample = data.sample(4);
    assert!(matches!(tyler_fixed_location(&data, &at_sample, &cfg), Err(Error::DegenerateData(_))));
    let sigma = tyler_fixed_location(&data, &at_sample, &cfg.excluding_coincident()).unwrap();
    assert!(sigma.iter().all(|v| v.is_finite()));
}

#[test]
fn known_location_fit_agrees_with_tyler() {
    let (truth, data) = nll_problem(10, 1000, 1.0, 57).unwrap();
    let spec = RegularizationSpec::new(1.0, 0.0).unwrap();
    let cfg = OptimizerConfig::default().with_max_iterations(2000);
    let (fit, report) = fit_ncmsg_known_location(&data, truth.mu(), &spec, &cfg).unwrap();
    assert!(report.converged);
    assert_eq!(fit.mu(), truth.mu());
    let tyler = tyler_fixed_location(&data, truth.mu(), &TylerConfig::default()).unwrap();
    assert!(mat_rel(fit.sigma(), &tyler) < 0.02, "{:e}", mat_rel(fit.sigma(), &tyler));
}

#[test]
fn unregularized_fit_reaches_tolerance_on_an_interior_problem() {
    let (_, data) = nll_problem(10, 150, 1.0, 3).unwrap();
    let spec = RegularizationSpec::new(1.0, 0.0).unwrap();
    let (fit, report) = fit_ncmsg(&data, &spec, &OptimizerConfig::default()).unwrap();
    assert!(report.converged);
    assert!(report.final_grad_norm() < 1e-6);
    assert!(fit.tau().iter().map(|t| t.ln()).sum::<f64>().abs() < 1e-9);
    assert!(fit_warnings(&data, &spec).iter().any(|w| w.contains("beta = 0")));
}

#[test]
fn fit_is_rigid_equivariant() {
    let mut r = rng(58);
    let spec = RegularizationSpec::new(1.0, 0.1).unwrap();
    let cfg = OptimizerConfig::default().with_tolerance(1e-10).with_max_iterations(5000);
    for seed in 0..3 {
        let (_, data) = nll_problem(4, 45, 1.0, 580 + seed).unwrap();
        let q = haar_orthogonal(&mut r, 4);
        let mu0 = standard_normal_vector(&mut r, 4) * 5.0;
        let (fit, _) = fit_ncmsg(&data, &spec, &cfg).unwrap();
        let (moved, _) = fit_ncmsg(&apply_rigid(&data, &q, &mu0), &spec, &cfg).unwrap();
        let expected = ncmsg::datagen::transform_point(&fit, &q, &mu0).unwrap();
        assert!(vec_rel(moved.mu(), expected.mu()) < 1e-3);
        assert!(mat_rel(moved.sigma(), expected.sigma()) < 1e-3);
        assert!(vec_rel(moved.tau(), expected.tau()) < 1e-3);
    }
}

#[test]
fn mle_with_heavy_tails_is_a_valid_limit() {
    for seed in 0..4 {
        let (_, data) = nll_problem(5, 200, 0.1, 590 + seed).unwrap();
        let fit = ncmsg_mle(&data, &OptimizerConfig::default().with_max_iterations(2000)).unwrap();
        assert!(fit.sigma.iter().all(|v| v.is_finite()));
        let log_prod: f64 = (0..data.n())
            .filter(|i| !fit.coincident.contains(i))
            .map(|i| fit.tau[i].ln())
            .sum();
        assert!(log_prod.abs() < 1e-6, "{log_prod}");
        for &i in &fit.coincident {
            assert_eq!(fit.tau[i], 0.0);
            assert!((data.sample(i) - &fit.mu).norm() < 1e-9 * (1.0 + fit.mu.norm()));
        }
    }
}

#[test]
fn initial_point_is_feasible() {
    let mut r = rng(60);
    for _ in 0..10 {
        let theta = random_point(&mut r, 3, 12);
        let data = sample_batch(&theta, 7).unwrap();
        let start = initial_point(&data).unwrap();
        ParameterPoint::new(start.mu().clone(), start.sigma().clone(), start.tau().clone()).unwrap();
        assert!(vec_rel(start.mu(), &gaussian_estimates(&data).mean) < 1e-15);
    }
}

#[test]
fn errors_shrink_with_the_sample_size() {
    let cfg = MseConfig {
        p: 5,
        nu: 1.0,
        n_grid: vec![20, 100, 1000],
        trials: 20,
        seed: 61,
        ..Default::default()
    };
    let rows = mse(&cfg).unwrap();
    for est in Estimator::ALL {
        let series: Vec<_> = rows.iter().filter(|r| r.estimator == est).collect();
        assert_eq!(series.len(), 3);
        for w in series.windows(2) {
            if est == Estimator::TylerKnownLocation {
                assert_eq!(w[1].location_mse, 0.0);
            } else {
                assert!(w[1].location_mse < w[0].location_mse, "{est:?} location");
            }
            assert!(w[1].scatter_mse < w[0].scatter_mse, "{est:?} scatter");
        }
    }
}
