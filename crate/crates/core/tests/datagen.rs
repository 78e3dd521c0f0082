mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use ncmsg::datagen::*;
use ncmsg::ParameterPoint;

/// Standard normal CDF through `erfc` (W. J. Cody's rational fit as given in
/// Numerical Recipes, relative error below 1.2e-7).
fn normal_cdf(x: f64) -> f64 {
    let z = (x / std::f64::consts::SQRT_2).abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let erfc = t * poly.exp();
    if x >= 0.0 {
        1.0 - 0.5 * erfc
    } else {
        0.5 * erfc
    }
}

fn ks_statistic(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal_cdf(v);
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn normal_cdf_reference_values() {
    assert!((normal_cdf(0.0) - 0.5).abs() < 1e-7);
    assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-7);
    assert!((normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-7);
}

#[test]
fn parameters_are_valid_and_reproducible() {
    for seed in 0..50 {
        let cfg = SyntheticConfig { p: 5, n: 40, nu: 0.1, seed };
        let a = sample_parameters(&cfg).unwrap();
        assert!(a.tau().iter().map(|t| t.ln()).sum::<f64>().abs() < 1e-10);
        ParameterPoint::new(a.mu().clone(), a.sigma().clone(), a.tau().clone()).unwrap();
        assert_eq!(a, sample_parameters(&cfg).unwrap());
    }
    assert!(sample_parameters(&SyntheticConfig { p: 2, n: 1, nu: 1.0, seed: 0 }).is_err());
    assert!(sample_parameters(&SyntheticConfig { p: 2, n: 4, nu: 0.0, seed: 0 }).is_err());
}

#[test]
fn large_shape_textures_concentrate_at_one() {
    for seed in 0..200 {
        let theta = sample_parameters(&SyntheticConfig { p: 2, n: 100, nu: 1e6, seed }).unwrap();
        let worst = theta.tau().iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst < 0.05, "seed {seed}: {worst}");
    }
}

#[test]
fn white_batches_have_standard_normal_marginals() {
    let theta = ParameterPoint::identity(3, 5000);
    let data = sample_batch(&theta, 81).unwrap();
    let critical = 1.95 / (5000f64).sqrt();
    for j in 0..3 {
        let column: Vec<f64> = data.samples().column(j).iter().copied().collect();
        let d = ks_statistic(column);
        assert!(d < critical, "column {j}: D = {d}");
    }
}

#[test]
fn repeated_draws_have_the_model_covariance() {
    let mut r = rng(82);
    let theta = random_point(&mut r, 2, 3);
    let draws = 100_000;
    for i in 0..3 {
        let mut acc = DMatrix::zeros(2, 2);
        for k in 0..draws {
            let x = sample_batch(&theta, 1_000_000 * i as u64 + k).unwrap().sample(i) - theta.mu();
            acc += &x * x.transpose();
        }
        let empirical = acc / draws as f64;
        let c = theta.sigma() * theta.tau()[i];
        for a in 0..2 {
            for b in 0..2 {
                let se = ((c[(a, a)] * c[(b, b)] + c[(a, b)] * c[(a, b)]) / draws as f64).sqrt();
                assert!((empirical[(a, b)] - c[(a, b)]).abs() < 3.0 * se, "({a}, {b})");
            }
        }
    }
}

#[test]
fn batches_are_reproducible() {
    let mut r = rng(83);
    let theta = random_point(&mut r, 3, 7);
    assert_eq!(sample_batch(&theta, 9).unwrap().samples(), sample_batch(&theta, 9).unwrap().samples());
    assert_ne!(sample_batch(&theta, 9).unwrap().samples(), sample_batch(&theta, 10).unwrap().samples());
}

#[test]
fn haar_matrices_are_orthogonal() {
    let mut r = rng(84);
    for p in 1..6 {
        let q = haar_orthogonal(&mut r, p);
        assert!((&q * q.transpose() - DMatrix::identity(p, p)).norm() < 1e-12);
    }
}

#[test]
fn rigid_transforms() {
    let mut r = rng(85);
    let xf = RigidTransform::random(&mut r, 4, 1.0, 2.0);
    let data = sample_batch(&random_point(&mut r, 4, 30), 3).unwrap();
    for mode in [TransformMode::Mean, TransformMode::Rotation, TransformMode::Both] {
        let same = xf.at(0.0).unwrap().apply(&data, mode).unwrap();
        assert_eq!(same.samples(), data.samples());
    }
    for t in [0.25, 0.5, 1.0] {
        let x = xf.at(t).unwrap();
        let q = x.rotation();
        assert!((&q * q.transpose() - DMatrix::identity(4, 4)).norm() < 1e-10);
        let rotated = x.apply(&data, TransformMode::Rotation).unwrap();
        for i in 0..data.n() {
            assert!((rotated.sample(i).norm() - data.sample(i).norm()).abs() < 1e-10);
            let expected = q.transpose() * data.sample(i);
            assert!((rotated.sample(i) - expected).norm() < 1e-12);
        }
        let shifted = x.apply(&data, TransformMode::Mean).unwrap();
        assert!((shifted.sample(0) - data.sample(0) - xf.offset_direction() * t).norm() < 1e-12);
        let both = x.apply(&data, TransformMode::Both).unwrap();
        assert!((both.sample(0) - q.transpose() * data.sample(0) - xf.offset_direction() * t).norm() < 1e-12);
    }
    let not_skew = DMatrix::identity(2, 2);
    assert!(RigidTransform::new(not_skew, DVector::zeros(2), 0.5).is_err());
    let skew = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    assert!(RigidTransform::new(skew.clone(), DVector::zeros(2), 1.5).is_err());
    let xf = RigidTransform::new(skew, DVector::zeros(2), 1.0).unwrap();
    assert!(xf.apply(&data, TransformMode::Rotation).is_err());
}

#[test]
fn class_problems_are_labeled_and_reproducible() {
    let cfg = ClassProblemConfig { batches_per_class: 4, ..Default::default() };
    let batches = simulate_classes(&cfg).unwrap();
    assert_eq!(batches.len(), 12);
    for (k, b) in batches.iter().enumerate() {
        assert_eq!(b.label(), Some(k / 4));
        assert_eq!((b.n(), b.p()), (45, 4));
    }
    let again = simulate_classes(&cfg).unwrap();
    assert!(batches.iter().zip(&again).all(|(a, b)| a.samples() == b.samples()));
}
