#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ncmsg::datagen::{rng_from_seed, sample_textures, standard_normal_matrix, standard_normal_vector};
use ncmsg::manifold::{self, fim_inner, retract};
use ncmsg::{AmbientVector, ParameterPoint, Result, TangentVector};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rng_from_seed(seed)
}

/// Well-conditioned random point: `Σ = AAᵀ/p + I/2`, textures `Γ(2, 1/2)`.
pub fn random_point(rng: &mut ChaCha8Rng, p: usize, n: usize) -> ParameterPoint {
    let mu = standard_normal_vector(rng, p);
    let a = standard_normal_matrix(rng, p, p);
    let sigma = &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * 0.5;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let tau = sample_textures(rng, n, 2.0).unwrap();
    ParameterPoint::new(mu, sigma, tau).unwrap()
}

pub fn random_ambient(rng: &mut ChaCha8Rng, p: usize, n: usize) -> AmbientVector {
    let s = standard_normal_matrix(rng, p, p);
    AmbientVector::new(
        standard_normal_vector(rng, p),
        (&s + s.transpose()) * 0.5,
        standard_normal_vector(rng, n),
    )
    .unwrap()
}

/// Random tangent vector with unit Fisher norm.
pub fn random_tangent(rng: &mut ChaCha8Rng, theta: &ParameterPoint) -> TangentVector {
    let v = manifold::project(theta, &random_ambient(rng, theta.p(), theta.n())).unwrap();
    let norm = fim_inner(theta, v.as_ambient(), v.as_ambient()).unwrap().sqrt();
    v.scale(1.0 / norm)
}

/// `r(t)` for signed `t`, using `R_θ(−tξ) = r(−t)` for `t < 0`.
pub fn curve(theta: &ParameterPoint, xi: &TangentVector, t: f64) -> Result<ParameterPoint> {
    if t >= 0.0 {
        retract(theta, xi, t)
    } else {
        retract(theta, &xi.scale(-1.0), -t)
    }
}

/// Central difference of `f` along the retraction curve.
pub fn directional_fd(
    f: impl Fn(&ParameterPoint) -> Result<f64>,
    theta: &ParameterPoint,
    xi: &TangentVector,
    h: f64,
) -> f64 {
    let plus = f(&curve(theta, xi, h).unwrap()).unwrap();
    let minus = f(&curve(theta, xi, -h).unwrap()).unwrap();
    (plus - minus) / (2.0 * h)
}

/// Points as flat ambient coordinates, for finite differences of curves.
pub fn as_ambient(theta: &ParameterPoint) -> AmbientVector {
    AmbientVector::new(theta.mu().clone(), theta.sigma().clone(), theta.tau().clone()).unwrap()
}

pub fn sample_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean.
pub fn standard_error(values: &[f64]) -> f64 {
    let m = sample_mean(values);
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    (var / values.len() as f64).sqrt()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn vec_rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn mat_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// One draw of a batch: row `i` is `μ + √τ_i L z_i`.
pub fn draw(theta: &ParameterPoint, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (p, n) = (theta.p(), theta.n());
    let l = theta.sigma_cholesky();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let z = standard_normal_vector(r, p);
        let row = theta.mu() + l * z * theta.tau()[i].sqrt();
        x.set_row(i, &row.transpose());
    }
    x
}

/// Log-density of a batch, constants included.
pub fn log_density(theta: &ParameterPoint, x: &DMatrix<f64>) -> f64 {
    let p = theta.p() as f64;
    let s_inv = theta.sigma_inv();
    let mut total = 0.0;
    for i in 0..x.nrows() {
        let r = x.row(i).transpose() - theta.mu();
        let t = theta.tau()[i];
        let q = r.dot(&(s_inv * &r));
        total -= 0.5 * (p * (2.0 * std::f64::consts::PI * t).ln() + theta.log_det_sigma() + q / t);
    }
    total
}

/// Directional derivative of the log-density along `ξ`, written out by hand.
pub fn score(theta: &ParameterPoint, x: &DMatrix<f64>, xi: &AmbientVector) -> f64 {
    let p = theta.p() as f64;
    let s_inv = theta.sigma_inv();
    let trace = (s_inv * &xi.d_sigma).trace();
    let sandwich = s_inv * &xi.d_sigma * s_inv;
    let mut total = 0.0;
    for i in 0..x.nrows() {
        let r = x.row(i).transpose() - theta.mu();
        let t = theta.tau()[i];
        let q = r.dot(&(s_inv * &r));
        total += r.dot(&(s_inv * &xi.d_mu)) / t - 0.5 * trace + 0.5 * r.dot(&(&sandwich * &r)) / t
            - 0.5 * p * xi.d_tau[i] / t
            + 0.5 * q * xi.d_tau[i] / (t * t);
    }
    total
}
