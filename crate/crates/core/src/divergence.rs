//! Closed-form KL divergences between NC-MSGs and Gaussians, and
//! barycenters minimizing the symmetrized-KL variance.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{AmbientVector, ParameterPoint};
use crate::optim::{self, Metric, OptimizerConfig, OptimizerReport};

/// Values of `kl` above this negative threshold are rounding noise.
const NEGATIVE_CLAMP: f64 = -1e-10;

fn check_pair(a: &ParameterPoint, b: &ParameterPoint) -> Result<()> {
    if a.p() != b.p() || a.n() != b.n() {
        return Err(Error::dims(
            "kl",
            format!("p = {}, n = {}", a.p(), a.n()),
            format!("p = {}, n = {}", b.p(), b.n()),
        ));
    }
    Ok(())
}

/// Shared pieces of `kl(a, b)`.
struct KlTerms {
    /// `Tr(Σ_b⁻¹ Σ_a)`
    trace: f64,
    /// `Δμᵀ Σ_b⁻¹ Δμ`, `Δμ = μ_b − μ_a`
    maha: f64,
    /// `Σ_k τ_a,k / τ_b,k`
    ratio_sum: f64,
}

impl KlTerms {
    fn new(a: &ParameterPoint, b: &ParameterPoint) -> Self {
        let delta = b.mu() - a.mu();
        let z = b
            .sigma_cholesky()
            .solve_lower_triangular(&delta)
            .expect("Cholesky factor has a positive diagonal");
        let ratio_sum = a.tau().iter().zip(b.tau().iter()).map(|(x, y)| x / y).sum();
        Self {
            trace: linalg::trace_of_product(b.sigma_inv(), a.sigma()),
            maha: z.norm_squared(),
            ratio_sum,
        }
    }
}

/// `KL(p_a ‖ p_b)` between two NC-MSGs with the same `(p, n)`.
pub fn kl(a: &ParameterPoint, b: &ParameterPoint) -> Result<f64> {
    check_pair(a, b)?;
    if a == b {
        return Ok(0.0);
    }
    let t = KlTerms::new(a, b);
    let (n, p) = (a.n() as f64, a.p() as f64);
    let value = 0.5
        * (t.ratio_sum * t.trace + b.sum_inv_tau() * t.maha + n * (b.log_det_sigma() - a.log_det_sigma())
            - n * p);
    if !value.is_finite() {
        return Err(Error::DegenerateData(format!("KL divergence is not finite ({value})")));
    }
    Ok(if value < 0.0 && value > NEGATIVE_CLAMP { 0.0 } else { value })
}

pub fn sym_kl(a: &ParameterPoint, b: &ParameterPoint) -> Result<f64> {
    Ok(0.5 * (kl(a, b)? + kl(b, a)?))
}

fn gaussian_point(mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<ParameterPoint> {
    ParameterPoint::new(mu.clone(), sigma.clone(), DVector::from_element(1, 1.0))
}

/// `KL(N(μ₁, Σ₁) ‖ N(μ₂, Σ₂))`.
pub fn gaussian_kl(a: (&DVector<f64>, &DMatrix<f64>), b: (&DVector<f64>, &DMatrix<f64>)) -> Result<f64> {
    kl(&gaussian_point(a.0, a.1)?, &gaussian_point(b.0, b.1)?)
}

pub fn gaussian_sym_kl(a: (&DVector<f64>, &DMatrix<f64>), b: (&DVector<f64>, &DMatrix<f64>)) -> Result<f64> {
    sym_kl(&gaussian_point(a.0, a.1)?, &gaussian_point(b.0, b.1)?)
}

/// Euclidean gradient of `kl(a, b)` with respect to `a`.
pub fn kl_egrad_first(a: &ParameterPoint, b: &ParameterPoint) -> Result<AmbientVector> {
    check_pair(a, b)?;
    let t = KlTerms::new(a, b);
    let n = a.n() as f64;
    let s2_inv = b.sigma_inv();
    let delta = b.mu() - a.mu();
    let d_mu = -(s2_inv * delta) * b.sum_inv_tau();
    let d_sigma = (s2_inv * t.ratio_sum - a.sigma_inv() * n) * 0.5;
    let d_tau = b.tau().map(|y| 0.5 * t.trace / y);
    AmbientVector::new(d_mu, linalg::sym(&d_sigma), d_tau)
}

/// Euclidean gradient of `kl(a, b)` with respect to `b`.
pub fn kl_egrad_second(a: &ParameterPoint, b: &ParameterPoint) -> Result<AmbientVector> {
    check_pair(a, b)?;
    let t = KlTerms::new(a, b);
    let n = a.n() as f64;
    let s2_inv = b.sigma_inv();
    let w = s2_inv * (b.mu() - a.mu());
    let d_mu = &w * b.sum_inv_tau();
    let sandwich = s2_inv * a.sigma() * s2_inv;
    let d_sigma = (s2_inv * n - sandwich * t.ratio_sum - &w * w.transpose() * b.sum_inv_tau()) * 0.5;
    let d_tau = DVector::from_iterator(
        a.n(),
        a.tau()
            .iter()
            .zip(b.tau().iter())
            .map(|(x, y)| -0.5 * (x * t.trace + t.maha) / y / y),
    );
    AmbientVector::new(d_mu, linalg::sym(&d_sigma), d_tau)
}

fn check_points(points: &[ParameterPoint]) -> Result<()> {
    let first = points
        .first()
        .ok_or_else(|| Error::EmptyDataset("barycenter needs at least one point".into()))?;
    for q in &points[1..] {
        check_pair(first, q)?;
    }
    Ok(())
}

/// `(1/M) Σ_i sym_kl(θ, θ_i)`.
pub fn variance(theta: &ParameterPoint, points: &[ParameterPoint]) -> Result<f64> {
    check_points(points)?;
    let terms: Vec<f64> = points.par_iter().map(|q| sym_kl(theta, q)).collect::<Result<_>>()?;
    Ok(linalg::neumaier_sum(terms) / points.len() as f64)
}

pub fn variance_egrad(theta: &ParameterPoint, points: &[ParameterPoint]) -> Result<AmbientVector> {
    check_points(points)?;
    let terms: Vec<AmbientVector> = points
        .par_iter()
        .map(|q| Ok(&kl_egrad_first(theta, q)? + &kl_egrad_second(q, theta)?))
        .collect::<Result<_>>()?;
    let mut total = AmbientVector::zeros(theta.p(), theta.n());
    for g in &terms {
        total = &total + g;
    }
    Ok(total.scale(0.5 / points.len() as f64))
}

/// Index of the point with the smallest total divergence to the others.
pub fn medoid(points: &[ParameterPoint]) -> Result<usize> {
    check_points(points)?;
    let totals: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let values = points.iter().map(|q| sym_kl(&points[i], q)).collect::<Result<Vec<_>>>()?;
            Ok(linalg::neumaier_sum(values))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, v) in totals.iter().enumerate() {
        if *v < totals[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Symmetrized-KL barycenter by Fisher-metric RGD, started at the medoid.
pub fn barycenter(points: &[ParameterPoint], config: &OptimizerConfig) -> Result<(ParameterPoint, OptimizerReport)> {
    barycenter_with(Metric::Fisher, points, config)
}

pub fn barycenter_with(
    metric: Metric,
    points: &[ParameterPoint],
    config: &OptimizerConfig,
) -> Result<(ParameterPoint, OptimizerReport)> {
    let start = points[medoid(points)?].clone();
    optim::minimize(
        metric,
        |t| variance(t, points),
        |t| variance_egrad(t, points),
        start,
        config,
    )
}
