//! The parameter manifold `R^p × SPD(p) × {τ ∈ R_{>0}^n : ∏τ_i = 1}` equipped
//! with the Fisher information metric of the non-centered mixture of scaled
//! Gaussians.
//!
//! Points are immutable and carry their Cholesky factor, inverse scatter and
//! log-determinant, so every operation below is a pure function of its
//! arguments.

use std::ops::{Add, Deref, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on `|Σ_i log τ_i|` for a valid point.
pub const UNIT_PRODUCT_TOL: f64 = 1e-10;
/// Relative tolerance on the asymmetry of scatter matrices and their increments.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative tolerance on `|ξ_τᵀ τ^{-1}|` for tangent vectors.
pub const TANGENCY_TOL: f64 = 1e-10;

/// A point `θ = (μ, Σ, τ)`.
#[derive(Debug, Clone)]
pub struct ParameterPoint {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    tau: DVector<f64>,
    chol: DMatrix<f64>,
    sigma_inv: DMatrix<f64>,
    log_det_sigma: f64,
    sum_inv_tau: f64,
}

impl PartialEq for ParameterPoint {
    fn eq(&self, other: &Self) -> bool {
        self.mu == other.mu && self.sigma == other.sigma && self.tau == other.tau
    }
}

impl ParameterPoint {
    /// Validates and builds a point. The textures must already have unit product.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, tau: DVector<f64>) -> Result<Self> {
        let p = mu.len();
        let n = tau.len();
        if p == 0 || n == 0 {
            return Err(Error::InvalidPoint(format!("empty dimensions (p = {p}, n = {n})")));
        }
        if sigma.nrows() != p || sigma.ncols() != p {
            return Err(Error::dims(
                "ParameterPoint::new (sigma)",
                format!("{p}x{p}"),
                format!("{}x{}", sigma.nrows(), sigma.ncols()),
            ));
        }
        if mu.iter().chain(sigma.iter()).chain(tau.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPoint("non-finite entry".into()));
        }
        if !linalg::is_symmetric(&sigma, SYMMETRY_TOL) {
            return Err(Error::InvalidPoint("scatter matrix is not symmetric".into()));
        }
        if let Some(i) = tau.iter().position(|v| *v <= 0.0) {
            return Err(Error::InvalidPoint(format!("texture {i} is not positive ({})", tau[i])));
        }
        let log_prod: f64 = linalg::neumaier_sum(tau.iter().map(|v| v.ln()));
        if log_prod.abs() > UNIT_PRODUCT_TOL {
            return Err(Error::InvalidPoint(format!(
                "textures do not have unit product (sum of logs = {log_prod:e})"
            )));
        }
        let chol = linalg::cholesky_lower(&sigma)
            .ok_or_else(|| Error::InvalidPoint("scatter matrix is not positive definite".into()))?;
        Ok(Self::from_parts(mu, sigma, tau, chol))
    }

    /// Like [`ParameterPoint::new`] but rescales the textures to unit product first.
    pub fn normalized(mu: DVector<f64>, sigma: DMatrix<f64>, tau: DVector<f64>) -> Result<Self> {
        if let Some(i) = tau.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidPoint(format!("texture {i} is not positive ({})", tau[i])));
        }
        let tau = normalize_textures(&tau);
        Self::new(mu, sigma, tau)
    }

    /// `(0, I_p, 1_n)`.
    pub fn identity(p: usize, n: usize) -> Self {
        Self::new(DVector::zeros(p), DMatrix::identity(p, p), DVector::from_element(n, 1.0))
            .expect("identity point is valid")
    }

    fn from_parts(mu: DVector<f64>, sigma: DMatrix<f64>, tau: DVector<f64>, chol: DMatrix<f64>) -> Self {
        let sigma_inv = linalg::spd_inverse_from_lower(&chol);
        let log_det_sigma = linalg::log_det_from_lower(&chol);
        let sum_inv_tau = tau.iter().map(|v| 1.0 / v).sum();
        Self {
            mu,
            sigma,
            tau,
            chol,
            sigma_inv,
            log_det_sigma,
            sum_inv_tau,
        }
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn n(&self) -> usize {
        self.tau.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn tau(&self) -> &DVector<f64> {
        &self.tau
    }

    pub fn sigma_inv(&self) -> &DMatrix<f64> {
        &self.sigma_inv
    }

    /// Lower Cholesky factor of the scatter matrix.
    pub fn sigma_cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det_sigma(&self) -> f64 {
        self.log_det_sigma
    }

    /// `Σ_i 1/τ_i`.
    pub fn sum_inv_tau(&self) -> f64 {
        self.sum_inv_tau
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        (self.mu, self.sigma, self.tau)
    }
}

/// `N(x) = (∏ x_i)^{-1/n} x`, evaluated in log-space.
pub fn normalize_textures(x: &DVector<f64>) -> DVector<f64> {
    let mean_log = linalg::neumaier_sum(x.iter().map(|v| v.ln())) / x.len() as f64;
    let scale = (-mean_log).exp();
    x.map(|v| v * scale)
}

/// An element `(ξ_μ, ξ_Σ, ξ_τ)` of the ambient space `R^p × R^{p×p} × R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientVector {
    pub d_mu: DVector<f64>,
    pub d_sigma: DMatrix<f64>,
    pub d_tau: DVector<f64>,
}

impl AmbientVector {
    pub fn new(d_mu: DVector<f64>, d_sigma: DMatrix<f64>, d_tau: DVector<f64>) -> Result<Self> {
        let p = d_mu.len();
        if d_sigma.nrows() != p || d_sigma.ncols() != p {
            return Err(Error::dims(
                "AmbientVector::new (d_sigma)",
                format!("{p}x{p}"),
                format!("{}x{}", d_sigma.nrows(), d_sigma.ncols()),
            ));
        }
        Ok(Self { d_mu, d_sigma, d_tau })
    }

    pub fn zeros(p: usize, n: usize) -> Self {
        Self {
            d_mu: DVector::zeros(p),
            d_sigma: DMatrix::zeros(p, p),
            d_tau: DVector::zeros(n),
        }
    }

    pub fn p(&self) -> usize {
        self.d_mu.len()
    }

    pub fn n(&self) -> usize {
        self.d_tau.len()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            d_mu: &self.d_mu * a,
            d_sigma: &self.d_sigma * a,
            d_tau: &self.d_tau * a,
        }
    }

    /// `self + a · other`.
    pub fn axpy(&self, a: f64, other: &AmbientVector) -> Self {
        Self {
            d_mu: &self.d_mu + &other.d_mu * a,
            d_sigma: &self.d_sigma + &other.d_sigma * a,
            d_tau: &self.d_tau + &other.d_tau * a,
        }
    }

    /// Plain Euclidean pairing `⟨a, b⟩ = a_μᵀb_μ + Tr(a_Σᵀ b_Σ) + a_τᵀ b_τ`.
    pub fn euclidean_dot(&self, other: &AmbientVector) -> f64 {
        self.d_mu.dot(&other.d_mu) + self.d_sigma.dot(&other.d_sigma) + self.d_tau.dot(&other.d_tau)
    }

    pub fn euclidean_norm(&self) -> f64 {
        self.euclidean_dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.d_mu
            .iter()
            .chain(self.d_sigma.iter())
            .chain(self.d_tau.iter())
            .all(|v| v.is_finite())
    }
}

impl Add<&AmbientVector> for &AmbientVector {
    type Output = AmbientVector;
    fn add(self, rhs: &AmbientVector) -> AmbientVector {
        self.axpy(1.0, rhs)
    }
}

impl Sub<&AmbientVector> for &AmbientVector {
    type Output = AmbientVector;
    fn sub(self, rhs: &AmbientVector) -> AmbientVector {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &AmbientVector {
    type Output = AmbientVector;
    fn mul(self, rhs: f64) -> AmbientVector {
        self.scale(rhs)
    }
}

impl Neg for &AmbientVector {
    type Output = AmbientVector;
    fn neg(self) -> AmbientVector {
        self.scale(-1.0)
    }
}

/// An ambient vector known to lie in the tangent space of some base point:
/// symmetric `ξ_Σ` and `ξ_τᵀ τ^{-1} = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(AmbientVector);

impl Deref for TangentVector {
    type Target = AmbientVector;
    fn deref(&self) -> &AmbientVector {
        &self.0
    }
}

impl TangentVector {
    /// Checks the tangent-space constraints at `theta`.
    pub fn new(theta: &ParameterPoint, v: AmbientVector) -> Result<Self> {
        check_dims(theta, &v, "TangentVector::new")?;
        check_tangent(theta, &v)?;
        Ok(Self(v))
    }

    pub fn zeros(p: usize, n: usize) -> Self {
        Self(AmbientVector::zeros(p, n))
    }

    pub fn as_ambient(&self) -> &AmbientVector {
        &self.0
    }

    pub fn into_ambient(self) -> AmbientVector {
        self.0
    }

    /// Scaling preserves tangency.
    pub fn scale(&self, a: f64) -> Self {
        Self(self.0.scale(a))
    }

    /// Linear combinations of tangent vectors at one base point stay tangent.
    pub fn axpy(&self, a: f64, other: &TangentVector) -> Self {
        Self(self.0.axpy(a, &other.0))
    }
}

fn check_dims(theta: &ParameterPoint, v: &AmbientVector, context: &'static str) -> Result<()> {
    let (p, n) = (theta.p(), theta.n());
    if v.d_mu.len() != p
        || v.d_sigma.nrows() != p
        || v.d_sigma.ncols() != p
        || v.d_tau.len() != n
    {
        return Err(Error::dims(
            context,
            format!("(p, n) = ({p}, {n})"),
            format!(
                "d_mu {}, d_sigma {}x{}, d_tau {}",
                v.d_mu.len(),
                v.d_sigma.nrows(),
                v.d_sigma.ncols(),
                v.d_tau.len()
            ),
        ));
    }
    Ok(())
}

fn check_tangent(theta: &ParameterPoint, v: &AmbientVector) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::NotTangent("non-finite entry".into()));
    }
    if !linalg::is_symmetric(&v.d_sigma, SYMMETRY_TOL) {
        return Err(Error::NotTangent("d_sigma is not symmetric".into()));
    }
    let tau = theta.tau();
    let constraint: f64 = v.d_tau.iter().zip(tau.iter()).map(|(x, t)| x / t).sum();
    let inv_max = tau.iter().fold(0.0_f64, |m, t| m.max(1.0 / t));
    let inv_norm = inv_max * tau.iter().map(|t| (1.0 / (t * inv_max)).powi(2)).sum::<f64>().sqrt();
    if constraint.abs() > TANGENCY_TOL * v.d_tau.norm() * inv_norm {
        return Err(Error::NotTangent(format!(
            "d_tau violates the unit-product constraint (d_tauᵀτ^-1 = {constraint:e})"
        )));
    }
    Ok(())
}

/// The Fisher information metric at `theta`, extended to the ambient space:
///
/// `Σ_i(1/τ_i) ξ_μᵀΣ⁻¹η_μ + (n/2) Tr(Σ⁻¹ξ_ΣᵀΣ⁻¹η_Σ) + (p/2)(ξ_τ⊙τ^{-1})ᵀ(η_τ⊙τ^{-1})`.
pub fn fim_inner(theta: &ParameterPoint, xi: &AmbientVector, eta: &AmbientVector) -> Result<f64> {
    check_dims(theta, xi, "fim_inner (xi)")?;
    check_dims(theta, eta, "fim_inner (eta)")?;
    Ok(fim_inner_unchecked(theta, xi, eta))
}

pub(crate) fn fim_inner_unchecked(theta: &ParameterPoint, xi: &AmbientVector, eta: &AmbientVector) -> f64 {
    let (p, n) = (theta.p() as f64, theta.n() as f64);
    let s_inv = theta.sigma_inv();
    let mu_term = theta.sum_inv_tau() * xi.d_mu.dot(&(s_inv * &eta.d_mu));
    let left = s_inv * xi.d_sigma.transpose();
    let right = s_inv * &eta.d_sigma;
    let sigma_term = 0.5 * n * linalg::trace_of_product(&left, &right);
    let tau_term = 0.5
        * p
        * xi
            .d_tau
            .iter()
            .zip(eta.d_tau.iter())
            .zip(theta.tau().iter())
            .map(|((a, b), t)| (a / t) * (b / t))
            .sum::<f64>();
    mu_term + sigma_term + tau_term
}

/// FIM norm `sqrt(⟨ξ, ξ⟩_θ)`.
pub fn fim_norm(theta: &ParameterPoint, xi: &AmbientVector) -> Result<f64> {
    Ok(fim_inner(theta, xi, xi)?.max(0.0).sqrt())
}

/// FIM-orthogonal projection onto the tangent space at `theta`.
pub fn project(theta: &ParameterPoint, xi: &AmbientVector) -> Result<TangentVector> {
    check_dims(theta, xi, "project")?;
    Ok(project_unchecked(theta, xi))
}

pub(crate) fn project_unchecked(theta: &ParameterPoint, xi: &AmbientVector) -> TangentVector {
    let tau = theta.tau();
    let alpha: f64 = xi.d_tau.iter().zip(tau.iter()).map(|(x, t)| x / t).sum::<f64>() / theta.n() as f64;
    TangentVector(AmbientVector {
        d_mu: xi.d_mu.clone(),
        d_sigma: linalg::sym(&xi.d_sigma),
        d_tau: &xi.d_tau - tau * alpha,
    })
}

/// Converts a Euclidean (ambient) gradient into the Riemannian gradient for
/// the Fisher metric:
/// `P_θ((Σ_i 1/τ_i)⁻¹ Σ G_μ, (2/n) Σ G_Σ Σ, (2/p) τ^{⊙2} ⊙ G_τ)`.
pub fn egrad_to_rgrad(theta: &ParameterPoint, g: &AmbientVector) -> Result<TangentVector> {
    check_dims(theta, g, "egrad_to_rgrad")?;
    let (p, n) = (theta.p() as f64, theta.n() as f64);
    let sigma = theta.sigma();
    let d_mu = (sigma * &g.d_mu) / theta.sum_inv_tau();
    let d_sigma = sigma * &g.d_sigma * sigma * (2.0 / n);
    let d_tau = g.d_tau.zip_map(theta.tau(), |gt, t| 2.0 / p * t * (t * gt));
    Ok(project_unchecked(theta, &AmbientVector { d_mu, d_sigma, d_tau }))
}

/// `ξ_τᵀ τ^{⊙-2} / Σ_i(1/τ_i)`, the scalar that recurs in the connection and
/// the retraction.
fn texture_mean_coefficient(theta: &ParameterPoint, d_tau: &DVector<f64>) -> f64 {
    d_tau
        .iter()
        .zip(theta.tau().iter())
        .map(|(x, t)| x / t / t)
        .sum::<f64>()
        / theta.sum_inv_tau()
}

/// Levi-Civita connection `∇_ξ η` of the Fisher metric at `theta`.
///
/// `d_eta_xi` is the ambient directional derivative `Dη(θ)[ξ]` of the field
/// `η`; pass zero for a constant field.
pub fn connection(
    theta: &ParameterPoint,
    xi: &TangentVector,
    eta: &TangentVector,
    d_eta_xi: &AmbientVector,
) -> Result<TangentVector> {
    check_dims(theta, xi, "connection (xi)")?;
    check_dims(theta, eta, "connection (eta)")?;
    check_dims(theta, d_eta_xi, "connection (d_eta_xi)")?;
    check_tangent(theta, xi)?;
    check_tangent(theta, eta)?;

    let (p, n) = (theta.p(), theta.n());
    let s_inv = theta.sigma_inv();
    let a_xi = texture_mean_coefficient(theta, &xi.d_tau);
    let a_eta = texture_mean_coefficient(theta, &eta.d_tau);

    let xi_s_sinv = &xi.d_sigma * s_inv;
    let eta_s_sinv = &eta.d_sigma * s_inv;
    let mu_corr = -0.5
        * (&eta.d_mu * a_xi + &xi_s_sinv * &eta.d_mu + &xi.d_mu * a_eta + &eta_s_sinv * &xi.d_mu);

    let sigma_corr = &eta.d_mu * xi.d_mu.transpose() * (theta.sum_inv_tau() / n as f64)
        - &xi_s_sinv * &eta.d_sigma;

    let quad = xi.d_mu.dot(&(s_inv * &eta.d_mu)) / p as f64;
    let tau_corr = DVector::from_iterator(
        n,
        (0..n).map(|i| quad - xi.d_tau[i] * eta.d_tau[i] / theta.tau()[i]),
    );

    let full = AmbientVector {
        d_mu: &d_eta_xi.d_mu + mu_corr,
        d_sigma: &d_eta_xi.d_sigma + sigma_corr,
        d_tau: &d_eta_xi.d_tau + tau_corr,
    };
    Ok(project_unchecked(theta, &full))
}

/// Second-order retraction `r(t) = R_θ(tξ)`.
///
/// The location and scatter follow explicit quadratic polynomials in `t`;
/// the textures follow a quadratic polynomial mapped back to unit product by
/// `N`. Fails with [`Error::StepTooLarge`] when the result leaves the manifold.
pub fn retract(theta: &ParameterPoint, xi: &TangentVector, t: f64) -> Result<ParameterPoint> {
    check_dims(theta, xi, "retract")?;
    check_tangent(theta, xi)?;
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidConfig(format!("retraction step must be finite and >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(theta.clone());
    }
    let (p, n) = (theta.p(), theta.n());
    let s_inv = theta.sigma_inv();
    let half_t2 = 0.5 * t * t;

    let a_xi = texture_mean_coefficient(theta, &xi.d_tau);
    let xi_s_sinv = &xi.d_sigma * s_inv;
    let mu_acc = &xi.d_mu * a_xi + &xi_s_sinv * &xi.d_mu;
    let mu = theta.mu() + &xi.d_mu * t + mu_acc * half_t2;

    let sigma_acc = &xi_s_sinv * &xi.d_sigma
        - &xi.d_mu * xi.d_mu.transpose() * (theta.sum_inv_tau() / n as f64);
    let sigma = linalg::sym(&(theta.sigma() + &xi.d_sigma * t + sigma_acc * half_t2));

    let quad = xi.d_mu.dot(&(s_inv * &xi.d_mu)) / p as f64;
    let x = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let (ti, xi_i) = (theta.tau()[i], xi.d_tau[i]);
            ti + t * xi_i + half_t2 * (xi_i * (xi_i / ti) - quad)
        }),
    );
    if let Some(i) = x.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::StepTooLarge {
            t,
            reason: format!("texture {i} is not positive ({})", x[i]),
        });
    }
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::StepTooLarge {
            t,
            reason: "location is not finite".into(),
        });
    }
    let chol = linalg::cholesky_lower(&sigma).ok_or_else(|| Error::StepTooLarge {
        t,
        reason: "scatter matrix is not positive definite".into(),
    })?;
    let tau = normalize_textures(&x);
    Ok(ParameterPoint::from_parts(mu, sigma, tau, chol))
}

/// Smallest `t > 0` with `a0 + a1 t + a2 t² = 0` given `a0 > 0`, or `+∞`.
fn first_positive_root(a0: f64, a1: f64, a2: f64) -> f64 {
    if a2 == 0.0 {
        return if a1 < 0.0 { a0 / -a1 } else { f64::INFINITY };
    }
    let disc = a1 * a1 - 4.0 * a2 * a0;
    if a2 > 0.0 && (disc < 0.0 || a1 >= 0.0) {
        return f64::INFINITY;
    }
    // Both remaining cases share the cancellation-free form of the smaller root.
    2.0 * a0 / (-a1 + disc.max(0.0).sqrt())
}

/// Sufficient feasibility bound `t_max = min{t₁, t₂}` for [`retract`]: for
/// every `t ∈ [0, t_max)` the retraction stays on the manifold.
///
/// `t₁` keeps `λ⁻(Σ) + t λ⁻(ξ_Σ) − t²/(2n) Σ_i(1/τ_i) ‖ξ_μ‖²` positive and
/// `t₂` keeps `τ_min + t (ξ_τ)_min − t²/(2p) ‖Σ^{-1/2} ξ_μ‖²` positive.
pub fn max_step(theta: &ParameterPoint, xi: &TangentVector) -> Result<f64> {
    check_dims(theta, xi, "max_step")?;
    check_tangent(theta, xi)?;
    let (p, n) = (theta.p() as f64, theta.n() as f64);
    let lam_sigma = linalg::min_eigenvalue(theta.sigma());
    let lam_xi = linalg::min_eigenvalue(&xi.d_sigma);
    let tau_min = theta.tau().min();
    let xi_tau_min = xi.d_tau.min();
    let mu_zero = xi.d_mu.iter().all(|v| *v == 0.0);

    let (t1, t2) = if mu_zero {
        let t1 = if lam_xi < 0.0 { lam_sigma / lam_xi.abs() } else { f64::INFINITY };
        let t2 = if xi_tau_min < 0.0 { tau_min / xi_tau_min.abs() } else { f64::INFINITY };
        (t1, t2)
    } else {
        let mu_sq = xi.d_mu.norm_squared();
        let delta1 = lam_xi * lam_xi + 2.0 / n * lam_sigma * theta.sum_inv_tau() * mu_sq;
        let t1 = 2.0 * lam_sigma / (delta1.sqrt() - lam_xi);
        let whitened_sq = xi.d_mu.dot(&(theta.sigma_inv() * &xi.d_mu));
        let delta2 = xi_tau_min * xi_tau_min + 2.0 / p * tau_min * whitened_sq;
        let t2 = 2.0 * tau_min / (delta2.sqrt() - xi_tau_min);
        (t1, t2)
    };
    Ok(t1.min(t2))
}

/// A feasibility bound at least as large as [`max_step`] and still
/// sufficient: the scatter condition is evaluated after whitening by `Σ`
/// and each texture quadratic is solved exactly.
pub fn feasible_step_bound(theta: &ParameterPoint, xi: &TangentVector) -> Result<f64> {
    let paper_bound = max_step(theta, xi)?;
    let (p, n) = (theta.p(), theta.n());
    let l = theta.sigma_cholesky();
    let whiten = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let half = l.clone().solve_lower_triangular(m).expect("positive diagonal");
        let full = l
            .clone()
            .solve_lower_triangular(&half.transpose())
            .expect("positive diagonal");
        linalg::sym(&full)
    };
    let s_inv = theta.sigma_inv();
    let a = whiten(&xi.d_sigma);
    let acc = &xi.d_sigma * s_inv * &xi.d_sigma
        - &xi.d_mu * xi.d_mu.transpose() * (theta.sum_inv_tau() / n as f64);
    let b = whiten(&linalg::sym(&acc));
    let t_sigma = first_positive_root(1.0, linalg::min_eigenvalue(&a), 0.5 * linalg::min_eigenvalue(&b));

    let quad = xi.d_mu.dot(&(s_inv * &xi.d_mu)) / p as f64;
    let t_tau = (0..n)
        .map(|i| {
            let (ti, x) = (theta.tau()[i], xi.d_tau[i]);
            first_positive_root(ti, x, 0.5 * (x * (x / ti) - quad))
        })
        .fold(f64::INFINITY, f64::min);
    Ok(paper_bound.max(t_sigma.min(t_tau)))
}
