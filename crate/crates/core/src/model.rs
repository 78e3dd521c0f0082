//! Negative log-likelihood of the NC-MSG model, the eigenvalue penalty `R_κ`
//! and their ambient gradients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{AmbientVector, ParameterPoint};

/// One batch of `n` samples in `R^p`; row `i` is `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchDataset {
    samples: DMatrix<f64>,
    label: Option<usize>,
}

impl BatchDataset {
    pub fn new(samples: DMatrix<f64>, label: Option<usize>) -> Result<Self> {
        if samples.nrows() < 2 {
            return Err(Error::InvalidData(format!(
                "a batch needs at least 2 samples, got {}",
                samples.nrows()
            )));
        }
        if samples.ncols() < 1 {
            return Err(Error::InvalidData("samples have zero dimension".into()));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite entry at row {}, column {}",
                pos % samples.nrows(),
                pos / samples.nrows()
            )));
        }
        Ok(Self { samples, label })
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.samples.nrows()
    }

    /// Sample dimension.
    pub fn p(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.samples.row(i).transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Penalty {
    /// `r_κ(x) = log²(x / κ)`.
    #[default]
    SquaredLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationSpec {
    pub kappa: f64,
    pub beta: f64,
    #[serde(default)]
    pub penalty: Penalty,
}

impl Default for RegularizationSpec {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            beta: 0.0,
            penalty: Penalty::SquaredLog,
        }
    }
}

impl RegularizationSpec {
    pub fn new(kappa: f64, beta: f64) -> Result<Self> {
        let spec = Self {
            kappa,
            beta,
            penalty: Penalty::SquaredLog,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::InvalidConfig(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    /// Scalar penalty `r_κ(x)`.
    pub fn penalty_value(&self, x: f64) -> f64 {
        match self.penalty {
            Penalty::SquaredLog => (x / self.kappa).ln().powi(2),
        }
    }
}

fn check_data(theta: &ParameterPoint, data: &BatchDataset, context: &'static str) -> Result<()> {
    if theta.p() != data.p() || theta.n() != data.n() {
        return Err(Error::dims(
            context,
            format!("(p, n) = ({}, {})", theta.p(), theta.n()),
            format!("(p, n) = ({}, {})", data.p(), data.n()),
        ));
    }
    Ok(())
}

/// Whitened residuals `L⁻¹(x_i − μ)` as columns, with `Σ = L Lᵀ`.
fn whitened_residuals(theta: &ParameterPoint, data: &BatchDataset) -> DMatrix<f64> {
    let mut centered = data.samples().transpose();
    for mut col in centered.column_iter_mut() {
        col -= theta.mu();
    }
    theta
        .sigma_cholesky()
        .clone()
        .solve_lower_triangular(&centered)
        .expect("Cholesky factor has a positive diagonal")
}

/// Quadratic forms `q_i = (x_i − μ)ᵀΣ⁻¹(x_i − μ)`.
pub fn quadratic_forms(theta: &ParameterPoint, data: &BatchDataset) -> Result<DVector<f64>> {
    check_data(theta, data, "quadratic_forms")?;
    let z = whitened_residuals(theta, data);
    Ok(DVector::from_iterator(z.ncols(), z.column_iter().map(|c| c.norm_squared())))
}

/// `½ Σ_i [p log τ_i + log|Σ| + q_i / τ_i]`, additive constants dropped.
pub fn nll(theta: &ParameterPoint, data: &BatchDataset) -> Result<f64> {
    let q = quadratic_forms(theta, data)?;
    let p = theta.p() as f64;
    let log_det = theta.log_det_sigma();
    let terms = q
        .iter()
        .zip(theta.tau().iter())
        .map(|(qi, ti)| p * ti.ln() + log_det + qi / ti);
    Ok(0.5 * linalg::neumaier_sum(terms))
}

/// Ambient gradient of [`nll`].
pub fn nll_egrad(theta: &ParameterPoint, data: &BatchDataset) -> Result<AmbientVector> {
    check_data(theta, data, "nll_egrad")?;
    let (p, n) = (theta.p(), theta.n());
    let s_inv = theta.sigma_inv();
    let tau = theta.tau();

    let mut weighted_sum = DVector::zeros(p);
    let mut scatter = DMatrix::zeros(p, p);
    let mut d_tau = DVector::zeros(n);
    for i in 0..n {
        let r = data.sample(i) - theta.mu();
        let w = 1.0 / tau[i];
        weighted_sum += &r * w;
        scatter.ger(w, &r, &r, 1.0);
        let qi = r.dot(&(s_inv * &r));
        d_tau[i] = (p as f64 - qi / tau[i]) / (2.0 * tau[i]);
    }
    let d_mu = -(s_inv * weighted_sum);
    let d_sigma = linalg::sym(&((s_inv * n as f64 - s_inv * scatter * s_inv) * 0.5));
    Ok(AmbientVector { d_mu, d_sigma, d_tau })
}

/// `R_κ(θ) = Σ_i Σ_j r_κ(τ_i λ_j)`, `λ_j` the eigenvalues of `Σ`.
pub fn reg_value(theta: &ParameterPoint, spec: &RegularizationSpec) -> Result<f64> {
    spec.validate()?;
    let (p, n) = (theta.p() as f64, theta.n() as f64);
    let log_kappa = spec.kappa.ln();
    // Σ_i Σ_j (a_i + b_j)² = p Σ a_i² + 2 (Σ a_i)(Σ b_j) + n Σ b_j²
    // with a_i = log τ_i and b_j = log λ_j − log κ.
    let log_tau: Vec<f64> = theta.tau().iter().map(|t| t.ln()).collect();
    let sum_a = linalg::neumaier_sum(log_tau.iter().copied());
    let sum_a2 = linalg::neumaier_sum(log_tau.iter().map(|a| a * a));
    let b = linalg::log_eigenvalues_from_lower(theta.sigma_cholesky()).add_scalar(-log_kappa);
    let sum_b = theta.log_det_sigma() - p * log_kappa;
    let sum_b2 = linalg::neumaier_sum(b.iter().map(|v| v * v));
    let value = match spec.penalty {
        Penalty::SquaredLog => p * sum_a2 + 2.0 * sum_a * sum_b + n * sum_b2,
    };
    Ok(value.max(0.0))
}

/// Ambient gradient of [`reg_value`].
///
/// On the feasible set this is `G_Σ = 2n Σ⁻¹(log Σ − log κ I)`,
/// `G_τ,i = (2/τ_i)(p log τ_i + log|Σ| − p log κ)`, `G_μ = 0`; the extra
/// `Σ_i log τ_i` term below vanishes there and makes the formula exact off it.
pub fn reg_egrad(theta: &ParameterPoint, spec: &RegularizationSpec) -> Result<AmbientVector> {
    spec.validate()?;
    let (p, n) = (theta.p(), theta.n());
    let log_kappa = spec.kappa.ln();
    let sum_log_tau: f64 = linalg::neumaier_sum(theta.tau().iter().map(|t| t.ln()));
    let log_sigma = linalg::logm_spd(theta.sigma());
    let shift = DMatrix::identity(p, p) * (sum_log_tau - n as f64 * log_kappa);
    let d_sigma = linalg::sym(&((log_sigma * n as f64 + shift) * theta.sigma_inv() * 2.0));
    let log_det = theta.log_det_sigma();
    let d_tau = theta
        .tau()
        .map(|t| 2.0 / t * (p as f64 * t.ln() + log_det - p as f64 * log_kappa));
    Ok(AmbientVector {
        d_mu: DVector::zeros(p),
        d_sigma,
        d_tau,
    })
}

/// `nll + β R_κ`.
pub fn regularized_nll(theta: &ParameterPoint, data: &BatchDataset, spec: &RegularizationSpec) -> Result<f64> {
    let base = nll(theta, data)?;
    if spec.beta == 0.0 {
        spec.validate()?;
        return Ok(base);
    }
    Ok(base + spec.beta * reg_value(theta, spec)?)
}

pub fn regularized_nll_egrad(
    theta: &ParameterPoint,
    data: &BatchDataset,
    spec: &RegularizationSpec,
) -> Result<AmbientVector> {
    let base = nll_egrad(theta, data)?;
    if spec.beta == 0.0 {
        spec.validate()?;
        return Ok(base);
    }
    Ok(base.axpy(spec.beta, &reg_egrad(theta, spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (ParameterPoint, BatchDataset) {
        let theta = ParameterPoint::identity(1, 2);
        let data = BatchDataset::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), None).unwrap();
        (theta, data)
    }

    #[test]
    fn nll_tiny_example() {
        let (theta, data) = tiny();
        assert_eq!(nll(&theta, &data).unwrap(), 1.0);
        let g = nll_egrad(&theta, &data).unwrap();
        assert_eq!(g.d_tau, DVector::from_vec(vec![0.0, 0.0]));
    }

    #[test]
    fn batch_validation() {
        assert!(BatchDataset::new(DMatrix::from_row_slice(1, 2, &[1.0, 2.0]), None).is_err());
        assert!(BatchDataset::new(DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]), None).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let theta = ParameterPoint::identity(2, 2);
        let (_, data) = tiny();
        assert!(matches!(nll(&theta, &data), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gaussian_mle_has_zero_location_gradient() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.3, 2.0, -1.0]);
        let mean = x.row_mean().transpose();
        let theta = ParameterPoint::new(mean, DMatrix::identity(2, 2), DVector::from_element(3, 1.0)).unwrap();
        let data = BatchDataset::new(x, None).unwrap();
        let g = nll_egrad(&theta, &data).unwrap();
        assert!(g.d_mu.norm() < 1e-14);
    }

    #[test]
    fn regularizer_examples() {
        let spec = RegularizationSpec::new(1.0, 1.0).unwrap();
        let e = std::f64::consts::E;
        let theta = ParameterPoint::new(
            DVector::zeros(2),
            DMatrix::from_diagonal(&DVector::from_vec(vec![e, 1.0 / e])),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        assert!((reg_value(&theta, &spec).unwrap() - 4.0).abs() < 1e-14);

        let kappa = 2.5;
        let spec = RegularizationSpec::new(kappa, 1.0).unwrap();
        let at_min = ParameterPoint::new(
            DVector::from_vec(vec![3.0, -1.0]),
            DMatrix::identity(2, 2) * kappa,
            DVector::from_element(4, 1.0),
        )
        .unwrap();
        assert!(reg_value(&at_min, &spec).unwrap().abs() < 1e-28);
        let g = reg_egrad(&at_min, &spec).unwrap();
        assert!(g.euclidean_norm() < 1e-14);
    }

    #[test]
    fn zero_beta_is_plain_nll() {
        let (theta, data) = tiny();
        let spec = RegularizationSpec::new(1.0, 0.0).unwrap();
        assert_eq!(regularized_nll(&theta, &data, &spec).unwrap(), nll(&theta, &data).unwrap());
    }

    #[test]
    fn spec_validation() {
        assert!(RegularizationSpec::new(0.0, 1.0).is_err());
        assert!(RegularizationSpec::new(1.0, -1.0).is_err());
        assert!(RegularizationSpec::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn log_penalty_diverges_at_both_ends() {
        // log x + β r(x) depends on x only through u = log(x / κ).
        for beta in [1e-3, 1.0, 10.0] {
            let spec = RegularizationSpec::new(1.0, beta).unwrap();
            let f = |x: f64| x.ln() + beta * spec.penalty_value(x);
            assert!(f(1e12) >= f(1.0) + 10.0);
            if beta >= 1.0 {
                assert!(f(1e-12) >= f(1.0) + 10.0);
            }
            let g = |u: f64| u + beta * u * u;
            let far = 2.0 / beta + 100.0;
            assert!(g(-far) >= 10.0 && g(far) >= 10.0, "beta {beta}");
        }
    }
}
