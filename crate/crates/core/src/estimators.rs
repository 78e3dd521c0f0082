//! NC-MSG regularized maximum likelihood and the Gaussian and Tyler
//! baselines.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{AmbientVector, ParameterPoint};
use crate::model::{self, BatchDataset, RegularizationSpec};
use crate::optim::{self, Metric, OptimizerConfig, OptimizerReport};

const TEXTURE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEstimates {
    pub mean: DVector<f64>,
    /// `(1/n) Σ (x_i − mean)(x_i − mean)ᵀ`.
    pub scm: DMatrix<f64>,
    /// `(1/n) Σ x_i x_iᵀ`.
    pub second_moment: DMatrix<f64>,
}

pub fn gaussian_estimates(data: &BatchDataset) -> GaussianEstimates {
    let x = data.samples();
    let n = data.n() as f64;
    let mean = x.row_mean().transpose();
    let second_moment = linalg::sym(&(x.transpose() * x / n));
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let scm = linalg::sym(&(centered.transpose() * &centered / n));
    GaussianEstimates {
        mean,
        scm,
        second_moment,
    }
}

/// Problems worth reporting before a fit (none of them prevents it).
pub fn fit_warnings(data: &BatchDataset, spec: &RegularizationSpec) -> Vec<String> {
    let mut out = Vec::new();
    if data.n() <= data.p() {
        out.push(format!(
            "n = {} does not exceed p = {}; the scatter estimate may be ill-conditioned",
            data.n(),
            data.p()
        ));
    }
    if spec.beta == 0.0 {
        out.push("beta = 0: existence of a minimizer is not guaranteed".into());
    }
    out
}

/// Starting point: sample mean, SCM split into a unit-determinant shape and
/// a scale, textures `q_i / p` floored and renormalized to unit product.
pub fn initial_point(data: &BatchDataset) -> Result<ParameterPoint> {
    let g = gaussian_estimates(data);
    let p = data.p();
    let mut scm = g.scm;
    if linalg::cholesky_lower(&scm).is_none() {
        let trace = scm.trace();
        if !(trace > 0.0) {
            return Err(Error::DegenerateData("all samples are identical".into()));
        }
        for i in 0..p {
            scm[(i, i)] += 1e-6 * trace / p as f64;
        }
    }
    let l = linalg::cholesky_lower(&scm)
        .ok_or_else(|| Error::DegenerateData("sample covariance is not positive definite".into()))?;
    let log_det = linalg::log_det_from_lower(&l);
    let shape = &scm * (-log_det / p as f64).exp();
    let unit = ParameterPoint::new(g.mean.clone(), shape.clone(), DVector::from_element(data.n(), 1.0))?;
    let q = model::quadratic_forms(&unit, data)?;
    let raw = q.map(|qi| (qi / p as f64).max(TEXTURE_FLOOR));
    let log_scale = raw.iter().map(|v| v.ln()).sum::<f64>() / data.n() as f64;
    let tau = raw.map(|v| (v.ln() - log_scale).exp());
    ParameterPoint::normalized(g.mean, shape * log_scale.exp(), tau)
}

/// Regularized maximum-likelihood estimate by Riemannian gradient descent.
pub fn fit_ncmsg(
    data: &BatchDataset,
    spec: &RegularizationSpec,
    config: &OptimizerConfig,
) -> Result<(ParameterPoint, OptimizerReport)> {
    fit_ncmsg_with(data, spec, config, Metric::Fisher)
}

pub fn fit_ncmsg_with(
    data: &BatchDataset,
    spec: &RegularizationSpec,
    config: &OptimizerConfig,
    metric: Metric,
) -> Result<(ParameterPoint, OptimizerReport)> {
    spec.validate()?;
    let theta0 = initial_point(data)?;
    optim::minimize(
        metric,
        |t| model::regularized_nll(t, data, spec),
        |t| model::regularized_nll_egrad(t, data, spec),
        theta0,
        config,
    )
}

/// Same estimate with the location held at `mu`.
pub fn fit_ncmsg_known_location(
    data: &BatchDataset,
    mu: &DVector<f64>,
    spec: &RegularizationSpec,
    config: &OptimizerConfig,
) -> Result<(ParameterPoint, OptimizerReport)> {
    spec.validate()?;
    if mu.len() != data.p() {
        return Err(Error::dims("fit_ncmsg_known_location", data.p(), mu.len()));
    }
    let start = initial_point(data)?;
    let (_, sigma, tau) = start.into_parts();
    let theta0 = ParameterPoint::new(mu.clone(), sigma, tau)?;
    let egrad = |t: &ParameterPoint| -> Result<AmbientVector> {
        let mut g = model::regularized_nll_egrad(t, data, spec)?;
        g.d_mu.fill(0.0);
        Ok(g)
    };
    optim::rgd_minimize(|t| model::regularized_nll(t, data, spec), egrad, theta0, config)
}

/// Unregularized maximum-likelihood location and scatter, allowing for the
/// likelihood being unbounded.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Unit product over the samples not listed in `coincident`, whose
    /// textures are 0.
    pub tau: DVector<f64>,
    /// Samples the location converged onto.
    pub coincident: Vec<usize>,
    pub report: OptimizerReport,
}

/// Maximum-likelihood estimate of `(μ, Σ, τ)` by Fisher-metric RGD on the
/// plain NLL.
///
/// With heavy tails the NLL has no minimizer: the location is drawn onto a
/// sample whose texture then decreases without bound while the scatter
/// scale drifts. The descent is therefore stopped as soon as the location
/// coincides with a sample; the location is set to that sample and the
/// scatter and textures are the maximum-likelihood values of the remaining
/// samples at that location (Tyler's fixed-location estimator).
pub fn ncmsg_mle(data: &BatchDataset, config: &OptimizerConfig) -> Result<MleFit> {
    let theta0 = initial_point(data)?;
    let run = optim::minimize_until(
        Metric::Fisher,
        |t| model::nll(t, data),
        |t| model::nll_egrad(t, data),
        theta0,
        config,
        |t| !coincident_samples(data, t.mu()).is_empty(),
    );
    let (theta, report) = match run {
        Err(Error::Stalled { best, report, .. }) => (*best, *report),
        other => other?,
    };
    let coincident = coincident_samples(data, theta.mu());
    let Some(&first) = coincident.first() else {
        let (mu, sigma, tau) = theta.into_parts();
        return Ok(MleFit {
            mu,
            sigma,
            tau,
            coincident,
            report,
        });
    };
    let mu = data.sample(first);
    let coincident = coincident_samples(data, &mu);
    let cfg = TylerConfig::default().excluding_coincident();
    let sigma = tyler_fixed_location(data, &mu, &cfg)?;
    let l = linalg::cholesky_lower(&sigma)
        .ok_or_else(|| Error::DegenerateData("scatter estimate is not positive definite".into()))?;
    let mut tau = DVector::zeros(data.n());
    for i in (0..data.n()).filter(|i| coincident.binary_search(i).is_err()) {
        let z = l
            .solve_lower_triangular(&(data.sample(i) - &mu))
            .expect("Cholesky factor has a positive diagonal");
        tau[i] = z.norm_squared() / data.p() as f64;
    }
    Ok(MleFit {
        mu,
        sigma,
        tau,
        coincident,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TylerConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Drop samples that coincide with the location instead of failing.
    #[serde(default)]
    pub exclude_coincident: bool,
}

impl Default for TylerConfig {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-10,
            exclude_coincident: false,
        }
    }
}

impl TylerConfig {
    pub fn excluding_coincident(mut self) -> Self {
        self.exclude_coincident = true;
        self
    }
}

/// Residuals below this many units of roundoff of the coordinates count as zero.
const COINCIDENCE_ULPS: f64 = 1024.0;

/// Indices of the samples equal to `mu` up to rounding of the coordinates.
///
/// Very heavy tails put samples within 1e-15 of the location; their
/// residual direction is pure roundoff and carries no scatter information.
pub fn coincident_samples(data: &BatchDataset, mu: &DVector<f64>) -> Vec<usize> {
    let tol = COINCIDENCE_ULPS * f64::EPSILON;
    (0..data.n())
        .filter(|&i| {
            let row = data.samples().row(i);
            let (mut diff, mut size) = (0.0_f64, 0.0_f64);
            for (x, m) in row.iter().zip(mu.iter()) {
                diff = diff.max((x - m).abs());
                size = size.max(x.abs()).max(m.abs());
            }
            diff <= tol * size
        })
        .collect()
}

/// The dataset without the rows in `drop` (sorted).
fn without_rows(data: &BatchDataset, drop: &[usize]) -> Result<BatchDataset> {
    let keep: Vec<usize> = (0..data.n()).filter(|i| drop.binary_search(i).is_err()).collect();
    let x = data.samples().select_rows(keep.iter());
    if keep.len() <= data.p() {
        return Err(Error::DegenerateData(format!(
            "only {} samples remain after removing those at the location (p = {})",
            keep.len(),
            data.p()
        )));
    }
    BatchDataset::new(x, data.label())
}

fn unit_det(sigma: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let l = linalg::cholesky_lower(sigma)
        .ok_or_else(|| Error::DegenerateData("scatter iterate is not positive definite".into()))?;
    let p = sigma.nrows() as f64;
    let scale = (-linalg::log_det_from_lower(&l) / p).exp();
    let normalized = sigma * scale;
    let l = l * scale.sqrt();
    Ok((normalized, l))
}

/// Quadratic forms `(x_i − μ)ᵀ(LLᵀ)⁻¹(x_i − μ)` and residual rows.
fn tyler_forms(data: &BatchDataset, mu: &DVector<f64>, l: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut centered = data.samples().clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let z = l
        .clone()
        .solve_lower_triangular(&centered.transpose())
        .expect("Cholesky factor has a positive diagonal");
    let q = DVector::from_iterator(z.ncols(), z.column_iter().map(|c| c.norm_squared()));
    // Heavy-tailed samples can legitimately sit within 1e-13 of the location,
    // so only an exact coincidence (an infinite weight) is degenerate.
    if let Some(i) = q.iter().position(|v| !(*v >= f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateData(format!(
            "sample {i} coincides with the current location estimate"
        )));
    }
    Ok((q, centered))
}

fn tyler_scatter(centered: &DMatrix<f64>, q: &DVector<f64>) -> DMatrix<f64> {
    let (n, p) = centered.shape();
    let mut s = DMatrix::zeros(p, p);
    for i in 0..n {
        let r = centered.row(i).transpose();
        s.ger(p as f64 / (n as f64 * q[i]), &r, &r, 1.0);
    }
    linalg::sym(&s)
}

/// Rescales `sigma` so that `∏ (q_i / p) = 1`.
fn unit_product_scale(data: &BatchDataset, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (shape, l) = unit_det(sigma)?;
    let (q, _) = tyler_forms(data, mu, &l)?;
    let p = data.p() as f64;
    let log_c = q.iter().map(|v| (v / p).ln()).sum::<f64>() / data.n() as f64;
    Ok(shape * log_c.exp())
}

fn relative_change(new: &DMatrix<f64>, old: &DMatrix<f64>) -> f64 {
    (new - old).norm() / old.norm()
}

enum JointStep {
    Moved(DVector<f64>, DMatrix<f64>, f64),
    /// The location update landed on sample `i`.
    Pinned(usize),
}

/// One joint Tyler update from `(mu, sigma)`, both normalized to unit
/// determinant; returns the new pair and the relative change.
fn tyler_joint_step(data: &BatchDataset, mu: &DVector<f64>, sigma: &DMatrix<f64>, exclude: bool) -> Result<JointStep> {
    let (shape, l) = unit_det(sigma)?;
    let (q, _) = tyler_forms(data, mu, &l)?;
    let w = q.map(|v| 1.0 / v.sqrt());
    let mu_new = data.samples().transpose() * &w / w.sum();
    if exclude {
        if let Some(&i) = coincident_samples(data, &mu_new).first() {
            return Ok(JointStep::Pinned(i));
        }
    }
    let (q2, centered) = tyler_forms(data, &mu_new, &l)?;
    let (new_shape, _) = unit_det(&tyler_scatter(&centered, &q2))?;
    let spread = (shape.trace() / data.p() as f64).sqrt();
    let res = relative_change(&new_shape, &shape).max((&mu_new - mu).norm() / spread);
    Ok(JointStep::Moved(mu_new, new_shape, res))
}

/// Residual of the joint fixed-point equations at `(mu, sigma)`.
pub fn tyler_joint_residual(data: &BatchDataset, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    match tyler_joint_step(data, mu, sigma, false)? {
        JointStep::Moved(_, _, res) => Ok(res),
        JointStep::Pinned(_) => unreachable!("pinning is only reported when excluding"),
    }
}

/// Residual of the known-location fixed-point equation at `sigma`.
pub fn tyler_fixed_residual(data: &BatchDataset, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let (shape, l) = unit_det(sigma)?;
    let (q, centered) = tyler_forms(data, mu, &l)?;
    let (new_shape, _) = unit_det(&tyler_scatter(&centered, &q))?;
    Ok(relative_change(&new_shape, &shape))
}

fn check_tyler_input(data: &BatchDataset, config: &TylerConfig) -> Result<DMatrix<f64>> {
    if config.max_iter == 0 || !(config.tol > 0.0) {
        return Err(Error::InvalidConfig("Tyler needs max_iter > 0 and tol > 0".into()));
    }
    if data.n() <= data.p() {
        return Err(Error::DegenerateData(format!(
            "Tyler's estimator needs n > p (n = {}, p = {})",
            data.n(),
            data.p()
        )));
    }
    let scm = gaussian_estimates(data).scm;
    if linalg::cholesky_lower(&scm).is_none() {
        return Err(Error::DegenerateData(
            "samples lie on a lower-dimensional affine subspace".into(),
        ));
    }
    Ok(scm)
}

/// Tyler's joint location-scatter estimator, scaled so that the implied
/// textures `q_i / p` have unit product.
///
/// With `exclude_coincident`, a location update that lands on a sample is
/// final (that sample's weight is unbounded) and the scatter is finished by
/// [`tyler_fixed_location`] on the remaining samples.
pub fn tyler_joint(data: &BatchDataset, config: &TylerConfig) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let scm = check_tyler_input(data, config)?;
    let mut mu = data.samples().row_mean().transpose();
    let (mut sigma, _) = unit_det(&scm)?;
    let mut residual = f64::INFINITY;
    for _ in 0..config.max_iter {
        if config.exclude_coincident && !coincident_samples(data, &mu).is_empty() {
            let sigma = tyler_fixed_location(data, &mu, config)?;
            return Ok((mu, sigma));
        }
        match tyler_joint_step(data, &mu, &sigma, config.exclude_coincident)? {
            JointStep::Moved(m, s, res) => {
                mu = m;
                sigma = s;
                residual = res;
            }
            JointStep::Pinned(i) => {
                let mu = data.sample(i);
                let sigma = tyler_fixed_location(data, &mu, config)?;
                return Ok((mu, sigma));
            }
        }
        if residual < config.tol {
            let sigma = unit_product_scale(data, &mu, &sigma)?;
            return Ok((mu, sigma));
        }
    }
    Err(Error::NotConverged {
        iterations: config.max_iter,
        residual,
        mu,
        sigma,
    })
}

/// Tyler's scatter estimator with the location known, with the same
/// unit-product scale. This is the NC-MSG maximum-likelihood scatter at `mu`.
///
/// With `exclude_coincident`, samples at `mu` are dropped first and the scale
/// is fixed over the remaining ones.
pub fn tyler_fixed_location(data: &BatchDataset, mu: &DVector<f64>, config: &TylerConfig) -> Result<DMatrix<f64>> {
    if mu.len() != data.p() {
        return Err(Error::dims("tyler_fixed_location", data.p(), mu.len()));
    }
    if config.exclude_coincident {
        let drop = coincident_samples(data, mu);
        if !drop.is_empty() {
            let cfg = TylerConfig { exclude_coincident: false, ..*config };
            return tyler_fixed_location(&without_rows(data, &drop)?, mu, &cfg);
        }
    }
    let scm = check_tyler_input(data, config)?;
    let (mut sigma, mut l) = unit_det(&scm)?;
    let mut residual = f64::INFINITY;
    for _ in 0..config.max_iter {
        let (q, centered) = tyler_forms(data, mu, &l)?;
        let (new_shape, new_l) = unit_det(&tyler_scatter(&centered, &q))?;
        residual = relative_change(&new_shape, &sigma);
        sigma = new_shape;
        l = new_l;
        if residual < config.tol {
            return unit_product_scale(data, mu, &sigma);
        }
    }
    Err(Error::NotConverged {
        iterations: config.max_iter,
        residual,
        mu: mu.clone(),
        sigma,
    })
}

/// `‖a − b‖²` (Frobenius for matrices).
pub fn squared_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm_squared()
}
