//! Synthetic parameters and batches, and rigid transformations of data.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{normalize_textures, ParameterPoint};
use crate::model::BatchDataset;

const MAX_ATTEMPTS: usize = 100;
const MIN_EIGENVALUE: f64 = 1e-12;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub p: usize,
    pub n: usize,
    /// Gamma shape of the textures; their variance is `1/ν`.
    pub nu: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::InvalidConfig("p must be >= 1".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig("n must be >= 2".into()));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::InvalidConfig(format!("nu must be > 0, got {}", self.nu)));
        }
        Ok(())
    }
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `diag(R)` folded into `Q`.
pub fn haar_orthogonal<R: Rng + ?Sized>(rng: &mut R, p: usize) -> DMatrix<f64> {
    let qr = standard_normal_matrix(rng, p, p).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Textures drawn i.i.d. from `Γ(ν, 1/ν)` and mapped to unit product.
pub fn sample_textures<R: Rng + ?Sized>(rng: &mut R, n: usize, nu: f64) -> Result<DVector<f64>> {
    let gamma = Gamma::new(nu, 1.0 / nu).map_err(|e| Error::InvalidConfig(format!("gamma law: {e}")))?;
    for _ in 0..MAX_ATTEMPTS {
        let raw = DVector::from_fn(n, |_, _| gamma.sample(rng));
        if raw.iter().all(|v| *v > 0.0 && v.is_finite()) {
            let tau = normalize_textures(&raw);
            if tau.iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Ok(tau);
            }
        }
    }
    Err(Error::Sampling(format!(
        "texture draw underflowed {MAX_ATTEMPTS} times (nu = {nu})"
    )))
}

/// `μ ~ N(0, I)`, `Σ = U Λ Uᵀ` with Haar `U` and `χ²₁` eigenvalues,
/// `τ ~ Γ(ν, 1/ν)` renormalized to unit product.
pub fn sample_parameters(cfg: &SyntheticConfig) -> Result<ParameterPoint> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let (p, n) = (cfg.p, cfg.n);
    let mu = standard_normal_vector(&mut rng, p);
    for _ in 0..MAX_ATTEMPTS {
        let u = haar_orthogonal(&mut rng, p);
        let lambda = standard_normal_vector(&mut rng, p).map(|z| z * z);
        let tau = sample_textures(&mut rng, n, cfg.nu)?;
        if lambda.min() < MIN_EIGENVALUE {
            continue;
        }
        let sigma = &u * DMatrix::from_diagonal(&lambda) * u.transpose();
        let sigma = crate::linalg::sym(&sigma);
        match ParameterPoint::new(mu.clone(), sigma, tau) {
            Ok(theta) => return Ok(theta),
            Err(Error::InvalidPoint(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Sampling(format!(
        "no valid parameter draw after {MAX_ATTEMPTS} attempts"
    )))
}

/// Draws `x_i ~ N(μ, τ_i Σ)` for `i = 1..n`.
pub fn sample_batch(theta: &ParameterPoint, seed: u64) -> Result<BatchDataset> {
    let mut rng = rng_from_seed(seed);
    sample_batch_with(theta, &mut rng)
}

pub fn sample_batch_with<R: Rng + ?Sized>(theta: &ParameterPoint, rng: &mut R) -> Result<BatchDataset> {
    let (p, n) = (theta.p(), theta.n());
    let l = theta.sigma_cholesky();
    let mut samples = DMatrix::zeros(n, p);
    for i in 0..n {
        let z = standard_normal_vector(rng, p);
        let x = theta.mu() + l * z * theta.tau()[i].sqrt();
        samples.set_row(i, &x.transpose());
    }
    BatchDataset::new(samples, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformMode {
    /// `x ↦ x + μ(t)`.
    Mean,
    /// `x ↦ Q(t)ᵀx`.
    Rotation,
    /// `x ↦ Q(t)ᵀx + μ(t)`.
    Both,
}

impl std::str::FromStr for TransformMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(TransformMode::Mean),
            "rotation" => Ok(TransformMode::Rotation),
            "both" => Ok(TransformMode::Both),
            other => Err(Error::InvalidConfig(format!(
                "unknown transform mode '{other}' (expected mean, rotation or both)"
            ))),
        }
    }
}

/// `Q(t) = exp(t·skew)` and `μ(t) = t·offset_direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    skew: DMatrix<f64>,
    offset_direction: DVector<f64>,
    t: f64,
}

impl RigidTransform {
    pub fn new(skew: DMatrix<f64>, offset_direction: DVector<f64>, t: f64) -> Result<Self> {
        let p = offset_direction.len();
        if skew.nrows() != p || skew.ncols() != p {
            return Err(Error::dims(
                "rigid transform",
                format!("{p}x{p} generator"),
                format!("{}x{}", skew.nrows(), skew.ncols()),
            ));
        }
        if (&skew + skew.transpose()).abs().max() > 1e-12 {
            return Err(Error::InvalidConfig("generator is not skew-symmetric".into()));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidConfig(format!("t must lie in [0, 1], got {t}")));
        }
        Ok(Self {
            skew,
            offset_direction,
            t,
        })
    }

    /// Random generator `(A − Aᵀ)/2` and offset direction with i.i.d.
    /// Gaussian entries, scaled by `rotation_scale` and `offset_scale`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, p: usize, rotation_scale: f64, offset_scale: f64) -> Self {
        let a = standard_normal_matrix(rng, p, p);
        let skew = (&a - a.transpose()) * (0.5 * rotation_scale);
        let offset_direction = standard_normal_vector(rng, p) * offset_scale;
        Self {
            skew,
            offset_direction,
            t: 1.0,
        }
    }

    pub fn at(&self, t: f64) -> Result<Self> {
        Self::new(self.skew.clone(), self.offset_direction.clone(), t)
    }

    pub fn p(&self) -> usize {
        self.offset_direction.len()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn skew(&self) -> &DMatrix<f64> {
        &self.skew
    }

    pub fn offset_direction(&self) -> &DVector<f64> {
        &self.offset_direction
    }

    pub fn rotation(&self) -> DMatrix<f64> {
        (&self.skew * self.t).exp()
    }

    pub fn offset(&self) -> DVector<f64> {
        &self.offset_direction * self.t
    }

    /// The `(Q, μ₀)` pair applied by `mode`.
    pub fn parts(&self, mode: TransformMode) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.p();
        match mode {
            TransformMode::Mean => (DMatrix::identity(p, p), self.offset()),
            TransformMode::Rotation => (self.rotation(), DVector::zeros(p)),
            TransformMode::Both => (self.rotation(), self.offset()),
        }
    }

    pub fn apply(&self, data: &BatchDataset, mode: TransformMode) -> Result<BatchDataset> {
        if data.p() != self.p() {
            return Err(Error::dims("rigid transform", self.p(), data.p()));
        }
        let (q, mu0) = self.parts(mode);
        Ok(apply_rigid(data, &q, &mu0))
    }

    /// The matching transformation of parameters:
    /// `(Qᵀμ + μ₀, QᵀΣQ, τ)`.
    pub fn apply_point(&self, theta: &ParameterPoint, mode: TransformMode) -> Result<ParameterPoint> {
        if theta.p() != self.p() {
            return Err(Error::dims("rigid transform", self.p(), theta.p()));
        }
        let (q, mu0) = self.parts(mode);
        transform_point(theta, &q, &mu0)
    }
}

/// `x_i ↦ Qᵀx_i + μ₀` for every row.
pub fn apply_rigid(data: &BatchDataset, q: &DMatrix<f64>, mu0: &DVector<f64>) -> BatchDataset {
    let mut out = data.samples() * q;
    for mut row in out.row_iter_mut() {
        row += mu0.transpose();
    }
    BatchDataset::new(out, data.label()).expect("rigid maps keep data finite")
}

/// `(Qᵀμ + μ₀, QᵀΣQ, τ)`.
pub fn transform_point(theta: &ParameterPoint, q: &DMatrix<f64>, mu0: &DVector<f64>) -> Result<ParameterPoint> {
    let mu = q.transpose() * theta.mu() + mu0;
    let sigma = crate::linalg::sym(&(q.transpose() * theta.sigma() * q));
    ParameterPoint::new(mu, sigma, theta.tau().clone())
}

pub fn rigid_transform(data: &BatchDataset, xf: &RigidTransform, mode: TransformMode) -> Result<BatchDataset> {
    xf.apply(data, mode)
}

/// A labeled multi-class problem: every class has its own location and
/// scatter, every batch its own textures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProblemConfig {
    pub p: usize,
    pub n: usize,
    pub nu: f64,
    pub classes: usize,
    pub batches_per_class: usize,
    pub seed: u64,
    /// Standard deviation of the class locations.
    pub mean_scale: f64,
    /// Ratio between the overall scales of consecutive classes.
    pub scale_ratio: f64,
}

impl Default for ClassProblemConfig {
    fn default() -> Self {
        Self {
            p: 4,
            n: 45,
            nu: 1.0,
            classes: 3,
            batches_per_class: 100,
            seed: 0,
            mean_scale: 1.0,
            scale_ratio: 3.0,
        }
    }
}

/// Per-class parameters of [`simulate_classes`]: location, scatter.
pub fn class_parameters(cfg: &ClassProblemConfig) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
    if cfg.classes < 1 || cfg.batches_per_class < 1 {
        return Err(Error::InvalidConfig("classes and batches per class must be >= 1".into()));
    }
    SyntheticConfig {
        p: cfg.p,
        n: cfg.n,
        nu: cfg.nu,
        seed: cfg.seed,
    }
    .validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut out = Vec::with_capacity(cfg.classes);
    for c in 0..cfg.classes {
        let mu = standard_normal_vector(&mut rng, cfg.p) * cfg.mean_scale;
        // Mildly anisotropic shape with unit determinant, then the class scale.
        let u = haar_orthogonal(&mut rng, cfg.p);
        let logs = standard_normal_vector(&mut rng, cfg.p) * 0.2;
        let logs = logs.add_scalar(-logs.mean());
        let shape = &u * DMatrix::from_diagonal(&logs.map(f64::exp)) * u.transpose();
        let sigma = crate::linalg::sym(&(shape * cfg.scale_ratio.powi(c as i32)));
        out.push((mu, sigma));
    }
    Ok(out)
}

/// Batches ordered class by class; batch `b` of class `c` uses seed
/// `seed + 1 + c·batches_per_class + b`.
pub fn simulate_classes(cfg: &ClassProblemConfig) -> Result<Vec<BatchDataset>> {
    let params = class_parameters(cfg)?;
    let mut out = Vec::with_capacity(cfg.classes * cfg.batches_per_class);
    for (c, (mu, sigma)) in params.iter().enumerate() {
        for b in 0..cfg.batches_per_class {
            let seed = cfg
                .seed
                .wrapping_add(1 + (c * cfg.batches_per_class + b) as u64);
            let mut rng = rng_from_seed(seed);
            let tau = sample_textures(&mut rng, cfg.n, cfg.nu)?;
            let theta = ParameterPoint::new(mu.clone(), sigma.clone(), tau)?;
            out.push(sample_batch_with(&theta, &mut rng)?.with_label(Some(c)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameters_have_unit_product_and_are_deterministic() {
        for seed in 0..20 {
            let cfg = SyntheticConfig { p: 4, n: 30, nu: 0.1, seed };
            let a = sample_parameters(&cfg).unwrap();
            let b = sample_parameters(&cfg).unwrap();
            assert_eq!(a, b);
            assert!(a.tau().iter().map(|t| t.ln()).sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn haar_is_orthogonal() {
        let mut rng = rng_from_seed(3);
        let q = haar_orthogonal(&mut rng, 5);
        assert!((q.transpose() * &q - DMatrix::<f64>::identity(5, 5)).abs().max() < 1e-12);
    }

    #[test]
    fn transform_at_zero_is_identity() {
        let theta = ParameterPoint::identity(3, 4);
        let data = sample_batch(&theta, 1).unwrap();
        let xf = RigidTransform::random(&mut rng_from_seed(2), 3, 1.0, 1.0).at(0.0).unwrap();
        for mode in [TransformMode::Mean, TransformMode::Rotation, TransformMode::Both] {
            assert_eq!(xf.apply(&data, mode).unwrap(), data);
        }
    }

    #[test]
    fn rejects_non_skew_generator() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(RigidTransform::new(bad, DVector::zeros(2), 0.5).is_err());
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(RigidTransform::new(skew, DVector::zeros(2), 1.5).is_err());
    }

    #[test]
    fn class_problem_layout() {
        let cfg = ClassProblemConfig {
            batches_per_class: 3,
            ..Default::default()
        };
        let batches = simulate_classes(&cfg).unwrap();
        assert_eq!(batches.len(), 9);
        assert_eq!(batches[4].label(), Some(1));
        assert_eq!(batches, simulate_classes(&cfg).unwrap());
    }
}
