//! Nearest-centroid classification of batches through a descriptor and a
//! divergence, and the F1-weighted score.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence;
use crate::error::{Error, Result};
use crate::estimators;
use crate::manifold::ParameterPoint;
use crate::model::{self, BatchDataset, RegularizationSpec};
use crate::optim::{self, Metric, OptimizerConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Descriptor {
    /// The `n × p` batch itself.
    RawBatch,
    GaussMean,
    /// `(1/n) Σ x_i x_iᵀ`.
    GaussZeroMeanMoment,
    /// Sample mean and SCM.
    GaussMlePair,
    NcmsgTheta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Divergence {
    Euclidean,
    GaussSymKl,
    NcmsgSymKl,
}

macro_rules! kebab_names {
    ($ty:ty, $what:literal, $($variant:path => $name:literal),+ $(,)?) => {
        impl $ty {
            pub fn name(&self) -> &'static str {
                match self {
                    $($variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::InvalidConfig(format!(
                        concat!("unknown ", $what, " '{}' (expected one of: {})"),
                        other,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }
    };
}

kebab_names!(Descriptor, "descriptor",
    Descriptor::RawBatch => "raw-batch",
    Descriptor::GaussMean => "gauss-mean",
    Descriptor::GaussZeroMeanMoment => "gauss-zero-mean-moment",
    Descriptor::GaussMlePair => "gauss-mle-pair",
    Descriptor::NcmsgTheta => "ncmsg-theta",
);

kebab_names!(Divergence, "divergence",
    Divergence::Euclidean => "euclidean",
    Divergence::GaussSymKl => "gauss-sym-kl",
    Divergence::NcmsgSymKl => "ncmsg-sym-kl",
);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub descriptor: Descriptor,
    pub divergence: Divergence,
    /// Only used by [`Descriptor::NcmsgTheta`].
    #[serde(default)]
    pub regularization: RegularizationSpec,
}

impl ClassifierSpec {
    pub fn new(descriptor: Descriptor, divergence: Divergence, regularization: RegularizationSpec) -> Result<Self> {
        let spec = Self {
            descriptor,
            divergence,
            regularization,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        use Descriptor::*;
        let ok = match self.divergence {
            Divergence::Euclidean => matches!(self.descriptor, RawBatch | GaussMean | GaussZeroMeanMoment),
            Divergence::GaussSymKl => matches!(self.descriptor, GaussZeroMeanMoment | GaussMlePair),
            Divergence::NcmsgSymKl => self.descriptor == NcmsgTheta,
        };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "divergence {} cannot compare {} descriptors",
                self.divergence, self.descriptor
            )));
        }
        self.regularization.validate()
    }

    /// The six classifiers: three Euclidean, two Gaussian sym-KL and the
    /// NC-MSG one.
    pub fn all(regularization: RegularizationSpec) -> Vec<ClassifierSpec> {
        use Descriptor::*;
        use Divergence::*;
        [
            (RawBatch, Euclidean),
            (GaussMean, Euclidean),
            (GaussZeroMeanMoment, Euclidean),
            (GaussZeroMeanMoment, GaussSymKl),
            (GaussMlePair, GaussSymKl),
            (NcmsgTheta, NcmsgSymKl),
        ]
        .into_iter()
        .map(|(descriptor, divergence)| ClassifierSpec {
            descriptor,
            divergence,
            regularization,
        })
        .collect()
    }

    /// `descriptor/divergence`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.descriptor, self.divergence)
    }
}

/// A computed descriptor. Gaussians are stored as NC-MSG points with a
/// single unit texture, which turns the NC-MSG divergence into the Gaussian
/// one.
#[derive(Debug, Clone, PartialEq)]
pub enum DescriptorValue {
    Matrix(DMatrix<f64>),
    Vector(DVector<f64>),
    Gaussian(ParameterPoint),
    Theta(ParameterPoint),
}

impl DescriptorValue {
    fn gaussian(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let point = ParameterPoint::new(mu, sigma, DVector::from_element(1, 1.0)).map_err(|e| match e {
            Error::InvalidPoint(msg) => Error::DegenerateData(format!("Gaussian descriptor: {msg}")),
            other => other,
        })?;
        Ok(DescriptorValue::Gaussian(point))
    }

    /// Row-major flattening: matrices by rows, points as `μ, Σ, τ`.
    pub fn to_flat(&self) -> Vec<f64> {
        let row_major = |m: &DMatrix<f64>| m.transpose().iter().copied().collect::<Vec<_>>();
        match self {
            DescriptorValue::Matrix(m) => row_major(m),
            DescriptorValue::Vector(v) => v.iter().copied().collect(),
            DescriptorValue::Gaussian(t) => t.mu().iter().copied().chain(row_major(t.sigma())).collect(),
            DescriptorValue::Theta(t) => t
                .mu()
                .iter()
                .copied()
                .chain(row_major(t.sigma()))
                .chain(t.tau().iter().copied())
                .collect(),
        }
    }

    fn from_flat(spec: &ClassifierSpec, p: usize, n: usize, flat: &[f64]) -> Result<Self> {
        let expected = flat_len(spec, p, n);
        if flat.len() != expected {
            return Err(Error::dims("centroid", expected, flat.len()));
        }
        let matrix = |rows: usize, data: &[f64]| DMatrix::from_row_slice(rows, data.len() / rows, data);
        let invalid = |e: Error| Error::InvalidData(format!("stored centroid: {e}"));
        Ok(match (spec.descriptor, spec.divergence) {
            (Descriptor::RawBatch, _) => DescriptorValue::Matrix(matrix(n, flat)),
            (Descriptor::GaussMean, _) => DescriptorValue::Vector(DVector::from_column_slice(flat)),
            (Descriptor::GaussZeroMeanMoment, Divergence::Euclidean) => DescriptorValue::Matrix(matrix(p, flat)),
            (Descriptor::GaussZeroMeanMoment | Descriptor::GaussMlePair, _) => {
                DescriptorValue::gaussian(DVector::from_column_slice(&flat[..p]), matrix(p, &flat[p..]))
                    .map_err(invalid)?
            }
            (Descriptor::NcmsgTheta, _) => DescriptorValue::Theta(
                ParameterPoint::new(
                    DVector::from_column_slice(&flat[..p]),
                    matrix(p, &flat[p..p + p * p]),
                    DVector::from_column_slice(&flat[p + p * p..]),
                )
                .map_err(invalid)?,
            ),
        })
    }

    /// Image under `x ↦ Qᵀx` (the offset is carried by the model's centering).
    /// `raw` marks a batch matrix, whose rows are samples.
    fn rotated(&self, q: &DMatrix<f64>, raw: bool) -> Result<Self> {
        let zero = DVector::zeros(q.nrows());
        Ok(match self {
            DescriptorValue::Matrix(m) if raw => DescriptorValue::Matrix(m * q),
            DescriptorValue::Matrix(m) => DescriptorValue::Matrix(q.transpose() * m * q),
            DescriptorValue::Vector(v) => DescriptorValue::Vector(q.transpose() * v),
            DescriptorValue::Gaussian(t) => DescriptorValue::Gaussian(crate::datagen::transform_point(t, q, &zero)?),
            DescriptorValue::Theta(t) => DescriptorValue::Theta(crate::datagen::transform_point(t, q, &zero)?),
        })
    }
}

fn flat_len(spec: &ClassifierSpec, p: usize, n: usize) -> usize {
    match (spec.descriptor, spec.divergence) {
        (Descriptor::RawBatch, _) => n * p,
        (Descriptor::GaussMean, _) => p,
        (Descriptor::GaussZeroMeanMoment, Divergence::Euclidean) => p * p,
        (Descriptor::GaussZeroMeanMoment | Descriptor::GaussMlePair, _) => p + p * p,
        (Descriptor::NcmsgTheta, _) => p + p * p + n,
    }
}

/// Regularized NC-MSG fit that accepts a stalled line search or an
/// exhausted iteration budget, returning the last iterate.
pub fn fit_descriptor_theta(
    data: &BatchDataset,
    regularization: &RegularizationSpec,
    config: &OptimizerConfig,
) -> Result<ParameterPoint> {
    regularization.validate()?;
    let theta0 = estimators::initial_point(data)?;
    let (theta, _) = optim::minimize_lenient(
        Metric::Fisher,
        |t| model::regularized_nll(t, data, regularization),
        |t| model::regularized_nll_egrad(t, data, regularization),
        theta0,
        config,
    )?;
    Ok(theta)
}

/// Descriptor of one (already centered) batch.
pub fn describe(data: &BatchDataset, spec: &ClassifierSpec, config: &OptimizerConfig) -> Result<DescriptorValue> {
    let p = data.p();
    match (spec.descriptor, spec.divergence) {
        (Descriptor::RawBatch, _) => Ok(DescriptorValue::Matrix(data.samples().clone())),
        (Descriptor::GaussMean, _) => Ok(DescriptorValue::Vector(estimators::gaussian_estimates(data).mean)),
        (Descriptor::GaussZeroMeanMoment, Divergence::Euclidean) => {
            Ok(DescriptorValue::Matrix(estimators::gaussian_estimates(data).second_moment))
        }
        (Descriptor::GaussZeroMeanMoment, _) => {
            DescriptorValue::gaussian(DVector::zeros(p), estimators::gaussian_estimates(data).second_moment)
        }
        (Descriptor::GaussMlePair, _) => {
            let g = estimators::gaussian_estimates(data);
            DescriptorValue::gaussian(g.mean, g.scm)
        }
        (Descriptor::NcmsgTheta, _) => Ok(DescriptorValue::Theta(fit_descriptor_theta(
            data,
            &spec.regularization,
            config,
        )?)),
    }
}

/// Frobenius distance for matrices and vectors, symmetrized KL otherwise.
pub fn divergence(a: &DescriptorValue, b: &DescriptorValue) -> Result<f64> {
    match (a, b) {
        (DescriptorValue::Matrix(x), DescriptorValue::Matrix(y)) => {
            if x.shape() != y.shape() {
                return Err(Error::dims("euclidean divergence", format!("{:?}", x.shape()), format!("{:?}", y.shape())));
            }
            Ok((x - y).norm())
        }
        (DescriptorValue::Vector(x), DescriptorValue::Vector(y)) => {
            if x.len() != y.len() {
                return Err(Error::dims("euclidean divergence", x.len(), y.len()));
            }
            Ok((x - y).norm())
        }
        (DescriptorValue::Gaussian(x), DescriptorValue::Gaussian(y))
        | (DescriptorValue::Theta(x), DescriptorValue::Theta(y)) => divergence::sym_kl(x, y),
        _ => Err(Error::InvalidConfig("descriptors of different kinds cannot be compared".into())),
    }
}

/// Center of mass of same-kind descriptors under their divergence.
pub fn center_of_mass(values: &[DescriptorValue], config: &OptimizerConfig) -> Result<DescriptorValue> {
    let first = values
        .first()
        .ok_or_else(|| Error::EmptyDataset("center of mass of no descriptors".into()))?;
    let mean_of = |items: Vec<&DMatrix<f64>>| -> Result<DMatrix<f64>> {
        let mut sum = DMatrix::zeros(items[0].nrows(), items[0].ncols());
        for m in &items {
            if m.shape() != sum.shape() {
                return Err(Error::dims("center of mass", format!("{:?}", sum.shape()), format!("{:?}", m.shape())));
            }
            sum += *m;
        }
        Ok(sum / items.len() as f64)
    };
    let points = |wrap: fn(&DescriptorValue) -> Option<&ParameterPoint>| -> Result<Vec<ParameterPoint>> {
        values
            .iter()
            .map(|v| {
                wrap(v)
                    .cloned()
                    .ok_or_else(|| Error::InvalidConfig("mixed descriptor kinds".into()))
            })
            .collect()
    };
    let barycenter = |pts: Vec<ParameterPoint>| -> Result<ParameterPoint> {
        match divergence::barycenter(&pts, config) {
            Ok((b, _)) => Ok(b),
            Err(Error::Stalled { best, .. }) => Ok(*best),
            Err(e) => Err(e),
        }
    };
    match first {
        DescriptorValue::Matrix(_) => {
            let items = values
                .iter()
                .map(|v| match v {
                    DescriptorValue::Matrix(m) => Ok(m),
                    _ => Err(Error::InvalidConfig("mixed descriptor kinds".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DescriptorValue::Matrix(mean_of(items)?))
        }
        DescriptorValue::Vector(_) => {
            let items = values
                .iter()
                .map(|v| match v {
                    DescriptorValue::Vector(x) => Ok(x),
                    _ => Err(Error::InvalidConfig("mixed descriptor kinds".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            let mut sum = DVector::zeros(items[0].len());
            for x in &items {
                if x.len() != sum.len() {
                    return Err(Error::dims("center of mass", sum.len(), x.len()));
                }
                sum += *x;
            }
            Ok(DescriptorValue::Vector(sum / items.len() as f64))
        }
        DescriptorValue::Gaussian(_) => Ok(DescriptorValue::Gaussian(barycenter(points(|v| match v {
            DescriptorValue::Gaussian(t) => Some(t),
            _ => None,
        })?)?)),
        DescriptorValue::Theta(_) => Ok(DescriptorValue::Theta(barycenter(points(|v| match v {
            DescriptorValue::Theta(t) => Some(t),
            _ => None,
        })?)?)),
    }
}

/// Index of the smallest value; ties go to the lowest index.
pub fn nearest(divergences: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, d) in divergences.iter().enumerate() {
        if d.is_nan() {
            continue;
        }
        if best.is_none_or(|b| *d < divergences[b]) {
            best = Some(k);
        }
    }
    best
}

/// Mean of all samples of all batches.
pub fn global_mean(batches: &[BatchDataset]) -> Result<DVector<f64>> {
    let first = batches
        .first()
        .ok_or_else(|| Error::EmptyDataset("no batches".into()))?;
    let mut sum = DVector::zeros(first.p());
    let mut count = 0usize;
    for (index, b) in batches.iter().enumerate() {
        if b.p() != first.p() {
            return Err(Error::Batch {
                index,
                source: Box::new(Error::dims("batch dimension", first.p(), b.p())),
            });
        }
        sum += b.samples().row_sum().transpose();
        count += b.n();
    }
    Ok(sum / count as f64)
}

fn centered(data: &BatchDataset, offset: &DVector<f64>) -> Result<BatchDataset> {
    if data.p() != offset.len() {
        return Err(Error::dims("batch dimension", offset.len(), data.p()));
    }
    let mut x = data.samples().clone();
    for mut row in x.row_iter_mut() {
        row -= offset.transpose();
    }
    BatchDataset::new(x, data.label())
}

fn describe_all(
    batches: &[BatchDataset],
    offset: &DVector<f64>,
    spec: &ClassifierSpec,
    config: &OptimizerConfig,
) -> Result<Vec<DescriptorValue>> {
    batches
        .par_iter()
        .enumerate()
        .map(|(index, b)| {
            centered(b, offset)
                .and_then(|c| describe(&c, spec, config))
                .map_err(|e| Error::Batch {
                    index,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Per-class centers of mass of descriptors of globally centered batches.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    pub spec: ClassifierSpec,
    pub p: usize,
    pub n: usize,
    pub centroids: Vec<DescriptorValue>,
    /// Subtracted from every batch before its descriptor is computed.
    pub offset: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    spec: ClassifierSpec,
    p: usize,
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    centroids: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

/// Trains a nearest-centroid model; every batch must carry a label and the
/// labels must cover `0..K` with `K ≥ 2`.
pub fn train(batches: &[BatchDataset], spec: &ClassifierSpec, config: &OptimizerConfig) -> Result<CentroidModel> {
    spec.validate()?;
    config.validate()?;
    let offset = global_mean(batches)?;
    let (p, n) = (batches[0].p(), batches[0].n());
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (index, b) in batches.iter().enumerate() {
        let label = b.label().ok_or_else(|| Error::Batch {
            index,
            source: Box::new(Error::InvalidData("training batch has no label".into())),
        })?;
        if matches!(spec.descriptor, Descriptor::RawBatch | Descriptor::NcmsgTheta) && b.n() != n {
            return Err(Error::Batch {
                index,
                source: Box::new(Error::dims("batch size", n, b.n())),
            });
        }
        by_class.entry(label).or_default().push(index);
    }
    let k = by_class.keys().next_back().map_or(0, |m| m + 1);
    if k < 2 {
        return Err(Error::InvalidData("training needs at least two classes".into()));
    }
    if let Some(missing) = (0..k).find(|c| !by_class.contains_key(c)) {
        return Err(Error::InvalidData(format!("class {missing} has no training batch")));
    }
    let descriptors = describe_all(batches, &offset, spec, config)?;
    let centroids = (0..k)
        .into_par_iter()
        .map(|c| {
            let members: Vec<DescriptorValue> = by_class[&c].iter().map(|&i| descriptors[i].clone()).collect();
            center_of_mass(&members, config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CentroidModel {
        spec: *spec,
        p,
        n,
        centroids,
        offset,
    })
}

impl CentroidModel {
    pub fn classes(&self) -> usize {
        self.centroids.len()
    }

    /// Divergences from each batch to every centroid.
    pub fn divergences(&self, batches: &[BatchDataset], config: &OptimizerConfig) -> Result<Vec<Vec<f64>>> {
        let descriptors = describe_all(batches, &self.offset, &self.spec, config)?;
        descriptors
            .par_iter()
            .enumerate()
            .map(|(index, d)| {
                self.centroids
                    .iter()
                    .map(|c| divergence(d, c))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| Error::Batch {
                        index,
                        source: Box::new(e),
                    })
            })
            .collect()
    }

    pub fn predict(&self, batches: &[BatchDataset], config: &OptimizerConfig) -> Result<Vec<usize>> {
        self.divergences(batches, config)?
            .iter()
            .enumerate()
            .map(|(index, d)| {
                nearest(d).ok_or_else(|| Error::Batch {
                    index,
                    source: Box::new(Error::DegenerateData("every divergence is NaN".into())),
                })
            })
            .collect()
    }

    /// The model matching data mapped by `x ↦ Qᵀx + μ₀`.
    pub fn transformed(&self, q: &DMatrix<f64>, mu0: &DVector<f64>) -> Result<Self> {
        if q.shape() != (self.p, self.p) || mu0.len() != self.p {
            return Err(Error::dims("model transform", self.p, mu0.len()));
        }
        Ok(Self {
            spec: self.spec,
            p: self.p,
            n: self.n,
            centroids: self
                .centroids
                .iter()
                .map(|c| c.rotated(q, self.spec.descriptor == Descriptor::RawBatch))
                .collect::<Result<_>>()?,
            offset: q.transpose() * &self.offset + mu0,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            spec: self.spec,
            p: self.p,
            n: self.n,
            k: self.classes(),
            centroids: self.centroids.iter().map(DescriptorValue::to_flat).collect(),
            offset: self.offset.iter().copied().collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidData(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                file.version
            )));
        }
        file.spec.validate()?;
        if file.p == 0 || file.n == 0 {
            return Err(Error::InvalidData(format!("model declares p = {}, n = {}", file.p, file.n)));
        }
        if file.k < 2 || file.centroids.len() != file.k {
            return Err(Error::InvalidData(format!(
                "model declares K = {} with {} centroids",
                file.k,
                file.centroids.len()
            )));
        }
        if file.offset.len() != file.p {
            return Err(Error::dims("model offset", file.p, file.offset.len()));
        }
        let centroids = file
            .centroids
            .iter()
            .map(|c| DescriptorValue::from_flat(&file.spec, file.p, file.n, c))
            .collect::<Result<_>>()?;
        Ok(Self {
            spec: file.spec,
            p: file.p,
            n: file.n,
            centroids,
            offset: DVector::from_vec(file.offset),
        })
    }
}

/// Support-weighted mean of per-class F1 scores.
pub fn f1_weighted(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::dims("f1_weighted", truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(Error::EmptyDataset("no labels to score".into()));
    }
    // (true positives, predicted count, support)
    let mut counts: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(predicted) {
        counts.entry(t).or_default().2 += 1;
        counts.entry(p).or_default().1 += 1;
        if t == p {
            counts.entry(t).or_default().0 += 1;
        }
    }
    let total = truth.len() as f64;
    Ok(counts
        .values()
        .filter(|c| c.2 > 0)
        .map(|&(tp, predicted, support)| {
            let precision = if predicted > 0 { tp as f64 / predicted as f64 } else { 0.0 };
            let recall = tp as f64 / support as f64;
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            f1 * support as f64 / total
        })
        .sum())
}

/// F1-weighted on `validation` for each `β`, training on `train`. A `β`
/// whose fits fail numerically (very small `β` can drive textures to zero
/// and the divergences to infinity) scores NaN instead of aborting the scan.
pub fn tune_beta(
    train_set: &[BatchDataset],
    validation: &[BatchDataset],
    base: &RegularizationSpec,
    betas: &[f64],
    config: &OptimizerConfig,
) -> Result<Vec<(f64, f64)>> {
    let truth = labels(validation)?;
    betas
        .iter()
        .map(|&beta| {
            let reg = RegularizationSpec { beta, ..*base };
            let spec = ClassifierSpec::new(Descriptor::NcmsgTheta, Divergence::NcmsgSymKl, reg)?;
            let scored = train(train_set, &spec, config)
                .and_then(|model| model.predict(validation, config))
                .and_then(|predicted| f1_weighted(&truth, &predicted));
            match scored {
                Ok(f1) => Ok((beta, f1)),
                Err(e) if e.is_numerical() => Ok((beta, f64::NAN)),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Labels of labeled batches.
pub fn labels(batches: &[BatchDataset]) -> Result<Vec<usize>> {
    batches
        .iter()
        .enumerate()
        .map(|(index, b)| {
            b.label().ok_or_else(|| Error::Batch {
                index,
                source: Box::new(Error::InvalidData("batch has no label".into())),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compatibility() {
        let reg = RegularizationSpec::default();
        assert!(ClassifierSpec::new(Descriptor::NcmsgTheta, Divergence::Euclidean, reg).is_err());
        assert!(ClassifierSpec::new(Descriptor::GaussMean, Divergence::GaussSymKl, reg).is_err());
        assert!(ClassifierSpec::new(Descriptor::RawBatch, Divergence::NcmsgSymKl, reg).is_err());
        for spec in ClassifierSpec::all(reg) {
            assert!(spec.validate().is_ok(), "{}", spec.label());
        }
    }

    #[test]
    fn names_round_trip() {
        for spec in ClassifierSpec::all(RegularizationSpec::default()) {
            assert_eq!(spec.descriptor.name().parse::<Descriptor>().unwrap(), spec.descriptor);
            assert_eq!(spec.divergence.name().parse::<Divergence>().unwrap(), spec.divergence);
        }
        assert!("gauss".parse::<Descriptor>().is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_weighted(&[0, 1, 1, 2], &[0, 1, 1, 2]).unwrap(), 1.0);
        let v = f1_weighted(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert!(f1_weighted(&[0], &[0, 1]).is_err());
        assert!(f1_weighted(&[], &[]).is_err());
    }

    #[test]
    fn nearest_breaks_ties_low() {
        assert_eq!(nearest(&[1.0, 0.5, 0.5]), Some(1));
        assert_eq!(nearest(&[f64::NAN, 2.0]), Some(1));
        assert_eq!(nearest(&[]), None);
    }
}
