//! Experiment harnesses: optimizer convergence traces, estimator MSE and
//! classifier robustness to rigid transforms.
//!
//! Every table starts with a `# config {json}` line holding the full
//! configuration, and nothing in the output depends on timing or thread
//! count, so a rerun with the same configuration is byte-identical.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{self, ClassProblemConfig, RigidTransform, SyntheticConfig, TransformMode};
use crate::divergence;
use crate::error::{Error, Result};
use crate::estimators::{self, TylerConfig};
use crate::manifold::ParameterPoint;
use crate::ml::{self, ClassifierSpec};
use crate::model::{self, BatchDataset, RegularizationSpec};
use crate::optim::{self, Metric, OptimizerConfig, OptimizerReport};

/// Mixes `(seed, stream, index)` into an independent seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn config_line<T: Serialize>(config: &T) -> Result<String> {
    Ok(format!("# config {}\n", serde_json::to_string(config)?))
}

/// Median, with the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceTarget {
    /// Regularized NLL of one simulated batch.
    Nll,
    /// Symmetrized-KL variance of simulated parameter points.
    Barycenter,
}

impl std::str::FromStr for ConvergenceTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nll" => Ok(Self::Nll),
            "barycenter" => Ok(Self::Barycenter),
            other => Err(Error::InvalidConfig(format!(
                "unknown convergence target '{other}' (expected nll or barycenter)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub target: ConvergenceTarget,
    pub p: usize,
    pub n: usize,
    pub nu: f64,
    /// Regularization weights (NLL target).
    pub betas: Vec<f64>,
    pub kappa: f64,
    /// Numbers of points (barycenter target).
    pub points: Vec<usize>,
    pub metrics: Vec<Metric>,
    pub seeds: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            target: ConvergenceTarget::Nll,
            p: 10,
            n: 150,
            nu: 1.0,
            betas: vec![0.0, 1e-5, 1e-3],
            kappa: 1.0,
            points: vec![2, 10],
            metrics: vec![Metric::Fisher],
            seeds: 1,
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl ConvergenceConfig {
    fn settings(&self) -> Result<Vec<f64>> {
        let settings: Vec<f64> = match self.target {
            ConvergenceTarget::Nll => self.betas.clone(),
            ConvergenceTarget::Barycenter => self.points.iter().map(|&m| m as f64).collect(),
        };
        if settings.is_empty() || self.metrics.is_empty() || self.seeds == 0 {
            return Err(Error::InvalidConfig(
                "convergence bench needs at least one setting, metric and seed".into(),
            ));
        }
        Ok(settings)
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub metric: Metric,
    /// `β` for the NLL target, `M` for the barycenter target.
    pub setting: f64,
    pub seed: u64,
    pub report: OptimizerReport,
    /// The line search gave up before the tolerance was reached.
    pub stalled: bool,
}

impl ConvergenceRun {
    /// Iterations to reach `tol`, counting runs that never do as `cap`.
    pub fn censored_iterations(&self, tol: f64, cap: usize) -> usize {
        self.report.iterations_to(tol).map_or(cap, |k| k.min(cap))
    }
}

/// Simulated parameters, batch and start for the NLL target.
pub fn nll_problem(p: usize, n: usize, nu: f64, seed: u64) -> Result<(ParameterPoint, BatchDataset)> {
    let theta = datagen::sample_parameters(&SyntheticConfig { p, n, nu, seed })?;
    let data = datagen::sample_batch(&theta, derive_seed(seed, 1, 0))?;
    Ok((theta, data))
}

/// `m` simulated parameter points for the barycenter target.
pub fn barycenter_problem(p: usize, n: usize, nu: f64, m: usize, seed: u64) -> Result<Vec<ParameterPoint>> {
    (0..m as u64)
        .map(|i| {
            datagen::sample_parameters(&SyntheticConfig {
                p,
                n,
                nu,
                seed: derive_seed(seed, 2, i),
            })
        })
        .collect()
}

fn run_once(cfg: &ConvergenceConfig, metric: Metric, setting: f64, seed: u64) -> Result<ConvergenceRun> {
    let outcome = match cfg.target {
        ConvergenceTarget::Nll => {
            let (_, data) = nll_problem(cfg.p, cfg.n, cfg.nu, seed)?;
            let spec = RegularizationSpec::new(cfg.kappa, setting)?;
            optim::minimize(
                metric,
                |t| model::regularized_nll(t, &data, &spec),
                |t| model::regularized_nll_egrad(t, &data, &spec),
                estimators::initial_point(&data)?,
                &cfg.optimizer,
            )
        }
        ConvergenceTarget::Barycenter => {
            let points = barycenter_problem(cfg.p, cfg.n, cfg.nu, setting as usize, seed)?;
            divergence::barycenter_with(metric, &points, &cfg.optimizer)
        }
    };
    let (report, stalled) = match outcome {
        Ok((_, report)) => (report, false),
        Err(Error::Stalled { report, .. }) => (*report, true),
        Err(e) => return Err(e),
    };
    Ok(ConvergenceRun {
        metric,
        setting,
        seed,
        report,
        stalled,
    })
}

/// One run per (setting, seed, metric), in that nesting order. Seeds are
/// `seed, seed + 1, …`.
pub fn convergence(cfg: &ConvergenceConfig) -> Result<Vec<ConvergenceRun>> {
    cfg.optimizer.validate()?;
    let settings = cfg.settings()?;
    let mut jobs = Vec::new();
    for &setting in &settings {
        for k in 0..cfg.seeds as u64 {
            for &metric in &cfg.metrics {
                jobs.push((metric, setting, cfg.seed.wrapping_add(k)));
            }
        }
    }
    jobs.par_iter()
        .map(|&(metric, setting, seed)| run_once(cfg, metric, setting, seed))
        .collect()
}

fn metric_name(metric: Metric) -> &'static str {
    match metric {
        Metric::Fisher => "fim",
        Metric::Product => "product",
    }
}

/// Per-iteration traces: `metric,setting,seed,iteration,cost,grad_norm,step`.
pub fn convergence_csv(cfg: &ConvergenceConfig, runs: &[ConvergenceRun]) -> Result<String> {
    let mut out = config_line(cfg)?;
    out.push_str("metric,setting,seed,iteration,cost,grad_norm,step\n");
    for run in runs {
        let r = &run.report;
        for k in 0..r.cost_trace.len() {
            out.push_str(&format!(
                "{},{},{},{k},{:.17e},{:.17e},{:.17e}\n",
                metric_name(run.metric),
                run.setting,
                run.seed,
                r.cost_trace[k],
                r.grad_norm_trace[k],
                r.step_trace[k]
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSummary {
    pub metric: Metric,
    pub setting: f64,
    /// Median iterations to the tolerance, censored at the iteration cap.
    pub median_iterations: f64,
    pub reached: usize,
    pub runs: usize,
}

pub fn convergence_summary(cfg: &ConvergenceConfig, runs: &[ConvergenceRun]) -> Result<Vec<ConvergenceSummary>> {
    let tol = cfg.optimizer.grad_norm_tolerance;
    let cap = cfg.optimizer.max_iterations;
    let mut out = Vec::new();
    for setting in cfg.settings()? {
        for &metric in &cfg.metrics {
            let group: Vec<&ConvergenceRun> = runs
                .iter()
                .filter(|r| r.metric == metric && r.setting == setting)
                .collect();
            let iterations: Vec<f64> = group.iter().map(|r| r.censored_iterations(tol, cap) as f64).collect();
            out.push(ConvergenceSummary {
                metric,
                setting,
                median_iterations: median(&iterations).unwrap_or(f64::NAN),
                reached: group.iter().filter(|r| r.report.iterations_to(tol).is_some()).count(),
                runs: group.len(),
            });
        }
    }
    Ok(out)
}

pub fn convergence_summary_csv(cfg: &ConvergenceConfig, summary: &[ConvergenceSummary]) -> Result<String> {
    let mut out = config_line(cfg)?;
    out.push_str("metric,setting,median_iterations,reached,runs\n");
    for s in summary {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            metric_name(s.metric),
            s.setting,
            s.median_iterations,
            s.reached,
            s.runs
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Sample mean and sample covariance.
    ScmMean,
    TylerJoint,
    /// Tyler's scatter at the true location.
    TylerKnownLocation,
    /// [`estimators::ncmsg_mle`].
    NcmsgMle,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::ScmMean,
        Estimator::TylerJoint,
        Estimator::TylerKnownLocation,
        Estimator::NcmsgMle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::ScmMean => "scm-mean",
            Estimator::TylerJoint => "tyler-joint",
            Estimator::TylerKnownLocation => "tyler-known-location",
            Estimator::NcmsgMle => "ncmsg-mle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseConfig {
    pub p: usize,
    pub nu: f64,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub tyler: TylerConfig,
}

impl Default for MseConfig {
    fn default() -> Self {
        Self {
            p: 10,
            nu: 0.1,
            n_grid: vec![100, 1000],
            trials: 200,
            seed: 0,
            optimizer: OptimizerConfig::default().with_max_iterations(2000),
            tyler: TylerConfig::default().excluding_coincident(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub n: usize,
    pub estimator: Estimator,
    pub location_mse: f64,
    pub scatter_mse: f64,
    /// Trials that entered the averages.
    pub trials: usize,
    /// Trials where the estimator raised an error; excluded from the averages.
    pub failures: usize,
    /// Fixed-point runs stopped at the iteration cap; their last iterate is used.
    pub not_converged: usize,
}

enum Estimate {
    Ok(DVector<f64>, DMatrix<f64>, bool),
    Failed,
}

fn estimate(which: Estimator, data: &BatchDataset, truth: &ParameterPoint, cfg: &MseConfig) -> Estimate {
    let tyler = |r: Result<(DVector<f64>, DMatrix<f64>)>| match r {
        Ok((mu, sigma)) => Estimate::Ok(mu, sigma, false),
        Err(Error::NotConverged { mu, sigma, .. }) => Estimate::Ok(mu, sigma, true),
        Err(_) => Estimate::Failed,
    };
    match which {
        Estimator::ScmMean => {
            let g = estimators::gaussian_estimates(data);
            Estimate::Ok(g.mean, g.scm, false)
        }
        Estimator::TylerJoint => tyler(estimators::tyler_joint(data, &cfg.tyler)),
        Estimator::TylerKnownLocation => tyler(
            estimators::tyler_fixed_location(data, truth.mu(), &cfg.tyler).map(|s| (truth.mu().clone(), s)),
        ),
        Estimator::NcmsgMle => match estimators::ncmsg_mle(data, &cfg.optimizer) {
            Ok(fit) => Estimate::Ok(fit.mu, fit.sigma, false),
            Err(_) => Estimate::Failed,
        },
    }
}

/// Trial `k` at sample size `n` draws its parameters from seed
/// `derive_seed(seed, n, k)`, so grids can be extended without changing
/// existing rows.
pub fn mse(cfg: &MseConfig) -> Result<Vec<MseRow>> {
    if cfg.n_grid.is_empty() || cfg.trials == 0 {
        return Err(Error::InvalidConfig("mse bench needs a sample size and a trial".into()));
    }
    cfg.optimizer.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.n_grid {
        let per_trial: Vec<(ParameterPoint, Vec<Estimate>)> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|k| {
                let seed = derive_seed(cfg.seed, n as u64, k);
                let (truth, data) = nll_problem(cfg.p, n, cfg.nu, seed)?;
                let estimates = Estimator::ALL.iter().map(|&e| estimate(e, &data, &truth, cfg)).collect();
                Ok((truth, estimates))
            })
            .collect::<Result<_>>()?;
        for (j, &estimator) in Estimator::ALL.iter().enumerate() {
            let (mut loc, mut scat) = (Vec::new(), Vec::new());
            let (mut failures, mut not_converged) = (0, 0);
            for (truth, trial) in &per_trial {
                match &trial[j] {
                    Estimate::Ok(mu, sigma, capped) => {
                        loc.push((mu - truth.mu()).norm_squared());
                        scat.push(estimators::squared_error(sigma, truth.sigma()));
                        not_converged += usize::from(*capped);
                    }
                    Estimate::Failed => failures += 1,
                }
            }
            let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
            rows.push(MseRow {
                n,
                estimator,
                location_mse: mean(&loc),
                scatter_mse: mean(&scat),
                trials: loc.len(),
                failures,
                not_converged,
            });
        }
    }
    Ok(rows)
}

pub fn mse_csv(cfg: &MseConfig, rows: &[MseRow]) -> Result<String> {
    let mut out = config_line(cfg)?;
    out.push_str("n,estimator,location_mse,scatter_mse,trials,failures,not_converged\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6e},{:.6e},{},{},{}\n",
            r.n,
            r.estimator.name(),
            r.location_mse,
            r.scatter_mse,
            r.trials,
            r.failures,
            r.not_converged
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessConfig {
    /// `batches_per_class` is the number of training batches per class.
    pub problem: ClassProblemConfig,
    pub test_batches_per_class: usize,
    pub mode: TransformMode,
    pub t_grid: Vec<f64>,
    pub rotation_scale: f64,
    pub offset_scale: f64,
    pub regularization: RegularizationSpec,
    pub optimizer: OptimizerConfig,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            problem: ClassProblemConfig::default(),
            test_batches_per_class: 100,
            mode: TransformMode::Rotation,
            t_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            rotation_scale: 1.0,
            offset_scale: 1.0,
            regularization: RegularizationSpec::new(1.0, 0.1).expect("valid"),
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Train and test batches of one synthetic problem: both share the class
/// parameters, and each class's first `batches_per_class` batches train.
pub fn class_split(problem: &ClassProblemConfig, test_per_class: usize) -> Result<(Vec<BatchDataset>, Vec<BatchDataset>)> {
    let per_class = problem.batches_per_class + test_per_class;
    let all = datagen::simulate_classes(&ClassProblemConfig {
        batches_per_class: per_class,
        ..*problem
    })?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, b) in all.into_iter().enumerate() {
        if i % per_class < problem.batches_per_class {
            train.push(b);
        } else {
            test.push(b);
        }
    }
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub classifier: String,
    pub t: f64,
    pub f1_weighted: f64,
}

/// F1-weighted of every classifier, trained untransformed, on test sets
/// transformed by one random rigid transform at each `t`.
pub fn robustness(cfg: &RobustnessConfig) -> Result<Vec<RobustnessRow>> {
    if cfg.t_grid.is_empty() || cfg.test_batches_per_class == 0 {
        return Err(Error::InvalidConfig("robustness bench needs a t value and test batches".into()));
    }
    cfg.regularization.validate()?;
    let (train, test) = class_split(&cfg.problem, cfg.test_batches_per_class)?;
    let truth = ml::labels(&test)?;
    let mut rng = datagen::rng_from_seed(derive_seed(cfg.problem.seed, 3, 0));
    let xf = RigidTransform::random(&mut rng, cfg.problem.p, cfg.rotation_scale, cfg.offset_scale);
    let test_sets: Vec<Vec<BatchDataset>> = cfg
        .t_grid
        .iter()
        .map(|&t| {
            let at = xf.at(t)?;
            test.iter().map(|b| at.apply(b, cfg.mode)).collect()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for spec in ClassifierSpec::all(cfg.regularization) {
        let model = ml::train(&train, &spec, &cfg.optimizer)?;
        for (&t, batches) in cfg.t_grid.iter().zip(&test_sets) {
            let predicted = model.predict(batches, &cfg.optimizer)?;
            rows.push(RobustnessRow {
                classifier: spec.label(),
                t,
                f1_weighted: ml::f1_weighted(&truth, &predicted)?,
            });
        }
    }
    Ok(rows)
}

pub fn robustness_csv(cfg: &RobustnessConfig, rows: &[RobustnessRow]) -> Result<String> {
    let mut out = config_line(cfg)?;
    out.push_str("classifier,t,f1_weighted\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.6}\n", r.classifier, r.t, r.f1_weighted));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(0, 1, 0);
        assert_ne!(a, derive_seed(0, 1, 1));
        assert_ne!(a, derive_seed(0, 2, 0));
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_eq!(a, derive_seed(0, 1, 0));
    }
}
