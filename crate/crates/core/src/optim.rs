//! Riemannian gradient descent with Armijo backtracking, under either the
//! Fisher metric or the product-metric baseline.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{self, AmbientVector, ParameterPoint, TangentVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    pub grad_norm_tolerance: f64,
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub initial_step: f64,
    /// Halvings tried per iteration before the line search is declared stalled.
    pub max_backtracks: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            grad_norm_tolerance: 1e-6,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            max_backtracks: 60,
        }
    }
}

impl OptimizerConfig {
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.grad_norm_tolerance = tol;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.grad_norm_tolerance > 0.0) || !self.grad_norm_tolerance.is_finite() {
            return bad("grad_norm_tolerance must be positive");
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return bad("armijo_c1 must lie in (0, 1)");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0) || !self.initial_step.is_finite() {
            return bad("initial_step must be positive");
        }
        Ok(())
    }
}

/// Metric used to turn Euclidean gradients into search directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Fisher,
    /// Euclidean on `μ`, affine-invariant on `Σ`, `(ξ/τ)ᵀ(η/τ)` on `τ`.
    Product,
}

impl Metric {
    pub fn rgrad(&self, theta: &ParameterPoint, g: &AmbientVector) -> Result<TangentVector> {
        match self {
            Metric::Fisher => manifold::egrad_to_rgrad(theta, g),
            Metric::Product => {
                // The unit-product normal is τ under this metric as well, so
                // the Fisher projection is also the orthogonal one here.
                let sigma = theta.sigma();
                let raw = AmbientVector::new(
                    g.d_mu.clone(),
                    sigma * linalg::sym(&g.d_sigma) * sigma,
                    g.d_tau.zip_map(theta.tau(), |gt, t| t * (t * gt)),
                )?;
                manifold::project(theta, &raw)
            }
        }
    }

    pub fn inner(&self, theta: &ParameterPoint, xi: &AmbientVector, eta: &AmbientVector) -> Result<f64> {
        match self {
            Metric::Fisher => manifold::fim_inner(theta, xi, eta),
            Metric::Product => {
                let s_inv = theta.sigma_inv();
                let mu = xi.d_mu.dot(&eta.d_mu);
                let sigma = linalg::trace_of_product(&(s_inv * &xi.d_sigma), &(s_inv * &eta.d_sigma));
                let tau: f64 = xi
                    .d_tau
                    .iter()
                    .zip(eta.d_tau.iter())
                    .zip(theta.tau().iter())
                    .map(|((a, b), t)| (a / t) * (b / t))
                    .sum();
                Ok(mu + sigma + tau)
            }
        }
    }

    pub fn norm(&self, theta: &ParameterPoint, xi: &AmbientVector) -> Result<f64> {
        Ok(self.inner(theta, xi, xi)?.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub metric: Metric,
    pub iterations: usize,
    /// Entry `k` describes iterate `k`; the traces hold `iterations + 1`
    /// entries and the last step entry is 0.
    pub cost_trace: Vec<f64>,
    pub grad_norm_trace: Vec<f64>,
    pub step_trace: Vec<f64>,
    /// Seconds.
    pub wall_time: f64,
    pub converged: bool,
}

impl OptimizerReport {
    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().expect("traces are never empty")
    }

    pub fn final_grad_norm(&self) -> f64 {
        *self.grad_norm_trace.last().expect("traces are never empty")
    }

    /// First iteration whose gradient norm is at most `tol`.
    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.grad_norm_trace.iter().position(|g| *g <= tol)
    }

    /// CSV with columns `iteration,cost,grad_norm,step`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,cost,grad_norm,step\n");
        for k in 0..self.cost_trace.len() {
            out.push_str(&format!(
                "{k},{:.17e},{:.17e},{:.17e}\n",
                self.cost_trace[k], self.grad_norm_trace[k], self.step_trace[k]
            ));
        }
        out
    }
}

/// Riemannian gradient descent under the Fisher metric.
pub fn rgd_minimize<C, G>(
    cost: C,
    egrad: G,
    theta0: ParameterPoint,
    config: &OptimizerConfig,
) -> Result<(ParameterPoint, OptimizerReport)>
where
    C: Fn(&ParameterPoint) -> Result<f64>,
    G: Fn(&ParameterPoint) -> Result<AmbientVector>,
{
    minimize(Metric::Fisher, cost, egrad, theta0, config)
}

/// Steepest descent under the product metric, with the same retraction and
/// line search. Only meant as a reference point for convergence speed.
pub fn product_baseline_minimize<C, G>(
    cost: C,
    egrad: G,
    theta0: ParameterPoint,
    config: &OptimizerConfig,
) -> Result<(ParameterPoint, OptimizerReport)>
where
    C: Fn(&ParameterPoint) -> Result<f64>,
    G: Fn(&ParameterPoint) -> Result<AmbientVector>,
{
    minimize(Metric::Product, cost, egrad, theta0, config)
}

pub fn minimize<C, G>(
    metric: Metric,
    cost: C,
    egrad: G,
    theta0: ParameterPoint,
    config: &OptimizerConfig,
) -> Result<(ParameterPoint, OptimizerReport)>
where
    C: Fn(&ParameterPoint) -> Result<f64>,
    G: Fn(&ParameterPoint) -> Result<AmbientVector>,
{
    minimize_until(metric, cost, egrad, theta0, config, |_| false)
}

/// [`minimize`] with an extra exit: the run ends, unconverged, at the first
/// iterate for which `stop` returns true. The gradient norm recorded for that
/// iterate is NaN if the gradient is not finite there.
pub fn minimize_until<C, G, S>(
    metric: Metric,
    cost: C,
    egrad: G,
    theta0: ParameterPoint,
    config: &OptimizerConfig,
    stop: S,
) -> Result<(ParameterPoint, OptimizerReport)>
where
    C: Fn(&ParameterPoint) -> Result<f64>,
    G: Fn(&ParameterPoint) -> Result<AmbientVector>,
    S: Fn(&ParameterPoint) -> bool,
{
    config.validate()?;
    let start = Instant::now();
    let mut theta = theta0;
    let mut f = cost(&theta)?;
    if !f.is_finite() {
        return Err(Error::DegenerateData(format!("initial cost is not finite ({f})")));
    }
    let mut report = OptimizerReport {
        metric,
        iterations: 0,
        cost_trace: Vec::new(),
        grad_norm_trace: Vec::new(),
        step_trace: Vec::new(),
        wall_time: 0.0,
        converged: false,
    };

    let mut g = egrad(&theta)?;
    loop {
        if stop(&theta) {
            let gnorm = if g.is_finite() { metric.rgrad(&theta, &g).and_then(|r| metric.norm(&theta, &r))? } else { f64::NAN };
            report.cost_trace.push(f);
            report.grad_norm_trace.push(gnorm);
            report.step_trace.push(0.0);
            break;
        }
        if !g.is_finite() {
            return Err(Error::DegenerateData("gradient is not finite".into()));
        }
        let rgrad = metric.rgrad(&theta, &g)?;
        let gnorm = metric.norm(&theta, &rgrad)?;
        report.cost_trace.push(f);
        report.grad_norm_trace.push(gnorm);

        if gnorm <= config.grad_norm_tolerance {
            report.converged = true;
            report.step_trace.push(0.0);
            break;
        }
        if report.iterations == config.max_iterations {
            report.step_trace.push(0.0);
            break;
        }

        let dir = rgrad.scale(-1.0);
        let bound = manifold::feasible_step_bound(&theta, &dir)?;
        let mut t = config.initial_step.min(0.5 * bound);
        let decrease = config.armijo_c1 * gnorm * gnorm;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            match manifold::retract(&theta, &dir, t) {
                Ok(candidate) => {
                    let fc = cost(&candidate)?;
                    if fc.is_finite() && fc <= f - t * decrease {
                        // Points where the gradient overflows are treated
                        // like infeasible ones.
                        let gc = egrad(&candidate)?;
                        if gc.is_finite() {
                            accepted = Some((candidate, fc, gc));
                            break;
                        }
                    }
                }
                Err(Error::StepTooLarge { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= config.backtrack_factor;
        }

        match accepted {
            Some((next, fc, gc)) => {
                theta = next;
                f = fc;
                g = gc;
                report.step_trace.push(t);
                report.iterations += 1;
            }
            None => {
                report.step_trace.push(0.0);
                report.wall_time = start.elapsed().as_secs_f64();
                return Err(Error::Stalled {
                    iteration: report.iterations,
                    grad_norm: gnorm,
                    best: Box::new(theta),
                    report: Box::new(report),
                });
            }
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((theta, report))
}

/// Like [`minimize`], but a stalled line search is reported as a
/// non-converged run ending at the best iterate instead of an error.
pub fn minimize_lenient<C, G>(
    metric: Metric,
    cost: C,
    egrad: G,
    theta0: ParameterPoint,
    config: &OptimizerConfig,
) -> Result<(ParameterPoint, OptimizerReport)>
where
    C: Fn(&ParameterPoint) -> Result<f64>,
    G: Fn(&ParameterPoint) -> Result<AmbientVector>,
{
    match minimize(metric, cost, egrad, theta0, config) {
        Err(Error::Stalled { best, report, .. }) => Ok((*best, *report)),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let mut c = OptimizerConfig::default();
        c.armijo_c1 = 1.0;
        assert!(c.validate().is_err());
        let mut c = OptimizerConfig::default();
        c.backtrack_factor = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn product_metric_rgrad_represents_the_differential() {
        let theta = ParameterPoint::normalized(
            DVector::from_vec(vec![0.3, -0.2]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            DVector::from_vec(vec![0.5, 2.0, 1.5]),
        )
        .unwrap();
        let g = AmbientVector::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, -0.1, 0.3, 0.2]),
            DVector::from_vec(vec![0.1, -0.4, 0.7]),
        )
        .unwrap();
        let xi = manifold::project(
            &theta,
            &AmbientVector::new(
                DVector::from_vec(vec![-0.4, 0.9]),
                DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.1, -0.3]),
                DVector::from_vec(vec![0.3, 0.2, -0.6]),
            )
            .unwrap(),
        )
        .unwrap();
        let rg = Metric::Product.rgrad(&theta, &g).unwrap();
        let lhs = Metric::Product.inner(&theta, &rg, &xi).unwrap();
        let sym_g = AmbientVector::new(g.d_mu.clone(), linalg::sym(&g.d_sigma), g.d_tau.clone()).unwrap();
        let rhs = sym_g.euclidean_dot(&xi);
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0));
    }
}
