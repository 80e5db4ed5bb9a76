//! Reference variance estimators: the explicit delta method, the bootstrap,
//! and repeated sampling from a known data-generating process.
//!
//! Replicate-based estimators are split into a per-replicate function and an
//! order-preserving reducer, so callers may run replicates in any order or
//! in parallel and still get bit-identical results.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IdmError, Result};
use crate::idm::EvalFn;
use crate::linalg::{sample_covariance, CovMatrix};
use crate::model::{Dataset, Family, LikelihoodModel};
use crate::optim::OptimizerConfig;
use crate::rng::{stream_seed, Stream};
use crate::synthdata::DgpSpec;

pub use crate::linalg::psd_project;

/// Eigenvalues below this fraction of the largest are treated as zero when
/// inverting the Fisher information.
pub const PINV_CUTOFF: f64 = 1e-10;
/// Largest tolerated norm of `∇ψ` inside the discarded eigenspace.
pub const CUT_MASS_TOL: f64 = 1e-6;
/// Largest tolerated fraction of failed replicate fits.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Delta,
    Bootstrap,
    Simulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// Start each refit from the full-data estimate.
    #[default]
    Warm,
    /// Start each refit from a fresh uniform(-0.1, 0.1) draw.
    Cold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    #[default]
    IidRows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    #[serde(rename = "B", alias = "replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub resample_mode: ResampleMode,
    #[serde(default)]
    pub start: StartMode,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        BootstrapConfig {
            replicates,
            seed,
            resample_mode: ResampleMode::IidRows,
            start: StartMode::Warm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    #[serde(rename = "R", alias = "replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Covariance from a baseline plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    pub method: BaselineMethod,
    pub covariance: CovMatrix,
    /// Model fits performed (zero for the delta method).
    pub fit_count: usize,
    pub failed: usize,
    pub start: Option<StartMode>,
}

/// `(1/n)·Jᵀ I⁺ J` with `I = -(1/n)∇² log L(θ̂)` and `J` the Jacobian of
/// `ψ` (one column per component). For `gaussian_sse` the Hessian of
/// `-½SSE` is divided by `σ̂²` to recover the likelihood curvature.
///
/// `I` is inverted on the eigenspace of eigenvalues above
/// `PINV_CUTOFF·λ_max`; an error is raised only when some column of `J`
/// has norm above `CUT_MASS_TOL` in the discarded directions.
pub fn delta_method_variance(
    model: &LikelihoodModel,
    data: &Dataset,
    theta_hat: &[f64],
    eval: &dyn EvalFn,
    cap: usize,
) -> Result<BaselineEstimate> {
    if !eval.has_gradient() {
        return Err(IdmError::invalid("delta method needs an evaluation with a gradient"));
    }
    let n = data.len() as f64;
    let d = model.param_count();
    let k = eval.arity();
    let curvature_scale = match model.family() {
        Family::GaussianSse => {
            let s2 = model.sigma2_hat(theta_hat, data)?;
            if !(s2 > 0.0) {
                return Err(IdmError::DegenerateFit("residual variance of the fit is zero".into()));
            }
            s2
        }
        _ => 1.0,
    };
    let hessian = model.hessian_log_likelihood(theta_hat, data, cap)?;
    let fisher = hessian * (-1.0 / (n * curvature_scale));
    let eig = fisher.symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max_eig > 0.0) {
        return Err(IdmError::Singular { min_eigenvalue: min_eig });
    }
    let cutoff = PINV_CUTOFF * max_eig;

    let mut jac = DMatrix::zeros(d, k);
    let mut g = vec![0.0; d];
    for c in 0..k {
        eval.component_grad(c, theta_hat, &mut g)?;
        jac.set_column(c, &DVector::from_column_slice(&g));
    }

    let mut pinv = DMatrix::zeros(d, d);
    let mut cut_mass = vec![0.0; k];
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(idx);
        if lambda > cutoff {
            pinv += (&v * v.transpose()) / lambda;
        } else {
            for (c, mass) in cut_mass.iter_mut().enumerate() {
                let proj = v.dot(&jac.column(c));
                *mass += proj * proj;
            }
        }
    }
    if cut_mass.iter().any(|m| libm::sqrt(*m) > CUT_MASS_TOL) {
        return Err(IdmError::Singular { min_eigenvalue: min_eig });
    }
    let cov = (jac.transpose() * pinv * &jac) / n;
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(BaselineEstimate {
        method: BaselineMethod::Delta,
        covariance: CovMatrix::from_matrix(&cov, true, false),
        fit_count: 0,
        failed: 0,
        start: None,
    })
}

fn start_point(model: &LikelihoodModel, theta_hat: &[f64], start: StartMode, seed: u64) -> Vec<f64> {
    match start {
        StartMode::Warm => theta_hat.to_vec(),
        StartMode::Cold => model.init_params(seed).into_inner(),
    }
}

/// Rows of bootstrap replicate `b`, drawn with replacement.
pub fn bootstrap_indices(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut s = Stream::new(stream_seed(seed, b as u64));
    (0..n).map(|_| s.index(n)).collect()
}

/// `ψ(θ̂⁽ᵇ⁾)` for bootstrap replicate `b`.
pub fn bootstrap_replicate(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    theta_hat: &[f64],
    fit_config: &OptimizerConfig,
    boot: &BootstrapConfig,
    b: usize,
) -> Result<Vec<f64>> {
    let rows = bootstrap_indices(data.len(), boot.seed, b);
    let resampled = data.select(&rows);
    // Cold starts get their own stream, separate from the resampling one.
    let init = start_point(model, theta_hat, boot.start, stream_seed(!boot.seed, b as u64));
    let mut config = fit_config.clone();
    config.seed = stream_seed(fit_config.seed, b as u64);
    let fit = crate::idm::fit_mle(model, &resampled, &init, &config)?;
    eval.values(&fit.theta)
}

/// `ψ(θ̂⁽ʳ⁾)` for a fit on fresh dataset `r` of size `n` from `dgp`.
pub fn simulation_replicate(
    dgp: &DgpSpec,
    n: usize,
    model: &LikelihoodModel,
    eval: &dyn EvalFn,
    fit_config: &OptimizerConfig,
    oracle: &OracleConfig,
    r: usize,
) -> Result<Vec<f64>> {
    let seed = stream_seed(oracle.seed, r as u64);
    let data = dgp.with_n(n).with_seed(seed).generate()?;
    let init = model.init_params(stream_seed(!oracle.seed, r as u64));
    let mut config = fit_config.clone();
    config.seed = stream_seed(fit_config.seed, r as u64);
    let fit = crate::idm::fit_mle(model, &data, &init, &config)?;
    eval.values(&fit.theta)
}

/// Sample covariance over successful replicates, taken in the given order.
/// Errors when more than `MAX_FAILURE_FRACTION` of replicates failed or
/// fewer than two succeeded.
pub fn reduce_replicates(
    method: BaselineMethod,
    outcomes: Vec<Result<Vec<f64>>>,
    start: Option<StartMode>,
) -> Result<BaselineEstimate> {
    let total = outcomes.len();
    let values: Vec<Vec<f64>> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let failed = total - values.len();
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 || values.len() < 2 {
        return Err(IdmError::TooManyFailures { failed, total });
    }
    let cov = sample_covariance(&values)?;
    Ok(BaselineEstimate {
        method,
        covariance: CovMatrix::from_matrix(&cov, true, false),
        fit_count: total,
        failed,
        start,
    })
}

fn check_replicates(count: usize, what: &str) -> Result<()> {
    if count < 2 {
        return Err(IdmError::invalid(format!("{what} needs at least 2 replicates")));
    }
    Ok(())
}

/// Nonparametric bootstrap covariance of `ψ(θ̂)`, serially.
pub fn bootstrap_variance(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    theta_hat: &[f64],
    fit_config: &OptimizerConfig,
    boot: &BootstrapConfig,
) -> Result<BaselineEstimate> {
    check_replicates(boot.replicates, "bootstrap")?;
    let outcomes = (0..boot.replicates)
        .map(|b| bootstrap_replicate(model, data, eval, theta_hat, fit_config, boot, b))
        .collect();
    reduce_replicates(BaselineMethod::Bootstrap, outcomes, Some(boot.start))
}

/// Covariance of `ψ(θ̂)` across fits on fresh datasets from `dgp`, serially.
pub fn true_sampling_variance(
    dgp: &DgpSpec,
    n: usize,
    model: &LikelihoodModel,
    eval: &dyn EvalFn,
    fit_config: &OptimizerConfig,
    oracle: &OracleConfig,
) -> Result<BaselineEstimate> {
    check_replicates(oracle.replicates, "simulation")?;
    let outcomes = (0..oracle.replicates)
        .map(|r| simulation_replicate(dgp, n, model, eval, fit_config, oracle, r))
        .collect();
    reduce_replicates(BaselineMethod::Simulation, outcomes, Some(StartMode::Cold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idm::{FnEval, LinearEval};
    use crate::model::PredictorSpec;
    use crate::synthdata::DgpKind;

    fn gaussian_mean_model() -> LikelihoodModel {
        LikelihoodModel::new(PredictorSpec::linear(), Family::GaussianKnownVar { sigma2: 1.0 }, 0).unwrap()
    }

    #[test]
    fn delta_gaussian_mean_is_sigma2_over_n() {
        let model = gaussian_mean_model();
        let data = DgpSpec::new(DgpKind::GaussianMean { mean: 0.0 }, 100, 1).generate().unwrap();
        let mean = data.targets().iter().sum::<f64>() / 100.0;
        let est = delta_method_variance(&model, &data, &[mean], &LinearEval::coordinate(1, 0), 10).unwrap();
        assert!((est.covariance.get(0, 0) - 0.01).abs() < 1e-10);
        assert_eq!(est.fit_count, 0);
    }

    #[test]
    fn delta_rejects_gradient_in_flat_direction() {
        // Two copies of the same intercept: the Fisher matrix has a null
        // direction (1, -1), and ψ = θ₀ has mass there.
        let model = LikelihoodModel::new(PredictorSpec::linear(), Family::GaussianKnownVar { sigma2: 1.0 }, 1).unwrap();
        let data = Dataset::from_flat(1, vec![1.0; 5], vec![0.5, 1.0, 1.5, 2.0, 2.5]).unwrap();
        let theta = [0.75, 0.75];
        let bad = delta_method_variance(&model, &data, &theta, &LinearEval::coordinate(2, 0), 10);
        assert!(matches!(bad, Err(IdmError::Singular { .. })));
        // Their sum is identified, so ψ = θ₀ + θ₁ works through the pseudo-inverse.
        let sum = LinearEval { weights: vec![vec![1.0, 1.0]] };
        let ok = delta_method_variance(&model, &data, &theta, &sum, 10).unwrap();
        assert!((ok.covariance.get(0, 0) - 0.2).abs() < 1e-8);
    }

    #[test]
    fn constant_psi_gives_zero_bootstrap() {
        let model = gaussian_mean_model();
        let data = DgpSpec::new(DgpKind::GaussianMean { mean: 0.0 }, 30, 2).generate().unwrap();
        let eval = FnEval::scalar(|_| 3.0);
        let est = bootstrap_variance(&model, &data, &eval, &[0.0], &OptimizerConfig::default(), &BootstrapConfig::new(5, 1)).unwrap();
        assert_eq!(est.covariance.get(0, 0), 0.0);
        assert_eq!(est.fit_count, 5);
        assert_eq!(est.start, Some(StartMode::Warm));
    }

    #[test]
    fn replicate_count_validated() {
        let model = gaussian_mean_model();
        let data = DgpSpec::new(DgpKind::GaussianMean { mean: 0.0 }, 10, 2).generate().unwrap();
        let eval = LinearEval::coordinate(1, 0);
        let r = bootstrap_variance(&model, &data, &eval, &[0.0], &OptimizerConfig::default(), &BootstrapConfig::new(1, 1));
        assert!(matches!(r, Err(IdmError::InvalidArgument(_))));
    }

    #[test]
    fn failure_policy() {
        let ok = |v: f64| Ok(vec![v]);
        let fail = || Err(IdmError::invalid("x"));
        let mut outcomes: Vec<Result<Vec<f64>>> = (0..9).map(|i| ok(f64::from(i))).collect();
        outcomes.push(fail());
        let est = reduce_replicates(BaselineMethod::Bootstrap, outcomes, None).unwrap();
        assert_eq!((est.failed, est.fit_count), (1, 10));
        let mut outcomes: Vec<Result<Vec<f64>>> = (0..8).map(|i| ok(f64::from(i))).collect();
        outcomes.push(fail());
        outcomes.push(fail());
        assert!(matches!(
            reduce_replicates(BaselineMethod::Bootstrap, outcomes, None),
            Err(IdmError::TooManyFailures { failed: 2, total: 10 })
        ));
    }

    #[test]
    fn bootstrap_indices_deterministic_and_in_range() {
        let a = bootstrap_indices(20, 5, 3);
        assert_eq!(a, bootstrap_indices(20, 5, 3));
        assert_ne!(a, bootstrap_indices(20, 5, 4));
        assert!(a.iter().all(|&i| i < 20));
    }
}
