//! The implicit delta method.
//!
//! For an evaluation `ψ` of the maximum-likelihood fit `θ̂ₙ`, refit the
//! model on `Σᵢ log f(Zᵢ; θ) + λψ(θ)` starting from `θ̂ₙ` and report
//!
//! ```text
//! V̂ = (ψ(θ̂ₙ(λ)) - ψ(θ̂ₙ)) / λ
//! ```
//!
//! as the variance of `ψ(θ̂ₙ)`. The objective is the unnormalized sum, so a
//! constant `λ` works at every `n`. Multivariate evaluations need one refit
//! per component; the parameter covariance falls out by regularizing each
//! coordinate of `θ` in turn.

use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{IdmError, Result};
use crate::linalg::{psd_project, symmetrize, CovMatrix};
use crate::math::{abs, norm2, normal_quantile, sqrt};
use crate::model::{Dataset, Family, LikelihoodModel};
use crate::optim::{
    maximize, maximize_stochastic, nelder_mead, FitResult, Method, Objective, OptimizerConfig,
    StochasticAscent,
};

/// Largest parameter count for [`fisher_inverse_idm`] by default.
pub const DEFAULT_FISHER_CAP: usize = 50;

/// An evaluation `ψ: Θ → R^K` of fitted parameters.
pub trait EvalFn: Send + Sync {
    fn arity(&self) -> usize;

    fn component(&self, k: usize, theta: &[f64]) -> Result<f64>;

    /// Whether [`component_grad`](Self::component_grad) is available. Without
    /// it regularized refits run through Nelder-Mead.
    fn has_gradient(&self) -> bool {
        false
    }

    /// Value of component `k`, writing its θ-gradient into `grad`.
    fn component_grad(&self, k: usize, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        let _ = (k, theta, grad);
        Err(IdmError::invalid("evaluation has no gradient"))
    }

    /// Per-unit values `h(wⱼ; θ)` over the evaluation set, when `ψ` is an
    /// empirical average of such values.
    fn unit_values(&self, theta: &[f64]) -> Option<Result<Vec<f64>>> {
        let _ = theta;
        None
    }

    fn values(&self, theta: &[f64]) -> Result<Vec<f64>> {
        (0..self.arity()).map(|k| self.component(k, theta)).collect()
    }
}

type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Evaluation built from closures.
pub struct FnEval {
    components: Vec<ScalarFn>,
    gradients: Option<Vec<GradFn>>,
}

impl FnEval {
    pub fn scalar(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        FnEval {
            components: vec![Box::new(f)],
            gradients: None,
        }
    }

    pub fn scalar_with_gradient(
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        FnEval {
            components: vec![Box::new(f)],
            gradients: Some(vec![Box::new(g)]),
        }
    }
}

impl EvalFn for FnEval {
    fn arity(&self) -> usize {
        self.components.len()
    }

    fn component(&self, k: usize, theta: &[f64]) -> Result<f64> {
        Ok((self.components[k])(theta))
    }

    fn has_gradient(&self) -> bool {
        self.gradients.is_some()
    }

    fn component_grad(&self, k: usize, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        match &self.gradients {
            Some(g) => {
                grad.copy_from_slice(&(g[k])(theta));
                Ok((self.components[k])(theta))
            }
            None => Err(IdmError::invalid("evaluation has no gradient")),
        }
    }
}

/// `ψₖ(θ) = wₖᵀθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEval {
    pub weights: Vec<Vec<f64>>,
}

impl LinearEval {
    /// `ψ(θ) = θᵢ` in a `d`-dimensional parameter space.
    pub fn coordinate(d: usize, i: usize) -> Self {
        let mut w = vec![0.0; d];
        w[i] = 1.0;
        LinearEval { weights: vec![w] }
    }
}

impl EvalFn for LinearEval {
    fn arity(&self) -> usize {
        self.weights.len()
    }

    fn component(&self, k: usize, theta: &[f64]) -> Result<f64> {
        Ok(crate::math::dot(&self.weights[k], theta))
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn component_grad(&self, k: usize, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        grad.copy_from_slice(&self.weights[k]);
        self.component(k, theta)
    }
}

/// `Σᵢ log f(zᵢ; θ)` as an [`Objective`].
pub struct LogLikelihood<'a> {
    pub model: &'a LikelihoodModel,
    pub data: &'a Dataset,
}

impl Objective for LogLikelihood<'_> {
    fn value(&self, theta: &[f64]) -> Result<f64> {
        self.model.log_likelihood(theta, self.data)
    }

    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.model.value_and_grad(theta, self.data, grad)
    }
}

/// `Σᵢ log f(zᵢ; θ) + weight·ψₖ(θ)`.
pub struct Regularized<'a> {
    pub model: &'a LikelihoodModel,
    pub data: &'a Dataset,
    pub eval: &'a dyn EvalFn,
    pub component: usize,
    pub weight: f64,
}

impl Objective for Regularized<'_> {
    fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.model.log_likelihood(theta, self.data)? + self.weight * self.eval.component(self.component, theta)?)
    }

    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        let ll = self.model.value_and_grad(theta, self.data, grad)?;
        let mut pg = vec![0.0; grad.len()];
        let psi = self.eval.component_grad(self.component, theta, &mut pg)?;
        for (g, p) in grad.iter_mut().zip(&pg) {
            *g += self.weight * p;
        }
        Ok(ll + self.weight * psi)
    }
}

/// Maximum-likelihood fit from `init` by the configured method.
pub fn fit_mle(model: &LikelihoodModel, data: &Dataset, init: &[f64], config: &OptimizerConfig) -> Result<FitResult> {
    let objective = LogLikelihood { model, data };
    match config.method {
        Method::FullGradient | Method::Lbfgs => maximize(&objective, init, config),
        Method::NelderMead => nelder_mead(|t: &[f64]| objective.value(t), init, config),
        Method::AdaptiveStochastic => {
            let mut fit = maximize_stochastic(batch_objective(model, data, None), data.len(), init, config)?;
            fit.objective_value = model.log_likelihood(&fit.theta, data)?;
            Ok(fit)
        }
    }
}

/// Minibatch objective on the full-data scale, `(n/B)·Σ_batch log f`, plus
/// an optional `weight·ψₖ` term.
fn batch_objective<'a>(
    model: &'a LikelihoodModel,
    data: &'a Dataset,
    reg: Option<(&'a dyn EvalFn, usize, f64)>,
) -> impl FnMut(&[f64], &[usize], &mut [f64]) -> Result<f64> + 'a {
    let n = data.len() as f64;
    let mut pg = vec![0.0; model.param_count()];
    move |theta, rows, grad| {
        let scale = n / rows.len() as f64;
        let mut v = model.value_and_grad_rows(theta, data, rows, grad)? * scale;
        grad.iter_mut().for_each(|g| *g *= scale);
        if let Some((eval, k, w)) = reg {
            let psi = eval.component_grad(k, theta, &mut pg)?;
            for (g, p) in grad.iter_mut().zip(&pg) {
                *g += w * p;
            }
            v += w * psi;
        }
        Ok(v)
    }
}

/// Maximizes `Σ log f + weight·ψₖ` warm-started at `warm`. The gradient
/// path is used when `ψ` has a gradient and the configured method is not
/// Nelder-Mead; otherwise the simplex method runs on the regularized value.
pub fn fit_weighted(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    component: usize,
    weight: f64,
    warm: &FitResult,
    config: &OptimizerConfig,
) -> Result<FitResult> {
    if component >= eval.arity() {
        return Err(IdmError::invalid("evaluation component out of range"));
    }
    if weight == 0.0 {
        return Ok(warm.clone());
    }
    let config = config.for_regularized();
    let objective = Regularized {
        model,
        data,
        eval,
        component,
        weight,
    };
    let result = if eval.has_gradient() && config.method != Method::NelderMead {
        match config.method {
            Method::AdaptiveStochastic => maximize_stochastic(
                batch_objective(model, data, Some((eval, component, weight))),
                data.len(),
                &warm.theta,
                &config,
            )
            .and_then(|mut fit| {
                fit.objective_value = objective.value(&fit.theta)?;
                Ok(fit)
            }),
            _ => maximize(&objective, &warm.theta, &config),
        }
    } else {
        nelder_mead(|t: &[f64]| objective.value(t), &warm.theta, &config)
    };
    result.map_err(|e| e.within(alloc::format!("regularized fit (weight {weight:e}, component {component})")))
}

/// ψ-regularized maximum likelihood: maximizes `Σ log f(Zᵢ; θ) + λψ(θ)`
/// warm-started at the converged fit `warm`.
pub fn fit_regularized(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    lambda: f64,
    warm: &FitResult,
    config: &OptimizerConfig,
) -> Result<FitResult> {
    if !(lambda >= 0.0) {
        return Err(IdmError::invalid("lambda must be nonnegative"));
    }
    fit_weighted(model, data, eval, 0, lambda, warm, config)
}

/// Variance estimate of `ψ(θ̂ₙ)` from a pair of fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarEstimate {
    /// `(psi_reg - psi_base) / lambda_used`, possibly negative when the
    /// fits are inexact.
    pub value: f64,
    pub lambda_used: f64,
    pub psi_base: f64,
    pub psi_reg: f64,
    /// `value` fell below `-1e-6·(1 + |ψ̂|)`.
    pub raw_negative: bool,
    /// Iterations of the regularized fit(s).
    pub fit_iters: usize,
    pub converged: bool,
    /// `‖θ̂ₙ(λ) - θ̂ₙ‖`.
    pub displacement: f64,
}

impl VarEstimate {
    fn from_fits(eval: &dyn EvalFn, k: usize, lambda_used: f64, base: &FitResult, reg: &FitResult, fit_iters: usize, converged: bool) -> Result<Self> {
        let psi_base = eval.component(k, &base.theta)?;
        let psi_reg = eval.component(k, &reg.theta)?;
        let value = (psi_reg - psi_base) / lambda_used;
        let displacement = norm2(&reg.theta.iter().zip(base.theta.iter()).map(|(a, b)| a - b).collect::<Vec<_>>());
        Ok(VarEstimate {
            value,
            lambda_used,
            psi_base,
            psi_reg,
            raw_negative: value < -1e-6 * (1.0 + abs(psi_base)),
            fit_iters,
            converged,
            displacement,
        })
    }

    /// The variance used for intervals: negative values clamp to zero.
    pub fn clamped(&self) -> f64 {
        self.value.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdidmOptions {
    /// Use `(ψ(θ̂(+λ)) - ψ(θ̂(-λ))) / 2λ` instead of the forward difference.
    pub central: bool,
}

/// Multiplier that maps `λ` onto the maximized objective. Likelihood
/// families use `λ` itself; for `gaussian_sse` the objective is `-½SSE`, so
/// the regularizer is scaled by `σ̂²` to sit on the likelihood scale.
pub fn regularization_scale(model: &LikelihoodModel, data: &Dataset, warm: &FitResult) -> Result<f64> {
    match model.family() {
        Family::GaussianSse => {
            let s2 = model.sigma2_hat(&warm.theta, data)?;
            if !(s2 > 0.0) {
                return Err(IdmError::DegenerateFit(
                    "residual variance of the fit is zero".to_string(),
                ));
            }
            Ok(s2)
        }
        _ => Ok(1.0),
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(IdmError::invalid("lambda must be positive and finite"))
    }
}

fn fdidm_scaled(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    k: usize,
    lambda: f64,
    scale: f64,
    warm: &FitResult,
    config: &OptimizerConfig,
    options: FdidmOptions,
) -> Result<VarEstimate> {
    check_lambda(lambda)?;
    let plus = fit_weighted(model, data, eval, k, scale * lambda, warm, config)?;
    if options.central {
        let minus = fit_weighted(model, data, eval, k, -scale * lambda, warm, config)?;
        VarEstimate::from_fits(
            eval,
            k,
            2.0 * lambda,
            &minus,
            &plus,
            plus.iterations + minus.iterations,
            plus.converged && minus.converged,
        )
    } else {
        VarEstimate::from_fits(eval, k, lambda, warm, &plus, plus.iterations, plus.converged)
    }
}

/// Finite-difference IDM variance of a scalar evaluation.
///
/// `gaussian_sse` models must go through [`fdidm_sse`], which restores the
/// likelihood scale.
pub fn fdidm(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    lambda: f64,
    warm: &FitResult,
    config: &OptimizerConfig,
) -> Result<VarEstimate> {
    fdidm_with(model, data, eval, lambda, warm, config, FdidmOptions::default())
}

pub fn fdidm_with(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    lambda: f64,
    warm: &FitResult,
    config: &OptimizerConfig,
    options: FdidmOptions,
) -> Result<VarEstimate> {
    if model.family() == Family::GaussianSse {
        return Err(IdmError::WrongFamily {
            op: "fdidm",
            family: model.family().name(),
        });
    }
    fdidm_scaled(model, data, eval, 0, lambda, 1.0, warm, config, options)
}

/// IDM for squared-error fits: maximizes `-½SSE(θ) + σ̂²λψ(θ)` with
/// `σ̂² = SSE(θ̂ₙ)/n`, which matches regularizing the Gaussian likelihood by
/// `λψ`, and returns the variance on the likelihood scale.
pub fn fdidm_sse(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    lambda: f64,
    warm: &FitResult,
    config: &OptimizerConfig,
) -> Result<VarEstimate> {
    fdidm_sse_with(model, data, eval, lambda, warm, config, FdidmOptions::default())
}

pub fn fdidm_sse_with(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    lambda: f64,
    warm: &FitResult,
    config: &OptimizerConfig,
    options: FdidmOptions,
) -> Result<VarEstimate> {
    if model.family() != Family::GaussianSse {
        return Err(IdmError::WrongFamily {
            op: "fdidm_sse",
            family: model.family().name(),
        });
    }
    let scale = regularization_scale(model, data, warm)?;
    fdidm_scaled(model, data, eval, 0, lambda, scale, warm, config, options)
}

/// [`fdidm`] or [`fdidm_sse`], whichever applies to the model's family,
/// for component `k` of `eval`.
pub fn implicit_variance(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    k: usize,
    lambda: f64,
    warm: &FitResult,
    config: &OptimizerConfig,
    options: FdidmOptions,
) -> Result<VarEstimate> {
    let scale = regularization_scale(model, data, warm)?;
    fdidm_scaled(model, data, eval, k, lambda, scale, warm, config, options)
}

/// Multivariate IDM result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvEstimate {
    /// `Δᵢⱼ = (ψᵢ(θ̂(λ; ψⱼ)) - ψᵢ(θ̂)) / λ`, unsymmetrized.
    pub raw: CovMatrix,
    /// Symmetrized and PSD-projected `raw`.
    pub covariance: CovMatrix,
    pub fit_count: usize,
    pub fit_iters: Vec<usize>,
    pub converged: bool,
}

/// Covariance of a `K`-variate evaluation from `K` regularized refits (the
/// base fit `warm` is reused).
pub fn mv_fdidm(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    lambda: f64,
    warm: &FitResult,
    config: &OptimizerConfig,
) -> Result<MvEstimate> {
    mv_fdidm_with(model, data, eval, lambda, warm, config, FdidmOptions::default())
}

/// [`mv_fdidm`] with options; central differences take `2K` refits.
pub fn mv_fdidm_with(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    lambda: f64,
    warm: &FitResult,
    config: &OptimizerConfig,
    options: FdidmOptions,
) -> Result<MvEstimate> {
    check_lambda(lambda)?;
    let k = eval.arity();
    if k == 0 {
        return Err(IdmError::invalid("evaluation must have at least one component"));
    }
    let scale = regularization_scale(model, data, warm)?;
    let base = eval.values(&warm.theta)?;
    let mut raw = DMatrix::zeros(k, k);
    let mut fit_iters = Vec::with_capacity(k);
    let mut converged = true;
    for j in 0..k {
        let refit = |w: f64| {
            fit_weighted(model, data, eval, j, w, warm, config).map_err(|e| e.within(alloc::format!("component {j}")))
        };
        let plus = refit(scale * lambda)?;
        let moved = eval.values(&plus.theta)?;
        let mut iters = plus.iterations;
        converged &= plus.converged;
        if options.central {
            let minus = refit(-scale * lambda)?;
            let back = eval.values(&minus.theta)?;
            for i in 0..k {
                raw[(i, j)] = (moved[i] - back[i]) / (2.0 * lambda);
            }
            iters += minus.iterations;
            converged &= minus.converged;
        } else {
            for i in 0..k {
                raw[(i, j)] = (moved[i] - base[i]) / lambda;
            }
        }
        fit_iters.push(iters);
    }
    let projected = psd_project(&raw)?;
    Ok(MvEstimate {
        raw: CovMatrix::from_matrix(&raw, false, false),
        covariance: CovMatrix::from_matrix(&projected, true, true),
        fit_count: if options.central { 2 * k } else { k },
        fit_iters,
        converged,
    })
}

/// Symmetric `β`-confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    pub beta: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `Φ⁻¹((1+β)/2)`.
pub fn z_multiplier(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(IdmError::invalid("confidence level must lie in (0, 1)"));
    }
    Ok(normal_quantile((1.0 + beta) / 2.0))
}

/// `[center ± Φ⁻¹((1+β)/2)·√variance]`.
pub fn interval_from_variance(center: f64, variance: f64, beta: f64) -> Result<Interval> {
    let z = z_multiplier(beta)?;
    if !(variance >= 0.0) {
        return Err(IdmError::invalid("variance must be nonnegative"));
    }
    let half = z * sqrt(variance);
    Ok(Interval {
        lower: center - half,
        upper: center + half,
        center,
        beta,
    })
}

/// Interval around `psi_hat` from an IDM estimate; a negative raw variance
/// yields a zero-width interval.
pub fn confidence_interval(psi_hat: f64, estimate: &VarEstimate, beta: f64) -> Result<Interval> {
    interval_from_variance(psi_hat, estimate.clamped(), beta)
}

/// Outcome of the minibatch IDM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgEstimate {
    pub interval: Interval,
    pub psi_bar_base: f64,
    pub psi_bar_reg: f64,
    /// `(ψ̄_λ - ψ̄₀)/λ` before clamping.
    pub raw_variance: f64,
    /// The raw variance was negative and the interval has zero width.
    pub clamped: bool,
    pub iterations: usize,
    pub converged: bool,
}

/// Minibatch IDM: ascend the log-likelihood from a uniform(-0.1, 0.1) start
/// until the windowed objective settles, average `ψ` over the next `S`
/// iterates, continue on the `λψ`-regularized objective until it settles,
/// average `ψ` over `S` more iterates, and return
/// `ψ̄₀ ± Φ⁻¹((1+β)/2)·√((ψ̄_λ - ψ̄₀)/λ)`.
pub fn sg_fdidm(
    model: &LikelihoodModel,
    data: &Dataset,
    eval: &dyn EvalFn,
    lambda: f64,
    samples: usize,
    beta: f64,
    config: &OptimizerConfig,
) -> Result<SgEstimate> {
    check_lambda(lambda)?;
    z_multiplier(beta)?;
    if samples == 0 {
        return Err(IdmError::invalid("sample count S must be at least 1"));
    }
    if config.method != Method::AdaptiveStochastic {
        return Err(IdmError::invalid("sg_fdidm needs method adaptive_stochastic"));
    }
    if !eval.has_gradient() {
        return Err(IdmError::invalid("sg_fdidm needs an evaluation with a gradient"));
    }
    let init = model.init_params(config.seed);
    let mut ascent = StochasticAscent::new(&init, data.len(), config)?;

    let mut plain = batch_objective(model, data, None);
    let (conv_base, _, _) = ascent.run(&mut plain, config)?;
    let mut psi_base = 0.0;
    for _ in 0..samples {
        psi_base += eval.component(0, ascent.theta())?;
        ascent.step(&mut plain)?;
    }
    psi_base /= samples as f64;

    let scale = match model.family() {
        Family::GaussianSse => {
            let s2 = model.sigma2_hat(ascent.theta(), data)?;
            if !(s2 > 0.0) {
                return Err(IdmError::DegenerateFit("residual variance is zero".to_string()));
            }
            s2
        }
        _ => 1.0,
    };
    let reg_config = config.for_regularized();
    ascent.set_learning_rate(reg_config.learning_rate);
    let mut regularized = batch_objective(model, data, Some((eval, 0, scale * lambda)));
    let (conv_reg, _, _) = ascent.run(&mut regularized, &reg_config)?;
    let mut psi_reg = 0.0;
    for _ in 0..samples {
        psi_reg += eval.component(0, ascent.theta())?;
        ascent.step(&mut regularized)?;
    }
    psi_reg /= samples as f64;

    let raw_variance = (psi_reg - psi_base) / lambda;
    let clamped = raw_variance < 0.0;
    Ok(SgEstimate {
        interval: interval_from_variance(psi_base, raw_variance.max(0.0), beta)?,
        psi_bar_base: psi_base,
        psi_bar_reg: psi_reg,
        raw_variance,
        clamped,
        iterations: ascent.iteration(),
        converged: conv_base && conv_reg,
    })
}

/// Estimate of `I(θ₀)⁻¹` (per-observation Fisher information) from `d`
/// coordinate-regularized refits: column `i` is `n·(θ̂(λ; θᵢ) - θ̂)/λ`.
/// The result is symmetrized.
pub fn fisher_inverse_idm(
    model: &LikelihoodModel,
    data: &Dataset,
    warm: &FitResult,
    lambda: f64,
    config: &OptimizerConfig,
    cap: usize,
) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    let d = model.param_count();
    if d > cap {
        return Err(IdmError::Capability {
            what: "parameter count for Fisher-inverse extraction",
            limit: cap,
            got: d,
        });
    }
    let scale = regularization_scale(model, data, warm)?;
    let n = data.len() as f64;
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        let eval = LinearEval::coordinate(d, i);
        let fit = fit_weighted(model, data, &eval, 0, scale * lambda, warm, config)
            .map_err(|e| e.within(alloc::format!("coordinate {i}")))?;
        for r in 0..d {
            m[(r, i)] = n * (fit.theta[r] - warm.theta[r]) / lambda;
        }
    }
    Ok(symmetrize(&m))
}

/// Variance of the empirical evaluation due to the finite evaluation set,
/// `(1/((m-1)m)) Σⱼ (h(wⱼ; θ̂) - ψ(θ̂))²`.
pub fn eval_set_variance(eval: &dyn EvalFn, theta: &[f64]) -> Result<f64> {
    let units = eval
        .unit_values(theta)
        .ok_or_else(|| IdmError::invalid("evaluation has no per-unit form"))??;
    let m = units.len();
    if m < 2 {
        return Err(IdmError::invalid("evaluation set needs at least two units"));
    }
    let mean = units.iter().sum::<f64>() / m as f64;
    let ss: f64 = units.iter().map(|h| (h - mean) * (h - mean)).sum();
    Ok(ss / ((m - 1) * m) as f64)
}

/// Total variance against the population evaluation: the sum when training
/// and evaluation sets are independent, otherwise the upper bound
/// `(√V_fit + √V_eval)²`.
pub fn combined_variance(v_fit: f64, v_eval: f64, independent: bool) -> Result<f64> {
    if !(v_fit >= 0.0 && v_eval >= 0.0) {
        return Err(IdmError::invalid("variances must be nonnegative"));
    }
    Ok(if independent {
        v_fit + v_eval
    } else {
        let s = sqrt(v_fit) + sqrt(v_eval);
        s * s
    })
}

/// `λ = 0.01·|objective at the MLE|`, floored at `1e-3`.
pub fn default_lambda(objective_at_mle: f64) -> Result<f64> {
    if !objective_at_mle.is_finite() {
        return Err(IdmError::invalid("objective at the MLE must be finite"));
    }
    Ok((0.01 * abs(objective_at_mle)).max(1e-3))
}

/// [`default_lambda`] of the model's likelihood-scale objective at `warm`.
pub fn auto_lambda(model: &LikelihoodModel, data: &Dataset, warm: &FitResult) -> Result<f64> {
    default_lambda(model.likelihood_objective(&warm.theta, data)?)
}
