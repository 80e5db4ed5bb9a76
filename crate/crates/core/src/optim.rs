//! Maximizers for (possibly ψ-regularized) objectives.
//!
//! Four paths: full-batch gradient ascent with an optional backtracking
//! guard, full-batch limited-memory BFGS, minibatch ascent with an
//! RMS-of-gradients step scaling, and the Nelder-Mead simplex for
//! objectives without a gradient.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{IdmError, Result};
use crate::math::{abs, dot, norm2, sqrt};
use crate::model::ParamVec;
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FullGradient,
    Lbfgs,
    AdaptiveStochastic,
    NelderMead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decay {
    Constant,
    /// `η₀ / (1 + rate·i)`
    InverseTime { rate: f64 },
    /// `η₀ · factorⁱ`
    Exponential { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRate {
    pub initial: f64,
    #[serde(default = "default_decay")]
    pub decay: Decay,
}

fn default_decay() -> Decay {
    Decay::Constant
}

impl LearningRate {
    pub fn constant(initial: f64) -> Self {
        LearningRate {
            initial,
            decay: Decay::Constant,
        }
    }

    pub fn at(&self, iteration: usize) -> f64 {
        match self.decay {
            Decay::Constant => self.initial,
            Decay::InverseTime { rate } => self.initial / (1.0 + rate * iteration as f64),
            Decay::Exponential { factor } => self.initial * libm::pow(factor, iteration as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub method: Method,
    pub learning_rate: LearningRate,
    /// Rate for ψ-regularized refits; `None` reuses `learning_rate`.
    pub regularized_learning_rate: Option<LearningRate>,
    pub max_iters: usize,
    /// Iteration budget for ψ-regularized refits; `None` reuses `max_iters`.
    pub regularized_max_iters: Option<usize>,
    /// Gradient methods stop when `‖∇‖ ≤ tol·(1 + |objective|)`; Nelder-Mead
    /// stops when the simplex diameter drops below `tol`.
    pub convergence_tol: f64,
    pub minibatch_size: usize,
    pub seed: u64,
    /// Halve the step (at most 30 times) whenever the objective would drop.
    pub backtracking: bool,
    /// RMS-of-gradients per-coordinate scaling in the stochastic path.
    pub adaptive: bool,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    /// Stochastic convergence: relative change of the mean objective over
    /// two consecutive windows of this many iterations.
    pub window: usize,
    pub window_tol: f64,
    pub nelder_mead_cap: usize,
    /// Curvature pairs kept by L-BFGS.
    pub lbfgs_memory: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::FullGradient,
            learning_rate: LearningRate::constant(0.01),
            regularized_learning_rate: None,
            max_iters: 100_000,
            regularized_max_iters: None,
            convergence_tol: 1e-6,
            minibatch_size: 128,
            seed: 0,
            backtracking: true,
            adaptive: true,
            rms_decay: 0.9,
            rms_epsilon: 1e-8,
            window: 50,
            window_tol: 1e-5,
            nelder_mead_cap: 50,
            lbfgs_memory: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, n: Option<usize>) -> Result<()> {
        if !(self.learning_rate.initial > 0.0) {
            return Err(IdmError::invalid("initial learning rate must be positive"));
        }
        if let Some(r) = self.regularized_learning_rate {
            if !(r.initial > 0.0) {
                return Err(IdmError::invalid("regularized learning rate must be positive"));
            }
        }
        if self.max_iters == 0 || self.regularized_max_iters == Some(0) {
            return Err(IdmError::invalid("max_iters must be at least 1"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(IdmError::invalid("convergence_tol must be positive"));
        }
        if self.method == Method::Lbfgs && self.lbfgs_memory == 0 {
            return Err(IdmError::invalid("lbfgs_memory must be at least 1"));
        }
        if self.method == Method::AdaptiveStochastic {
            if let Some(n) = n {
                if self.minibatch_size == 0 || self.minibatch_size > n {
                    return Err(IdmError::invalid(alloc::format!(
                        "minibatch_size {} outside [1, {n}]",
                        self.minibatch_size
                    )));
                }
            }
            if self.window == 0 {
                return Err(IdmError::invalid("window must be at least 1"));
            }
        }
        Ok(())
    }

    /// Copy of this config with the regularized-phase rate and budget in force.
    pub fn for_regularized(&self) -> OptimizerConfig {
        let mut c = self.clone();
        if let Some(r) = self.regularized_learning_rate {
            c.learning_rate = r;
        }
        if let Some(m) = self.regularized_max_iters {
            c.max_iters = m;
        }
        c
    }
}

/// Result of a maximization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: ParamVec,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// NaN for Nelder-Mead.
    pub grad_norm_final: f64,
}

/// A smooth objective to maximize.
pub trait Objective {
    fn value(&self, theta: &[f64]) -> Result<f64>;
    /// Returns the value and overwrites `grad` with the gradient.
    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64>;
}

/// Objective assembled from two closures.
pub struct FnObjective<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn value(&self, theta: &[f64]) -> Result<f64> {
        Ok((self.value)(theta))
    }

    fn value_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        grad.copy_from_slice(&(self.gradient)(theta));
        Ok((self.value)(theta))
    }
}

fn non_finite(context: &str, last: &[f64]) -> IdmError {
    IdmError::NumericFailure {
        context: alloc::format!("{context}: objective became non-finite"),
        last_finite: Some(last.to_vec()),
    }
}

fn finite_eval(r: Result<f64>) -> Option<f64> {
    match r {
        Ok(v) if v.is_finite() => Some(v),
        _ => None,
    }
}

/// Full-batch gradient ascent from `init`.
///
/// Reaching `max_iters` is not an error; the result reports
/// `converged = false`.
pub fn maximize<O: Objective + ?Sized>(objective: &O, init: &[f64], config: &OptimizerConfig) -> Result<FitResult> {
    match config.method {
        Method::FullGradient => {}
        Method::Lbfgs => return lbfgs(objective, init, config),
        Method::NelderMead => {
            return nelder_mead(|t: &[f64]| objective.value(t), init, config);
        }
        Method::AdaptiveStochastic => {
            return Err(IdmError::invalid(
                "maximize needs a full-batch method; use maximize_stochastic",
            ));
        }
    }
    config.validate(None)?;
    let d = init.len();
    let mut theta = init.to_vec();
    let mut grad = vec![0.0; d];
    let mut value = match objective.value_grad(&theta, &mut grad) {
        Ok(v) if v.is_finite() => v,
        Ok(_) => return Err(IdmError::numeric("objective is not finite at the initial point")),
        Err(e) => return Err(e),
    };
    let mut trial = vec![0.0; d];
    let mut trial_grad = vec![0.0; d];
    // Accepted step, carried across iterations so backtracking is not redone
    // from scratch each time; may double after a first-try acceptance.
    let mut step_cap = f64::INFINITY;

    for it in 0..config.max_iters {
        let gnorm = norm2(&grad);
        if gnorm <= config.convergence_tol * (1.0 + abs(value)) {
            return Ok(FitResult {
                theta: ParamVec::new(theta)?,
                objective_value: value,
                iterations: it,
                converged: true,
                grad_norm_final: gnorm,
            });
        }
        let scheduled = config.learning_rate.at(it);
        if config.backtracking {
            // Differences below this are rounding noise in the objective.
            let noise = 64.0 * f64::EPSILON * (1.0 + abs(value));
            let mut eta = scheduled.min(step_cap);
            let mut accepted = None;
            for halvings in 0..=30 {
                for ((t, th), g) in trial.iter_mut().zip(&theta).zip(&grad) {
                    *t = th + eta * g;
                }
                if let Some(v) = finite_eval(objective.value_grad(&trial, &mut trial_grad)) {
                    if v >= value - noise {
                        accepted = Some((v, halvings));
                        break;
                    }
                }
                eta *= 0.5;
            }
            match accepted {
                Some((v, halvings)) => {
                    core::mem::swap(&mut theta, &mut trial);
                    core::mem::swap(&mut grad, &mut trial_grad);
                    value = v;
                    step_cap = if halvings == 0 { 2.0 * eta } else { eta };
                }
                None => {
                    // No ascent direction resolvable above rounding noise.
                    return Ok(FitResult {
                        theta: ParamVec::new(theta)?,
                        objective_value: value,
                        iterations: it,
                        converged: false,
                        grad_norm_final: gnorm,
                    });
                }
            }
        } else {
            for ((t, th), g) in trial.iter_mut().zip(&theta).zip(&grad) {
                *t = th + scheduled * g;
            }
            match finite_eval(objective.value_grad(&trial, &mut trial_grad)) {
                Some(v) => {
                    core::mem::swap(&mut theta, &mut trial);
                    core::mem::swap(&mut grad, &mut trial_grad);
                    value = v;
                }
                None => return Err(non_finite("gradient ascent", &theta)),
            }
        }
    }
    let gnorm = norm2(&grad);
    Ok(FitResult {
        converged: gnorm <= config.convergence_tol * (1.0 + abs(value)),
        theta: ParamVec::new(theta)?,
        objective_value: value,
        iterations: config.max_iters,
        grad_norm_final: gnorm,
    })
}

/// L-BFGS stops after this many consecutive steps without progress in
/// either the objective or the gradient norm, e.g. when the supremum is
/// approached only as `|θ| → ∞`.
const STALL_LIMIT: usize = 20;

/// Limited-memory BFGS ascent with an Armijo backtracking line search.
/// The learning rate is not used; the first step is scaled to unit length.
pub fn lbfgs<O: Objective + ?Sized>(objective: &O, init: &[f64], config: &OptimizerConfig) -> Result<FitResult> {
    config.validate(None)?;
    let d = init.len();
    let mut theta = init.to_vec();
    let mut grad = vec![0.0; d];
    let mut value = match objective.value_grad(&theta, &mut grad) {
        Ok(v) if v.is_finite() => v,
        Ok(_) => return Err(IdmError::numeric("objective is not finite at the initial point")),
        Err(e) => return Err(e),
    };
    // (s, y, 1/sᵀy) with y the change in the gradient of -f.
    let mut pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(config.lbfgs_memory);
    let mut dir = vec![0.0; d];
    let mut alpha = vec![0.0; config.lbfgs_memory];
    let mut trial = vec![0.0; d];
    let mut trial_grad = vec![0.0; d];
    // Consecutive accepted steps that neither gain above rounding noise nor
    // lower the best gradient norm seen.
    let mut stalled = 0;
    let mut best_gnorm = f64::INFINITY;
    let done = |theta: Vec<f64>, value: f64, it: usize, converged: bool, gnorm: f64| {
        Ok(FitResult {
            theta: ParamVec::new(theta)?,
            objective_value: value,
            iterations: it,
            converged,
            grad_norm_final: gnorm,
        })
    };

    for it in 0..config.max_iters {
        let gnorm = norm2(&grad);
        if gnorm <= config.convergence_tol * (1.0 + abs(value)) {
            return done(theta, value, it, true, gnorm);
        }
        // Two-loop recursion: dir ≈ (-∇²f)⁻¹ ∇f.
        dir.copy_from_slice(&grad);
        for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(q, yi)| *q -= alpha[k] * yi);
        }
        let scale = match pairs.last() {
            Some((_, y, rho)) => 1.0 / (rho * dot(y, y)),
            None => 1.0 / gnorm,
        };
        dir.iter_mut().for_each(|q| *q *= scale);
        for (k, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(r, si)| *r += (alpha[k] - b) * si);
        }
        let mut slope = dot(&grad, &dir);
        if !(slope > 0.0) {
            pairs.clear();
            dir.copy_from_slice(&grad);
            dir.iter_mut().for_each(|q| *q /= gnorm);
            slope = gnorm;
        }

        let noise = 64.0 * f64::EPSILON * (1.0 + abs(value));
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            for ((t, th), p) in trial.iter_mut().zip(&theta).zip(&dir) {
                *t = th + step * p;
            }
            if let Some(v) = finite_eval(objective.value_grad(&trial, &mut trial_grad)) {
                if v >= value + 1e-4 * step * slope - noise {
                    accepted = Some(v);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(v) = accepted else {
            if pairs.is_empty() {
                return done(theta, value, it, false, gnorm);
            }
            pairs.clear();
            continue;
        };

        let s: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad.iter().zip(&trial_grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm2(&s) * norm2(&y) && sy > 0.0 {
            if pairs.len() == config.lbfgs_memory {
                pairs.remove(0);
            }
            pairs.push((s, y, 1.0 / sy));
        }
        let trial_gnorm = norm2(&trial_grad);
        stalled = if v - value <= noise && trial_gnorm >= best_gnorm { stalled + 1 } else { 0 };
        best_gnorm = best_gnorm.min(trial_gnorm);
        core::mem::swap(&mut theta, &mut trial);
        core::mem::swap(&mut grad, &mut trial_grad);
        value = v;
        if stalled >= STALL_LIMIT {
            let gnorm = norm2(&grad);
            let converged = gnorm <= config.convergence_tol * (1.0 + abs(value));
            return done(theta, value, it + 1, converged, gnorm);
        }
    }
    let gnorm = norm2(&grad);
    let converged = gnorm <= config.convergence_tol * (1.0 + abs(value));
    done(theta, value, config.max_iters, converged, gnorm)
}

/// State of a minibatch ascent run. Keeping it as a value lets a caller
/// switch objectives mid-run (as the stochastic IDM does) without losing
/// the shuffle position, step accumulator or iteration counter.
#[derive(Debug, Clone)]
pub struct StochasticAscent {
    theta: Vec<f64>,
    accum: Vec<f64>,
    grad: Vec<f64>,
    order: Vec<usize>,
    cursor: usize,
    rng: Stream,
    iteration: usize,
    batch_size: usize,
    rate: LearningRate,
    adaptive: bool,
    rms_decay: f64,
    rms_epsilon: f64,
}

impl StochasticAscent {
    pub fn new(init: &[f64], n: usize, config: &OptimizerConfig) -> Result<Self> {
        config.validate(Some(n))?;
        let mut rng = Stream::new(config.seed);
        let mut order: Vec<usize> = (0..n).collect();
        if config.minibatch_size < n {
            rng.shuffle(&mut order);
        }
        Ok(StochasticAscent {
            theta: init.to_vec(),
            accum: vec![0.0; init.len()],
            grad: vec![0.0; init.len()],
            order,
            cursor: 0,
            rng,
            iteration: 0,
            batch_size: config.minibatch_size,
            rate: config.learning_rate,
            adaptive: config.adaptive,
            rms_decay: config.rms_decay,
            rms_epsilon: config.rms_epsilon,
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn set_learning_rate(&mut self, rate: LearningRate) {
        self.rate = rate;
    }

    /// Next block of the shuffled row order; reshuffles after each pass.
    /// A full-data batch keeps rows in index order.
    fn next_batch(&mut self) -> Vec<usize> {
        let n = self.order.len();
        if self.cursor + self.batch_size > n {
            if self.batch_size < n {
                self.rng.shuffle(&mut self.order);
            }
            self.cursor = 0;
        }
        let batch = self.order[self.cursor..self.cursor + self.batch_size].to_vec();
        self.cursor += self.batch_size;
        batch
    }

    /// One ascent step on `objective_batch(θ, rows, grad)`, which returns the
    /// minibatch objective and writes its gradient. Returns the objective at
    /// the pre-step iterate.
    pub fn step<F>(&mut self, objective_batch: &mut F) -> Result<f64>
    where
        F: FnMut(&[f64], &[usize], &mut [f64]) -> Result<f64>,
    {
        let batch = self.next_batch();
        let value = objective_batch(&self.theta, &batch, &mut self.grad)?;
        if !value.is_finite() || self.grad.iter().any(|g| !g.is_finite()) {
            return Err(non_finite("stochastic ascent", &self.theta));
        }
        let eta = self.rate.at(self.iteration);
        if self.adaptive {
            for ((t, a), g) in self.theta.iter_mut().zip(&mut self.accum).zip(&self.grad) {
                *a = self.rms_decay * *a + (1.0 - self.rms_decay) * g * g;
                *t += eta * g / (sqrt(*a) + self.rms_epsilon);
            }
        } else {
            for (t, g) in self.theta.iter_mut().zip(&self.grad) {
                *t += eta * g;
            }
        }
        self.iteration += 1;
        Ok(value)
    }

    /// Steps until the mean objective over consecutive windows changes by
    /// less than `window_tol` relative, or `max_iters` steps elapse.
    /// Returns `(converged, steps_taken, last_window_mean)`.
    pub fn run<F>(&mut self, objective_batch: &mut F, config: &OptimizerConfig) -> Result<(bool, usize, f64)>
    where
        F: FnMut(&[f64], &[usize], &mut [f64]) -> Result<f64>,
    {
        let window = config.window;
        let mut previous: Option<f64> = None;
        let mut sum = 0.0;
        let mut in_window = 0;
        let mut last_mean = f64::NAN;
        for taken in 1..=config.max_iters {
            sum += self.step(objective_batch)?;
            in_window += 1;
            if in_window == window {
                let mean = sum / window as f64;
                last_mean = mean;
                if let Some(prev) = previous {
                    if abs(mean - prev) <= config.window_tol * abs(prev).max(1.0) {
                        return Ok((true, taken, mean));
                    }
                }
                previous = Some(mean);
                sum = 0.0;
                in_window = 0;
            }
        }
        Ok((false, config.max_iters, last_mean))
    }
}

/// Minibatch ascent over `n` rows from `init`. `objective_batch` receives
/// the row indices of each minibatch and should return an estimate on the
/// full-data scale.
pub fn maximize_stochastic<F>(mut objective_batch: F, n: usize, init: &[f64], config: &OptimizerConfig) -> Result<FitResult>
where
    F: FnMut(&[f64], &[usize], &mut [f64]) -> Result<f64>,
{
    if config.method != Method::AdaptiveStochastic {
        return Err(IdmError::invalid("maximize_stochastic needs method adaptive_stochastic"));
    }
    let mut ascent = StochasticAscent::new(init, n, config)?;
    let (converged, iterations, window_mean) = ascent.run(&mut objective_batch, config)?;
    Ok(FitResult {
        theta: ParamVec::new(ascent.theta)?,
        objective_value: window_mean,
        iterations,
        converged,
        grad_norm_final: norm2(&ascent.grad),
    })
}

/// Nelder-Mead simplex maximization of `objective`.
///
/// Coefficients: reflection 1, expansion 2, contraction 0.5, shrink 0.5.
/// The initial simplex is `init` plus one vertex per coordinate offset by
/// `0.05·(1 + |θⱼ|)`. Vertices with equal values keep index order.
/// Non-finite values are treated as the worst possible.
pub fn nelder_mead<F>(objective: F, init: &[f64], config: &OptimizerConfig) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let d = init.len();
    if d > config.nelder_mead_cap {
        return Err(IdmError::Capability {
            what: "parameter count for Nelder-Mead",
            limit: config.nelder_mead_cap,
            got: d,
        });
    }
    if d == 0 {
        return Err(IdmError::invalid("Nelder-Mead needs at least one parameter"));
    }
    if config.max_iters == 0 || !(config.convergence_tol > 0.0) {
        return Err(IdmError::invalid("max_iters and convergence_tol must be positive"));
    }
    // Internally minimize the negated objective.
    let cost = |x: &[f64]| -> f64 {
        match finite_eval(objective(x)) {
            Some(v) => -v,
            None => f64::INFINITY,
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    simplex.push(init.to_vec());
    for j in 0..d {
        let mut v = init.to_vec();
        v[j] += 0.05 * (1.0 + abs(init[j]));
        simplex.push(v);
    }
    let mut costs: Vec<f64> = simplex.iter().map(|v| cost(v)).collect();
    if !costs[0].is_finite() {
        return Err(IdmError::numeric("objective is not finite at the initial point"));
    }

    let diameter = |s: &[Vec<f64>]| -> f64 {
        let mut best = 0.0f64;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                let dist: f64 = s[i].iter().zip(&s[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.max(dist);
            }
        }
        sqrt(best)
    };

    let mut centroid = vec![0.0; d];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        // Order by cost; the stable sort breaks ties by vertex index.
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| costs[a].partial_cmp(&costs[b]).unwrap_or(core::cmp::Ordering::Equal));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        costs = idx.iter().map(|&i| costs[i]).collect();

        if diameter(&simplex) < config.convergence_tol {
            converged = true;
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..d] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / d as f64;
            }
        }
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d])
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let reflected = along(1.0);
        let fr = cost(&reflected);
        if fr < costs[0] {
            let expanded = along(2.0);
            let fe = cost(&expanded);
            if fe < fr {
                simplex[d] = expanded;
                costs[d] = fe;
            } else {
                simplex[d] = reflected;
                costs[d] = fr;
            }
            continue;
        }
        if fr < costs[d - 1] {
            simplex[d] = reflected;
            costs[d] = fr;
            continue;
        }
        let (contracted, fc) = if fr < costs[d] {
            let c = along(0.5);
            let fc = cost(&c);
            (c, fc)
        } else {
            let c = along(-0.5);
            let fc = cost(&c);
            (c, fc)
        };
        if fc < fr.min(costs[d]) {
            simplex[d] = contracted;
            costs[d] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=d {
            for (x, b) in simplex[i].iter_mut().zip(&best) {
                *x = b + 0.5 * (*x - b);
            }
            costs[i] = cost(&simplex[i]);
        }
    }

    let best = (0..=d)
        .min_by(|&a, &b| costs[a].partial_cmp(&costs[b]).unwrap_or(core::cmp::Ordering::Equal))
        .unwrap();
    Ok(FitResult {
        theta: ParamVec::new(simplex[best].clone())?,
        objective_value: -costs[best],
        iterations,
        converged,
        grad_norm_final: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_config() -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: LearningRate::constant(0.1),
            convergence_tol: 1e-10,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn quadratic_bowl() {
        let obj = FnObjective {
            value: |t: &[f64]| -(t[0] - 3.0) * (t[0] - 3.0),
            gradient: |t: &[f64]| vec![-2.0 * (t[0] - 3.0)],
        };
        let fit = maximize(&obj, &[0.0], &quad_config()).unwrap();
        assert!(fit.converged);
        assert!((fit.theta[0] - 3.0).abs() < 1e-6);
        assert!(fit.grad_norm_final <= 1e-10 * (1.0 + fit.objective_value.abs()));
    }

    #[test]
    fn lbfgs_ill_conditioned_quadratic() {
        // f = -½(θ₀² + 1e4·θ₁²) + θ₀ + θ₁, optimum (1, 1e-4).
        let obj = FnObjective {
            value: |t: &[f64]| -0.5 * (t[0] * t[0] + 1e4 * t[1] * t[1]) + t[0] + t[1],
            gradient: |t: &[f64]| vec![1.0 - t[0], 1.0 - 1e4 * t[1]],
        };
        let config = OptimizerConfig {
            method: Method::Lbfgs,
            convergence_tol: 1e-12,
            ..OptimizerConfig::default()
        };
        let fit = maximize(&obj, &[5.0, -3.0], &config).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations < 50, "{}", fit.iterations);
        assert!((fit.theta[0] - 1.0).abs() < 1e-10 && (fit.theta[1] - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn lbfgs_rosenbrock() {
        let obj = FnObjective {
            value: |t: &[f64]| -((1.0 - t[0]).powi(2) + 100.0 * (t[1] - t[0] * t[0]).powi(2)),
            gradient: |t: &[f64]| {
                vec![
                    2.0 * (1.0 - t[0]) + 400.0 * t[0] * (t[1] - t[0] * t[0]),
                    -200.0 * (t[1] - t[0] * t[0]),
                ]
            },
        };
        let config = OptimizerConfig {
            method: Method::Lbfgs,
            convergence_tol: 1e-10,
            max_iters: 1000,
            ..OptimizerConfig::default()
        };
        let fit = maximize(&obj, &[-1.2, 1.0], &config).unwrap();
        assert!(fit.converged);
        assert!((fit.theta[0] - 1.0).abs() < 1e-8 && (fit.theta[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn max_iters_is_not_an_error() {
        let obj = FnObjective {
            value: |t: &[f64]| -(t[0] - 3.0) * (t[0] - 3.0),
            gradient: |t: &[f64]| vec![-2.0 * (t[0] - 3.0)],
        };
        let cfg = OptimizerConfig {
            max_iters: 2,
            learning_rate: LearningRate::constant(1e-3),
            ..quad_config()
        };
        let fit = maximize(&obj, &[0.0], &cfg).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 2);
    }

    #[test]
    fn non_finite_objective_reports_last_iterate() {
        // Blows up once θ passes 1.
        let obj = FnObjective {
            value: |t: &[f64]| if t[0] > 1.0 { f64::NAN } else { t[0] },
            gradient: |_: &[f64]| vec![1.0],
        };
        let cfg = OptimizerConfig {
            backtracking: false,
            learning_rate: LearningRate::constant(0.4),
            ..quad_config()
        };
        match maximize(&obj, &[0.0], &cfg) {
            Err(IdmError::NumericFailure { last_finite: Some(last), .. }) => {
                assert!((last[0] - 0.8).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let obj = FnObjective {
            value: |t: &[f64]| -t[0] * t[0],
            gradient: |t: &[f64]| vec![-2.0 * t[0]],
        };
        for cfg in [
            OptimizerConfig { max_iters: 0, ..quad_config() },
            OptimizerConfig { convergence_tol: 0.0, ..quad_config() },
            OptimizerConfig { learning_rate: LearningRate::constant(-1.0), ..quad_config() },
        ] {
            assert!(matches!(maximize(&obj, &[1.0], &cfg), Err(IdmError::InvalidArgument(_))));
        }
        let stoch = OptimizerConfig {
            method: Method::AdaptiveStochastic,
            minibatch_size: 11,
            ..quad_config()
        };
        assert!(stoch.validate(Some(10)).is_err());
        assert!(stoch.validate(Some(11)).is_ok());
    }

    #[test]
    fn nelder_mead_sphere() {
        let cfg = OptimizerConfig {
            method: Method::NelderMead,
            convergence_tol: 1e-8,
            ..OptimizerConfig::default()
        };
        let fit = nelder_mead(|t: &[f64]| Ok(-(t[0] * t[0] + t[1] * t[1])), &[1.0, 1.0], &cfg).unwrap();
        assert!(fit.converged);
        assert!(fit.theta[0].abs() < 1e-4 && fit.theta[1].abs() < 1e-4);
        assert!(fit.grad_norm_final.is_nan());
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let cfg = OptimizerConfig {
            method: Method::NelderMead,
            convergence_tol: 1e-10,
            max_iters: 20_000,
            ..OptimizerConfig::default()
        };
        let rosen = |t: &[f64]| Ok(-((1.0 - t[0]).powi(2) + 100.0 * (t[1] - t[0] * t[0]).powi(2)));
        let fit = nelder_mead(rosen, &[-1.2, 1.0], &cfg).unwrap();
        assert!((fit.theta[0] - 1.0).abs() < 1e-3, "{:?}", fit.theta);
        assert!((fit.theta[1] - 1.0).abs() < 1e-3, "{:?}", fit.theta);
    }

    #[test]
    fn nelder_mead_cap() {
        let cfg = OptimizerConfig {
            method: Method::NelderMead,
            nelder_mead_cap: 2,
            ..OptimizerConfig::default()
        };
        let err = nelder_mead(|_: &[f64]| Ok(0.0), &[0.0; 3], &cfg).unwrap_err();
        assert!(matches!(err, IdmError::Capability { .. }));
    }

    #[test]
    fn schedules() {
        let r = LearningRate {
            initial: 1.0,
            decay: Decay::InverseTime { rate: 1.0 },
        };
        assert_eq!(r.at(3), 0.25);
        let e = LearningRate {
            initial: 2.0,
            decay: Decay::Exponential { factor: 0.5 },
        };
        assert_eq!(e.at(2), 0.5);
    }
}
