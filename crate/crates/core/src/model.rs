//! Parametric predictors, likelihood families and their derivatives.
//!
//! A [`LikelihoodModel`] pairs a predictor `h_θ(x)` (affine map or tanh MLP)
//! with a conditional density `g(y; h_θ(x))`. The objective everywhere in
//! this crate is the unnormalized sum `Σᵢ log f(zᵢ; θ)`.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Deref;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{IdmError, Result};
use crate::math::{abs, exp, lgamma, log, log_sum_exp, sigmoid, softplus, tanh};
use crate::rng::Stream;

/// Largest parameter count for which a dense Hessian is formed by default.
pub const DEFAULT_HESSIAN_CAP: usize = 10_000;

/// Model parameter vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVec(Vec<f64>);

impl ParamVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(IdmError::invalid(alloc::format!(
                "parameter {i} is not finite"
            )));
        }
        Ok(ParamVec(values))
    }

    pub fn zeros(d: usize) -> Self {
        ParamVec(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ParamVec {
    type Error = IdmError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ParamVec::new(v)
    }
}

impl From<ParamVec> for Vec<f64> {
    fn from(p: ParamVec) -> Vec<f64> {
        p.0
    }
}

/// Observations `zᵢ = (xᵢ, yᵢ)` stored row-major. Class responses are
/// integer-valued `f64`s.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_dim: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn from_flat(input_dim: usize, features: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if targets.is_empty() {
            return Err(IdmError::invalid("dataset must contain at least one row"));
        }
        if features.len() != input_dim * targets.len() {
            return Err(IdmError::invalid(alloc::format!(
                "feature buffer has {} values, expected {} rows x {} columns",
                features.len(),
                targets.len(),
                input_dim
            )));
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(IdmError::invalid("dataset contains non-finite values"));
        }
        Ok(Dataset {
            input_dim,
            features,
            targets,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let input_dim = rows.first().map_or(0, Vec::len);
        if rows.len() != targets.len() {
            return Err(IdmError::invalid("row count and target count differ"));
        }
        if rows.iter().any(|r| r.len() != input_dim) {
            return Err(IdmError::invalid("feature rows have differing dimension"));
        }
        Dataset::from_flat(input_dim, rows.concat(), targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rows picked by `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.x(i));
            targets.push(self.targets[i]);
        }
        Dataset {
            input_dim: self.input_dim,
            features,
            targets,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Linear,
    Mlp,
}

/// Predictor architecture. Hidden layers use tanh; the output layer is affine.
///
/// With `powers = p > 1` every raw input coordinate `x` is expanded to
/// `x, x², …, xᵖ` before the first layer, so a linear predictor becomes a
/// polynomial regression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub powers: usize,
}

fn one() -> usize {
    1
}

fn is_one(p: &usize) -> bool {
    *p == 1
}

impl PredictorSpec {
    pub fn linear() -> Self {
        PredictorSpec {
            kind: PredictorKind::Linear,
            hidden: Vec::new(),
            powers: 1,
        }
    }

    pub fn mlp(hidden: Vec<usize>) -> Self {
        PredictorSpec {
            kind: PredictorKind::Mlp,
            hidden,
            powers: 1,
        }
    }

    pub fn with_powers(mut self, powers: usize) -> Self {
        self.powers = powers;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum Family {
    GaussianKnownVar { sigma2: f64 },
    /// Objective `-½ Σ (y - h)²`; the likelihood scale is restored in `idm`.
    GaussianSse,
    BernoulliLogit,
    CategoricalSoftmax { classes: usize },
    PoissonLog,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::GaussianKnownVar { .. } => "gaussian_known_var",
            Family::GaussianSse => "gaussian_sse",
            Family::BernoulliLogit => "bernoulli_logit",
            Family::CategoricalSoftmax { .. } => "categorical_softmax",
            Family::PoissonLog => "poisson_log",
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Family::CategoricalSoftmax { classes } => *classes,
            _ => 1,
        }
    }

    fn check_target(&self, y: f64) -> Result<()> {
        let ok = match self {
            Family::GaussianKnownVar { .. } | Family::GaussianSse => true,
            Family::BernoulliLogit => y == 0.0 || y == 1.0,
            Family::CategoricalSoftmax { classes } => {
                y >= 0.0 && libm::trunc(y) == y && (y as usize) < *classes
            }
            Family::PoissonLog => y >= 0.0 && libm::trunc(y) == y,
        };
        if ok {
            Ok(())
        } else {
            Err(IdmError::invalid(alloc::format!(
                "response {y} is outside the domain of the {} family",
                self.name()
            )))
        }
    }

    /// `log g(y; η)`, writing `∂/∂η` into `dlog`.
    fn log_density(&self, eta: &[f64], y: f64, dlog: &mut [f64]) -> f64 {
        match *self {
            Family::GaussianKnownVar { sigma2 } => {
                let r = y - eta[0];
                dlog[0] = r / sigma2;
                -0.5 * log(2.0 * PI * sigma2) - 0.5 * r * r / sigma2
            }
            Family::GaussianSse => {
                let r = y - eta[0];
                dlog[0] = r;
                -0.5 * r * r
            }
            Family::BernoulliLogit => {
                dlog[0] = y - sigmoid(eta[0]);
                y * eta[0] - softplus(eta[0])
            }
            Family::CategoricalSoftmax { .. } => {
                let lse = log_sum_exp(eta);
                let class = y as usize;
                for (k, (d, &e)) in dlog.iter_mut().zip(eta).enumerate() {
                    *d = f64::from(u8::from(k == class)) - exp(e - lse);
                }
                eta[class] - lse
            }
            Family::PoissonLog => {
                let mu = exp(eta[0]);
                dlog[0] = y - mu;
                y * eta[0] - mu - lgamma(y + 1.0)
            }
        }
    }

    /// Mean response `E[y | η]` (class probabilities for softmax).
    fn mean(&self, eta: &[f64], out: &mut [f64]) {
        match self {
            Family::GaussianKnownVar { .. } | Family::GaussianSse => out[0] = eta[0],
            Family::BernoulliLogit => out[0] = sigmoid(eta[0]),
            Family::PoissonLog => out[0] = exp(eta[0]),
            Family::CategoricalSoftmax { .. } => {
                let lse = log_sum_exp(eta);
                for (o, &e) in out.iter_mut().zip(eta) {
                    *o = exp(e - lse);
                }
            }
        }
    }
}

/// Serializable half of a [`LikelihoodModel`]; the input dimension comes
/// from the data it is paired with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub predictor: PredictorSpec,
    pub family: Family,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodModel {
    spec: ModelSpec,
    /// Layer widths from input to output; `dims[0]` is the expanded input width.
    dims: Vec<usize>,
    raw_dim: usize,
    param_count: usize,
}

/// Per-call forward/backward buffers.
struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    dlog: Vec<f64>,
}

impl LikelihoodModel {
    pub fn new(predictor: PredictorSpec, family: Family, input_dim: usize) -> Result<Self> {
        Self::from_spec(ModelSpec { predictor, family }, input_dim)
    }

    pub fn from_spec(spec: ModelSpec, input_dim: usize) -> Result<Self> {
        match spec.family {
            Family::GaussianKnownVar { sigma2 } if !(sigma2 > 0.0 && sigma2.is_finite()) => {
                return Err(IdmError::invalid("gaussian_known_var requires sigma2 > 0"));
            }
            Family::CategoricalSoftmax { classes } if classes < 2 => {
                return Err(IdmError::invalid("categorical_softmax requires at least 2 classes"));
            }
            _ => {}
        }
        let hidden: &[usize] = match spec.predictor.kind {
            PredictorKind::Linear => {
                if !spec.predictor.hidden.is_empty() {
                    return Err(IdmError::invalid("linear predictor takes no hidden layers"));
                }
                &[]
            }
            PredictorKind::Mlp => {
                if spec.predictor.hidden.is_empty() || spec.predictor.hidden.contains(&0) {
                    return Err(IdmError::invalid(
                        "mlp predictor needs at least one hidden layer of positive width",
                    ));
                }
                &spec.predictor.hidden
            }
        };
        let powers = spec.predictor.powers;
        if powers == 0 {
            return Err(IdmError::invalid("predictor powers must be at least 1"));
        }
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input_dim * powers);
        dims.extend_from_slice(hidden);
        dims.push(spec.family.output_dim());
        let param_count = dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(LikelihoodModel {
            spec,
            dims,
            raw_dim: input_dim,
            param_count,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    /// Raw input dimension, before any power expansion.
    pub fn input_dim(&self) -> usize {
        self.raw_dim
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Number of parameters `d`. Each unit owns a bias followed by its
    /// incoming weights, so a linear model with one output is `θᵀ[1; x]`.
    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// Seeded initialization, iid uniform on (-0.1, 0.1).
    pub fn init_params(&self, seed: u64) -> ParamVec {
        let mut s = Stream::new(seed);
        ParamVec((0..self.param_count).map(|_| s.uniform_range(-0.1, 0.1)).collect())
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count {
            return Err(IdmError::invalid(alloc::format!(
                "parameter vector has length {}, model expects {}",
                theta.len(),
                self.param_count
            )));
        }
        Ok(())
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.input_dim() != self.input_dim() {
            return Err(IdmError::invalid(alloc::format!(
                "data has {} features, model expects {}",
                data.input_dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(IdmError::invalid(alloc::format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn scratch(&self) -> Scratch {
        let widest = self.dims.iter().copied().max().unwrap_or(1);
        Scratch {
            acts: self.dims.iter().map(|&w| vec![0.0; w]).collect(),
            delta: Vec::with_capacity(widest),
            delta_prev: Vec::with_capacity(widest),
            dlog: vec![0.0; self.output_dim()],
        }
    }

    fn forward(&self, theta: &[f64], x: &[f64], s: &mut Scratch) {
        let powers = self.spec.predictor.powers;
        if powers == 1 {
            s.acts[0].copy_from_slice(x);
        } else {
            for (chunk, &xi) in s.acts[0].chunks_mut(powers).zip(x) {
                let mut v = xi;
                for slot in chunk {
                    *slot = v;
                    v *= xi;
                }
            }
        }
        let layers = self.dims.len() - 1;
        let mut offset = 0;
        for l in 0..layers {
            let (input, rest) = s.acts.split_at_mut(l + 1);
            let input = &input[l];
            let output = &mut rest[0];
            let fan_in = input.len();
            for (j, out) in output.iter_mut().enumerate() {
                let unit = &theta[offset + j * (fan_in + 1)..offset + (j + 1) * (fan_in + 1)];
                let mut z = unit[0];
                for (w, a) in unit[1..].iter().zip(input.iter()) {
                    z += w * a;
                }
                *out = if l + 1 < layers { tanh(z) } else { z };
            }
            offset += output.len() * (fan_in + 1);
        }
    }

    /// Accumulates `scale · (∂η/∂θ)ᵀ upstream` into `grad`, where `upstream`
    /// sits in `s.delta` and the forward pass is cached in `s`.
    fn backward(&self, theta: &[f64], s: &mut Scratch, grad: &mut [f64]) {
        let layers = self.dims.len() - 1;
        let mut end = self.param_count;
        for l in (0..layers).rev() {
            let fan_in = self.dims[l];
            let width = self.dims[l + 1];
            let start = end - width * (fan_in + 1);
            let input = &s.acts[l];
            for j in 0..width {
                let dj = s.delta[j];
                if dj == 0.0 {
                    continue;
                }
                let base = start + j * (fan_in + 1);
                grad[base] += dj;
                for (g, a) in grad[base + 1..base + 1 + fan_in].iter_mut().zip(input) {
                    *g += dj * a;
                }
            }
            if l > 0 {
                s.delta_prev.clear();
                s.delta_prev.resize(fan_in, 0.0);
                for j in 0..width {
                    let dj = s.delta[j];
                    if dj == 0.0 {
                        continue;
                    }
                    let base = start + j * (fan_in + 1) + 1;
                    for (dp, w) in s.delta_prev.iter_mut().zip(&theta[base..base + fan_in]) {
                        *dp += dj * w;
                    }
                }
                for (dp, a) in s.delta_prev.iter_mut().zip(input) {
                    *dp *= 1.0 - a * a;
                }
                core::mem::swap(&mut s.delta, &mut s.delta_prev);
            }
            end = start;
        }
    }

    fn accumulate<I>(&self, theta: &[f64], data: &Dataset, rows: I, mut grad: Option<&mut [f64]>) -> Result<f64>
    where
        I: IntoIterator<Item = usize>,
    {
        self.check_theta(theta)?;
        self.check_data(data)?;
        let family = self.spec.family;
        let mut s = self.scratch();
        let mut total = 0.0;
        let last = self.dims.len() - 1;
        for i in rows {
            let y = data.y(i);
            family.check_target(y)?;
            self.forward(theta, data.x(i), &mut s);
            let lf = family.log_density(&s.acts[last], y, &mut s.dlog);
            total += lf;
            if let Some(g) = grad.as_deref_mut() {
                s.delta.clear();
                s.delta.extend_from_slice(&s.dlog);
                self.backward(theta, &mut s, g);
            }
        }
        if !total.is_finite() {
            return Err(IdmError::numeric("log-likelihood is not finite"));
        }
        if let Some(g) = grad {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(IdmError::numeric("log-likelihood gradient is not finite"));
            }
        }
        Ok(total)
    }

    /// `Σᵢ log f(zᵢ; θ)`, summed in row order.
    pub fn log_likelihood(&self, theta: &[f64], data: &Dataset) -> Result<f64> {
        self.accumulate(theta, data, 0..data.len(), None)
    }

    pub fn grad_log_likelihood(&self, theta: &[f64], data: &Dataset) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.param_count];
        self.accumulate(theta, data, 0..data.len(), Some(&mut g))?;
        Ok(g)
    }

    /// Objective and gradient in one pass; `grad` is overwritten.
    pub fn value_and_grad(&self, theta: &[f64], data: &Dataset, grad: &mut [f64]) -> Result<f64> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.accumulate(theta, data, 0..data.len(), Some(grad))
    }

    /// Objective and gradient restricted to `rows` (unscaled sum).
    pub fn value_and_grad_rows(
        &self,
        theta: &[f64],
        data: &Dataset,
        rows: &[usize],
        grad: &mut [f64],
    ) -> Result<f64> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.accumulate(theta, data, rows.iter().copied(), Some(grad))
    }

    /// Per-row log densities `log f(zᵢ; θ)`.
    pub fn log_densities(&self, theta: &[f64], data: &Dataset) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        self.check_data(data)?;
        let mut s = self.scratch();
        let last = self.dims.len() - 1;
        (0..data.len())
            .map(|i| {
                let y = data.y(i);
                self.spec.family.check_target(y)?;
                self.forward(theta, data.x(i), &mut s);
                Ok(self.spec.family.log_density(&s.acts[last], y, &mut s.dlog))
            })
            .collect()
    }

    /// `∇² Σᵢ log f(zᵢ; θ)` by central differences of the analytic gradient
    /// with step `1e-6·(1 + |θⱼ|)`, then symmetrized.
    pub fn hessian_log_likelihood(&self, theta: &[f64], data: &Dataset, cap: usize) -> Result<DMatrix<f64>> {
        let d = self.param_count;
        if d > cap {
            return Err(IdmError::Capability {
                what: "parameter count for dense Hessian",
                limit: cap,
                got: d,
            });
        }
        self.check_theta(theta)?;
        let mut h = DMatrix::zeros(d, d);
        let mut probe = theta.to_vec();
        let mut g_plus = vec![0.0; d];
        let mut g_minus = vec![0.0; d];
        for j in 0..d {
            let step = 1e-6 * (1.0 + abs(theta[j]));
            probe[j] = theta[j] + step;
            self.value_and_grad(&probe, data, &mut g_plus)?;
            probe[j] = theta[j] - step;
            self.value_and_grad(&probe, data, &mut g_minus)?;
            probe[j] = theta[j];
            let width = 2.0 * step;
            for i in 0..d {
                h[(i, j)] = (g_plus[i] - g_minus[i]) / width;
            }
        }
        Ok((&h + h.transpose()) * 0.5)
    }

    /// Raw predictor output `h_θ(x)`.
    pub fn predict(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        self.check_x(x)?;
        let mut s = self.scratch();
        self.forward(theta, x, &mut s);
        Ok(s.acts.pop().unwrap())
    }

    /// Mean response at `x`: identity for Gaussian families, the logistic
    /// probability for Bernoulli, the rate for Poisson, class probabilities
    /// for softmax.
    pub fn mean_response(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let eta = self.predict(theta, x)?;
        let mut out = vec![0.0; eta.len()];
        self.spec.family.mean(&eta, &mut out);
        Ok(out)
    }

    /// Value and θ-gradient of output `k` of the mean response at `x`.
    pub fn mean_response_grad(&self, theta: &[f64], x: &[f64], k: usize, grad: &mut [f64]) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_x(x)?;
        if k >= self.output_dim() {
            return Err(IdmError::invalid("response index out of range"));
        }
        let mut s = self.scratch();
        self.forward(theta, x, &mut s);
        let eta = s.acts.last().unwrap().clone();
        let mut mean = vec![0.0; eta.len()];
        self.spec.family.mean(&eta, &mut mean);
        // ∂mean_k/∂η
        s.delta.clear();
        match self.spec.family {
            Family::GaussianKnownVar { .. } | Family::GaussianSse => s.delta.push(1.0),
            Family::BernoulliLogit => s.delta.push(mean[0] * (1.0 - mean[0])),
            Family::PoissonLog => s.delta.push(mean[0]),
            Family::CategoricalSoftmax { .. } => {
                s.delta
                    .extend(mean.iter().enumerate().map(|(j, &pj)| {
                        mean[k] * (f64::from(u8::from(j == k)) - pj)
                    }));
            }
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.backward(theta, &mut s, grad);
        Ok(mean[k])
    }

    /// Residual variance `(1/n) Σ (y - h_θ(x))²` of a squared-error fit.
    pub fn sigma2_hat(&self, theta: &[f64], data: &Dataset) -> Result<f64> {
        if self.spec.family != Family::GaussianSse {
            return Err(IdmError::WrongFamily {
                op: "sigma2_hat",
                family: self.spec.family.name(),
            });
        }
        if data.is_empty() {
            return Err(IdmError::invalid("sigma2_hat needs at least one row"));
        }
        let half_sse = -self.log_likelihood(theta, data)?;
        Ok(2.0 * half_sse / data.len() as f64)
    }

    /// The log-likelihood on its natural scale. For `gaussian_sse` this is
    /// the Gaussian log-likelihood with the residual variance profiled out,
    /// `-(n/2)(1 + log(2π σ̂²))`; for every other family it is
    /// [`log_likelihood`](Self::log_likelihood).
    pub fn likelihood_objective(&self, theta: &[f64], data: &Dataset) -> Result<f64> {
        match self.spec.family {
            Family::GaussianSse => {
                let s2 = self.sigma2_hat(theta, data)?;
                if s2 <= 0.0 {
                    return Err(IdmError::DegenerateFit("zero residual variance".to_string()));
                }
                let n = data.len() as f64;
                Ok(-0.5 * n * (1.0 + log(2.0 * PI * s2)))
            }
            _ => self.log_likelihood(theta, data),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn gaussian_const(sigma2: f64) -> LikelihoodModel {
        LikelihoodModel::new(PredictorSpec::linear(), Family::GaussianKnownVar { sigma2 }, 0).unwrap()
    }

    fn const_data(ys: &[f64]) -> Dataset {
        Dataset::from_flat(0, Vec::new(), ys.to_vec()).unwrap()
    }

    fn random_data(n: usize, p: usize, family: Family, seed: u64) -> Dataset {
        let mut s = Stream::new(seed);
        let features: Vec<f64> = (0..n * p).map(|_| s.normal()).collect();
        let targets = (0..n)
            .map(|_| match family {
                Family::GaussianKnownVar { .. } | Family::GaussianSse => s.normal(),
                Family::BernoulliLogit => f64::from(u8::from(s.uniform() < 0.4)),
                Family::CategoricalSoftmax { classes } => s.index(classes) as f64,
                Family::PoissonLog => s.index(5) as f64,
            })
            .collect();
        Dataset::from_flat(p, features, targets).unwrap()
    }

    #[test]
    fn standard_normal_density_at_zero() {
        let m = gaussian_const(1.0);
        let ll = m.log_likelihood(&[0.0], &const_data(&[0.0])).unwrap();
        assert!((ll + 0.5 * log(2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn symmetric_logit_gives_log_half() {
        let m = LikelihoodModel::new(PredictorSpec::linear(), Family::BernoulliLogit, 1).unwrap();
        let data = Dataset::from_rows(&[vec![3.0], vec![-1.5]], vec![1.0, 1.0]).unwrap();
        let ll = m.log_likelihood(&[0.0, 0.0], &data).unwrap();
        assert!((ll - 2.0 * log(0.5)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_mean_hand_sum() {
        let m = gaussian_const(1.0);
        let ys = [1.0, 2.5, -0.5];
        let mu = 0.7;
        let hand = -0.5 * ((1.0f64 - 0.7).powi(2) + (2.5f64 - 0.7).powi(2) + (-0.5f64 - 0.7).powi(2))
            - 1.5 * log(2.0 * PI);
        let ll = m.log_likelihood(&[mu], &const_data(&ys)).unwrap();
        assert!((ll - hand).abs() < 1e-12);
    }

    #[test]
    fn gradient_of_gaussian_mean() {
        let m = gaussian_const(1.0);
        let g = m.grad_log_likelihood(&[0.0], &const_data(&[2.0])).unwrap();
        assert_eq!(g, vec![2.0]);
    }

    #[test]
    fn dimension_mismatch_is_invalid_argument() {
        let m = gaussian_const(1.0);
        let err = m.log_likelihood(&[0.0, 1.0], &const_data(&[2.0])).unwrap_err();
        assert!(matches!(err, IdmError::InvalidArgument(_)));
        let m1 = LikelihoodModel::new(PredictorSpec::linear(), Family::GaussianSse, 1).unwrap();
        assert!(m1.log_likelihood(&[0.0, 1.0], &const_data(&[2.0])).is_err());
        assert!(m1.predict(&[0.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn out_of_domain_targets_rejected() {
        let m = LikelihoodModel::new(
            PredictorSpec::linear(),
            Family::CategoricalSoftmax { classes: 3 },
            0,
        )
        .unwrap();
        let theta = vec![0.0; 3];
        assert!(m.log_likelihood(&theta, &const_data(&[3.0])).is_err());
        assert!(m.log_likelihood(&theta, &const_data(&[2.0])).is_ok());
        let b = LikelihoodModel::new(PredictorSpec::linear(), Family::BernoulliLogit, 0).unwrap();
        assert!(b.log_likelihood(&[0.0], &const_data(&[0.5])).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(LikelihoodModel::new(PredictorSpec::linear(), Family::GaussianKnownVar { sigma2: 0.0 }, 1).is_err());
        assert!(LikelihoodModel::new(PredictorSpec::mlp(vec![]), Family::GaussianSse, 1).is_err());
        assert!(LikelihoodModel::new(PredictorSpec::mlp(vec![3, 0]), Family::GaussianSse, 1).is_err());
        assert!(ParamVec::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn param_counts() {
        let m = LikelihoodModel::new(PredictorSpec::mlp(vec![50]), Family::GaussianSse, 1).unwrap();
        assert_eq!(m.param_count(), 50 * 2 + 51);
        let c = LikelihoodModel::new(
            PredictorSpec::linear(),
            Family::CategoricalSoftmax { classes: 4 },
            3,
        )
        .unwrap();
        assert_eq!(c.param_count(), 16);
    }

    #[test]
    fn power_expansion_is_polynomial_regression() {
        let m = LikelihoodModel::new(PredictorSpec::linear().with_powers(3), Family::GaussianSse, 2).unwrap();
        assert_eq!((m.input_dim(), m.param_count()), (2, 7));
        let theta = [1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.25];
        let x = [2.0, -2.0];
        let want = 1.0 + 2.0 * 2.0 + 3.0 * 4.0 + 4.0 * 8.0 - 1.0 * -2.0 + 0.5 * 4.0 + 0.25 * -8.0;
        assert_eq!(m.predict(&theta, &x).unwrap(), vec![want]);
        assert!(LikelihoodModel::new(PredictorSpec::linear().with_powers(0), Family::GaussianSse, 1).is_err());
        let spec: PredictorSpec = serde_json::from_str(r#"{"kind":"linear"}"#).unwrap();
        assert_eq!(spec.powers, 1);
    }

    #[test]
    fn predict_affine_and_zero_mlp() {
        let m = LikelihoodModel::new(PredictorSpec::linear(), Family::GaussianSse, 1).unwrap();
        assert_eq!(m.predict(&[1.0, 2.0], &[3.0]).unwrap(), vec![7.0]);
        let mlp = LikelihoodModel::new(PredictorSpec::mlp(vec![4, 3]), Family::GaussianSse, 2).unwrap();
        let zeros = vec![0.0; mlp.param_count()];
        assert_eq!(mlp.predict(&zeros, &[5.0, -2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn mlp_hand_forward_pass() {
        // 1 input, 2 tanh units, 1 output.
        // unit1: b=0.1, w=0.5; unit2: b=-0.2, w=1.5; out: b=0.3, w=(2.0, -1.0)
        let m = LikelihoodModel::new(PredictorSpec::mlp(vec![2]), Family::GaussianSse, 1).unwrap();
        let theta = [0.1, 0.5, -0.2, 1.5, 0.3, 2.0, -1.0];
        let x = 0.5;
        let h1 = libm::tanh(0.1 + 0.5 * x);
        let h2 = libm::tanh(-0.2 + 1.5 * x);
        let expected = 0.3 + 2.0 * h1 - 1.0 * h2;
        let got = m.predict(&theta, &[x]).unwrap()[0];
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.472_230_877_482_429_2).abs() < 1e-12);
    }

    #[test]
    fn constant_hessian_is_minus_n() {
        let m = gaussian_const(1.0);
        let h = m.hessian_log_likelihood(&[0.3], &const_data(&[1.0, 2.0, 3.0, 4.0]), DEFAULT_HESSIAN_CAP).unwrap();
        assert!((h[(0, 0)] + 4.0).abs() < 1e-6);
    }

    #[test]
    fn hessian_cap_enforced() {
        let m = LikelihoodModel::new(PredictorSpec::linear(), Family::GaussianSse, 4).unwrap();
        let data = random_data(5, 4, Family::GaussianSse, 1);
        let err = m.hessian_log_likelihood(&[0.0; 5], &data, 4).unwrap_err();
        assert!(matches!(err, IdmError::Capability { .. }));
    }

    #[test]
    fn logistic_hessian_symmetric() {
        let m = LikelihoodModel::new(PredictorSpec::linear(), Family::BernoulliLogit, 2).unwrap();
        let data = random_data(40, 2, Family::BernoulliLogit, 2);
        let h = m.hessian_log_likelihood(&[0.2, -0.4, 0.9], &data, DEFAULT_HESSIAN_CAP).unwrap();
        let asym = (&h - h.transpose()).amax();
        assert!(asym <= 1e-8 * (1.0 + h.amax()));
    }

    #[test]
    fn softmax_stable_for_large_logits() {
        let m = LikelihoodModel::new(
            PredictorSpec::linear(),
            Family::CategoricalSoftmax { classes: 3 },
            0,
        )
        .unwrap();
        let ll = m.log_likelihood(&[1000.0, -1000.0, 999.0], &const_data(&[1.0, 0.0])).unwrap();
        assert!(ll.is_finite());
    }

    #[test]
    fn sigma2_hat_cases() {
        let m = LikelihoodModel::new(PredictorSpec::linear(), Family::GaussianSse, 0).unwrap();
        let ys = [1.0, 2.0, 4.0, 5.0];
        assert_eq!(m.sigma2_hat(&[3.0], &const_data(&ys)).unwrap(), 2.5);
        assert_eq!(m.sigma2_hat(&[2.0], &const_data(&[2.0, 2.0])).unwrap(), 0.0);
        let g = gaussian_const(1.0);
        assert!(matches!(
            g.sigma2_hat(&[0.0], &const_data(&ys)),
            Err(IdmError::WrongFamily { .. })
        ));
    }

    #[test]
    fn mean_response_gradient_matches_finite_difference() {
        for family in [
            Family::BernoulliLogit,
            Family::PoissonLog,
            Family::CategoricalSoftmax { classes: 3 },
            Family::GaussianSse,
        ] {
            let m = LikelihoodModel::new(PredictorSpec::mlp(vec![3]), family, 2).unwrap();
            let theta: Vec<f64> = m.init_params(5).into_inner().iter().map(|t| t * 5.0).collect();
            let x = [0.4, -1.1];
            let k = m.output_dim() - 1;
            let mut g = vec![0.0; m.param_count()];
            m.mean_response_grad(&theta, &x, k, &mut g).unwrap();
            for j in 0..theta.len() {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[j] += 1e-6;
                tm[j] -= 1e-6;
                let fd = (m.mean_response(&tp, &x).unwrap()[k] - m.mean_response(&tm, &x).unwrap()[k]) / 2e-6;
                assert!((fd - g[j]).abs() <= 1e-6 * (1.0 + fd.abs()), "{family:?} {j}");
            }
        }
    }
}
