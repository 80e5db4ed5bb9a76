//! Seeded synthetic data-generating processes and evaluation functions.
//!
//! Generation protocol: one [`Stream`] per dataset seeded with `spec.seed`;
//! rows are produced in order, each drawing its features first and then its
//! noise. Gaussian draws use Box-Muller.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{IdmError, Result};
use crate::idm::EvalFn;
use crate::math::{dot, exp, log, sigmoid, sin, sqrt};
use crate::model::{Dataset, LikelihoodModel};
use crate::rng::Stream;

/// Left and right input ranges of the sin task; the gap between them is
/// never sampled.
pub const SIN_RANGES: [(f64, f64); 2] = [(-1.5, -0.7), (0.35, 1.15)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DgpKind {
    /// `x ~ N(0,1)`, `y = 0.1x² - 0.5x + 5 + σε`.
    Quadratic,
    /// Evenly spaced `x` over [`SIN_RANGES`], `y = -sin(3x - 0.3) + σε`.
    Sin,
    /// `x ~ N(0, I)`, `y ~ Bernoulli(sigmoid(θ₀ᵀ[1; x]))`.
    LogisticClass { theta0: Vec<f64> },
    /// `x ~ N(0,1)`, demand `d | x ~ N(2 + x, σ²)` truncated at 0; an
    /// evaluation set of `eval_size` rows (default `n`) follows the
    /// training rows in the same stream.
    Newsvendor {
        #[serde(default)]
        eval_size: Option<usize>,
    },
    /// No features, `y = mean + σε`.
    GaussianMean { mean: f64 },
    /// `x ~ N(0, I)`, `y = θ₀ᵀ[1; x] + σε`.
    LinearGaussian { theta0: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(flatten)]
    pub kind: DgpKind,
    pub n: usize,
    /// Noise standard deviation; `None` takes the kind's default.
    #[serde(default)]
    pub noise_sd: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(kind: DgpKind, n: usize, seed: u64) -> Self {
        DgpSpec {
            kind,
            n,
            noise_sd: None,
            seed,
        }
    }

    pub fn noise(&self) -> f64 {
        self.noise_sd.unwrap_or(match self.kind {
            DgpKind::Quadratic | DgpKind::Sin => 0.1,
            DgpKind::Newsvendor { .. } => 0.5,
            DgpKind::GaussianMean { .. } | DgpKind::LinearGaussian { .. } | DgpKind::LogisticClass { .. } => 1.0,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        DgpSpec { seed, ..self.clone() }
    }

    pub fn with_n(&self, n: usize) -> Self {
        DgpSpec { n, ..self.clone() }
    }

    /// Feature dimension of generated rows.
    pub fn input_dim(&self) -> usize {
        match &self.kind {
            DgpKind::Quadratic | DgpKind::Sin | DgpKind::Newsvendor { .. } => 1,
            DgpKind::GaussianMean { .. } => 0,
            DgpKind::LogisticClass { theta0 } | DgpKind::LinearGaussian { theta0 } => theta0.len().saturating_sub(1),
        }
    }

    /// Conditional mean `E[y | x]` where the kind defines one in closed form.
    pub fn mean_response(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            DgpKind::Quadratic => Some(quadratic_mean(x[0])),
            DgpKind::Sin => Some(sin_mean(x[0])),
            DgpKind::GaussianMean { mean } => Some(*mean),
            DgpKind::LinearGaussian { theta0 } => Some(affine(theta0, x)),
            DgpKind::LogisticClass { theta0 } => Some(sigmoid(affine(theta0, x))),
            DgpKind::Newsvendor { .. } => None,
        }
    }

    /// Training data; for the newsvendor kind the evaluation set is dropped.
    pub fn generate(&self) -> Result<Dataset> {
        match &self.kind {
            DgpKind::Quadratic => gen_quadratic(self),
            DgpKind::Sin => gen_sin(self),
            DgpKind::LogisticClass { theta0 } => gen_logistic_class(theta0, self.n, self.seed),
            DgpKind::Newsvendor { .. } => gen_newsvendor(self).map(|nv| nv.train),
            DgpKind::GaussianMean { mean } => {
                check_n(self.n)?;
                let mut s = Stream::new(self.seed);
                let sd = self.noise();
                let ys = (0..self.n).map(|_| mean + sd * s.normal()).collect();
                Dataset::from_flat(0, Vec::new(), ys)
            }
            DgpKind::LinearGaussian { theta0 } => {
                check_n(self.n)?;
                if theta0.is_empty() {
                    return Err(IdmError::invalid("theta0 must contain an intercept"));
                }
                let p = theta0.len() - 1;
                let mut s = Stream::new(self.seed);
                let sd = self.noise();
                let mut xs = Vec::with_capacity(self.n * p);
                let mut ys = Vec::with_capacity(self.n);
                for _ in 0..self.n {
                    let start = xs.len();
                    xs.extend((0..p).map(|_| s.normal()));
                    ys.push(affine(theta0, &xs[start..]) + sd * s.normal());
                }
                Dataset::from_flat(p, xs, ys)
            }
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(IdmError::invalid("n must be at least 1"))
    } else {
        Ok(())
    }
}

/// `θ₀ᵀ[1; x]`.
fn affine(theta0: &[f64], x: &[f64]) -> f64 {
    theta0[0] + dot(&theta0[1..], x)
}

pub fn quadratic_mean(x: f64) -> f64 {
    0.1 * x * x - 0.5 * x + 5.0
}

pub fn sin_mean(x: f64) -> f64 {
    -sin(3.0 * x - 0.3)
}

pub fn gen_quadratic(spec: &DgpSpec) -> Result<Dataset> {
    check_n(spec.n)?;
    let mut s = Stream::new(spec.seed);
    let sd = spec.noise();
    let mut xs = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x = s.normal();
        xs.push(x);
        ys.push(quadratic_mean(x) + sd * s.normal());
    }
    Dataset::from_flat(1, xs, ys)
}

/// Fixed inputs of the sin task: `n/2` evenly spaced points in each range,
/// left-closed and right-open.
pub fn sin_inputs(n: usize) -> Result<Vec<f64>> {
    if n == 0 || n % 2 != 0 {
        return Err(IdmError::invalid("sin task needs a positive even n"));
    }
    let half = n / 2;
    Ok(SIN_RANGES
        .iter()
        .flat_map(|&(lo, hi)| (0..half).map(move |k| lo + (hi - lo) * k as f64 / half as f64))
        .collect())
}

pub fn gen_sin(spec: &DgpSpec) -> Result<Dataset> {
    let xs = sin_inputs(spec.n)?;
    let mut s = Stream::new(spec.seed);
    let sd = spec.noise();
    let ys = xs.iter().map(|&x| sin_mean(x) + sd * s.normal()).collect();
    Dataset::from_flat(1, xs, ys)
}

pub fn gen_logistic_class(theta0: &[f64], n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    if theta0.is_empty() || theta0.iter().any(|t| !t.is_finite()) {
        return Err(IdmError::invalid("theta0 must be nonempty and finite"));
    }
    let p = theta0.len() - 1;
    let mut s = Stream::new(seed);
    let mut xs = Vec::with_capacity(n * p);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let start = xs.len();
        xs.extend((0..p).map(|_| s.normal()));
        let prob = sigmoid(affine(theta0, &xs[start..]));
        ys.push(f64::from(u8::from(s.uniform() < prob)));
    }
    Dataset::from_flat(p, xs, ys)
}

/// Newsvendor training data and its evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct NewsvendorData {
    pub train: Dataset,
    pub eval_set: Dataset,
}

fn demand_rows(s: &mut Stream, rows: usize, sd: f64) -> Result<Dataset> {
    let mut xs = Vec::with_capacity(rows);
    let mut ds = Vec::with_capacity(rows);
    for _ in 0..rows {
        let x = s.normal();
        let mean = 2.0 + x;
        let d = mean + sd * normal_above(s, -mean / sd);
        xs.push(x);
        ds.push(d);
    }
    Dataset::from_flat(1, xs, ds)
}

/// Exact draw of `Z ~ N(0,1)` conditioned on `Z >= lower`. Plain rejection
/// while the acceptance rate is at least one half; past the mean, Robert's
/// translated-exponential proposal, whose acceptance stays above 0.75.
fn normal_above(s: &mut Stream, lower: f64) -> f64 {
    if lower <= 0.0 {
        loop {
            let z = s.normal();
            if z >= lower {
                return z;
            }
        }
    }
    let rate = 0.5 * (lower + sqrt(lower * lower + 4.0));
    loop {
        let z = lower - log(1.0 - s.uniform()) / rate;
        if s.uniform() <= exp(-0.5 * (z - rate) * (z - rate)) {
            return z;
        }
    }
}

pub fn gen_newsvendor(spec: &DgpSpec) -> Result<NewsvendorData> {
    check_n(spec.n)?;
    let m = match spec.kind {
        DgpKind::Newsvendor { eval_size } => eval_size.unwrap_or(spec.n),
        _ => return Err(IdmError::invalid("gen_newsvendor needs a newsvendor spec")),
    };
    if m == 0 {
        return Err(IdmError::invalid("evaluation set must be nonempty"));
    }
    let sd = spec.noise();
    let mut s = Stream::new(spec.seed);
    let train = demand_rows(&mut s, spec.n, sd)?;
    let eval_set = demand_rows(&mut s, m, sd)?;
    Ok(NewsvendorData { train, eval_set })
}

/// Population least-squares line `(a, b)` for the newsvendor demand, i.e.
/// the limit of the linear fit of `d` on `[1, x]`. Truncation bends
/// `E[d | x]` away from `2 + x` for small `x`, so this is not `(2, 1)`.
pub fn newsvendor_pseudo_true(sd: f64) -> [f64; 2] {
    // E[d | x] for N(μ, sd²) truncated at 0 is μ + sd·φ(α)/(1 - Φ(α)), α = -μ/sd.
    let cond_mean = |x: f64| {
        let mu = 2.0 + x;
        let alpha = -mu / sd;
        let phi = exp(-0.5 * alpha * alpha) / sqrt(2.0 * core::f64::consts::PI);
        let tail = 0.5 * libm::erfc(alpha / core::f64::consts::SQRT_2);
        mu + sd * phi / tail
    };
    // Composite Simpson over x ~ N(0,1) on [-12, 12]. With E[x] = 0 and
    // Var x = 1, the slope is E[x·m(x)] and the intercept E[m(x)].
    let steps = 24_000;
    let (lo, hi) = (-12.0f64, 12.0f64);
    let h = (hi - lo) / steps as f64;
    let (mut e_m, mut e_xm) = (0.0, 0.0);
    for i in 0..=steps {
        let x = lo + h * i as f64;
        let w = if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let dens = exp(-0.5 * x * x) / sqrt(2.0 * core::f64::consts::PI);
        let m = cond_mean(x);
        e_m += w * dens * m;
        e_xm += w * dens * x * m;
    }
    [e_m * h / 3.0, e_xm * h / 3.0]
}

/// `ψ(θ) = E[y | x₀]` under the model (mean response, output `output`).
#[derive(Debug, Clone)]
pub struct PointPrediction {
    pub model: LikelihoodModel,
    pub x0: Vec<f64>,
    pub output: usize,
}

impl EvalFn for PointPrediction {
    fn arity(&self) -> usize {
        1
    }

    fn component(&self, _k: usize, theta: &[f64]) -> Result<f64> {
        Ok(self.model.mean_response(theta, &self.x0)?[self.output])
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn component_grad(&self, _k: usize, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.model.mean_response_grad(theta, &self.x0, self.output, grad)
    }
}

/// Mean responses at several inputs, one component each.
#[derive(Debug, Clone)]
pub struct PredictionGrid {
    pub model: LikelihoodModel,
    pub points: Vec<Vec<f64>>,
}

impl EvalFn for PredictionGrid {
    fn arity(&self) -> usize {
        self.points.len()
    }

    fn component(&self, k: usize, theta: &[f64]) -> Result<f64> {
        Ok(self.model.mean_response(theta, &self.points[k])?[0])
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn component_grad(&self, k: usize, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.model.mean_response_grad(theta, &self.points[k], 0, grad)
    }
}

/// Average negative log-likelihood over a held-out set.
#[derive(Debug, Clone)]
pub struct HoldoutCrossEntropy {
    pub model: LikelihoodModel,
    pub eval_set: Dataset,
}

impl EvalFn for HoldoutCrossEntropy {
    fn arity(&self) -> usize {
        1
    }

    fn component(&self, _k: usize, theta: &[f64]) -> Result<f64> {
        Ok(-self.model.log_likelihood(theta, &self.eval_set)? / self.eval_set.len() as f64)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn component_grad(&self, _k: usize, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        let m = self.eval_set.len() as f64;
        let ll = self.model.value_and_grad(theta, &self.eval_set, grad)?;
        grad.iter_mut().for_each(|g| *g /= -m);
        Ok(-ll / m)
    }

    fn unit_values(&self, theta: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(
            self.model
                .log_densities(theta, &self.eval_set)
                .map(|v| v.into_iter().map(|l| -l).collect()),
        )
    }
}

/// Average unmet demand `(1/m) Σⱼ max(dⱼ - g_θ(xⱼ), 0)`; not differentiable.
#[derive(Debug, Clone)]
pub struct UnmetDemand {
    pub model: LikelihoodModel,
    pub eval_set: Dataset,
}

impl UnmetDemand {
    fn units(&self, theta: &[f64]) -> Result<Vec<f64>> {
        (0..self.eval_set.len())
            .map(|j| {
                let order = self.model.predict(theta, self.eval_set.x(j))?[0];
                Ok((self.eval_set.y(j) - order).max(0.0))
            })
            .collect()
    }
}

impl EvalFn for UnmetDemand {
    fn arity(&self) -> usize {
        1
    }

    fn component(&self, _k: usize, theta: &[f64]) -> Result<f64> {
        let u = self.units(theta)?;
        Ok(u.iter().sum::<f64>() / u.len() as f64)
    }

    fn unit_values(&self, theta: &[f64]) -> Option<Result<Vec<f64>>> {
        Some(self.units(theta))
    }
}

/// Evaluation kinds buildable by [`make_eval_fn`].
#[derive(Debug, Clone)]
pub enum EvalKind {
    PointPrediction { x0: Vec<f64> },
    PredictionGrid { points: Vec<Vec<f64>> },
    HoldoutAvgCrossEntropy { eval_set: Dataset },
    AvgUnmetDemand { eval_set: Dataset },
}

pub fn make_eval_fn(kind: EvalKind, model: &LikelihoodModel) -> Result<Box<dyn EvalFn>> {
    let model = model.clone();
    Ok(match kind {
        EvalKind::PointPrediction { x0 } => {
            if x0.len() != model.input_dim() {
                return Err(IdmError::invalid("x0 dimension does not match the model"));
            }
            Box::new(PointPrediction { model, x0, output: 0 })
        }
        EvalKind::PredictionGrid { points } => {
            if points.is_empty() || points.iter().any(|p| p.len() != model.input_dim()) {
                return Err(IdmError::invalid("prediction grid must be nonempty and match the model"));
            }
            Box::new(PredictionGrid { model, points })
        }
        EvalKind::HoldoutAvgCrossEntropy { eval_set } => Box::new(HoldoutCrossEntropy { model, eval_set }),
        EvalKind::AvgUnmetDemand { eval_set } => Box::new(UnmetDemand { model, eval_set }),
    })
}

/// Seeded random partition into `(train, eval)` with `⌈fraction·n⌉` rows in
/// the evaluation part. Rows keep their original relative order.
pub fn holdout_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(IdmError::invalid("holdout fraction must lie in (0, 1)"));
    }
    let n = data.len();
    let eval_size = libm::ceil(fraction * n as f64) as usize;
    if n < 2 || eval_size == 0 || eval_size >= n {
        return Err(IdmError::invalid("holdout split leaves an empty part"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Stream::new(seed).shuffle(&mut order);
    let mut in_eval = vec![false; n];
    for &i in &order[..eval_size] {
        in_eval[i] = true;
    }
    let train: Vec<usize> = (0..n).filter(|&i| !in_eval[i]).collect();
    let eval: Vec<usize> = (0..n).filter(|&i| in_eval[i]).collect();
    Ok((data.select(&train), data.select(&eval)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, PredictorSpec};

    #[test]
    fn truncated_normal_moments() {
        // E[Z | Z >= a] = φ(a) / (1 - Φ(a)).
        for a in [-1.0, 0.0, 3.0, 8.0] {
            let mut s = Stream::new(5);
            let draws: Vec<f64> = (0..200_000).map(|_| normal_above(&mut s, a)).collect();
            assert!(draws.iter().all(|&z| z >= a));
            let m = draws.len() as f64;
            let mean = draws.iter().sum::<f64>() / m;
            let sd = (draws.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / m).sqrt();
            let pdf = exp(-0.5 * a * a) / sqrt(2.0 * core::f64::consts::PI);
            let tail = 0.5 * libm::erfc(a / core::f64::consts::SQRT_2);
            let want = pdf / tail;
            assert!((mean - want).abs() < 4.0 * sd / sqrt(m), "a={a}: {mean} vs {want}");
        }
    }

    #[test]
    fn quadratic_mean_values() {
        assert_eq!(quadratic_mean(0.0), 5.0);
        assert!((quadratic_mean(5.0) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn sin_mean_values() {
        assert!(sin_mean(0.1).abs() < 1e-15);
        let x = (0.3 + core::f64::consts::FRAC_PI_2) / 3.0;
        assert!((sin_mean(x) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn sin_inputs_respect_gap() {
        let xs = sin_inputs(160).unwrap();
        assert_eq!(xs.len(), 160);
        for &x in &xs {
            assert!((-1.5..1.15).contains(&x));
            assert!(!(x > -0.7 && x < 0.35), "{x}");
        }
        assert!(sin_inputs(7).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        for kind in [
            DgpKind::Quadratic,
            DgpKind::Sin,
            DgpKind::LogisticClass { theta0: vec![0.5, -1.0] },
            DgpKind::Newsvendor { eval_size: None },
            DgpKind::GaussianMean { mean: 1.0 },
            DgpKind::LinearGaussian { theta0: vec![1.0, 2.0, 3.0] },
        ] {
            let spec = DgpSpec::new(kind, 40, 9);
            assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
            assert_ne!(spec.generate().unwrap(), spec.with_seed(10).generate().unwrap());
        }
    }

    #[test]
    fn newsvendor_demand_nonnegative_and_sized() {
        let spec = DgpSpec::new(DgpKind::Newsvendor { eval_size: Some(30) }, 50, 4);
        let nv = gen_newsvendor(&spec).unwrap();
        assert_eq!(nv.train.len(), 50);
        assert_eq!(nv.eval_set.len(), 30);
        assert!(nv.train.targets().iter().chain(nv.eval_set.targets()).all(|&d| d >= 0.0));
    }

    #[test]
    fn unmet_demand_edge_cases() {
        let model = LikelihoodModel::new(PredictorSpec::linear(), Family::GaussianSse, 1).unwrap();
        let eval_set = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], vec![1.0, 3.0, 2.0]).unwrap();
        let eval = make_eval_fn(EvalKind::AvgUnmetDemand { eval_set }, &model).unwrap();
        assert_eq!(eval.component(0, &[10.0, 0.0]).unwrap(), 0.0);
        assert_eq!(eval.component(0, &[0.0, 0.0]).unwrap(), 2.0);
        assert!(!eval.has_gradient());
    }

    #[test]
    fn point_prediction_matches_predict() {
        let model = LikelihoodModel::new(PredictorSpec::linear(), Family::GaussianSse, 1).unwrap();
        let eval = make_eval_fn(EvalKind::PointPrediction { x0: vec![3.0] }, &model).unwrap();
        assert_eq!(eval.component(0, &[1.0, 2.0]).unwrap(), 7.0);
    }

    #[test]
    fn cross_entropy_zero_for_confident_correct_predictions() {
        let model = LikelihoodModel::new(PredictorSpec::linear(), Family::CategoricalSoftmax { classes: 2 }, 0).unwrap();
        let eval_set = Dataset::from_flat(0, Vec::new(), vec![0.0, 0.0]).unwrap();
        let eval = make_eval_fn(EvalKind::HoldoutAvgCrossEntropy { eval_set }, &model).unwrap();
        let v = eval.component(0, &[800.0, -800.0]).unwrap();
        assert!(v.abs() < 1e-300);
    }

    #[test]
    fn holdout_split_sizes_and_partition() {
        let data = Dataset::from_flat(0, Vec::new(), (0..10).map(f64::from).collect()).unwrap();
        let (train, eval) = holdout_split(&data, 0.2, 3).unwrap();
        assert_eq!((train.len(), eval.len()), (8, 2));
        let mut all: Vec<f64> = train.targets().iter().chain(eval.targets()).copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(all, data.targets());
        assert_eq!(holdout_split(&data, 0.2, 3).unwrap(), (train, eval));
        assert!(holdout_split(&data, 0.0, 3).is_err());
        let tiny = Dataset::from_flat(0, Vec::new(), vec![1.0]).unwrap();
        assert!(holdout_split(&tiny, 0.5, 3).is_err());
    }
}
