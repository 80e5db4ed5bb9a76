//! Shared stages: load or generate data, build the model and evaluation,
//! fit, and run the IDM and the reference estimators on one dataset.

use idm_core::baselines::{
    bootstrap_replicate, delta_method_variance, reduce_replicates, simulation_replicate, BaselineEstimate,
    BaselineMethod, StartMode,
};
use idm_core::idm::{
    auto_lambda, eval_set_variance, fit_mle, implicit_variance, interval_from_variance, mv_fdidm_with, sg_fdidm,
    EvalFn, FdidmOptions, Interval,
};
use idm_core::linalg::CovMatrix;
use idm_core::model::DEFAULT_HESSIAN_CAP;
use idm_core::optim::{FitResult, Method};
use idm_core::rng::stream_seed;
use idm_core::synthdata::{gen_newsvendor, holdout_split, make_eval_fn, DgpKind, DgpSpec, EvalKind};
use idm_core::{Dataset, LikelihoodModel};
use serde::Serialize;

use crate::config::{EvalConfig, ExperimentConfig, LambdaSetting};
use crate::csvio::read_dataset;
use crate::error::{HarnessError, Result, StageExt};
use crate::pool::map_indexed;

/// Salts that keep the seed streams of different pipeline stages apart.
pub(crate) const INIT_SALT: u64 = 0x1d1e_5eed;
pub(crate) const SPLIT_SALT: u64 = 0x5711_7000;

/// Training data, and an evaluation set when the source provides one.
pub struct Source {
    pub data: Dataset,
    pub eval_set: Option<Dataset>,
}

/// Training data from the config's `data` CSV or from `dgp` reseeded with
/// `seed` (the spec's own seed when `seed` is `None`).
pub fn load_source(config: &ExperimentConfig, seed: Option<u64>) -> Result<Source> {
    if let Some(src) = &config.data {
        return Ok(Source {
            data: read_dataset(&src.csv)?,
            eval_set: None,
        });
    }
    let dgp = config.dgp.as_ref().ok_or_else(|| HarnessError::Config("no data source".into()))?;
    source_from_dgp(dgp, seed)
}

pub fn source_from_dgp(dgp: &DgpSpec, seed: Option<u64>) -> Result<Source> {
    let dgp = seed.map_or_else(|| dgp.clone(), |s| dgp.with_seed(s));
    if let DgpKind::Newsvendor { .. } = dgp.kind {
        let nv = gen_newsvendor(&dgp).stage("generate data")?;
        return Ok(Source {
            data: nv.train,
            eval_set: Some(nv.eval_set),
        });
    }
    Ok(Source {
        data: dgp.generate().stage("generate data")?,
        eval_set: None,
    })
}

/// Model, training data and evaluation for one dataset.
pub struct Problem {
    pub model: LikelihoodModel,
    pub train: Dataset,
    pub eval: Box<dyn EvalFn>,
}

pub fn build_problem(config: &ExperimentConfig, source: Source, split_seed: u64) -> Result<Problem> {
    let Source { data, eval_set } = source;
    let (train, kind) = match &config.eval {
        EvalConfig::PointPrediction { x0 } => (data, EvalKind::PointPrediction { x0: x0.clone() }),
        EvalConfig::PredictionGrid { points } => (data, EvalKind::PredictionGrid { points: points.clone() }),
        EvalConfig::HoldoutAvgCrossEntropy { fraction } => {
            let (train, eval_set) = holdout_split(&data, *fraction, split_seed).stage("holdout split")?;
            (train, EvalKind::HoldoutAvgCrossEntropy { eval_set })
        }
        EvalConfig::AvgUnmetDemand { fraction } => match (eval_set, fraction) {
            (Some(eval_set), _) => (data, EvalKind::AvgUnmetDemand { eval_set }),
            (None, Some(f)) => {
                let (train, eval_set) = holdout_split(&data, *f, split_seed).stage("holdout split")?;
                (train, EvalKind::AvgUnmetDemand { eval_set })
            }
            (None, None) => {
                return Err(HarnessError::Config(
                    "avg_unmet_demand needs a newsvendor dgp or a holdout fraction".into(),
                ))
            }
        },
    };
    let model = LikelihoodModel::from_spec(config.model.clone(), train.input_dim()).stage("build model")?;
    let eval = make_eval_fn(kind, &model).stage("build evaluation")?;
    Ok(Problem { model, train, eval })
}

pub fn fit_base(config: &ExperimentConfig, problem: &Problem, seed: u64) -> Result<FitResult> {
    let init = problem.model.init_params(stream_seed(seed, INIT_SALT));
    let mut opt = config.optimizer.clone();
    opt.seed = stream_seed(seed, opt.seed);
    fit_mle(&problem.model, &problem.train, &init, &opt).stage("fit")
}

/// Result of one estimator on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: String,
    /// Covariance used for intervals (clamped or PSD-projected for the IDM).
    pub covariance: CovMatrix,
    /// Unprojected IDM estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<CovMatrix>,
    pub intervals: Vec<Interval>,
    /// Model fits, including the base fit for the IDM.
    pub fit_count: usize,
    pub failed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<StartMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    /// Finite-evaluation-set variance, when the evaluation has a per-unit form.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_set_variance: Option<f64>,
    #[serde(skip)]
    pub raw_negative: bool,
}

pub fn resolve_lambda(config: &ExperimentConfig, problem: &Problem, fit: &FitResult) -> Result<f64> {
    match config.idm.lambda {
        LambdaSetting::Fixed(l) => Ok(l),
        LambdaSetting::Auto => auto_lambda(&problem.model, &problem.train, fit).stage("resolve lambda"),
    }
}

fn intervals(psi: &[f64], cov: &CovMatrix, beta: f64) -> Result<Vec<Interval>> {
    psi.iter()
        .enumerate()
        .map(|(k, &p)| interval_from_variance(p, cov.get(k, k).max(0.0), beta).stage("interval"))
        .collect()
}

/// Finite-difference IDM at `fit` with width `lambda`.
pub fn run_idm(config: &ExperimentConfig, problem: &Problem, fit: &FitResult, lambda: f64) -> Result<MethodResult> {
    let Problem { model, train, eval } = problem;
    let options = FdidmOptions {
        central: config.idm.central_diff,
    };
    let psi = eval.values(&fit.theta).stage("evaluate")?;
    let k = eval.arity();
    let (raw, covariance, refits, converged, raw_negative) = if k == 1 {
        let v = implicit_variance(model, train, eval.as_ref(), 0, lambda, fit, &config.optimizer, options)
            .stage("idm")?;
        let raw = CovMatrix {
            dim: 1,
            values: vec![v.value],
            symmetrized: true,
            psd_projected: false,
        };
        let clamped = CovMatrix {
            dim: 1,
            values: vec![v.clamped()],
            symmetrized: true,
            psd_projected: true,
        };
        (raw, clamped, if options.central { 2 } else { 1 }, v.converged, v.raw_negative)
    } else {
        let mv = mv_fdidm_with(model, train, eval.as_ref(), lambda, fit, &config.optimizer, options).stage("idm")?;
        let neg = (0..k).any(|i| mv.raw.get(i, i) < -1e-6 * (1.0 + psi[i].abs()));
        (mv.raw, mv.covariance, mv.fit_count, mv.converged, neg)
    };
    let ivs = intervals(&psi, &covariance, config.idm.beta)?;
    Ok(MethodResult {
        method: "fdidm".into(),
        covariance,
        raw: Some(raw),
        intervals: ivs,
        fit_count: 1 + refits,
        failed: 0,
        start: None,
        lambda: Some(lambda),
        converged: Some(converged && fit.converged),
        eval_set_variance: eval.unit_values(&fit.theta).and_then(|_| eval_set_variance(eval.as_ref(), &fit.theta).ok()),
        raw_negative,
    })
}

/// Minibatch IDM; it runs its own base fit from a fresh initialization.
pub fn run_sg_idm(config: &ExperimentConfig, problem: &Problem, lambda: f64, seed: u64) -> Result<MethodResult> {
    let mut opt = config.optimizer.clone();
    opt.seed = stream_seed(seed, opt.seed);
    let sg = sg_fdidm(
        &problem.model,
        &problem.train,
        problem.eval.as_ref(),
        lambda,
        config.idm.samples,
        config.idm.beta,
        &opt,
    )
    .stage("sg idm")?;
    let var = sg.raw_variance.max(0.0);
    Ok(MethodResult {
        method: "sg_fdidm".into(),
        covariance: CovMatrix {
            dim: 1,
            values: vec![var],
            symmetrized: true,
            psd_projected: true,
        },
        raw: Some(CovMatrix {
            dim: 1,
            values: vec![sg.raw_variance],
            symmetrized: true,
            psd_projected: false,
        }),
        intervals: vec![sg.interval],
        fit_count: 2,
        failed: 0,
        start: None,
        lambda: Some(lambda),
        converged: Some(sg.converged),
        eval_set_variance: None,
        raw_negative: sg.clamped,
    })
}

/// The configured IDM flavor: minibatch for a scalar evaluation under the
/// stochastic optimizer, finite-difference otherwise.
pub fn uses_sg(config: &ExperimentConfig) -> bool {
    config.optimizer.method == Method::AdaptiveStochastic && config.eval.arity() == 1
}

fn baseline_result(est: BaselineEstimate, psi: &[f64], beta: f64) -> Result<MethodResult> {
    let ivs = intervals(psi, &est.covariance, beta)?;
    let method = match est.method {
        BaselineMethod::Delta => "delta",
        BaselineMethod::Bootstrap => "bootstrap",
        BaselineMethod::Simulation => "simulation",
    };
    Ok(MethodResult {
        method: method.into(),
        covariance: est.covariance,
        raw: None,
        intervals: ivs,
        fit_count: est.fit_count,
        failed: est.failed,
        start: est.start,
        lambda: None,
        converged: None,
        eval_set_variance: None,
        raw_negative: false,
    })
}

pub fn run_delta(config: &ExperimentConfig, problem: &Problem, fit: &FitResult) -> Result<MethodResult> {
    let psi = problem.eval.values(&fit.theta).stage("evaluate")?;
    let est = delta_method_variance(
        &problem.model,
        &problem.train,
        &fit.theta,
        problem.eval.as_ref(),
        DEFAULT_HESSIAN_CAP,
    )
    .stage("delta")?;
    baseline_result(est, &psi, config.idm.beta)
}

/// Bootstrap with replicates spread over the worker pool; `parallel`
/// false runs them on the calling thread (for timing).
pub fn run_bootstrap(config: &ExperimentConfig, problem: &Problem, fit: &FitResult, parallel: bool) -> Result<MethodResult> {
    let boot = config
        .baselines
        .bootstrap
        .as_ref()
        .ok_or_else(|| HarnessError::Config("bootstrap is not configured".into()))?;
    let psi = problem.eval.values(&fit.theta).stage("evaluate")?;
    let one = |b: usize| {
        bootstrap_replicate(
            &problem.model,
            &problem.train,
            problem.eval.as_ref(),
            &fit.theta,
            &config.optimizer,
            boot,
            b,
        )
    };
    let outcomes = if parallel {
        map_indexed(boot.replicates, one)
    } else {
        (0..boot.replicates).map(one).collect()
    };
    let est = reduce_replicates(BaselineMethod::Bootstrap, outcomes, Some(boot.start)).stage("bootstrap")?;
    baseline_result(est, &psi, config.idm.beta)
}

pub fn run_simulation(config: &ExperimentConfig, problem: &Problem, fit: &FitResult) -> Result<MethodResult> {
    let oracle = config
        .baselines
        .simulation
        .as_ref()
        .ok_or_else(|| HarnessError::Config("simulation is not configured".into()))?;
    let dgp = config
        .dgp
        .as_ref()
        .ok_or_else(|| HarnessError::Config("simulation needs a dgp".into()))?;
    let psi = problem.eval.values(&fit.theta).stage("evaluate")?;
    let n = problem.train.len();
    let outcomes = map_indexed(oracle.replicates, |r| {
        simulation_replicate(dgp, n, &problem.model, problem.eval.as_ref(), &config.optimizer, oracle, r)
    });
    let est = reduce_replicates(BaselineMethod::Simulation, outcomes, Some(StartMode::Cold)).stage("simulation")?;
    baseline_result(est, &psi, config.idm.beta)
}
