//! The five experiments. Each returns a serializable report plus the rows
//! of its CSV table; wall-clock measurements are kept out of both and
//! returned separately so that reports are reproducible byte for byte.

use std::collections::BTreeMap;
use std::time::Instant;

use idm_core::idm::{fisher_inverse_idm, implicit_variance, FdidmOptions, Interval};
use idm_core::linalg::CovMatrix;
use idm_core::model::DEFAULT_HESSIAN_CAP;
use idm_core::optim::FitResult;
use idm_core::rng::stream_seed;
use idm_core::synthdata::{newsvendor_pseudo_true, DgpKind, DgpSpec};
use idm_core::{Family, PredictorKind};
use serde::Serialize;

use crate::config::{EvalConfig, ExperimentConfig, ExperimentKind, LambdaSetting};
use crate::error::{HarnessError, Result, StageExt};
use crate::pipeline::{
    build_problem, fit_base, load_source, resolve_lambda, run_bootstrap, run_delta, run_idm, run_sg_idm,
    run_simulation, source_from_dgp, uses_sg, MethodResult, Problem, SPLIT_SALT,
};
use crate::pool::map_indexed;

const ORACLE_SALT: u64 = 0x0ac1_e000;

/// A CSV table: header plus rows of preformatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

/// Everything an experiment produces.
#[derive(Debug)]
pub struct Outcome {
    pub report: serde_json::Value,
    pub table: Table,
    /// Conditions that make the run exit nonzero unless allowed.
    pub diagnostics: Vec<String>,
    /// Wall-clock seconds per labelled phase.
    pub timings: BTreeMap<String, f64>,
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn to_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("reports serialize to JSON")
}

pub fn run(config: &ExperimentConfig) -> Result<Outcome> {
    match config.experiment {
        ExperimentKind::Interval => run_interval(config),
        ExperimentKind::Coverage => run_coverage(config),
        ExperimentKind::Convergence => run_convergence(config),
        ExperimentKind::Runtime => run_runtime(config),
        ExperimentKind::Fisher => run_fisher(config),
    }
}

fn resolved(config: &ExperimentConfig, lambda: f64) -> ExperimentConfig {
    let mut c = config.clone();
    c.idm.lambda = LambdaSetting::Fixed(lambda);
    c
}

#[derive(Debug, Serialize)]
pub struct IntervalReport {
    pub config: ExperimentConfig,
    pub n: usize,
    pub psi_hat: Vec<f64>,
    pub lambda: f64,
    pub base_fit: FitSummary,
    pub methods: Vec<MethodResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&FitResult> for FitSummary {
    fn from(f: &FitResult) -> Self {
        FitSummary {
            objective_value: f.objective_value,
            iterations: f.iterations,
            converged: f.converged,
        }
    }
}

fn method_rows(table: &mut Table, psi: &[f64], m: &MethodResult) {
    for (k, iv) in m.intervals.iter().enumerate() {
        table.rows.push(vec![
            m.method.clone(),
            k.to_string(),
            num(psi[k]),
            num(m.covariance.get(k, k)),
            num(iv.lower),
            num(iv.upper),
            m.fit_count.to_string(),
        ]);
    }
}

/// One dataset, every enabled estimator side by side.
pub fn run_interval(config: &ExperimentConfig) -> Result<Outcome> {
    let source = load_source(config, None)?;
    let problem = build_problem(config, source, stream_seed(config.root_seed, SPLIT_SALT))?;
    let mut timings = BTreeMap::new();
    let t = Instant::now();
    let fit = fit_base(config, &problem, config.root_seed)?;
    timings.insert("fit".into(), t.elapsed().as_secs_f64());
    let lambda = resolve_lambda(config, &problem, &fit)?;
    let psi = problem.eval.values(&fit.theta).stage("evaluate")?;

    let mut methods = Vec::new();
    let t = Instant::now();
    methods.push(if uses_sg(config) {
        run_sg_idm(config, &problem, lambda, config.root_seed)?
    } else {
        run_idm(config, &problem, &fit, lambda)?
    });
    timings.insert("idm".into(), t.elapsed().as_secs_f64());
    if config.baselines.delta {
        let t = Instant::now();
        methods.push(run_delta(config, &problem, &fit)?);
        timings.insert("delta".into(), t.elapsed().as_secs_f64());
    }
    if config.baselines.bootstrap.is_some() {
        let t = Instant::now();
        methods.push(run_bootstrap(config, &problem, &fit, true)?);
        timings.insert("bootstrap".into(), t.elapsed().as_secs_f64());
    }
    if config.baselines.simulation.is_some() {
        let t = Instant::now();
        methods.push(run_simulation(config, &problem, &fit)?);
        timings.insert("simulation".into(), t.elapsed().as_secs_f64());
    }

    let mut diagnostics = Vec::new();
    if methods[0].raw_negative {
        diagnostics.push("IDM raw variance is negative; the interval has been clamped to zero width".into());
    }
    let mut table = Table {
        header: vec!["method", "component", "psi_hat", "variance", "lower", "upper", "fit_count"],
        rows: Vec::new(),
    };
    for m in &methods {
        method_rows(&mut table, &psi, m);
    }
    let report = IntervalReport {
        config: resolved(config, lambda),
        n: problem.train.len(),
        psi_hat: psi,
        lambda,
        base_fit: (&fit).into(),
        methods,
    };
    Ok(Outcome {
        report: to_json(&report),
        table,
        diagnostics,
        timings,
    })
}

/// Per-target hit tally of one method in the coverage experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub method: String,
    /// Component index, or `None` for the aggregate over components.
    pub target: Option<usize>,
    /// Fixed target value; `None` when it changes per replicate.
    pub psi0: Option<f64>,
    pub replicates: usize,
    pub hits: usize,
    pub rate: f64,
    pub mean_width: f64,
}

#[derive(Debug, Serialize)]
pub struct CoverageReport {
    pub config: ExperimentConfig,
    pub beta: f64,
    pub replicates: usize,
    pub failed: usize,
    /// Replicates where the delta method failed (e.g. singular Fisher).
    pub delta_failed: usize,
    pub raw_negative: usize,
    /// Smallest unclamped IDM variance over replicates and components.
    pub min_raw_variance: f64,
    /// Replicates with a non-finite IDM variance.
    pub nonfinite_variance: usize,
    pub mean_lambda: f64,
    pub rows: Vec<CoverageRow>,
}

struct ReplicateCoverage {
    psi0: Vec<f64>,
    lambda: f64,
    idm: Vec<Interval>,
    raw_diag: Vec<f64>,
    raw_negative: bool,
    delta: Option<std::result::Result<Vec<Interval>, String>>,
}

/// True value of each evaluation component, for data from `dgp`.
fn coverage_targets(config: &ExperimentConfig, dgp: &DgpSpec, problem: &Problem) -> Result<Vec<f64>> {
    let no_target = || HarnessError::Config(format!("no known target value for this evaluation under the `{}` dgp", dgp_name(dgp)));
    match &config.eval {
        EvalConfig::PointPrediction { x0 } => dgp.mean_response(x0).map(|v| vec![v]).ok_or_else(no_target),
        EvalConfig::PredictionGrid { points } => points.iter().map(|p| dgp.mean_response(p).ok_or_else(no_target)).collect(),
        EvalConfig::AvgUnmetDemand { .. } => {
            let predictor = &problem.model.spec().predictor;
            let linear = predictor.kind == PredictorKind::Linear && predictor.powers == 1 && problem.model.input_dim() == 1;
            if !matches!(dgp.kind, DgpKind::Newsvendor { .. }) || !linear || problem.model.output_dim() != 1 {
                return Err(no_target());
            }
            let theta_star = newsvendor_pseudo_true(dgp.noise());
            Ok(vec![problem.eval.component(0, &theta_star).stage("evaluate target")?])
        }
        EvalConfig::HoldoutAvgCrossEntropy { .. } => Err(no_target()),
    }
}

fn dgp_name(dgp: &DgpSpec) -> &'static str {
    match dgp.kind {
        DgpKind::Quadratic => "quadratic",
        DgpKind::Sin => "sin",
        DgpKind::LogisticClass { .. } => "logistic_class",
        DgpKind::Newsvendor { .. } => "newsvendor",
        DgpKind::GaussianMean { .. } => "gaussian_mean",
        DgpKind::LinearGaussian { .. } => "linear_gaussian",
    }
}

fn coverage_replicate(config: &ExperimentConfig, dgp: &DgpSpec, r: usize) -> Result<ReplicateCoverage> {
    let seed = stream_seed(config.root_seed, r as u64);
    let source = source_from_dgp(dgp, Some(seed))?;
    let problem = build_problem(config, source, stream_seed(seed, SPLIT_SALT))?;
    let psi0 = coverage_targets(config, &dgp.with_seed(seed), &problem)?;
    let fit = fit_base(config, &problem, seed)?;
    let lambda = resolve_lambda(config, &problem, &fit)?;
    let idm = if uses_sg(config) {
        run_sg_idm(config, &problem, lambda, seed)?
    } else {
        run_idm(config, &problem, &fit, lambda)?
    };
    let delta = config
        .baselines
        .delta
        .then(|| run_delta(config, &problem, &fit).map(|m| m.intervals).map_err(|e| e.to_string()));
    let raw = idm.raw.as_ref().unwrap_or(&idm.covariance);
    let raw_diag = (0..raw.dim).map(|i| raw.get(i, i)).collect();
    Ok(ReplicateCoverage {
        psi0,
        lambda,
        raw_diag,
        idm: idm.intervals,
        raw_negative: idm.raw_negative,
        delta,
    })
}

fn tally(method: &str, hits: &[Vec<(f64, Interval)>], k: usize) -> Vec<CoverageRow> {
    let mut rows = Vec::with_capacity(k + 1);
    let row = |target: Option<usize>, pairs: Vec<(f64, Interval)>| {
        let count = pairs.len();
        let h = pairs.iter().filter(|(p, iv)| iv.contains(*p)).count();
        let width: f64 = pairs.iter().map(|(_, iv)| iv.width()).sum();
        let fixed = pairs.first().map(|p| p.0).filter(|&p0| pairs.iter().all(|(p, _)| *p == p0));
        CoverageRow {
            method: method.into(),
            target,
            psi0: if target.is_some() { fixed } else { None },
            replicates: count,
            hits: h,
            rate: if count > 0 { h as f64 / count as f64 } else { f64::NAN },
            mean_width: if count > 0 { width / count as f64 } else { f64::NAN },
        }
    };
    for c in 0..k {
        rows.push(row(Some(c), hits.iter().map(|rep| rep[c]).collect()));
    }
    rows.push(row(None, hits.iter().flatten().copied().collect()));
    rows
}

/// `R` fresh datasets, an interval per dataset and component, hit test
/// against the known target.
pub fn run_coverage(config: &ExperimentConfig) -> Result<Outcome> {
    let dgp = config.dgp.as_ref().ok_or_else(|| HarnessError::Config("coverage needs a dgp".into()))?;
    let reps = config.coverage.replicates;
    let t = Instant::now();
    let outcomes = map_indexed(reps, |r| coverage_replicate(config, dgp, r));
    let elapsed = t.elapsed().as_secs_f64();
    // Configuration problems repeat identically in every replicate; surface
    // them instead of counting them as failures.
    if let Some(Err(e @ HarnessError::Config(_))) = outcomes.iter().find(|o| matches!(o, Err(HarnessError::Config(_)))) {
        return Err(HarnessError::Config(e.to_string()));
    }
    let k = config.eval.arity();
    let mut failures = Vec::new();
    let mut idm_pairs = Vec::new();
    let mut delta_pairs = Vec::new();
    let (mut delta_failed, mut raw_negative, mut lambda_sum) = (0, 0, 0.0);
    let (mut min_raw_variance, mut nonfinite_variance) = (f64::INFINITY, 0);
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(rep) => {
                lambda_sum += rep.lambda;
                raw_negative += usize::from(rep.raw_negative);
                nonfinite_variance += usize::from(rep.raw_diag.iter().any(|v| !v.is_finite()));
                min_raw_variance = rep.raw_diag.iter().copied().filter(|v| v.is_finite()).fold(min_raw_variance, f64::min);
                idm_pairs.push(rep.psi0.iter().copied().zip(rep.idm).collect::<Vec<_>>());
                match rep.delta {
                    Some(Ok(ivs)) => delta_pairs.push(rep.psi0.iter().copied().zip(ivs).collect()),
                    Some(Err(_)) => delta_failed += 1,
                    None => {}
                }
            }
            Err(e) => failures.push(format!("replicate {r}: {e}")),
        }
    }
    let mut rows = tally("fdidm", &idm_pairs, k);
    if config.baselines.delta {
        rows.extend(tally("delta", &delta_pairs, k));
    }

    let mut diagnostics = Vec::new();
    if failures.len() as f64 > config.coverage.max_failure_fraction * reps as f64 {
        diagnostics.push(format!(
            "{} of {reps} replicates failed (limit {:.0}%): {}",
            failures.len(),
            100.0 * config.coverage.max_failure_fraction,
            failures.first().map_or("", String::as_str)
        ));
    }
    if raw_negative > 0 {
        diagnostics.push(format!("{raw_negative} replicates had a negative raw IDM variance"));
    }
    if nonfinite_variance > 0 {
        diagnostics.push(format!("{nonfinite_variance} replicates had a non-finite IDM variance"));
    }
    let ok = idm_pairs.len();
    let table = Table {
        header: vec!["method", "target", "psi0", "replicates", "hits", "rate", "mean_width"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.method.clone(),
                    r.target.map_or("all".into(), |t| t.to_string()),
                    r.psi0.map_or(String::new(), num),
                    r.replicates.to_string(),
                    r.hits.to_string(),
                    num(r.rate),
                    num(r.mean_width),
                ]
            })
            .collect(),
    };
    let report = CoverageReport {
        config: config.clone(),
        beta: config.idm.beta,
        replicates: reps,
        failed: failures.len(),
        delta_failed,
        raw_negative,
        min_raw_variance,
        nonfinite_variance,
        mean_lambda: if ok > 0 { lambda_sum / ok as f64 } else { f64::NAN },
        rows,
    };
    Ok(Outcome {
        report: to_json(&report),
        table,
        diagnostics,
        timings: BTreeMap::from([("replicates".into(), elapsed)]),
    })
}

/// Mean and standard error of the `n²`-rescaled squared error of one
/// estimator at one `n` (and `λ` for the IDM).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub method: String,
    pub lambda: Option<f64>,
    pub true_variance: f64,
    pub mean_scaled_sq_error: f64,
    pub std_error: f64,
    pub replicates: usize,
    pub failed: usize,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ConvergenceRow>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Squared error of the IDM against the simulated sampling variance across
/// `n` and `λ`. Replicate datasets at each `n` are shared by every `λ`.
pub fn run_convergence(config: &ExperimentConfig) -> Result<Outcome> {
    let dgp = config.dgp.as_ref().ok_or_else(|| HarnessError::Config("convergence needs a dgp".into()))?;
    let sweep = config.sweep.as_ref().ok_or_else(|| HarnessError::Config("convergence needs a sweep".into()))?;
    let options = FdidmOptions {
        central: config.idm.central_diff,
    };
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    let mut timings = BTreeMap::new();
    for &n in &sweep.n_values {
        let t = Instant::now();
        let dgp_n = dgp.with_n(n);
        let n_seed = stream_seed(config.root_seed, n as u64);
        // Reference: sampling variance of ψ(θ̂) over fresh datasets.
        let oracle_seed = stream_seed(n_seed, ORACLE_SALT);
        let oracle_vals: Vec<Result<f64>> = map_indexed(sweep.oracle_replicates, |r| {
            let seed = stream_seed(oracle_seed, r as u64);
            let problem = build_problem(config, source_from_dgp(&dgp_n, Some(seed))?, stream_seed(seed, SPLIT_SALT))?;
            let fit = fit_base(config, &problem, seed)?;
            problem.eval.component(0, &fit.theta).stage("evaluate")
        });
        let ok: Vec<f64> = oracle_vals.into_iter().filter_map(|v| v.ok()).collect();
        if ok.len() < 2 {
            return Err(HarnessError::Stage {
                stage: "oracle",
                source: idm_core::IdmError::TooManyFailures {
                    failed: sweep.oracle_replicates - ok.len(),
                    total: sweep.oracle_replicates,
                },
            });
        }
        let mean = ok.iter().sum::<f64>() / ok.len() as f64;
        let true_variance = ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (ok.len() - 1) as f64;

        let per_rep: Vec<Result<(Vec<Option<f64>>, Option<f64>)>> = map_indexed(sweep.replicates, |r| {
            let seed = stream_seed(n_seed, r as u64);
            let problem = build_problem(config, source_from_dgp(&dgp_n, Some(seed))?, stream_seed(seed, SPLIT_SALT))?;
            let fit = fit_base(config, &problem, seed)?;
            let idm: Vec<Option<f64>> = sweep
                .lambdas
                .iter()
                .map(|&l| {
                    implicit_variance(&problem.model, &problem.train, problem.eval.as_ref(), 0, l, &fit, &config.optimizer, options)
                        .ok()
                        .map(|v| v.value)
                })
                .collect();
            let delta = if config.baselines.delta {
                run_delta(config, &problem, &fit).ok().map(|m| m.covariance.get(0, 0))
            } else {
                None
            };
            Ok((idm, delta))
        });
        let reps: Vec<_> = per_rep.into_iter().filter_map(|r| r.ok()).collect();
        let lost = sweep.replicates - reps.len();
        let scale = (n * n) as f64;
        let mut push = |method: &str, lambda: Option<f64>, values: Vec<Option<f64>>| {
            let errs: Vec<f64> = values.iter().flatten().map(|v| scale * (v - true_variance).powi(2)).collect();
            let failed = lost + values.iter().filter(|v| v.is_none()).count();
            let (m, se) = if errs.is_empty() { (f64::NAN, f64::NAN) } else { mean_se(&errs) };
            rows.push(ConvergenceRow {
                n,
                method: method.into(),
                lambda,
                true_variance,
                mean_scaled_sq_error: m,
                std_error: se,
                replicates: errs.len(),
                failed,
            });
        };
        for (j, &l) in sweep.lambdas.iter().enumerate() {
            push("fdidm", Some(l), reps.iter().map(|(v, _)| v[j]).collect());
        }
        if config.baselines.delta {
            push("delta", None, reps.iter().map(|(_, d)| *d).collect());
        }
        timings.insert(format!("n={n}"), t.elapsed().as_secs_f64());
    }
    for r in &rows {
        if r.failed as f64 > config.coverage.max_failure_fraction * sweep.replicates as f64 {
            diagnostics.push(format!("n={} {} lambda={:?}: {} failed replicates", r.n, r.method, r.lambda, r.failed));
        }
    }
    let table = Table {
        header: vec!["n", "method", "lambda", "true_variance", "mean_scaled_sq_error", "std_error", "replicates", "failed"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.method.clone(),
                    r.lambda.map_or(String::new(), num),
                    num(r.true_variance),
                    num(r.mean_scaled_sq_error),
                    num(r.std_error),
                    r.replicates.to_string(),
                    r.failed.to_string(),
                ]
            })
            .collect(),
    };
    Ok(Outcome {
        report: to_json(&ConvergenceReport {
            config: config.clone(),
            rows,
        }),
        table,
        diagnostics,
        timings,
    })
}

#[derive(Debug, Serialize)]
pub struct RuntimeReport {
    pub config: ExperimentConfig,
    pub lambda: f64,
    pub methods: Vec<MethodResult>,
}

/// IDM (base fit plus refits) against the bootstrap, both on the calling
/// thread. Fit counts go into the report, seconds into the timings.
pub fn run_runtime(config: &ExperimentConfig) -> Result<Outcome> {
    let source = load_source(config, None)?;
    let problem = build_problem(config, source, stream_seed(config.root_seed, SPLIT_SALT))?;

    let t = Instant::now();
    let fit = fit_base(config, &problem, config.root_seed)?;
    let lambda = resolve_lambda(config, &problem, &fit)?;
    let idm = run_idm(config, &problem, &fit, lambda)?;
    let idm_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let boot = run_bootstrap(config, &problem, &fit, false)?;
    let boot_seconds = t.elapsed().as_secs_f64();

    let psi = problem.eval.values(&fit.theta).stage("evaluate")?;
    let mut table = Table {
        header: vec!["method", "component", "psi_hat", "variance", "lower", "upper", "fit_count"],
        rows: Vec::new(),
    };
    method_rows(&mut table, &psi, &idm);
    method_rows(&mut table, &psi, &boot);
    let timings = BTreeMap::from([("idm".to_string(), idm_seconds), ("bootstrap".to_string(), boot_seconds)]);
    Ok(Outcome {
        report: to_json(&RuntimeReport {
            config: resolved(config, lambda),
            lambda,
            methods: vec![idm, boot],
        }),
        table,
        diagnostics: Vec::new(),
        timings,
    })
}

#[derive(Debug, Serialize)]
pub struct FisherReport {
    pub config: ExperimentConfig,
    pub dim: usize,
    pub lambda: f64,
    /// Per-observation inverse Fisher information from coordinate refits.
    pub idm: CovMatrix,
    /// Inverse of `-(1/n)∇² log L(θ̂)`.
    pub direct: CovMatrix,
    pub relative_frobenius_error: f64,
}

/// Inverse Fisher information from `d` coordinate-regularized refits,
/// compared with inverting the Hessian.
pub fn run_fisher(config: &ExperimentConfig) -> Result<Outcome> {
    let source = load_source(config, None)?;
    let problem = build_problem(config, source, stream_seed(config.root_seed, SPLIT_SALT))?;
    let t = Instant::now();
    let fit = fit_base(config, &problem, config.root_seed)?;
    let lambda = resolve_lambda(config, &problem, &fit)?;
    let (model, data) = (&problem.model, &problem.train);
    let idm = fisher_inverse_idm(model, data, &fit, lambda, &config.optimizer, config.fisher_cap).stage("fisher idm")?;
    let idm_seconds = t.elapsed().as_secs_f64();

    let scale = match model.family() {
        Family::GaussianSse => model.sigma2_hat(&fit.theta, data).stage("fisher direct")?,
        _ => 1.0,
    };
    let hessian = model
        .hessian_log_likelihood(&fit.theta, data, DEFAULT_HESSIAN_CAP.max(config.fisher_cap))
        .stage("fisher direct")?;
    let info = hessian * (-1.0 / (data.len() as f64 * scale));
    let direct = info.clone().try_inverse().ok_or_else(|| HarnessError::Stage {
        stage: "fisher direct",
        source: idm_core::IdmError::Singular {
            min_eigenvalue: info.symmetric_eigen().eigenvalues.min(),
        },
    })?;
    let rel = (&idm - &direct).norm() / direct.norm();
    let d = idm.nrows();
    let mut table = Table {
        header: vec!["row", "col", "idm", "direct"],
        rows: Vec::new(),
    };
    for i in 0..d {
        for j in 0..d {
            table.rows.push(vec![i.to_string(), j.to_string(), num(idm[(i, j)]), num(direct[(i, j)])]);
        }
    }
    Ok(Outcome {
        report: to_json(&FisherReport {
            config: resolved(config, lambda),
            dim: d,
            lambda,
            idm: CovMatrix::from_matrix(&idm, true, false),
            direct: CovMatrix::from_matrix(&direct, false, false),
            relative_frobenius_error: rel,
        }),
        table,
        diagnostics: Vec::new(),
        timings: BTreeMap::from([("idm".into(), idm_seconds)]),
    })
}
