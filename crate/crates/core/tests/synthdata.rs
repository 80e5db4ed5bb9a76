//! Large-sample checks of the data-generating processes.

use idm_core::idm::{fit_mle, EvalFn};
use idm_core::optim::{Method, OptimizerConfig};
use idm_core::synthdata::{gen_logistic_class, gen_newsvendor, quadratic_mean, DgpKind, DgpSpec, UnmetDemand};
use idm_core::{Family, LikelihoodModel, PredictorSpec};

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(Z > z)`, accurate far into the upper tail.
fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// `E[max(d - g(x), 0)]` for `x ~ N(0,1)`, `d | x ~ N(2 + x, sd²)`
/// truncated at zero, integrated over `x` with Simpson's rule.
fn expected_unmet_demand(intercept: f64, slope: f64, sd: f64) -> f64 {
    let given_x = |x: f64| {
        let mu = 2.0 + x;
        let g = intercept + slope * x;
        let z = (g.max(0.0) - mu) / sd;
        let tail = sd * normal_pdf(z) + (mu - g) * normal_sf(z);
        tail / normal_sf(-mu / sd)
    };
    let (a, b, steps) = (-9.0, 9.0, 18_000);
    let h = (b - a) / steps as f64;
    let f = |x: f64| given_x(x) * normal_pdf(x);
    let mut sum = f(a) + f(b);
    for i in 1..steps {
        sum += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[test]
fn newsvendor_unmet_demand_matches_monte_carlo() {
    let spec = DgpSpec::new(DgpKind::Newsvendor { eval_size: Some(1_000_000) }, 10, 99);
    let nv = gen_newsvendor(&spec).unwrap();
    let model = LikelihoodModel::new(PredictorSpec::linear(), Family::GaussianSse, 1).unwrap();
    let eval = UnmetDemand {
        model,
        eval_set: nv.eval_set,
    };
    for theta in [[2.0, 1.0], [1.5, 0.5], [2.5, 1.2]] {
        let units = eval.unit_values(&theta).unwrap().unwrap();
        let m = units.len() as f64;
        let mean = units.iter().sum::<f64>() / m;
        let var = units.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let se = (var / m).sqrt();
        let exact = expected_unmet_demand(theta[0], theta[1], spec.noise());
        assert!((mean - exact).abs() <= 3.0 * se, "{theta:?}: MC {mean} ± {se}, quadrature {exact}");
    }
}

#[test]
fn quadratic_noise_level() {
    let data = DgpSpec::new(DgpKind::Quadratic, 100_000, 3).generate().unwrap();
    let n = data.len() as f64;
    let ss: f64 = (0..data.len()).map(|i| (data.y(i) - quadratic_mean(data.x(i)[0])).powi(2)).sum();
    let sd = (ss / n).sqrt();
    assert!((0.08..=0.12).contains(&sd), "{sd}");
}

#[test]
fn logistic_label_rates() {
    let rate = |theta0: &[f64]| {
        let data = gen_logistic_class(theta0, 10_000, 17).unwrap();
        data.targets().iter().sum::<f64>() / data.len() as f64
    };
    let balanced = rate(&[0.0, 0.0, 0.0]);
    assert!((0.45..=0.55).contains(&balanced), "{balanced}");
    let saturated = rate(&[10.0, 0.0, 0.0]);
    assert!(saturated > 0.99, "{saturated}");
}

#[test]
fn logistic_mle_recovers_truth() {
    let theta0 = [0.3, 1.0, -0.5];
    let data = gen_logistic_class(&theta0, 50_000, 23).unwrap();
    let model = LikelihoodModel::new(PredictorSpec::linear(), Family::BernoulliLogit, 2).unwrap();
    let config = OptimizerConfig {
        method: Method::Lbfgs,
        convergence_tol: 1e-10,
        ..OptimizerConfig::default()
    };
    let fit = fit_mle(&model, &data, &[0.0; 3], &config).unwrap();
    assert!(fit.converged);
    let err: f64 = fit.theta.iter().zip(theta0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err <= 0.05, "{:?}", fit.theta);
}
