//! Prediction-error metrics: test-set MSE against known coefficients,
//! leave-one-out cross-validation and per-observation personalized reports.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PanError, Result};
use crate::estimators::{ols_fit, Method};
use crate::geometry::{center, Dataset};
use crate::optimizer::{fit_personalized, OptimizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    LoocvError,
    TestMseVsTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    /// 1-based row number in the input data.
    pub index: usize,
    pub cos_sim: f64,
    pub ols_prediction: f64,
    pub pan_prediction: f64,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: Method,
    pub lambda1: f64,
    pub lambda2: f64,
    pub metric: Option<MetricName>,
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ols_coefficients: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_observation: Option<Vec<ObservationRecord>>,
}

/// Mean of `(x_i^T b_i - x_i^T b)^2`. `beta_hats` holds one estimate per test
/// point, or a single estimate shared by all.
pub fn test_mse(beta_hats: &[DVector<f64>], x_test: &[DVector<f64>], beta_true: &DVector<f64>) -> Result<f64> {
    if x_test.is_empty() {
        return Err(PanError::InsufficientData("empty test set".into()));
    }
    if beta_hats.len() != 1 && beta_hats.len() != x_test.len() {
        return Err(PanError::Dimension { expected: x_test.len(), got: beta_hats.len() });
    }
    let p = beta_true.len();
    let mut sum = 0.0;
    for (i, x) in x_test.iter().enumerate() {
        let b = if beta_hats.len() == 1 { &beta_hats[0] } else { &beta_hats[i] };
        if x.len() != p || b.len() != p {
            return Err(PanError::Dimension { expected: p, got: if x.len() != p { x.len() } else { b.len() } });
        }
        sum += (x.dot(b) - x.dot(beta_true)).powi(2);
    }
    Ok(sum / x_test.len() as f64)
}

fn method_lambdas(method: Method, lambda1: f64, lambda2: f64) -> (f64, f64) {
    match method {
        Method::Ols => (0.0, 0.0),
        Method::Ridge => (lambda1, 0.0),
        Method::Pan => (0.0, lambda2),
        Method::PanRidge => (lambda1, lambda2),
    }
}

/// Leave-one-out prediction error with tuning parameters held fixed. Each fold
/// is re-centered on its own training rows.
pub fn loocv(data: &Dataset, method: Method, lambda1: f64, lambda2: f64) -> Result<EvaluationReport> {
    loocv_with(data, method, lambda1, lambda2, &OptimizerConfig::default())
}

pub fn loocv_with(
    data: &Dataset,
    method: Method,
    lambda1: f64,
    lambda2: f64,
    config: &OptimizerConfig,
) -> Result<EvaluationReport> {
    let raw = data.uncentered();
    let n = raw.n();
    if n < 3 {
        return Err(PanError::InsufficientData(format!("LOOCV needs n >= 3, got {n}")));
    }
    let (l1, l2) = method_lambdas(method, lambda1, lambda2);
    let errors: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let fold = center(&raw.without_row(i)?)?;
            let x0 = fold.center_point(&raw.row(i))?;
            let pred = if x0.norm_squared() == 0.0 {
                fold.y_mean
            } else {
                fold.y_mean + fit_personalized(&fold, &x0, l1, l2, config)?.prediction_by_dot()
            };
            Ok((raw.y[i] - pred).powi(2))
        })
        .collect();
    let mut sum = 0.0;
    for e in errors {
        sum += e?;
    }
    Ok(EvaluationReport {
        method,
        lambda1: l1,
        lambda2: l2,
        metric: Some(MetricName::LoocvError),
        value: Some(sum / n as f64),
        ols_coefficients: None,
        per_observation: None,
    })
}

/// LOOCV error of predicting every row by the mean of the others.
pub fn loocv_mean_baseline(data: &Dataset) -> Result<f64> {
    let y = &data.uncentered().y;
    let n = y.len();
    if n < 3 {
        return Err(PanError::InsufficientData(format!("LOOCV needs n >= 3, got {n}")));
    }
    let total = y.sum();
    let nf = n as f64;
    Ok(y.iter().map(|&v| (v - (total - v) / (nf - 1.0)).powi(2)).sum::<f64>() / nf)
}

/// OLS and PAN fits for the `k` rows with the smallest and the `k` with the
/// largest `|cos(x_i, b_ols)|`, smallest first, then largest first.
/// Predictions are on the centered outcome scale.
pub fn per_observation_report(data: &Dataset, lambda2: f64, k_extremes: usize) -> Result<EvaluationReport> {
    per_observation_report_with(data, lambda2, k_extremes, &OptimizerConfig::default())
}

pub fn per_observation_report_with(
    data: &Dataset,
    lambda2: f64,
    k_extremes: usize,
    config: &OptimizerConfig,
) -> Result<EvaluationReport> {
    let n = data.n();
    if k_extremes == 0 || n < 2 * k_extremes {
        return Err(PanError::InsufficientData(format!("need n >= 2k with k >= 1 (n = {n}, k = {k_extremes})")));
    }
    let c = center(data)?;
    let beta = ols_fit(&c)?;
    let bn = beta.norm();
    if bn == 0.0 {
        return Err(PanError::Degenerate("OLS estimate has zero length".into()));
    }
    let mut ranked: Vec<(usize, f64)> = (0..n)
        .map(|i| {
            let x = c.row(i);
            let xn = x.norm();
            let cos = if xn > 0.0 { (x.dot(beta.as_vector()) / (xn * bn)).clamp(-1.0, 1.0) } else { 0.0 };
            (i, cos)
        })
        .collect();
    ranked.sort_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(a.0.cmp(&b.0)));
    let mut chosen: Vec<(usize, f64)> = ranked[..k_extremes].to_vec();
    chosen.extend(ranked[n - k_extremes..].iter().rev());

    let mut records = Vec::with_capacity(chosen.len());
    for (i, cos) in chosen {
        let x = c.row(i);
        let ols_prediction = x.dot(beta.as_vector());
        let (pan_prediction, coefficients) = if x.norm_squared() == 0.0 {
            (0.0, beta.as_slice().to_vec())
        } else {
            let fit = fit_personalized(&c, &x, 0.0, lambda2, config)?;
            (fit.prediction_by_dot(), fit.beta_hat.as_slice().to_vec())
        };
        records.push(ObservationRecord { index: i + 1, cos_sim: cos, ols_prediction, pan_prediction, coefficients });
    }
    Ok(EvaluationReport {
        method: Method::Pan,
        lambda1: 0.0,
        lambda2,
        metric: None,
        value: None,
        ols_coefficients: Some(beta.as_slice().to_vec()),
        per_observation: Some(records),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parallel::rng_stream;
    use nalgebra::DMatrix;
    use rand_distr::{Distribution, StandardNormal};

    fn noisy(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = rng_stream(seed, 0);
        let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let b = DVector::from_fn(p, |j, _| 0.5 - 0.2 * j as f64);
        let e = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let y = &x * b + e + DVector::from_element(n, 2.0);
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn test_mse_examples() {
        let b = DVector::from_vec(vec![0.3, -1.0]);
        let xs = vec![DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![-1.0, 0.5])];
        assert_eq!(test_mse(&[b.clone()], &xs, &b).unwrap(), 0.0);
        let one = test_mse(
            &[DVector::from_vec(vec![1.0, 1.0])],
            &[DVector::from_vec(vec![1.0, 0.0])],
            &DVector::from_vec(vec![0.0, 1.0]),
        )
        .unwrap();
        assert_eq!(one, 1.0);
        assert!(test_mse(&[b.clone(), b.clone(), b.clone()], &xs, &b).is_err());
        assert!(test_mse(&[b.clone()], &[DVector::zeros(3)], &b).is_err());
    }

    #[test]
    fn exact_fit_has_zero_loocv() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 4.0]);
        let y = DVector::from_vec(vec![3.0, 5.0, 9.0]);
        let d = Dataset::new(x, y).unwrap();
        assert!(loocv(&d, Method::Ols, 0.0, 0.0).unwrap().value.unwrap() < 1e-10);
        let tiny = Dataset::new(DMatrix::from_element(2, 1, 1.0), DVector::from_vec(vec![1.0, 2.0])).unwrap();
        assert!(loocv(&tiny, Method::Ols, 0.0, 0.0).is_err());
    }

    #[test]
    fn pan_ridge_without_penalty_is_ols() {
        let d = noisy(25, 3, 1);
        let a = loocv(&d, Method::Ols, 0.0, 0.0).unwrap().value.unwrap();
        let b = loocv(&d, Method::PanRidge, 0.0, 0.0).unwrap().value.unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_baseline_is_inflated_variance() {
        let d = noisy(20, 2, 2);
        let y = &d.y;
        let n = y.len() as f64;
        let s2 = y.iter().map(|v| (v - y.mean()).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((loocv_mean_baseline(&d).unwrap() - n * s2 / (n - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn loocv_matches_hat_matrix_shortcut_for_ols() {
        // LOO residuals of OLS with intercept are e_i / (1 - h_ii)
        let d = noisy(30, 3, 3);
        let mut xi = DMatrix::from_element(30, 4, 1.0);
        xi.view_mut((0, 1), (30, 3)).copy_from(&d.x);
        let xtx_inv = (xi.transpose() * &xi).try_inverse().unwrap();
        let hat = &xi * xtx_inv * xi.transpose();
        let beta = (xi.transpose() * &xi).lu().solve(&(xi.transpose() * &d.y)).unwrap();
        let resid = &d.y - &xi * beta;
        let expected = (0..30).map(|i| (resid[i] / (1.0 - hat[(i, i)])).powi(2)).sum::<f64>() / 30.0;
        let got = loocv(&d, Method::Ols, 0.0, 0.0).unwrap().value.unwrap();
        assert!((got - expected).abs() < 1e-10);
    }

    #[test]
    fn personalized_loocv_runs_and_ridge_uses_lambda1() {
        let d = noisy(20, 3, 4);
        let pan = loocv(&d, Method::Pan, 5.0, 2.5).unwrap();
        assert_eq!((pan.lambda1, pan.lambda2), (0.0, 2.5));
        assert!(pan.value.unwrap() > 0.0);
        let ridge = loocv(&d, Method::Ridge, 4.0, 9.0).unwrap();
        assert_eq!((ridge.lambda1, ridge.lambda2), (4.0, 0.0));
    }

    #[test]
    fn report_without_penalty_repeats_ols() {
        let d = noisy(20, 3, 5);
        let rep = per_observation_report(&d, 0.0, 3).unwrap();
        let ols = rep.ols_coefficients.clone().unwrap();
        let recs = rep.per_observation.unwrap();
        assert_eq!(recs.len(), 6);
        for r in &recs {
            assert_eq!(r.coefficients, ols);
            assert_eq!(r.ols_prediction, r.pan_prediction);
            assert!(r.cos_sim.abs() <= 1.0);
        }
        assert!(recs[0].cos_sim.abs() <= recs[2].cos_sim.abs());
        assert!(recs[3].cos_sim.abs() >= recs[5].cos_sim.abs());
        assert!(recs[2].cos_sim.abs() <= recs[5].cos_sim.abs());
        assert!(per_observation_report(&d, 1.0, 11).is_err());
    }

    #[test]
    fn report_ranking_ignores_outcome_scale() {
        let d = noisy(20, 3, 6);
        let scaled = Dataset::new(d.x.clone(), &d.y * 7.5).unwrap();
        let a: Vec<usize> = per_observation_report(&d, 1.0, 3).unwrap().per_observation.unwrap().iter().map(|r| r.index).collect();
        let b: Vec<usize> = per_observation_report(&scaled, 1.0, 3).unwrap().per_observation.unwrap().iter().map(|r| r.index).collect();
        assert_eq!(a, b);
    }
}
