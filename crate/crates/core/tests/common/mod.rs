//! Property checks shared by the proptest suite and the acceptance runner.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand_distr::{Distribution, StandardNormal};

use panreg::estimators::{pan_predict, pan_ridge_fit_orthonormal, pan_ridge_matrix, CoefficientVector};
use panreg::geometry::{from_hyperspherical, to_hyperspherical, Dataset, HypersphericalCoords};
use panreg::parallel::{rng_stream, with_workers};
use panreg::simulation::{run_study, SimMethod, SimulationConfig};
use panreg::theory::{mc_mse_curve, TheoryInstance};
use panreg::tuning::{bootstrap_tune, TuningGrid, TuningMethod};

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() / scale
}

/// Nonzero vectors of dimension 2..=20 with entries spanning several
/// magnitudes.
pub fn vectors() -> impl Strategy<Value = Vec<f64>> {
    (2usize..=20)
        .prop_flat_map(|p| proptest::collection::vec((-1.0e3f64..1.0e3, -3i32..=3), p))
        .prop_map(|v| v.into_iter().map(|(m, e)| m * 10f64.powi(e)).collect::<Vec<f64>>())
        .prop_filter("nonzero", |v| v.iter().any(|x| *x != 0.0))
}

/// One closed-form instance: `(beta_ols, x0, l1, l2)` with p in 2..=15.
pub fn instances() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64, f64)> {
    (2usize..=15)
        .prop_flat_map(|p| {
            (
                proptest::collection::vec(-5.0f64..5.0, p),
                proptest::collection::vec(-5.0f64..5.0, p),
                0.0f64..10.0,
                -10.0f64..10.0,
            )
        })
        .prop_filter("nonzero", |(b, x, _, _)| {
            b.iter().map(|v| v * v).sum::<f64>() > 1e-6 && x.iter().map(|v| v * v).sum::<f64>() > 1e-6
        })
}

pub fn round_trip(v: &[f64]) -> Result<(), TestCaseError> {
    let c = to_hyperspherical(v);
    let back = from_hyperspherical(&c);
    let e = rel_err(&back, v);
    prop_assert!(e <= 1e-10, "round trip error {e:e} for {v:?}");
    Ok(())
}

pub fn round_trip_positive_scalar(x: f64) -> Result<(), TestCaseError> {
    let c = to_hyperspherical(&[x]);
    prop_assert!(c.angles.is_empty());
    let back = from_hyperspherical(&c);
    prop_assert!((back[0] - x).abs() <= 1e-10 * x);
    Ok(())
}

pub fn norm_preserved(r: f64, angles: &[f64]) -> Result<(), TestCaseError> {
    let c = HypersphericalCoords::new(r, angles.to_vec()).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let v = from_hyperspherical(&c);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    prop_assert!((norm - r).abs() <= 1e-12 * r, "norm {norm} vs r {r}");
    Ok(())
}

/// Unit direction, length identity, eigen residual and prediction routes of
/// one closed-form fit.
pub fn closed_form_invariants(b: &[f64], x: &[f64], l1: f64, l2: f64) -> Result<(), TestCaseError> {
    let beta = CoefficientVector::from_slice(b).unwrap();
    let x0 = DVector::from_column_slice(x);
    let fit = pan_ridge_fit_orthonormal(&beta, &x0, l1, l2).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let g = &fit.direction;

    let unit = (g.norm() - 1.0).abs();
    prop_assert!(unit <= 1e-12, "|gamma| - 1 = {unit:e}");

    let r_expected = beta.as_vector().dot(g) / (1.0 + l1);
    let scale = beta.norm().max(1.0);
    prop_assert!(
        (fit.length - r_expected).abs() <= 1e-10 * scale,
        "length {} vs {}",
        fit.length,
        r_expected
    );

    let m = pan_ridge_matrix(beta.as_vector(), &x0, l1, l2);
    let mg = &m * g;
    let resid = (&mg - g * g.dot(&mg)).norm();
    prop_assert!(resid < 1e-8 * m.norm().max(f64::MIN_POSITIVE), "eigen residual {resid:e}");

    let by_factor = pan_predict(&fit);
    let by_dot = fit.prediction_by_dot();
    let pscale = x0.norm() * beta.norm();
    prop_assert!((by_factor - by_dot).abs() <= 1e-10 * pscale.max(1.0), "{by_factor} vs {by_dot}");
    Ok(())
}

fn centered_data(seed: u64, n: usize, p: usize) -> Dataset {
    let mut rng = rng_stream(seed, 0);
    let x = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let b = DVector::from_fn(p, |j, _| 0.3 - 0.1 * j as f64);
    let e: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let y = &x * b + e * 0.5;
    panreg::geometry::center(&Dataset::new(x, y).unwrap()).unwrap()
}

/// Same seed gives bit-identical tuning surfaces, Monte-Carlo curves and
/// simulation summaries with 1 and 3 workers.
pub fn deterministic_across_workers(seed: u64) -> Result<(), TestCaseError> {
    let data = centered_data(seed, 25, 3);
    let grid = TuningGrid::new(vec![0.0, 1.0, 4.0], vec![-1.0, 0.0, 1.0, 3.0], 12, seed).unwrap();
    let tune = |w| with_workers(Some(w), || bootstrap_tune(&data, &grid, TuningMethod::PanRidge)).unwrap().unwrap();
    let (t1, t3) = (tune(1), tune(3));
    prop_assert_eq!(&t1, &t3);

    let inst = TheoryInstance::new(
        DVector::from_vec(vec![1.0, 0.0, 0.5]),
        DVector::from_vec(vec![0.2, 0.1, -0.3]),
        1.0,
        30,
        0.5,
    )
    .unwrap();
    let mc = |w| with_workers(Some(w), || mc_mse_curve(&inst, &[-1.0, 0.0, 2.0], 5000, seed)).unwrap().unwrap();
    prop_assert_eq!(mc(1), mc(3));

    let mut cfg = SimulationConfig::study(3, 0.1, 3, 10, seed);
    cfg.n = 20;
    cfg.sigma = 1.0 / 20f64.sqrt();
    cfg.test_size = 30;
    cfg.methods = vec![SimMethod::Ols, SimMethod::Pan, SimMethod::PanRidgeJoint];
    let sim = |w| with_workers(Some(w), || run_study(&cfg)).unwrap().unwrap().methods;
    prop_assert_eq!(sim(1), sim(3));
    Ok(())
}
