//! Python bindings: datasets, personalized fits, tuning, evaluation, theory
//! and the simulation study.

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use panreg::estimators::{self, CoefficientVector, Method};
use panreg::evaluation;
use panreg::geometry::{self, center, HypersphericalCoords};
use panreg::io;
use panreg::optimizer::{fit_personalized, OptimizerConfig, Parametrization};
use panreg::simulation::{run_study, SimulationConfig};
use panreg::theory::{self, TheoryInstance};
use panreg::tuning::{self, TuningGrid, TuningMethod};
use panreg::PanError;

create_exception!(panreg, PanregError, PyException);

fn err(e: PanError) -> PyErr {
    PanregError::new_err(e.to_string())
}

fn vector(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

/// Covariates and outcome on their original scale.
#[pyclass(name = "Dataset", module = "panreg", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: geometry::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (x, y, column_names = None))]
    fn new(x: Vec<Vec<f64>>, y: Vec<f64>, column_names: Option<Vec<String>>) -> PyResult<Self> {
        let n = x.len();
        let p = x.first().map_or(0, Vec::len);
        if x.iter().any(|r| r.len() != p) {
            return Err(PanregError::new_err("rows of x differ in length"));
        }
        let m = DMatrix::from_fn(n, p, |i, j| x[i][j]);
        let mut d = geometry::Dataset::new(m, vector(y)).map_err(err)?;
        if let Some(names) = column_names {
            d = d.with_column_names(names).map_err(err)?;
        }
        Ok(PyDataset { inner: d })
    }

    /// Read a headed numeric CSV; covariates default to every column but the outcome.
    #[staticmethod]
    #[pyo3(signature = (path, outcome, covariates = None))]
    fn from_csv(path: &str, outcome: &str, covariates: Option<Vec<String>>) -> PyResult<Self> {
        let d = io::ingest_csv(std::path::Path::new(path), outcome, covariates.as_deref()).map_err(err)?;
        Ok(PyDataset { inner: d })
    }

    /// Copy with covariates scaled to unit sample variance.
    fn standardized(&self) -> PyResult<Self> {
        Ok(PyDataset { inner: self.inner.standardized().map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn column_names(&self) -> Vec<String> {
        self.inner.column_names.clone()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.n() {
            return Err(PanregError::new_err(format!("row {i} out of range")));
        }
        Ok(self.inner.uncentered().row(i).as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, p={})", self.inner.n(), self.inner.p())
    }
}

#[pyclass(name = "PanFit", module = "panreg", frozen, get_all)]
struct PyPanFit {
    coefficients: Vec<f64>,
    direction: Vec<f64>,
    length: f64,
    lambda1: f64,
    lambda2: f64,
    c_value: Option<f64>,
    shrinkage_factor: f64,
    cos_sim: f64,
    ols_prediction: f64,
    /// Prediction `x0^T b` on the centered scale.
    prediction: f64,
    method: String,
}

impl From<estimators::PanFit> for PyPanFit {
    fn from(f: estimators::PanFit) -> Self {
        PyPanFit {
            prediction: f.prediction_by_dot(),
            coefficients: f.beta_hat.as_slice().to_vec(),
            direction: f.direction.as_slice().to_vec(),
            length: f.length,
            lambda1: f.lambda1,
            lambda2: f.lambda2,
            c_value: f.c_value,
            shrinkage_factor: f.shrinkage_factor,
            cos_sim: f.cos_sim,
            ols_prediction: f.ols_prediction,
            method: f.method.as_str().to_string(),
        }
    }
}

#[pymethods]
impl PyPanFit {
    fn __repr__(&self) -> String {
        format!(
            "PanFit(method={}, lambda1={}, lambda2={}, prediction={:.6})",
            self.method, self.lambda1, self.lambda2, self.prediction
        )
    }
}

#[pyfunction]
fn to_hyperspherical(v: Vec<f64>) -> (f64, Vec<f64>) {
    let c = geometry::to_hyperspherical(&v);
    (c.r, c.angles)
}

#[pyfunction]
fn from_hyperspherical(r: f64, angles: Vec<f64>) -> PyResult<Vec<f64>> {
    let c = HypersphericalCoords::new(r, angles).map_err(err)?;
    Ok(geometry::from_hyperspherical(&c))
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    geometry::cosine_similarity(&a, &b).map_err(err)
}

#[pyfunction]
fn shrinkage_factor(cos_sim: f64, beta_norm: f64, lambda1: f64, lambda2: f64) -> f64 {
    estimators::shrinkage_factor(cos_sim, beta_norm, lambda1, lambda2)
}

/// Closed-form PAN-ridge fit for an orthonormal design, from the OLS estimate.
#[pyfunction]
fn pan_ridge_fit_orthonormal(beta_ols: Vec<f64>, x0: Vec<f64>, lambda1: f64, lambda2: f64) -> PyResult<PyPanFit> {
    let b = CoefficientVector::from_slice(&beta_ols).map_err(err)?;
    Ok(estimators::pan_ridge_fit_orthonormal(&b, &vector(x0), lambda1, lambda2).map_err(err)?.into())
}

/// Personalized fit for target `x0` (original scale). The data are centered
/// internally and `x0` with the same means.
#[pyfunction]
#[pyo3(signature = (data, x0, lambda1 = 0.0, lambda2 = 0.0, parametrization = "cartesian", max_iterations = 500))]
fn fit(
    data: &PyDataset,
    x0: Vec<f64>,
    lambda1: f64,
    lambda2: f64,
    parametrization: &str,
    max_iterations: usize,
) -> PyResult<PyPanFit> {
    let mut cfg = OptimizerConfig { max_iterations, ..OptimizerConfig::default() };
    cfg.parametrization = match parametrization {
        "cartesian" => Parametrization::Cartesian,
        "hyperspherical" => Parametrization::Hyperspherical,
        other => return Err(PanregError::new_err(format!("unknown parametrization '{other}'"))),
    };
    let c = center(&data.inner).map_err(err)?;
    let x = c.center_point(&vector(x0)).map_err(err)?;
    Ok(fit_personalized(&c, &x, lambda1, lambda2, &cfg).map_err(err)?.into())
}

#[pyfunction]
fn ols(data: &PyDataset) -> PyResult<Vec<f64>> {
    let c = center(&data.inner).map_err(err)?;
    Ok(estimators::ols_fit(&c).map_err(err)?.as_slice().to_vec())
}

#[pyfunction]
fn ridge(data: &PyDataset, lambda1: f64) -> PyResult<Vec<f64>> {
    let c = center(&data.inner).map_err(err)?;
    Ok(estimators::ridge_fit(&c, lambda1).map_err(err)?.as_slice().to_vec())
}

/// Leave-one-out squared prediction error.
#[pyfunction]
#[pyo3(signature = (data, method, lambda1 = 0.0, lambda2 = 0.0))]
fn loocv(data: &PyDataset, method: &str, lambda1: f64, lambda2: f64) -> PyResult<f64> {
    let m = Method::parse(method).map_err(err)?;
    let r = evaluation::loocv(&data.inner, m, lambda1, lambda2).map_err(err)?;
    Ok(r.value.unwrap_or(f64::NAN))
}

#[pyclass(name = "TuningResult", module = "panreg", frozen, get_all)]
struct PyTuningResult {
    lambda1_values: Vec<f64>,
    lambda2_values: Vec<f64>,
    mse_surface: Vec<Vec<f64>>,
    selected: (f64, f64),
    sigma_hat: f64,
    b: usize,
    seed: u64,
}

#[pymethods]
impl PyTuningResult {
    fn __repr__(&self) -> String {
        format!("TuningResult(selected={:?}, b={}, seed={})", self.selected, self.b, self.seed)
    }
}

/// Parametric bootstrap search. `method` is one of ridge, pan, pan_ridge or
/// pan_given_lambda1 (with `lambda1`).
#[pyfunction]
#[pyo3(signature = (data, method = "pan_ridge", lambda1_grid = None, lambda2_grid = None, b = 500, seed = 0, lambda1 = None))]
fn bootstrap_tune(
    data: &PyDataset,
    method: &str,
    lambda1_grid: Option<Vec<f64>>,
    lambda2_grid: Option<Vec<f64>>,
    b: usize,
    seed: u64,
    lambda1: Option<f64>,
) -> PyResult<PyTuningResult> {
    let m = TuningMethod::parse(&method.replace('-', "_"), lambda1).map_err(err)?;
    let grid = TuningGrid::new(
        lambda1_grid.unwrap_or_else(|| tuning::DEFAULT_LAMBDA1.to_vec()),
        lambda2_grid.unwrap_or_else(|| tuning::DEFAULT_LAMBDA2.to_vec()),
        b,
        seed,
    )
    .map_err(err)?;
    let c = center(&data.inner).map_err(err)?;
    let r = tuning::bootstrap_tune(&c, &grid, m).map_err(err)?;
    Ok(PyTuningResult {
        lambda1_values: r.lambda1_values,
        lambda2_values: r.lambda2_values,
        mse_surface: r.mse_surface,
        selected: r.selected,
        sigma_hat: r.sigma_hat,
        b: r.b,
        seed: r.seed,
    })
}

#[pyfunction]
fn proportion_within(t: f64, p: usize) -> PyResult<f64> {
    theory::proportion_within(t, p).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x0, beta, sigma, n, lambda1 = 0.0))]
fn mse_derivative_at_zero(x0: Vec<f64>, beta: Vec<f64>, sigma: f64, n: usize, lambda1: f64) -> PyResult<f64> {
    let inst = TheoryInstance::new(vector(x0), vector(beta), sigma, n, lambda1).map_err(err)?;
    theory::mse_derivative_at_zero(&inst).map_err(err)
}

#[pyfunction]
fn lambda1_star(x0: Vec<f64>, beta: Vec<f64>, sigma: f64) -> PyResult<f64> {
    theory::lambda1_star(&vector(x0), &vector(beta), sigma).map_err(err)
}

#[pyfunction]
fn oracle_fridge_lambda(x0: Vec<f64>, beta: Vec<f64>, sigma: f64) -> PyResult<f64> {
    theory::oracle_fridge_lambda(&vector(x0), &vector(beta), sigma).map_err(err)
}

/// One cell of the simulation study; returns `(method, mean_mse, std_error)`
/// rows.
#[pyfunction]
#[pyo3(signature = (p, beta_value, replications = 20, b = 100, seed = 0))]
fn simulate(p: usize, beta_value: f64, replications: usize, b: usize, seed: u64) -> PyResult<Vec<(String, f64, f64)>> {
    let cfg = SimulationConfig::study(p, beta_value, replications, b, seed);
    let report = run_study(&cfg).map_err(err)?;
    Ok(report
        .methods
        .iter()
        .map(|m| (m.method.as_str().to_string(), m.mean_mse, m.std_error))
        .collect())
}

#[pymodule]
#[pyo3(name = "panreg")]
fn panreg_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PanregError", m.py().get_type::<PanregError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPanFit>()?;
    m.add_class::<PyTuningResult>()?;
    m.add_function(wrap_pyfunction!(to_hyperspherical, m)?)?;
    m.add_function(wrap_pyfunction!(from_hyperspherical, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(shrinkage_factor, m)?)?;
    m.add_function(wrap_pyfunction!(pan_ridge_fit_orthonormal, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(ols, m)?)?;
    m.add_function(wrap_pyfunction!(ridge, m)?)?;
    m.add_function(wrap_pyfunction!(loocv, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_tune, m)?)?;
    m.add_function(wrap_pyfunction!(proportion_within, m)?)?;
    m.add_function(wrap_pyfunction!(mse_derivative_at_zero, m)?)?;
    m.add_function(wrap_pyfunction!(lambda1_star, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_fridge_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
