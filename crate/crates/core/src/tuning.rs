//! Parametric-bootstrap selection of `(l1, l2)`.
//!
//! Outcomes are resimulated from the OLS fit, `Y(r) = X b_ols + e`,
//! `e ~ N(0, s^2 I)`, every in-sample row is predicted with the personalized
//! fit for that row, and the grid point with the smallest average squared
//! deviation from `x_i^T b_ols` wins.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PanError, Result};
use crate::estimators::{ols_fit, pan_ridge_prediction};
use crate::geometry::{orthogonal_design_scale, Dataset};
use crate::optimizer::{fit_with_problem, OptimizerConfig, Problem};
use crate::parallel::rng_stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub sigma: f64,
    pub sigma2: f64,
    pub df: usize,
}

/// Residual standard deviation of the OLS fit with `n - p` degrees of freedom.
pub fn estimate_sigma(data: &Dataset) -> Result<SigmaEstimate> {
    let (n, p) = (data.n(), data.p());
    if n <= p {
        return Err(PanError::InsufficientData(format!("need n > p for a variance estimate, got n = {n}, p = {p}")));
    }
    let beta = ols_fit(data)?;
    let rss = (&data.y - &data.x * beta.as_vector()).norm_squared();
    let sigma2 = rss / (n - p) as f64;
    Ok(SigmaEstimate { sigma: sigma2.sqrt(), sigma2, df: n - p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub lambda1_values: Vec<f64>,
    pub lambda2_values: Vec<f64>,
    pub b: usize,
    pub seed: u64,
}

pub const DEFAULT_LAMBDA1: [f64; 7] = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
pub const DEFAULT_LAMBDA2: [f64; 15] = [-8.0, -4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0, 12.0];

impl TuningGrid {
    pub fn new(lambda1_values: Vec<f64>, lambda2_values: Vec<f64>, b: usize, seed: u64) -> Result<Self> {
        let grid = TuningGrid { lambda1_values, lambda2_values, b, seed };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_defaults(b: usize, seed: u64) -> Self {
        TuningGrid { lambda1_values: DEFAULT_LAMBDA1.to_vec(), lambda2_values: DEFAULT_LAMBDA2.to_vec(), b, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda1_values.is_empty() || self.lambda2_values.is_empty() {
            return Err(PanError::Config("tuning grids must be non-empty".into()));
        }
        if self.b == 0 {
            return Err(PanError::Config("bootstrap size B must be >= 1".into()));
        }
        if self.lambda1_values.iter().chain(&self.lambda2_values).any(|v| !v.is_finite()) {
            return Err(PanError::Config("tuning values must be finite".into()));
        }
        if self.lambda1_values.iter().any(|&v| v < 0.0) {
            return Err(PanError::Config("lambda1 values must be >= 0".into()));
        }
        let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !sorted(&self.lambda1_values) || !sorted(&self.lambda2_values) {
            return Err(PanError::Config("tuning grids must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lambda1")]
pub enum TuningMethod {
    RidgeOnly,
    PanOnly,
    PanRidge,
    PanGivenLambda1(f64),
}

impl TuningMethod {
    pub fn parse(s: &str, lambda1: Option<f64>) -> Result<Self> {
        match s {
            "ridge_only" | "ridge" => Ok(TuningMethod::RidgeOnly),
            "pan_only" | "pan" => Ok(TuningMethod::PanOnly),
            "pan_ridge" => Ok(TuningMethod::PanRidge),
            "pan_given_lambda1" => lambda1
                .map(TuningMethod::PanGivenLambda1)
                .ok_or_else(|| PanError::Config("pan_given_lambda1 needs a lambda1 value".into())),
            other => Err(PanError::Config(format!("unknown tuning method '{other}'"))),
        }
    }

    /// The `(l1, l2)` axes actually searched.
    pub fn axes(&self, grid: &TuningGrid) -> (Vec<f64>, Vec<f64>) {
        match *self {
            TuningMethod::RidgeOnly => (grid.lambda1_values.clone(), vec![0.0]),
            TuningMethod::PanOnly => (vec![0.0], grid.lambda2_values.clone()),
            TuningMethod::PanRidge => (grid.lambda1_values.clone(), grid.lambda2_values.clone()),
            TuningMethod::PanGivenLambda1(l1) => (vec![l1], grid.lambda2_values.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub method: TuningMethod,
    pub lambda1_values: Vec<f64>,
    pub lambda2_values: Vec<f64>,
    /// Rows follow `lambda1_values`, columns `lambda2_values`.
    pub mse_surface: Vec<Vec<f64>>,
    pub selected: (f64, f64),
    pub sigma_hat: f64,
    pub b: usize,
    pub seed: u64,
    pub failed_replicates: Vec<Vec<usize>>,
}

impl TuningResult {
    pub fn min_mse(&self) -> f64 {
        self.mse_surface.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Minimizing `l2` for each row of the surface.
    pub fn lambda2_argmin_by_row(&self) -> Vec<f64> {
        self.mse_surface
            .iter()
            .map(|row| {
                let cols: Vec<(f64, f64)> = row.iter().copied().zip(self.lambda2_values.iter().copied()).collect();
                pick(&cols.iter().map(|&(v, l2)| (v, 0.0, l2)).collect::<Vec<_>>()).2
            })
            .collect()
    }
}

/// Maximum tolerated share of failed replicates at a grid point.
pub const MAX_FAILURE_RATE: f64 = 0.01;

const TIE_TOL: f64 = 1e-12;

/// Minimum over `(value, l1, l2)`; ties go to the smallest `|l2|`, then the
/// smallest `l1`.
fn pick(points: &[(f64, f64, f64)]) -> (f64, f64, f64) {
    let mut best = points[0];
    for &pt in &points[1..] {
        let scale = TIE_TOL * (1.0 + best.0.abs());
        let better = if pt.0 < best.0 - scale {
            true
        } else if pt.0 <= best.0 + scale {
            (pt.2.abs(), pt.1) < (best.2.abs(), best.1)
        } else {
            false
        };
        if better {
            best = pt;
        }
    }
    best
}

/// Bootstrap coefficient draws shared by every grid point.
struct Replicates {
    beta: Vec<DVector<f64>>,
    xty: Vec<DVector<f64>>,
    yty: Vec<f64>,
}

fn draw_replicates(x: &DMatrix<f64>, center: &DVector<f64>, sigma: f64, b: usize, seed: u64) -> Result<Replicates> {
    let gram = x.tr_mul(x);
    let chol = gram
        .cholesky()
        .ok_or_else(|| PanError::Rank("design matrix is rank deficient".into()))?;
    let signal = x * center;
    let n = x.nrows();
    let draws: Vec<(DVector<f64>, DVector<f64>, f64)> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_stream(seed, r as u64);
            let y = DVector::from_fn(n, |i, _| {
                let e: f64 = StandardNormal.sample(&mut rng);
                signal[i] + sigma * e
            });
            let xty = x.tr_mul(&y);
            (chol.solve(&xty), xty, y.norm_squared())
        })
        .collect();
    let mut reps = Replicates { beta: Vec::with_capacity(b), xty: Vec::with_capacity(b), yty: Vec::with_capacity(b) };
    for (beta, xty, yty) in draws {
        reps.beta.push(beta);
        reps.xty.push(xty);
        reps.yty.push(yty);
    }
    Ok(reps)
}

/// Closed-form surface for `X^T X = s I`. Each replicate is summarized by the
/// predictions `x_i^T b(r)` and `|b(r)|^2`.
fn orthogonal_surface(
    points: &[DVector<f64>],
    targets: &[f64],
    betas: &[DVector<f64>],
    scale: f64,
    axes: &(Vec<f64>, Vec<f64>),
) -> Vec<Vec<f64>> {
    let q: Vec<f64> = points.iter().map(|x| x.norm_squared()).collect();
    let summaries: Vec<(Vec<f64>, f64)> = betas
        .iter()
        .map(|b| (points.iter().map(|x| x.dot(b)).collect(), b.norm_squared()))
        .collect();
    let count = (betas.len() * points.len()) as f64;
    let cells: Vec<(f64, f64)> = axes.0.iter().flat_map(|&l1| axes.1.iter().map(move |&l2| (l1, l2))).collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(l1, l2)| {
            let (l1s, l2s) = (l1 / scale, l2 / scale);
            let mut sum = 0.0;
            for (m, b2) in &summaries {
                for i in 0..m.len() {
                    sum += (pan_ridge_prediction(m[i], *b2, q[i], l1s, l2s) - targets[i]).powi(2);
                }
            }
            sum / count
        })
        .collect();
    values.chunks(axes.1.len()).map(|c| c.to_vec()).collect()
}

/// Numerical surface for general designs; returns per-cell means and failed
/// replicate counts.
fn general_surface(
    x: &DMatrix<f64>,
    points: &[DVector<f64>],
    targets: &[f64],
    reps: &Replicates,
    axes: &(Vec<f64>, Vec<f64>),
    config: &OptimizerConfig,
) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let gram = x.tr_mul(x);
    let p = gram.nrows();
    let b = reps.beta.len();
    let cells: Vec<(f64, f64)> = axes.0.iter().flat_map(|&l1| axes.1.iter().map(move |&l2| (l1, l2))).collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..b).map(move |r| (c, r))).collect();
    let sums: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (l1, l2) = cells[c];
            let xty = &reps.xty[r];
            let mut sum = 0.0;
            if l2 == 0.0 {
                let beta = (&gram + DMatrix::identity(p, p) * l1).cholesky()?.solve(xty);
                for (x_i, t) in points.iter().zip(targets) {
                    sum += (x_i.dot(&beta) - t).powi(2);
                }
                return Some(sum);
            }
            let init = if l1 > 0.0 {
                (&gram + DMatrix::identity(p, p) * l1).cholesky()?.solve(xty)
            } else {
                reps.beta[r].clone()
            };
            for (x_i, t) in points.iter().zip(targets) {
                if x_i.norm_squared() == 0.0 {
                    sum += t * t;
                    continue;
                }
                let problem = Problem::from_moments(gram.clone(), xty.clone(), reps.yty[r], x_i, l1, l2).ok()?;
                let fit = fit_with_problem(&problem, &init, None, l1, l2, config).ok()?;
                sum += (fit.prediction_by_dot() - t).powi(2);
            }
            Some(sum)
        })
        .collect();
    let mut surface = Vec::with_capacity(axes.0.len());
    let mut failures = Vec::with_capacity(axes.0.len());
    for row in 0..axes.0.len() {
        let mut srow = Vec::with_capacity(axes.1.len());
        let mut frow = Vec::with_capacity(axes.1.len());
        for col in 0..axes.1.len() {
            let c = row * axes.1.len() + col;
            let cell = &sums[c * b..(c + 1) * b];
            let ok: Vec<f64> = cell.iter().flatten().copied().collect();
            frow.push(b - ok.len());
            srow.push(if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / (ok.len() * points.len()) as f64 });
        }
        surface.push(srow);
        failures.push(frow);
    }
    (surface, failures)
}

fn finish(
    method: TuningMethod,
    axes: (Vec<f64>, Vec<f64>),
    surface: Vec<Vec<f64>>,
    failures: Vec<Vec<usize>>,
    sigma_hat: f64,
    grid: &TuningGrid,
) -> Result<TuningResult> {
    for (i, row) in failures.iter().enumerate() {
        for (j, &f) in row.iter().enumerate() {
            if f as f64 > MAX_FAILURE_RATE * grid.b as f64 {
                return Err(PanError::Tuning { lambda1: axes.0[i], lambda2: axes.1[j], failures: f, total: grid.b });
            }
        }
    }
    let mut cells = Vec::new();
    for (i, row) in surface.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(PanError::Tuning { lambda1: axes.0[i], lambda2: axes.1[j], failures: failures[i][j], total: grid.b });
            }
            cells.push((v, axes.0[i], axes.1[j]));
        }
    }
    let (_, l1, l2) = pick(&cells);
    Ok(TuningResult {
        method,
        lambda1_values: axes.0,
        lambda2_values: axes.1,
        mse_surface: surface,
        selected: (l1, l2),
        sigma_hat,
        b: grid.b,
        seed: grid.seed,
        failed_replicates: failures,
    })
}

pub fn bootstrap_tune(data: &Dataset, grid: &TuningGrid, method: TuningMethod) -> Result<TuningResult> {
    bootstrap_tune_with(data, grid, method, &OptimizerConfig::default())
}

/// [`bootstrap_tune`] with explicit solver settings for non-orthogonal designs.
pub fn bootstrap_tune_with(
    data: &Dataset,
    grid: &TuningGrid,
    method: TuningMethod,
    config: &OptimizerConfig,
) -> Result<TuningResult> {
    grid.validate()?;
    if let TuningMethod::PanGivenLambda1(l1) = method {
        if !(l1 >= 0.0) {
            return Err(PanError::Config(format!("fixed lambda1 must be >= 0, got {l1}")));
        }
    }
    let sigma = estimate_sigma(data)?;
    let center = ols_fit(data)?.into_vector();
    let points: Vec<DVector<f64>> = (0..data.n()).map(|i| data.row(i)).collect();
    let targets: Vec<f64> = points.iter().map(|x| x.dot(&center)).collect();
    let reps = draw_replicates(&data.x, &center, sigma.sigma, grid.b, grid.seed)?;
    let axes = method.axes(grid);
    let (surface, failures) = match orthogonal_design_scale(&data.x, 1e-10) {
        Some(s) => {
            let surface = orthogonal_surface(&points, &targets, &reps.beta, s, &axes);
            let failures = vec![vec![0; axes.1.len()]; axes.0.len()];
            (surface, failures)
        }
        None => general_surface(&data.x, &points, &targets, &reps, &axes, config),
    };
    finish(method, axes, surface, failures, sigma.sigma, grid)
}

/// Bootstrap with the true `(b, s)` in place of the OLS plug-ins, for a
/// scaled orthogonal design `X^T X = n I`. Under that design the OLS draw is
/// exactly `N(b, s^2 / n I)`, so only the shape `(n, p)` is needed. The
/// average runs over `x_test`.
pub fn oracle_tune(
    x_test: &[DVector<f64>],
    beta_true: &DVector<f64>,
    sigma_true: f64,
    grid: &TuningGrid,
    lambda1_fixed: f64,
    data_shape: (usize, usize),
) -> Result<TuningResult> {
    oracle_tune_scaled(x_test, beta_true, sigma_true, grid, lambda1_fixed, data_shape, data_shape.0 as f64)
}

/// [`oracle_tune`] for a design with `X^T X = s I` and arbitrary `s > 0`.
pub fn oracle_tune_scaled(
    x_test: &[DVector<f64>],
    beta_true: &DVector<f64>,
    sigma_true: f64,
    grid: &TuningGrid,
    lambda1_fixed: f64,
    data_shape: (usize, usize),
    design_scale: f64,
) -> Result<TuningResult> {
    grid.validate()?;
    let (n, p) = data_shape;
    if beta_true.len() != p {
        return Err(PanError::Dimension { expected: p, got: beta_true.len() });
    }
    if let Some(x) = x_test.iter().find(|x| x.len() != p) {
        return Err(PanError::Dimension { expected: p, got: x.len() });
    }
    if x_test.is_empty() || n <= p {
        return Err(PanError::InsufficientData(format!("oracle tuning needs test points and n > p (n = {n}, p = {p})")));
    }
    if !(sigma_true >= 0.0) || !(lambda1_fixed >= 0.0) || !(design_scale > 0.0) {
        return Err(PanError::Domain("sigma and lambda1 must be >= 0 and the design scale > 0".into()));
    }
    let sd = sigma_true / design_scale.sqrt();
    let betas: Vec<DVector<f64>> = (0..grid.b)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_stream(grid.seed, r as u64);
            DVector::from_fn(p, |j, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                beta_true[j] + sd * z
            })
        })
        .collect();
    let targets: Vec<f64> = x_test.iter().map(|x| x.dot(beta_true)).collect();
    let method = TuningMethod::PanGivenLambda1(lambda1_fixed);
    let axes = method.axes(grid);
    let surface = orthogonal_surface(x_test, &targets, &betas, design_scale, &axes);
    let failures = vec![vec![0; axes.1.len()]; 1];
    finish(method, axes, surface, failures, sigma_true, grid)
}
