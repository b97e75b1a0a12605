//! Numerical PAN-ridge fits for general (non-orthonormal) designs.
//!
//! The objective is
//! `|Y - X b|^2 + l1 b^T b + (l2 / x0^T x0) (b^T x0)^2 / (b^T b)`,
//! undefined at `b = 0`. Fits use BFGS with Armijo backtracking on either the
//! Cartesian coefficients or their hyperspherical coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PanError, Result};
use crate::estimators::{ols_fit, pan_ridge_fit_scaled, ridge_fit, CoefficientVector, Method, PanFit};
use crate::geometry::{direction_inner, orthogonal_design_scale, to_hyperspherical, Dataset, HypersphericalCoords};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    Cartesian,
    Hyperspherical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    Ols,
    Ridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub parametrization: Parametrization,
    pub initializer: Initializer,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 500,
            gradient_tolerance: 1e-10,
            parametrization: Parametrization::Cartesian,
            initializer: Initializer::Ols,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(PanError::Config("max_iterations must be >= 1".into()));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(PanError::Config("gradient_tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// Condition number above which the ridge initializer replaces OLS.
pub const ILL_CONDITIONED: f64 = 1e8;

fn check_beta(beta: &DVector<f64>, x0: &DVector<f64>) -> Result<()> {
    if beta.len() != x0.len() {
        return Err(PanError::Dimension { expected: x0.len(), got: beta.len() });
    }
    if beta.norm_squared() == 0.0 {
        return Err(PanError::Domain("PAN penalty is undefined at beta = 0".into()));
    }
    if x0.norm_squared() == 0.0 {
        return Err(PanError::Degenerate("x0 has zero length".into()));
    }
    Ok(())
}

fn penalty(beta: &DVector<f64>, x0: &DVector<f64>, lambda1: f64, lambda2: f64) -> f64 {
    let a = x0.dot(beta);
    let s = beta.norm_squared();
    lambda1 * s + lambda2 / x0.norm_squared() * a * a / s
}

fn penalty_gradient(beta: &DVector<f64>, x0: &DVector<f64>, lambda1: f64, lambda2: f64) -> DVector<f64> {
    let lp = lambda2 / x0.norm_squared();
    let a = x0.dot(beta);
    let s = beta.norm_squared();
    beta * (2.0 * lambda1) + x0 * (2.0 * lp * a / s) - beta * (2.0 * lp * a * a / (s * s))
}

/// Penalized residual sum of squares, evaluated row by row.
pub fn objective(beta: &DVector<f64>, data: &Dataset, x0: &DVector<f64>, lambda1: f64, lambda2: f64) -> Result<f64> {
    check_beta(beta, x0)?;
    if data.p() != beta.len() {
        return Err(PanError::Dimension { expected: data.p(), got: beta.len() });
    }
    let resid = &data.y - &data.x * beta;
    Ok(resid.norm_squared() + penalty(beta, x0, lambda1, lambda2))
}

/// `-2 X^T Y + 2 X^T X b + 2 l1 b + 2 l' x0 x0^T b / b^T b - 2 l' (x0^T b)^2 / (b^T b)^2 b`
/// with `l' = l2 / |x0|^2`.
pub fn gradient(
    beta: &DVector<f64>,
    data: &Dataset,
    x0: &DVector<f64>,
    lambda1: f64,
    lambda2: f64,
) -> Result<DVector<f64>> {
    check_beta(beta, x0)?;
    if data.p() != beta.len() {
        return Err(PanError::Dimension { expected: data.p(), got: beta.len() });
    }
    let resid = &data.y - &data.x * beta;
    Ok(data.x.tr_mul(&resid) * -2.0 + penalty_gradient(beta, x0, lambda1, lambda2))
}

/// Covariates and outcome with every row in hyperspherical coordinates.
#[derive(Debug, Clone)]
pub struct HypersphericalData {
    pub rows: Vec<HypersphericalCoords>,
    pub y: Vec<f64>,
}

impl HypersphericalData {
    pub fn from_dataset(data: &Dataset) -> Self {
        let rows = (0..data.n())
            .map(|i| to_hyperspherical(data.row(i).as_slice()))
            .collect();
        HypersphericalData { rows, y: data.y.iter().copied().collect() }
    }
}

/// The penalized objective written in lengths and angles:
/// `sum (y_i - r r_i g(a, a_i))^2 + l1 r^2 + l2 g(a, a_0)^2`, where `g` is the
/// angular inner product of unit directions.
pub fn objective_hyperspherical(
    coords: &HypersphericalCoords,
    data: &HypersphericalData,
    x0: &HypersphericalCoords,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    if coords.r == 0.0 {
        return Err(PanError::Domain("PAN penalty is undefined at r = 0".into()));
    }
    if x0.r == 0.0 {
        return Err(PanError::Degenerate("x0 has zero length".into()));
    }
    if x0.angles.len() != coords.angles.len() {
        return Err(PanError::Dimension { expected: coords.dim(), got: x0.dim() });
    }
    let mut rss = 0.0;
    for (row, &y) in data.rows.iter().zip(&data.y) {
        if row.angles.len() != coords.angles.len() {
            return Err(PanError::Dimension { expected: coords.dim(), got: row.dim() });
        }
        let fitted = coords.r * row.r * direction_inner(&coords.angles, &row.angles);
        rss += (y - fitted).powi(2);
    }
    let j = direction_inner(&coords.angles, &x0.angles);
    Ok(rss + lambda1 * coords.r * coords.r + lambda2 * j * j)
}

/// Least-squares sufficient statistics plus the penalty setup; objective and
/// gradient cost O(p^2) regardless of n.
#[derive(Debug, Clone)]
pub struct Problem {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    x0: DVector<f64>,
    lambda1: f64,
    lambda2: f64,
}

impl Problem {
    pub fn new(data: &Dataset, x0: &DVector<f64>, lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::from_moments(data.x.tr_mul(&data.x), data.x.tr_mul(&data.y), data.y.norm_squared(), x0, lambda1, lambda2)
    }

    pub fn from_moments(
        gram: DMatrix<f64>,
        xty: DVector<f64>,
        yty: f64,
        x0: &DVector<f64>,
        lambda1: f64,
        lambda2: f64,
    ) -> Result<Self> {
        let p = gram.nrows();
        if x0.len() != p {
            return Err(PanError::Dimension { expected: p, got: x0.len() });
        }
        if x0.norm_squared() == 0.0 {
            return Err(PanError::Degenerate("x0 has zero length".into()));
        }
        if !(lambda1 >= 0.0) || !lambda2.is_finite() {
            return Err(PanError::Domain(format!("invalid tuning ({lambda1}, {lambda2})")));
        }
        Ok(Problem { gram, xty, yty, x0: x0.clone(), lambda1, lambda2 })
    }

    pub fn value(&self, beta: &DVector<f64>) -> f64 {
        let rss = self.yty - 2.0 * self.xty.dot(beta) + beta.dot(&(&self.gram * beta));
        rss + penalty(beta, &self.x0, self.lambda1, self.lambda2)
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        (&self.gram * beta - &self.xty) * 2.0 + penalty_gradient(beta, &self.x0, self.lambda1, self.lambda2)
    }

    pub fn hessian(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let p = beta.len();
        let lp = self.lambda2 / self.x0.norm_squared();
        let a = self.x0.dot(beta);
        let s = beta.norm_squared();
        let x0 = &self.x0;
        let cross = x0 * beta.transpose();
        &self.gram * 2.0 + DMatrix::identity(p, p) * (2.0 * self.lambda1 - 2.0 * lp * a * a / (s * s))
            + (x0 * x0.transpose()) * (2.0 * lp / s)
            - (&cross + cross.transpose()) * (4.0 * lp * a / (s * s))
            + (beta * beta.transpose()) * (8.0 * lp * a * a / (s * s * s))
    }
}

/// Newton steps with the analytic Hessian. Steps are kept while they reduce
/// the gradient norm without raising the objective beyond rounding; this
/// reaches tolerances below the resolution of Armijo tests on the objective.
fn newton_polish(problem: &Problem, m: Minimum, floor: f64, config: &OptimizerConfig) -> Minimum {
    let mut m = m;
    let mut g = problem.gradient(&m.point);
    let budget = config.max_iterations.saturating_sub(m.iterations).min(50);
    for _ in 0..budget {
        if m.gradient_norm < config.gradient_tolerance * (1.0 + m.value.abs()) {
            m.converged = true;
            break;
        }
        let Some(step) = problem.hessian(&m.point).lu().solve(&(-&g)) else { break };
        let trial = &m.point + step;
        if trial.norm() < floor {
            break;
        }
        let (ft, gt) = (problem.value(&trial), problem.gradient(&trial));
        if !(gt.norm() < m.gradient_norm) || ft > m.value + 1e-12 * (1.0 + m.value.abs()) {
            break;
        }
        m.point = trial;
        m.value = ft.min(m.value);
        m.gradient_norm = gt.norm();
        m.iterations += 1;
        m.trace.push(m.value);
        g = gt;
    }
    m.converged = m.gradient_norm < config.gradient_tolerance * (1.0 + m.value.abs());
    m
}

/// Result of one BFGS run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub point: DVector<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

/// BFGS with Armijo backtracking. `eval` returns `None` outside the domain;
/// such trial points are rejected by halving the step.
pub fn bfgs<F>(eval: F, start: DVector<f64>, max_iterations: usize, gradient_tolerance: f64) -> Minimum
where
    F: Fn(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
{
    let n = start.len();
    let mut x = start;
    let (mut f, mut g) = match eval(&x) {
        Some(v) => v,
        None => {
            return Minimum {
                point: x,
                value: f64::NAN,
                gradient_norm: f64::NAN,
                iterations: 0,
                converged: false,
                trace: Vec::new(),
            }
        }
    };
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![f];
    let mut fresh = true;
    for it in 0..max_iterations {
        let gn = g.norm();
        if gn < gradient_tolerance * (1.0 + f.abs()) {
            return Minimum { point: x, value: f, gradient_norm: gn, iterations: it, converged: true, trace };
        }
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if slope >= 0.0 {
            h = DMatrix::identity(n, n);
            d = -g.clone();
            slope = -gn * gn;
            fresh = true;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let trial = &x + &d * t;
            if let Some((ft, gt)) = eval(&trial) {
                if ft.is_finite() && ft <= f + 1e-4 * t * slope && ft < f {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            if fresh {
                // steepest descent cannot make progress: rounding floor reached
                return Minimum { point: x, value: f, gradient_norm: gn, iterations: it, converged: false, trace };
            }
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let s = &xn - &x;
        let y = &gnew - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                let scale = sy / y.norm_squared();
                h = DMatrix::identity(n, n) * scale;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            fresh = false;
        }
        x = xn;
        f = fnew;
        g = gnew;
        trace.push(f);
    }
    let gn = g.norm();
    let converged = gn < gradient_tolerance * (1.0 + f.abs());
    Minimum { point: x, value: f, gradient_norm: gn, iterations: max_iterations, converged, trace }
}

/// `beta = r * direction(angles)` with `theta = (r, angles)`, and its Jacobian.
fn spherical_point(theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let p = theta.len();
    let r = theta[0];
    let angles = &theta.as_slice()[1..];
    let direction = |a: &[f64], diff: Option<usize>| -> DVector<f64> {
        let mut out = DVector::zeros(p);
        let mut sin_prod = 1.0;
        for (k, &ak) in a.iter().enumerate() {
            let (s, c) = ak.sin_cos();
            let (s, c) = if diff == Some(k) { (c, -s) } else { (s, c) };
            out[k] = sin_prod * c;
            sin_prod *= s;
        }
        out[p - 1] = sin_prod;
        out
    };
    let gamma = direction(angles, None);
    let mut jac = DMatrix::zeros(p, p);
    jac.set_column(0, &gamma);
    for j in 0..p - 1 {
        let mut dj = direction(angles, Some(j));
        // entries before j do not depend on angle j
        for k in 0..j {
            dj[k] = 0.0;
        }
        jac.set_column(j + 1, &(dj * r));
    }
    (gamma * r, jac)
}

fn condition_number(gram: &DMatrix<f64>) -> f64 {
    let eig = gram.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn start_points(init: &DVector<f64>, x0: &DVector<f64>) -> Vec<DVector<f64>> {
    let r = init.norm();
    let e1 = init / r;
    let mut perp = x0 - &e1 * e1.dot(x0);
    if perp.norm() < 1e-8 * x0.norm() {
        // x0 parallel to the start: pick any direction orthogonal to it
        let j = e1.iamin();
        perp = DVector::zeros(init.len());
        perp[j] = 1.0;
        perp -= &e1 * e1[j];
    }
    let e2 = &perp / perp.norm();
    let mut starts = vec![init.clone()];
    for t in [std::f64::consts::FRAC_PI_4, -std::f64::consts::FRAC_PI_4, 1.2, -1.2] {
        starts.push((&e1 * t.cos() + &e2 * t.sin()) * r);
    }
    starts
}

/// Numerical PAN-ridge fit for a general design. `data` is expected to be
/// centered; `x0` on the same (centered) scale.
pub fn fit_general(
    data: &Dataset,
    x0: &DVector<f64>,
    lambda1: f64,
    lambda2: f64,
    config: &OptimizerConfig,
) -> Result<PanFit> {
    config.validate()?;
    let problem = Problem::new(data, x0, lambda1, lambda2)?;
    let gram = data.x.tr_mul(&data.x);
    let ols = ols_fit(data).ok();
    let init = match config.initializer {
        Initializer::Ols if ols.is_some() && condition_number(&gram) <= ILL_CONDITIONED => ols.clone().unwrap(),
        _ => ridge_fit(data, if lambda1 > 0.0 { lambda1 } else { 1.0 })?,
    };
    fit_with_problem(&problem, init.as_vector(), ols.as_ref(), lambda1, lambda2, config)
}

/// Shared solver path used by [`fit_general`] and the bootstrap tuner.
pub fn fit_with_problem(
    problem: &Problem,
    init: &DVector<f64>,
    ols: Option<&CoefficientVector>,
    lambda1: f64,
    lambda2: f64,
    config: &OptimizerConfig,
) -> Result<PanFit> {
    let x0 = &problem.x0;
    if init.norm() == 0.0 {
        return Err(PanError::Degenerate("initial estimate has zero length".into()));
    }
    let floor = 1e-10 * init.norm();
    let starts = if lambda2 != 0.0 { start_points(init, x0) } else { vec![init.clone()] };

    let mut best: Option<Minimum> = None;
    for start in starts {
        let m = run_one(problem, start, floor, config);
        let better = match &best {
            None => true,
            Some(b) => {
                (m.converged && !b.converged)
                    || (m.converged == b.converged && m.value < b.value - 1e-12 * (1.0 + b.value.abs()))
            }
        };
        if better {
            best = Some(m);
        }
    }
    let best = best.expect("at least one start");
    if !best.converged {
        return Err(PanError::Convergence {
            iterations: best.iterations,
            gradient_norm: best.gradient_norm,
            best: best.point.iter().copied().collect(),
        });
    }
    build_fit(best.point, x0, ols, lambda1, lambda2)
}

fn build_fit(
    beta: DVector<f64>,
    x0: &DVector<f64>,
    ols: Option<&CoefficientVector>,
    lambda1: f64,
    lambda2: f64,
) -> Result<PanFit> {
    let length = beta.norm();
    let direction = if length > 0.0 { &beta / length } else { DVector::zeros(beta.len()) };
    let (ols_prediction, cos_sim) = match ols {
        Some(b) if b.norm() > 0.0 => {
            let m = x0.dot(b.as_vector());
            (m, (m / (b.norm() * x0.norm())).clamp(-1.0, 1.0))
        }
        _ => (f64::NAN, f64::NAN),
    };
    let pred = x0.dot(&beta);
    let shrinkage_factor = if ols_prediction != 0.0 { pred / ols_prediction } else { f64::NAN };
    let method = match (lambda1 == 0.0, lambda2 == 0.0) {
        (true, true) => Method::Ols,
        (false, true) => Method::Ridge,
        (true, false) => Method::Pan,
        (false, false) => Method::PanRidge,
    };
    Ok(PanFit {
        beta_hat: CoefficientVector::new(beta)?,
        direction,
        length,
        x0: x0.clone(),
        lambda1,
        lambda2,
        c_value: None,
        shrinkage_factor,
        cos_sim,
        ols_prediction,
        method,
    })
}

/// Personalized fit with the cheapest exact route: OLS or ridge when
/// `l2 = 0`, the closed form for scaled orthogonal designs, otherwise the
/// numerical solver.
pub fn fit_personalized(
    data: &Dataset,
    x0: &DVector<f64>,
    lambda1: f64,
    lambda2: f64,
    config: &OptimizerConfig,
) -> Result<PanFit> {
    if x0.len() != data.p() {
        return Err(PanError::Dimension { expected: data.p(), got: x0.len() });
    }
    if !(lambda1 >= 0.0) || !lambda2.is_finite() {
        return Err(PanError::Domain(format!("invalid tuning ({lambda1}, {lambda2})")));
    }
    if lambda2 == 0.0 {
        let ols = ols_fit(data).ok();
        let beta = if lambda1 == 0.0 {
            ols.clone().ok_or_else(|| PanError::Rank("design matrix is rank deficient".into()))?
        } else {
            ridge_fit(data, lambda1)?
        };
        return build_fit(beta.into_vector(), x0, ols.as_ref(), lambda1, lambda2);
    }
    if let Some(s) = orthogonal_design_scale(&data.x, 1e-10) {
        let ols = ols_fit(data)?;
        return pan_ridge_fit_scaled(&ols, x0, lambda1, lambda2, s);
    }
    fit_general(data, x0, lambda1, lambda2, config)
}

fn run_one(problem: &Problem, start: DVector<f64>, floor: f64, config: &OptimizerConfig) -> Minimum {
    let cartesian = |b: &DVector<f64>| {
        if b.norm() < floor {
            None
        } else {
            Some((problem.value(b), problem.gradient(b)))
        }
    };
    let m = match config.parametrization {
        Parametrization::Cartesian => bfgs(cartesian, start, config.max_iterations, config.gradient_tolerance),
        Parametrization::Hyperspherical => {
            let c = to_hyperspherical(start.as_slice());
            let mut theta = DVector::zeros(start.len());
            theta[0] = c.r;
            for (k, a) in c.angles.iter().enumerate() {
                theta[k + 1] = *a;
            }
            let spherical = |t: &DVector<f64>| {
                if t[0].abs() < floor {
                    return None;
                }
                let (b, jac) = spherical_point(t);
                Some((problem.value(&b), jac.tr_mul(&problem.gradient(&b))))
            };
            let m = bfgs(spherical, theta, config.max_iterations, config.gradient_tolerance);
            let (b, _) = spherical_point(&m.point);
            // angular gradients vanish at coordinate singularities; confirm in
            // Cartesian terms and polish there if needed
            let polish = bfgs(cartesian, b, config.max_iterations, config.gradient_tolerance);
            let mut trace = m.trace;
            trace.extend(polish.trace.iter().skip(1));
            Minimum { iterations: m.iterations + polish.iterations, trace, ..polish }
        }
    };
    if m.converged || !m.value.is_finite() {
        m
    } else {
        newton_polish(problem, m, floor, config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::pan_ridge_fit_orthonormal;
    use crate::geometry::{from_hyperspherical, orthonormalize, OrthoScale};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
        DVector::from_fn(p, |_, _| StandardNormal.sample(rng))
    }

    fn random_data(n: usize, p: usize, orthonormal: bool, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
        let x = if orthonormal { orthonormalize(&raw, OrthoScale::Unit).unwrap() } else { raw };
        let beta = randn(&mut rng, p);
        let y = &x * beta + randn(&mut rng, n) * 0.5;
        Dataset::new(x, y).unwrap()
    }

    fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(b.len(), |j, _| {
            let h = 1e-6 * (1.0 + b[j].abs());
            let mut up = b.clone();
            let mut dn = b.clone();
            up[j] += h;
            dn[j] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
    }

    #[test]
    fn objective_reduces_to_rss_and_ols_is_minimal() {
        let d = random_data(30, 3, false, 1);
        let x0 = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let ols = ols_fit(&d).unwrap().into_vector();
        let at_ols = objective(&ols, &d, &x0, 0.0, 0.0).unwrap();
        assert!((at_ols - (&d.y - &d.x * &ols).norm_squared()).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let b = &ols + randn(&mut rng, 3) * 0.1;
            assert!(objective(&b, &d, &x0, 0.0, 0.0).unwrap() >= at_ols);
        }
    }

    #[test]
    fn penalty_vanishes_on_zero_prediction_plane() {
        let d = random_data(20, 3, false, 3);
        let x0 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 0.4, -0.2]);
        let with = objective(&b, &d, &x0, 0.0, 7.0).unwrap();
        let without = objective(&b, &d, &x0, 0.0, 0.0).unwrap();
        assert_eq!(with, without);
        assert!(matches!(objective(&DVector::zeros(3), &d, &x0, 0.0, 1.0), Err(PanError::Domain(_))));
    }

    #[test]
    fn closed_form_is_a_local_minimum() {
        let d = random_data(40, 5, true, 4);
        let ols = ols_fit(&d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = randn(&mut rng, 5);
        let fit = pan_ridge_fit_orthonormal(&ols, &x0, 1.0, 2.0).unwrap();
        let b = fit.beta_hat.as_vector();
        let f0 = objective(b, &d, &x0, 1.0, 2.0).unwrap();
        for _ in 0..100 {
            let dir = randn(&mut rng, 5);
            let trial = b + &dir / dir.norm() * 0.1;
            assert!(objective(&trial, &d, &x0, 1.0, 2.0).unwrap() >= f0);
        }
    }

    #[test]
    fn gradient_vanishes_at_ols() {
        let d = random_data(30, 4, false, 6);
        let x0 = DVector::from_vec(vec![1.0, 2.0, 0.0, -1.0]);
        let ols = ols_fit(&d).unwrap().into_vector();
        assert!(gradient(&ols, &d, &x0, 0.0, 0.0).unwrap().amax() < 1e-8);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = random_data(25, 4, false, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x0 = randn(&mut rng, 4);
        let b = randn(&mut rng, 4);
        let (l1, l2) = (1.5, -2.0);
        let g = gradient(&b, &d, &x0, l1, l2).unwrap();
        let fd = fd_gradient(|v| objective(v, &d, &x0, l1, l2).unwrap(), &b);
        assert!((&g - &fd).norm() <= 1e-5 * g.norm().max(1.0));
    }

    #[test]
    fn gradient_on_zero_prediction_plane() {
        let d = random_data(20, 3, false, 10);
        let x0 = DVector::from_vec(vec![0.0, 0.0, 2.0]);
        let b = DVector::from_vec(vec![0.3, -0.7, 0.0]);
        let g = gradient(&b, &d, &x0, 0.0, 3.0).unwrap();
        let rss = gradient(&b, &d, &x0, 0.0, 0.0).unwrap();
        let expected = rss + &x0 * (2.0 * 3.0 / 4.0 * x0.dot(&b) / b.norm_squared());
        assert!((g - expected).amax() < 1e-12);
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let d = random_data(25, 4, false, 19);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x0 = randn(&mut rng, 4);
        let b = randn(&mut rng, 4);
        let problem = Problem::new(&d, &x0, 0.8, -3.0).unwrap();
        let h = problem.hessian(&b);
        for j in 0..4 {
            let eps = 1e-6;
            let mut up = b.clone();
            let mut dn = b.clone();
            up[j] += eps;
            dn[j] -= eps;
            let fd = (problem.gradient(&up) - problem.gradient(&dn)) / (2.0 * eps);
            assert!((h.column(j) - fd).amax() < 1e-5 * h.amax());
        }
    }

    #[test]
    fn hyperspherical_objective_in_two_dimensions() {
        let d = random_data(15, 2, false, 11);
        let h = HypersphericalData::from_dataset(&d);
        let b = DVector::from_vec(vec![0.8, -0.3]);
        let x0 = DVector::from_vec(vec![-0.5, 1.2]);
        let bc = to_hyperspherical(b.as_slice());
        let xc = to_hyperspherical(x0.as_slice());
        let lam = 2.5;
        let rss = (&d.y - &d.x * &b).norm_squared();
        let expected = rss + lam * (bc.angles[0] - xc.angles[0]).cos().powi(2);
        let got = objective_hyperspherical(&bc, &h, &xc, 0.0, lam).unwrap();
        assert!((got - expected).abs() < 1e-10);
        let zero = objective_hyperspherical(&bc, &h, &xc, 0.0, 0.0).unwrap();
        assert!((zero - rss).abs() < 1e-10);
    }

    #[test]
    fn hyperspherical_objective_matches_cartesian() {
        let d = random_data(20, 4, false, 12);
        let h = HypersphericalData::from_dataset(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = randn(&mut rng, 4);
        let x0 = randn(&mut rng, 4);
        let cart = objective(&b, &d, &x0, 0.7, -1.3).unwrap();
        let bc = to_hyperspherical(b.as_slice());
        let sph = objective_hyperspherical(&bc, &h, &to_hyperspherical(x0.as_slice()), 0.7, -1.3).unwrap();
        assert!((cart - sph).abs() < 1e-10 * (1.0 + cart.abs()));
        let zero = HypersphericalCoords { r: 0.0, angles: vec![0.0; 3] };
        assert!(objective_hyperspherical(&zero, &h, &bc, 0.0, 1.0).is_err());
    }

    #[test]
    fn spherical_jacobian_matches_finite_differences() {
        let theta = DVector::from_vec(vec![1.3, 0.4, 2.1, -0.8]);
        let (_, jac) = spherical_point(&theta);
        for j in 0..4 {
            let h = 1e-6;
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (spherical_point(&up).0 - spherical_point(&dn).0) / (2.0 * h);
            assert!((jac.column(j) - fd).amax() < 1e-8);
        }
        let c = HypersphericalCoords { r: 1.3, angles: vec![0.4, 2.1, -0.8] };
        let b = from_hyperspherical(&c);
        assert!((spherical_point(&theta).0 - DVector::from_vec(b)).amax() < 1e-15);
    }

    #[test]
    fn general_fit_matches_closed_form_on_orthonormal_design() {
        let d = random_data(50, 6, true, 13);
        let ols = ols_fit(&d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x0 = randn(&mut rng, 6);
        for &l1 in &[0.0, 1.0, 4.0] {
            for &l2 in &[-2.0, 0.0, 2.5, 10.0] {
                let closed = pan_ridge_fit_orthonormal(&ols, &x0, l1, l2).unwrap();
                for param in [Parametrization::Cartesian, Parametrization::Hyperspherical] {
                    let cfg = OptimizerConfig { parametrization: param, ..Default::default() };
                    let num = fit_general(&d, &x0, l1, l2, &cfg).unwrap();
                    let err = (num.beta_hat.as_vector() - closed.beta_hat.as_vector()).amax();
                    assert!(err < 1e-6, "l1={l1} l2={l2} {param:?}: {err}");
                }
            }
        }
    }

    #[test]
    fn general_fit_without_penalty_is_ols() {
        let d = random_data(30, 4, false, 14);
        let x0 = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]);
        let fit = fit_general(&d, &x0, 0.0, 0.0, &OptimizerConfig::default()).unwrap();
        let ols = ols_fit(&d).unwrap();
        assert!((fit.beta_hat.as_vector() - ols.as_vector()).amax() < 1e-8);
        assert_eq!(fit.method, Method::Ols);
    }

    #[test]
    fn huge_penalty_zeroes_prediction() {
        let d = random_data(50, 4, true, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x0 = randn(&mut rng, 4);
        let fit = fit_general(&d, &x0, 0.0, 1e6, &OptimizerConfig::default()).unwrap();
        let ols = ols_fit(&d).unwrap();
        assert!(fit.prediction_by_dot().abs() < 1e-3 * x0.dot(ols.as_vector()).abs());
    }

    #[test]
    fn descent_and_convergence_error() {
        let d = random_data(40, 5, false, 16);
        let x0 = DVector::from_vec(vec![1.0, 1.0, 0.0, -1.0, 0.5]);
        let problem = Problem::new(&d, &x0, 0.5, 3.0).unwrap();
        let init = ols_fit(&d).unwrap().into_vector();
        let m = bfgs(|b| Some((problem.value(b), problem.gradient(b))), init, 200, 1e-10);
        assert!(m.converged);
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));

        let cfg = OptimizerConfig { max_iterations: 1, ..Default::default() };
        match fit_general(&d, &x0, 0.5, 3.0, &cfg) {
            Err(PanError::Convergence { best, .. }) => assert_eq!(best.len(), 5),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn random_general_designs_reach_stationarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for k in 0..20 {
            let p = rng.random_range(2..8);
            let d = random_data(30, p, false, 100 + k);
            let x0 = randn(&mut rng, p);
            let l1 = rng.random_range(0.0..3.0);
            let l2 = rng.random_range(-5.0..5.0);
            let fit = fit_general(&d, &x0, l1, l2, &OptimizerConfig::default()).unwrap();
            let f = objective(fit.beta_hat.as_vector(), &d, &x0, l1, l2).unwrap();
            let g = gradient(fit.beta_hat.as_vector(), &d, &x0, l1, l2).unwrap();
            assert!(g.norm() < 1e-8 * (1.0 + f.abs()));
        }
    }
}
