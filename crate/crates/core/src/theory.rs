//! Analytic mean-squared-error results for the PAN-ridge prediction under a
//! scaled orthogonal design `X^T X = n I`, the distribution of the cosine
//! between a random Gaussian covariate vector and a fixed direction, and a
//! Monte-Carlo check of both.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{PanError, Result};
use crate::estimators::pan_ridge_prediction;
use crate::geometry::{orthonormalize, OrthoScale};
use crate::parallel::{blocks, rng_stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryInstance {
    pub x0: DVector<f64>,
    pub beta_true: DVector<f64>,
    pub sigma: f64,
    pub n: usize,
    pub lambda1: f64,
}

impl TheoryInstance {
    pub fn new(x0: DVector<f64>, beta_true: DVector<f64>, sigma: f64, n: usize, lambda1: f64) -> Result<Self> {
        let inst = TheoryInstance { x0, beta_true, sigma, n, lambda1 };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x0.len() != self.beta_true.len() {
            return Err(PanError::Dimension { expected: self.beta_true.len(), got: self.x0.len() });
        }
        if self.x0.norm() == 0.0 || self.beta_true.norm() == 0.0 {
            return Err(PanError::Degenerate("x0 and beta must have nonzero length".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(PanError::Domain(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.n == 0 {
            return Err(PanError::Domain("n must be >= 1".into()));
        }
        if !(self.lambda1 >= 0.0) {
            return Err(PanError::Domain(format!("lambda1 must be >= 0, got {}", self.lambda1)));
        }
        Ok(())
    }

    pub fn cos_sim(&self) -> f64 {
        self.x0.dot(&self.beta_true) / (self.x0.norm() * self.beta_true.norm())
    }
}

/// Leading-order derivative of the prediction MSE with respect to `l2` at
/// `l2 = 0`:
/// `C1 (l1 (x0^T b)^2 - s^2 |x0|^2 (1 - 4 cos^2))`,
/// `C1 = (2/n) (|x0|^2 |b|^2 - (x0^T b)^2) / ((n + l1) |x0|^2 |b|^4)`.
pub fn mse_derivative_at_zero(inst: &TheoryInstance) -> Result<f64> {
    inst.validate()?;
    let n = inst.n as f64;
    let q = inst.x0.norm_squared();
    let b2 = inst.beta_true.norm_squared();
    let m = inst.x0.dot(&inst.beta_true);
    let c1 = 2.0 / n * (q * b2 - m * m) / ((n + inst.lambda1) * q * b2 * b2);
    let cos2 = m * m / (q * b2);
    Ok(c1 * (inst.lambda1 * m * m - inst.sigma.powi(2) * q * (1.0 - 4.0 * cos2)))
}

fn check_pair(x0: &DVector<f64>, beta: &DVector<f64>, sigma: f64) -> Result<f64> {
    if x0.len() != beta.len() {
        return Err(PanError::Dimension { expected: beta.len(), got: x0.len() });
    }
    if !(sigma >= 0.0) {
        return Err(PanError::Domain(format!("sigma must be >= 0, got {sigma}")));
    }
    let m = x0.dot(beta);
    if m == 0.0 {
        return Err(PanError::Degenerate("x0 is orthogonal to beta".into()));
    }
    Ok(m)
}

/// Ridge parameter at which the beneficial sign of `l2` flips.
/// Negative when `|cos| > 1/2`.
pub fn lambda1_star(x0: &DVector<f64>, beta: &DVector<f64>, sigma: f64) -> Result<f64> {
    let m = check_pair(x0, beta, sigma)?;
    let q = x0.norm_squared();
    let cos2 = m * m / (q * beta.norm_squared());
    Ok(sigma * sigma * q / (m * m) * (1.0 - 4.0 * cos2))
}

/// Ridge parameter minimizing the prediction risk at `x0`:
/// `s^2 |x0|^2 / (x0^T b)^2`.
pub fn oracle_fridge_lambda(x0: &DVector<f64>, beta: &DVector<f64>, sigma: f64) -> Result<f64> {
    let m = check_pair(x0, beta, sigma)?;
    Ok(sigma * sigma * x0.norm_squared() / (m * m))
}

fn density_constant(p: usize) -> f64 {
    let p = p as f64;
    (ln_gamma(p / 2.0) - 0.5 * std::f64::consts::PI.ln() - ln_gamma((p - 1.0) / 2.0)).exp()
}

/// Density of `z = x0^T b / (|x0| |b|)` for `x0 ~ N(0, I_p)`:
/// `G(p/2) / (sqrt(pi) G((p-1)/2)) (1 - z^2)^((p-3)/2)`.
pub fn inner_product_density(z: f64, p: usize) -> Result<f64> {
    if p < 2 {
        return Err(PanError::Domain(format!("dimension must be >= 2, got {p}")));
    }
    if !(z.abs() < 1.0) {
        return Err(PanError::Domain(format!("z must lie in (-1, 1), got {z}")));
    }
    Ok(density_constant(p) * (1.0 - z * z).powf((p as f64 - 3.0) / 2.0))
}

/// Probability that `|z| < t`. Integrated in `z = sin(u)`, which removes the
/// endpoint singularity at `p = 2`.
pub fn proportion_within(t: f64, p: usize) -> Result<f64> {
    if p < 2 {
        return Err(PanError::Domain(format!("dimension must be >= 2, got {p}")));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(PanError::Domain(format!("t must lie in (0, 1], got {t}")));
    }
    let c = density_constant(p);
    let e = p as i32 - 2;
    let upper = t.asin();
    let out = quadrature::integrate(|u: f64| u.cos().powi(e), 0.0, upper, 1e-12);
    Ok((2.0 * c * out.integral).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McPoint {
    pub lambda2: f64,
    pub mse: f64,
    pub std_error: f64,
    /// `MSE(l2) - MSE(0)` on the same draws, with its standard error.
    pub excess: f64,
    pub excess_std_error: f64,
}

const MC_BLOCK: usize = 4096;

/// Empirical MSE of the PAN-ridge prediction at `x0` over a `l2` grid. The
/// design is drawn once with `X^T X = n I`; only the noise is redrawn.
pub fn mc_mse_curve(inst: &TheoryInstance, lambda2_values: &[f64], replications: usize, seed: u64) -> Result<Vec<McPoint>> {
    inst.validate()?;
    let p = inst.x0.len();
    if replications == 0 {
        return Err(PanError::Domain("replications must be >= 1".into()));
    }
    if inst.n < p {
        return Err(PanError::InsufficientData(format!("n = {} < p = {p}", inst.n)));
    }
    let n = inst.n;
    let nf = n as f64;
    let mut design_rng = rng_stream(seed, u64::MAX);
    let raw = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut design_rng));
    let x = orthonormalize(&raw, OrthoScale::SqrtN)?;
    let x0 = &inst.x0;
    let q = x0.norm_squared();
    let target = x0.dot(&inst.beta_true);
    let signal = &x * &inst.beta_true;
    let (l1, sigma) = (inst.lambda1 / nf, inst.sigma);
    let k = lambda2_values.len();

    // per block: sum and sum of squares of the error and of the excess over l2 = 0
    let partial: Vec<Vec<[f64; 4]>> = blocks(replications, MC_BLOCK)
        .into_par_iter()
        .enumerate()
        .map(|(b, range)| {
            let mut rng = rng_stream(seed, b as u64);
            let mut acc = vec![[0.0; 4]; k];
            let mut y = DVector::zeros(n);
            for _ in range {
                for i in 0..n {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    y[i] = signal[i] + sigma * e;
                }
                let beta_ols = x.tr_mul(&y) / nf;
                let m = x0.dot(&beta_ols);
                let b2 = beta_ols.norm_squared();
                let base = (pan_ridge_prediction(m, b2, q, l1, 0.0) - target).powi(2);
                for (a, &l2) in acc.iter_mut().zip(lambda2_values) {
                    let err = (pan_ridge_prediction(m, b2, q, l1, l2 / nf) - target).powi(2);
                    let d = err - base;
                    a[0] += err;
                    a[1] += err * err;
                    a[2] += d;
                    a[3] += d * d;
                }
            }
            acc
        })
        .collect();

    let r = replications as f64;
    let mut out = Vec::with_capacity(k);
    for (j, &l2) in lambda2_values.iter().enumerate() {
        let mut s = [0.0; 4];
        for block in &partial {
            for t in 0..4 {
                s[t] += block[j][t];
            }
        }
        let se = |sum: f64, sq: f64| {
            if replications < 2 {
                return 0.0;
            }
            let mean = sum / r;
            ((sq / r - mean * mean).max(0.0) * r / (r - 1.0) / r).sqrt()
        };
        out.push(McPoint {
            lambda2: l2,
            mse: s[0] / r,
            std_error: se(s[0], s[1]),
            excess: s[2] / r,
            excess_std_error: se(s[2], s[3]),
        });
    }
    Ok(out)
}
