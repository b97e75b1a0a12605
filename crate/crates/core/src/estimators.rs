//! Closed-form estimators for orthonormal designs (`X^T X = I`): OLS, ridge,
//! PAN and PAN-ridge, plus the prediction shrinkage factor and a
//! two-dimensional solver built on the double-angle tangent relation.
//!
//! A PAN-ridge fit with parameters `(l1, l2)` is the PAN fit with parameter
//! `(1 + l1) l2`, scaled by `1 / (1 + l1)`. The direction is the leading
//! eigenvector of the rank-2 matrix `b b^T / (1 + l1) - l2 g0 g0^T`
//! (`b` the OLS estimate, `g0 = x0 / |x0|`), obtained in closed form from its
//! 2x2 restriction to `span{b, x0}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PanError, Result};
use crate::geometry::{to_hyperspherical, Dataset, HypersphericalCoords};

/// Relative threshold below which `x0` and the OLS estimate are treated as
/// collinear.
pub const COLLINEAR_TOL: f64 = 1e-12;

/// Regression coefficients in Cartesian form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector(DVector<f64>);

impl CoefficientVector {
    pub fn new(beta: DVector<f64>) -> Result<Self> {
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(PanError::Domain("non-finite coefficient".into()));
        }
        Ok(CoefficientVector(beta))
    }

    pub fn from_slice(beta: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(beta))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn hyperspherical(&self) -> HypersphericalCoords {
        to_hyperspherical(self.0.as_slice())
    }

    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        self.0.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ols,
    Ridge,
    Pan,
    PanRidge,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Ridge => "ridge",
            Method::Pan => "pan",
            Method::PanRidge => "pan_ridge",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ols" => Ok(Method::Ols),
            "ridge" => Ok(Method::Ridge),
            "pan" => Ok(Method::Pan),
            "pan_ridge" | "panridge" => Ok(Method::PanRidge),
            other => Err(PanError::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Personalized coefficients for one prediction target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanFit {
    pub beta_hat: CoefficientVector,
    /// Unit direction of the estimate (defined even when its length is 0).
    pub direction: DVector<f64>,
    pub length: f64,
    pub x0: DVector<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Eigen-structure constant `C(l1, l2)`; `None` for numerically fitted
    /// estimates.
    pub c_value: Option<f64>,
    /// Multiplier on the OLS prediction `x0^T b`, including `1 / (1 + l1)`.
    pub shrinkage_factor: f64,
    pub cos_sim: f64,
    pub ols_prediction: f64,
    pub method: Method,
}

impl PanFit {
    pub fn prediction_by_dot(&self) -> f64 {
        self.beta_hat.predict(&self.x0)
    }
}

/// Least squares via Householder QR.
pub fn ols_fit(data: &Dataset) -> Result<CoefficientVector> {
    let (n, p) = data.x.shape();
    if n < p {
        return Err(PanError::Rank(format!("n = {n} < p = {p}")));
    }
    let qr = data.x.clone().qr();
    let r = qr.r();
    let diag_max = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if diag_max == 0.0 || (0..p).any(|j| r[(j, j)].abs() <= diag_max * 1e-12) {
        return Err(PanError::Rank("X^T X is singular".into()));
    }
    let qty = qr.q().tr_mul(&data.y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| PanError::Rank("triangular solve failed".into()))?;
    CoefficientVector::new(beta)
}

/// `(X^T X + l1 I)^{-1} X^T Y`.
pub fn ridge_fit(data: &Dataset, lambda1: f64) -> Result<CoefficientVector> {
    if !(lambda1 >= 0.0) || !lambda1.is_finite() {
        return Err(PanError::Domain(format!("ridge parameter must be >= 0, got {lambda1}")));
    }
    if lambda1 == 0.0 {
        return ols_fit(data);
    }
    let p = data.p();
    let gram = data.x.tr_mul(&data.x) + DMatrix::identity(p, p) * lambda1;
    let xty = data.x.tr_mul(&data.y);
    let chol = gram
        .cholesky()
        .ok_or_else(|| PanError::Rank("ridge system not positive definite".into()))?;
    CoefficientVector::new(chol.solve(&xty))
}

/// Shrinkage factor from `b2 = |b|^2`, `g = (x0^T b)^2 / |x0|^2` and the
/// effective PAN parameter `kappa = (1 + l1) l2`, without the ridge prefactor.
fn pan_factor(b2: f64, g: f64, kappa: f64) -> f64 {
    let disc = ((b2 + kappa).powi(2) - 4.0 * kappa * g).max(0.0);
    let root = disc.sqrt();
    let num = b2 - kappa;
    if root == 0.0 {
        // Only reachable at exact degeneracies; take the one-sided limit.
        return match num.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Less) => 0.0,
            _ => 0.5,
        };
    }
    0.5 + 0.5 * num / root
}

/// The factor multiplying `x0^T b` in the PAN-ridge prediction, as a function
/// of the cosine similarity between `x0` and `b` and of `|b|`.
pub fn shrinkage_factor(cos_sim: f64, beta_norm: f64, lambda1: f64, lambda2: f64) -> f64 {
    let b2 = beta_norm * beta_norm;
    let g = b2 * cos_sim * cos_sim;
    pan_factor(b2, g, (1.0 + lambda1) * lambda2) / (1.0 + lambda1)
}

/// PAN-ridge prediction for an orthonormal design from the sufficient
/// quantities `x0^T b`, `|b|^2` and `|x0|^2`. O(1).
pub fn pan_ridge_prediction(ols_prediction: f64, beta_norm2: f64, x0_norm2: f64, lambda1: f64, lambda2: f64) -> f64 {
    if ols_prediction == 0.0 {
        return 0.0;
    }
    let g = ols_prediction * ols_prediction / x0_norm2;
    ols_prediction * pan_factor(beta_norm2, g, (1.0 + lambda1) * lambda2) / (1.0 + lambda1)
}

fn check_inputs(beta_ols: &CoefficientVector, x0: &DVector<f64>) -> Result<()> {
    if beta_ols.len() != x0.len() {
        return Err(PanError::Dimension { expected: beta_ols.len(), got: x0.len() });
    }
    if beta_ols.norm() == 0.0 {
        return Err(PanError::Degenerate("OLS estimate has zero length".into()));
    }
    if x0.norm() == 0.0 {
        return Err(PanError::Degenerate("x0 has zero length".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(PanError::Domain("non-finite x0".into()));
    }
    Ok(())
}

/// PAN-ridge estimate for `X^T X = I`.
pub fn pan_ridge_fit_orthonormal(
    beta_ols: &CoefficientVector,
    x0: &DVector<f64>,
    lambda1: f64,
    lambda2: f64,
) -> Result<PanFit> {
    check_inputs(beta_ols, x0)?;
    if !(lambda1 >= 0.0) || !lambda1.is_finite() {
        return Err(PanError::Domain(format!("ridge parameter must be >= 0, got {lambda1}")));
    }
    if !lambda2.is_finite() {
        return Err(PanError::Domain("PAN parameter must be finite".into()));
    }
    let b = beta_ols.as_vector();
    let b2 = b.norm_squared();
    let bn = b2.sqrt();
    let q = x0.norm_squared();
    let m = x0.dot(b);
    let g = m * m / q;
    let kappa = (1.0 + lambda1) * lambda2;
    let shrink = 1.0 / (1.0 + lambda1);

    let disc = ((b2 + kappa).powi(2) - 4.0 * kappa * g).max(0.0);
    let num = b2 * (b2 + kappa) - 2.0 * kappa * g;
    let c = if disc.sqrt() == 0.0 {
        if num >= 0.0 { 1.0 } else { -1.0 }
    } else {
        (num / (b2 * disc.sqrt())).clamp(-1.0, 1.0)
    };

    let u1 = b / bn;
    let perp2 = b2 * q - m * m;
    let (direction, length, beta_hat) = if perp2 < COLLINEAR_TOL * b2 * q {
        let length = 0.5 * (1.0 + c) * bn * shrink;
        let beta_hat = b * (0.5 * (1.0 + c) * shrink);
        (u1, length, beta_hat)
    } else {
        let u2 = (x0 * b2 - b * m) / (bn * perp2.sqrt());
        let sign = (kappa * m).signum() * if kappa * m == 0.0 { 0.0 } else { 1.0 };
        let w1 = (0.5 * (1.0 + c)).sqrt();
        let w2 = (0.5 * (1.0 - c)).sqrt();
        let gamma = &u1 * w1 - &u2 * (sign * w2);
        let length = w1 * bn * shrink;
        let beta_hat = &gamma * length;
        (gamma, length, beta_hat)
    };

    let cos_sim = (m / (bn * q.sqrt())).clamp(-1.0, 1.0);
    let factor = pan_factor(b2, g, kappa) * shrink;
    let method = if lambda1 == 0.0 { Method::Pan } else { Method::PanRidge };
    Ok(PanFit {
        beta_hat: CoefficientVector::new(beta_hat)?,
        direction,
        length,
        x0: x0.clone(),
        lambda1,
        lambda2,
        c_value: Some(c),
        shrinkage_factor: factor,
        cos_sim,
        ols_prediction: m,
        method,
    })
}

/// PAN estimate (no ridge term) for `X^T X = I`.
pub fn pan_fit_orthonormal(beta_ols: &CoefficientVector, x0: &DVector<f64>, lambda2: f64) -> Result<PanFit> {
    let mut fit = pan_ridge_fit_orthonormal(beta_ols, x0, 0.0, lambda2)?;
    fit.method = Method::Pan;
    Ok(fit)
}

/// Closed forms for a scaled orthogonal design `X^T X = s I`: the problem is
/// the orthonormal one with both parameters divided by `s`. The returned fit
/// records the parameters on the caller's scale.
pub fn pan_ridge_fit_scaled(
    beta_ols: &CoefficientVector,
    x0: &DVector<f64>,
    lambda1: f64,
    lambda2: f64,
    design_scale: f64,
) -> Result<PanFit> {
    if !(design_scale > 0.0) {
        return Err(PanError::Domain(format!("design scale must be > 0, got {design_scale}")));
    }
    let mut fit = pan_ridge_fit_orthonormal(beta_ols, x0, lambda1 / design_scale, lambda2 / design_scale)?;
    fit.lambda1 = lambda1;
    fit.lambda2 = lambda2;
    Ok(fit)
}

/// Prediction through the shrinkage factor, falling back to `x0^T beta`
/// when the factor is unavailable.
pub fn pan_predict(fit: &PanFit) -> f64 {
    if fit.ols_prediction == 0.0 {
        return fit.prediction_by_dot();
    }
    if fit.shrinkage_factor.is_finite() {
        fit.shrinkage_factor * fit.ols_prediction
    } else {
        fit.prediction_by_dot()
    }
}

/// Two-dimensional PAN solution from the double-angle tangent relation:
/// `tan 2a = (r^2 sin 2a_b - l sin 2a_0) / (r^2 cos 2a_b - l cos 2a_0)`,
/// length `r cos(a_b - a)`, choosing the stationary branch with the lowest
/// penalized residual sum of squares.
pub fn pan_fit_2d(beta_ols: &CoefficientVector, x0: &DVector<f64>, lambda2: f64) -> Result<PanFit> {
    check_inputs(beta_ols, x0)?;
    if beta_ols.len() != 2 {
        return Err(PanError::Dimension { expected: 2, got: beta_ols.len() });
    }
    let b = beta_ols.as_vector();
    let r_ols = b.norm();
    let a_ols = b[1].atan2(b[0]);
    let a0 = x0[1].atan2(x0[0]);
    let r2 = r_ols * r_ols;

    let num = r2 * (2.0 * a_ols).sin() - lambda2 * (2.0 * a0).sin();
    let den = r2 * (2.0 * a_ols).cos() - lambda2 * (2.0 * a0).cos();

    let mut candidates: Vec<f64> = Vec::with_capacity(6);
    if num == 0.0 && den == 0.0 {
        candidates.push(a_ols);
        candidates.push(a0 + std::f64::consts::FRAC_PI_2);
    } else {
        let half = 0.5 * num.atan2(den);
        for k in 0..4 {
            candidates.push(half + k as f64 * std::f64::consts::FRAC_PI_2);
        }
    }

    // penalized RSS relative to the OLS fit: |beta - b|^2 + l cos^2(a - a0)
    let objective = |a: f64| {
        let r = r_ols * (a_ols - a).cos();
        let (s, c) = a.sin_cos();
        let d0 = r * c - b[0];
        let d1 = r * s - b[1];
        d0 * d0 + d1 * d1 + lambda2 * (a - a0).cos().powi(2)
    };
    let mut best = candidates[0];
    let mut best_val = objective(best);
    for &a in &candidates[1..] {
        let v = objective(a);
        if v < best_val - 1e-15 * (1.0 + best_val.abs()) {
            best = a;
            best_val = v;
        }
    }
    let mut alpha = best;
    let mut length = r_ols * (a_ols - alpha).cos();
    if length < 0.0 {
        length = -length;
        alpha += std::f64::consts::PI;
    }
    alpha = wrap_angle(alpha);
    let direction = DVector::from_vec(vec![alpha.cos(), alpha.sin()]);
    let beta_hat = &direction * length;

    let q = x0.norm_squared();
    let m = x0.dot(b);
    let pred = beta_hat.dot(x0);
    let factor = if m != 0.0 { pred / m } else { f64::NAN };
    Ok(PanFit {
        beta_hat: CoefficientVector::new(beta_hat)?,
        direction,
        length,
        x0: x0.clone(),
        lambda1: 0.0,
        lambda2,
        c_value: None,
        shrinkage_factor: factor,
        cos_sim: (m / (r_ols * q.sqrt())).clamp(-1.0, 1.0),
        ols_prediction: m,
        method: Method::Pan,
    })
}

/// Map an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// The rank-2 matrix whose leading eigenvector is the PAN-ridge direction,
/// `b b^T / (1 + l1) - l2 x0 x0^T / |x0|^2`.
pub fn pan_ridge_matrix(beta_ols: &DVector<f64>, x0: &DVector<f64>, lambda1: f64, lambda2: f64) -> DMatrix<f64> {
    let g0 = x0 / x0.norm();
    beta_ols * beta_ols.transpose() / (1.0 + lambda1) - &g0 * g0.transpose() * lambda2
}
