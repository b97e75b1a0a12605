//! Vector geometry shared by the estimators: hyperspherical coordinates,
//! cosine similarity, centering and orthonormalization of designs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PanError, Result};

/// A vector written as a length and `p - 1` angles.
///
/// Angles `0..p-2` lie in `[0, pi]`, the last one in `(-pi, pi]`. For `p = 1`
/// the angle list is empty and the single coordinate is `r` itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypersphericalCoords {
    pub r: f64,
    pub angles: Vec<f64>,
}

impl HypersphericalCoords {
    pub fn new(r: f64, angles: Vec<f64>) -> Result<Self> {
        let c = HypersphericalCoords { r, angles };
        c.validate()?;
        Ok(c)
    }

    pub fn dim(&self) -> usize {
        self.angles.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(PanError::Domain(format!("radius must be >= 0, got {}", self.r)));
        }
        let k = self.angles.len();
        for (i, &a) in self.angles.iter().enumerate() {
            let ok = if i + 1 == k {
                a > -std::f64::consts::PI && a <= std::f64::consts::PI
            } else {
                (0.0..=std::f64::consts::PI).contains(&a)
            };
            if !ok {
                return Err(PanError::Domain(format!("angle {i} out of range: {a}")));
            }
        }
        Ok(())
    }

    /// Unit direction vector encoded by the angles.
    pub fn direction(&self) -> Vec<f64> {
        direction_from_angles(&self.angles)
    }
}

fn direction_from_angles(angles: &[f64]) -> Vec<f64> {
    let p = angles.len() + 1;
    let mut out = Vec::with_capacity(p);
    let mut sin_prod = 1.0;
    for &a in angles {
        out.push(sin_prod * a.cos());
        sin_prod *= a.sin();
    }
    out.push(sin_prod);
    out
}

/// Standard n-sphere inverse transform. The zero vector maps to `r = 0` with
/// all angles zero.
pub fn to_hyperspherical(v: &[f64]) -> HypersphericalCoords {
    let p = v.len();
    assert!(p >= 1, "hyperspherical transform needs at least one coordinate");
    if p == 1 {
        return HypersphericalCoords { r: v[0].abs(), angles: Vec::new() };
    }
    // tail[k] = ||v[k..]||, accumulated from the back with hypot for stability
    let mut tail = vec![0.0f64; p + 1];
    for k in (0..p).rev() {
        tail[k] = tail[k + 1].hypot(v[k]);
    }
    let mut angles = Vec::with_capacity(p - 1);
    for k in 0..p - 2 {
        if tail[k] == 0.0 {
            angles.push(0.0);
        } else {
            angles.push(tail[k + 1].atan2(v[k]));
        }
    }
    let mut last = v[p - 1].atan2(v[p - 2]);
    if last <= -std::f64::consts::PI {
        last = std::f64::consts::PI;
    }
    if v[p - 1] == 0.0 && v[p - 2] == 0.0 {
        last = 0.0;
    }
    angles.push(last);
    HypersphericalCoords { r: tail[0], angles }
}

/// Forward transform: the cos/sin product cascade scaled by `r`.
pub fn from_hyperspherical(c: &HypersphericalCoords) -> Vec<f64> {
    c.direction().into_iter().map(|d| c.r * d).collect()
}

/// Inner product of the unit directions of two hyperspherical points,
/// evaluated directly on the angles:
/// `g(a, b) = cos a1 cos b1 + sin a1 sin b1 g(a[1..], b[1..])`, closing with
/// `cos(a_last - b_last)`.
pub fn direction_inner(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    match a.len() {
        0 => 1.0,
        _ => {
            let k = a.len() - 1;
            let mut acc = (a[k] - b[k]).cos();
            for j in (0..k).rev() {
                acc = a[j].cos() * b[j].cos() + a[j].sin() * b[j].sin() * acc;
            }
            acc
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a.b / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(PanError::Dimension { expected: a.len(), got: b.len() });
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(PanError::Degenerate("cosine similarity of a zero vector".into()));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Design matrix and outcome, optionally centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_means: DVector<f64>,
    pub y_mean: f64,
    pub centered: bool,
    pub column_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(PanError::InsufficientData(format!("empty design ({n}x{p})")));
        }
        if y.len() != n {
            return Err(PanError::Dimension { expected: n, got: y.len() });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(PanError::Domain("non-finite value in dataset".into()));
        }
        let column_names = (1..=p).map(|j| format!("x{j}")).collect();
        Ok(Dataset {
            x,
            y,
            column_means: DVector::zeros(p),
            y_mean: 0.0,
            centered: false,
            column_names,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(PanError::Dimension { expected: self.p(), got: names.len() });
        }
        self.column_names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    /// Apply the stored centering to a covariate vector on the original scale.
    pub fn center_point(&self, x0: &DVector<f64>) -> Result<DVector<f64>> {
        if x0.len() != self.p() {
            return Err(PanError::Dimension { expected: self.p(), got: x0.len() });
        }
        Ok(x0 - &self.column_means)
    }

    /// Copy with row `i` removed, uncentered values restored first.
    pub fn without_row(&self, i: usize) -> Result<Dataset> {
        let raw = self.uncentered();
        let x = raw.x.clone().remove_row(i);
        let y = raw.y.clone().remove_row(i);
        Dataset::new(x, y)?.with_column_names(self.column_names.clone())
    }

    /// The data on its original scale.
    pub fn uncentered(&self) -> Dataset {
        if !self.centered {
            return self.clone();
        }
        let mut x = self.x.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.column_means[j]);
        }
        Dataset {
            x,
            y: self.y.add_scalar(self.y_mean),
            column_means: DVector::zeros(self.p()),
            y_mean: 0.0,
            centered: false,
            column_names: self.column_names.clone(),
        }
    }

    /// Scale columns to unit sample standard deviation (divisor n - 1).
    pub fn standardized(&self) -> Result<Dataset> {
        let raw = self.uncentered();
        let n = raw.n();
        if n < 2 {
            return Err(PanError::InsufficientData("standardization needs n >= 2".into()));
        }
        let mut x = raw.x.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            if var <= 0.0 {
                return Err(PanError::Degenerate(format!(
                    "column {} has zero variance",
                    raw.column_names[j]
                )));
            }
            col.scale_mut(1.0 / var.sqrt());
        }
        Dataset::new(x, raw.y)?.with_column_names(raw.column_names)
    }
}

/// Subtract column means from X and the mean from Y, recording them.
pub fn center(data: &Dataset) -> Result<Dataset> {
    let raw = data.uncentered();
    let n = raw.n();
    if n < 2 {
        return Err(PanError::InsufficientData(format!("centering needs n >= 2, got {n}")));
    }
    let means = DVector::from_iterator(raw.p(), raw.x.column_iter().map(|c| c.mean()));
    let mut x = raw.x.clone();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let y_mean = raw.y.mean();
    Ok(Dataset {
        x,
        y: raw.y.add_scalar(-y_mean),
        column_means: means,
        y_mean,
        centered: true,
        column_names: raw.column_names,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthoScale {
    /// `X^T X = I`
    Unit,
    /// `X^T X = n I`
    SqrtN,
}

/// Orthonormal basis of the column span via Householder QR. Each output
/// column has its first nonzero entry positive.
pub fn orthonormalize(x: &DMatrix<f64>, scale: OrthoScale) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if n < p {
        return Err(PanError::Rank(format!("cannot orthonormalize {n}x{p}: n < p")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let tol = diag_max * (n.max(p) as f64) * f64::EPSILON * 16.0;
    if diag_max == 0.0 || (0..p).any(|j| r[(j, j)].abs() <= tol) {
        return Err(PanError::Rank("columns are linearly dependent".into()));
    }
    let mut q = qr.q();
    let factor = match scale {
        OrthoScale::Unit => 1.0,
        OrthoScale::SqrtN => (n as f64).sqrt(),
    };
    for mut col in q.column_iter_mut() {
        let lead = col.iter().copied().find(|v| v.abs() > 1e-14).unwrap_or(1.0);
        let s = if lead < 0.0 { -factor } else { factor };
        col.scale_mut(s);
    }
    Ok(q)
}

/// If `X^T X = s I` for some scalar `s > 0` (within a relative tolerance),
/// returns `s`.
pub fn orthogonal_design_scale(x: &DMatrix<f64>, rel_tol: f64) -> Option<f64> {
    let g = x.tr_mul(x);
    let p = g.nrows();
    let s = g.trace() / p as f64;
    if s <= 0.0 {
        return None;
    }
    for i in 0..p {
        for j in 0..p {
            let target = if i == j { s } else { 0.0 };
            if (g[(i, j)] - target).abs() > rel_tol * s {
                return None;
            }
        }
    }
    Some(s)
}
