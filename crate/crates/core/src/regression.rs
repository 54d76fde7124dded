//! Least-squares polynomial boundary surfaces `R^k → R`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Polynomial basis of a boundary surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `{1}`
    Constant,
    /// `{1, z_a}`
    Linear,
    /// `{1, z_a, z_a z_b (a ≤ b)}`
    Quadratic,
}

impl Basis {
    pub fn size(self, dim: usize) -> usize {
        match self {
            Basis::Constant => 1,
            Basis::Linear => 1 + dim,
            Basis::Quadratic => 1 + dim + dim * (dim + 1) / 2,
        }
    }

    /// Writes the basis functions at `z` into `out`.
    #[inline]
    pub fn expand(self, z: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        if self == Basis::Constant {
            return;
        }
        let k = z.len();
        out[1..=k].copy_from_slice(z);
        if self == Basis::Quadratic {
            let mut c = k + 1;
            for a in 0..k {
                for b in a..k {
                    out[c] = z[a] * z[b];
                    c += 1;
                }
            }
        }
    }
}

/// Fitted surface; coefficients are in raw (unscaled) coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub basis: Basis,
    pub dim: usize,
    pub coefficients: Vec<f64>,
}

impl Surface {
    pub fn constant(dim: usize, value: f64) -> Self {
        Self { basis: Basis::Constant, dim, coefficients: vec![value] }
    }

    #[inline]
    pub fn eval(&self, z: &[f64]) -> f64 {
        let c = &self.coefficients;
        match self.basis {
            Basis::Constant => c[0],
            Basis::Linear => c[0] + c[1..].iter().zip(z).map(|(c, z)| c * z).sum::<f64>(),
            Basis::Quadratic => {
                let k = z.len();
                let mut acc = c[0];
                for a in 0..k {
                    acc += c[1 + a] * z[a];
                }
                let mut idx = k + 1;
                for a in 0..k {
                    let mut row = 0.0;
                    for b in a..k {
                        row += c[idx] * z[b];
                        idx += 1;
                    }
                    acc += row * z[a];
                }
                acc
            }
        }
    }
}

/// Result of a boundary regression.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub surface: Surface,
    /// Set when the requested basis was rank deficient and a smaller one was used.
    pub reduced_from: Option<Basis>,
}

const RANK_TOL: f64 = 1e-10;

/// Fits `levels ≈ surface(points)` by least squares on the quadratic basis,
/// falling back to linear, then constant, if the design is rank deficient.
pub fn regress_boundary(points: &[Vec<f64>], levels: &[f64]) -> Result<Fit> {
    regress_with_basis(points, levels, Basis::Quadratic)
}

pub fn regress_with_basis(points: &[Vec<f64>], levels: &[f64], basis: Basis) -> Result<Fit> {
    if points.is_empty() || points.len() != levels.len() {
        return Err(invalid("levels", format!("{} points but {} levels", points.len(), levels.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(invalid("points", "points must share one dimension"));
    }
    if levels.iter().any(|y| !y.is_finite()) {
        return Err(invalid("levels", "levels must be finite"));
    }
    let effective = if dim == 0 { Basis::Constant } else { basis };
    let mut current = effective;
    loop {
        if let Some(coefficients) = least_squares(points, levels, current, dim) {
            let reduced_from = (current != effective).then_some(effective);
            if let Some(b) = reduced_from {
                log::warn!("rank-deficient {b:?} boundary design; refitted with {current:?} basis");
            }
            return Ok(Fit { surface: Surface { basis: current, dim, coefficients }, reduced_from });
        }
        current = match current {
            Basis::Quadratic => Basis::Linear,
            Basis::Linear | Basis::Constant => Basis::Constant,
        };
    }
}

/// Column-equilibrated Householder QR solve; `None` when numerically rank deficient.
fn least_squares(points: &[Vec<f64>], levels: &[f64], basis: Basis, dim: usize) -> Option<Vec<f64>> {
    let n = points.len();
    let p = basis.size(dim);
    if basis == Basis::Constant {
        return Some(vec![levels.iter().sum::<f64>() / n as f64]);
    }
    if n < p {
        return None;
    }
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut row = vec![0.0; p];
    for (i, z) in points.iter().enumerate() {
        basis.expand(z, &mut row);
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    let scale: Vec<f64> = (0..p).map(|j| x.column(j).norm()).collect();
    if scale.contains(&0.0) {
        return None;
    }
    for (j, s) in scale.iter().enumerate() {
        x.column_mut(j).scale_mut(1.0 / s);
    }
    let qr = x.qr();
    let r = qr.r();
    let rmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..p).any(|i| r[(i, i)].abs() <= RANK_TOL * rmax) {
        return None;
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(levels);
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let tail: f64 = (i + 1..p).map(|j| r[(i, j)] * beta[j]).sum();
        beta[i] = (qty[i] - tail) / r[(i, i)];
    }
    Some(beta.iter().zip(&scale).map(|(b, s)| b / s).collect())
}
