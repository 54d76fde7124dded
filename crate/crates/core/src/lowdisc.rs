//! Korobov rank-1 lattices ("good lattice points").
//!
//! Point `j` of a `J`-point lattice in dimension `s` is
//! `frac(j · (1, a, a², …, a^{s-1}) / J)`. Multipliers `a` below were chosen
//! by exhaustive search over `a ∈ [2, J/2]`, `gcd(a, J) = 1`, minimizing the
//! `P_2` lattice criterion.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `(J, dim, a)`.
const KOROBOV_TABLE: &[(usize, usize, usize)] = &[
    (16, 2, 7),
    (16, 3, 3),
    (16, 4, 3),
    (32, 2, 7),
    (32, 3, 3),
    (32, 4, 3),
    (64, 2, 27),
    (64, 3, 5),
    (64, 4, 3),
    (128, 2, 47),
    (128, 3, 25),
    (128, 4, 21),
    (256, 2, 75),
    (256, 3, 37),
    (256, 4, 39),
    (512, 2, 149),
    (512, 3, 119),
    (512, 4, 115),
    (1024, 2, 275),
    (1024, 3, 323),
    (1024, 4, 27),
    (2048, 2, 791),
    (2048, 3, 495),
    (2048, 4, 137),
    (4096, 2, 1557),
    (4096, 3, 751),
    (4096, 4, 791),
];

/// Closed price interval for one lattice coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Lattice points mapped into a price box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedGrid {
    pub points: Vec<Vec<f64>>,
    pub bounds: Vec<Interval>,
    pub multiplier: usize,
}

impl SeedGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Korobov multiplier for `(count, dim)`, and whether it came from the table.
pub fn korobov_multiplier(count: usize, dim: usize) -> (usize, bool) {
    if dim <= 1 || count <= 2 {
        return (1, true);
    }
    if let Some(&(_, _, a)) = KOROBOV_TABLE.iter().find(|(j, s, _)| *j == count && *s == dim) {
        return (a, true);
    }
    // Default: first multiplier at or above round(J·(√5−1)/2) that is coprime to J.
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = ((count as f64 * golden).round() as usize).clamp(1, count - 1);
    while gcd(a, count) != 1 {
        a += 1;
    }
    (a, false)
}

/// Unmapped lattice in `[0, 1)^dim`.
pub fn unit_lattice(count: usize, dim: usize) -> Result<(Vec<Vec<f64>>, usize)> {
    if count == 0 {
        return Err(invalid("J", "at least one lattice point is required"));
    }
    if dim == 0 {
        return Err(invalid("dim", "lattice dimension must be at least 1"));
    }
    let (a, tabulated) = korobov_multiplier(count, dim);
    if !tabulated {
        log::warn!("no tabulated Korobov multiplier for J={count}, dim={dim}; using default a={a}");
    }
    let mut gen = Vec::with_capacity(dim);
    let mut g = 1 % count.max(1);
    for _ in 0..dim {
        gen.push(g);
        g = (g * a) % count;
    }
    let points = (0..count)
        .map(|j| gen.iter().map(|&g| ((j * g) % count) as f64 / count as f64).collect())
        .collect();
    Ok((points, a))
}

/// Generates `count` lattice points affinely mapped into `bounds`.
pub fn generate_glp(count: usize, bounds: &[Interval]) -> Result<SeedGrid> {
    if let Some(b) = bounds.iter().find(|b| !(b.lo.is_finite() && b.hi.is_finite() && b.lo <= b.hi)) {
        return Err(invalid("box", format!("invalid interval [{}, {}]", b.lo, b.hi)));
    }
    let (unit, multiplier) = unit_lattice(count, bounds.len())?;
    let points = unit
        .into_iter()
        .map(|p| p.iter().zip(bounds).map(|(u, b)| b.lo + u * (b.hi - b.lo)).collect())
        .collect();
    Ok(SeedGrid { points, bounds: bounds.to_vec(), multiplier })
}
