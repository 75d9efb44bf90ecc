//! Spike configurations, the superposition ansatz, the kernel directions and
//! the weighted sup norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::profile::GroundState;

/// Spikes must sit at least this far from every box face.
pub const MIN_BOUNDARY_MARGIN: f64 = 10.0;

/// `k` spike centres with minimum separation `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub points: Vec<Vec<f64>>,
    pub rho: f64,
}

impl Configuration {
    pub fn new(points: Vec<Vec<f64>>, rho: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfiguration("no spikes".into()));
        }
        let dim = points[0].len();
        if !(1..=3).contains(&dim) || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidConfiguration("inconsistent point dimensions".into()));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("spike position"));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be positive (got {rho})")));
        }
        Ok(Self { points, rho })
    }

    pub fn single(dim: usize, rho: f64) -> Self {
        Self {
            points: vec![vec![0.0; dim]],
            rho,
        }
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        distance(&self.points[i], &self.points[j])
    }

    /// Smallest pairwise distance (`∞` for a single spike).
    pub fn min_distance(&self) -> f64 {
        let mut d = f64::INFINITY;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                d = d.min(self.distance(i, j));
            }
        }
        d
    }

    /// Largest pairwise distance (zero for a single spike).
    pub fn diameter(&self) -> f64 {
        let mut d = 0.0_f64;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                d = d.max(self.distance(i, j));
            }
        }
        d
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| p.iter().zip(shift).map(|(a, b)| a + b).collect())
                .collect(),
            rho: self.rho,
        }
    }

    pub fn with_point(&self, q: Vec<f64>) -> Self {
        let mut points = self.points.clone();
        points.push(q);
        Self { points, rho: self.rho }
    }

    /// Flattened coordinates, spike-major.
    pub fn flat(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    pub fn from_flat(x: &[f64], dim: usize, rho: f64) -> Self {
        Self {
            points: x.chunks(dim).map(|c| c.to_vec()).collect(),
            rho,
        }
    }

    /// Closest distance from a spike to the faces of `grid`.
    pub fn boundary_margin(&self, grid: &Grid) -> f64 {
        self.points
            .iter()
            .map(|p| grid.distance_to_boundary(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check_on(&self, grid: &Grid) -> Result<()> {
        if self.dim() != grid.dim {
            return Err(Error::GridMismatch(format!(
                "configuration in dimension {} on a {}-dimensional grid",
                self.dim(),
                grid.dim
            )));
        }
        let margin = self.boundary_margin(grid);
        if margin < MIN_BOUNDARY_MARGIN {
            return Err(Error::SpikeNearBoundary {
                distance: margin,
                required: MIN_BOUNDARY_MARGIN,
            });
        }
        Ok(())
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigurationCheck {
    pub valid: bool,
    pub min_distance: Option<f64>,
    /// `min_distance - rho`; absent for a single spike.
    pub margin: Option<f64>,
    pub violating_pair: Option<(usize, usize)>,
}

/// Membership in `Λ_k = {|Q_i - Q_j| ≥ ρ for i ≠ j}`.
pub fn validate_configuration(points: &[Vec<f64>], rho: f64) -> ConfigurationCheck {
    let mut min = f64::INFINITY;
    let mut worst = None;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = distance(&points[i], &points[j]);
            if d < min {
                min = d;
                worst = Some((i, j));
            }
        }
    }
    if points.len() < 2 {
        return ConfigurationCheck {
            valid: true,
            min_distance: None,
            margin: None,
            violating_pair: None,
        };
    }
    let valid = min >= rho;
    ConfigurationCheck {
        valid,
        min_distance: Some(min),
        margin: Some(min - rho),
        violating_pair: if valid { None } else { worst },
    }
}

/// Smooth cutoff equal to 1 for `t ≤ (ρ - 1)/2` and 0 for `t ≥ ρ/2`.
pub fn cutoff(t: f64, rho: f64) -> f64 {
    let a = 0.5 * (rho - 1.0);
    let b = 0.5 * rho;
    if t <= a {
        1.0
    } else if t >= b {
        0.0
    } else {
        let s = (t - a) / (b - a);
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// `Σ_i w(|x - Q_i|)` sampled on the grid.
pub fn build_ansatz(config: &Configuration, gs: &GroundState, grid: &Grid) -> Result<Field> {
    config.check_on(grid)?;
    Ok(grid.sample(|x| {
        config
            .points
            .iter()
            .map(|q| gs.value(distance(x, q)))
            .sum()
    }))
}

/// `Z_ij = ∂_j w_{Q_i} χ_i`, ordered spike-major.
pub fn kernel_functions(config: &Configuration, gs: &GroundState, grid: &Grid) -> Result<Vec<Field>> {
    config.check_on(grid)?;
    let mut out = Vec::with_capacity(config.len() * grid.dim);
    for q in &config.points {
        for axis in 0..grid.dim {
            out.push(grid.sample(|x| kernel_value(gs, q, config.rho, axis, x)));
        }
    }
    Ok(out)
}

pub(crate) fn kernel_value(gs: &GroundState, q: &[f64], rho: f64, axis: usize, x: &[f64]) -> f64 {
    let r = distance(x, q);
    if r == 0.0 || r >= 0.5 * rho {
        return 0.0;
    }
    gs.derivative(r) * (x[axis] - q[axis]) / r * cutoff(r, rho)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeightedNormParams {
    pub eta: f64,
}

impl Default for WeightedNormParams {
    fn default() -> Self {
        Self { eta: 0.75 }
    }
}

impl WeightedNormParams {
    /// Requires `max(σ/(1+σ), η̄) < η < 1`.
    pub fn validate(&self, sigma: f64, eta_bar: f64) -> Result<()> {
        let lo = (sigma / (1.0 + sigma)).max(eta_bar);
        if self.eta > lo && self.eta < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "eta = {} must lie in ({lo}, 1)",
                self.eta
            )))
        }
    }
}

/// `W(x) = Σ_i e^{-η|x - Q_i|}`.
pub fn weight(x: &[f64], points: &[Vec<f64>], eta: f64) -> f64 {
    points.iter().map(|q| (-eta * distance(x, q)).exp()).sum()
}

/// `sup |h| / W`.
pub fn weighted_norm(h: &Field, config: &Configuration, params: &WeightedNormParams) -> f64 {
    weighted_norm_values(&h.grid, &h.values, 1, config, params.eta)
}

/// Weighted sup norm of an interleaved vector field with `nc` components.
pub fn weighted_norm_values(
    grid: &Grid,
    values: &[f64],
    nc: usize,
    config: &Configuration,
    eta: f64,
) -> f64 {
    let mut sup = 0.0_f64;
    for node in 0..grid.len() {
        let m = (0..nc)
            .map(|c| values[node * nc + c].abs())
            .fold(0.0, f64::max);
        if m > 0.0 {
            let x = grid.point(node);
            sup = sup.max(m / weight(&x[..grid.dim], &config.points, eta));
        }
    }
    sup
}

/// `Σ_{j ≠ i} w(|Q_j - Q_i|)`.
pub fn neighbour_sum(config: &Configuration, gs: &GroundState, i: usize) -> f64 {
    (0..config.len())
        .filter(|&j| j != i)
        .map(|j| gs.value(config.distance(i, j)))
        .sum()
}

/// Constant `C` with `Σ_{j≠i} w(|Q_j - Q_i|) ≤ C e^{-ρ}` for every
/// configuration of minimum separation `ρ`. A ρ-separated set has at most
/// `6^N m^{N-1}` points in the shell `mρ ≤ |x - Q_i| < (m+1)ρ`, and `w` is
/// decreasing, so `Σ_m 6^N m^{N-1} w(mρ)` bounds the sum.
pub fn packing_constant(gs: &GroundState, rho: f64) -> f64 {
    let n = gs.dim as i32;
    let mut s = 0.0;
    for m in 1..200 {
        let term = 6f64.powi(n) * (m as f64).powi(n - 1) * gs.value(m as f64 * rho);
        s += term;
        if term < 1e-300 {
            break;
        }
    }
    s * rho.exp()
}
