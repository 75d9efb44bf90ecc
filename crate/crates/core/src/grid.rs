//! Uniform rectangular grids on `[-L, L]^dim`, sampled fields, the
//! second-order finite-difference Laplacian with homogeneous Dirichlet data
//! outside the box, and trapezoidal quadrature.
//!
//! Fields are stored row-major with the last axis fastest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible grid spacing (resolves the unit-rate decay of the bump).
pub const MAX_SPACING: f64 = 0.25;

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    /// Running sum and its accumulated rounding error.
    pub fn parts(&self) -> (f64, f64) {
        (self.sum, self.comp)
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Uniform grid with `points_per_axis` nodes per axis; the origin is a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub half_width: f64,
    pub spacing: f64,
    pub points_per_axis: usize,
}

impl Grid {
    /// Builds the grid with `n = 2 round(L/h) + 1`; the stored half width is
    /// snapped to `(n - 1) h / 2` so that the end nodes sit on the box faces.
    pub fn new(dim: usize, half_width: f64, spacing: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!("dim must be 1, 2 or 3 (got {dim})")));
        }
        if !(spacing > 0.0 && spacing <= MAX_SPACING) {
            return Err(Error::InvalidParameter(format!(
                "spacing must lie in (0, {MAX_SPACING}] (got {spacing})"
            )));
        }
        if !(half_width.is_finite() && half_width > spacing) {
            return Err(Error::InvalidParameter(format!("half width {half_width} too small")));
        }
        let half_nodes = (half_width / spacing).round() as usize;
        let n = 2 * half_nodes + 1;
        Ok(Self {
            dim,
            half_width: half_nodes as f64 * spacing,
            spacing,
            points_per_axis: n,
        })
    }

    /// Smallest grid of the given spacing that contains every point with at
    /// least `margin` to spare on every face.
    pub fn covering(dim: usize, points: &[Vec<f64>], margin: f64, spacing: f64) -> Result<Self> {
        let reach = points
            .iter()
            .flat_map(|p| p.iter().map(|c| c.abs()))
            .fold(0.0_f64, f64::max);
        let half_nodes = ((reach + margin) / spacing).ceil();
        Self::new(dim, half_nodes * spacing, spacing)
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one grid cell, `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Stride of `axis` in the flat array.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((self.dim - 1 - axis) as u32)
    }

    /// Coordinate of the `i`-th node along any axis.
    #[inline]
    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    /// Multi-index of a flat index (unused axes are zero).
    #[inline]
    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let n = self.points_per_axis;
        let mut out = [0usize; 3];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % n;
            idx /= n;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi[..self.dim]
            .iter()
            .fold(0usize, |acc, &i| acc * self.points_per_axis + i)
    }

    /// Physical position of a node (unused axes are zero).
    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let m = self.multi_index(idx);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = self.coordinate(m[axis]);
        }
        x
    }

    /// Node index nearest to a coordinate along one axis, clamped to the box.
    pub fn nearest_node(&self, x: f64) -> usize {
        let i = ((x + self.half_width) / self.spacing).round();
        i.clamp(0.0, (self.points_per_axis - 1) as f64) as usize
    }

    /// Distance from `x` to the nearest box face.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        x[..self.dim]
            .iter()
            .map(|c| self.half_width - c.abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether a node lies on the box faces.
    pub fn is_boundary_node(&self, idx: usize) -> bool {
        let m = self.multi_index(idx);
        m[..self.dim]
            .iter()
            .any(|&i| i == 0 || i + 1 == self.points_per_axis)
    }

    /// Trapezoid weight of a node: `h^dim` halved once per face it touches.
    #[inline]
    pub fn quadrature_weight(&self, idx: usize) -> f64 {
        let m = self.multi_index(idx);
        let mut w = self.cell_volume();
        for &i in &m[..self.dim] {
            if i == 0 || i + 1 == self.points_per_axis {
                w *= 0.5;
            }
        }
        w
    }

    pub fn quadrature_weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.quadrature_weight(i)).collect()
    }

    /// Samples a function of position on every node.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Field {
        let values = (0..self.len())
            .map(|i| {
                let x = self.point(i);
                f(&x[..self.dim])
            })
            .collect();
        Field { grid: *self, values }
    }

    pub fn zeros(&self) -> Field {
        Field {
            grid: *self,
            values: vec![0.0; self.len()],
        }
    }

    pub fn constant(&self, c: f64) -> Field {
        Field {
            grid: *self,
            values: vec![c; self.len()],
        }
    }

    fn same_as(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// A real function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.grid.same_as(&other.grid)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// Translates the field by whole grid steps; nodes shifted in from
    /// outside the box are zero.
    pub fn shift_by_nodes(&self, steps: &[i64]) -> Field {
        let g = self.grid;
        let n = g.points_per_axis as i64;
        let mut out = vec![0.0; g.len()];
        for (idx, slot) in out.iter_mut().enumerate() {
            let m = g.multi_index(idx);
            let mut src = [0usize; 3];
            let mut inside = true;
            for axis in 0..g.dim {
                let s = m[axis] as i64 - steps[axis];
                if s < 0 || s >= n {
                    inside = false;
                    break;
                }
                src[axis] = s as usize;
            }
            if inside {
                *slot = self.values[g.flat_index(&src)];
            }
        }
        Field {
            grid: g,
            values: out,
        }
    }

    /// Writes `<stem>.bin` (little-endian f64, row-major) and the JSON
    /// sidecar `<stem>.json` describing the grid.
    pub fn dump(&self, stem: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(stem.with_extension("bin"), bytes)?;
        fs::write(
            stem.with_extension("json"),
            serde_json::to_string_pretty(&self.grid)?,
        )?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let grid: Grid = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
        let bytes = fs::read(stem.with_extension("bin"))?;
        if bytes.len() != 8 * grid.len() {
            return Err(Error::GridMismatch(format!(
                "payload holds {} bytes, sidecar implies {}",
                bytes.len(),
                8 * grid.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Field::new(grid, values)
    }
}

/// Second-order centered Laplacian with zero values outside the box.
pub fn laplacian_values(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let n = grid.points_per_axis;
    let inv_h2 = 1.0 / (grid.spacing * grid.spacing);
    for (idx, o) in out.iter_mut().enumerate() {
        let m = grid.multi_index(idx);
        let ui = u[idx];
        let mut acc = 0.0;
        for axis in 0..grid.dim {
            let s = grid.stride(axis);
            let lo = if m[axis] > 0 { u[idx - s] } else { 0.0 };
            let hi = if m[axis] + 1 < n { u[idx + s] } else { 0.0 };
            // differences first: neighbouring values nearly cancel exactly
            acc += (hi - ui) - (ui - lo);
        }
        *o = inv_h2 * acc;
    }
}

pub fn laplacian(u: &Field) -> Field {
    let mut out = vec![0.0; u.values.len()];
    laplacian_values(&u.grid, &u.values, &mut out);
    Field {
        grid: u.grid,
        values: out,
    }
}

/// `Δu - (1 + δV) u`, the linear part of the Schrödinger operator.
pub fn apply_schrodinger_operator(u: &Field, potential: &Field, delta: f64) -> Result<Field> {
    u.grid.same_as(&potential.grid)?;
    u.check_finite("u")?;
    potential.check_finite("potential")?;
    let mut lap = laplacian(u);
    for ((l, &ui), &vi) in lap.values.iter_mut().zip(&u.values).zip(&potential.values) {
        *l -= (1.0 + delta * vi) * ui;
    }
    Ok(lap)
}

/// Trapezoidal quadrature over the box.
pub fn integrate(u: &Field) -> f64 {
    u.values
        .iter()
        .enumerate()
        .map(|(i, &v)| u.grid.quadrature_weight(i) * v)
        .collect::<CompensatedSum>()
        .value()
}

/// `∫ u v` by trapezoidal quadrature.
pub fn inner_product(u: &Field, v: &Field) -> Result<f64> {
    u.grid.same_as(&v.grid)?;
    Ok(inner_values(&u.grid, &u.values, &v.values))
}

pub(crate) fn inner_values(grid: &Grid, u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .enumerate()
        .map(|(i, (&a, &b))| grid.quadrature_weight(i) * a * b)
        .collect::<CompensatedSum>()
        .value()
}

/// `∫ |∇u|²` from forward differences over every edge, including the edges
/// to the zero ghost layer, so that it equals `-∫ u Δu` for the stencil of
/// [`laplacian`] up to the boundary half weights.
pub fn gradient_energy_values(grid: &Grid, u: &[f64]) -> f64 {
    let n = grid.points_per_axis;
    let inv_h = 1.0 / grid.spacing;
    let vol = grid.cell_volume();
    let mut acc = CompensatedSum::new();
    for (idx, &ui) in u.iter().enumerate() {
        let m = grid.multi_index(idx);
        for axis in 0..grid.dim {
            let s = grid.stride(axis);
            let next = if m[axis] + 1 < n { u[idx + s] } else { 0.0 };
            let d = (next - ui) * inv_h;
            acc.add(vol * d * d);
            if m[axis] == 0 {
                let d0 = ui * inv_h;
                acc.add(vol * d0 * d0);
            }
        }
    }
    acc.value()
}

/// `‖u‖²_{H¹} = ∫ |∇u|² + u²`.
pub fn h1_norm_squared(u: &Field) -> f64 {
    gradient_energy_values(&u.grid, &u.values) + inner_values(&u.grid, &u.values, &u.values)
}
