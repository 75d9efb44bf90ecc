//! Local reaction models and the discrete operator they induce on a grid.
//!
//! Unknowns are interleaved: component `c` at node `i` sits at `i * nc + c`.
//! Values outside the box come from an [`Exterior`], zero unless the caller
//! continues a known profile across the faces.

use std::sync::Arc;

use crate::energy::EnergyBreakdown;
use crate::error::{Error, Result};
use crate::grid::{CompensatedSum, Grid};
use crate::linalg::BandMatrix;
use crate::nonlinearity::Nonlinearity;
use crate::registry::Registry;
use crate::system::{CoupledModel, CouplingParams};

pub trait LocalModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn components(&self) -> usize;
    /// Profile of a single spike is `amplitudes[c] * w`.
    fn amplitudes(&self) -> Vec<f64>;
    fn reaction(&self, u: &[f64], out: &mut [f64]);
    /// Row-major `nc × nc` derivative of [`LocalModel::reaction`].
    fn reaction_jacobian(&self, u: &[f64], out: &mut [f64]);
    /// Primitive `G` with `∇G = reaction`.
    fn primitive(&self, u: &[f64]) -> f64;

    /// Energy of one spike in units of the scalar bump energy.
    fn energy_factor(&self) -> f64 {
        self.amplitudes().iter().map(|a| a * a).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ScalarModel {
    pub nonlinearity: Nonlinearity,
}

impl LocalModel for ScalarModel {
    fn name(&self) -> &'static str {
        "scalar"
    }
    fn components(&self) -> usize {
        1
    }
    fn amplitudes(&self) -> Vec<f64> {
        vec![1.0]
    }
    fn reaction(&self, u: &[f64], out: &mut [f64]) {
        out[0] = self.nonlinearity.f(u[0]);
    }
    fn reaction_jacobian(&self, u: &[f64], out: &mut [f64]) {
        out[0] = self.nonlinearity.df(u[0]);
    }
    fn primitive(&self, u: &[f64]) -> f64 {
        self.nonlinearity.primitive(u[0])
    }
}

/// Arguments shared by the model factories.
#[derive(Debug, Clone)]
pub struct ModelArgs {
    pub nonlinearity: Nonlinearity,
    pub mu1: f64,
    pub mu2: f64,
    pub beta: f64,
}

impl Default for ModelArgs {
    fn default() -> Self {
        Self {
            nonlinearity: Nonlinearity::cubic(),
            mu1: 1.0,
            mu2: 1.0,
            beta: 2.0,
        }
    }
}

pub fn model_registry() -> Registry<dyn LocalModel, ModelArgs> {
    let mut r: Registry<dyn LocalModel, ModelArgs> = Registry::new("local model");
    r.register_with("scalar", |a| {
        Ok(Arc::new(ScalarModel {
            nonlinearity: a.nonlinearity,
        }))
    });
    r.register_with("coupled", |a| {
        Ok(Arc::new(CoupledModel::new(CouplingParams::synchronized(
            a.mu1, a.mu2, a.beta,
        )?)?))
    });
    r
}

/// Ghost values: one entry `(unknown, value)` per edge leaving the box.
#[derive(Debug, Clone, Default)]
pub struct Exterior {
    pub entries: Vec<(usize, f64)>,
}

impl Exterior {
    /// Zero ghost layer.
    pub fn zero(grid: &Grid, nc: usize) -> Self {
        let mut entries = Vec::new();
        for_each_ghost(grid, |node, _| {
            for c in 0..nc {
                entries.push((node * nc + c, 0.0));
            }
        });
        Self { entries }
    }

    /// Ghost layer filled by `f(ghost multi-index, component)`.
    pub fn from_fn(grid: &Grid, nc: usize, mut f: impl FnMut(&[i64; 3], usize) -> f64) -> Self {
        let mut entries = Vec::new();
        for_each_ghost(grid, |node, ghost| {
            for c in 0..nc {
                entries.push((node * nc + c, f(ghost, c)));
            }
        });
        Self { entries }
    }
}

/// Calls `f(boundary node, ghost multi-index)` for every edge leaving the box.
pub fn for_each_ghost(grid: &Grid, mut f: impl FnMut(usize, &[i64; 3])) {
    let n = grid.points_per_axis;
    for node in 0..grid.len() {
        let m = grid.multi_index(node);
        for axis in 0..grid.dim {
            for (edge, step) in [(0usize, -1i64), (n - 1, 1)] {
                if m[axis] == edge {
                    let mut g = [m[0] as i64, m[1] as i64, m[2] as i64];
                    g[axis] += step;
                    f(node, &g);
                }
            }
        }
    }
}

/// `Δ_h u - (1 + δV) u + N(u)` on one grid.
#[derive(Clone)]
pub struct Discretization {
    pub grid: Grid,
    pub model: Arc<dyn LocalModel>,
    /// `V_c` at every unknown.
    pub potential: Vec<f64>,
    pub delta: f64,
    pub weights: Vec<f64>,
}

impl Discretization {
    pub fn new(grid: Grid, model: Arc<dyn LocalModel>, potential: Vec<f64>, delta: f64) -> Result<Self> {
        let nc = model.components();
        if potential.len() != grid.len() * nc {
            return Err(Error::GridMismatch("potential length".into()));
        }
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::InvalidParameter(format!("delta must be nonnegative (got {delta})")));
        }
        let weights = (0..grid.len())
            .flat_map(|i| std::iter::repeat_n(grid.quadrature_weight(i), nc))
            .collect();
        Ok(Self {
            grid,
            model,
            potential,
            delta,
            weights,
        })
    }

    pub fn unforced(grid: Grid, model: Arc<dyn LocalModel>) -> Result<Self> {
        let n = grid.len() * model.components();
        Self::new(grid, model, vec![0.0; n], 0.0)
    }

    pub fn nc(&self) -> usize {
        self.model.components()
    }

    pub fn len(&self) -> usize {
        self.grid.len() * self.nc()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn bandwidth(&self) -> usize {
        self.nc() * self.grid.stride(0)
    }

    pub fn residual(&self, u: &[f64], exterior: &Exterior) -> Vec<f64> {
        let g = &self.grid;
        let nc = self.nc();
        let n = g.points_per_axis;
        let inv_h2 = 1.0 / (g.spacing * g.spacing);
        let mut out = vec![0.0; u.len()];
        let mut react = vec![0.0; nc];
        for node in 0..g.len() {
            let m = g.multi_index(node);
            let base = node * nc;
            self.model.reaction(&u[base..base + nc], &mut react);
            for c in 0..nc {
                let idx = base + c;
                let ui = u[idx];
                let mut acc = 0.0;
                for axis in 0..g.dim {
                    let s = g.stride(axis) * nc;
                    let lo = if m[axis] > 0 { u[idx - s] } else { 0.0 };
                    let hi = if m[axis] + 1 < n { u[idx + s] } else { 0.0 };
                    acc += (hi - ui) - (ui - lo);
                }
                out[idx] = inv_h2 * acc - (1.0 + self.delta * self.potential[idx]) * ui + react[c];
            }
        }
        for &(idx, v) in &exterior.entries {
            out[idx] += inv_h2 * v;
        }
        out
    }

    /// Residual of `hi + lo` with the stencil differences taken error-free,
    /// so that the rounding of the iterate itself is not amplified by
    /// `1/h²`.
    pub fn residual_extended(&self, hi: &[f64], lo: &[f64], exterior: &Exterior) -> Vec<f64> {
        let g = &self.grid;
        let nc = self.nc();
        let n = g.points_per_axis;
        let inv_h2 = 1.0 / (g.spacing * g.spacing);
        let mut out = vec![0.0; hi.len()];
        let mut react = vec![0.0; nc];
        let mut jac = vec![0.0; nc * nc];
        for node in 0..g.len() {
            let m = g.multi_index(node);
            let base = node * nc;
            self.model.reaction(&hi[base..base + nc], &mut react);
            self.model.reaction_jacobian(&hi[base..base + nc], &mut jac);
            for c in 0..nc {
                let idx = base + c;
                let (ui, li) = (hi[idx], lo[idx]);
                let mut lap = CompensatedSum::new();
                let mut lap_lo = 0.0;
                for axis in 0..g.dim {
                    let s = g.stride(axis) * nc;
                    let (h_lo, l_lo) = if m[axis] > 0 { (hi[idx - s], lo[idx - s]) } else { (0.0, 0.0) };
                    let (h_hi, l_hi) = if m[axis] + 1 < n { (hi[idx + s], lo[idx + s]) } else { (0.0, 0.0) };
                    let (d1, e1) = two_sum(h_hi, -ui);
                    let (d2, e2) = two_sum(ui, -h_lo);
                    let (t, et) = two_sum(d1, -d2);
                    lap.add(t);
                    lap.add(et + e1 - e2);
                    lap_lo += (l_hi - li) - (li - l_lo);
                }
                let (lh, ll) = lap.parts();
                let p = lh * inv_h2;
                let perr = lh.mul_add(inv_h2, -p) + ll * inv_h2;
                let k = 1.0 + self.delta * self.potential[idx];
                let q = k * ui;
                let qerr = k.mul_add(ui, -q);
                let mut corr = 0.0;
                for d in 0..nc {
                    corr += jac[c * nc + d] * lo[base + d];
                }
                let mut acc = CompensatedSum::new();
                for v in [p, perr, lap_lo * inv_h2, -q, -qerr, -k * li, react[c], corr] {
                    acc.add(v);
                }
                out[idx] = acc.value();
            }
        }
        for &(idx, v) in &exterior.entries {
            out[idx] += inv_h2 * v;
        }
        out
    }

    pub fn jacobian(&self, u: &[f64]) -> BandMatrix {
        let g = &self.grid;
        let nc = self.nc();
        let n = g.points_per_axis;
        let inv_h2 = 1.0 / (g.spacing * g.spacing);
        let diag = -2.0 * g.dim as f64 * inv_h2;
        let bw = self.bandwidth();
        let mut a = BandMatrix::zeros(u.len(), bw, bw);
        let mut jac = vec![0.0; nc * nc];
        for node in 0..g.len() {
            let m = g.multi_index(node);
            let base = node * nc;
            self.model.reaction_jacobian(&u[base..base + nc], &mut jac);
            for c in 0..nc {
                let idx = base + c;
                a.add(idx, idx, diag - 1.0 - self.delta * self.potential[idx]);
                for d in 0..nc {
                    a.add(idx, base + d, jac[c * nc + d]);
                }
                for axis in 0..g.dim {
                    let s = g.stride(axis) * nc;
                    if m[axis] > 0 {
                        a.add(idx, idx - s, inv_h2);
                    }
                    if m[axis] + 1 < n {
                        a.add(idx, idx + s, inv_h2);
                    }
                }
            }
        }
        a
    }

    /// Discrete energy, with the gradient taken over every edge including the
    /// ghost edges of `exterior`.
    pub fn energy(&self, u: &[f64], exterior: &Exterior) -> EnergyBreakdown {
        let g = &self.grid;
        let nc = self.nc();
        let n = g.points_per_axis;
        let vol = g.cell_volume();
        let inv_h = 1.0 / g.spacing;
        let mut grad = CompensatedSum::new();
        let mut mass = CompensatedSum::new();
        let mut pot = CompensatedSum::new();
        let mut nonlin = CompensatedSum::new();
        for node in 0..g.len() {
            let m = g.multi_index(node);
            let base = node * nc;
            let w = g.quadrature_weight(node);
            for c in 0..nc {
                let idx = base + c;
                let ui = u[idx];
                for axis in 0..g.dim {
                    if m[axis] + 1 < n {
                        let d = (u[idx + g.stride(axis) * nc] - ui) * inv_h;
                        grad.add(vol * d * d);
                    }
                }
                mass.add(w * ui * ui);
                pot.add(w * self.potential[idx] * ui * ui);
            }
            nonlin.add(w * self.model.primitive(&u[base..base + nc]));
        }
        for &(idx, v) in &exterior.entries {
            let d = (v - u[idx]) * inv_h;
            grad.add(vol * d * d);
        }
        EnergyBreakdown::new(grad.value(), mass.value(), self.delta * pot.value(), nonlin.value())
    }

    pub fn sup_norm(v: &[f64]) -> f64 {
        v.iter().fold(0.0_f64, |a, b| a.max(b.abs()))
    }
}

/// Error-free sum: `a + b = s + e` exactly.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{apply_schrodinger_operator, gradient_energy_values};

    fn scalar() -> Arc<dyn LocalModel> {
        Arc::new(ScalarModel {
            nonlinearity: Nonlinearity::cubic(),
        })
    }

    #[test]
    fn residual_matches_grid_operator_with_zero_ghosts() {
        let grid = Grid::new(2, 3.0, 0.25).unwrap();
        let u = grid.sample(|x| (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp() + 0.1 * x[0]);
        let v = grid.sample(|x| 1.0 / (1.0 + x[0] * x[0] + x[1] * x[1]));
        let disc = Discretization::new(grid, scalar(), v.values.clone(), 0.3).unwrap();
        let r = disc.residual(&u.values, &Exterior::zero(&grid, 1));
        let lin = apply_schrodinger_operator(&u, &v, 0.3).unwrap();
        for i in 0..grid.len() {
            let nl = Nonlinearity::cubic().f(u.values[i]);
            assert!((r[i] - lin.values[i] - nl).abs() < 1e-12);
        }
        let e = disc.energy(&u.values, &Exterior::zero(&grid, 1));
        assert!((e.gradient - gradient_energy_values(&grid, &u.values)).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let grid = Grid::new(1, 2.0, 0.25).unwrap();
        let u: Vec<f64> = (0..grid.len()).map(|i| 0.5 + 0.1 * (i as f64).sin()).collect();
        let disc = Discretization::unforced(grid, scalar()).unwrap();
        let ext = Exterior::from_fn(&grid, 1, |_, _| 0.2);
        let j = disc.jacobian(&u);
        let e = 1e-6;
        for k in [0, 5, grid.len() - 1] {
            let mut up = u.clone();
            up[k] += e;
            let mut dn = u.clone();
            dn[k] -= e;
            let rp = disc.residual(&up, &ext);
            let rm = disc.residual(&dn, &ext);
            for i in 0..grid.len() {
                let fd = (rp[i] - rm[i]) / (2.0 * e);
                assert!((fd - j.get(i, k)).abs() < 1e-6, "{i} {k}");
            }
        }
        assert!(j.is_symmetric(1e-14));
    }

    #[test]
    fn energy_gradient_is_minus_residual() {
        let grid = Grid::new(1, 2.0, 0.25).unwrap();
        let u: Vec<f64> = (0..grid.len()).map(|i| 0.7 + 0.2 * (0.3 * i as f64).cos()).collect();
        let disc = Discretization::new(grid, scalar(), vec![0.4; grid.len()], 0.5).unwrap();
        let ext = Exterior::from_fn(&grid, 1, |g, _| 0.1 * g[0] as f64);
        let r = disc.residual(&u, &ext);
        let w = grid.quadrature_weights();
        let e = 1e-6;
        for k in [1, 4, grid.len() - 2] {
            let mut up = u.clone();
            up[k] += e;
            let mut dn = u.clone();
            dn[k] -= e;
            let de = (disc.energy(&up, &ext).total - disc.energy(&dn, &ext).total) / (2.0 * e);
            assert!((de + r[k] * w[k]).abs() < 1e-7);
        }
    }
}
