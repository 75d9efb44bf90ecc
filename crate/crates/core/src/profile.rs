//! The radial ground state `w` of `Δw - w + f(w) = 0`, its energy, the
//! spectrum of the linearization `Δ - 1 + f'(w)` split into angular
//! sectors, the interaction constant `γ₁ = ∫ f(w) e^{-y₁} dy` and the
//! far-field decay law `w(r) ≈ A r^{-(N-1)/2} e^{-r}`.
//!
//! The profile is found by shooting from the origin with bisection on
//! `w(0)`. Because the decaying solution is unstable under forward
//! integration, the shot is trusted only while the two bracketing
//! trajectories agree; from there it is restarted with bisection on the
//! slope, segment by segment, out to [`R_MAX`]. Beyond `R_MAX` the linear
//! decaying solution `r^{-ν} K_ν(r)`, `ν = (N-2)/2`, continues the table.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate, CompensatedSum, Grid};
use crate::linalg::SymTridiagonal;
use crate::nonlinearity::Nonlinearity;

pub const DEFAULT_ODE_TOL: f64 = 1e-8;
pub const KERNEL_TOL: f64 = 1e-4;
/// Outer radius of the tabulated profile.
pub const R_MAX: f64 = 40.0;
pub const TABLE_STEP: f64 = 5e-3;
/// Finer table for the sharply peaked three-dimensional profiles.
pub const TABLE_STEP_3D: f64 = 2.5e-3;
pub const SHOOTING_BRACKET: (f64, f64) = (0.1, 10.0);
pub const BISECTION_STEPS: usize = 60;

const SUBSTEPS: usize = 5;
const AGREEMENT: f64 = 1e-11;
const BACKOFF: usize = 100;
const SHOT_LIMIT: f64 = R_MAX + 40.0;

/// Radial step and outer radius of the sector eigenproblems.
pub const SPECTRUM_STEP: f64 = 5e-3;
pub const SPECTRUM_RADIUS: f64 = 30.0;
/// Eigenvalues within this distance of the essential edge `-1` are not
/// reported as discrete.
pub const ESSENTIAL_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundState {
    pub nonlinearity: Nonlinearity,
    pub dim: usize,
    pub table_step: f64,
    pub radial_w: Vec<f64>,
    pub radial_dw: Vec<f64>,
    pub center_value: f64,
    pub energy: f64,
    pub lambda1: f64,
    pub phi0_step: f64,
    pub phi0_profile: Vec<f64>,
    pub decay_amplitude: f64,
    pub decay_rate: f64,
    pub kernel_dim: usize,
    pub ode_residual: f64,
    tail_amplitude: f64,
}

impl GroundState {
    pub fn r_max(&self) -> f64 {
        (self.radial_w.len() - 1) as f64 * self.table_step
    }

    /// `w(r)` by cubic Hermite interpolation, continued by the decay law.
    pub fn value(&self, r: f64) -> f64 {
        self.value_and_derivative(r).0
    }

    pub fn derivative(&self, r: f64) -> f64 {
        self.value_and_derivative(r).1
    }

    pub fn value_and_derivative(&self, r: f64) -> (f64, f64) {
        let r = r.abs();
        let h = self.table_step;
        let last = self.radial_w.len() - 1;
        let pos = r / h;
        if pos >= last as f64 {
            let (g, dg) = tail_shape(self.dim, r);
            return (self.tail_amplitude * g, self.tail_amplitude * dg);
        }
        let i = pos.floor() as usize;
        let t = pos - i as f64;
        let (y0, y1) = (self.radial_w[i], self.radial_w[i + 1]);
        let (m0, m1) = (self.radial_dw[i] * h, self.radial_dw[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let d = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        (v, d)
    }

    /// Rows `(r, w, w')` of the radial table.
    pub fn table(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.radial_w
            .iter()
            .zip(&self.radial_dw)
            .enumerate()
            .map(|(i, (&w, &dw))| (i as f64 * self.table_step, w, dw))
    }

    pub fn f(&self, t: f64) -> f64 {
        self.nonlinearity.f(t)
    }
}

/// `r^{-(N-1)/2} e^{-r} (1 + Σ a_k r^{-k})` and its derivative: the large-`r`
/// expansion of `r^{-ν} K_ν(r)` up to a constant factor.
fn tail_shape(dim: usize, r: f64) -> (f64, f64) {
    let nu = (dim as f64 - 2.0) / 2.0;
    let mu = 4.0 * nu * nu;
    let mut a = 1.0;
    let mut series = 1.0;
    let mut dseries = 0.0;
    for k in 1..=8 {
        let kf = k as f64;
        a *= (mu - (2.0 * kf - 1.0).powi(2)) / (kf * 8.0);
        if a == 0.0 {
            break;
        }
        series += a / r.powi(k);
        dseries -= kf * a / r.powi(k + 1);
    }
    let s = (dim as f64 - 1.0) / 2.0;
    let base = r.powf(-s) * (-r).exp();
    let g = base * series;
    let dg = base * (dseries - series * (1.0 + s / r));
    (g, dg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Fate {
    Crossed,
    Turned,
    Survived,
}

struct Shooter {
    nl: Nonlinearity,
    dim: usize,
    step: f64,
}

impl Shooter {
    #[inline]
    fn accel(&self, r: f64, w: f64, dw: f64) -> f64 {
        -(self.dim as f64 - 1.0) / r * dw + w - self.nl.f(w)
    }

    /// Integrates from table node `start` with state `(w, dw)` until the
    /// trajectory crosses zero, turns upward, or reaches `SHOT_LIMIT`.
    fn run(
        &self,
        start: usize,
        w: f64,
        dw: f64,
        mut record: Option<&mut Vec<(f64, f64)>>,
    ) -> Fate {
        let (mut y, mut v) = (w, dw);
        if let Some(rec) = record.as_deref_mut() {
            rec.push((y, v));
        }
        let mut start = start;
        if start == 0 {
            // series w0 + c2 r² + c4 r⁴ + c6 r⁶ steps over the 1/r singularity
            let n = self.dim as f64;
            let f1 = self.nl.df(w);
            let e = 1e-5 * w;
            let f2 = (self.nl.df(w + e) - self.nl.df(w - e)) / (2.0 * e);
            let c2 = (w - self.nl.f(w)) / (2.0 * n);
            let c4 = (1.0 - f1) * c2 / (4.0 * (n + 2.0));
            let c6 = ((1.0 - f1) * c4 - 0.5 * f2 * c2 * c2) / (6.0 * (n + 4.0));
            let r = self.step;
            let r2 = r * r;
            y = w + r2 * (c2 + r2 * (c4 + r2 * c6));
            v = r * (2.0 * c2 + r2 * (4.0 * c4 + r2 * 6.0 * c6));
            if let Some(rec) = record.as_deref_mut() {
                rec.push((y, v));
            }
            start = 1;
        }
        let steps = ((SHOT_LIMIT / self.step) as usize).saturating_sub(start);
        for node in start..start + steps {
            // the 1/r coefficient needs finer steps near the origin
            let sub = if node < 40 { 10 * SUBSTEPS } else { SUBSTEPS };
            let dt = self.step / sub as f64;
            for s in 0..sub {
                let r = node as f64 * self.step + s as f64 * dt;
                let k1y = v;
                let k1v = self.accel(r, y, v);
                let k2y = v + 0.5 * dt * k1v;
                let k2v = self.accel(r + 0.5 * dt, y + 0.5 * dt * k1y, k2y);
                let k3y = v + 0.5 * dt * k2v;
                let k3v = self.accel(r + 0.5 * dt, y + 0.5 * dt * k2y, k3y);
                let k4y = v + dt * k3v;
                let k4v = self.accel(r + dt, y + dt * k3y, k4y);
                y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
                v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                if y < 0.0 {
                    return Fate::Crossed;
                }
                if v > 0.0 {
                    return Fate::Turned;
                }
            }
            if let Some(rec) = record.as_deref_mut() {
                rec.push((y, v));
            }
        }
        Fate::Survived
    }

    /// Bisection on a scalar shooting parameter between a value whose
    /// trajectory turns and one whose trajectory crosses.
    fn bisect(
        &self,
        start: usize,
        state: &dyn Fn(f64) -> (f64, f64),
        turn: f64,
        cross: f64,
    ) -> Result<(f64, f64)> {
        let fate = |p: f64| {
            let (w, dw) = state(p);
            self.run(start, w, dw, None)
        };
        if fate(turn) != Fate::Turned || fate(cross) != Fate::Crossed {
            return Err(Error::BracketNotFound {
                lo: turn.min(cross),
                hi: turn.max(cross),
            });
        }
        let (mut t, mut c) = (turn, cross);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (t + c);
            if mid == t || mid == c {
                break;
            }
            match fate(mid) {
                Fate::Turned => t = mid,
                Fate::Crossed => c = mid,
                Fate::Survived => {
                    t = mid;
                    c = mid;
                    break;
                }
            }
        }
        Ok((t, c))
    }
}

/// Computes the ground state, its energy, spectrum and decay data.
pub fn compute_ground_state(nl: Nonlinearity, dim: usize, tol: f64) -> Result<GroundState> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidParameter(format!("dim must be 1, 2 or 3 (got {dim})")));
    }
    nl.validate(dim)?;
    if !(tol >= 1e-12) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} below 1e-12")));
    }
    let step = if dim == 3 { TABLE_STEP_3D } else { TABLE_STEP };
    let shooter = Shooter { nl, dim, step };
    let n_table = (R_MAX / step).round() as usize + 1;
    let mut w_tab: Vec<f64> = Vec::with_capacity(n_table);
    let mut dw_tab: Vec<f64> = Vec::with_capacity(n_table);

    let (turn, cross) = shooter.bisect(
        0,
        &|p| (p, 0.0),
        SHOOTING_BRACKET.0,
        SHOOTING_BRACKET.1,
    )?;
    let mut pair = ((turn, 0.0), (cross, 0.0));
    let mut start = 0usize;
    loop {
        let mut a = Vec::new();
        let mut b = Vec::new();
        shooter.run(start, pair.0 .0, pair.0 .1, Some(&mut a));
        shooter.run(start, pair.1 .0, pair.1 .1, Some(&mut b));
        let mut agreed = 0usize;
        for (j, (x, y)) in a.iter().zip(&b).enumerate() {
            let w = 0.5 * (x.0 + y.0);
            let ok = (x.0 - y.0).abs() <= AGREEMENT * w
                && (x.1 - y.1).abs() <= AGREEMENT * x.1.abs().max(w)
                && w > 0.0;
            if !ok {
                break;
            }
            agreed = j;
            if start + j + 1 >= n_table {
                break;
            }
        }
        w_tab.truncate(start);
        dw_tab.truncate(start);
        for (x, y) in a.iter().zip(&b).take(agreed + 1) {
            w_tab.push(0.5 * (x.0 + y.0));
            dw_tab.push(0.5 * (x.1 + y.1));
        }
        if w_tab.len() >= n_table {
            w_tab.truncate(n_table);
            dw_tab.truncate(n_table);
            break;
        }
        let restart = start + agreed.saturating_sub(BACKOFF);
        if restart <= start {
            return Err(Error::InvalidProfile(format!(
                "shooting stalled at r = {:.3}",
                start as f64 * step
            )));
        }
        let (w0, s0) = (w_tab[restart], dw_tab[restart]);
        let (t, c) = shooter.bisect(restart, &|p| (w0, p), 0.99 * s0, 1.01 * s0)?;
        pair = ((w0, t), (w0, c));
        start = restart;
    }
    dw_tab[0] = 0.0;

    for (i, (&w, &dw)) in w_tab.iter().zip(&dw_tab).enumerate() {
        if !(w > 0.0) || (i > 0 && !(dw < 0.0)) {
            return Err(Error::InvalidProfile(format!(
                "profile not positive and decreasing at r = {:.3}",
                i as f64 * step
            )));
        }
    }
    let (g, _) = tail_shape(dim, R_MAX);
    let tail_amplitude = w_tab[n_table - 1] / g;

    let mut gs = GroundState {
        nonlinearity: nl,
        dim,
        table_step: step,
        center_value: w_tab[0],
        radial_w: w_tab,
        radial_dw: dw_tab,
        energy: 0.0,
        lambda1: 0.0,
        phi0_step: SPECTRUM_STEP,
        phi0_profile: Vec::new(),
        decay_amplitude: 0.0,
        decay_rate: 0.0,
        kernel_dim: 0,
        ode_residual: 0.0,
        tail_amplitude,
    };
    gs.ode_residual = ode_residual(&gs);
    if gs.ode_residual > tol * gs.center_value {
        return Err(Error::InvalidProfile(format!(
            "ODE residual {:.3e} exceeds {:.3e}",
            gs.ode_residual,
            tol * gs.center_value
        )));
    }
    gs.energy = radial_energy(&gs);
    let (amp, rate) = decay_fit(&gs)?;
    gs.decay_amplitude = amp;
    gs.decay_rate = rate;
    let report = linearized_spectrum(&gs, 4)?;
    gs.lambda1 = report.lambda1;
    gs.phi0_profile = report.phi0;
    gs.kernel_dim = report.kernel_dim;
    Ok(gs)
}

/// Largest pointwise ODE residual on `(0, R_MAX - 1]`, with `w''` taken
/// from sixth-order differences of the tabulated `w'` (extended oddly
/// through the origin).
pub fn ode_residual(gs: &GroundState) -> f64 {
    let h = gs.table_step;
    let n = gs.dim as f64;
    let last = ((gs.r_max() - 1.0) / h) as usize;
    let dw = |j: isize| {
        let v = gs.radial_dw[j.unsigned_abs()];
        if j < 0 {
            -v
        } else {
            v
        }
    };
    (1..last)
        .map(|i| {
            let r = i as f64 * h;
            let j = i as isize;
            let ddw = (45.0 * (dw(j + 1) - dw(j - 1)) - 9.0 * (dw(j + 2) - dw(j - 2))
                + (dw(j + 3) - dw(j - 3)))
                / (60.0 * h);
            let dw = gs.radial_dw[i];
            let w = gs.radial_w[i];
            (ddw + (n - 1.0) / r * dw - w + gs.f(w)).abs()
        })
        .fold(0.0, f64::max)
}

/// Area of the unit sphere in `ℝ^N` (two points for `N = 1`).
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    }
}

/// Simpson rule over the radial table with the surface measure.
fn radial_integral(gs: &GroundState, g: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let h = gs.table_step;
    let mut n = gs.radial_w.len() - 1;
    if n % 2 == 1 {
        n -= 1;
    }
    let mut acc = CompensatedSum::new();
    for i in 0..=n {
        let r = i as f64 * h;
        let c = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let measure = r.powi(gs.dim as i32 - 1);
        acc.add(c * measure * g(r, gs.radial_w[i], gs.radial_dw[i]));
    }
    sphere_area(gs.dim) * h / 3.0 * acc.value()
}

fn radial_energy(gs: &GroundState) -> f64 {
    let nl = gs.nonlinearity;
    radial_integral(gs, |_, w, dw| 0.5 * (dw * dw + w * w) - nl.primitive(w))
}

/// `I(w) = ½∫(|∇w|² + w²) - ∫F(w)`.
pub fn bump_energy(gs: &GroundState) -> f64 {
    gs.energy
}

/// `∫ |∇w|²`, the diagonal of the translation Gram matrix times `N`.
pub fn gradient_norm_squared(gs: &GroundState) -> f64 {
    radial_integral(gs, |_, _, dw| dw * dw)
}

/// Default quadrature box `(L, h)` for `interaction_constant`.
pub fn interaction_grid(dim: usize) -> (f64, f64) {
    match dim {
        1 => (40.0, 0.005),
        2 => (25.0, 0.05),
        _ => (16.0, 0.2),
    }
}

/// `γ₁ = ∫ f(w(|y|)) e^{-y₁} dy` by trapezoidal quadrature on a grid.
pub fn interaction_constant(gs: &GroundState) -> Result<f64> {
    let (l, h) = interaction_grid(gs.dim);
    let grid = Grid::new(gs.dim, l, h)?;
    let field = grid.sample(|y| {
        let r = y.iter().map(|c| c * c).sum::<f64>().sqrt();
        gs.f(gs.value(r)) * (-y[0]).exp()
    });
    let g = integrate(&field);
    if !(g > 0.0) {
        return Err(Error::InvalidProfile(format!("interaction constant {g} not positive")));
    }
    Ok(g)
}

/// Least-squares fit of `log w + (N-1)/2 log r = log A - rate·r` on `[8, 12]`.
pub fn decay_fit(gs: &GroundState) -> Result<(f64, f64)> {
    if gs.r_max() < 15.0 {
        return Err(Error::DecayFit("profile resolved below r = 15".into()));
    }
    let s = (gs.dim as f64 - 1.0) / 2.0;
    let pts: Vec<(f64, f64)> = gs
        .table()
        .filter(|(r, _, _)| (8.0..=12.0).contains(r))
        .map(|(r, w, _)| (r, w.ln() + s * r.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let rate = -slope;
    if rms > 1e-3 || (rate - 1.0).abs() > 0.02 {
        return Err(Error::DecayFit(format!("rate {rate:.4}, rms residual {rms:.2e}")));
    }
    Ok((intercept.exp(), rate))
}

/// One angular sector of a radial operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sector {
    /// Parity in 1D (0 even, 1 odd); angular momentum otherwise.
    pub index: usize,
    pub multiplicity: usize,
}

/// Sectors examined: even/odd in 1D, angular momenta 0..=3 otherwise.
pub fn sectors(dim: usize) -> Vec<Sector> {
    if dim == 1 {
        return vec![
            Sector { index: 0, multiplicity: 1 },
            Sector { index: 1, multiplicity: 1 },
        ];
    }
    (0..=3)
        .map(|m| Sector {
            index: m,
            multiplicity: match (dim, m) {
                (_, 0) => 1,
                (2, _) => 2,
                _ => 2 * m + 1,
            },
        })
        .collect()
}

/// Cell-centred finite-volume discretization of
/// `r^{1-N}(r^{N-1}u')' - ℓ(ℓ+N-2)/r² u - u + q(r) u` on `(0, R)` with
/// `u(R) = 0`, symmetrized by the mass `r^{N-1}`. Returns the matrix and
/// the square roots of the mass for mapping eigenvectors back.
pub fn sector_operator(
    dim: usize,
    sector: Sector,
    step: f64,
    radius: f64,
    q: &dyn Fn(f64) -> f64,
) -> Result<(SymTridiagonal, Vec<f64>)> {
    let n = (radius / step).round() as usize;
    let e = dim as i32 - 1;
    let r = |i: usize| (i as f64 + 0.5) * step;
    let face = |i: usize| ((i + 1) as f64 * step).powi(e); // between i and i+1
    let mass: Vec<f64> = (0..n).map(|i| r(i).powi(e)).collect();
    let ell = sector.index as f64;
    let centrifugal = if dim == 1 { 0.0 } else { ell * (ell + dim as f64 - 2.0) };
    let inv_h2 = 1.0 / (step * step);
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n {
        let inner = if i == 0 {
            if dim == 1 && sector.index == 1 {
                2.0
            } else {
                0.0
            }
        } else {
            face(i - 1)
        };
        let outer = face(i);
        let ri = r(i);
        diag.push(-(inner + outer) * inv_h2 / mass[i] - centrifugal / (ri * ri) - 1.0 + q(ri));
        if i + 1 < n {
            off.push(outer * inv_h2 / (mass[i] * mass[i + 1]).sqrt());
        }
    }
    let sqrt_mass = mass.iter().map(|m| m.sqrt()).collect();
    Ok((SymTridiagonal::new(diag, off)?, sqrt_mass))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorSpectrum {
    pub sector: Sector,
    /// Discrete eigenvalues above the essential edge, decreasing.
    pub eigenvalues: Vec<f64>,
    pub kernel_count: usize,
    pub positive_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub sectors: Vec<SectorSpectrum>,
    /// All reported eigenvalues with multiplicity, decreasing.
    pub eigenvalues: Vec<f64>,
    pub kernel_dim: usize,
    pub positive_count: usize,
    pub lambda1: f64,
    pub phi0_step: f64,
    pub phi0: Vec<f64>,
}

/// Spectrum of `Δ - 1 + q(|x|)` over the standard sectors.
pub fn radial_spectrum(
    dim: usize,
    q: &dyn Fn(f64) -> f64,
    n_modes: usize,
    kernel_tol: f64,
) -> Result<SpectrumReport> {
    let report = sector_spectra(dim, q, n_modes, kernel_tol)?;
    if !report.lambda1.is_finite() {
        return Err(Error::Eigen("no discrete eigenvalue in the radial sector".into()));
    }
    Ok(report)
}

/// As [`radial_spectrum`], allowing an empty discrete spectrum (then
/// `lambda1` is `-∞` and `phi0` empty).
pub fn sector_spectra(
    dim: usize,
    q: &dyn Fn(f64) -> f64,
    n_modes: usize,
    kernel_tol: f64,
) -> Result<SpectrumReport> {
    let mut out = Vec::new();
    let mut all = Vec::new();
    let mut kernel_dim = 0;
    let mut positive = 0;
    let mut lambda1 = f64::NEG_INFINITY;
    let mut phi0 = Vec::new();
    for sector in sectors(dim) {
        let (t, sqrt_mass) = sector_operator(dim, sector, SPECTRUM_STEP, SPECTRUM_RADIUS, q)?;
        let n = t.len();
        let kernel_count = t.count_below(kernel_tol) - t.count_below(-kernel_tol);
        let positive_count = n - t.count_below(kernel_tol);
        let mut ev = t.eigenvalues_above(-1.0 + ESSENTIAL_MARGIN);
        ev.truncate(n_modes.max(1));
        if sector.index == 0 {
            if let Some(&top) = ev.first() {
                lambda1 = top;
                let y = t.eigenvector(top)?;
                let mut u: Vec<f64> = y.iter().zip(&sqrt_mass).map(|(a, m)| a / m).collect();
                let peak = u.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
                u.iter_mut().for_each(|v| *v /= peak);
                phi0 = u;
            }
        }
        for &e in &ev {
            for _ in 0..sector.multiplicity {
                all.push(e);
            }
        }
        kernel_dim += kernel_count * sector.multiplicity;
        positive += positive_count * sector.multiplicity;
        out.push(SectorSpectrum {
            sector,
            eigenvalues: ev,
            kernel_count,
            positive_count,
        });
    }
    all.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    Ok(SpectrumReport {
        sectors: out,
        eigenvalues: all,
        kernel_dim,
        positive_count: positive,
        lambda1,
        phi0_step: SPECTRUM_STEP,
        phi0,
    })
}

/// Spectrum of `Δ - 1 + f'(w)`; more than one positive eigenvalue is an error.
pub fn linearized_spectrum(gs: &GroundState, n_modes: usize) -> Result<SpectrumReport> {
    let nl = gs.nonlinearity;
    let report = radial_spectrum(gs.dim, &|r| nl.df(gs.value(r)), n_modes, KERNEL_TOL)?;
    if report.positive_count > 1 {
        return Err(Error::TooManyPositiveEigenvalues {
            count: report.positive_count,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn cubic_1d() -> &'static GroundState {
        static GS: OnceLock<GroundState> = OnceLock::new();
        GS.get_or_init(|| compute_ground_state(Nonlinearity::cubic(), 1, DEFAULT_ODE_TOL).unwrap())
    }

    fn quadratic_1d() -> &'static GroundState {
        static GS: OnceLock<GroundState> = OnceLock::new();
        GS.get_or_init(|| {
            compute_ground_state(Nonlinearity::power(2.0), 1, DEFAULT_ODE_TOL).unwrap()
        })
    }

    #[test]
    fn cubic_soliton_matches_sech() {
        let gs = cubic_1d();
        assert!((gs.center_value - 2f64.sqrt()).abs() < 1e-6);
        let mut err = 0.0_f64;
        for i in 0..=2000 {
            let x = -10.0 + i as f64 * 0.01;
            err = err.max((gs.value(x) - 2f64.sqrt() / x.cosh()).abs());
        }
        assert!(err < 1e-5, "{err}");
        // also deep in the tail, relative
        for r in [15.0, 25.0, 35.0, 45.0] {
            let exact = 2f64.sqrt() / f64::cosh(r);
            assert!((gs.value(r) / exact - 1.0).abs() < 1e-6, "r = {r}");
        }
    }

    #[test]
    fn quadratic_soliton_matches_sech_squared() {
        let gs = quadratic_1d();
        assert!((gs.center_value - 1.5).abs() < 1e-6);
        for i in 0..=200 {
            let x = -10.0 + i as f64 * 0.1;
            let exact = 1.5 / (x / 2.0).cosh().powi(2);
            assert!((gs.value(x) - exact).abs() < 1e-5);
        }
    }

    #[test]
    fn boundary_conditions_hold_in_two_dimensions() {
        let gs = compute_ground_state(Nonlinearity::cubic(), 2, DEFAULT_ODE_TOL).unwrap();
        assert_eq!(gs.radial_dw[0], 0.0);
        assert!(gs.value(60.0) < 1e-20);
        assert!((gs.decay_rate - 1.0).abs() <= 0.02);
        assert_eq!(gs.kernel_dim, 2);
        assert!(gs.ode_residual <= DEFAULT_ODE_TOL * gs.center_value);
    }

    #[test]
    fn cubic_energy_and_constants() {
        let gs = cubic_1d();
        assert!((bump_energy(gs) - 4.0 / 3.0).abs() < 1e-5);
        assert!((gradient_norm_squared(gs) - 4.0 / 3.0).abs() < 1e-5);
        let g1 = interaction_constant(gs).unwrap();
        assert!((g1 - 4.0 * 2f64.sqrt()).abs() < 1e-4, "{g1}");
        let (a, rate) = decay_fit(gs).unwrap();
        assert!((a / (2.0 * 2f64.sqrt()) - 1.0).abs() < 0.02);
        assert!((rate - 1.0).abs() < 0.02);
    }

    #[test]
    fn quadratic_energy_and_constants() {
        let gs = quadratic_1d();
        assert!((bump_energy(gs) - 1.2).abs() < 1e-5);
        let g1 = interaction_constant(gs).unwrap();
        assert!((g1 - 12.0).abs() < 1e-3, "{g1}");
        assert!((gs.decay_amplitude / 6.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn cubic_spectrum_is_poschl_teller() {
        let gs = cubic_1d();
        let s = linearized_spectrum(gs, 3).unwrap();
        assert!((s.lambda1 - 3.0).abs() < 1e-3);
        assert_eq!(s.kernel_dim, 1);
        assert_eq!(s.positive_count, 1);
        assert_eq!(s.eigenvalues.len(), 2, "{:?}", s.eigenvalues);
        assert!(s.eigenvalues[1].abs() < KERNEL_TOL);
        // the kernel lives in the odd sector and is proportional to w'
        let odd = &s.sectors[1];
        assert_eq!(odd.kernel_count, 1);
        let peak = s.phi0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((peak - 1.0).abs() < 1e-12);
        assert!(s.phi0.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn quadratic_spectrum() {
        let s = linearized_spectrum(quadratic_1d(), 4).unwrap();
        assert!((s.lambda1 - 1.25).abs() < 1e-3);
        assert_eq!(s.kernel_dim, 1);
        assert!(s.eigenvalues.iter().any(|e| (e + 0.75).abs() < 1e-3));
    }

    #[test]
    fn hermite_interpolation_is_consistent_with_table() {
        let gs = cubic_1d();
        for (r, w, dw) in gs.table().step_by(997) {
            let (v, d) = gs.value_and_derivative(r);
            assert!((v - w).abs() < 1e-15 && (d - dw).abs() < 1e-14);
        }
        // continuity into the decay law at R_MAX
        let (a, b) = (gs.value(R_MAX - 1e-9), gs.value(R_MAX + 1e-9));
        assert!((a / b - 1.0).abs() < 1e-6);
    }
}
