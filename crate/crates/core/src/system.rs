//! The coupled cubic system
//!
//! ```text
//! Δu - (1 + δa) u + μ₁u³ + βv²u = 0
//! Δv - (1 + δb) v + μ₂v³ + βu²v = 0
//! ```
//!
//! with synchronized spikes `(αw, γw)` built from the scalar cubic profile.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{Discretization, Exterior, LocalModel};
use crate::potential::{check_hypotheses, Combination, Potential};
use crate::problem::Problem;
use crate::profile::{sector_operator, sector_spectra, sectors, GroundState, KERNEL_TOL, SPECTRUM_RADIUS, SPECTRUM_STEP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub mu1: f64,
    pub mu2: f64,
    pub beta: f64,
    /// NaN when the radicand is negative.
    pub alpha: f64,
    pub gamma: f64,
    /// `β` lies in `(-√(μ₁μ₂), 0) ∪ (0, min μ) ∪ (max μ, ∞)`. The sharper
    /// bound `β > -β*` for negative coupling is applied by
    /// [`CouplingParams::admissible_with`].
    pub admissible: bool,
    pub reason: Option<String>,
}

impl CouplingParams {
    /// `α² = (μ₂ - β)/(μ₁μ₂ - β²)`, `γ² = (μ₁ - β)/(μ₁μ₂ - β²)`.
    pub fn synchronized(mu1: f64, mu2: f64, beta: f64) -> Result<Self> {
        if !(mu1 > 0.0 && mu2 > 0.0 && mu1.is_finite() && mu2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "mu1, mu2 must be positive (got {mu1}, {mu2})"
            )));
        }
        if !beta.is_finite() {
            return Err(Error::NonFinite("beta"));
        }
        let den = mu1 * mu2 - beta * beta;
        if den.abs() <= 1e-12 * mu1 * mu2 {
            return Err(Error::SingularCoupling(format!(
                "mu1 mu2 - beta^2 = {den:.3e} vanishes"
            )));
        }
        let a2 = (mu2 - beta) / den;
        let g2 = (mu1 - beta) / den;
        let mut reason = None;
        if !(a2 > 0.0 && g2 > 0.0) {
            reason = Some(format!(
                "negative radicand: alpha^2 = {a2:.4}, gamma^2 = {g2:.4}"
            ));
        } else if beta == 0.0 {
            reason = Some("beta = 0 decouples the system (kernel of dimension 2N)".into());
        }
        Ok(Self {
            mu1,
            mu2,
            beta,
            alpha: if a2 > 0.0 { a2.sqrt() } else { f64::NAN },
            gamma: if g2 > 0.0 { g2.sqrt() } else { f64::NAN },
            admissible: reason.is_none(),
            reason,
        })
    }

    /// Admissibility once the negative-coupling threshold is known.
    pub fn admissible_with(&self, beta_star: f64) -> bool {
        self.admissible && (self.beta > 0.0 || self.beta > -beta_star)
    }

    pub fn amplitudes_defined(&self) -> bool {
        self.alpha.is_finite() && self.gamma.is_finite()
    }

    /// `A = μ₁α⁴ + μ₂γ⁴ + 2βα²γ²`, which equals `α² + γ²`; the energy
    /// and interaction factor of one synchronized spike.
    pub fn energy_factor(&self) -> f64 {
        let (a2, g2) = (self.alpha * self.alpha, self.gamma * self.gamma);
        self.mu1 * a2 * a2 + self.mu2 * g2 * g2 + 2.0 * self.beta * a2 * g2
    }

    /// Reaction Jacobian at `(α, γ)`, so that the linearization about
    /// `(αw, γw)` is `Δ - 1 + w² K`.
    pub fn coupling_matrix(&self) -> [[f64; 2]; 2] {
        let (a, g, b) = (self.alpha, self.gamma, self.beta);
        [
            [3.0 * self.mu1 * a * a + b * g * g, 2.0 * b * a * g],
            [2.0 * b * a * g, 3.0 * self.mu2 * g * g + b * a * a],
        ]
    }

    /// Eigenvalues of [`Self::coupling_matrix`], decreasing, with unit
    /// eigenvectors.
    pub fn coupling_eigen(&self) -> [(f64, [f64; 2]); 2] {
        let [[p, q], [_, r]] = self.coupling_matrix();
        let mean = 0.5 * (p + r);
        let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
        let vector = |k: f64| {
            let v = if q.abs() > 1e-14 * (p.abs() + r.abs()) {
                [q, k - p]
            } else if (k - p).abs() <= (k - r).abs() {
                [1.0, 0.0]
            } else {
                [0.0, 1.0]
            };
            let n = v[0].hypot(v[1]);
            [v[0] / n, v[1] / n]
        };
        [(mean + rad, vector(mean + rad)), (mean - rad, vector(mean - rad))]
    }
}

/// Same as [`CouplingParams::synchronized`].
pub fn synchronized_amplitudes(mu1: f64, mu2: f64, beta: f64) -> Result<CouplingParams> {
    CouplingParams::synchronized(mu1, mu2, beta)
}

#[derive(Debug, Clone)]
pub struct CoupledModel {
    pub params: CouplingParams,
}

impl CoupledModel {
    pub fn new(params: CouplingParams) -> Result<Self> {
        if !params.amplitudes_defined() {
            return Err(Error::InvalidParameter(
                params.reason.clone().unwrap_or_else(|| "undefined amplitudes".into()),
            ));
        }
        Ok(Self { params })
    }
}

impl LocalModel for CoupledModel {
    fn name(&self) -> &'static str {
        "coupled"
    }
    fn components(&self) -> usize {
        2
    }
    fn amplitudes(&self) -> Vec<f64> {
        vec![self.params.alpha, self.params.gamma]
    }
    fn reaction(&self, u: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let (x, y) = (u[0], u[1]);
        out[0] = p.mu1 * x * x * x + p.beta * y * y * x;
        out[1] = p.mu2 * y * y * y + p.beta * x * x * y;
    }
    fn reaction_jacobian(&self, u: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let (x, y) = (u[0], u[1]);
        out[0] = 3.0 * p.mu1 * x * x + p.beta * y * y;
        out[1] = 2.0 * p.beta * x * y;
        out[2] = out[1];
        out[3] = 3.0 * p.mu2 * y * y + p.beta * x * x;
    }
    fn primitive(&self, u: &[f64]) -> f64 {
        let p = &self.params;
        let (x2, y2) = (u[0] * u[0], u[1] * u[1]);
        0.25 * (p.mu1 * x2 * x2 + p.mu2 * y2 * y2) + 0.5 * p.beta * x2 * y2
    }
    fn energy_factor(&self) -> f64 {
        self.params.energy_factor()
    }
}

/// Two fields on a shared grid.
#[derive(Debug, Clone)]
pub struct PairField {
    pub u: Field,
    pub v: Field,
}

impl PairField {
    pub fn new(u: Field, v: Field) -> Result<Self> {
        if u.grid != v.grid {
            return Err(Error::GridMismatch("pair components live on different grids".into()));
        }
        u.check_finite("u")?;
        v.check_finite("v")?;
        Ok(Self { u, v })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            u: grid.zeros(),
            v: grid.zeros(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.u.grid
    }

    pub fn interleaved(&self) -> Vec<f64> {
        self.u
            .values
            .iter()
            .zip(&self.v.values)
            .flat_map(|(a, b)| [*a, *b])
            .collect()
    }

    pub fn from_interleaved(grid: &Grid, values: &[f64]) -> Result<Self> {
        if values.len() != 2 * grid.len() {
            return Err(Error::GridMismatch("interleaved pair length".into()));
        }
        let u = values.iter().step_by(2).copied().collect();
        let v = values.iter().skip(1).step_by(2).copied().collect();
        Self::new(Field::new(*grid, u)?, Field::new(*grid, v)?)
    }

    pub fn sup_norm(&self) -> f64 {
        self.u.sup_norm().max(self.v.sup_norm())
    }

    /// `‖u - v‖_∞`.
    pub fn asymmetry(&self) -> f64 {
        self.u
            .values
            .iter()
            .zip(&self.v.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Component-wise residual of the system, zero outside the box.
pub fn coupled_residual(
    pair: &PairField,
    a: &dyn Potential,
    b: &dyn Potential,
    delta: f64,
    params: &CouplingParams,
) -> Result<PairField> {
    let grid = pair.grid();
    let mut pot = Vec::with_capacity(2 * grid.len());
    for node in 0..grid.len() {
        let x = grid.point(node);
        pot.push(a.value(&x[..grid.dim]));
        pot.push(b.value(&x[..grid.dim]));
    }
    let model = Arc::new(CoupledModel::new(params.clone())?);
    let disc = Discretization::new(*grid, model, pot, delta)?;
    let r = disc.residual(&pair.interleaved(), &Exterior::zero(grid, 2));
    PairField::from_interleaved(grid, &r)
}

fn require_cubic(gs: &GroundState) -> Result<()> {
    let nl = gs.nonlinearity;
    if nl.p != 3.0 || nl.a != 0.0 {
        return Err(Error::InvalidParameter(
            "the coupled system is built on the cubic ground state".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledBranch {
    /// Eigenvalue `κ` of the coupling matrix.
    pub kappa: f64,
    pub direction: [f64; 2],
    /// Eigenvalues of `Δ - 1 + κw²`, decreasing.
    pub eigenvalues: Vec<f64>,
    pub positive_count: usize,
    pub kernel_dim: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledSpectrum {
    pub branches: Vec<CoupledBranch>,
    pub eigenvalues: Vec<f64>,
    pub positive_count: usize,
    pub kernel_dim: usize,
    pub nondegenerate: bool,
}

/// Spectrum of the linearization `Δ - 1 + w²K` about `(αw, γw)`. Since `K`
/// is constant, the operator splits along its eigenvectors into scalar
/// radial problems `Δ - 1 + κw²`.
pub fn coupled_spectrum(params: &CouplingParams, gs: &GroundState, n_modes: usize) -> Result<CoupledSpectrum> {
    require_cubic(gs)?;
    if !params.amplitudes_defined() {
        return Err(Error::InvalidParameter(
            params.reason.clone().unwrap_or_else(|| "undefined amplitudes".into()),
        ));
    }
    let mut branches = Vec::new();
    let mut eigenvalues = Vec::new();
    for (kappa, direction) in params.coupling_eigen() {
        let report = sector_spectra(gs.dim, &|r| kappa * gs.value(r).powi(2), n_modes, KERNEL_TOL)?;
        eigenvalues.extend_from_slice(&report.eigenvalues);
        branches.push(CoupledBranch {
            kappa,
            direction,
            eigenvalues: report.eigenvalues,
            positive_count: report.positive_count,
            kernel_dim: report.kernel_dim,
        });
    }
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    let positive_count = branches.iter().map(|b| b.positive_count).sum();
    let kernel_dim = branches.iter().map(|b| b.kernel_dim).sum();
    Ok(CoupledSpectrum {
        branches,
        eigenvalues,
        positive_count,
        kernel_dim,
        nondegenerate: kernel_dim == gs.dim,
    })
}

/// `(α, γ)` is always a `κ = 3` eigenvector of the coupling matrix and
/// carries the translations; the other eigenvalue `tr K - 3` is the
/// transverse branch.
pub fn transverse_kappa(params: &CouplingParams) -> f64 {
    let [[p, _], [_, r]] = params.coupling_matrix();
    p + r - 3.0
}

/// Nonnegative eigenvalues of `Δ - 1 + κw²` over the standard sectors,
/// with multiplicity.
fn nonnegative_count(kappa: f64, gs: &GroundState) -> Result<usize> {
    let mut count = 0;
    for sector in sectors(gs.dim) {
        let q = |r: f64| kappa * gs.value(r).powi(2);
        let (t, _) = sector_operator(gs.dim, sector, SPECTRUM_STEP, SPECTRUM_RADIUS, &q)?;
        count += (t.len() - t.count_below(0.0)) * sector.multiplicity;
    }
    Ok(count)
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaStar {
    /// `|β|` at which a transverse eigenvalue first crosses zero below zero
    /// coupling, or `√(μ₁μ₂)` when none does.
    pub beta_star: f64,
    /// Nonnegative transverse eigenvalues just below `β = 0`.
    pub count_near_zero: usize,
    /// The same count just beyond the threshold.
    pub count_beyond: Option<usize>,
    /// `(β, count)` samples of the scan.
    pub samples: Vec<(f64, usize)>,
}

/// Scans `β ∈ (-√(μ₁μ₂), 0)` for the first value where the transverse
/// branch gains a nonnegative eigenvalue, then bisects to `tol`.
pub fn beta_star_scan(mu1: f64, mu2: f64, gs: &GroundState, steps: usize, tol: f64) -> Result<BetaStar> {
    require_cubic(gs)?;
    let limit = (mu1 * mu2).sqrt();
    let count_at = |beta: f64| -> Result<Option<usize>> {
        let p = CouplingParams::synchronized(mu1, mu2, beta)?;
        if !p.amplitudes_defined() {
            return Ok(None);
        }
        nonnegative_count(transverse_kappa(&p), gs).map(Some)
    };
    let start = -1e-3 * limit;
    let Some(reference) = count_at(start)? else {
        return Err(Error::InvalidParameter("no synchronized spike near beta = 0".into()));
    };
    let mut samples = vec![(start, reference)];
    let steps = steps.max(2);
    let end = -limit * (1.0 - 1e-6);
    let mut prev = start;
    for i in 1..steps {
        let beta = start + (end - start) * i as f64 / (steps - 1) as f64;
        let Some(count) = count_at(beta)? else {
            break;
        };
        samples.push((beta, count));
        if count != reference {
            let (mut inside, mut outside) = (prev, beta);
            while (inside - outside).abs() > tol {
                let mid = 0.5 * (inside + outside);
                match count_at(mid)? {
                    Some(c) if c == reference => inside = mid,
                    _ => outside = mid,
                }
            }
            return Ok(BetaStar {
                beta_star: -0.5 * (inside + outside),
                count_near_zero: reference,
                count_beyond: Some(count),
                samples,
            });
        }
        prev = beta;
    }
    Ok(BetaStar {
        beta_star: limit,
        count_near_zero: reference,
        count_beyond: None,
        samples,
    })
}

/// Reduction problem for the system with potentials `a` on `u` and `b` on
/// `v`.
pub fn coupled_problem(
    grid: Grid,
    gs: Arc<GroundState>,
    params: &CouplingParams,
    a: Arc<dyn Potential>,
    b: Arc<dyn Potential>,
    delta: f64,
) -> Result<Problem> {
    require_cubic(&gs)?;
    sign_radii(a.as_ref(), b.as_ref(), grid.dim)?;
    let model = Arc::new(CoupledModel::new(params.clone())?);
    Problem::new(grid, gs, model, vec![a, b], delta)
}

/// Both potentials must be nonnegative outside this radius.
pub const NONNEGATIVE_RADIUS: f64 = 10.0;

/// Radii beyond which `a` and `b` are nonnegative on every sampled ray.
pub fn sign_radii(a: &dyn Potential, b: &dyn Potential, dim: usize) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for (slot, (name, v)) in out.iter_mut().zip([("a", a), ("b", b)]) {
        match check_hypotheses(v, dim, 0.0).nonnegative_from {
            Some(r) if r <= NONNEGATIVE_RADIUS => *slot = r,
            found => {
                let seen = found.map_or("everywhere sampled".to_string(), |r| format!("up to r = {r:.2}"));
                return Err(Error::InvalidConfiguration(format!(
                    "potential {name} takes negative values {seen}, beyond r = {NONNEGATIVE_RADIUS}"
                )));
            }
        }
    }
    Ok(out)
}

/// `α²a + γ²b`, the potential seen by a synchronized spike.
pub fn weighted_potential(params: &CouplingParams, a: Arc<dyn Potential>, b: Arc<dyn Potential>) -> Combination {
    Combination {
        terms: vec![
            (params.alpha * params.alpha, a),
            (params.gamma * params.gamma, b),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::Nonlinearity;
    use crate::potential::Zero;
    use crate::profile::{compute_ground_state, DEFAULT_ODE_TOL};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn cubic() -> &'static GroundState {
        static GS: OnceLock<GroundState> = OnceLock::new();
        GS.get_or_init(|| compute_ground_state(Nonlinearity::cubic(), 1, DEFAULT_ODE_TOL).unwrap())
    }

    #[test]
    fn synchronized_amplitude_examples() {
        let p = synchronized_amplitudes(1.0, 1.0, 0.0).unwrap();
        assert_eq!((p.alpha, p.gamma), (1.0, 1.0));
        assert!(!p.admissible);
        let p = synchronized_amplitudes(1.0, 1.0, 3.0).unwrap();
        assert_eq!((p.alpha, p.gamma), (0.5, 0.5));
        assert!(p.admissible);
        assert_eq!(p.energy_factor(), 0.5);
        assert!(matches!(
            synchronized_amplitudes(1.0, 1.0, 1.0),
            Err(Error::SingularCoupling(_))
        ));
    }

    #[test]
    fn intermediate_coupling_has_no_synchronized_spike() {
        let p = synchronized_amplitudes(1.0, 2.0, 1.5).unwrap();
        assert!(!p.admissible);
        assert!(p.reason.unwrap().contains("radicand"));
        assert!(CoupledModel::new(synchronized_amplitudes(1.0, 2.0, 1.5).unwrap()).is_err());
        assert!(synchronized_amplitudes(0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn amplitudes_solve_the_algebraic_system() {
        for (m1, m2, b) in [(1.0, 2.0, 0.3), (2.0, 1.0, -0.5), (1.0, 1.5, 4.0)] {
            let p = synchronized_amplitudes(m1, m2, b).unwrap();
            let (a2, g2) = (p.alpha * p.alpha, p.gamma * p.gamma);
            assert!((m1 * a2 + b * g2 - 1.0).abs() < 1e-13);
            assert!((m2 * g2 + b * a2 - 1.0).abs() < 1e-13);
            assert!((p.energy_factor() - (a2 + g2)).abs() < 1e-13);
        }
    }

    #[test]
    fn translation_direction_is_a_kappa_three_eigenvector() {
        let p = synchronized_amplitudes(1.0, 2.0, 0.3).unwrap();
        let eig = p.coupling_eigen();
        let (k, v) = eig.iter().find(|(k, _)| (k - 3.0).abs() < 1e-12).unwrap();
        assert!((k - 3.0).abs() < 1e-12);
        let n = p.alpha.hypot(p.gamma);
        assert!((v[0] * p.gamma - v[1] * p.alpha).abs() / n < 1e-12);
    }

    #[test]
    fn residual_of_synchronized_spike_is_small() {
        let gs = cubic();
        let grid = Grid::new(1, 20.0, 0.05).unwrap();
        let p = synchronized_amplitudes(1.0, 1.0, 3.0).unwrap();
        let w = grid.sample(|x| gs.value(x[0].abs()));
        let pair = PairField::new(w.scale(p.alpha), w.scale(p.gamma)).unwrap();
        let r = coupled_residual(&pair, &Zero, &Zero, 0.0, &p).unwrap();
        assert!(r.sup_norm() < 2e-3, "{}", r.sup_norm());
        let zero = coupled_residual(&PairField::zeros(&grid), &Zero, &Zero, 0.3, &p).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
    }

    #[test]
    fn decoupled_residual_has_zero_second_component() {
        let gs = cubic();
        let grid = Grid::new(1, 20.0, 0.05).unwrap();
        let p = synchronized_amplitudes(1.0, 1.0, 0.0).unwrap();
        let pair = PairField::new(grid.sample(|x| gs.value(x[0].abs())), grid.zeros()).unwrap();
        let r = coupled_residual(&pair, &Zero, &Zero, 0.0, &p).unwrap();
        assert!(r.u.sup_norm() < 2e-3);
        assert_eq!(r.v.sup_norm(), 0.0);
    }

    #[test]
    fn decoupled_spectrum_doubles_the_scalar_one() {
        let s = coupled_spectrum(&synchronized_amplitudes(1.0, 1.0, 0.0).unwrap(), cubic(), 3).unwrap();
        assert_eq!(s.positive_count, 2);
        assert_eq!(s.kernel_dim, 2);
        assert!(!s.nondegenerate);
        assert!((s.eigenvalues[0] - 3.0).abs() < 1e-3 && (s.eigenvalues[1] - 3.0).abs() < 1e-3);
        assert!(s.eigenvalues[2].abs() < 1e-4 && s.eigenvalues[3].abs() < 1e-4);
    }

    #[test]
    fn strong_coupling_is_nondegenerate() {
        let s = coupled_spectrum(&synchronized_amplitudes(1.0, 1.0, 3.0).unwrap(), cubic(), 3).unwrap();
        assert_eq!(s.kernel_dim, 1);
        assert!(s.positive_count >= 1);
        assert!(s.nondegenerate);
    }

    #[test]
    fn beta_star_matches_the_poschl_teller_threshold() {
        // κ = (3 - β)/(1 + β) reaches 6 at β = -3/7
        let b = beta_star_scan(1.0, 1.0, cubic(), 40, 1e-6).unwrap();
        assert!((b.beta_star - 3.0 / 7.0).abs() < 2e-3, "{}", b.beta_star);
        assert_eq!(b.count_near_zero, 2);
        assert_eq!(b.count_beyond, Some(3));
    }

    proptest! {
        #[test]
        fn amplitudes_are_continuous_through_zero(b in -0.5f64..0.5) {
            let p = synchronized_amplitudes(1.0, 2.0, b).unwrap();
            let q = synchronized_amplitudes(1.0, 2.0, b + 1e-7).unwrap();
            prop_assert!((p.alpha - q.alpha).abs() < 1e-5);
            prop_assert!((p.gamma - q.gamma).abs() < 1e-5);
        }

        #[test]
        fn symmetric_parameters_give_equal_amplitudes(mu in 0.2f64..3.0, b in -0.9f64..0.9) {
            let p = synchronized_amplitudes(mu, mu, b * mu).unwrap();
            prop_assert!((p.alpha - p.gamma).abs() < 1e-14);
        }
    }

    #[test]
    fn sign_check_locates_the_last_negative_radius() {
        let deep = crate::potential::parse_potential("signed:1,2,1,3").unwrap();
        let far = crate::potential::parse_potential("signed:1,2,1,30").unwrap();
        let [ra, rb] = sign_radii(deep.as_ref(), &Zero, 1).unwrap();
        assert!(ra > 3.0 && ra <= 4.5, "{ra}");
        assert_eq!(rb, 0.0);
        assert!(sign_radii(far.as_ref(), &Zero, 1).is_err());
    }
}
