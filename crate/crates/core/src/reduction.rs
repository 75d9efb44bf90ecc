//! The projected nonlinear problem
//!
//! ```text
//! S(U + φ) = Σ_ij c_ij Z_ij,    ⟨φ, Z_ij⟩ = 0,
//! ```
//!
//! solved by Newton's method on `(φ, c)` with bordered linear solves.

use serde::{Deserialize, Serialize};

use crate::ansatz::{neighbour_sum, weighted_norm_values, Configuration};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::linalg::{weighted_dot, BorderedProblem, BorderedSolver};
use crate::model::{two_sum, Discretization, Exterior};
use crate::problem::{AnsatzState, Problem};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Sup-norm target for `S(U + φ) - Σ c Z`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 30,
            max_halvings: 5,
        }
    }
}

/// Raw output of the projected Newton iteration.
#[derive(Debug, Clone)]
pub struct ProjectedSolution {
    pub phi: Vec<f64>,
    /// Low-order part of the correction, `φ = phi + phi_lo`.
    pub phi_lo: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub orthogonality: f64,
    pub history: Vec<f64>,
}

fn defect(
    disc: &Discretization,
    state: &AnsatzState,
    kernels: &[Vec<f64>],
    phi: &Split,
    c: &[f64],
    extended: bool,
) -> (Vec<f64>, Vec<f64>, f64) {
    let (hi, lo) = combine(&state.values, phi);
    let mut f = if extended {
        disc.residual_extended(&hi, &lo, &state.exterior)
    } else {
        disc.residual(&hi, &state.exterior)
    };
    for (z, cj) in kernels.iter().zip(c) {
        for (fi, zi) in f.iter_mut().zip(z) {
            *fi -= cj * zi;
        }
    }
    let e: Vec<f64> = kernels
        .iter()
        .map(|z| weighted_dot(&disc.weights, &phi.0, z) + weighted_dot(&disc.weights, &phi.1, z))
        .collect();
    let norm = Discretization::sup_norm(&f).max(Discretization::sup_norm(&e));
    (f, e, norm)
}

/// Defect below which residuals are evaluated in split precision.
const EXTENDED_BELOW: f64 = 1e-8;

type Split = (Vec<f64>, Vec<f64>);

/// `base + (hi + lo)` as an unevaluated pair.
pub(crate) fn combine(base: &[f64], phi: &Split) -> Split {
    let mut hi = Vec::with_capacity(base.len());
    let mut lo = Vec::with_capacity(base.len());
    for ((a, b), l) in base.iter().zip(&phi.0).zip(&phi.1) {
        let (s, e) = two_sum(*a, *b);
        hi.push(s);
        lo.push(e + l);
    }
    (hi, lo)
}

fn step(phi: &Split, dx: &[f64], t: f64) -> Split {
    combine(&phi.0, &(dx.iter().map(|d| t * d).collect(), phi.1.clone()))
}

/// Newton's method for `(φ, c)` starting from zero. At least one step is
/// taken; steps are halved while the defect grows. Once the tolerance is
/// met, further steps run while they still halve the defect.
pub fn projected_newton(
    disc: &Discretization,
    solver: &dyn BorderedSolver,
    opts: &NewtonOptions,
    state: &AnsatzState,
    kernels: &[Vec<f64>],
) -> Result<ProjectedSolution> {
    let n = disc.len();
    let m = kernels.len();
    let mut phi: Split = (vec![0.0; n], vec![0.0; n]);
    let mut c = vec![0.0; m];
    let mut extended = false;
    let (mut f, mut e, mut norm) = defect(disc, state, kernels, &phi, &c, extended);
    if !norm.is_finite() {
        return Err(Error::NonFinite("ansatz residual"));
    }
    let mut history = vec![norm];
    let mut converged = false;
    let mut polish_steps = 0;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let (u, _) = combine(&state.values, &phi);
        let jac = disc.jacobian(&u);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let rhs_c: Vec<f64> = e.iter().map(|v| -v).collect();
        let sol = solver.solve(&BorderedProblem {
            operator: &jac,
            constraints: kernels,
            weights: &disc.weights,
            rhs: &rhs,
            rhs_constraints: &rhs_c,
        })?;
        let mut t = 1.0;
        let mut halvings = 0;
        let (trial_phi, trial_c, tf, te, tn) = loop {
            let tp = step(&phi, &sol.x, t);
            let tc: Vec<f64> = c.iter().zip(&sol.multipliers).map(|(a, b)| a - t * b).collect();
            let (tf, te, tn) = defect(disc, state, kernels, &tp, &tc, extended);
            if (tn.is_finite() && tn < norm) || halvings >= opts.max_halvings {
                break (tp, tc, tf, te, tn);
            }
            t *= 0.5;
            halvings += 1;
        };
        if !tn.is_finite() {
            return Err(Error::NonFinite("Newton iterate"));
        }
        if converged && !(tn < 0.5 * norm) {
            break;
        }
        phi = trial_phi;
        c = trial_c;
        f = tf;
        e = te;
        norm = tn;
        if !extended && norm < EXTENDED_BELOW {
            extended = true;
            (f, e, norm) = defect(disc, state, kernels, &phi, &c, extended);
        }
        history.push(norm);
        if norm <= opts.tolerance {
            if converged && polish_steps >= 3 || norm == 0.0 {
                converged = true;
                break;
            }
            polish_steps += usize::from(converged);
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NewtonDiverged {
            iterations,
            history,
        });
    }
    let orthogonality = Discretization::sup_norm(&e);
    Ok(ProjectedSolution {
        phi: phi.0,
        phi_lo: phi.1,
        multipliers: c,
        iterations,
        residual: norm,
        orthogonality,
        history,
    })
}

#[derive(Debug, Clone)]
pub struct CorrectionResult {
    pub config: Configuration,
    pub ansatz: AnsatzState,
    /// Interleaved correction `φ`.
    pub phi: Vec<f64>,
    /// Low-order part of `φ`.
    pub phi_lo: Vec<f64>,
    /// `c_ij`, spike-major.
    pub multipliers: Vec<Vec<f64>>,
    pub star_norm: f64,
    pub h1_norm: f64,
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub orthogonality: f64,
    pub residual_history: Vec<f64>,
}

impl CorrectionResult {
    /// `U + φ`, interleaved.
    pub fn solution(&self) -> Vec<f64> {
        self.ansatz.values.iter().zip(&self.phi).map(|(a, b)| a + b).collect()
    }

    /// `U + φ` as an unevaluated `(hi, lo)` pair.
    pub fn solution_extended(&self) -> (Vec<f64>, Vec<f64>) {
        combine(&self.ansatz.values, &(self.phi.clone(), self.phi_lo.clone()))
    }

    pub fn multiplier_max(&self) -> f64 {
        self.multipliers
            .iter()
            .flatten()
            .fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn summary(&self) -> CorrectionSummary {
        CorrectionSummary {
            points: self.config.points.clone(),
            rho: self.config.rho,
            multipliers: self.multipliers.clone(),
            star_norm: self.star_norm,
            h1_norm: self.h1_norm,
            newton_iterations: self.newton_iterations,
            final_residual: self.final_residual,
            orthogonality: self.orthogonality,
            residual_history: self.residual_history.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrectionSummary {
    pub points: Vec<Vec<f64>>,
    pub rho: f64,
    pub multipliers: Vec<Vec<f64>>,
    pub star_norm: f64,
    pub h1_norm: f64,
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub orthogonality: f64,
    pub residual_history: Vec<f64>,
}

/// `‖·‖²_{H¹}` of an interleaved field with zero ghosts, summed over components.
pub fn h1_norm_squared_values(grid: &Grid, values: &[f64], nc: usize) -> f64 {
    crate::problem::split(grid, values, nc)
        .iter()
        .map(crate::grid::h1_norm_squared)
        .sum()
}

pub fn solve_projected(problem: &Problem, config: &Configuration) -> Result<CorrectionResult> {
    let state = problem.ansatz(config)?;
    let kernels = problem.kernels(config)?;
    let sol = projected_newton(&problem.disc, problem.solver.as_ref(), &problem.newton, &state, &kernels)?;
    let grid = problem.grid();
    let nc = problem.nc();
    let dim = grid.dim;
    Ok(CorrectionResult {
        config: config.clone(),
        star_norm: weighted_norm_values(grid, &sol.phi, nc, config, problem.norm.eta),
        h1_norm: h1_norm_squared_values(grid, &sol.phi, nc).sqrt(),
        multipliers: sol.multipliers.chunks(dim).map(|c| c.to_vec()).collect(),
        phi: sol.phi,
        phi_lo: sol.phi_lo,
        ansatz: state,
        newton_iterations: sol.iterations,
        final_residual: sol.residual,
        orthogonality: sol.orthogonality,
        residual_history: sol.history,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub sup_norm: f64,
    pub star_norm: f64,
}

/// `S(U)` for the ansatz of `config`, one field per component.
pub fn residual(problem: &Problem, config: &Configuration) -> Result<(Vec<Field>, ResidualReport)> {
    let state = problem.ansatz(config)?;
    let r = problem.disc.residual(&state.values, &state.exterior);
    let report = ResidualReport {
        sup_norm: Discretization::sup_norm(&r),
        star_norm: weighted_norm_values(problem.grid(), &r, problem.nc(), config, problem.norm.eta),
    };
    Ok((problem.split(&r), report))
}

/// Energy of `u` on the problem grid with the ghosts of `exterior`.
pub fn state_energy(problem: &Problem, u: &[f64], exterior: &Exterior) -> f64 {
    problem.disc.energy(u, exterior).total
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayRow {
    pub rho: f64,
    pub star_norm: f64,
    pub h1_norm: f64,
    pub multiplier_max: f64,
    pub newton_iterations: usize,
}

/// Fit `‖φ‖_* ≈ C e^{-ξρ}` over two-spike configurations at separation `ρ`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayStudy {
    pub rows: Vec<DecayRow>,
    pub xi: f64,
    pub c: f64,
    pub monotone: bool,
}

/// Two spikes at `±ρ/2 e₁` with cutoff radius `ρ` for each entry of `rhos`.
pub fn correction_decay_study(problem: &Problem, rhos: &[f64]) -> Result<DecayStudy> {
    if rhos.len() < 2 {
        return Err(Error::InvalidParameter("decay study needs two separations".into()));
    }
    let dim = problem.dim();
    let mut rows = Vec::new();
    for &rho in rhos {
        let mut a = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        a[0] = -0.5 * rho;
        b[0] = 0.5 * rho;
        let res = solve_projected(problem, &Configuration::new(vec![a, b], rho)?)?;
        rows.push(DecayRow {
            rho,
            star_norm: res.star_norm,
            h1_norm: res.h1_norm,
            multiplier_max: res.multiplier_max(),
            newton_iterations: res.newton_iterations,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.rho).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.star_norm.max(f64::MIN_POSITIVE).ln()).collect();
    let (slope, intercept) = linear_fit(&xs, &ys);
    let mut sorted: Vec<&DecayRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.rho.total_cmp(&b.rho));
    let monotone = sorted.windows(2).all(|w| w[1].star_norm < w[0].star_norm);
    Ok(DecayStudy {
        rows,
        xi: -slope,
        c: intercept.exp(),
        monotone,
    })
}

pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, Serialize)]
pub struct IncrementBound {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
    pub interaction_sum: f64,
    pub potential_term: f64,
    /// Smallest `C` for which this instance would pass with the
    /// calibrated `ξ`.
    pub implied_constant: f64,
}

/// Compares `‖φ^{(k+1)} - φ^{(k)}‖²_{H¹}` with
/// `C e^{-ξρ} Σ_i w(|Q_{k+1} - Q_i|) + C δ² (∫V² w² + (∫|V| w)²)` where the
/// last integrals use the new spike and `C`, `ξ` come from a decay study.
pub fn increment_bound_check(
    problem: &Problem,
    config: &Configuration,
    new_point: &[f64],
    calibration: &DecayStudy,
) -> Result<IncrementBound> {
    let before = solve_projected(problem, config)?;
    let extended = config.with_point(new_point.to_vec());
    let after = solve_projected(problem, &extended)?;
    let diff: Vec<f64> = after.phi.iter().zip(&before.phi).map(|(a, b)| a - b).collect();
    let grid = problem.grid();
    let lhs = h1_norm_squared_values(grid, &diff, problem.nc());
    let interaction_sum = neighbour_sum(&extended, &problem.gs, extended.len() - 1);
    let delta = problem.delta();
    let mut v2w2 = 0.0;
    let mut vw = 0.0;
    for node in 0..grid.len() {
        let x = grid.point(node);
        let w = problem.gs.value(crate::ansatz::distance(&x[..grid.dim], new_point));
        let q = grid.quadrature_weight(node);
        for p in &problem.potentials {
            let v = p.value(&x[..grid.dim]);
            v2w2 += q * v * v * w * w;
            vw += q * v.abs() * w;
        }
    }
    let potential_term = delta * delta * (v2w2 + vw * vw);
    let c = calibration.c;
    let shape = (-calibration.xi * config.rho).exp() * interaction_sum + potential_term;
    let rhs = c * shape;
    Ok(IncrementBound {
        implied_constant: lhs / shape,
        lhs,
        rhs,
        ratio: lhs / rhs,
        pass: lhs <= rhs,
        interaction_sum,
        potential_term,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::ansatz::WeightedNormParams;
    use crate::nonlinearity::Nonlinearity;
    use crate::potential::{parse_potential, Zero};
    use crate::profile::{compute_ground_state, GroundState, DEFAULT_ODE_TOL};

    const H: f64 = 0.1;

    fn cubic() -> Arc<GroundState> {
        Arc::new(compute_ground_state(Nonlinearity::cubic(), 1, DEFAULT_ODE_TOL).unwrap())
    }

    fn problem(preset: &str, delta: f64) -> Problem {
        let v = if preset == "zero" { Arc::new(Zero) as _ } else { parse_potential(preset).unwrap() };
        Problem::scalar(Grid::new(1, 40.0, H).unwrap(), cubic(), v, delta).unwrap()
    }

    fn pair(a: f64, b: f64) -> Configuration {
        Configuration::new(vec![vec![a], vec![b]], 10.0).unwrap()
    }

    #[test]
    fn single_spike_without_potential_needs_no_correction() {
        let r = solve_projected(&problem("zero", 0.0), &Configuration::new(vec![vec![0.0]], 10.0).unwrap()).unwrap();
        assert!(r.multiplier_max() < 1e-10);
        assert!(r.phi.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn correction_is_orthogonal_and_solves_the_projected_equation() {
        let p = problem("algebraic:1", 1e-3);
        let r = solve_projected(&p, &pair(-6.0, 5.5)).unwrap();
        assert!(r.orthogonality <= 1e-10);
        assert!(r.final_residual <= p.newton.tolerance);
        assert!(r.multiplier_max() > 0.0);
    }

    #[test]
    fn translation_by_grid_steps_shifts_the_correction() {
        let p = problem("zero", 0.0);
        let a = solve_projected(&p, &pair(-5.0, 5.0)).unwrap();
        let shift = 17;
        let b = solve_projected(&p, &pair(-5.0 + shift as f64 * H, 5.0 + shift as f64 * H)).unwrap();
        for (ca, cb) in a.multipliers.iter().flatten().zip(b.multipliers.iter().flatten()) {
            assert!((ca - cb).abs() < 1e-8);
        }
        let n = a.phi.len();
        for i in 100..n - 100 {
            assert!((a.phi[i] - b.phi[i + shift]).abs() < 1e-8);
        }
    }

    #[test]
    fn weight_exponent_only_affects_reporting() {
        let config = pair(-5.0, 5.0);
        let run = |eta| {
            let p = problem("algebraic:1", 1e-3).with_norm(WeightedNormParams { eta });
            solve_projected(&p, &config).unwrap()
        };
        let (a, b) = (run(0.6), run(0.75));
        assert!(a.phi.iter().zip(&b.phi).all(|(x, y)| (x - y).abs() <= 1e-12));
        assert_eq!(a.multipliers, b.multipliers);
        assert_ne!(a.star_norm, b.star_norm);
    }

    #[test]
    fn jacobian_nearly_annihilates_the_translation_mode() {
        let defect = |h: f64| {
            let p = Problem::scalar(Grid::new(1, 40.0, h).unwrap(), cubic(), Arc::new(Zero), 0.0).unwrap();
            let state = p.ansatz(&Configuration::new(vec![vec![0.0]], 10.0).unwrap()).unwrap();
            let u = &state.values;
            let du: Vec<f64> = (0..u.len())
                .map(|i| {
                    let l = if i == 0 { 0.0 } else { u[i - 1] };
                    let r = u.get(i + 1).copied().unwrap_or(0.0);
                    0.5 * (r - l) / h
                })
                .collect();
            let mut out = vec![0.0; u.len()];
            p.disc.jacobian(u).mul_vec(&du, &mut out);
            Discretization::sup_norm(&out)
        };
        let (coarse, fine) = (defect(0.1), defect(0.05));
        assert!(coarse <= 2.0 * 0.1 * 0.1 && fine <= 2.0 * 0.05 * 0.05);
        assert!(coarse / fine > 3.5, "{coarse} {fine}");
    }

    #[test]
    fn decay_study_needs_two_separations() {
        assert!(correction_decay_study(&problem("zero", 0.0), &[10.0]).is_err());
    }

    #[test]
    fn linear_fit_recovers_a_line() {
        let (s, c) = linear_fit(&[1.0, 2.0, 4.0], &[1.0, -1.0, -5.0]);
        assert!((s + 2.0).abs() < 1e-14 && (c - 3.0).abs() < 1e-14);
    }

    #[test]
    fn increment_bound_reports_its_implied_constant() {
        let p = problem("zero", 0.0);
        let study = correction_decay_study(&p, &[8.0, 10.0, 12.0]).unwrap();
        let config = Configuration::new(vec![vec![-5.0]], 10.0).unwrap();
        let b = increment_bound_check(&p, &config, &[5.0], &study).unwrap();
        assert!(b.lhs > 0.0 && b.potential_term == 0.0);
        assert!((b.implied_constant * b.rhs / study.c - b.lhs).abs() <= 1e-12 * b.lhs);
        assert_eq!(b.pass, b.ratio <= 1.0);
    }

    #[test]
    fn split_combination_is_exact() {
        let base = vec![1.0, 1e16];
        let (hi, lo) = combine(&base, &(vec![1e-17, 1.0], vec![0.0, 0.0]));
        assert_eq!(hi, vec![1.0, 1e16]);
        assert_eq!(lo, vec![1e-17, 1.0]);
    }
}
