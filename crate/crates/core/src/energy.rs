//! Discrete energies, the reduced energy `M(Q) = J(U_Q + φ_Q)` and its
//! asymptotic expansion.

use serde::Serialize;

use crate::ansatz::{distance, Configuration};
use crate::error::Result;
use crate::grid::{gradient_energy_values, Field, Grid};
use crate::model::Discretization;
use crate::nonlinearity::Nonlinearity;
use crate::problem::{continuum_state, Problem};
use crate::reduction::{solve_projected, CorrectionResult};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBreakdown {
    /// `∫|∇u|²`
    pub gradient: f64,
    /// `∫u²`
    pub mass: f64,
    /// `δ∫Vu²`
    pub potential: f64,
    /// `∫F(u)`
    pub nonlinear: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(gradient: f64, mass: f64, potential: f64, nonlinear: f64) -> Self {
        Self {
            gradient,
            mass,
            potential,
            nonlinear,
            total: 0.5 * (gradient + mass + potential) - nonlinear,
        }
    }
}

/// `J(u) = ½∫|∇u|² + (1 + δV)u² - ∫F(u)` with zero values outside the box.
pub fn full_energy(u: &Field, potential: &Field, delta: f64, nl: &Nonlinearity) -> Result<EnergyBreakdown> {
    u.check_finite("u")?;
    let vu2 = u.zip_with(potential, |a, v| v * a * a)?;
    let g = &u.grid;
    let grad = gradient_energy_values(g, &u.values);
    let mass = crate::grid::integrate(&u.map(|a| a * a));
    let pot = delta * crate::grid::integrate(&vu2);
    let nonlin = crate::grid::integrate(&u.map(|a| nl.primitive(a)));
    Ok(EnergyBreakdown::new(grad, mass, pot, nonlin))
}

#[derive(Debug, Clone)]
pub struct ReducedEnergy {
    pub value: f64,
    pub breakdown: EnergyBreakdown,
    pub correction: CorrectionResult,
}

/// `M(Q)`, with the projected correction that produced it.
pub fn reduced_energy(problem: &Problem, config: &Configuration) -> Result<ReducedEnergy> {
    let correction = solve_projected(problem, config)?;
    let u = correction.solution();
    let breakdown = problem.disc.energy(&u, &correction.ansatz.exterior);
    Ok(ReducedEnergy {
        value: breakdown.total,
        breakdown,
        correction,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictedEnergy {
    pub value: f64,
    pub bump_term: f64,
    pub potential_term: f64,
    pub interaction_term: f64,
}

/// `k I + (δ/2) Σ_i ∫V w²_{Q_i} - γ₁ Σ_{i<j} w(|Q_i - Q_j|)`, scaled by the
/// component amplitudes for vector models. The potential integrals use the
/// problem grid.
pub fn predicted_energy(problem: &Problem, config: &Configuration) -> Result<PredictedEnergy> {
    let factor = problem.model().energy_factor();
    let amps = problem.model().amplitudes();
    let gs = &problem.gs;
    let k = config.len() as f64;
    let bump_term = k * factor * gs.energy;
    let grid = problem.grid();
    let mut pot = 0.0;
    if problem.delta() != 0.0 {
        for node in 0..grid.len() {
            let x = grid.point(node);
            let x = &x[..grid.dim];
            let wq: f64 = config
                .points
                .iter()
                .map(|q| gs.value(distance(x, q)).powi(2))
                .sum();
            let v: f64 = problem
                .potentials
                .iter()
                .zip(&amps)
                .map(|(p, a)| a * a * p.value(x))
                .sum();
            pot += grid.quadrature_weight(node) * v * wq;
        }
    }
    let potential_term = 0.5 * problem.delta() * pot;
    let mut pair = 0.0;
    for i in 0..config.len() {
        for j in i + 1..config.len() {
            pair += gs.value(config.distance(i, j));
        }
    }
    let interaction_term = if config.len() > 1 {
        -factor * problem.interaction_constant()? * pair
    } else {
        0.0
    };
    Ok(PredictedEnergy {
        value: bump_term + potential_term + interaction_term,
        bump_term,
        potential_term,
        interaction_term,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InteractionRow {
    pub d: f64,
    /// `J(U₁ + U₂) - J(U₁) - J(U₂)` for sampled profiles.
    pub interaction: f64,
    /// `-γ₁ w(d)` scaled by the model energy factor.
    pub predicted: f64,
    pub ratio: f64,
}

/// Pairwise interaction of two sampled spikes at `±d/2 e₁`, each single
/// spike evaluated on the same grid so that discretization bias cancels.
pub fn two_bump_interaction_study(problem: &Problem, ds: &[f64]) -> Result<Vec<InteractionRow>> {
    let gamma1 = problem.interaction_constant()?;
    let factor = problem.model().energy_factor();
    let dim = problem.dim();
    let h = problem.grid().spacing;
    let mut rows = Vec::new();
    for &d in ds {
        let mut a = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        a[0] = -0.5 * d;
        b[0] = 0.5 * d;
        let grid = Grid::covering(dim, &[a.clone(), b.clone()], margin(dim), h)?;
        let disc = Discretization::unforced(grid, problem.disc.model.clone())?;
        let energy = |pts: Vec<Vec<f64>>| -> Result<f64> {
            let cfg = Configuration::new(pts, d.max(1e-3))?;
            let s = continuum_state(&disc, &problem.gs, &cfg);
            Ok(disc.energy(&s.values, &s.exterior).total)
        };
        let pair = energy(vec![a.clone(), b.clone()])?;
        let interaction = pair - energy(vec![a])? - energy(vec![b])?;
        let predicted = -factor * gamma1 * problem.gs.value(d);
        rows.push(InteractionRow {
            d,
            interaction,
            predicted,
            ratio: interaction / predicted,
        });
    }
    Ok(rows)
}

fn margin(dim: usize) -> f64 {
    match dim {
        1 => 25.0,
        2 => 14.0,
        _ => 10.0,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::potential::{parse_potential, Zero};
    use crate::profile::{compute_ground_state, GroundState, DEFAULT_ODE_TOL};

    fn cubic() -> Arc<GroundState> {
        Arc::new(compute_ground_state(Nonlinearity::cubic(), 1, DEFAULT_ODE_TOL).unwrap())
    }

    fn problem(preset: &str, delta: f64) -> Problem {
        let v = if preset == "zero" { Arc::new(Zero) as _ } else { parse_potential(preset).unwrap() };
        Problem::scalar(Grid::new(1, 40.0, 0.1).unwrap(), cubic(), v, delta).unwrap()
    }

    fn config(points: &[f64]) -> Configuration {
        Configuration::new(points.iter().map(|&x| vec![x]).collect(), 10.0).unwrap()
    }

    #[test]
    fn breakdown_total_combines_terms() {
        let b = EnergyBreakdown::new(2.0, 4.0, 0.5, 1.0);
        assert_eq!(b.total, 2.25);
    }

    #[test]
    fn zero_field_has_zero_energy() {
        let g = Grid::new(1, 10.0, 0.1).unwrap();
        let z = g.zeros();
        let e = full_energy(&z, &z, 1.0, &Nonlinearity::cubic()).unwrap();
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn sampled_bump_energy_is_close_to_four_thirds() {
        let gs = cubic();
        let g = Grid::new(1, 30.0, 0.05).unwrap();
        let u = g.sample(|x| gs.value(x[0].abs()));
        let e = full_energy(&u, &g.zeros(), 0.0, &gs.nonlinearity).unwrap();
        assert!((e.total - 4.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn reduced_energy_ignores_spike_order() {
        let p = problem("algebraic:1", 1e-3);
        let a = reduced_energy(&p, &config(&[-12.0, 0.5, 13.0])).unwrap().value;
        let b = reduced_energy(&p, &config(&[13.0, -12.0, 0.5])).unwrap().value;
        assert_eq!(a, b);
    }

    #[test]
    fn reduced_energy_is_translation_invariant_without_potential() {
        let p = problem("zero", 0.0);
        let a = reduced_energy(&p, &config(&[-6.0, 5.0])).unwrap().value;
        let b = reduced_energy(&p, &config(&[-6.0 + 2.3, 5.0 + 2.3])).unwrap().value;
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn distant_spikes_are_additive() {
        let p = problem("zero", 0.0);
        let one = reduced_energy(&p, &config(&[0.0])).unwrap().value;
        let two = reduced_energy(&p, &config(&[-10.0, 10.0])).unwrap().value;
        assert!((two - 2.0 * one).abs() <= 1e-7);
    }

    #[test]
    fn prediction_for_one_spike_is_the_bump_energy() {
        let p = problem("zero", 0.0);
        let pred = predicted_energy(&p, &config(&[3.0])).unwrap();
        assert_eq!(pred.value, p.gs.energy);
        assert_eq!(pred.interaction_term, 0.0);
    }

    #[test]
    fn reduced_energy_tracks_its_prediction() {
        let p = problem("algebraic:1", 1e-3);
        let c = config(&[-5.0, 5.0]);
        let m = reduced_energy(&p, &c).unwrap().value;
        let pred = predicted_energy(&p, &c).unwrap();
        let correction = m - 2.0 * p.reference_energy().unwrap();
        let expected = pred.value - pred.bump_term;
        assert!((correction / expected - 1.0).abs() < 0.05, "{correction} {expected}");
    }

    #[test]
    fn interaction_rows_approach_the_law() {
        let rows = two_bump_interaction_study(&problem("zero", 0.0), &[8.0, 12.0]).unwrap();
        assert!(rows[0].interaction < 0.0);
        assert!((rows[1].ratio - 1.0).abs() < (rows[0].ratio - 1.0).abs());
    }
}
