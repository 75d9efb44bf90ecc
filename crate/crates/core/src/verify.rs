//! End-to-end verification suite backing the `verify` subcommand.
//!
//! Each check runs the full pipeline at desk scale against closed-form
//! values for the one-dimensional cubic and quadratic bumps.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ansatz::Configuration;
use crate::energy::{reduced_energy, two_bump_interaction_study};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::maximize::{build_ledger, polish_solution, EnergyLedger, LedgerOptions, PolishReport};
use crate::nonlinearity::Nonlinearity;
use crate::potential::{parse_potential, Potential, Zero};
use crate::problem::Problem;
use crate::profile::{
    bump_energy, compute_ground_state, interaction_constant, linearized_spectrum, sector_operator, GroundState,
    Sector, DEFAULT_ODE_TOL,
};
use crate::reduction::{correction_decay_study, increment_bound_check, solve_projected};
use crate::system::{
    coupled_problem, coupled_spectrum, synchronized_amplitudes, PairField,
};

pub const SPACING: f64 = 0.05;
pub const RHO: f64 = 10.0;
pub const LEDGER_DELTA: f64 = 1e-9;
pub const LEDGER_HALF_WIDTH: f64 = 100.0;
pub const LEDGER_POTENTIAL: &str = "algebraic:1";
pub const ETA_BAR: f64 = 0.5;
pub const RANDOM_CONFIGURATIONS: usize = 20;
pub const CONVERGENCE_SPACINGS: [f64; 3] = [0.1, 0.05, 0.025];
pub const ORDER_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Scalar1d,
    System1d,
    All,
}

impl Suite {
    pub fn criteria(self) -> Vec<u8> {
        match self {
            Suite::Scalar1d => vec![1, 2, 3, 4, 5, 6, 7, 8, 10],
            Suite::System1d => vec![9],
            Suite::All => (1..=10).collect(),
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalar-1d" => Ok(Suite::Scalar1d),
            "system-1d" => Ok(Suite::System1d),
            "all" => Ok(Suite::All),
            other => Err(Error::InvalidParameter(format!(
                "unknown suite '{other}' (available: scalar-1d, system-1d, all)"
            ))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Scalar1d => "scalar-1d",
            Suite::System1d => "system-1d",
            Suite::All => "all",
        })
    }
}

/// A checked quantity with the bound it is held to.
#[derive(Debug, Clone, Serialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Measurement {
    fn within(name: &str, value: f64, expected: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tol,
            pass: (value - expected).abs() <= tol,
        }
    }

    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tol: bound,
            pass: value <= bound,
        }
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tol: bound,
            pass: value >= bound,
        }
    }

    fn flag(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: f64::from(u8::from(ok)),
            tol: 1.0,
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub seconds: f64,
    pub measurements: Vec<Measurement>,
    pub note: Option<String>,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {:<4} {} ({:.1} s)",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.seconds
        )?;
        for m in self.measurements.iter().filter(|m| !m.pass) {
            write!(f, "; {} = {:.4e} (bound {:.4e})", m.name, m.value, m.tol)?;
        }
        if let Some(n) = &self.note {
            write!(f, "; {n}")?;
        }
        Ok(())
    }
}

/// Shared state between criteria: profiles and the scalar ledger.
pub struct Context {
    pub cubic: Arc<GroundState>,
    pub quadratic: Arc<GroundState>,
    ledger: Option<(Problem, EnergyLedger)>,
    pub seed: u64,
}

impl Context {
    pub fn new(seed: u64) -> Result<Self> {
        Ok(Self {
            cubic: Arc::new(compute_ground_state(Nonlinearity::cubic(), 1, DEFAULT_ODE_TOL)?),
            quadratic: Arc::new(compute_ground_state(Nonlinearity::power(2.0), 1, DEFAULT_ODE_TOL)?),
            ledger: None,
            seed,
        })
    }

    fn scalar(&self, half_width: f64, spacing: f64, potential: Arc<dyn Potential>, delta: f64) -> Result<Problem> {
        Problem::scalar(Grid::new(1, half_width, spacing)?, self.cubic.clone(), potential, delta)
    }

    /// The `k ≤ 2` ledger for the slow-decay preset, built on first use.
    pub fn scalar_ledger(&mut self) -> Result<&(Problem, EnergyLedger)> {
        if self.ledger.is_none() {
            let p = self.scalar(LEDGER_HALF_WIDTH, SPACING, parse_potential(LEDGER_POTENTIAL)?, LEDGER_DELTA)?;
            let mut opts = LedgerOptions::new(2, RHO, ETA_BAR);
            opts.seed = self.seed;
            let ledger = build_ledger(&p, &opts)?;
            self.ledger = Some((p, ledger));
        }
        Ok(self.ledger.as_ref().expect("ledger just built"))
    }
}

pub fn title(id: u8) -> &'static str {
    match id {
        1 => "ground-state oracles",
        2 => "energy, interaction constant and spectrum",
        3 => "correction decay",
        4 => "orthogonality and multipliers",
        5 => "two-spike interaction law",
        6 => "increment bound",
        7 => "ledger inequality",
        8 => "polish and structure",
        9 => "coupled system",
        10 => "convergence order",
        _ => "unknown",
    }
}

/// Runs one criterion. Solver failures become a failing outcome carrying
/// the error text.
pub fn run_criterion(id: u8, ctx: &mut Context) -> CriterionOutcome {
    let start = Instant::now();
    let result = match id {
        1 => ground_state_oracles(ctx),
        2 => constants(ctx),
        3 => correction_decay(ctx),
        4 => orthogonality(ctx),
        5 => interaction_law(ctx),
        6 => increment_bound(ctx),
        7 => ledger_inequality(ctx),
        8 => polish(ctx),
        9 => coupled(ctx),
        10 => convergence(ctx),
        _ => Err(Error::InvalidParameter(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (mut measurements, note) = match result {
        Ok(r) => r,
        Err(e) => (vec![Measurement::flag("completed", false)], Some(e.to_string())),
    };
    if let Some(limit) = runtime_limit(id) {
        measurements.push(Measurement::at_most("seconds", seconds, limit));
    }
    CriterionOutcome {
        id,
        title: title(id),
        pass: measurements.iter().all(|m| m.pass),
        seconds,
        measurements,
        note,
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CriterionOutcome>> {
    let mut ctx = Context::new(seed)?;
    Ok(suite.criteria().into_iter().map(|id| run_criterion(id, &mut ctx)).collect())
}

fn runtime_limit(id: u8) -> Option<f64> {
    match id {
        1 => Some(1.0),
        2 | 5 => Some(10.0),
        3 => Some(30.0),
        9 => Some(120.0),
        _ => None,
    }
}

type Checked = Result<(Vec<Measurement>, Option<String>)>;

fn ground_state_oracles(ctx: &Context) -> Checked {
    // timed separately from the shared context
    let cubic = compute_ground_state(Nonlinearity::cubic(), 1, DEFAULT_ODE_TOL)?;
    let quadratic = compute_ground_state(Nonlinearity::power(2.0), 1, DEFAULT_ODE_TOL)?;
    let sup = |gs: &GroundState, exact: &dyn Fn(f64) -> f64| {
        (0..=2000)
            .map(|i| -10.0 + 0.01 * i as f64)
            .map(|x| (gs.value(x.abs()) - exact(x)).abs())
            .fold(0.0_f64, f64::max)
    };
    let _ = ctx;
    Ok((
        vec![
            Measurement::within("cubic w0", cubic.center_value, 2f64.sqrt(), 1e-6),
            Measurement::within("quadratic w0", quadratic.center_value, 1.5, 1e-6),
            Measurement::at_most("cubic profile error", sup(&cubic, &|x| 2f64.sqrt() / x.cosh()), 1e-5),
            Measurement::at_most(
                "quadratic profile error",
                sup(&quadratic, &|x| 1.5 / (0.5 * x).cosh().powi(2)),
                1e-5,
            ),
        ],
        None,
    ))
}

fn constants(ctx: &Context) -> Checked {
    let gs = &ctx.cubic;
    let gamma1 = interaction_constant(gs)?;
    let exact = 4.0 * 2f64.sqrt();
    let spectrum = linearized_spectrum(gs, 3)?;
    let near_zero = spectrum.eigenvalues.iter().filter(|l| l.abs() < 1e-4).count();
    Ok((
        vec![
            Measurement::within("I(w)", bump_energy(gs), 4.0 / 3.0, 1e-4),
            Measurement::at_most("gamma1 relative error", (gamma1 / exact - 1.0).abs(), 1e-3),
            Measurement::within("lambda1", spectrum.lambda1, 3.0, 1e-3),
            Measurement::within("eigenvalues in (-1e-4, 1e-4)", near_zero as f64, 1.0, 0.0),
        ],
        None,
    ))
}

fn correction_decay(ctx: &Context) -> Checked {
    let p = ctx.scalar(40.0, SPACING, Arc::new(Zero), 0.0)?;
    let study = correction_decay_study(&p, &[8.0, 10.0, 12.0])?;
    Ok((
        vec![
            Measurement::at_least("xi", study.xi, 0.5),
            Measurement::flag("monotone", study.monotone),
        ],
        Some(format!("xi = {:.3}, C = {:.2}", study.xi, study.c)),
    ))
}

fn orthogonality(ctx: &Context) -> Checked {
    let potential = parse_potential(LEDGER_POTENTIAL)?;
    let flat = ctx.scalar(30.0, SPACING, potential.clone(), 0.0)?;
    let tilted = ctx.scalar(30.0, SPACING, potential, LEDGER_DELTA)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut worst_orth = 0.0_f64;
    let mut worst_single = 0.0_f64;
    for n in 0..RANDOM_CONFIGURATIONS {
        let (k, delta_on) = if n < 5 { (1, false) } else { (rng.random_range(1..=3), rng.random_bool(0.5)) };
        let config = loop {
            let pts: Vec<Vec<f64>> = (0..k).map(|_| vec![rng.random_range(-18.0..=18.0)]).collect();
            if let Ok(c) = Configuration::new(pts, RHO) {
                if crate::ansatz::validate_configuration(&c.points, RHO).valid {
                    break c;
                }
            }
        };
        let problem = if delta_on { &tilted } else { &flat };
        let r = solve_projected(problem, &config)?;
        worst_orth = worst_orth.max(r.orthogonality);
        if k == 1 && !delta_on {
            worst_single = worst_single.max(r.multiplier_max());
        }
    }
    Ok((
        vec![
            Measurement::at_most("max |<phi, Z>|", worst_orth, 1e-10),
            Measurement::at_most("max |c| (k = 1, delta = 0)", worst_single, 1e-10),
        ],
        None,
    ))
}

fn interaction_law(ctx: &Context) -> Checked {
    let p = ctx.scalar(40.0, SPACING, Arc::new(Zero), 0.0)?;
    let rows = two_bump_interaction_study(&p, &[10.0, 14.0])?;
    let (e10, e14) = ((rows[0].ratio - 1.0).abs(), (rows[1].ratio - 1.0).abs());
    Ok((
        vec![
            Measurement::at_most("|ratio - 1| at d = 10", e10, 0.3),
            Measurement::flag("error shrinks by d = 14", e14 < e10),
        ],
        Some(format!("ratios {:.5}, {:.5}", rows[0].ratio, rows[1].ratio)),
    ))
}

fn increment_bound(ctx: &Context) -> Checked {
    let calibration = correction_decay_study(&ctx.scalar(40.0, SPACING, Arc::new(Zero), 0.0)?, &[8.0, 10.0, 12.0])?;
    let potential = parse_potential(LEDGER_POTENTIAL)?;
    let mut worst = 0.0_f64;
    let mut implied = (f64::INFINITY, 0.0_f64);
    for delta in [0.0, LEDGER_DELTA] {
        let p = ctx.scalar(50.0, SPACING, potential.clone(), delta)?;
        for d in [10.0, 12.0] {
            let cases = [
                (Configuration::new(vec![vec![-0.5 * d]], d)?, vec![0.5 * d]),
                (Configuration::new(vec![vec![-d], vec![0.0]], d)?, vec![d]),
            ];
            for (config, new_point) in cases {
                let b = increment_bound_check(&p, &config, &new_point, &calibration)?;
                worst = worst.max(b.ratio);
                implied = (implied.0.min(b.implied_constant), implied.1.max(b.implied_constant));
            }
        }
    }
    Ok((
        vec![Measurement::at_most("max lhs/rhs", worst, 1.0)],
        Some(format!(
            "calibrated C = {:.2}, xi = {:.3}; constants implied by the cases span [{:.2}, {:.2}]",
            calibration.c, calibration.xi, implied.0, implied.1
        )),
    ))
}

fn ledger_inequality(ctx: &mut Context) -> Checked {
    let (_, ledger) = ctx.scalar_ledger()?;
    let first = &ledger.entries[0];
    let second = &ledger.entries[1];
    let gain = first.value - ledger.bump_energy;
    let gain_floor = first.noise_floor + ledger.bump_noise;
    let excess = second.excess.unwrap_or(f64::NAN);
    let excess_floor = first.noise_floor + second.noise_floor + ledger.bump_noise;
    Ok((
        vec![
            Measurement::at_least("C1 - I", gain, 10.0 * gain_floor),
            Measurement::at_least("C2 - C1 - I", excess, 10.0 * excess_floor),
            Measurement::flag("increments positive", gain > 0.0 && excess > 0.0),
        ],
        Some(format!(
            "C1 - I = {gain:.3e} (noise {gain_floor:.1e}), C2 - C1 - I = {excess:.3e} (noise {excess_floor:.1e})"
        )),
    ))
}

fn polish_measurements(report: &PolishReport, k: usize, spacing: f64) -> Vec<Measurement> {
    vec![
        Measurement::at_most("residual after polish", report.residual_after, 1e-10),
        Measurement::flag("positive", report.positive),
        Measurement::within("local maxima", report.local_maxima.len() as f64, k as f64, 0.0),
        Measurement::at_most("maximum offset", report.max_offset, spacing),
    ]
}

fn polish(ctx: &mut Context) -> Checked {
    let (p, ledger) = ctx.scalar_ledger()?;
    let config = &ledger.entries[1].record.config;
    let (_, report) = polish_solution(p, config)?;
    Ok((
        polish_measurements(&report, 2, p.grid().spacing),
        Some(format!(
            "residual {:.2e} -> {:.2e}",
            report.residual_before, report.residual_after
        )),
    ))
}

fn coupled(ctx: &Context) -> Checked {
    let params = synchronized_amplitudes(1.0, 1.0, 3.0)?;
    let mut out = vec![
        Measurement::within("alpha", params.alpha, 0.5, 0.0),
        Measurement::within("gamma", params.gamma, 0.5, 0.0),
        Measurement::within("A", params.energy_factor(), 0.5, 1e-12),
    ];
    let spectrum = coupled_spectrum(&params, &ctx.cubic, 3)?;
    out.push(Measurement::within("coupled kernel dimension", spectrum.kernel_dim as f64, 1.0, 0.0));

    let flat = coupled_problem(
        Grid::new(1, 40.0, SPACING)?,
        ctx.cubic.clone(),
        &params,
        Arc::new(Zero),
        Arc::new(Zero),
        0.0,
    )?;
    let rows = two_bump_interaction_study(&flat, &[10.0])?;
    out.push(Measurement::at_most("|coupled ratio - 1| at d = 10", (rows[0].ratio - 1.0).abs(), 0.3));

    let potential = parse_potential(LEDGER_POTENTIAL)?;
    let p = coupled_problem(
        Grid::new(1, LEDGER_HALF_WIDTH, SPACING)?,
        ctx.cubic.clone(),
        &params,
        potential.clone(),
        potential,
        LEDGER_DELTA,
    )?;
    let mut opts = LedgerOptions::new(2, RHO, ETA_BAR);
    opts.seed = ctx.seed;
    let ledger = build_ledger(&p, &opts)?;
    out.push(Measurement::flag("coupled ledger increasing", ledger.strictly_increasing));
    let (fields, report) = polish_solution(&p, &ledger.entries[1].record.config)?;
    let pair = PairField::new(fields[0].clone(), fields[1].clone())?;
    out.push(Measurement::at_most("coupled residual after polish", report.residual_after, 1e-10));
    out.push(Measurement::at_most("|u - v|", pair.asymmetry(), 1e-8));
    Ok((
        out,
        Some(format!(
            "interaction ratio {:.5}, coupled residual {:.2e}",
            rows[0].ratio, report.residual_after
        )),
    ))
}

/// `(q₀ - q₁)/(q₁ - q₂)` for the three-level sequence `q`.
pub fn refinement_ratio(q: [f64; 3]) -> f64 {
    (q[0] - q[1]) / (q[1] - q[2])
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub spacing: f64,
    pub bump_energy: f64,
    pub lambda1: f64,
    pub reduced_energy: f64,
}

/// `I_h`, `λ₁` of the radial operator at step `h`, and `M` of two spikes
/// at distance `ρ`, for each spacing.
pub fn convergence_table(gs: &Arc<GroundState>, spacings: &[f64]) -> Result<Vec<ConvergenceRow>> {
    let nl = gs.nonlinearity;
    spacings
        .iter()
        .map(|&h| {
            let p = Problem::scalar(Grid::new(1, 30.0, h)?, gs.clone(), Arc::new(Zero), 0.0)?;
            let config = Configuration::new(vec![vec![-0.5 * RHO], vec![0.5 * RHO]], RHO)?;
            let even = Sector { index: 0, multiplicity: 1 };
            let (t, _) = sector_operator(1, even, h, 30.0, &|r| nl.df(gs.value(r)))?;
            Ok(ConvergenceRow {
                spacing: h,
                bump_energy: p.reference_energy()?,
                lambda1: t.largest(0),
                reduced_energy: reduced_energy(&p, &config)?.value,
            })
        })
        .collect()
}

fn convergence(ctx: &Context) -> Checked {
    let rows = convergence_table(&ctx.cubic, &CONVERGENCE_SPACINGS)?;
    let pick = |f: fn(&ConvergenceRow) -> f64| [f(&rows[0]), f(&rows[1]), f(&rows[2])];
    let ratios = [
        ("I_h refinement ratio", refinement_ratio(pick(|r| r.bump_energy))),
        ("lambda1 refinement ratio", refinement_ratio(pick(|r| r.lambda1))),
        ("M refinement ratio", refinement_ratio(pick(|r| r.reduced_energy))),
    ];
    Ok((
        ratios
            .iter()
            .map(|(n, r)| Measurement::within(n, *r, 4.0, ORDER_TOLERANCE))
            .collect(),
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_parse_and_cover_every_criterion() {
        assert_eq!("scalar-1d".parse::<Suite>().unwrap(), Suite::Scalar1d);
        assert!("nope".parse::<Suite>().is_err());
        let mut all = Suite::Scalar1d.criteria();
        all.extend(Suite::System1d.criteria());
        all.sort();
        assert_eq!(all, Suite::All.criteria());
    }

    #[test]
    fn refinement_ratio_of_a_quadratic_sequence_is_four() {
        let f = |h: f64| 1.0 + 3.0 * h * h;
        assert!((refinement_ratio([f(0.4), f(0.2), f(0.1)]) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn failed_measurements_are_listed() {
        let o = CriterionOutcome {
            id: 3,
            title: title(3),
            pass: false,
            seconds: 0.5,
            measurements: vec![Measurement::at_least("xi", 0.1, 0.5), Measurement::flag("monotone", true)],
            note: None,
        };
        let line = o.to_string();
        assert!(line.contains("FAIL") && line.contains("xi") && !line.contains("monotone"));
    }
}
