//! Acceptance gate. Every check below is computed directly from the
//! library and compared with closed-form values at fixed tolerances.
//! Prints one line per criterion and exits nonzero if any fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use multibump::ansatz::{validate_configuration, Configuration};
use multibump::energy::{reduced_energy, two_bump_interaction_study};
use multibump::grid::Grid;
use multibump::maximize::{build_ledger, polish_solution, LedgerOptions};
use multibump::nonlinearity::Nonlinearity;
use multibump::potential::{parse_potential, Potential, Zero};
use multibump::problem::Problem;
use multibump::profile::{
    bump_energy, compute_ground_state, interaction_constant, linearized_spectrum, sector_operator, GroundState,
    Sector, DEFAULT_ODE_TOL,
};
use multibump::reduction::{correction_decay_study, increment_bound_check, solve_projected};
use multibump::system::{coupled_problem, coupled_spectrum, synchronized_amplitudes, PairField};
use multibump::Result;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 0.05;
const RHO: f64 = 10.0;
const SLOW_DECAY: &str = "algebraic:1";
const DELTA: f64 = 1e-9;

const W0_TOL: f64 = 1e-6;
const PROFILE_TOL: f64 = 1e-5;
const ENERGY_TOL: f64 = 1e-4;
const GAMMA_REL_TOL: f64 = 1e-3;
const LAMBDA_TOL: f64 = 1e-3;
const ZERO_BAND: f64 = 1e-4;
const XI_MIN: f64 = 0.5;
const ORTHO_TOL: f64 = 1e-10;
const MULTIPLIER_TOL: f64 = 1e-10;
const INTERACTION_TOL: f64 = 0.3;
const NOISE_MARGIN: f64 = 10.0;
const RESIDUAL_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-8;
const ORDER: f64 = 4.0;
const ORDER_TOL: f64 = 0.5;

struct Check {
    name: String,
    ok: bool,
    detail: String,
}

fn check(name: &str, ok: bool, detail: String) -> Check {
    Check { name: name.into(), ok, detail }
}

fn near(name: &str, value: f64, expected: f64, tol: f64) -> Check {
    check(
        name,
        (value - expected).abs() <= tol,
        format!("{value:.10} vs {expected:.10} ± {tol:.0e}"),
    )
}

fn below(name: &str, value: f64, bound: f64) -> Check {
    check(name, value <= bound, format!("{value:.3e} ≤ {bound:.1e}"))
}

fn within_seconds(start: Instant, limit: f64) -> Check {
    let s = start.elapsed().as_secs_f64();
    check("runtime", s < limit, format!("{s:.2} s < {limit} s"))
}

fn cubic() -> Arc<GroundState> {
    Arc::new(compute_ground_state(Nonlinearity::cubic(), 1, DEFAULT_ODE_TOL).expect("cubic ground state"))
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// `−γ₁ w(d)` for the cubic bump `√2 sech x`, with `γ₁ = 4√2`.
fn cubic_interaction(d: f64) -> f64 {
    -4.0 * 2f64.sqrt() * 2f64.sqrt() * sech(d)
}

fn flat(gs: &Arc<GroundState>, half_width: f64) -> Result<Problem> {
    Problem::scalar(Grid::new(1, half_width, H)?, gs.clone(), Arc::new(Zero), 0.0)
}

fn ground_states() -> Result<Vec<Check>> {
    let start = Instant::now();
    let c = compute_ground_state(Nonlinearity::cubic(), 1, DEFAULT_ODE_TOL)?;
    let q = compute_ground_state(Nonlinearity::power(2.0), 1, DEFAULT_ODE_TOL)?;
    let elapsed = within_seconds(start, 1.0);
    let sup = |gs: &GroundState, exact: fn(f64) -> f64| {
        (0..=4000)
            .map(|i| -10.0 + 0.005 * i as f64)
            .map(|x| (gs.value(x.abs()) - exact(x)).abs())
            .fold(0.0, f64::max)
    };
    Ok(vec![
        near("cubic w(0)", c.center_value, 2f64.sqrt(), W0_TOL),
        near("quadratic w(0)", q.center_value, 1.5, W0_TOL),
        below("cubic sup error", sup(&c, |x| 2f64.sqrt() * sech(x)), PROFILE_TOL),
        below("quadratic sup error", sup(&q, |x| 1.5 * sech(0.5 * x).powi(2)), PROFILE_TOL),
        elapsed,
    ])
}

fn constants() -> Result<Vec<Check>> {
    let start = Instant::now();
    let gs = cubic();
    let gamma = interaction_constant(&gs)?;
    let spectrum = linearized_spectrum(&gs, 3)?;
    let zeros = spectrum.eigenvalues.iter().filter(|l| l.abs() < ZERO_BAND).count();
    let exact_gamma = 4.0 * 2f64.sqrt();
    Ok(vec![
        near("I(w)", bump_energy(&gs), 4.0 / 3.0, ENERGY_TOL),
        below("gamma1 relative error", (gamma - exact_gamma).abs() / exact_gamma, GAMMA_REL_TOL),
        near("lambda1", spectrum.lambda1, 3.0, LAMBDA_TOL),
        check("one near-zero eigenvalue", zeros == 1, format!("{zeros} in (-1e-4, 1e-4)")),
        within_seconds(start, 10.0),
    ])
}

fn decay() -> Result<Vec<Check>> {
    let start = Instant::now();
    let study = correction_decay_study(&flat(&cubic(), 40.0)?, &[8.0, 10.0, 12.0])?;
    let norms: Vec<f64> = study.rows.iter().map(|r| r.star_norm).collect();
    let decreasing = norms.windows(2).all(|w| w[1] < w[0]);
    Ok(vec![
        check("fitted xi", study.xi >= XI_MIN, format!("{:.4} ≥ {XI_MIN}", study.xi)),
        check("monotone", decreasing, norms.iter().map(|n| format!("{n:.3e}")).collect::<Vec<_>>().join(" > ")),
        within_seconds(start, 30.0),
    ])
}

fn orthogonality() -> Result<Vec<Check>> {
    let gs = cubic();
    let v = parse_potential(SLOW_DECAY)?;
    let grid = Grid::new(1, 30.0, H)?;
    let plain = Problem::scalar(grid, gs.clone(), v.clone(), 0.0)?;
    let tilted = Problem::scalar(grid, gs, v, DELTA)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut ortho, mut mult) = (0.0_f64, 0.0_f64);
    let mut singles = 0;
    for n in 0..20 {
        let (k, tilt) = if n < 5 { (1, false) } else { (rng.random_range(1..=3), rng.random_bool(0.5)) };
        let points = loop {
            let pts: Vec<Vec<f64>> = (0..k).map(|_| vec![rng.random_range(-18.0..=18.0)]).collect();
            if validate_configuration(&pts, RHO).valid {
                break pts;
            }
        };
        let config = Configuration::new(points, RHO)?;
        let r = solve_projected(if tilt { &tilted } else { &plain }, &config)?;
        ortho = ortho.max(r.orthogonality);
        if k == 1 && !tilt {
            singles += 1;
            mult = mult.max(r.multiplier_max());
        }
    }
    Ok(vec![
        below("max |<phi, Z>|", ortho, ORTHO_TOL),
        below(&format!("max |c| over {singles} single spikes"), mult, MULTIPLIER_TOL),
    ])
}

fn interaction() -> Result<Vec<Check>> {
    let start = Instant::now();
    let rows = two_bump_interaction_study(&flat(&cubic(), 40.0)?, &[10.0, 14.0])?;
    let err: Vec<f64> = rows
        .iter()
        .map(|r| (r.interaction / cubic_interaction(r.d) - 1.0).abs())
        .collect();
    Ok(vec![
        below("deviation at d = 10", err[0], INTERACTION_TOL),
        check("smaller at d = 14", err[1] < err[0], format!("{:.3e} < {:.3e}", err[1], err[0])),
        within_seconds(start, 10.0),
    ])
}

fn increment() -> Result<Vec<Check>> {
    let gs = cubic();
    let calibration = correction_decay_study(&flat(&gs, 40.0)?, &[8.0, 10.0, 12.0])?;
    let v = parse_potential(SLOW_DECAY)?;
    let mut out = Vec::new();
    for delta in [0.0, DELTA] {
        let p = Problem::scalar(Grid::new(1, 50.0, H)?, gs.clone(), v.clone(), delta)?;
        for d in [10.0, 12.0] {
            let one = Configuration::new(vec![vec![-0.5 * d]], d)?;
            let two = Configuration::new(vec![vec![-d], vec![0.0]], d)?;
            for (label, config, new) in [("1->2", one, 0.5 * d), ("2->3", two, d)] {
                let b = increment_bound_check(&p, &config, &[new], &calibration)?;
                out.push(check(
                    &format!("{label} d = {d} delta = {delta:.0e}"),
                    b.lhs <= b.rhs,
                    format!("lhs {:.3e} rhs {:.3e}", b.lhs, b.rhs),
                ));
            }
        }
    }
    Ok(out)
}

fn ledger_and_polish() -> Result<(Vec<Check>, Vec<Check>)> {
    let start = Instant::now();
    let p = Problem::scalar(Grid::new(1, 100.0, H)?, cubic(), parse_potential(SLOW_DECAY)?, DELTA)?;
    let ledger = build_ledger(&p, &LedgerOptions::new(2, RHO, 0.5))?;
    let i = ledger.bump_energy;
    let (c1, c2) = (&ledger.entries[0], &ledger.entries[1]);
    let gain = c1.value - i;
    let gain_noise = c1.noise_floor + ledger.bump_noise;
    let excess = c2.value - c1.value - i;
    let excess_noise = c1.noise_floor + c2.noise_floor + ledger.bump_noise;
    let seven = vec![
        check("C1 > I", gain > 0.0, format!("{gain:.4e}")),
        check(
            "C1 - I noise margin",
            gain >= NOISE_MARGIN * gain_noise,
            format!("{gain:.3e} vs noise {gain_noise:.2e}"),
        ),
        check("C2 - C1 - I > 0", excess > 0.0, format!("{excess:.4e}")),
        check(
            "C2 - C1 - I noise margin",
            excess >= NOISE_MARGIN * excess_noise,
            format!("{excess:.3e} vs noise {excess_noise:.2e}"),
        ),
        check("finished", true, format!("{:.1} s", start.elapsed().as_secs_f64())),
    ];

    let spikes = &c2.record.config.points;
    let (fields, report) = polish_solution(&p, &c2.record.config)?;
    let u = &fields[0];
    let grid = p.grid();
    let min = u.values.iter().copied().fold(f64::INFINITY, f64::min);
    let n = grid.points_per_axis;
    let maxima: Vec<f64> = (1..n - 1)
        .filter(|&j| u.values[j] > u.values[j - 1] && u.values[j] > u.values[j + 1] && u.values[j] > 0.1)
        .map(|j| grid.coordinate(j))
        .collect();
    let offset = spikes
        .iter()
        .map(|q| maxima.iter().map(|m| (m - q[0]).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let eight = vec![
        below("residual", report.residual_after, RESIDUAL_TOL),
        check("positive", min > 0.0, format!("min {min:.3e}")),
        check("two strict maxima", maxima.len() == 2, format!("{maxima:?}")),
        below("maximum to spike", offset, grid.spacing),
    ];
    Ok((seven, eight))
}

fn system() -> Result<Vec<Check>> {
    let start = Instant::now();
    let gs = cubic();
    let (mu1, mu2, beta) = (1.0, 1.0, 3.0);
    let params = synchronized_amplitudes(mu1, mu2, beta)?;
    let det = mu1 * mu2 - beta * beta;
    let alpha = ((mu2 - beta) / det).sqrt();
    let gamma = ((mu1 - beta) / det).sqrt();
    let a = mu1 * alpha.powi(4) + mu2 * gamma.powi(4) + 2.0 * beta * alpha.powi(2) * gamma.powi(2);
    let mut out = vec![
        check("alpha", params.alpha == 0.5 && alpha == 0.5, format!("{} / {alpha}", params.alpha)),
        check("gamma", params.gamma == 0.5 && gamma == 0.5, format!("{} / {gamma}", params.gamma)),
    ];
    let spectrum = coupled_spectrum(&params, &gs, 3)?;
    out.push(check(
        "kernel dimension = 1",
        spectrum.kernel_dim == 1,
        format!("{}", spectrum.kernel_dim),
    ));

    let plain = coupled_problem(Grid::new(1, 40.0, H)?, gs.clone(), &params, Arc::new(Zero), Arc::new(Zero), 0.0)?;
    let row = &two_bump_interaction_study(&plain, &[10.0])?[0];
    out.push(below(
        "coupled interaction deviation",
        (row.interaction / (a * cubic_interaction(10.0)) - 1.0).abs(),
        INTERACTION_TOL,
    ));

    let v: Arc<dyn Potential> = parse_potential(SLOW_DECAY)?;
    let p = coupled_problem(Grid::new(1, 100.0, H)?, gs, &params, v.clone(), v, DELTA)?;
    let ledger = build_ledger(&p, &LedgerOptions::new(2, RHO, 0.5))?;
    let (fields, report) = polish_solution(&p, &ledger.entries[1].record.config)?;
    let pair = PairField::new(fields[0].clone(), fields[1].clone())?;
    let gap = pair
        .u
        .values
        .iter()
        .zip(&pair.v.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    out.push(below("coupled residual", report.residual_after, RESIDUAL_TOL));
    out.push(below("|u - v|", gap, SYMMETRY_TOL));
    out.push(within_seconds(start, 120.0));
    Ok(out)
}

fn convergence() -> Result<Vec<Check>> {
    let gs = cubic();
    let nl = gs.nonlinearity;
    let even = Sector { index: 0, multiplicity: 1 };
    let mut rows = Vec::new();
    for h in [0.1, 0.05, 0.025] {
        let p = Problem::scalar(Grid::new(1, 30.0, h)?, gs.clone(), Arc::new(Zero), 0.0)?;
        let config = Configuration::new(vec![vec![-5.0], vec![5.0]], RHO)?;
        let (t, _) = sector_operator(1, even, h, 30.0, &|r| nl.df(gs.value(r)))?;
        rows.push([p.reference_energy()?, t.largest(0), reduced_energy(&p, &config)?.value]);
    }
    Ok(["I_h", "lambda1", "M"]
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let r = (rows[0][j] - rows[1][j]) / (rows[1][j] - rows[2][j]);
            near(&format!("{name} refinement ratio"), r, ORDER, ORDER_TOL)
        })
        .collect())
}

fn report(id: u8, title: &str, result: Result<Vec<Check>>, failures: &mut u32) {
    let checks = result.unwrap_or_else(|e| vec![check("completed", false, e.to_string())]);
    let ok = checks.iter().all(|c| c.ok);
    println!("criterion {id:>2} {} {title}", if ok { "PASS" } else { "FAIL" });
    for c in &checks {
        println!("    [{}] {}: {}", if c.ok { "ok" } else { "!!" }, c.name, c.detail);
    }
    if !ok {
        *failures += 1;
    }
}

fn main() -> ExitCode {
    let mut failures = 0;
    report(1, "ground-state oracles", ground_states(), &mut failures);
    report(2, "energy and constants", constants(), &mut failures);
    report(3, "correction decay", decay(), &mut failures);
    report(4, "orthogonality and multipliers", orthogonality(), &mut failures);
    report(5, "two-bump interaction law", interaction(), &mut failures);
    report(6, "increment bound", increment(), &mut failures);
    let (seven, eight) = match ledger_and_polish() {
        Ok((a, b)) => (Ok(a), Ok(b)),
        Err(e) => {
            let msg = e.to_string();
            (Err(e), Err(multibump::Error::InvalidParameter(msg)))
        }
    };
    report(7, "ledger inequality", seven, &mut failures);
    report(8, "polish and structure", eight, &mut failures);
    report(9, "coupled system", system(), &mut failures);
    report(10, "convergence order", convergence(), &mut failures);
    println!("{failures} of 10 criteria failed");
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
