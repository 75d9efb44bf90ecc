//! Maximization of the reduced energy over `Λ_k`, the energy ledger
//! `C_k = sup M`, and polishing of maximizers into full solutions.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use parking_lot::Mutex;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ansatz::{validate_configuration, Configuration};
use crate::energy::reduced_energy;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::linalg::weighted_dot;
use crate::model::Discretization;
use crate::potential::{check_hypotheses, delta_regime_warning};
use crate::problem::Problem;
use crate::reduction::solve_projected;
use crate::registry::Registry;

/// Gap enforced when pushing a violating pair apart.
pub const SEPARATION_SLACK: f64 = 0.1;
/// Values within this relative distance count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;
/// Sub-lattice resolution: coordinates are snapped to `h / LATTICE`.
pub const LATTICE: f64 = 16.0;

/// A function to maximize over a constrained set of flat coordinates.
pub trait Objective: Sync {
    fn value(&self, x: &[f64]) -> Option<f64>;
    /// Moves `x` into the feasible set; `false` if that failed.
    fn project(&self, x: &mut [f64]) -> bool;
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LocalOptions {
    pub initial_step: f64,
    pub min_step: f64,
    pub shrink: f64,
    pub max_evaluations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

pub trait LocalMaximizer: Send + Sync {
    fn name(&self) -> &'static str;
    fn maximize(&self, objective: &dyn Objective, start: &[f64], opts: &LocalOptions) -> Option<LocalResult>;
}

/// Compass search: poll `±step` along every coordinate, move to the best
/// improving poll, otherwise shrink the step.
#[derive(Debug, Clone, Default)]
pub struct PatternSearch;

impl LocalMaximizer for PatternSearch {
    fn name(&self) -> &'static str {
        "pattern"
    }

    fn maximize(&self, obj: &dyn Objective, start: &[f64], opts: &LocalOptions) -> Option<LocalResult> {
        let mut x = start.to_vec();
        if !obj.project(&mut x) {
            return None;
        }
        let mut fx = obj.value(&x)?;
        let mut evals = 1;
        let mut step = opts.initial_step;
        while step >= opts.min_step && evals < opts.max_evaluations {
            let mut best: Option<(Vec<f64>, f64)> = None;
            for l in 0..x.len() {
                for s in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[l] += s * step;
                    if !obj.project(&mut y) || y == x {
                        continue;
                    }
                    evals += 1;
                    if let Some(fy) = obj.value(&y) {
                        if fy > fx && best.as_ref().is_none_or(|b| fy > b.1) {
                            best = Some((y, fy));
                        }
                    }
                }
            }
            match best {
                Some((y, fy)) => {
                    x = y;
                    fx = fy;
                }
                None => step *= opts.shrink,
            }
        }
        Some(LocalResult {
            x,
            value: fx,
            evaluations: evals,
        })
    }
}

/// Nelder–Mead on `-M` with every trial point projected.
#[derive(Debug, Clone, Default)]
pub struct NelderMead;

impl LocalMaximizer for NelderMead {
    fn name(&self) -> &'static str {
        "nelder-mead"
    }

    fn maximize(&self, obj: &dyn Objective, start: &[f64], opts: &LocalOptions) -> Option<LocalResult> {
        let n = start.len();
        let evals = std::cell::Cell::new(0usize);
        let eval = |p: &mut Vec<f64>| -> f64 {
            evals.set(evals.get() + 1);
            if obj.project(p) {
                obj.value(p).map_or(f64::INFINITY, |v| -v)
            } else {
                f64::INFINITY
            }
        };
        let mut x0 = start.to_vec();
        let f0 = eval(&mut x0);
        if !f0.is_finite() {
            return None;
        }
        let mut simplex = vec![(x0.clone(), f0)];
        for l in 0..n {
            let mut p = x0.clone();
            p[l] += opts.initial_step;
            let f = eval(&mut p);
            simplex.push((p, f));
        }
        while evals.get() < opts.max_evaluations {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let size = simplex[1..]
                .iter()
                .map(|(p, _)| {
                    p.iter()
                        .zip(&simplex[0].0)
                        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
                })
                .fold(0.0_f64, f64::max);
            if size < opts.min_step {
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|i| simplex[..n].iter().map(|(p, _)| p[i]).sum::<f64>() / n as f64)
                .collect();
            let worst = simplex[n].clone();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let mut r = along(1.0);
            let fr = eval(&mut r);
            if fr < simplex[0].1 {
                let mut e = along(2.0);
                let fe = eval(&mut e);
                simplex[n] = if fe < fr { (e, fe) } else { (r, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (r, fr);
            } else {
                let mut c = along(if fr < worst.1 { 0.5 } else { -0.5 });
                let fc = eval(&mut c);
                if fc < worst.1.min(fr) {
                    simplex[n] = (c, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for item in simplex.iter_mut().skip(1) {
                        let mut p: Vec<f64> =
                            item.0.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect();
                        let f = eval(&mut p);
                        *item = (p, f);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, f) = simplex.swap_remove(0);
        f.is_finite().then_some(LocalResult {
            x,
            value: -f,
            evaluations: evals.get(),
        })
    }
}

pub fn maximizer_registry() -> Registry<dyn LocalMaximizer> {
    let mut r: Registry<dyn LocalMaximizer> = Registry::new("local maximizer");
    r.register("pattern", || Arc::new(PatternSearch));
    r.register("nelder-mead", || Arc::new(NelderMead));
    r
}

/// `M` on `Λ_k ∩ [-R, R]^{N k}`, with coordinates snapped to a sub-lattice
/// of the grid and values cached.
pub struct ReducedObjective<'a> {
    pub problem: &'a Problem,
    pub dim: usize,
    pub rho: f64,
    pub radius: f64,
    cache: Mutex<HashMap<Vec<i64>, Option<f64>>>,
}

impl<'a> ReducedObjective<'a> {
    pub fn new(problem: &'a Problem, rho: f64, radius: f64) -> Self {
        Self {
            problem,
            dim: problem.dim(),
            rho,
            radius,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn quantum(&self) -> f64 {
        self.problem.grid().spacing / LATTICE
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        let q = self.quantum();
        x.iter().map(|v| (v / q).round() as i64).collect()
    }

    pub fn snap(&self, x: &mut [f64]) {
        let q = self.quantum();
        for v in x.iter_mut() {
            *v = (*v / q).round() * q;
        }
    }

    pub fn configuration(&self, x: &[f64]) -> Configuration {
        Configuration::from_flat(x, self.dim, self.rho)
    }
}

impl Objective for ReducedObjective<'_> {
    fn value(&self, x: &[f64]) -> Option<f64> {
        let key = self.key(x);
        if let Some(v) = self.cache.lock().get(&key) {
            return *v;
        }
        let v = reduced_energy(self.problem, &self.configuration(x))
            .ok()
            .map(|r| r.value);
        self.cache.lock().insert(key, v);
        v
    }

    fn project(&self, x: &mut [f64]) -> bool {
        project_feasible(x, self.dim, self.rho, self.radius);
        self.snap(x);
        let pts: Vec<Vec<f64>> = x.chunks(self.dim).map(|c| c.to_vec()).collect();
        validate_configuration(&pts, self.rho).valid
            && x.iter().all(|v| v.abs() <= self.radius + 1e-12)
    }
}

/// Clamps to the box and pushes violating pairs apart to `ρ + slack`.
pub fn project_feasible(x: &mut [f64], dim: usize, rho: f64, radius: f64) -> bool {
    let k = x.len() / dim;
    for _ in 0..100 {
        for v in x.iter_mut() {
            *v = v.clamp(-radius, radius);
        }
        let mut moved = false;
        for i in 0..k {
            for j in i + 1..k {
                let mut diff: Vec<f64> = (0..dim).map(|a| x[j * dim + a] - x[i * dim + a]).collect();
                let mut d = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                if d >= rho {
                    continue;
                }
                if d == 0.0 {
                    diff = vec![0.0; dim];
                    diff[0] = 1.0;
                    d = 1.0;
                }
                let push = 0.5 * (rho + SEPARATION_SLACK - d.min(rho));
                for a in 0..dim {
                    let u = diff[a] / d;
                    x[i * dim + a] -= push * u;
                    x[j * dim + a] += push * u;
                }
                moved = true;
            }
        }
        if !moved {
            return true;
        }
    }
    false
}

/// `(max_i |Q̄_i| + |ln δ|)/(η - η̄)`, or `3ρ` with a flag when `δ = 0`.
pub fn search_radius(previous: Option<&Configuration>, delta: f64, eta: f64, eta_bar: f64, rho: f64) -> (f64, bool) {
    if delta <= 0.0 {
        return (3.0 * rho, true);
    }
    let reach = previous.map_or(0.0, |c| {
        c.points
            .iter()
            .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    });
    ((reach + delta.ln().abs()) / (eta - eta_bar), false)
}

#[derive(Clone)]
pub struct MaximizeOptions {
    pub k: usize,
    pub rho: f64,
    pub search_radius: f64,
    pub restarts: usize,
    pub seed: u64,
    pub maximizer: Arc<dyn LocalMaximizer>,
    /// Optimum with one spike fewer, used to seed extensions.
    pub previous: Option<Configuration>,
    /// Newton refinement of `c(Q) = 0` after the search.
    pub refine: bool,
}

impl MaximizeOptions {
    pub fn new(k: usize, rho: f64, search_radius: f64) -> Self {
        Self {
            k,
            rho,
            search_radius,
            restarts: 6,
            seed: 0,
            maximizer: Arc::new(PatternSearch),
            previous: None,
            refine: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaximizerRecord {
    pub config: Configuration,
    pub value: f64,
    /// `min |Q_i - Q_j| - ρ`; absent for one spike.
    pub interior_margin: Option<f64>,
    /// Distance from the outermost spike to the search-box faces.
    pub boundary_distance: f64,
    pub multiplier_max: f64,
    pub interior: bool,
    pub supremum_not_attained: bool,
    pub restarts_used: usize,
    pub failed_restarts: usize,
    pub evaluations: usize,
    pub refined: bool,
    pub search_radius: f64,
}

fn better(a: &LocalResult, b: &LocalResult, dim: usize, rho: f64) -> bool {
    let scale = a.value.abs().max(b.value.abs()).max(1.0);
    if (a.value - b.value).abs() <= TIE_TOLERANCE * scale {
        let da = Configuration::from_flat(&a.x, dim, rho).diameter();
        let db = Configuration::from_flat(&b.x, dim, rho).diameter();
        da < db
    } else {
        a.value > b.value
    }
}

fn starts(opts: &MaximizeOptions, dim: usize) -> Vec<Vec<f64>> {
    let k = opts.k;
    let r = opts.search_radius;
    let mut out = Vec::new();
    if let Some(prev) = &opts.previous {
        let base = prev.flat();
        for axis in 0..dim {
            for sign in [1.0, -1.0] {
                let reach = prev
                    .points
                    .iter()
                    .map(|p| sign * p[axis])
                    .fold(f64::NEG_INFINITY, f64::max);
                for gap in [1.5, 3.0] {
                    let mut q = vec![0.0; dim];
                    q[axis] = (reach + gap * opts.rho) * sign;
                    let mut x = base.clone();
                    x.extend(q);
                    out.push(x);
                }
            }
        }
    } else if k == 1 {
        out.push(vec![0.0; dim]);
    } else {
        let mut x = vec![0.0; k * dim];
        for i in 0..k {
            x[i * dim] = (i as f64 - 0.5 * (k - 1) as f64) * 1.5 * opts.rho;
        }
        out.push(x);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        out.push((0..k * dim).map(|_| rng.random_range(-r..=r)).collect());
    }
    out
}

/// Multi-start search for `sup_{Λ_k} M`, deterministic for a given seed.
pub fn maximize_reduced_energy(problem: &Problem, opts: &MaximizeOptions) -> Result<MaximizerRecord> {
    if opts.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let dim = problem.dim();
    let needed = opts.search_radius + crate::ansatz::MIN_BOUNDARY_MARGIN;
    if problem.grid().half_width < needed - 1e-9 {
        return Err(Error::SpikeNearBoundary {
            distance: problem.grid().half_width - opts.search_radius,
            required: crate::ansatz::MIN_BOUNDARY_MARGIN,
        });
    }
    let objective = ReducedObjective::new(problem, opts.rho, opts.search_radius);
    let local = LocalOptions {
        initial_step: opts.rho / 4.0,
        min_step: problem.grid().spacing,
        shrink: 0.5,
        max_evaluations: 4000,
    };
    let starts = starts(opts, dim);
    let results: Vec<Option<LocalResult>> = starts
        .par_iter()
        .map(|s| opts.maximizer.maximize(&objective, s, &local))
        .collect();
    let failed = results.iter().filter(|r| r.is_none()).count();
    let evaluations = results.iter().flatten().map(|r| r.evaluations).sum();
    let mut best: Option<LocalResult> = None;
    for r in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| better(&r, b, dim, opts.rho)) {
            best = Some(r);
        }
    }
    let best = best.ok_or(Error::NoFeasibleRestart)?;
    let mut x = best.x;
    let mut value = best.value;
    let h = problem.grid().spacing;
    let boundary = |x: &[f64]| opts.search_radius - x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let config = objective.configuration(&x);
    let check = validate_configuration(&config.points, opts.rho);
    let interior = check.margin.is_none_or(|m| m > h) && boundary(&x) > h;
    let mut refined = false;
    if opts.refine && interior {
        if let Some((rx, rv)) = refine_stationary(problem, &x, value, opts.rho)? {
            x = rx;
            value = rv;
            refined = true;
        }
    }
    let config = Configuration::from_flat(&x, dim, opts.rho);
    let correction = solve_projected(problem, &config)?;
    let check = validate_configuration(&config.points, opts.rho);
    Ok(MaximizerRecord {
        interior_margin: check.margin,
        boundary_distance: boundary(&x),
        multiplier_max: correction.multiplier_max(),
        interior,
        supremum_not_attained: !interior,
        restarts_used: starts.len(),
        failed_restarts: failed,
        evaluations,
        refined,
        search_radius: opts.search_radius,
        config,
        value,
    })
}

/// Newton on `c(Q) = 0` with a central-difference Jacobian. A step is kept
/// only if it stays feasible, moves less than two cells and does not lower
/// `M`.
fn refine_stationary(problem: &Problem, x0: &[f64], v0: f64, rho: f64) -> Result<Option<(Vec<f64>, f64)>> {
    let dim = problem.dim();
    let h = problem.grid().spacing;
    let eps = 0.5 * h;
    let c_of = |x: &[f64]| -> Result<Vec<f64>> {
        let r = solve_projected(problem, &Configuration::from_flat(x, dim, rho))?;
        Ok(r.multipliers.into_iter().flatten().collect())
    };
    let mut x = x0.to_vec();
    let mut v = v0;
    let mut moved = false;
    for _ in 0..4 {
        let c = c_of(&x)?;
        let n = x.len();
        let mut jac = DMatrix::zeros(n, n);
        for l in 0..n {
            let mut xp = x.clone();
            xp[l] += eps;
            let mut xm = x.clone();
            xm[l] -= eps;
            let (cp, cm) = (c_of(&xp)?, c_of(&xm)?);
            for i in 0..n {
                jac[(i, l)] = (cp[i] - cm[i]) / (2.0 * eps);
            }
        }
        let Some(dx) = jac.lu().solve(&DVector::from_vec(c.clone())) else {
            break;
        };
        if dx.amax() > 2.0 * h || dx.amax() < 1e-9 * h {
            break;
        }
        let y: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a - b).collect();
        let cfg = Configuration::from_flat(&y, dim, rho);
        if !validate_configuration(&cfg.points, rho).valid {
            break;
        }
        let vy = reduced_energy(problem, &cfg)?.value;
        if vy < v - 1e-15 * v.abs() {
            break;
        }
        x = y;
        v = vy;
        moved = true;
    }
    Ok(moved.then_some((x, v)))
}

#[derive(Debug, Clone, Serialize)]
pub struct InteriorCheck {
    pub pass: bool,
    pub margin: Option<f64>,
    pub boundary_distance: f64,
}

/// Interior of `Λ_k` and of the search box, each with one cell to spare.
pub fn interior_check(record: &MaximizerRecord, spacing: f64) -> InteriorCheck {
    InteriorCheck {
        pass: record.interior_margin.is_none_or(|m| m > spacing) && record.boundary_distance > spacing,
        margin: record.interior_margin,
        boundary_distance: record.boundary_distance,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierCheck {
    pub multiplier_max: f64,
    /// `⟨Z_ij, ∂(U + φ)/∂Q_sl⟩` by central differences in `Q`.
    pub gram: Vec<Vec<f64>>,
    pub min_abs_eigenvalue: f64,
    pub pass: bool,
}

/// Multipliers at `config` and the Gram matrix linking them to `∇M`.
pub fn multiplier_check(problem: &Problem, config: &Configuration, tolerance: f64) -> Result<MultiplierCheck> {
    let base = solve_projected(problem, config)?;
    let kernels = problem.kernels(config)?;
    let dim = problem.dim();
    let n = config.len() * dim;
    let eps = 0.5 * problem.grid().spacing;
    let flat = config.flat();
    let mut gram = vec![vec![0.0; n]; n];
    for l in 0..n {
        let mut xp = flat.clone();
        xp[l] += eps;
        let mut xm = flat.clone();
        xm[l] -= eps;
        let up = solve_projected(problem, &Configuration::from_flat(&xp, dim, config.rho))?.solution();
        let um = solve_projected(problem, &Configuration::from_flat(&xm, dim, config.rho))?.solution();
        let du: Vec<f64> = up.iter().zip(&um).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        for (i, z) in kernels.iter().enumerate() {
            gram[i][l] = weighted_dot(&problem.disc.weights, z, &du);
        }
    }
    let g = DMatrix::from_fn(n, n, |i, j| gram[i][j]);
    let min_abs = g
        .clone()
        .eigenvalues()
        .map(|e| e.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())))
        .unwrap_or_else(|| g.singular_values().min());
    let multiplier_max = base.multiplier_max();
    Ok(MultiplierCheck {
        multiplier_max,
        gram,
        min_abs_eigenvalue: min_abs,
        pass: multiplier_max <= tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LedgerEntry {
    pub k: usize,
    pub value: f64,
    /// `C_k - C_{k-1} - I`; absent for `k = 1`.
    pub excess: Option<f64>,
    pub noise_floor: f64,
    pub record: MaximizerRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyLedger {
    pub bump_energy: f64,
    pub entries: Vec<LedgerEntry>,
    pub bump_noise: f64,
    /// Every excess exceeds its noise floor.
    pub strictly_increasing: bool,
    pub supremum_not_attained: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone)]
pub struct LedgerOptions {
    pub k_max: usize,
    pub rho: f64,
    pub eta_bar: f64,
    pub restarts: usize,
    pub seed: u64,
    pub maximizer: Arc<dyn LocalMaximizer>,
    pub refine: bool,
}

impl LedgerOptions {
    pub fn new(k_max: usize, rho: f64, eta_bar: f64) -> Self {
        Self {
            k_max,
            rho,
            eta_bar,
            restarts: 6,
            seed: 0,
            maximizer: Arc::new(PatternSearch),
            refine: false,
        }
    }
}

/// Roundoff bound for one energy evaluation: the summed magnitudes of its
/// parts times a few ulps.
fn summation_bound(problem: &Problem, config: &Configuration) -> Result<f64> {
    let r = reduced_energy(problem, config)?;
    let b = r.breakdown;
    Ok(8.0 * f64::EPSILON * (b.gradient.abs() + b.mass.abs() + b.potential.abs() + b.nonlinear.abs()))
}

/// Spread of `M` at `δ = 0` under whole-grid-step translations, plus the
/// summation bound.
pub fn noise_floor(problem: &Problem, unperturbed: &Problem, config: &Configuration) -> Result<f64> {
    let h = problem.grid().spacing;
    let dim = problem.dim();
    let mut vals = Vec::new();
    for s in [0i64, 1, -2, 5] {
        let mut shift = vec![0.0; dim];
        shift[0] = s as f64 * h;
        let moved = config.translated(&shift);
        if moved.boundary_margin(problem.grid()) < crate::ansatz::MIN_BOUNDARY_MARGIN {
            continue;
        }
        vals.push(reduced_energy(unperturbed, &moved)?.value);
    }
    let spread = vals.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
        - vals.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    Ok(spread.max(0.0) + summation_bound(problem, config)?)
}

/// `C_1, …, C_{k_max}` with extension-seeded searches and noise floors.
pub fn build_ledger(problem: &Problem, opts: &LedgerOptions) -> Result<EnergyLedger> {
    let dim = problem.dim();
    let mut warnings = Vec::new();
    let delta = problem.delta();
    if delta > 0.0 {
        let report = check_hypotheses(problem.weighted_potential().as_ref(), dim, opts.eta_bar);
        if !report.pass() {
            return Err(Error::InvalidConfiguration(format!(
                "potential fails the decay hypotheses: {}",
                report.first_violation.unwrap_or_default()
            )));
        }
        if let Some(w) = delta_regime_warning(delta, opts.rho) {
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    let unperturbed = problem.with_delta(0.0)?;
    let bump_energy = problem.reference_energy()?;
    let single = Configuration::single(dim, opts.rho);
    let bump_noise = noise_floor(&unperturbed, &unperturbed, &single)?;
    let mut entries: Vec<LedgerEntry> = Vec::new();
    let mut previous: Option<Configuration> = None;
    let mut flagged = false;
    for k in 1..=opts.k_max {
        let (radius, capped) = search_radius(previous.as_ref(), delta, problem.norm.eta, opts.eta_bar, opts.rho);
        let radius = radius.min(problem.grid().half_width - crate::ansatz::MIN_BOUNDARY_MARGIN);
        let mut mo = MaximizeOptions::new(k, opts.rho, radius);
        mo.restarts = opts.restarts;
        mo.seed = opts.seed.wrapping_add(k as u64);
        mo.maximizer = opts.maximizer.clone();
        mo.previous = previous.clone();
        mo.refine = opts.refine;
        let record = maximize_reduced_energy(problem, &mo)?;
        flagged |= capped || record.supremum_not_attained;
        let noise = noise_floor(problem, &unperturbed, &record.config)?;
        let excess = entries.last().map(|e| record.value - e.value - bump_energy);
        previous = Some(record.config.clone());
        entries.push(LedgerEntry {
            k,
            value: record.value,
            excess,
            noise_floor: noise,
            record,
        });
    }
    let strictly_increasing = entries.windows(2).all(|w| {
        let floor = w[0].noise_floor + w[1].noise_floor + bump_noise;
        w[1].excess.is_some_and(|e| e > floor)
    });
    Ok(EnergyLedger {
        bump_energy,
        entries,
        bump_noise,
        strictly_increasing,
        supremum_not_attained: flagged,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PolishReport {
    /// Spikes after the stationarity step.
    pub stationary_points: Vec<Vec<f64>>,
    pub residual_before: f64,
    pub residual_after: f64,
    pub iterations: usize,
    pub min_value: f64,
    pub max_value: f64,
    pub local_maxima: Vec<Vec<f64>>,
    /// Largest distance from a spike to its nearest local maximum.
    pub max_offset: f64,
    pub positive: bool,
}

/// Relative height below which local maxima are ignored.
pub const MAXIMUM_THRESHOLD: f64 = 1e-3;

/// Spikes where every multiplier vanishes, by Newton on `c(Q) = 0` with a
/// central-difference Jacobian. Steps are kept only while `max|c|` drops.
pub fn stationary_configuration(problem: &Problem, config: &Configuration) -> Result<Configuration> {
    let dim = problem.dim();
    let h = problem.grid().spacing;
    let eps = 0.5 * h;
    let rho = config.rho;
    let c_of = |x: &[f64]| -> Result<Vec<f64>> {
        let r = solve_projected(problem, &Configuration::from_flat(x, dim, rho))?;
        Ok(r.multipliers.into_iter().flatten().collect())
    };
    let sup = |c: &[f64]| c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut x = config.flat();
    let mut c = c_of(&x)?;
    for _ in 0..6 {
        let n = x.len();
        let mut jac = DMatrix::zeros(n, n);
        for l in 0..n {
            let mut xp = x.clone();
            xp[l] += eps;
            let mut xm = x.clone();
            xm[l] -= eps;
            let (cp, cm) = (c_of(&xp)?, c_of(&xm)?);
            for i in 0..n {
                jac[(i, l)] = (cp[i] - cm[i]) / (2.0 * eps);
            }
        }
        let Some(dx) = jac.lu().solve(&DVector::from_vec(c.clone())) else {
            break;
        };
        if dx.amax() > 2.0 * h {
            break;
        }
        let y: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a - b).collect();
        if !validate_configuration(&Configuration::from_flat(&y, dim, rho).points, rho).valid {
            break;
        }
        let cy = c_of(&y)?;
        if !(sup(&cy) < sup(&c)) {
            break;
        }
        x = y;
        c = cy;
    }
    Ok(Configuration::from_flat(&x, dim, rho))
}

/// Newton on `S(u) = 0` started from `U + φ`. The spikes are first moved to
/// the nearby stationary configuration, where the reduced solution already
/// solves the equation, and unconstrained steps follow while they reduce the
/// residual. Iterates are carried as `(hi, lo)` pairs.
pub fn polish_solution(problem: &Problem, config: &Configuration) -> Result<(Vec<Field>, PolishReport)> {
    let disc = &problem.disc;
    let start = solve_projected(problem, config)?;
    let (hi, lo) = start.solution_extended();
    let before = Discretization::sup_norm(&disc.residual_extended(&hi, &lo, &start.ansatz.exterior));
    let mut stationary = stationary_configuration(problem, config)?;
    let mut sol = solve_projected(problem, &stationary)?;
    let (mut hi, mut lo) = sol.solution_extended();
    let mut r = disc.residual_extended(&hi, &lo, &sol.ansatz.exterior);
    let mut norm = Discretization::sup_norm(&r);
    if !(norm < before) {
        stationary = config.clone();
        sol = start;
        (hi, lo) = sol.solution_extended();
        r = disc.residual_extended(&hi, &lo, &sol.ansatz.exterior);
        norm = before;
    }
    let ext = &sol.ansatz.exterior;
    let mut iterations = 0;
    for _ in 0..problem.newton.max_iterations {
        let lu = disc.jacobian(&hi).factorize()?;
        let mut du: Vec<f64> = r.iter().map(|v| -v).collect();
        lu.solve_in_place(&mut du);
        let (th, tl) = crate::reduction::combine(&hi, &(du, lo.clone()));
        let tr = disc.residual_extended(&th, &tl, ext);
        let tn = Discretization::sup_norm(&tr);
        if !(tn < norm) {
            break;
        }
        iterations += 1;
        let gain = norm / tn;
        hi = th;
        lo = tl;
        r = tr;
        norm = tn;
        if gain < 2.0 {
            break;
        }
    }
    let u: Vec<f64> = hi.iter().zip(&lo).map(|(a, b)| a + b).collect();
    let fields = problem.split(&u);
    let total: Vec<f64> = (0..problem.grid().len())
        .map(|i| fields.iter().map(|f| f.values[i]).sum())
        .collect();
    let maxima = local_maxima(problem.grid(), &total, MAXIMUM_THRESHOLD);
    let max_offset = config
        .points
        .iter()
        .map(|q| {
            maxima
                .iter()
                .map(|m| crate::ansatz::distance(m, q))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let min_value = u.iter().copied().fold(f64::INFINITY, f64::min);
    let max_value = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((
        fields,
        PolishReport {
            stationary_points: stationary.points.clone(),
            residual_before: before,
            residual_after: norm,
            iterations,
            min_value,
            max_value,
            local_maxima: maxima,
            max_offset,
            positive: min_value > 0.0,
        },
    ))
}

/// Nodes strictly above all `3^N - 1` neighbours and above
/// `threshold · max u`.
pub fn local_maxima(grid: &crate::grid::Grid, u: &[f64], threshold: f64) -> Vec<Vec<f64>> {
    let top = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = grid.points_per_axis as i64;
    let dim = grid.dim;
    let mut out = Vec::new();
    let offsets: Vec<[i64; 3]> = (0..3usize.pow(dim as u32))
        .map(|mut t| {
            let mut o = [0i64; 3];
            for a in o.iter_mut().take(dim) {
                *a = (t % 3) as i64 - 1;
                t /= 3;
            }
            o
        })
        .filter(|o| o.iter().any(|&v| v != 0))
        .collect();
    for idx in 0..grid.len() {
        if u[idx] <= threshold * top {
            continue;
        }
        let m = grid.multi_index(idx);
        let is_max = offsets.iter().all(|o| {
            let mut nb = [0usize; 3];
            for a in 0..dim {
                let v = m[a] as i64 + o[a];
                if v < 0 || v >= n {
                    return true;
                }
                nb[a] = v as usize;
            }
            u[grid.flat_index(&nb)] < u[idx]
        });
        if is_max {
            let p = grid.point(idx);
            out.push(p[..dim].to_vec());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::nonlinearity::Nonlinearity;
    use crate::potential::{parse_potential, Zero};
    use crate::profile::{compute_ground_state, GroundState, DEFAULT_ODE_TOL};

    struct Bowl {
        center: Vec<f64>,
        radius: f64,
    }

    impl Objective for Bowl {
        fn value(&self, x: &[f64]) -> Option<f64> {
            Some(-x.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum::<f64>())
        }

        fn project(&self, x: &mut [f64]) -> bool {
            x.iter_mut().for_each(|v| *v = v.clamp(-self.radius, self.radius));
            true
        }
    }

    fn local() -> LocalOptions {
        LocalOptions {
            initial_step: 1.0,
            min_step: 1e-6,
            shrink: 0.5,
            max_evaluations: 5000,
        }
    }

    fn cubic() -> Arc<GroundState> {
        Arc::new(compute_ground_state(Nonlinearity::cubic(), 1, DEFAULT_ODE_TOL).unwrap())
    }

    #[test]
    fn local_maximizers_find_the_top_of_a_bowl() {
        let bowl = Bowl {
            center: vec![0.3, -1.7],
            radius: 5.0,
        };
        for name in maximizer_registry().names() {
            let m = maximizer_registry().create(name).unwrap();
            let r = m.maximize(&bowl, &[4.0, 4.0], &local()).unwrap();
            assert!((r.x[0] - 0.3).abs() < 1e-4 && (r.x[1] + 1.7).abs() < 1e-4, "{name}: {:?}", r.x);
        }
    }

    #[test]
    fn maximizers_respect_the_box() {
        let bowl = Bowl {
            center: vec![9.0],
            radius: 2.0,
        };
        let r = PatternSearch.maximize(&bowl, &[0.0], &local()).unwrap();
        assert_eq!(r.x, vec![2.0]);
    }

    #[test]
    fn unknown_maximizer_is_rejected() {
        assert!(maximizer_registry().create("simulated-annealing").is_err());
    }

    #[test]
    fn projection_separates_and_clamps() {
        let mut x = vec![0.0, 0.0, 40.0];
        assert!(project_feasible(&mut x, 1, 10.0, 30.0));
        assert!((x[1] - x[0]).abs() >= 10.0);
        assert!(x.iter().all(|v| v.abs() <= 30.0));
    }

    #[test]
    fn search_radius_follows_the_log_of_delta() {
        assert_eq!(search_radius(None, 0.0, 0.75, 0.5, 10.0), (30.0, true));
        let prev = Configuration::new(vec![vec![-3.0]], 10.0).unwrap();
        let (r, flagged) = search_radius(Some(&prev), 1e-4, 0.75, 0.5, 10.0);
        assert!(!flagged);
        assert!((r - (3.0 + 1e-4f64.ln().abs()) / 0.25).abs() < 1e-12);
    }

    #[test]
    fn local_maxima_finds_separated_peaks() {
        let g = Grid::new(1, 20.0, 0.1).unwrap();
        let u = g.sample(|x| (-(x[0] + 7.0).powi(2)).exp() + 0.5 * (-(x[0] - 6.0).powi(2)).exp());
        let m = local_maxima(&g, &u.values, MAXIMUM_THRESHOLD);
        assert_eq!(m.len(), 2);
        assert!((m[0][0] + 7.0).abs() < 1e-9 && (m[1][0] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn reduced_objective_snaps_to_the_sub_lattice() {
        let p = Problem::scalar(Grid::new(1, 40.0, 0.1).unwrap(), cubic(), Arc::new(Zero), 0.0).unwrap();
        let obj = ReducedObjective::new(&p, 10.0, 20.0);
        let mut x = vec![0.123456];
        obj.snap(&mut x);
        let q = 0.1 / LATTICE;
        assert!(((x[0] / q).round() * q - x[0]).abs() < 1e-15);
        assert!((x[0] - 0.123456).abs() <= 0.5 * q);
    }

    #[test]
    fn single_spike_settles_at_the_potential_peak() {
        let v = parse_potential("algebraic:1").unwrap();
        let p = Problem::scalar(Grid::new(1, 40.0, 0.1).unwrap(), cubic(), v, 1e-3).unwrap();
        let mut opts = MaximizeOptions::new(1, 10.0, 15.0);
        opts.restarts = 2;
        let rec = maximize_reduced_energy(&p, &opts).unwrap();
        assert!(rec.config.points[0][0].abs() <= 0.1);
        assert!(rec.value > p.reference_energy().unwrap());
        assert!(interior_check(&rec, 0.1).pass);
    }

    #[test]
    fn search_is_deterministic_for_a_seed() {
        let v = parse_potential("algebraic:1").unwrap();
        let p = Problem::scalar(Grid::new(1, 40.0, 0.1).unwrap(), cubic(), v, 1e-3).unwrap();
        let mut opts = MaximizeOptions::new(1, 10.0, 15.0);
        opts.restarts = 2;
        opts.seed = 11;
        let a = maximize_reduced_energy(&p, &opts).unwrap();
        let b = maximize_reduced_energy(&p, &opts).unwrap();
        assert_eq!(a.config.points, b.config.points);
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn without_potential_the_landscape_ignores_the_preset() {
        let g = Grid::new(1, 40.0, 0.1).unwrap();
        let c = Configuration::new(vec![vec![-5.2], vec![5.0]], 10.0).unwrap();
        let m = |preset: &str| {
            let p = Problem::scalar(g, cubic(), parse_potential(preset).unwrap(), 0.0).unwrap();
            reduced_energy(&p, &c).unwrap().value
        };
        assert_eq!(m("algebraic:1"), m("sub_exponential:0.3"));
    }

    #[test]
    fn zero_spikes_are_rejected() {
        let p = Problem::scalar(Grid::new(1, 40.0, 0.1).unwrap(), cubic(), Arc::new(Zero), 0.0).unwrap();
        assert!(maximize_reduced_energy(&p, &MaximizeOptions::new(0, 10.0, 15.0)).is_err());
    }

    #[test]
    fn stationary_configuration_is_fixed_by_symmetry() {
        let v = parse_potential("algebraic:1").unwrap();
        let p = Problem::scalar(Grid::new(1, 40.0, 0.1).unwrap(), cubic(), v, 1e-3).unwrap();
        let c = Configuration::new(vec![vec![0.0]], 10.0).unwrap();
        assert_eq!(stationary_configuration(&p, &c).unwrap().points[0][0].abs(), 0.0);
    }
}
