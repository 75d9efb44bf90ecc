use std::io::Write;
use std::sync::Arc;

use multibump::ansatz::{WeightedNormParams, MIN_BOUNDARY_MARGIN};
use multibump::energy::{predicted_energy, reduced_energy, two_bump_interaction_study};
use multibump::linalg::solver_registry;
use multibump::maximize::{
    build_ledger, maximize_reduced_energy, maximizer_registry, noise_floor, polish_solution, search_radius,
    EnergyLedger, LedgerOptions, MaximizeOptions, MaximizerRecord, PolishReport, LATTICE,
};
use multibump::model::{model_registry, ModelArgs};
use multibump::nonlinearity::Nonlinearity;
use multibump::potential::CHECK_STEP;
use multibump::problem::Problem;
use multibump::profile::{
    compute_ground_state, decay_fit, interaction_constant, interaction_grid, linearized_spectrum, GroundState,
    SPECTRUM_STEP,
};
use multibump::reduction::solve_projected;
use multibump::system::{beta_star_scan, coupled_problem, coupled_spectrum, sign_radii, PairField};
use multibump::verify::{run_criterion, Context};

use crate::config::{Command, RunConfig};
use crate::error::CliError;
use crate::output::{cell, roundoff, Artifacts, Summary, Table};

const BETA_TOL: f64 = 1e-4;

pub fn run(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    match cfg.command {
        Command::GroundState => ground_state(cfg),
        Command::Spectrum => spectrum(cfg),
        Command::Reduce => reduce(cfg),
        Command::Energy => energy(cfg),
        Command::Maximize => maximize(cfg),
        Command::Ledger => ledger(cfg),
        Command::System => system(cfg),
        Command::Verify => verify(cfg),
    }
}

fn profile(cfg: &RunConfig, nl: Nonlinearity) -> Result<Arc<GroundState>, CliError> {
    Ok(Arc::new(compute_ground_state(nl, cfg.dim, cfg.ode_tol)?))
}

fn scalar_problem(cfg: &RunConfig, gs: Arc<GroundState>) -> Result<Problem, CliError> {
    let args = ModelArgs {
        nonlinearity: cfg.nonlinearity,
        ..ModelArgs::default()
    };
    let model = model_registry().build("scalar", &args)?;
    configure(cfg, Problem::new(cfg.grid()?, gs, model, vec![cfg.potential()?], cfg.delta)?)
}

fn configure(cfg: &RunConfig, p: Problem) -> Result<Problem, CliError> {
    Ok(p.with_solver(solver_registry().create(&cfg.solver)?)
        .with_ansatz(cfg.ansatz)
        .with_norm(WeightedNormParams { eta: cfg.eta }))
}

fn ground_state(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let gs = profile(cfg, cfg.nonlinearity)?;
    let gamma1 = interaction_constant(&gs)?;
    let spectrum = linearized_spectrum(&gs, 3)?;
    let (amplitude, rate) = decay_fit(&gs)?;
    let step2 = gs.table_step * gs.table_step;
    let mut s = Summary::new();
    s.count("dim", gs.dim)
        .num("w0", gs.center_value, cfg.ode_tol)
        .num("I", gs.energy, step2.max(cfg.ode_tol))
        .num("lambda1", spectrum.lambda1, SPECTRUM_STEP * SPECTRUM_STEP)
        .num("gamma1", gamma1, interaction_grid(gs.dim).1.powi(2) * gamma1)
        .num("A_N", amplitude, 1e-3 * amplitude)
        .num("decay_rate", rate, 0.02)
        .count("kernel_dim", spectrum.kernel_dim)
        .num("ode_residual", gs.ode_residual, cfg.ode_tol);
    let mut table = Table::new("profile", &["r", "w", "dw"]);
    for (r, w, dw) in gs.table() {
        table.row(vec![cell(r), cell(w), cell(dw)]);
    }
    let mut a = Artifacts::new("ground-state", s);
    a.tables.push(table);
    Ok(a)
}

fn spectrum(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let gs = profile(cfg, cfg.nonlinearity)?;
    let report = linearized_spectrum(&gs, cfg.modes)?;
    let tol = SPECTRUM_STEP * SPECTRUM_STEP;
    let mut table = Table::new("spectrum", &["sector", "multiplicity", "eigenvalue"]);
    let sectors = report
        .sectors
        .iter()
        .map(|sec| {
            for e in &sec.eigenvalues {
                table.row(vec![sec.sector.index.to_string(), sec.sector.multiplicity.to_string(), cell(*e)]);
            }
            let mut row = Summary::new();
            row.count("index", sec.sector.index)
                .count("multiplicity", sec.sector.multiplicity)
                .nums("eigenvalues", &sec.eigenvalues, tol)
                .count("kernel_count", sec.kernel_count)
                .count("positive_count", sec.positive_count);
            row
        })
        .collect();
    let mut s = Summary::new();
    s.num("lambda1", report.lambda1, tol)
        .nums("eigenvalues", &report.eigenvalues, tol)
        .count("kernel_dim", report.kernel_dim)
        .count("positive_count", report.positive_count)
        .children("sectors", sectors);
    let mut phi0 = Table::new("phi0", &["r", "phi0"]);
    for (i, v) in report.phi0.iter().enumerate() {
        phi0.row(vec![cell(i as f64 * report.phi0_step), cell(*v)]);
    }
    let mut a = Artifacts::new("spectrum", s);
    a.tables.push(table);
    a.tables.push(phi0);
    Ok(a)
}

fn reduce(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let p = scalar_problem(cfg, profile(cfg, cfg.nonlinearity)?)?;
    let config = cfg.configuration();
    let r = solve_projected(&p, &config)?;
    let tol = p.newton.tolerance;
    let mut s = Summary::new();
    s.points("points", &config.points, 0.0)
        .num("rho", config.rho, 0.0)
        .points("multipliers", &r.multipliers, tol)
        .num("star_norm", r.star_norm, tol)
        .num("h1_norm", r.h1_norm, tol)
        .num("final_residual", r.final_residual, tol)
        .num("orthogonality", r.orthogonality, tol)
        .count("newton_iterations", r.newton_iterations);
    let mut history = Table::new("residual_history", &["iteration", "residual"]);
    for (i, v) in r.residual_history.iter().enumerate() {
        history.row(vec![i.to_string(), cell(*v)]);
    }
    let mut a = Artifacts::new("reduce", s);
    a.tables.push(history);
    if cfg.dump_fields {
        let names = component_names(p.nc());
        for ((name, ans), phi) in names.iter().zip(p.split(&r.ansatz.values)).zip(p.split(&r.phi)) {
            a.fields.push((format!("ansatz_{name}"), ans));
            a.fields.push((format!("phi_{name}"), phi));
        }
        for (name, u) in names.iter().zip(p.split(&r.solution())) {
            a.fields.push((name.to_string(), u));
        }
    }
    Ok(a)
}

fn component_names(nc: usize) -> Vec<&'static str> {
    ["u", "v"].into_iter().take(nc).collect()
}

fn energy(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let p = scalar_problem(cfg, profile(cfg, cfg.nonlinearity)?)?;
    let config = cfg.configuration();
    let m = reduced_energy(&p, &config)?;
    let unperturbed = p.with_delta(0.0)?;
    let noise = noise_floor(&p, &unperturbed, &config)?;
    let predicted = predicted_energy(&p, &config)?;
    let b = m.breakdown;
    let gap = (m.value - predicted.value).abs();
    let mut breakdown = Summary::new();
    breakdown
        .num("gradient", b.gradient, roundoff(b.gradient))
        .num("mass", b.mass, roundoff(b.mass))
        .num("potential", b.potential, roundoff(b.potential))
        .num("nonlinear", b.nonlinear, roundoff(b.nonlinear))
        .num("total", b.total, noise);
    let mut pred = Summary::new();
    pred.num("value", predicted.value, gap)
        .num("bump_term", predicted.bump_term, roundoff(predicted.bump_term))
        .num("potential_term", predicted.potential_term, roundoff(predicted.potential_term))
        .num("interaction_term", predicted.interaction_term, gap);
    let mut s = Summary::new();
    s.points("points", &config.points, 0.0)
        .num("M", m.value, noise)
        .num("I_h", p.reference_energy()?, roundoff(p.gs.energy))
        .child("breakdown", breakdown)
        .child("predicted", pred);
    let mut a = Artifacts::new("energy", s);
    if !cfg.distances.is_empty() {
        let rows = two_bump_interaction_study(&p, &cfg.distances)?;
        let mut t = Table::new("interaction", &["d", "interaction", "predicted", "ratio"]);
        let mut out = Vec::new();
        for r in &rows {
            t.row(vec![cell(r.d), cell(r.interaction), cell(r.predicted), cell(r.ratio)]);
            let mut row = Summary::new();
            let err = roundoff(p.gs.energy);
            row.num("d", r.d, 0.0)
                .num("interaction", r.interaction, err)
                .num("predicted", r.predicted, roundoff(r.predicted))
                .num("ratio", r.ratio, (err / r.predicted).abs());
            out.push(row);
        }
        a.summary.children("interaction_study", out);
        a.tables.push(t);
    }
    Ok(a)
}

fn record_summary(rec: &MaximizerRecord, noise: f64, spacing: f64) -> Summary {
    let mut s = Summary::new();
    s.points("points", &rec.config.points, spacing / LATTICE)
        .num("value", rec.value, noise)
        .opt("interior_margin", rec.interior_margin, spacing)
        .num("boundary_distance", rec.boundary_distance, spacing)
        .num("multiplier_max", rec.multiplier_max, 1e-10)
        .flag("interior", rec.interior)
        .flag("supremum_not_attained", rec.supremum_not_attained)
        .count("restarts_used", rec.restarts_used)
        .count("failed_restarts", rec.failed_restarts)
        .count("evaluations", rec.evaluations)
        .flag("refined", rec.refined)
        .num("search_radius", rec.search_radius, 0.0);
    s
}

fn maximize(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let p = scalar_problem(cfg, profile(cfg, cfg.nonlinearity)?)?;
    let (default_radius, capped) = search_radius(None, cfg.delta, cfg.eta, cfg.eta_bar, cfg.rho);
    let limit = cfg.half_width - MIN_BOUNDARY_MARGIN;
    let radius = cfg.search_radius.unwrap_or(default_radius.min(limit));
    let mut opts = MaximizeOptions::new(cfg.k, cfg.rho, radius);
    opts.restarts = cfg.restarts;
    opts.seed = cfg.seed;
    opts.maximizer = maximizer_registry().create(&cfg.optimizer)?;
    opts.refine = cfg.refine;
    let rec = maximize_reduced_energy(&p, &opts)?;
    let noise = noise_floor(&p, &p.with_delta(0.0)?, &rec.config)?;
    let mut s = record_summary(&rec, noise, cfg.spacing);
    s.flag("radius_capped", capped);
    let mut a = Artifacts::new("maximize", s);
    if cfg.dump_fields {
        let r = solve_projected(&p, &rec.config)?;
        for (name, u) in component_names(p.nc()).iter().zip(p.split(&r.solution())) {
            a.fields.push((name.to_string(), u));
        }
    }
    Ok(a)
}

fn ledger_artifacts(command: &'static str, ledger: &EnergyLedger, spacing: f64) -> Artifacts {
    let mut t = Table::new("ledger", &["k", "C_k", "excess", "interior_margin", "multiplier_max"]);
    let opt = |v: Option<f64>| v.map(cell).unwrap_or_default();
    let mut prev_noise = 0.0;
    let rows = ledger
        .entries
        .iter()
        .map(|e| {
            t.row(vec![
                e.k.to_string(),
                cell(e.value),
                opt(e.excess),
                opt(e.record.interior_margin),
                cell(e.record.multiplier_max),
            ]);
            let mut row = record_summary(&e.record, e.noise_floor, spacing);
            row.count("k", e.k)
                .opt("excess", e.excess, prev_noise + e.noise_floor + ledger.bump_noise)
                .num("noise_floor", e.noise_floor, e.noise_floor);
            prev_noise = e.noise_floor;
            row
        })
        .collect();
    let mut s = Summary::new();
    s.num("bump_energy", ledger.bump_energy, ledger.bump_noise)
        .children("entries", rows)
        .flag("strictly_increasing", ledger.strictly_increasing)
        .flag("supremum_not_attained", ledger.supremum_not_attained)
        .texts("warnings", &ledger.warnings);
    let mut a = Artifacts::new(command, s);
    a.tables.push(t);
    a
}

fn polish_summary(r: &PolishReport, tol: f64, spacing: f64) -> Summary {
    let mut s = Summary::new();
    s.points("stationary_points", &r.stationary_points, spacing / LATTICE)
        .num("residual_before", r.residual_before, tol)
        .num("residual_after", r.residual_after, tol)
        .count("iterations", r.iterations)
        .num("min_value", r.min_value, r.residual_after)
        .num("max_value", r.max_value, r.residual_after)
        .points("local_maxima", &r.local_maxima, 0.0)
        .num("max_offset", r.max_offset, spacing)
        .flag("positive", r.positive);
    s
}

fn ledger_options(cfg: &RunConfig) -> Result<LedgerOptions, CliError> {
    let mut opts = LedgerOptions::new(cfg.k_max, cfg.rho, cfg.eta_bar);
    opts.restarts = cfg.restarts;
    opts.seed = cfg.seed;
    opts.maximizer = maximizer_registry().create(&cfg.optimizer)?;
    opts.refine = cfg.refine;
    Ok(opts)
}

fn ledger(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let p = scalar_problem(cfg, profile(cfg, cfg.nonlinearity)?)?;
    let ledger = build_ledger(&p, &ledger_options(cfg)?)?;
    let mut a = ledger_artifacts("ledger", &ledger, cfg.spacing);
    if cfg.polish {
        let top = ledger.entries.last().expect("k_max is at least one");
        let (fields, report) = polish_solution(&p, &top.record.config)?;
        a.summary
            .child("polish", polish_summary(&report, p.newton.tolerance, cfg.spacing));
        if cfg.dump_fields {
            for (name, u) in component_names(p.nc()).iter().zip(fields) {
                a.fields.push((name.to_string(), u));
            }
        }
    }
    Ok(a)
}

fn system(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let params = cfg.coupling()?;
    let mut s = Summary::new();
    let err = roundoff(1.0);
    s.num("mu1", params.mu1, 0.0)
        .num("mu2", params.mu2, 0.0)
        .num("beta", params.beta, 0.0)
        .num("alpha", params.alpha, err)
        .num("gamma", params.gamma, err)
        .num("A", params.energy_factor(), err)
        .flag("admissible", params.admissible);
    if let Some(r) = &params.reason {
        s.text("reason", r.clone());
    }
    let gs = profile(cfg, Nonlinearity::cubic())?;
    let tol = SPECTRUM_STEP * SPECTRUM_STEP;
    if params.amplitudes_defined() {
        let coupled = coupled_spectrum(&params, &gs, cfg.modes)?;
        let branches = coupled
            .branches
            .iter()
            .map(|b| {
                let mut row = Summary::new();
                row.num("kappa", b.kappa, err)
                    .nums("direction", &b.direction, err)
                    .nums("eigenvalues", &b.eigenvalues, tol)
                    .count("positive_count", b.positive_count)
                    .count("kernel_dim", b.kernel_dim);
                row
            })
            .collect();
        let mut sp = Summary::new();
        sp.nums("eigenvalues", &coupled.eigenvalues, tol)
            .count("positive_count", coupled.positive_count)
            .count("kernel_dim", coupled.kernel_dim)
            .flag("nondegenerate", coupled.nondegenerate)
            .children("branches", branches);
        s.child("spectrum", sp);
    }
    let scan = beta_star_scan(params.mu1, params.mu2, &gs, cfg.beta_steps, BETA_TOL)?;
    let mut bs = Summary::new();
    bs.num("beta_star", scan.beta_star, BETA_TOL)
        .count("count_near_zero", scan.count_near_zero);
    match scan.count_beyond {
        Some(c) => bs.count("count_beyond", c),
        None => bs.text("count_beyond", "none"),
    };
    s.child("beta_star_scan", bs);
    let mut t = Table::new("beta_scan", &["beta", "nonnegative_count"]);
    for (b, c) in &scan.samples {
        t.row(vec![cell(*b), c.to_string()]);
    }
    let Some((pa, pb)) = cfg.pair_potentials()? else {
        let mut a = Artifacts::new("system", s);
        a.tables.push(t);
        return Ok(a);
    };
    let [ra, rb] = sign_radii(pa.as_ref(), pb.as_ref(), cfg.dim)?;
    s.num("nonnegative_from_a", ra, CHECK_STEP).num("nonnegative_from_b", rb, CHECK_STEP);
    let p = configure(cfg, coupled_problem(cfg.grid()?, gs, &params, pa, pb, cfg.delta)?)?;
    let ledger = build_ledger(&p, &ledger_options(cfg)?)?;
    let mut a = ledger_artifacts("system", &ledger, cfg.spacing);
    a.summary.merge(s);
    a.tables.push(t);
    if cfg.polish {
        let top = ledger.entries.last().expect("k_max is at least one");
        let (fields, report) = polish_solution(&p, &top.record.config)?;
        let pair = PairField::new(fields[0].clone(), fields[1].clone())?;
        let mut ps = polish_summary(&report, p.newton.tolerance, cfg.spacing);
        ps.num("asymmetry", pair.asymmetry(), report.residual_after);
        a.summary.child("polish", ps);
        if cfg.dump_fields {
            a.fields.push(("u".into(), pair.u));
            a.fields.push(("v".into(), pair.v));
        }
    }
    Ok(a)
}

fn verify(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let mut ctx = Context::new(cfg.seed)?;
    let ids = cfg.suite.criteria();
    let mut rows = Vec::new();
    let mut t = Table::new("verify", &["criterion", "title", "pass", "measurement", "value", "bound"]);
    let mut failed = 0;
    let stdout = std::io::stdout();
    for id in &ids {
        let o = run_criterion(*id, &mut ctx);
        writeln!(stdout.lock(), "{o}")?;
        failed += usize::from(!o.pass);
        let mut row = Summary::new();
        row.count("id", o.id as usize).text("title", o.title).flag("pass", o.pass);
        let mut ms = Vec::new();
        for m in o.measurements.iter().filter(|m| m.name != "seconds") {
            t.row(vec![
                o.id.to_string(),
                o.title.into(),
                m.pass.to_string(),
                m.name.clone(),
                cell(m.value),
                cell(m.tol),
            ]);
            let mut ms_row = Summary::new();
            ms_row.text("name", m.name.clone()).num("value", m.value, m.tol).flag("pass", m.pass);
            ms.push(ms_row);
        }
        row.children("measurements", ms);
        if let Some(n) = &o.note {
            row.text("note", n.clone());
        }
        rows.push(row);
    }
    writeln!(stdout.lock(), "{} of {} criteria passed", ids.len() - failed, ids.len())?;
    let mut s = Summary::new();
    s.text("suite", cfg.suite.to_string())
        .count("criteria", ids.len())
        .count("failed", failed)
        .children("results", rows);
    let mut a = Artifacts::new("verify", s);
    a.tables.push(t);
    Ok(a)
}
