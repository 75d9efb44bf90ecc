//! Run configuration: a flat `key = value` file overlaid by command-line
//! flags, parsed into typed settings and validated before any work starts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use multibump::ansatz::{validate_configuration, Configuration, WeightedNormParams};
use multibump::grid::Grid;
use multibump::linalg::solver_registry;
use multibump::maximize::maximizer_registry;
use multibump::nonlinearity::Nonlinearity;
use multibump::potential::{parse_potential, Potential};
use multibump::problem::AnsatzKind;
use multibump::system::{synchronized_amplitudes, CouplingParams};
use multibump::verify::Suite;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GroundState,
    Spectrum,
    Reduce,
    Energy,
    Maximize,
    Ledger,
    System,
    Verify,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::GroundState,
        Command::Spectrum,
        Command::Reduce,
        Command::Energy,
        Command::Maximize,
        Command::Ledger,
        Command::System,
        Command::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GroundState => "ground-state",
            Command::Spectrum => "spectrum",
            Command::Reduce => "reduce",
            Command::Energy => "energy",
            Command::Maximize => "maximize",
            Command::Ledger => "ledger",
            Command::System => "system",
            Command::Verify => "verify",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::GroundState => "Compute the radial ground state and its constants",
            Command::Spectrum => "Spectrum of the linearized operator by angular sector",
            Command::Reduce => "Solve the projected problem for a spike configuration",
            Command::Energy => "Reduced energy, its expansion, and two-spike studies",
            Command::Maximize => "Maximize the reduced energy over k-spike configurations",
            Command::Ledger => "Build the energy ledger C_1, ..., C_kmax",
            Command::System => "Synchronized spikes for the two-component system",
            Command::Verify => "Run the verification suite",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Keys the subcommand reads, beyond the ones every subcommand takes.
    pub fn keys(self) -> &'static [&'static str] {
        const PROFILE: &[&str] = &["dim", "p", "q", "a", "ode_tol"];
        const REDUCE: &[&str] = &[
            "dim", "p", "q", "a", "ode_tol", "potential", "delta", "rho", "eta", "half_width", "spacing", "solver",
            "ansatz", "spikes", "dump_fields",
        ];
        const ENERGY: &[&str] = &[
            "dim", "p", "q", "a", "ode_tol", "potential", "delta", "rho", "eta", "half_width", "spacing", "solver",
            "ansatz", "spikes", "distances",
        ];
        const MAXIMIZE: &[&str] = &[
            "dim", "p", "q", "a", "ode_tol", "potential", "delta", "rho", "eta", "eta_bar", "half_width", "spacing",
            "solver", "ansatz", "k", "restarts", "optimizer", "search_radius", "refine", "dump_fields",
        ];
        const LEDGER: &[&str] = &[
            "dim", "p", "q", "a", "ode_tol", "potential", "delta", "rho", "eta", "eta_bar", "half_width", "spacing",
            "solver", "ansatz", "k_max", "restarts", "optimizer", "refine", "polish", "dump_fields",
        ];
        const SYSTEM: &[&str] = &[
            "dim", "mu1", "mu2", "beta", "potential_a", "potential_b", "delta", "rho", "eta", "eta_bar",
            "half_width", "spacing", "solver", "k_max", "restarts", "optimizer", "modes", "beta_steps", "polish",
            "dump_fields",
        ];
        match self {
            Command::GroundState => PROFILE,
            Command::Spectrum => &["dim", "p", "q", "a", "ode_tol", "modes"],
            Command::Reduce => REDUCE,
            Command::Energy => ENERGY,
            Command::Maximize => MAXIMIZE,
            Command::Ledger => LEDGER,
            Command::System => SYSTEM,
            Command::Verify => &["suite"],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub struct Key {
    pub name: &'static str,
    pub help: &'static str,
    /// Presence-only flag.
    pub switch: bool,
}

const fn key(name: &'static str, help: &'static str) -> Key {
    Key { name, help, switch: false }
}

const fn switch(name: &'static str, help: &'static str) -> Key {
    Key { name, help, switch: true }
}

/// Every recognised key. Flags use the same names with dashes.
pub const KEYS: &[Key] = &[
    key("out", "Directory for summary.json, tables/ and fields/"),
    key("jobs", "Worker threads (default: all cores)"),
    key("seed", "Seed for restart sampling"),
    key("dim", "Spatial dimension (1, 2 or 3)"),
    key("p", "Exponent of f(t) = t^p - a t^q"),
    key("q", "Exponent of the subtracted term"),
    key("a", "Coefficient of the subtracted term"),
    key("ode_tol", "Shooting tolerance for the ground state"),
    key("modes", "Eigenvalues reported per sector"),
    key("potential", "Potential preset kind[:p1,p2,...]"),
    key("delta", "Potential strength"),
    key("rho", "Minimum spike separation"),
    key("eta", "Exponent of the weighted norm"),
    key("eta_bar", "Decay rate in the slow-decay hypothesis"),
    key("half_width", "Half width L of the box [-L, L]^N"),
    key("spacing", "Grid step h"),
    key("solver", "Bordered linear solver"),
    key("ansatz", "Ansatz kind: grid-consistent or continuum"),
    key("spikes", "Spike centres as JSON ([[x],[y]] or {\"points\":..,\"rho\":..}) or a path to such a file"),
    key("distances", "Comma-separated separations for the interaction study"),
    key("k", "Number of spikes"),
    key("k_max", "Largest k in the ledger"),
    key("restarts", "Random restarts per search"),
    key("optimizer", "Local maximizer"),
    key("search_radius", "Half width of the search box (default from delta)"),
    key("mu1", "Self-interaction of the first component"),
    key("mu2", "Self-interaction of the second component"),
    key("beta", "Coupling constant"),
    key("potential_a", "Potential acting on the first component"),
    key("potential_b", "Potential acting on the second component"),
    key("beta_steps", "Samples in the beta* scan"),
    key("suite", "Verification suite: scalar-1d, system-1d or all"),
    switch("refine", "Newton refinement of the maximizer"),
    switch("polish", "Polish the top ledger entry into a full solution"),
    switch("dump_fields", "Write solution fields to fields/"),
];

pub const COMMON: &[&str] = &["out", "jobs", "seed"];

pub fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected key = value", n + 1)));
        };
        let k = normalize(k);
        if lookup(&k).is_none() {
            return Err(CliError::Config(format!("line {}: unknown key '{k}'", n + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

pub type PotentialPair = (Arc<dyn Potential>, Arc<dyn Potential>);

/// Settings for one run, with every default resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: u64,
    pub dim: usize,
    pub nonlinearity: Nonlinearity,
    pub ode_tol: f64,
    pub modes: usize,
    pub potential: Option<String>,
    pub delta: f64,
    pub rho: f64,
    pub eta: f64,
    pub eta_bar: f64,
    pub half_width: f64,
    pub spacing: f64,
    pub solver: String,
    pub ansatz: AnsatzKind,
    pub spikes: Option<Configuration>,
    pub distances: Vec<f64>,
    pub k: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub optimizer: String,
    pub search_radius: Option<f64>,
    pub mu1: f64,
    pub mu2: f64,
    pub beta: f64,
    pub potential_a: Option<String>,
    pub potential_b: Option<String>,
    pub beta_steps: usize,
    pub suite: Suite,
    pub refine: bool,
    pub polish: bool,
    pub dump_fields: bool,
}

struct Values<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Values<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::Config(format!("invalid value '{s}' for {}", key.replace('_', "-"))))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        self.get(key, false)
    }
}

impl RunConfig {
    /// Builds the configuration from file values overlaid by flag values.
    pub fn resolve(
        command: Command,
        file: &BTreeMap<String, String>,
        flags: &BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        let mut map: BTreeMap<String, String> = file
            .iter()
            .filter(|(k, _)| COMMON.contains(&k.as_str()) || command.keys().contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        map.extend(flags.iter().map(|(k, v)| (normalize(k), v.clone())));
        let v = Values { map: &map };
        let dim: usize = v.get("dim", 1)?;
        let heavy = matches!(command, Command::Ledger | Command::System);
        let default_width = if heavy { 100.0 } else { 40.0 };
        let default_spacing = match dim {
            1 => 0.05,
            2 => 0.2,
            _ => 0.25,
        };
        let p: f64 = v.get("p", 3.0)?;
        let a: f64 = v.get("a", 0.0)?;
        let nonlinearity = if a == 0.0 {
            Nonlinearity::power(p)
        } else {
            Nonlinearity::with_subtracted(p, v.get("q", 2.0)?, a)
        };
        let rho: f64 = v.get("rho", 10.0)?;
        let spikes = match v.raw("spikes") {
            Some(s) => Some(parse_spikes(s, dim, rho)?),
            None => None,
        };
        let suite: Suite = v
            .get::<String>("suite", "scalar-1d".into())?
            .parse()
            .map_err(|e: multibump::Error| CliError::Config(e.to_string()))?;
        let ansatz = match v.get::<String>("ansatz", "grid-consistent".into())?.as_str() {
            "grid-consistent" | "grid_consistent" => AnsatzKind::GridConsistent,
            "continuum" => AnsatzKind::Continuum,
            other => {
                return Err(CliError::Config(format!(
                    "unknown ansatz '{other}' (available: grid-consistent, continuum)"
                )))
            }
        };
        let distances = match v.raw("distances") {
            None => Vec::new(),
            Some(s) => s
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Config(format!("invalid distance '{t}'")))
                })
                .collect::<Result<_, _>>()?,
        };
        let cfg = Self {
            command,
            out: v.opt::<String>("out")?.map(PathBuf::from),
            jobs: v.opt("jobs")?,
            seed: v.get("seed", 0)?,
            dim,
            nonlinearity,
            ode_tol: v.get("ode_tol", multibump::profile::DEFAULT_ODE_TOL)?,
            modes: v.get("modes", 3)?,
            potential: v.opt("potential")?,
            delta: v.get("delta", 0.0)?,
            rho,
            eta: v.get("eta", WeightedNormParams::default().eta)?,
            eta_bar: v.get("eta_bar", 0.5)?,
            half_width: v.get("half_width", default_width)?,
            spacing: v.get("spacing", default_spacing)?,
            solver: v.get("solver", "banded".to_string())?,
            ansatz,
            spikes,
            distances,
            k: v.get("k", 1)?,
            k_max: v.get("k_max", 2)?,
            restarts: v.get("restarts", 6)?,
            optimizer: v.get("optimizer", "pattern".to_string())?,
            search_radius: v.opt("search_radius")?,
            mu1: v.get("mu1", 1.0)?,
            mu2: v.get("mu2", 1.0)?,
            beta: v.get("beta", 3.0)?,
            potential_a: v.opt("potential_a")?,
            potential_b: v.opt("potential_b")?,
            beta_steps: v.get("beta_steps", 40)?,
            suite,
            refine: v.flag("refine")?,
            polish: v.flag("polish")?,
            dump_fields: v.flag("dump_fields")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let uses = |k: &str| self.command.keys().contains(&k);
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        if self.command == Command::Verify {
            return Ok(());
        }
        if uses("p") {
            self.nonlinearity.validate(self.dim).map_err(config)?;
            if !(self.ode_tol > 0.0 && self.ode_tol < 1e-2) {
                return bad(format!("ode-tol must lie in (0, 1e-2) (got {})", self.ode_tol));
            }
        } else if !(1..=3).contains(&self.dim) {
            return bad(format!("dim must be 1, 2 or 3 (got {})", self.dim));
        }
        if uses("modes") && self.modes == 0 {
            return bad("modes must be at least 1".into());
        }
        if uses("spacing") {
            self.grid()?;
            if !(self.delta >= 0.0 && self.delta.is_finite()) {
                return bad(format!("delta must be nonnegative (got {})", self.delta));
            }
            if !(self.rho > 0.0 && self.rho.is_finite()) {
                return bad(format!("rho must be positive (got {})", self.rho));
            }
            WeightedNormParams { eta: self.eta }
                .validate(self.nonlinearity.holder_sigma, 0.0)
                .map_err(config)?;
            solver_registry().create(&self.solver).map_err(config)?;
        }
        if uses("eta_bar") && !(self.eta_bar > 0.0 && self.eta_bar < self.eta) {
            return bad(format!("eta-bar must lie in (0, eta = {}) (got {})", self.eta, self.eta_bar));
        }
        if uses("optimizer") {
            maximizer_registry().create(&self.optimizer).map_err(config)?;
        }
        if let Some(c) = &self.spikes {
            if c.dim() != self.dim {
                return bad(format!("spikes have dimension {}, grid has {}", c.dim(), self.dim));
            }
        }
        match self.command {
            Command::Maximize if self.k == 0 => bad("k must be at least 1".into()),
            Command::Ledger if self.potential.is_none() => {
                bad("ledger needs a potential (--potential kind[:params])".into())
            }
            Command::Ledger | Command::System if self.k_max == 0 => bad("k-max must be at least 1".into()),
            Command::Energy if self.distances.iter().any(|d| d.is_nan() || *d <= 0.0) => {
                bad("distances must be positive".into())
            }
            Command::System => self.validate_system(),
            _ => {
                if uses("potential") {
                    self.potential()?;
                }
                Ok(())
            }
        }
    }

    fn validate_system(&self) -> Result<(), CliError> {
        if self.dim != 1 && self.dim != 2 {
            return Err(CliError::Config(format!("system runs in 1 or 2 dimensions (got {})", self.dim)));
        }
        let params = self.coupling()?;
        match (&self.potential_a, &self.potential_b) {
            (Some(_), Some(_)) => {
                if !params.admissible {
                    return Err(CliError::Config(format!(
                        "beta = {} is not admissible: {}",
                        self.beta,
                        params.reason.clone().unwrap_or_default()
                    )));
                }
                self.pair_potentials()?;
                Ok(())
            }
            (None, None) => Ok(()),
            _ => Err(CliError::Config("potential-a and potential-b must be given together".into())),
        }
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Grid::new(self.dim, self.half_width, self.spacing).map_err(config)
    }

    pub fn potential(&self) -> Result<Arc<dyn Potential>, CliError> {
        parse_potential(self.potential.as_deref().unwrap_or("zero")).map_err(config)
    }

    pub fn pair_potentials(&self) -> Result<Option<PotentialPair>, CliError> {
        match (&self.potential_a, &self.potential_b) {
            (Some(a), Some(b)) => Ok(Some((
                parse_potential(a).map_err(config)?,
                parse_potential(b).map_err(config)?,
            ))),
            _ => Ok(None),
        }
    }

    pub fn coupling(&self) -> Result<CouplingParams, CliError> {
        synchronized_amplitudes(self.mu1, self.mu2, self.beta).map_err(config)
    }

    /// Spikes from the configuration, or one spike at the origin.
    pub fn configuration(&self) -> Configuration {
        self.spikes
            .clone()
            .unwrap_or_else(|| Configuration::single(self.dim, self.rho))
    }

    /// Flat `key = value` listing that reproduces this run.
    pub fn to_file(&self) -> String {
        let mut lines = vec![format!("# {}", self.command)];
        let mut push = |k: &str, v: String| lines.push(format!("{k} = {v}"));
        push("seed", self.seed.to_string());
        let keys = self.command.keys();
        let has = |k: &str| keys.contains(&k);
        if has("dim") {
            push("dim", self.dim.to_string());
        }
        if has("p") {
            push("p", self.nonlinearity.p.to_string());
            push("q", self.nonlinearity.q.to_string());
            push("a", self.nonlinearity.a.to_string());
            push("ode_tol", self.ode_tol.to_string());
        }
        if has("modes") {
            push("modes", self.modes.to_string());
        }
        if has("potential") {
            if let Some(p) = &self.potential {
                push("potential", p.clone());
            }
        }
        if has("spacing") {
            push("delta", self.delta.to_string());
            push("rho", self.rho.to_string());
            push("eta", self.eta.to_string());
            push("half_width", self.half_width.to_string());
            push("spacing", self.spacing.to_string());
            push("solver", self.solver.clone());
        }
        if has("ansatz") {
            let a = match self.ansatz {
                AnsatzKind::GridConsistent => "grid-consistent",
                AnsatzKind::Continuum => "continuum",
            };
            push("ansatz", a.into());
        }
        if has("spikes") {
            if let Some(c) = &self.spikes {
                push("spikes", serde_json::to_string(c).unwrap_or_default());
            }
        }
        if has("distances") && !self.distances.is_empty() {
            let d: Vec<String> = self.distances.iter().map(f64::to_string).collect();
            push("distances", d.join(","));
        }
        if has("eta_bar") {
            push("eta_bar", self.eta_bar.to_string());
        }
        if has("optimizer") {
            push("optimizer", self.optimizer.clone());
            push("restarts", self.restarts.to_string());
        }
        if has("k") {
            push("k", self.k.to_string());
        }
        if has("search_radius") {
            if let Some(r) = self.search_radius {
                push("search_radius", r.to_string());
            }
        }
        if has("k_max") {
            push("k_max", self.k_max.to_string());
        }
        if has("mu1") {
            push("mu1", self.mu1.to_string());
            push("mu2", self.mu2.to_string());
            push("beta", self.beta.to_string());
            push("beta_steps", self.beta_steps.to_string());
            if let (Some(a), Some(b)) = (&self.potential_a, &self.potential_b) {
                push("potential_a", a.clone());
                push("potential_b", b.clone());
            }
        }
        if has("suite") {
            push("suite", self.suite.to_string());
        }
        for s in ["refine", "polish", "dump_fields"] {
            if has(s) {
                let on = match s {
                    "refine" => self.refine,
                    "polish" => self.polish,
                    _ => self.dump_fields,
                };
                push(s, on.to_string());
            }
        }
        lines.push(String::new());
        lines.join("\n")
    }
}

fn config(e: multibump::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Accepts `[[x, ...], ...]`, a flat list of 1D centres, or
/// `{"points": ..., "rho": ...}`, inline or from a file.
pub fn parse_spikes(s: &str, dim: usize, rho: f64) -> Result<Configuration, CliError> {
    let text = if s.trim_start().starts_with(['[', '{']) {
        s.to_string()
    } else {
        std::fs::read_to_string(s).map_err(|e| CliError::Config(format!("cannot read spikes file '{s}': {e}")))?
    };
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("spikes: {e}")))?;
    let invalid = |m: &str| CliError::Config(format!("spikes: {m}"));
    let (points, rho) = match &value {
        serde_json::Value::Object(o) => {
            let pts = o.get("points").ok_or_else(|| invalid("missing 'points'"))?;
            let r = o.get("rho").and_then(|r| r.as_f64()).unwrap_or(rho);
            (pts.clone(), r)
        }
        other => (other.clone(), rho),
    };
    let arr = points.as_array().ok_or_else(|| invalid("expected an array"))?;
    let pts: Vec<Vec<f64>> = if arr.iter().all(|v| v.is_number()) && dim == 1 {
        arr.iter().map(|v| vec![v.as_f64().unwrap_or(f64::NAN)]).collect()
    } else {
        serde_json::from_value(points.clone()).map_err(|e| invalid(&e.to_string()))?
    };
    if pts.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite coordinate"));
    }
    if let Some(bad) = pts.iter().find(|p| p.len() != dim) {
        return Err(invalid(&format!("point {bad:?} does not have {dim} coordinates")));
    }
    let check = validate_configuration(&pts, rho);
    if let (Some((i, j)), Some(d)) = (check.violating_pair, check.min_distance) {
        return Err(invalid(&format!("spikes {i} and {j} are {d} apart, closer than rho = {rho}")));
    }
    Configuration::new(pts, rho).map_err(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn file_values_are_overridden_by_flags() {
        let file = parse_file("delta = 1e-3\n# note\nrho = 12  # wider\n").unwrap();
        let cfg = RunConfig::resolve(Command::Reduce, &file, &flags(&[("delta", "2e-3")])).unwrap();
        assert_eq!(cfg.delta, 2e-3);
        assert_eq!(cfg.rho, 12.0);
    }

    #[test]
    fn unknown_keys_and_bad_lines_are_rejected() {
        assert!(parse_file("colour = red").is_err());
        assert!(parse_file("delta 3").is_err());
        assert_eq!(parse_file("half-width = 30").unwrap()["half_width"], "30");
    }

    #[test]
    fn keys_of_other_subcommands_in_a_file_are_ignored() {
        let file = parse_file("suite = bogus\nmu1 = 2").unwrap();
        let cfg = RunConfig::resolve(Command::GroundState, &file, &BTreeMap::new()).unwrap();
        assert_eq!(cfg.mu1, 1.0);
    }

    #[test]
    fn ledger_requires_a_potential() {
        let err = RunConfig::resolve(Command::Ledger, &BTreeMap::new(), &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(RunConfig::resolve(Command::Ledger, &BTreeMap::new(), &flags(&[("potential", "algebraic:1")])).is_ok());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for (k, v) in [
            ("delta", "-1"),
            ("spacing", "0.9"),
            ("solver", "qr"),
            ("p", "0.5"),
            ("dim", "x"),
            ("ansatz", "fancy"),
            ("eta", "1.5"),
        ] {
            let r = RunConfig::resolve(Command::Reduce, &BTreeMap::new(), &flags(&[(k, v)]));
            assert!(matches!(r, Err(CliError::Config(_))), "{k} = {v}");
        }
    }

    #[test]
    fn spikes_parse_in_every_form() {
        assert_eq!(parse_spikes("[-5, 5]", 1, 10.0).unwrap().points, vec![vec![-5.0], vec![5.0]]);
        assert_eq!(parse_spikes("[[-5], [5]]", 1, 10.0).unwrap().len(), 2);
        let c = parse_spikes(r#"{"points": [[0, 0]], "rho": 8}"#, 2, 10.0).unwrap();
        assert_eq!(c.rho, 8.0);
        assert!(parse_spikes("[[0], [1]]", 1, 10.0).is_err());
    }

    #[test]
    fn system_potentials_come_in_pairs() {
        let r = RunConfig::resolve(Command::System, &BTreeMap::new(), &flags(&[("potential_a", "algebraic:1")]));
        assert!(matches!(r, Err(CliError::Config(_))));
    }

    #[test]
    fn written_file_reproduces_the_run() {
        let f = flags(&[("potential", "algebraic:1"), ("delta", "1e-9"), ("spikes", "[-6, 6]")]);
        let cfg = RunConfig::resolve(Command::Energy, &BTreeMap::new(), &f).unwrap();
        let again = RunConfig::resolve(Command::Energy, &parse_file(&cfg.to_file()).unwrap(), &BTreeMap::new()).unwrap();
        assert_eq!(again.to_file(), cfg.to_file());
        assert_eq!(again.configuration(), cfg.configuration());
    }
}
