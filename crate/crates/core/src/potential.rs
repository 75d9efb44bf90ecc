//! Potential presets and the decay-hypothesis checker.
//!
//! Presets are selected by name with comma-separated parameters, for
//! example `algebraic:1` or `sub_exponential:0.3,1`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::registry::Registry;

pub trait Potential: Send + Sync {
    fn kind(&self) -> &'static str;
    fn parameters(&self) -> Vec<f64>;
    fn value(&self, x: &[f64]) -> f64;
}

impl fmt::Debug for dyn Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", describe(self))
    }
}

/// `kind:p1,p2,...` form of a potential.
pub fn describe(v: &dyn Potential) -> String {
    let p: Vec<String> = v.parameters().iter().map(|x| format!("{x}")).collect();
    if p.is_empty() {
        v.kind().to_string()
    } else {
        format!("{}:{}", v.kind(), p.join(","))
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct Zero;

impl Potential for Zero {
    fn kind(&self) -> &'static str {
        "zero"
    }
    fn parameters(&self) -> Vec<f64> {
        Vec::new()
    }
    fn value(&self, _: &[f64]) -> f64 {
        0.0
    }
}

/// `c (1 + |x|²)^{-m/2}`.
#[derive(Debug, Clone)]
pub struct Algebraic {
    pub m: f64,
    pub amplitude: f64,
}

impl Potential for Algebraic {
    fn kind(&self) -> &'static str {
        "algebraic"
    }
    fn parameters(&self) -> Vec<f64> {
        vec![self.m, self.amplitude]
    }
    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        self.amplitude * (1.0 + r2).powf(-0.5 * self.m)
    }
}

/// `c e^{-r₀|x|}`.
#[derive(Debug, Clone)]
pub struct SubExponential {
    pub rate: f64,
    pub amplitude: f64,
}

impl Potential for SubExponential {
    fn kind(&self) -> &'static str {
        "sub_exponential"
    }
    fn parameters(&self) -> Vec<f64> {
        vec![self.rate, self.amplitude]
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.amplitude * (-self.rate * norm(x)).exp()
    }
}

/// Algebraic tail `(1 + |x|²)^{-m/2}` minus a compactly supported well
/// `depth (1 - |x - c e₁|²/s²)²` of radius `s` centred at distance `c`.
#[derive(Debug, Clone)]
pub struct Signed {
    pub m: f64,
    pub depth: f64,
    pub width: f64,
    pub center: f64,
}

impl Potential for Signed {
    fn kind(&self) -> &'static str {
        "signed"
    }
    fn parameters(&self) -> Vec<f64> {
        vec![self.m, self.depth, self.width, self.center]
    }
    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        let mut d2 = (x[0] - self.center).powi(2);
        for c in &x[1..] {
            d2 += c * c;
        }
        let t = d2 / (self.width * self.width);
        let well = if t < 1.0 { self.depth * (1.0 - t).powi(2) } else { 0.0 };
        (1.0 + r2).powf(-0.5 * self.m) - well
    }
}

/// `Σ c_i V_i`, used for the weighted potential of the coupled system.
pub struct Combination {
    pub terms: Vec<(f64, Arc<dyn Potential>)>,
}

impl Potential for Combination {
    fn kind(&self) -> &'static str {
        "combination"
    }
    fn parameters(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.0).collect()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(c, v)| c * v.value(x)).sum()
    }
}

fn param(p: &[f64], i: usize, default: f64) -> f64 {
    p.get(i).copied().unwrap_or(default)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive (got {v})")))
    }
}

/// Preset potentials keyed by kind.
pub fn potential_registry() -> Registry<dyn Potential, [f64]> {
    let mut r: Registry<dyn Potential, [f64]> = Registry::new("potential");
    r.register_with("zero", |_| Ok(Arc::new(Zero)));
    r.register_with("algebraic", |p| {
        Ok(Arc::new(Algebraic {
            m: positive("decay exponent m", param(p, 0, 1.0))?,
            amplitude: param(p, 1, 1.0),
        }))
    });
    r.register_with("sub_exponential", |p| {
        Ok(Arc::new(SubExponential {
            rate: positive("rate", param(p, 0, 0.3))?,
            amplitude: param(p, 1, 1.0),
        }))
    });
    r.register_with("signed", |p| {
        Ok(Arc::new(Signed {
            m: positive("decay exponent m", param(p, 0, 1.0))?,
            depth: param(p, 1, 0.5),
            width: positive("well width", param(p, 2, 2.0))?,
            center: param(p, 3, 5.0),
        }))
    });
    r
}

/// Parses `kind` or `kind:p1,p2,...`.
pub fn parse_potential(preset: &str) -> Result<Arc<dyn Potential>> {
    let (kind, rest) = match preset.split_once(':') {
        Some((k, r)) => (k.trim(), r.trim()),
        None => (preset.trim(), ""),
    };
    let kind = kind.replace('-', "_");
    let kind = if kind == "signed_compact_negative" { "signed".to_string() } else { kind };
    let params = if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidParameter(format!("bad potential parameter '{s}' in '{preset}'"))
                })
            })
            .collect::<Result<Vec<f64>>>()?
    };
    potential_registry().build(&kind, &params)
}

pub const CHECK_RADIUS: f64 = 50.0;
pub const MAX_SWITCH_RADIUS: f64 = 40.0;
pub const CHECK_STEP: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub decays: bool,
    pub slow_decay: bool,
    /// Radius beyond which `V e^{η̄|x|}` increases on every sampled ray.
    pub switch_radius: Option<f64>,
    /// Radius beyond which `V ≥ 0` on every sampled ray.
    pub nonnegative_from: Option<f64>,
    pub first_violation: Option<String>,
}

impl HypothesisReport {
    pub fn pass(&self) -> bool {
        self.decays && self.slow_decay
    }
}

/// Unit directions: coordinate axes and main diagonals.
pub fn sample_rays(dim: usize) -> Vec<Vec<f64>> {
    let mut rays = Vec::new();
    for axis in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[axis] = s;
            rays.push(e);
        }
    }
    if dim > 1 {
        for mask in 0..(1usize << dim) {
            let c = 1.0 / (dim as f64).sqrt();
            rays.push(
                (0..dim)
                    .map(|a| if mask >> a & 1 == 1 { -c } else { c })
                    .collect(),
            );
        }
    }
    rays
}

/// Checks decay to zero and growth of `V(x) e^{η̄|x|}` on sampled rays out
/// to [`CHECK_RADIUS`]. Growth must be strict and set in no later than
/// [`MAX_SWITCH_RADIUS`].
pub fn check_hypotheses(v: &dyn Potential, dim: usize, eta_bar: f64) -> HypothesisReport {
    let n = (CHECK_RADIUS / CHECK_STEP).round() as usize;
    let mut decays = true;
    let mut switch: f64 = 0.0;
    let mut nonneg: f64 = 0.0;
    let mut first_violation = None;
    let mut sup = 0.0_f64;
    let rays = sample_rays(dim);
    for ray in &rays {
        for i in 0..=n {
            let r = i as f64 * CHECK_STEP;
            let x: Vec<f64> = ray.iter().map(|c| c * r).collect();
            sup = sup.max(v.value(&x).abs());
        }
    }
    for ray in &rays {
        let at = |r: f64| {
            let x: Vec<f64> = ray.iter().map(|c| c * r).collect();
            v.value(&x)
        };
        // decay: |V| non-increasing on the outer half and small at the end
        let mut prev = at(CHECK_RADIUS / 2.0).abs();
        for i in (n / 2 + 1)..=n {
            let cur = at(i as f64 * CHECK_STEP).abs();
            if cur > prev * (1.0 + 1e-12) {
                decays = false;
                first_violation.get_or_insert_with(|| {
                    format!("|V| grows at r = {:.2} along {:?}", i as f64 * CHECK_STEP, ray)
                });
                break;
            }
            prev = cur;
        }
        if prev > 0.05 * sup {
            decays = false;
            first_violation
                .get_or_insert_with(|| format!("|V({CHECK_RADIUS})| = {prev:.3e} along {ray:?}"));
        }
        // growth of the weighted potential: last radius where it fails
        let mut g_prev = at(0.0);
        for i in 1..=n {
            let r = i as f64 * CHECK_STEP;
            let g = at(r) * (eta_bar * r).exp();
            if !(g > g_prev) {
                switch = switch.max(r);
            }
            if at(r) < 0.0 {
                nonneg = nonneg.max(r);
            }
            g_prev = g;
        }
    }
    let slow_decay = switch <= MAX_SWITCH_RADIUS;
    if !slow_decay {
        first_violation.get_or_insert_with(|| {
            format!("V e^{{{eta_bar} r}} fails to increase up to r = {switch:.2}")
        });
    }
    HypothesisReport {
        decays,
        slow_decay,
        switch_radius: slow_decay.then_some(switch),
        nonnegative_from: (nonneg < CHECK_RADIUS).then_some(nonneg),
        first_violation,
    }
}

/// Warning text when `δ` leaves the regime `δ < e^{-2ρ}`.
pub fn delta_regime_warning(delta: f64, rho: f64) -> Option<String> {
    let bound = (-2.0 * rho).exp();
    (delta >= bound).then(|| format!("delta = {delta:.3e} is not below e^(-2 rho) = {bound:.3e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_presets() {
        let v = parse_potential("algebraic:2").unwrap();
        assert_eq!(v.kind(), "algebraic");
        assert!((v.value(&[1.0]) - 0.5).abs() < 1e-15);
        assert_eq!(describe(v.as_ref()), "algebraic:2,1");
        assert!(parse_potential("sub-exponential:0.3").is_ok());
        assert!(parse_potential("signed_compact_negative").is_ok());
        assert!(matches!(
            parse_potential("gaussian:1"),
            Err(Error::UnknownStrategy { .. })
        ));
        assert!(parse_potential("algebraic:x").is_err());
        assert!(parse_potential("algebraic:-1").is_err());
    }

    #[test]
    fn algebraic_preset_passes() {
        for eta_bar in [0.1, 0.3, 0.5, 0.7, 0.9] {
            for dim in [1, 2] {
                let r = check_hypotheses(&Algebraic { m: 2.0, amplitude: 1.0 }, dim, eta_bar);
                assert!(r.pass(), "{eta_bar}: {r:?}");
            }
        }
    }

    #[test]
    fn sub_exponential_rate_comparison() {
        let v = SubExponential { rate: 0.3, amplitude: 1.0 };
        assert!(check_hypotheses(&v, 1, 0.5).pass());
        assert!(!check_hypotheses(&v, 1, 0.2).pass());
    }

    #[test]
    fn zero_potential_fails_slow_decay() {
        let r = check_hypotheses(&Zero, 2, 0.5);
        assert!(r.decays);
        assert!(!r.pass());
    }

    #[test]
    fn signed_preset_switches_sign_inside_well() {
        let v = parse_potential("signed").unwrap();
        assert!(v.value(&[5.0]) < 0.0);
        let r = check_hypotheses(v.as_ref(), 1, 0.5);
        assert!(r.pass(), "{r:?}");
        let from = r.nonnegative_from.unwrap();
        assert!(from > 5.0 && from <= 7.0 + CHECK_STEP);
    }

    #[test]
    fn delta_regime() {
        assert!(delta_regime_warning(1e-9, 10.0).is_none());
        assert!(delta_regime_warning(1e-8, 10.0).is_some());
    }
}
