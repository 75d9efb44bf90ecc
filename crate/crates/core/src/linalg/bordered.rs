//! Saddle-point ("bordered") solves
//!
//! ```text
//! A x + Σ_j μ_j c_j = r
//! ⟨x, c_j⟩        = s_j      (j = 1..m)
//! ```
//!
//! where `⟨·,·⟩` is the quadrature-weighted inner product of the grid. Two
//! interchangeable strategies live behind [`BorderedSolver`]: a direct band
//! LU with Schur-complement elimination and iterative refinement, and a
//! Jacobi-preconditioned MINRES on the symmetric bordered matrix.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::band::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::grid::CompensatedSum;
use crate::registry::Registry;

/// Largest admissible condition number of the constraint Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e8;

/// Contract for the operator `A`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
    /// Band representation, when the operator has one.
    fn as_band(&self) -> Option<&BandMatrix> {
        None
    }
}

impl LinearOperator for BandMatrix {
    fn dim(&self) -> usize {
        BandMatrix::dim(self)
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec(x, y)
    }
    fn diagonal(&self) -> Vec<f64> {
        BandMatrix::diagonal(self)
    }
    fn as_band(&self) -> Option<&BandMatrix> {
        Some(self)
    }
}

/// Inputs of one bordered solve.
pub struct BorderedProblem<'a> {
    pub operator: &'a dyn LinearOperator,
    pub constraints: &'a [Vec<f64>],
    /// Quadrature weights defining `⟨x, c⟩ = Σ w_i x_i c_i`.
    pub weights: &'a [f64],
    pub rhs: &'a [f64],
    pub rhs_constraints: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct BorderedSolution {
    pub x: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Relative residual of the full bordered system.
    pub relative_residual: f64,
    pub iterations: usize,
}

pub trait BorderedSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &BorderedProblem<'_>) -> Result<BorderedSolution>;
}

/// Registry of the available bordered-solver strategies.
pub fn solver_registry() -> Registry<dyn BorderedSolver> {
    let mut r: Registry<dyn BorderedSolver> = Registry::new("bordered solver");
    r.register("banded", || Arc::new(BandedBorderedSolver::default()));
    r.register("minres", || Arc::new(MinresBorderedSolver::default()));
    r
}

pub fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter()
        .zip(a)
        .zip(b)
        .map(|((w, a), b)| w * a * b)
        .collect::<CompensatedSum>()
        .value()
}

/// Gram matrix `⟨c_i, c_j⟩` and its 2-norm condition number.
pub fn gram_condition(constraints: &[Vec<f64>], weights: &[f64]) -> Result<f64> {
    let m = constraints.len();
    if m == 0 {
        return Ok(1.0);
    }
    let g = DMatrix::from_fn(m, m, |i, j| {
        weighted_dot(weights, &constraints[i], &constraints[j])
    });
    let eig = g.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let min = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    if max == 0.0 {
        return Err(Error::Singular("all constraints vanish".into()));
    }
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

fn check_problem(p: &BorderedProblem<'_>) -> Result<()> {
    let n = p.operator.dim();
    if p.rhs.len() != n || p.weights.len() != n {
        return Err(Error::InvalidParameter("bordered system: length mismatch".into()));
    }
    if p.constraints.iter().any(|c| c.len() != n)
        || p.rhs_constraints.len() != p.constraints.len()
    {
        return Err(Error::InvalidParameter(
            "bordered system: constraint length mismatch".into(),
        ));
    }
    let cond = gram_condition(p.constraints, p.weights)?;
    if !(cond < MAX_GRAM_CONDITION) {
        return Err(Error::Singular(format!(
            "constraint Gram matrix condition number {cond:.3e} exceeds {MAX_GRAM_CONDITION:.0e}"
        )));
    }
    Ok(())
}

/// Residual of the bordered system and a scale for relative measures.
fn bordered_residual(
    p: &BorderedProblem<'_>,
    x: &[f64],
    mu: &[f64],
) -> (Vec<f64>, Vec<f64>, f64) {
    let n = x.len();
    let mut ax = vec![0.0; n];
    p.operator.apply(x, &mut ax);
    let mut r = p.rhs.to_vec();
    for i in 0..n {
        let mut s = ax[i];
        for (c, m) in p.constraints.iter().zip(mu) {
            s += m * c[i];
        }
        r[i] -= s;
    }
    let rc: Vec<f64> = p
        .constraints
        .iter()
        .zip(p.rhs_constraints)
        .map(|(c, s)| s - weighted_dot(p.weights, x, c))
        .collect();
    let scale = p
        .rhs
        .iter()
        .chain(ax.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(p.rhs_constraints.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
        .max(f64::MIN_POSITIVE);
    (r, rc, scale)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Band LU of `A`, Schur complement on the border, iterative refinement.
#[derive(Debug, Clone)]
pub struct BandedBorderedSolver {
    pub tolerance: f64,
    pub max_refinements: usize,
}

impl Default for BandedBorderedSolver {
    fn default() -> Self {
        Self {
            tolerance: 1e-13,
            max_refinements: 4,
        }
    }
}

struct SchurFactors<'a> {
    lu: BandLu,
    ainv_c: Vec<Vec<f64>>,
    schur: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    constraints: &'a [Vec<f64>],
    weights: &'a [f64],
}

impl SchurFactors<'_> {
    fn solve(&self, r: &[f64], s: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let y = self.lu.solve(r);
        let m = self.constraints.len();
        if m == 0 {
            return (y, Vec::new());
        }
        let rhs = DVector::from_fn(m, |j, _| {
            weighted_dot(self.weights, &self.constraints[j], &y) - s[j]
        });
        let mu = self.schur.solve(&rhs).unwrap_or_else(|| DVector::zeros(m));
        let mut x = y;
        for (j, col) in self.ainv_c.iter().enumerate() {
            let mj = mu[j];
            for (xi, ci) in x.iter_mut().zip(col) {
                *xi -= mj * ci;
            }
        }
        (x, mu.iter().copied().collect())
    }
}

impl BorderedSolver for BandedBorderedSolver {
    fn name(&self) -> &'static str {
        "banded"
    }

    fn solve(&self, p: &BorderedProblem<'_>) -> Result<BorderedSolution> {
        check_problem(p)?;
        let band = p.operator.as_band().ok_or_else(|| {
            Error::InvalidParameter("banded solver needs a band operator".into())
        })?;
        let lu = band.clone().factorize()?;
        let m = p.constraints.len();
        let ainv_c: Vec<Vec<f64>> = p.constraints.iter().map(|c| lu.solve(c)).collect();
        let s_mat = DMatrix::from_fn(m, m, |i, j| {
            weighted_dot(p.weights, &p.constraints[i], &ainv_c[j])
        });
        let schur = s_mat.lu();
        if m > 0 && !schur.is_invertible() {
            return Err(Error::Singular("Schur complement is singular".into()));
        }
        let f = SchurFactors {
            lu,
            ainv_c,
            schur,
            constraints: p.constraints,
            weights: p.weights,
        };
        let (mut x, mut mu) = f.solve(p.rhs, p.rhs_constraints);
        let mut rel = f64::INFINITY;
        let mut iterations = 1;
        for _ in 0..=self.max_refinements {
            let (r, rc, scale) = bordered_residual(p, &x, &mu);
            rel = sup(&r).max(sup(&rc)) / scale;
            if rel <= self.tolerance {
                break;
            }
            let (dx, dmu) = f.solve(&r, &rc);
            for (a, b) in x.iter_mut().zip(&dx) {
                *a += b;
            }
            for (a, b) in mu.iter_mut().zip(&dmu) {
                *a += b;
            }
            iterations += 1;
        }
        if !rel.is_finite() {
            return Err(Error::NonFinite("bordered solution"));
        }
        Ok(BorderedSolution {
            x,
            multipliers: mu,
            relative_residual: rel,
            iterations,
        })
    }
}

/// Jacobi-preconditioned MINRES on the symmetric bordered matrix
/// `[A C; Cᵀ 0]`. Requires a symmetric `A` and quadrature weights that are
/// uniform on the support of every constraint.
#[derive(Debug, Clone)]
pub struct MinresBorderedSolver {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MinresBorderedSolver {
    fn default() -> Self {
        Self {
            tolerance: 1e-11,
            max_iterations: 200_000,
        }
    }
}

impl BorderedSolver for MinresBorderedSolver {
    fn name(&self) -> &'static str {
        "minres"
    }

    fn solve(&self, p: &BorderedProblem<'_>) -> Result<BorderedSolution> {
        check_problem(p)?;
        let n = p.operator.dim();
        let m = p.constraints.len();
        // ⟨x, c⟩ = w Σ x c on the support of c
        let mut w_c = Vec::with_capacity(m);
        for c in p.constraints {
            let mut wv: Option<f64> = None;
            for (ci, wi) in c.iter().zip(p.weights) {
                if *ci != 0.0 {
                    match wv {
                        None => wv = Some(*wi),
                        Some(v) if (v - wi).abs() > 1e-14 * v.abs() => {
                            return Err(Error::InvalidParameter(
                                "minres: constraint support meets non-uniform weights".into(),
                            ))
                        }
                        _ => {}
                    }
                }
            }
            w_c.push(wv.unwrap_or(1.0));
        }
        // unknowns (x, ν) with ν = μ / w so the border is symmetric
        let total = n + m;
        let mut b = Vec::with_capacity(total);
        b.extend_from_slice(p.rhs);
        for (s, w) in p.rhs_constraints.iter().zip(&w_c) {
            b.push(s / w);
        }
        let diag_a = p.operator.diagonal();
        let mut precond: Vec<f64> = diag_a.iter().map(|d| d.abs().max(1e-8)).collect();
        for c in p.constraints {
            let s: f64 = c
                .iter()
                .zip(&diag_a)
                .map(|(ci, d)| ci * ci / d.abs().max(1e-8))
                .sum();
            precond.push(s.max(1e-300));
        }
        let apply = |v: &[f64], out: &mut [f64]| {
            p.operator.apply(&v[..n], &mut out[..n]);
            for (j, c) in p.constraints.iter().enumerate() {
                let nu = v[n + j];
                for i in 0..n {
                    out[i] += nu * c[i];
                }
                out[n + j] = c.iter().zip(&v[..n]).map(|(a, b)| a * b).sum();
            }
        };
        let (sol, iterations) = minres(
            total,
            &apply,
            &precond,
            &b,
            self.tolerance,
            self.max_iterations,
        )?;
        let x = sol[..n].to_vec();
        let multipliers: Vec<f64> = sol[n..].to_vec();
        let (r, rc, scale) = bordered_residual(p, &x, &multipliers);
        let relative_residual = sup(&r).max(sup(&rc)) / scale;
        Ok(BorderedSolution {
            x,
            multipliers,
            relative_residual,
            iterations,
        })
    }
}

/// Preconditioned MINRES (Paige–Saunders) for symmetric `A` and an SPD
/// diagonal preconditioner `M`. Stops on the preconditioned residual norm.
fn minres(
    n: usize,
    apply: &dyn Fn(&[f64], &mut [f64]),
    precond: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut y: Vec<f64> = r1.iter().zip(precond).map(|(r, m)| r / m).collect();
    let beta1 = dot(&r1, &y).sqrt();
    if beta1 == 0.0 {
        return Ok((x, 0));
    }
    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut av = vec![0.0; n];
    for itn in 1..=max_iter {
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        apply(&v, &mut av);
        if itn >= 2 {
            let f = beta / oldb;
            for i in 0..n {
                av[i] -= f * r1[i];
            }
        }
        let alfa = dot(&v, &av);
        let f = alfa / beta;
        for i in 0..n {
            av[i] -= f * r2[i];
        }
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&av);
        for i in 0..n {
            y[i] = r2[i] / precond[i];
        }
        oldb = beta;
        beta = dot(&r2, &y);
        if beta < 0.0 {
            return Err(Error::Singular("minres: preconditioner not positive definite".into()));
        }
        beta = beta.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        for i in 0..n {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        if phibar <= tol * beta1 {
            return Ok((x, itn));
        }
    }
    Err(Error::LinearSolveDiverged {
        iterations: max_iter,
        residual: phibar / beta1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn second_difference(n: usize, h: f64, shift: f64) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            a.add(i, i, -2.0 / (h * h) - shift);
            if i > 0 {
                a.add(i, i - 1, 1.0 / (h * h));
            }
            if i + 1 < n {
                a.add(i, i + 1, 1.0 / (h * h));
            }
        }
        a
    }

    #[test]
    fn identity_with_one_constraint_forces_multiplier() {
        let n = 10;
        let mut a = BandMatrix::zeros(n, 0, 0);
        for i in 0..n {
            a.add(i, i, 1.0);
        }
        let weights = vec![1.0; n];
        let mut c = vec![0.0; n];
        c[3] = 1.0;
        let constraints = vec![c.clone()];
        for solver in solver_registry().names() {
            let s = solver_registry().create(solver).unwrap();
            let sol = s
                .solve(&BorderedProblem {
                    operator: &a,
                    constraints: &constraints,
                    weights: &weights,
                    rhs: &c,
                    rhs_constraints: &[0.0],
                })
                .unwrap();
            assert!(sol.x.iter().all(|v| v.abs() < 1e-12), "{solver}");
            assert!((sol.multipliers[0] - 1.0).abs() < 1e-12, "{solver}");
        }
    }

    #[test]
    fn manufactured_solution_without_constraints() {
        let n = 401;
        let h = 0.05;
        // A = Δ - 1, so (-Δ + 1) g = -A g
        let a = second_difference(n, h, 1.0);
        let g: Vec<f64> = (0..n)
            .map(|i| {
                let x = -10.0 + i as f64 * h;
                (-x * x).exp()
            })
            .collect();
        let mut rhs = vec![0.0; n];
        a.mul_vec(&g, &mut rhs);
        let weights = vec![h; n];
        let sol = BandedBorderedSolver::default()
            .solve(&BorderedProblem {
                operator: &a,
                constraints: &[],
                weights: &weights,
                rhs: &rhs,
                rhs_constraints: &[],
            })
            .unwrap();
        for (x, y) in sol.x.iter().zip(&g) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn ill_conditioned_gram_matrix_is_rejected() {
        let n = 5;
        let mut a = BandMatrix::zeros(n, 0, 0);
        for i in 0..n {
            a.add(i, i, 1.0);
        }
        let c = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let weights = vec![1.0; n];
        let constraints = vec![c.clone(), c];
        let err = BandedBorderedSolver::default().solve(&BorderedProblem {
            operator: &a,
            constraints: &constraints,
            weights: &weights,
            rhs: &[0.0; 5],
            rhs_constraints: &[0.0, 0.0],
        });
        assert!(matches!(err, Err(Error::Singular(_))));
    }

    #[test]
    fn minres_agrees_with_banded_on_indefinite_system() {
        let n = 201;
        let h = 0.1;
        let mut a = second_difference(n, h, 1.0);
        // indefinite: one positive bump potential
        for i in 0..n {
            let x = -10.0 + i as f64 * h;
            a.add(i, i, 6.0 / x.cosh().powi(2));
        }
        let weights = vec![h; n];
        let c: Vec<f64> = (0..n)
            .map(|i| {
                let x = -10.0 + i as f64 * h;
                -x.tanh() / x.cosh()
            })
            .collect();
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                let x = -10.0 + i as f64 * h;
                (-(x - 1.0) * (x - 1.0)).exp()
            })
            .collect();
        let constraints = vec![c];
        let prob = BorderedProblem {
            operator: &a,
            constraints: &constraints,
            weights: &weights,
            rhs: &rhs,
            rhs_constraints: &[0.25],
        };
        let d = BandedBorderedSolver::default().solve(&prob).unwrap();
        let k = MinresBorderedSolver::default().solve(&prob).unwrap();
        assert!(d.relative_residual < 1e-12);
        for (u, v) in d.x.iter().zip(&k.x) {
            assert!((u - v).abs() < 1e-7);
        }
        assert!((d.multipliers[0] - k.multipliers[0]).abs() < 1e-7);
    }
}
