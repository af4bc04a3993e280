use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::{Domain, GradientSource};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullConfig {
    /// Bound on the projected KKT residual, the violation and the
    /// complementarity product.
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Initial penalty parameter.
    pub rho: f64,
}

impl Default for FullConfig {
    fn default() -> Self {
        Self { tol: 1e-5, max_outer: 40, max_inner: 5000, rho: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// `g(x)` at the returned point (0 when unconstrained).
    pub constraint_value: f64,
    pub multiplier: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

fn project(dom: &Domain, x: &mut [f64]) {
    dom.clamp(x);
}

/// `‖x − P(x − g)‖_∞`
fn projected_gradient_norm(dom: &Domain, x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(dom.lower().iter().zip(dom.upper()))
        .map(|((&xi, &gi), (&lo, &hi))| (xi - (xi - gi).clamp(lo, hi)).abs())
        .fold(0.0, f64::max)
}

struct Lagrangian<'a> {
    f: &'a dyn GradientSource,
    g: Option<&'a dyn GradientSource>,
    lambda: f64,
    rho: f64,
}

impl Lagrangian<'_> {
    /// `(L, ∇L, g(x))` with `L = f + (max(0, λ + ρg)² − λ²)/(2ρ)`.
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
        let (fv, mut grad) = self.f.evaluate(x);
        if !fv.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { point: x.to_vec() });
        }
        let Some(g) = self.g else {
            return Ok((fv, grad, 0.0));
        };
        let (gv, gg) = g.evaluate(x);
        if !gv.is_finite() || gg.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { point: x.to_vec() });
        }
        let m = (self.lambda + self.rho * gv).max(0.0);
        for (a, b) in grad.iter_mut().zip(&gg) {
            *a += m * b;
        }
        Ok((fv + (m * m - self.lambda * self.lambda) / (2.0 * self.rho), grad, gv))
    }
}

/// Projected gradient with Barzilai–Borwein steps and Armijo backtracking
/// along the projection arc. Returns the iterations used.
fn minimize_box(l: &Lagrangian<'_>, dom: &Domain, x: &mut Vec<f64>, omega: f64, max_iter: usize) -> Result<usize> {
    let (mut val, mut grad, _) = l.eval(x)?;
    let mut alpha = 1.0 / grad.iter().map(|v| v.abs()).fold(1e-12, f64::max);
    let mut trial = x.clone();
    for it in 0..max_iter {
        if projected_gradient_norm(dom, x, &grad) <= omega {
            return Ok(it);
        }
        let mut accepted = None;
        let mut a = alpha;
        for _ in 0..60 {
            for ((t, xi), gi) in trial.iter_mut().zip(x.iter()).zip(&grad) {
                *t = xi - a * gi;
            }
            project(dom, &mut trial);
            let dec: f64 = trial.iter().zip(x.iter()).zip(&grad).map(|((t, xi), gi)| gi * (t - xi)).sum();
            let (tv, tg, _) = l.eval(&trial)?;
            if tv <= val + 1e-4 * dec {
                accepted = Some((tv, tg));
                break;
            }
            a *= 0.5;
        }
        let Some((tv, tg)) = accepted else {
            return Ok(it);
        };
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..x.len() {
            let s = trial[i] - x[i];
            ss += s * s;
            sy += s * (tg[i] - grad[i]);
        }
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { (a * 2.0).min(1e12) };
        std::mem::swap(x, &mut trial);
        val = tv;
        grad = tg;
    }
    Ok(max_iter)
}

/// `min f(x)  s.t.  g(x) ≤ 0,  x ∈ X` by an augmented Lagrangian whose
/// subproblems are solved by projected gradient. Terminates when the
/// projected KKT residual, the violation and `|λ g|` are all below `tol`, or
/// flags the result unconverged at the outer cap.
pub fn solve_full(
    objective: &dyn GradientSource,
    constraint: Option<&dyn GradientSource>,
    dom: &Domain,
    x0: Option<&[f64]>,
    cfg: &FullConfig,
) -> Result<FullSolution> {
    let dim = dom.dim();
    if objective.dim() != dim || constraint.is_some_and(|g| g.dim() != dim) {
        return Err(Error::InvalidInput("solver callables and domain disagree in dimension".into()));
    }
    let mut x: Vec<f64> = match x0 {
        Some(v) if v.len() == dim => v.to_vec(),
        Some(v) => return Err(Error::InvalidInput(format!("start point has length {}, expected {dim}", v.len()))),
        None => (0..dim).map(|i| 0.5 * (dom.lower()[i] + dom.upper()[i])).collect(),
    };
    project(dom, &mut x);
    let mut l = Lagrangian { f: objective, g: constraint, lambda: 0.0, rho: cfg.rho };
    let mut omega = 1e-2f64.max(cfg.tol);
    let mut inner = 0;
    let mut prev_violation = f64::INFINITY;
    let mut kkt = f64::INFINITY;
    let mut outer = 0;
    let mut converged = false;
    while outer < cfg.max_outer {
        outer += 1;
        inner += minimize_box(&l, dom, &mut x, omega, cfg.max_inner)?;
        let (_, fg) = objective.evaluate(&x);
        let (gv, gg) = constraint.map_or((0.0, vec![0.0; dim]), |g| g.evaluate(&x));
        let lambda = if constraint.is_some() { (l.lambda + l.rho * gv).max(0.0) } else { 0.0 };
        let grad: Vec<f64> = fg.iter().zip(&gg).map(|(a, b)| a + lambda * b).collect();
        kkt = projected_gradient_norm(dom, &x, &grad);
        let violation = gv.max(0.0);
        let compl = (lambda * gv).abs();
        l.lambda = lambda;
        if kkt <= cfg.tol && violation <= cfg.tol && compl <= cfg.tol {
            converged = true;
            break;
        }
        if violation > 0.25 * prev_violation {
            l.rho *= 10.0;
        }
        prev_violation = violation;
        omega = (omega * 0.1).max(0.1 * cfg.tol);
    }
    let (value, _) = objective.evaluate(&x);
    let constraint_value = constraint.map_or(0.0, |g| g.evaluate(&x).0);
    Ok(FullSolution {
        x,
        value,
        constraint_value,
        multiplier: l.lambda,
        kkt_residual: kkt,
        converged,
        outer_iterations: outer,
        inner_iterations: inner,
    })
}
