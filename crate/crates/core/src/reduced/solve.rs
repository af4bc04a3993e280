use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pullback::{pullback_rows, StackedMap, DEFAULT_COUPLING_TOL};
use crate::error::{Error, Result};
use crate::function::Domain;
use crate::surrogate::BiasedSurrogate;

/// `min F(y_F)  s.t.  G(y_G) ≤ 0` over pairs `(y_F, y_G) = (U1ᵀx, W1ᵀx)`
/// with `x ∈ X`.
pub struct ReducedProblem<'a> {
    pub objective: &'a (dyn BiasedSurrogate + Sync),
    pub u1: DMatrix<f64>,
    pub constraint: &'a (dyn BiasedSurrogate + Sync),
    pub w1: DMatrix<f64>,
    pub domain: Domain,
    pub coupling_tol: f64,
}

impl<'a> ReducedProblem<'a> {
    pub fn new(
        objective: &'a (dyn BiasedSurrogate + Sync),
        u1: DMatrix<f64>,
        constraint: &'a (dyn BiasedSurrogate + Sync),
        w1: DMatrix<f64>,
        domain: Domain,
    ) -> Result<Self> {
        for (name, m, s) in [("objective", &u1, objective), ("constraint", &w1, constraint)] {
            if m.nrows() != domain.dim() {
                return Err(Error::InvalidInput(format!("{name} map has {} rows, domain dimension {}", m.nrows(), domain.dim())));
            }
            if m.ncols() != s.input_dim() {
                return Err(Error::InvalidInput(format!(
                    "{name} map has {} columns but its surrogate takes {} inputs",
                    m.ncols(),
                    s.input_dim()
                )));
            }
            let g = m.tr_mul(m) - DMatrix::<f64>::identity(m.ncols(), m.ncols());
            if g.amax() > 1e-8 {
                return Err(Error::InvalidInput(format!("{name} map columns are not orthonormal")));
            }
        }
        Ok(Self { objective, u1, constraint, w1, domain, coupling_tol: DEFAULT_COUPLING_TOL })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedConfig {
    /// Grid points per coupled coordinate (the total grid is capped at
    /// `grid_points²`).
    pub grid_points: usize,
    pub refine_sweeps: usize,
}

impl Default for ReducedConfig {
    fn default() -> Self {
        Self { grid_points: 401, refine_sweeps: 12 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverTraceSummary {
    /// Dimension of the coupled search space (rank of `[U1 W1]`).
    pub rank: usize,
    pub grid_points: usize,
    pub feasible_points: usize,
    pub refinement_evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedSolution {
    pub y_f: Vec<f64>,
    pub y_g: Vec<f64>,
    pub x_star: Vec<f64>,
    pub objective_value: f64,
    pub constraint_value_surrogate: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub constraint_value_exact: Option<f64>,
    pub coupling: f64,
    pub solver_trace_summary: SolverTraceSummary,
}

/// Reachable set `{R x : x ∈ X}` of the coupled coordinates.
enum Reach {
    Interval(f64, f64),
    /// Convex polygon, counterclockwise.
    Polygon(Vec<[f64; 2]>),
    /// Membership checked by projecting onto `{R x = t} ∩ X`.
    General,
}

fn zonotope_2d(map: &StackedMap, dom: &Domain) -> Vec<[f64; 2]> {
    let mut c = [0.0, 0.0];
    let mut gens = Vec::new();
    for i in 0..dom.dim() {
        let (lo, hi) = (dom.lower()[i], dom.upper()[i]);
        let a = [map.rows[(0, i)], map.rows[(1, i)]];
        c[0] += a[0] * 0.5 * (lo + hi);
        c[1] += a[1] * 0.5 * (lo + hi);
        let mut g = [a[0] * (hi - lo), a[1] * (hi - lo)];
        if g[1] < 0.0 || (g[1] == 0.0 && g[0] < 0.0) {
            g = [-g[0], -g[1]];
        }
        if g[0] != 0.0 || g[1] != 0.0 {
            gens.push(g);
        }
    }
    gens.sort_by(|a, b| a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])));
    let half: [f64; 2] = gens.iter().fold([0.0, 0.0], |s, g| [s[0] + 0.5 * g[0], s[1] + 0.5 * g[1]]);
    let mut v = [c[0] - half[0], c[1] - half[1]];
    let mut poly = Vec::with_capacity(2 * gens.len());
    for sign in [1.0, -1.0] {
        for g in &gens {
            poly.push(v);
            v = [v[0] + sign * g[0], v[1] + sign * g[1]];
        }
    }
    poly
}

impl Reach {
    fn new(map: &StackedMap, dom: &Domain) -> Self {
        match map.rank() {
            1 => {
                let (a, b) = dom.projected_interval(map.rows.row(0).clone_owned().as_slice());
                Reach::Interval(a, b)
            }
            2 => Reach::Polygon(zonotope_2d(map, dom)),
            _ => Reach::General,
        }
    }

    /// Zero inside the reachable set, a positive distance-like value outside.
    fn outside(&self, t: &[f64], map: &StackedMap, dom: &Domain) -> f64 {
        match self {
            Reach::Interval(a, b) => (a - t[0]).max(t[0] - b).max(0.0),
            Reach::Polygon(p) => {
                let mut worst = 0.0f64;
                for k in 0..p.len() {
                    let (a, b) = (p[k], p[(k + 1) % p.len()]);
                    let e = [b[0] - a[0], b[1] - a[1]];
                    let len = e[0].hypot(e[1]);
                    if len == 0.0 {
                        continue;
                    }
                    let cross = e[0] * (t[1] - a[1]) - e[1] * (t[0] - a[0]);
                    worst = worst.max(-cross / len);
                }
                worst
            }
            Reach::General => {
                let x = pullback_rows(map, t, dom);
                let rx = &map.rows * DVector::from_column_slice(&x);
                rx.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
            }
        }
    }
}

struct Evaluator<'p, 'a> {
    p: &'p ReducedProblem<'a>,
    map: StackedMap,
    reach: Reach,
    slack: f64,
}

/// Objective value at a feasible point, or the amount of violation.
enum Eval {
    Feasible(f64),
    Infeasible(f64),
}

impl Evaluator<'_, '_> {
    fn split(&self, t: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let y = &self.map.lift * DVector::from_column_slice(t);
        let df = self.p.u1.ncols();
        (y.as_slice()[..df].to_vec(), y.as_slice()[df..].to_vec())
    }

    fn eval(&self, t: &[f64]) -> Eval {
        let out = self.reach.outside(t, &self.map, &self.p.domain);
        let (yf, yg) = self.split(t);
        let g = self.p.constraint.predict(&yg);
        let viol = (out - self.slack).max(0.0) + g.max(0.0);
        if viol > 0.0 {
            Eval::Infeasible(viol)
        } else {
            Eval::Feasible(self.p.objective.predict(&yf))
        }
    }

    /// Ordering key: feasible points by objective, all ahead of infeasible
    /// points, which are ordered by violation.
    fn key(&self, t: &[f64]) -> (bool, f64) {
        match self.eval(t) {
            Eval::Feasible(v) => (false, v),
            Eval::Infeasible(v) => (true, v),
        }
    }
}

fn better(a: (bool, f64), b: (bool, f64)) -> bool {
    (!a.0 && b.0) || (a.0 == b.0 && a.1 < b.1)
}

/// Grid search over the coupled coordinates `t = R x` (orthonormal rows `R`
/// spanning `[U1 W1]ᵀ`), then coordinate-wise golden-section refinement
/// around the best grid point. Every candidate is reachable from the box, so
/// the pulled-back design satisfies the coupling by construction.
pub fn solve_reduced(p: &ReducedProblem<'_>, cfg: &ReducedConfig) -> Result<ReducedSolution> {
    if cfg.grid_points < 2 {
        return Err(Error::InvalidInput("grid needs at least 2 points per coordinate".into()));
    }
    let map = StackedMap::new(&p.u1, &p.w1)?;
    let r = map.rank();
    let bounds: Vec<(f64, f64)> = (0..r)
        .map(|k| p.domain.projected_interval(map.rows.row(k).clone_owned().as_slice()))
        .collect();
    let scale = bounds.iter().map(|(a, b)| b - a).fold(0.0, f64::max).max(1.0);
    let reach = Reach::new(&map, &p.domain);
    let ev = Evaluator { p, map, reach, slack: 1e-12 * scale };

    let per = if r <= 2 {
        cfg.grid_points
    } else {
        ((cfg.grid_points as f64).powf(2.0 / r as f64).floor() as usize).max(5)
    };
    let total = per.pow(r as u32);
    let point = |idx: usize| -> Vec<f64> {
        let mut rem = idx;
        bounds
            .iter()
            .map(|(a, b)| {
                let i = rem % per;
                rem /= per;
                a + (b - a) * i as f64 / (per - 1) as f64
            })
            .collect()
    };
    let feasible: Vec<(usize, f64)> = (0..total)
        .into_par_iter()
        .filter_map(|i| match ev.eval(&point(i)) {
            Eval::Feasible(v) => Some((i, v)),
            Eval::Infeasible(_) => None,
        })
        .collect();
    let Some(&(ibest, fbest)) = feasible
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    else {
        return Err(Error::ReducedInfeasible(format!(
            "no feasible point among {total} grid candidates (constraint surrogate positive on the reachable set)"
        )));
    };

    let mut t = point(ibest);
    let mut best = (false, fbest);
    let mut width: Vec<f64> = bounds.iter().map(|(a, b)| (b - a) / (per - 1) as f64).collect();
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut evals = 0usize;
    for _ in 0..cfg.refine_sweeps {
        for k in 0..r {
            let (mut lo, mut hi) = (t[k] - width[k], t[k] + width[k]);
            let at = |s: f64, t: &[f64]| {
                let mut c = t.to_vec();
                c[k] = s;
                c
            };
            let mut c = hi - inv_phi * (hi - lo);
            let mut d = lo + inv_phi * (hi - lo);
            let mut kc = ev.key(&at(c, &t));
            let mut kd = ev.key(&at(d, &t));
            evals += 2;
            for _ in 0..80 {
                if hi - lo <= 1e-13 * scale {
                    break;
                }
                for (s, ks) in [(c, kc), (d, kd)] {
                    if better(ks, best) {
                        best = ks;
                        t[k] = s;
                    }
                }
                if !better(kd, kc) {
                    hi = d;
                    d = c;
                    kd = kc;
                    c = hi - inv_phi * (hi - lo);
                    kc = ev.key(&at(c, &t));
                } else {
                    lo = c;
                    c = d;
                    kc = kd;
                    d = lo + inv_phi * (hi - lo);
                    kd = ev.key(&at(d, &t));
                }
                evals += 1;
            }
            for (s, ks) in [(c, kc), (d, kd)] {
                if better(ks, best) {
                    best = ks;
                    t[k] = s;
                }
            }
        }
        width.iter_mut().for_each(|w| *w *= 0.5);
    }

    // Snap onto the reachable set; refinement may accept points within the
    // membership slack.
    let x_star = pullback_rows(&ev.map, &t, &p.domain);
    let t = (&ev.map.rows * DVector::from_column_slice(&x_star)).as_slice().to_vec();
    let (y_f, y_g) = ev.split(&t);
    let proj = |m: &DMatrix<f64>| -> Vec<f64> {
        (0..m.ncols())
            .map(|k| m.column(k).iter().zip(&x_star).map(|(a, b)| a * b).sum())
            .collect()
    };
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let coupling = d(&proj(&p.u1), &y_f) + d(&proj(&p.w1), &y_g) + p.domain.distance(&x_star);
    if coupling > p.coupling_tol {
        return Err(Error::ReducedInfeasible(format!(
            "pulled-back design misses the reduced optimum by {coupling:e}"
        )));
    }
    Ok(ReducedSolution {
        objective_value: p.objective.predict(&y_f),
        constraint_value_surrogate: p.constraint.predict(&y_g),
        constraint_value_exact: None,
        y_f,
        y_g,
        x_star,
        coupling,
        solver_trace_summary: SolverTraceSummary {
            rank: r,
            grid_points: total,
            feasible_points: feasible.len(),
            refinement_evaluations: evals,
        },
    })
}
