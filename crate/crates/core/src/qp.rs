//! Box-constrained least-distance problems with a few equality rows.
//!
//! Solves `min ½‖x − c‖²  s.t.  A x = b,  lower ≤ x ≤ upper` through its
//! concave dual in `λ ∈ ℝ^m`: the primal minimizer for fixed multipliers is
//! `x(λ) = clip(c + Aᵀλ)`, and the dual is maximized by a semismooth Newton
//! iteration with a backtracking line search. `m` is tiny (at most the sum of
//! two reduced dimensions), so each iteration costs `O(m²·D)`.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct LeastDistance {
    pub x: Vec<f64>,
    /// `‖A x − b‖₂` at the returned point.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LeastDistanceOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LeastDistanceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

fn clip_into(c: &[f64], lower: &[f64], upper: &[f64], at: &DVector<f64>, rows: &[&[f64]], out: &mut [f64]) {
    for j in 0..c.len() {
        let mut v = c[j];
        for (r, row) in rows.iter().enumerate() {
            v += row[j] * at[r];
        }
        out[j] = v.clamp(lower[j], upper[j]);
    }
}

fn residual_vec(rows: &[&[f64]], b: &[f64], x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        rows.len(),
        rows.iter()
            .zip(b)
            .map(|(row, bi)| bi - row.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>()),
    )
}

fn dual_value(c: &[f64], x: &[f64], lambda: &DVector<f64>, g: &DVector<f64>) -> f64 {
    // q(λ) = ½‖x − c‖² + λᵀ(b − A x)
    let half_sq: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
    half_sq + lambda.dot(g)
}

/// Least-distance projection of `center` onto `{A x = b} ∩ [lower, upper]`.
///
/// `rows` are the rows of `A`. When the feasible set is empty the returned
/// point is the last box-feasible iterate and `converged` is false.
pub fn least_distance(
    rows: &[&[f64]],
    b: &[f64],
    center: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: LeastDistanceOptions,
) -> LeastDistance {
    let m = rows.len();
    let dim = center.len();
    let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = opts.tol * scale;

    // Unconstrained start: λ = (AAᵀ)⁻¹ (b − A c).
    let gram = DMatrix::from_fn(m, m, |i, j| {
        rows[i].iter().zip(rows[j]).map(|(a, b)| a * b).sum::<f64>()
    });
    let g0 = residual_vec(rows, b, center);
    let mut lambda = gram
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&g0))
        .unwrap_or_else(|| DVector::zeros(m));

    let mut x = vec![0.0; dim];
    clip_into(center, lower, upper, &lambda, rows, &mut x);
    let mut g = residual_vec(rows, b, &x);
    let mut q = dual_value(center, &x, &lambda, &g);
    let mut trial = vec![0.0; dim];

    for it in 0..opts.max_iter {
        let res = g.norm();
        if res <= tol {
            return LeastDistance {
                x,
                residual: res,
                converged: true,
                iterations: it,
            };
        }
        // Generalized Hessian restricted to the free coordinates.
        let mut h = DMatrix::<f64>::zeros(m, m);
        let mut free = 0usize;
        for j in 0..dim {
            if x[j] > lower[j] && x[j] < upper[j] {
                free += 1;
                for r in 0..m {
                    let ar = rows[r][j];
                    if ar == 0.0 {
                        continue;
                    }
                    for s in 0..=r {
                        h[(r, s)] += ar * rows[s][j];
                    }
                }
            }
        }
        for r in 0..m {
            for s in 0..r {
                h[(s, r)] = h[(r, s)];
            }
        }
        let reg = 1e-12 * (1.0 + gram.diagonal().max());
        for r in 0..m {
            h[(r, r)] += reg;
        }
        let dir = match h.cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone(),
        };
        let slope = g.dot(&dir);

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &lambda + &dir * step;
            clip_into(center, lower, upper, &cand, rows, &mut trial);
            let gt = residual_vec(rows, b, &trial);
            let qt = dual_value(center, &trial, &cand, &gt);
            if qt >= q + 1e-4 * step * slope || gt.norm() <= tol {
                // A step that leaves x unchanged while moving along the
                // residual with every coordinate clamped certifies that the
                // dual is unbounded, i.e. the primal is infeasible.
                let unchanged = trial.iter().zip(&x).all(|(a, b)| a == b);
                lambda = cand;
                std::mem::swap(&mut x, &mut trial);
                g = gt;
                q = qt;
                accepted = true;
                if unchanged && free == 0 && g.norm() > tol {
                    return LeastDistance {
                        residual: g.norm(),
                        x,
                        converged: false,
                        iterations: it + 1,
                    };
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let residual = g.norm();
    LeastDistance {
        x,
        residual,
        converged: residual <= tol,
        iterations: opts.max_iter,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_solution_is_affine_projection() {
        let a = [1.0, 1.0, 0.0];
        let r = least_distance(
            &[&a],
            &[1.0],
            &[0.0; 3],
            &[-5.0; 3],
            &[5.0; 3],
            LeastDistanceOptions::default(),
        );
        assert!(r.converged);
        assert!((r.x[0] - 0.5).abs() < 1e-14);
        assert!((r.x[1] - 0.5).abs() < 1e-14);
        assert_eq!(r.x[2], 0.0);
    }

    #[test]
    fn active_bound_redistributes_mass() {
        // x0 + x1 + x2 = 2.4 with x0 ≤ 0.5: optimum (0.5, 0.95, 0.95).
        let a = [1.0, 1.0, 1.0];
        let r = least_distance(
            &[&a],
            &[2.4],
            &[0.0; 3],
            &[-1.0; 3],
            &[0.5, 1.0, 1.0],
            LeastDistanceOptions::default(),
        );
        assert!(r.converged);
        assert!((r.x[0] - 0.5).abs() < 1e-12);
        assert!((r.x[1] - 0.95).abs() < 1e-12);
        assert!((r.x[2] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn infeasible_target_is_reported() {
        let a = [1.0, 1.0];
        let r = least_distance(
            &[&a],
            &[3.0],
            &[0.0; 2],
            &[-1.0; 2],
            &[1.0; 2],
            LeastDistanceOptions::default(),
        );
        assert!(!r.converged);
        assert!(r.residual > 0.5);
        assert!(r.x.iter().all(|v| v.abs() <= 1.0));
    }
}
