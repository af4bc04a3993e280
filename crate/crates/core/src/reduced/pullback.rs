use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::Domain;
use crate::qp::{least_distance, LeastDistanceOptions};

pub const DEFAULT_COUPLING_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PullbackResult {
    pub x_star: Vec<f64>,
    pub residual_yf: f64,
    pub residual_yg: f64,
    pub box_dist: f64,
    pub feasible: bool,
}

/// Orthonormal basis `R` (rows) of the row space of the stacked map
/// `A = [U1 W1]ᵀ`, with `A = B R`.
pub(crate) struct StackedMap {
    /// `r × D`, orthonormal rows.
    pub rows: DMatrix<f64>,
    /// `m × r`, maps `t = R x` to `(y_F, y_G) = A x`.
    pub lift: DMatrix<f64>,
    /// `r × m`, least-squares inverse of `lift`.
    pub restrict: DMatrix<f64>,
}

impl StackedMap {
    pub fn new(u1: &DMatrix<f64>, w1: &DMatrix<f64>) -> Result<Self> {
        if u1.nrows() != w1.nrows() {
            return Err(Error::InvalidInput(format!(
                "objective map has {} rows, constraint map {}",
                u1.nrows(),
                w1.nrows()
            )));
        }
        let dim = u1.nrows();
        let m = u1.ncols() + w1.ncols();
        let mut a = DMatrix::<f64>::zeros(m, dim);
        for (k, col) in u1.column_iter().chain(w1.column_iter()).enumerate() {
            a.row_mut(k).copy_from(&col.transpose());
        }
        let eig = SymmetricEigen::new(&a * a.transpose());
        let top = eig.eigenvalues.max().max(0.0);
        if top <= 0.0 {
            return Err(Error::InvalidInput("objective and constraint maps are zero".into()));
        }
        let keep: Vec<usize> = (0..m)
            .filter(|&i| eig.eigenvalues[i] > 1e-20 * top)
            .collect();
        let r = keep.len();
        let mut rows = DMatrix::<f64>::zeros(r, dim);
        let mut lift = DMatrix::<f64>::zeros(m, r);
        let mut restrict = DMatrix::<f64>::zeros(r, m);
        for (j, &i) in keep.iter().enumerate() {
            let s = eig.eigenvalues[i].sqrt();
            let u = eig.eigenvectors.column(i);
            // R_j = uᵀA / σ
            rows.row_mut(j).copy_from(&((u.transpose() * &a) / s));
            lift.column_mut(j).copy_from(&(u * s));
            restrict.row_mut(j).copy_from(&(u.transpose() / s));
        }
        Ok(Self { rows, lift, restrict })
    }

    pub fn rank(&self) -> usize {
        self.rows.nrows()
    }

    pub fn row(&self, j: usize) -> Vec<f64> {
        self.rows.row(j).iter().copied().collect()
    }
}

fn apply_t(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.ncols())
        .map(|k| m.column(k).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Minimum-norm `x ∈ X` with `U1ᵀx = y_F` and `W1ᵀx = y_G`, using the default
/// coupling tolerance.
pub fn pullback(y_f: &[f64], y_g: &[f64], u1: &DMatrix<f64>, w1: &DMatrix<f64>, dom: &Domain) -> Result<PullbackResult> {
    pullback_with_tol(y_f, y_g, u1, w1, dom, DEFAULT_COUPLING_TOL)
}

/// As [`pullback`]. Incompatible targets give `feasible = false` with the
/// residuals of the closest box point found, not an error.
pub fn pullback_with_tol(
    y_f: &[f64],
    y_g: &[f64],
    u1: &DMatrix<f64>,
    w1: &DMatrix<f64>,
    dom: &Domain,
    tol: f64,
) -> Result<PullbackResult> {
    if y_f.len() != u1.ncols() || y_g.len() != w1.ncols() || u1.nrows() != dom.dim() {
        return Err(Error::InvalidInput("pullback dimensions do not match".into()));
    }
    let map = StackedMap::new(u1, w1)?;
    let y: Vec<f64> = y_f.iter().chain(y_g).copied().collect();
    let t = &map.restrict * nalgebra::DVector::from_column_slice(&y);
    let x_star = pullback_rows(&map, t.as_slice(), dom);
    let residual_yf = dist(&apply_t(u1, &x_star), y_f);
    let residual_yg = dist(&apply_t(w1, &x_star), y_g);
    let box_dist = dom.distance(&x_star);
    Ok(PullbackResult {
        feasible: residual_yf <= tol && residual_yg <= tol && box_dist <= tol,
        x_star,
        residual_yf,
        residual_yg,
        box_dist,
    })
}

pub(crate) fn pullback_rows(map: &StackedMap, t: &[f64], dom: &Domain) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = (0..map.rank()).map(|j| map.row(j)).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let center = vec![0.0; dom.dim()];
    least_distance(&refs, t, &center, dom.lower(), dom.upper(), LeastDistanceOptions::default()).x
}

/// `‖y_F − U1ᵀx*‖ + ‖y_G − W1ᵀx*‖ + dist(x*, X)`
pub fn coupling(_y_f: &[f64], _y_g: &[f64], result: &PullbackResult) -> f64 {
    result.residual_yf + result.residual_yg + result.box_dist
}
