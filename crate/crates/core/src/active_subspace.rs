//! Gradient-covariance active subspaces.
//!
//! The covariance `C = (1/M) Σ ∇f(xᵢ) ∇f(xᵢ)ᵀ` is estimated by Monte Carlo
//! under the domain density, split by eigendecomposition into an active block
//! `W1` and an inactive block `W2`, and `f` is reduced to the active
//! coordinates `y = W1ᵀx` by averaging over the inactive slice
//! `{z : W1 y + W2 z ∈ X}`.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::{Domain, GradientSource, ScalarFunction};
use crate::qp::{least_distance, LeastDistanceOptions};
use crate::rng::{self, Stream};

/// Monte Carlo estimate of the gradient covariance matrix.
#[derive(Clone, Debug)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub sample_count: usize,
}

impl CovarianceEstimate {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `D` rows of `D` comma-separated values in shortest round-trip
    /// scientific notation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for i in 0..self.dim() {
            w.write_record(self.matrix.row(i).iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Estimate `C = (1/M) Σ ∇f(xᵢ)⊗∇f(xᵢ)` with `xᵢ` drawn from the domain
/// density. Sample `i` uses its own RNG stream, so the result does not depend
/// on the number of worker threads.
pub fn estimate_covariance<G: GradientSource + ?Sized>(
    src: &G,
    dom: &Domain,
    samples: usize,
    seed: u64,
) -> Result<CovarianceEstimate> {
    if samples == 0 {
        return Err(Error::InvalidInput("covariance needs at least one sample".into()));
    }
    let dim = dom.dim();
    if src.dim() != dim {
        return Err(Error::InvalidInput(format!(
            "gradient source has dimension {} but domain has {dim}",
            src.dim()
        )));
    }
    let grads: Vec<(Vec<f64>, Vec<f64>)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, Stream::Covariance, i as u64);
            let x = dom.sample(&mut r);
            let (_, g) = src.evaluate(&x);
            (x, g)
        })
        .collect();

    let mut gmat = DMatrix::<f64>::zeros(samples, dim);
    for (i, (x, g)) in grads.iter().enumerate() {
        if g.len() != dim || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                index: i,
                point: x.clone(),
            });
        }
        for (j, &v) in g.iter().enumerate() {
            gmat[(i, j)] = v;
        }
    }
    let mut matrix = gmat.tr_mul(&gmat) / samples as f64;
    // exact symmetry
    for i in 0..dim {
        for j in 0..i {
            let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(CovarianceEstimate {
        matrix,
        sample_count: samples,
    })
}

/// Orthonormal split `[W1 W2]` of the input space with its spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSubspace {
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    /// Nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Set when `λ_d` and `λ_{d+1}` coincide, i.e. the split is not unique.
    pub degenerate_gap: bool,
}

#[derive(Serialize, Deserialize)]
struct SubspaceFile {
    d: usize,
    eigenvalues: Vec<f64>,
    #[serde(rename = "W1")]
    w1: Vec<f64>,
    #[serde(rename = "W2")]
    w2: Vec<f64>,
}

impl Serialize for ActiveSubspace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        SubspaceFile {
            d: self.d(),
            eigenvalues: self.eigenvalues.clone(),
            w1: row_major(&self.w1),
            w2: row_major(&self.w2),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ActiveSubspace {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = SubspaceFile::deserialize(de)?;
        let dim = f.eigenvalues.len();
        if f.d == 0 || f.d >= dim || f.w1.len() != dim * f.d || f.w2.len() != dim * (dim - f.d) {
            return Err(D::Error::custom("inconsistent active subspace dimensions"));
        }
        Ok(Self {
            w1: DMatrix::from_row_slice(dim, f.d, &f.w1),
            w2: DMatrix::from_row_slice(dim, dim - f.d, &f.w2),
            degenerate_gap: false,
            eigenvalues: f.eigenvalues,
        })
    }
}

/// Split the covariance into its top-`d` eigenvectors and the rest.
///
/// Each eigenvector is signed so that its largest-magnitude entry is positive.
pub fn decompose(c: &CovarianceEstimate, d: usize) -> Result<ActiveSubspace> {
    let dim = c.dim();
    if d == 0 || d >= dim {
        return Err(Error::DimensionOutOfRange { d, dim });
    }
    let eig = SymmetricEigen::new(c.matrix.clone());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut vecs = DMatrix::<f64>::zeros(dim, dim);
    let mut eigenvalues = Vec::with_capacity(dim);
    for (k, &src) in order.iter().enumerate() {
        let mut col: DVector<f64> = eig.eigenvectors.column(src).into_owned();
        let (imax, _) = col
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bv), (i, v)| {
                if v.abs() > bv + 1e-14 {
                    (i, v.abs())
                } else {
                    (bi, bv)
                }
            });
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        vecs.set_column(k, &col);
        eigenvalues.push(eig.eigenvalues[src]);
    }
    let scale = eigenvalues[0].abs().max(f64::MIN_POSITIVE);
    let degenerate_gap = (eigenvalues[d - 1] - eigenvalues[d]).abs() <= 1e-12 * scale;
    Ok(ActiveSubspace {
        w1: vecs.columns(0, d).into_owned(),
        w2: vecs.columns(d, dim - d).into_owned(),
        eigenvalues,
        degenerate_gap,
    })
}

impl ActiveSubspace {
    pub fn d(&self) -> usize {
        self.w1.ncols()
    }

    pub fn dim(&self) -> usize {
        self.w1.nrows()
    }

    /// `y = W1ᵀx`
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (0..self.d())
            .map(|k| self.w1.column(k).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `W1 y + W2 z`
    pub fn lift(&self, y: &[f64], z: &[f64]) -> Vec<f64> {
        let yv = DVector::from_column_slice(y);
        let zv = DVector::from_column_slice(z);
        (&self.w1 * yv + &self.w2 * zv).as_slice().to_vec()
    }

    /// Columns of `W1` as slices (column-major storage).
    pub fn active_columns(&self) -> Vec<&[f64]> {
        let dim = self.dim();
        let s = self.w1.as_slice();
        (0..self.d()).map(|k| &s[k * dim..(k + 1) * dim]).collect()
    }

    /// Percentage of the spectrum captured by the active block.
    pub fn variance_captured(&self) -> Result<f64> {
        let clip = |v: f64| v.max(0.0);
        let total: f64 = self.eigenvalues.iter().copied().map(clip).sum();
        if total <= 0.0 {
            return Err(Error::ConstantFunction);
        }
        let active: f64 = self.eigenvalues[..self.d()].iter().copied().map(clip).sum();
        Ok((100.0 * active / total).min(100.0))
    }

    /// `max |[W1 W2]ᵀ[W1 W2] − I|`
    pub fn orthogonality_error(&self) -> f64 {
        let mut w = DMatrix::<f64>::zeros(self.dim(), self.dim());
        w.columns_mut(0, self.d()).copy_from(&self.w1);
        w.columns_mut(self.d(), self.dim() - self.d()).copy_from(&self.w2);
        let g = w.tr_mul(&w) - DMatrix::<f64>::identity(self.dim(), self.dim());
        g.amax()
    }

    /// Interval of the active coordinates when `d = 1`; the axis-aligned
    /// bounding box of the projected domain otherwise.
    pub fn projected_bounds(&self, dom: &Domain) -> Vec<(f64, f64)> {
        self.active_columns()
            .iter()
            .map(|c| dom.projected_interval(c))
            .collect()
    }
}

/// Diagnostics of one slice-sampling run.
#[derive(Clone, Debug, Default)]
pub struct SliceStats {
    /// Hit-and-run steps taken (0 for the exact one-dimensional sampler).
    pub steps: usize,
    /// Steps whose chord had zero length.
    pub stalled: usize,
}

/// Samples `x = W1 y + W2 z` uniformly from the slice `{z : x ∈ X}`.
pub struct SliceSampler<'a> {
    space: &'a ActiveSubspace,
    dom: &'a Domain,
}

impl<'a> SliceSampler<'a> {
    pub fn new(space: &'a ActiveSubspace, dom: &'a Domain) -> Self {
        Self { space, dom }
    }

    /// A point of the slice, the one closest to the box center.
    pub fn anchor(&self, y: &[f64]) -> Result<Vec<f64>> {
        let dom = self.dom;
        let center: Vec<f64> = dom
            .lower()
            .iter()
            .zip(dom.upper())
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let rows = self.space.active_columns();
        let sol = least_distance(
            &rows,
            y,
            &center,
            dom.lower(),
            dom.upper(),
            LeastDistanceOptions::default(),
        );
        let scale = 1.0 + y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if !sol.converged && sol.residual > 1e-9 * scale {
            return Err(Error::EmptySlice { y: y.to_vec() });
        }
        Ok(sol.x)
    }

    /// `n` full-space points of the slice at `y`.
    pub fn sample_points<R: Rng + ?Sized>(
        &self,
        y: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<(Vec<Vec<f64>>, SliceStats)> {
        if y.len() != self.space.d() {
            return Err(Error::InvalidInput(format!(
                "active coordinate has length {} but d = {}",
                y.len(),
                self.space.d()
            )));
        }
        let anchor = self.anchor(y)?;
        if self.space.dim() - self.space.d() == 1 {
            Ok((self.sample_interval(y, &anchor, n, rng), SliceStats::default()))
        } else {
            self.hit_and_run(y, anchor, n, rng)
        }
    }

    fn sample_interval<R: Rng + ?Sized>(
        &self,
        y: &[f64],
        anchor: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Vec<Vec<f64>> {
        let dom = self.dom;
        let w = self.space.w2.column(0);
        let base = {
            let yv = DVector::from_column_slice(y);
            &self.space.w1 * yv
        };
        let z0: f64 = w.iter().zip(anchor).map(|(a, b)| a * b).sum();
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..dom.dim() {
            if w[i].abs() < 1e-15 {
                continue;
            }
            let a = (dom.lower()[i] - base[i]) / w[i];
            let b = (dom.upper()[i] - base[i]) / w[i];
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
        if !(lo <= hi) {
            lo = z0;
            hi = z0;
        }
        (0..n)
            .map(|_| {
                let z = if hi > lo {
                    lo + (hi - lo) * rng.random::<f64>()
                } else {
                    lo
                };
                let mut x: Vec<f64> = (0..dom.dim()).map(|i| base[i] + w[i] * z).collect();
                dom.clamp(&mut x);
                x
            })
            .collect()
    }

    fn hit_and_run<R: Rng + ?Sized>(
        &self,
        y: &[f64],
        mut x: Vec<f64>,
        n: usize,
        rng: &mut R,
    ) -> Result<(Vec<Vec<f64>>, SliceStats)> {
        let dom = self.dom;
        let dim = dom.dim();
        let free = dim - self.space.d();
        let burn_in = 50 * free;
        let thin = free.max(1);
        let cols = self.space.active_columns();
        let mut stats = SliceStats::default();
        let mut dir = vec![0.0; dim];
        let mut out = Vec::with_capacity(n);

        let total = burn_in + n * thin;
        for step in 1..=total {
            for v in dir.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            // remove the active component so the walk stays on the slice
            for c in &cols {
                let p: f64 = c.iter().zip(&dir).map(|(a, b)| a * b).sum();
                for (v, a) in dir.iter_mut().zip(c.iter()) {
                    *v -= p * a;
                }
            }
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::SamplerFailure(format!(
                    "degenerate direction at step {step} for y = {y:?}"
                )));
            }
            let (mut tlo, mut thi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..dim {
                let v = dir[i] / norm;
                dir[i] = v;
                if v.abs() < 1e-300 {
                    continue;
                }
                let a = (dom.lower()[i] - x[i]) / v;
                let b = (dom.upper()[i] - x[i]) / v;
                tlo = tlo.max(a.min(b));
                thi = thi.min(a.max(b));
            }
            stats.steps += 1;
            if thi > tlo {
                let t = tlo + (thi - tlo) * rng.random::<f64>();
                for (xi, v) in x.iter_mut().zip(&dir) {
                    *xi += t * v;
                }
                dom.clamp(&mut x);
            } else {
                stats.stalled += 1;
            }
            if step % 1000 == 0 {
                self.reproject(y, &mut x);
            }
            if step > burn_in && (step - burn_in) % thin == 0 {
                let mut p = x.clone();
                self.reproject(y, &mut p);
                out.push(p);
            }
        }
        Ok((out, stats))
    }

    fn reproject(&self, y: &[f64], x: &mut [f64]) {
        for (c, &yk) in self.space.active_columns().iter().zip(y) {
            let p: f64 = c.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            for (xi, a) in x.iter_mut().zip(c.iter()) {
                *xi += (yk - p) * a;
            }
        }
        self.dom.clamp(x);
    }
}

/// `n` inactive coordinates `z` with `W1 y + W2 z ∈ X`.
pub fn sample_inactive(
    space: &ActiveSubspace,
    dom: &Domain,
    y: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut r = rng::stream(seed, Stream::Slice, 0);
    let (pts, _) = SliceSampler::new(space, dom).sample_points(y, n, &mut r)?;
    let zt = space.w2.transpose();
    Ok(pts
        .iter()
        .map(|x| (&zt * DVector::from_column_slice(x)).as_slice().to_vec())
        .collect())
}

/// Conditional average `(1/N) Σ f(W1 y + W2 zᵢ)` over slice samples.
pub fn f_mc<F: ScalarFunction + ?Sized>(
    space: &ActiveSubspace,
    dom: &Domain,
    f: &F,
    y: &[f64],
    n: usize,
    seed: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("f_mc needs at least one sample".into()));
    }
    let mut r = rng::stream(seed, Stream::Slice, 0);
    let (pts, _) = SliceSampler::new(space, dom).sample_points(y, n, &mut r)?;
    let mut sum = 0.0;
    for x in &pts {
        let v = f.value(x);
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { point: x.clone() });
        }
        sum += v;
    }
    Ok(sum / n as f64)
}

/// Write `index,lambda` rows.
pub fn write_eigenvalues_csv(path: &Path, eigenvalues: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "lambda"])?;
    for (i, v) in eigenvalues.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:e}")])?;
    }
    w.flush()?;
    Ok(())
}
