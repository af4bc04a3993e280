//! Scalar functions and gradient sources over a box domain.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling density over the box. Only the uniform law is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    #[default]
    Uniform,
}

/// Axis-aligned box `X = Π [lower_i, upper_i]` with a sampling density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    #[serde(default)]
    density: Density,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidInput(format!(
                "domain bounds must be non-empty and of equal length (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
            return Err(Error::InvalidInput(format!(
                "domain bound {i}: lower {} is not below upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(Self {
            lower,
            upper,
            density: Density::Uniform,
        })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn density(&self) -> Density {
        self.density
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v >= lo - slack && v <= hi + slack)
    }

    /// Euclidean distance from `x` to the box.
    pub fn distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| {
                let d = if v < lo {
                    lo - v
                } else if v > hi {
                    v - hi
                } else {
                    0.0
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (&lo, &hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.density {
            Density::Uniform => self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(&lo, &hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect(),
        }
    }

    /// Interval `[min, max]` of `wᵀx` over the box.
    pub fn projected_interval(&self, w: &[f64]) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for ((&wi, &l), &u) in w.iter().zip(&self.lower).zip(&self.upper) {
            let (a, b) = (wi * l, wi * u);
            lo += a.min(b);
            hi += a.max(b);
        }
        (lo, hi)
    }
}

/// A scalar function on the full input space.
pub trait ScalarFunction: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
}

/// A function that can report its gradient alongside its value.
pub trait GradientSource: Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>);
}

impl<T: ScalarFunction + ?Sized> ScalarFunction for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
}

impl<T: GradientSource + ?Sized> GradientSource for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (**self).evaluate(x)
    }
}

/// Closure-backed scalar function.
pub struct FnScalar<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnScalar<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarFunction for FnScalar<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Closure-backed function with an analytic gradient.
pub struct Analytic<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync> Analytic<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync> GradientSource for Analytic<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.f)(x)
    }
}

impl<F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync> ScalarFunction for Analytic<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x).0
    }
}

/// Central finite differences, with the stencil kept inside the domain.
///
/// Near a face the stencil is shifted inward so both points stay in `X`;
/// at a face it degrades to a one-sided difference.
pub struct FiniteDifference<'a, F: ?Sized> {
    f: &'a F,
    domain: &'a Domain,
    steps: Vec<f64>,
}

impl<'a, F: ScalarFunction + ?Sized> FiniteDifference<'a, F> {
    /// Default step: `1e-6 ×` box width per coordinate.
    pub fn new(f: &'a F, domain: &'a Domain) -> Self {
        let steps = (0..domain.dim()).map(|i| 1e-6 * domain.width(i)).collect();
        Self { f, domain, steps }
    }

    pub fn with_step(f: &'a F, domain: &'a Domain, step: f64) -> Self {
        Self {
            f,
            domain,
            steps: vec![step; domain.dim()],
        }
    }
}

impl<F: ScalarFunction + ?Sized> GradientSource for FiniteDifference<'_, F> {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let value = self.f.value(x);
        let mut probe = x.to_vec();
        let grad = (0..x.len())
            .map(|i| {
                let h = self.steps[i];
                let lo = (x[i] - h).max(self.domain.lower()[i]);
                let hi = (x[i] + h).min(self.domain.upper()[i]);
                probe[i] = hi;
                let fp = self.f.value(&probe);
                probe[i] = lo;
                let fm = self.f.value(&probe);
                probe[i] = x[i];
                (fp - fm) / (hi - lo)
            })
            .collect();
        (value, grad)
    }
}

/// Wraps a function and counts every evaluation.
pub struct Counting<F> {
    inner: F,
    calls: AtomicUsize,
}

impl<F> Counting<F> {
    pub fn new(inner: F) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

impl<F: ScalarFunction> ScalarFunction for Counting<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.value(x)
    }
}

impl<F: GradientSource> GradientSource for Counting<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.evaluate(x)
    }
}
