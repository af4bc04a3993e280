//! Surrogates over the active coordinates.
//!
//! Both surrogates carry a constant training bias `β`. For a model that is
//! linear in its training values the biased prediction splits as
//! `μ^(β)(y) = μ(y) + β·V(y)`, where `V(y)` is the prediction obtained from
//! all-ones training data. The calibration code works with that split.

mod gpr;
mod hyper;
mod linear;

pub use gpr::{check_assumption_rowsums, fit_gpr, GprSurrogate, RowSumReport};
pub use hyper::{fit_hyperparameters, HyperparameterFit, NoisePolicy};
pub use linear::{fit_linear, LinearSurrogate};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A surrogate whose mean shifts with a constant training bias.
pub trait BiasedSurrogate {
    fn input_dim(&self) -> usize;
    /// `μ(y)`, the prediction at zero bias.
    fn unbiased_mean(&self, y: &[f64]) -> f64;
    /// `V(y)`, the response of the mean to a unit bias.
    fn bias_weight(&self, y: &[f64]) -> f64;
    fn bias(&self) -> f64;
    fn set_bias(&mut self, beta: f64);

    /// `μ^(β)(y) = μ(y) + β V(y)`
    fn predict(&self, y: &[f64]) -> f64 {
        self.unbiased_mean(y) + self.bias() * self.bias_weight(y)
    }

    /// Non-fatal diagnostics attached to calibrations using this model.
    fn diagnostics(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Projected training points `y_tr` (one row per sample) and targets `f_tr`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    y: Vec<Vec<f64>>,
    f: Vec<f64>,
}

impl TrainingSet {
    /// Builds a training set, merging rows closer than `1e-12` by averaging
    /// their targets.
    pub fn new(y: Vec<Vec<f64>>, f: Vec<f64>) -> Result<Self> {
        if y.is_empty() || y.len() != f.len() {
            return Err(Error::InvalidInput(format!(
                "training set needs matching non-empty inputs ({} points, {} values)",
                y.len(),
                f.len()
            )));
        }
        let d = y[0].len();
        if d == 0 || y.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("training rows have inconsistent lengths".into()));
        }
        if y.iter().flatten().chain(&f).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("training data contains non-finite values".into()));
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(y.len());
        let mut sums: Vec<(f64, usize)> = Vec::with_capacity(y.len());
        for (yi, fi) in y.into_iter().zip(f) {
            match rows.iter().position(|r| sq_dist(r, &yi).sqrt() <= 1e-12) {
                Some(k) => {
                    sums[k].0 += fi;
                    sums[k].1 += 1;
                }
                None => {
                    rows.push(yi);
                    sums.push((fi, 1));
                }
            }
        }
        let f = sums.into_iter().map(|(s, c)| s / c as f64).collect();
        Ok(Self { y: rows, f })
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.y[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub fn targets(&self) -> &[f64] {
        &self.f
    }

    /// Same inputs, targets shifted by `beta`.
    pub fn shifted(&self, beta: f64) -> Self {
        Self {
            y: self.y.clone(),
            f: self.f.iter().map(|v| v + beta).collect(),
        }
    }

    /// Same targets, inputs scaled by `c`.
    pub fn scaled_inputs(&self, c: f64) -> Self {
        Self {
            y: self
                .y
                .iter()
                .map(|r| r.iter().map(|v| v * c).collect())
                .collect(),
            f: self.f.clone(),
        }
    }
}

/// Squared-exponential kernel parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Inverse squared length scale, `> 0`.
    pub theta: f64,
    /// Observation noise variance `σ² ≥ 0`.
    pub noise_var: f64,
}

impl KernelConfig {
    pub fn new(theta: f64, noise_var: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) || !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "kernel needs theta > 0 and noise_var >= 0 (got {theta}, {noise_var})"
            )));
        }
        Ok(Self { theta, noise_var })
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// `k(y1, y2) = exp(−θ ‖y1 − y2‖²)`
pub fn kernel_eval(cfg: &KernelConfig, y1: &[f64], y2: &[f64]) -> f64 {
    (-cfg.theta * sq_dist(y1, y2)).exp()
}
