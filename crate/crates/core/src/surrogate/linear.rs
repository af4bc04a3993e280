use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BiasedSurrogate, TrainingSet};
use crate::error::{Error, Result};

/// Ordinary least-squares fit `slopeᵀy + intercept + β`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSurrogate {
    pub slope: Vec<f64>,
    pub intercept: f64,
    pub bias: f64,
}

pub fn fit_linear(tr: &TrainingSet) -> Result<LinearSurrogate> {
    let s = tr.len();
    let d = tr.dim();
    if s < d + 1 {
        return Err(Error::RankDeficient { rows: s, cols: d + 1 });
    }
    let a = DMatrix::from_fn(s, d + 1, |i, j| if j == d { 1.0 } else { tr.inputs()[i][j] });
    let b = DVector::from_column_slice(tr.targets());
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::RankDeficient { rows: s, cols: d + 1 });
    }
    let coef = svd
        .solve(&b, 0.0)
        .map_err(|_| Error::RankDeficient { rows: s, cols: d + 1 })?;
    Ok(LinearSurrogate {
        slope: coef.as_slice()[..d].to_vec(),
        intercept: coef[d],
        bias: 0.0,
    })
}

impl LinearSurrogate {
    pub fn predict_linear(&self, y: &[f64]) -> f64 {
        self.unbiased_mean(y) + self.bias
    }
}

impl BiasedSurrogate for LinearSurrogate {
    fn input_dim(&self) -> usize {
        self.slope.len()
    }

    fn unbiased_mean(&self, y: &[f64]) -> f64 {
        self.slope.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + self.intercept
    }

    fn bias_weight(&self, _y: &[f64]) -> f64 {
        1.0
    }

    fn bias(&self) -> f64 {
        self.bias
    }

    fn set_bias(&mut self, beta: f64) {
        assert!(beta >= 0.0, "bias must be nonnegative");
        self.bias = beta;
    }
}
