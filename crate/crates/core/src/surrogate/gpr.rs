use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{kernel_eval, BiasedSurrogate, KernelConfig, TrainingSet};
use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Noisy Gaussian-process regressor with a squared-exponential kernel.
///
/// Stores `(K + σ²I)⁻¹ f_tr` and `(K + σ²I)⁻¹ 𝟙` so that biased predictions
/// need one kernel row per query.
#[derive(Clone, Debug)]
pub struct GprSurrogate {
    training: TrainingSet,
    kernel: KernelConfig,
    weights: DVector<f64>,
    ones_weights: DVector<f64>,
    factor: Cholesky<f64, Dyn>,
    jitter: f64,
    bias: f64,
}

/// Serialized form; weights are recomputed on load.
#[derive(Serialize, Deserialize)]
struct GprFile {
    theta: f64,
    noise_var: f64,
    bias: f64,
    y_tr: Vec<Vec<f64>>,
    f_tr: Vec<f64>,
}

impl Serialize for GprSurrogate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GprFile {
            theta: self.kernel.theta,
            noise_var: self.kernel.noise_var,
            bias: self.bias,
            y_tr: self.training.inputs().to_vec(),
            f_tr: self.training.targets().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GprSurrogate {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = GprFile::deserialize(de)?;
        let tr = TrainingSet::new(f.y_tr, f.f_tr).map_err(D::Error::custom)?;
        let cfg = KernelConfig::new(f.theta, f.noise_var).map_err(D::Error::custom)?;
        let mut m = fit_gpr(&tr, &cfg).map_err(D::Error::custom)?;
        if !(f.bias >= 0.0) {
            return Err(D::Error::custom("bias must be nonnegative"));
        }
        m.bias = f.bias;
        Ok(m)
    }
}

pub(crate) fn gram(tr: &TrainingSet, cfg: &KernelConfig) -> DMatrix<f64> {
    let y = tr.inputs();
    let s = y.len();
    let mut k = DMatrix::<f64>::zeros(s, s);
    for i in 0..s {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = kernel_eval(cfg, &y[i], &y[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `K + σ²I`, escalating a diagonal jitter from
/// `1e-10·mean(diag K)` by ×10 up to `1e-4·mean(diag K)`.
pub(crate) fn factor_with_jitter(k: &DMatrix<f64>, noise_var: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let s = k.nrows();
    let mean_diag = k.diagonal().mean();
    let mut jitter = 0.0;
    loop {
        let mut a = k.clone();
        for i in 0..s {
            a[(i, i)] += noise_var + jitter;
        }
        if let Some(ch) = a.cholesky() {
            if ch.l_dirty().diagonal().iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Ok((ch, jitter));
            }
        }
        jitter = if jitter == 0.0 {
            JITTER_START * mean_diag
        } else {
            jitter * 10.0
        };
        if jitter > JITTER_MAX * mean_diag * (1.0 + 1e-9) {
            return Err(Error::Factorization {
                jitter: jitter / 10.0,
                reason: format!("kernel matrix of {s} points is numerically singular"),
            });
        }
    }
}

/// Fit the regressor at zero bias.
pub fn fit_gpr(tr: &TrainingSet, cfg: &KernelConfig) -> Result<GprSurrogate> {
    let k = gram(tr, cfg);
    let (factor, jitter) = factor_with_jitter(&k, cfg.noise_var).map_err(|e| match e {
        Error::Factorization { jitter, .. } => Error::Factorization {
            jitter,
            reason: format!(
                "K + σ²I for {} points is not positive definite at theta = {:e}, noise = {:e}",
                tr.len(),
                cfg.theta,
                cfg.noise_var
            ),
        },
        other => other,
    })?;
    let f = DVector::from_column_slice(tr.targets());
    let weights = factor.solve(&f);
    let ones_weights = factor.solve(&DVector::from_element(tr.len(), 1.0));
    Ok(GprSurrogate {
        training: tr.clone(),
        kernel: *cfg,
        weights,
        ones_weights,
        factor,
        jitter,
        bias: 0.0,
    })
}

impl GprSurrogate {
    pub fn training(&self) -> &TrainingSet {
        &self.training
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    /// Jitter added on top of `σ²` to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn weights(&self) -> &[f64] {
        self.weights.as_slice()
    }

    pub fn ones_weights(&self) -> &[f64] {
        self.ones_weights.as_slice()
    }

    pub fn with_bias(mut self, beta: f64) -> Self {
        self.set_bias(beta);
        self
    }

    fn kernel_row(&self, y: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.training.len(),
            self.training
                .inputs()
                .iter()
                .map(|t| kernel_eval(&self.kernel, y, t)),
        )
    }

    /// `k(y,y_tr)·(K+σ²I)⁻¹ f_tr + β k(y,y_tr)·(K+σ²I)⁻¹ 𝟙`
    pub fn predict_mean(&self, y: &[f64]) -> f64 {
        let k = self.kernel_row(y);
        k.dot(&self.weights) + self.bias * k.dot(&self.ones_weights)
    }

    /// `k(y,y) − k(y,y_tr)(K+σ²I)⁻¹k(y_tr,y)`, clamped at zero.
    pub fn predict_var(&self, y: &[f64]) -> f64 {
        let k = self.kernel_row(y);
        let v = self
            .factor
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("Cholesky factor has a positive diagonal");
        (1.0 - v.norm_squared()).max(0.0)
    }

    /// `max |(K + (σ²+jitter)I)·weights − f_tr| / max |f_tr|` and the same for
    /// the ones-weights.
    pub fn solve_residuals(&self) -> (f64, f64) {
        let mut a = gram(&self.training, &self.kernel);
        for i in 0..a.nrows() {
            a[(i, i)] += self.kernel.noise_var + self.jitter;
        }
        let f = DVector::from_column_slice(self.training.targets());
        let fs = f.amax().max(f64::MIN_POSITIVE);
        let r1 = (&a * &self.weights - &f).amax() / fs;
        let ones = DVector::from_element(a.nrows(), 1.0);
        let r2 = (&a * &self.ones_weights - ones).amax();
        (r1, r2)
    }
}

impl BiasedSurrogate for GprSurrogate {
    fn input_dim(&self) -> usize {
        self.training.dim()
    }

    fn unbiased_mean(&self, y: &[f64]) -> f64 {
        self.kernel_row(y).dot(&self.weights)
    }

    fn bias_weight(&self, y: &[f64]) -> f64 {
        self.kernel_row(y).dot(&self.ones_weights)
    }

    fn bias(&self) -> f64 {
        self.bias
    }

    fn set_bias(&mut self, beta: f64) {
        assert!(beta >= 0.0, "bias must be nonnegative");
        self.bias = beta;
    }

    fn predict(&self, y: &[f64]) -> f64 {
        self.predict_mean(y)
    }

    fn diagnostics(&self) -> Vec<String> {
        let r = check_assumption_rowsums(self);
        if r.holds {
            Vec::new()
        } else {
            vec![format!(
                "row sums of (K+σ²I)⁻¹ are not all nonnegative (min {:e}); \
                 conservativeness may not increase monotonically with the bias",
                r.min_row_sum
            )]
        }
    }
}

/// Whether every row of `(K + σ²I)⁻¹` sums to a nonnegative value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowSumReport {
    pub holds: bool,
    pub min_row_sum: f64,
}

/// Row sums of the symmetric inverse are the entries of `(K+σ²I)⁻¹ 𝟙`.
pub fn check_assumption_rowsums(m: &GprSurrogate) -> RowSumReport {
    let min_row_sum = m.ones_weights.iter().copied().fold(f64::INFINITY, f64::min);
    RowSumReport {
        holds: min_row_sum >= 0.0,
        min_row_sum,
    }
}
