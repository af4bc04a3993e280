use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active_subspace::{ActiveSubspace, SliceSampler};
use crate::error::{Error, Result};
use crate::function::{Domain, ScalarFunction};
use crate::rng::{self, Stream};
use crate::surrogate::{BiasedSurrogate, TrainingSet};

/// Tabulated evaluations `f_ik = f(W1 y_k + W2 z_ik)` at the training
/// locations. Row `k` holds the `N` slice evaluations behind `f_MC(y_k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedDistanceTable {
    pub y: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
}

impl SignedDistanceTable {
    pub fn new(y: Vec<Vec<f64>>, f: Vec<Vec<f64>>) -> Result<Self> {
        if y.len() != f.len() {
            return Err(Error::InvalidInput(format!(
                "table has {} locations but {} rows",
                y.len(),
                f.len()
            )));
        }
        let n = f.first().map_or(0, Vec::len);
        if f.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("table rows have different lengths".into()));
        }
        if f.iter().flatten().chain(y.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("table contains non-finite entries".into()));
        }
        Ok(Self { y, f })
    }

    /// Number of training locations `s`.
    pub fn locations(&self) -> usize {
        self.y.len()
    }

    /// Evaluations per location `N`.
    pub fn per_location(&self) -> usize {
        self.f.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.locations() == 0 || self.per_location() == 0
    }

    /// `(y_k, mean_i f_ik)`, i.e. the `f_MC` training data.
    pub fn training_set(&self) -> Result<TrainingSet> {
        let means = self
            .f
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect();
        TrainingSet::new(self.y.clone(), means)
    }
}

/// Evaluate `f` on `N` slice samples at each training location.
///
/// Location `k` draws from its own stream, so the table is identical for any
/// thread count. Exactly `y_tr.len() · N` evaluations of `f` are made.
pub fn build_table<F: ScalarFunction + ?Sized>(
    space: &ActiveSubspace,
    dom: &Domain,
    f: &F,
    y_tr: &[Vec<f64>],
    n: usize,
    seed: u64,
) -> Result<SignedDistanceTable> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one evaluation per location".into()));
    }
    let sampler = SliceSampler::new(space, dom);
    let rows: Vec<Result<Vec<f64>>> = y_tr
        .par_iter()
        .enumerate()
        .map(|(k, y)| {
            let mut r = rng::stream(seed, Stream::Slice, k as u64);
            let (pts, _) = sampler.sample_points(y, n, &mut r)?;
            pts.iter()
                .map(|x| {
                    let v = f.value(x);
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::NonFiniteValue { point: x.clone() })
                    }
                })
                .collect()
        })
        .collect();
    let f = rows.into_iter().collect::<Result<Vec<_>>>()?;
    SignedDistanceTable::new(y_tr.to_vec(), f)
}

/// Draw `s` locations `y_k = W1ᵀx_k` with `x_k` from the domain density and
/// tabulate `N` slice evaluations at each.
pub fn build_training<F: ScalarFunction + ?Sized>(
    space: &ActiveSubspace,
    dom: &Domain,
    f: &F,
    s: usize,
    n: usize,
    seed: u64,
) -> Result<(TrainingSet, SignedDistanceTable)> {
    if s == 0 {
        return Err(Error::InvalidInput("need at least one training location".into()));
    }
    let y: Vec<Vec<f64>> = (0..s)
        .map(|k| {
            let x = dom.sample(&mut rng::stream(seed, Stream::Training, k as u64));
            space.project(&x)
        })
        .collect();
    let table = build_table(space, dom, f, &y, n, seed)?;
    Ok((table.training_set()?, table))
}

/// Draws of `S^(β) = μ^(β)(Y) − f(W1 Y + W2 Z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedDistanceSample {
    pub values: Vec<f64>,
    pub beta: f64,
    pub seed: u64,
}

/// Per-location split `μ^(β)(y_k) = U_k + β V_k`, shared by every bias value.
pub(crate) struct SplitTable<'a> {
    table: &'a SignedDistanceTable,
    mean: Vec<f64>,
    weight: Vec<f64>,
}

impl<'a> SplitTable<'a> {
    pub(crate) fn new<S: BiasedSurrogate + ?Sized>(table: &'a SignedDistanceTable, m: &S) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::EmptyTable);
        }
        Ok(Self {
            mean: table.y.iter().map(|y| m.unbiased_mean(y)).collect(),
            weight: table.y.iter().map(|y| m.bias_weight(y)).collect(),
            table,
        })
    }

    /// `k_draws` values in epochs of `s · N`: each epoch visits every
    /// tabulated pair once in a shuffled order, so a single draw is uniform
    /// over `(k, i)`.
    pub(crate) fn draw(&self, beta: f64, k_draws: usize, seed: u64, index: u64) -> SignedDistanceSample {
        let mut r = rng::stream(seed, Stream::SignedDistance, index);
        let n = self.table.per_location();
        let mut pairs: Vec<usize> = (0..self.table.locations() * n).collect();
        let mut values = Vec::with_capacity(k_draws);
        while values.len() < k_draws {
            pairs.shuffle(&mut r);
            let take = (k_draws - values.len()).min(pairs.len());
            values.extend(pairs[..take].iter().map(|&p| {
                let (k, i) = (p / n, p % n);
                self.mean[k] + beta * self.weight[k] - self.table.f[k][i]
            }));
        }
        SignedDistanceSample { values, beta, seed }
    }

    /// `(mean over the table of μ(y_k) − f_ik, mean of V_k)`
    pub(crate) fn means(&self) -> (f64, f64) {
        let n = self.table.per_location() as f64;
        let s = self.table.locations() as f64;
        let u: f64 = self
            .table
            .f
            .iter()
            .zip(&self.mean)
            .map(|(row, m)| row.iter().map(|v| m - v).sum::<f64>() / n)
            .sum::<f64>()
            / s;
        let v = self.weight.iter().sum::<f64>() / s;
        (u, v)
    }
}

/// `K` draws `μ^(β)(y_k) − f_ik` with `k` and `i` uniform, taken without
/// replacement within each pass over the table.
pub fn sample_signed_distance<S: BiasedSurrogate + ?Sized>(
    table: &SignedDistanceTable,
    surrogate: &S,
    k_draws: usize,
    seed: u64,
) -> Result<SignedDistanceSample> {
    if k_draws == 0 {
        return Err(Error::InvalidInput("need at least one draw".into()));
    }
    Ok(SplitTable::new(table, surrogate)?.draw(surrogate.bias(), k_draws, seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{fit_gpr, KernelConfig, LinearSurrogate};

    #[test]
    fn single_column_table_collapses_to_one_value_per_location() {
        let t = SignedDistanceTable::new(vec![vec![0.0], vec![1.0]], vec![vec![2.0], vec![3.0]]).unwrap();
        let m = LinearSurrogate { slope: vec![1.0], intercept: 2.0, bias: 0.5 };
        let s = sample_signed_distance(&t, &m, 200, 1).unwrap();
        for v in &s.values {
            assert!(*v == 0.5 || *v == 0.5, "{v}");
        }
        assert_eq!(t.training_set().unwrap().targets(), &[2.0, 3.0]);
    }

    #[test]
    fn constant_function_signed_distance_is_bias_times_weight() {
        let y: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.7]).collect();
        let t = SignedDistanceTable::new(y.clone(), vec![vec![2.0; 3]; 5]).unwrap();
        let tr = t.training_set().unwrap();
        let m = fit_gpr(&tr, &KernelConfig::new(1.0, 0.0).unwrap()).unwrap().with_bias(0.4);
        let s = sample_signed_distance(&t, &m, 500, 9).unwrap();
        for v in &s.values {
            assert!(*v >= -1e-12);
        }
        let zero = sample_signed_distance(&t, &m.clone().with_bias(0.0), 100, 9).unwrap();
        assert!(zero.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn huge_bias_makes_every_draw_positive() {
        let t = SignedDistanceTable::new(
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            vec![vec![3.0, -2.0], vec![0.5, 1.0], vec![-4.0, 2.0]],
        )
        .unwrap();
        let m = fit_gpr(&t.training_set().unwrap(), &KernelConfig::new(1.0, 1e-3).unwrap())
            .unwrap()
            .with_bias(100.0);
        let s = sample_signed_distance(&t, &m, 1000, 2).unwrap();
        assert!(s.values.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn empty_table_errors() {
        let t = SignedDistanceTable::new(vec![], vec![]).unwrap();
        let m = LinearSurrogate { slope: vec![1.0], intercept: 0.0, bias: 0.0 };
        assert!(matches!(sample_signed_distance(&t, &m, 10, 0), Err(Error::EmptyTable)));
    }
}
