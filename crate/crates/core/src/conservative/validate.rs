use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::active_subspace::ActiveSubspace;
use crate::error::{Error, Result};
use crate::function::{Domain, ScalarFunction};
use crate::rng::{self, Stream};
use crate::surrogate::BiasedSurrogate;

/// Fresh validation points `x_j ∼ ρ` paired with exact values and surrogate
/// predictions at `W1ᵀx_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationSample {
    pub exact: Vec<f64>,
    pub surrogate: Vec<f64>,
}

/// Unfeasibility ratio `#{G ≥ 0, G^(β) ≤ 0} / #{G^(β) ≤ 0}`; `ratio` is
/// `None` when no point is surrogate-feasible.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnfeasibilityRatio {
    pub ratio: Option<f64>,
    pub surrogate_feasible: usize,
    pub violations: usize,
}

impl UnfeasibilityRatio {
    pub fn empty_feasible_set(&self) -> bool {
        self.ratio.is_none()
    }
}

impl ValidationSample {
    /// Evaluates `f` at `n` points drawn from the validation stream.
    pub fn draw<S, F>(surrogate: &S, space: &ActiveSubspace, dom: &Domain, f: &F, n: usize, seed: u64) -> Result<Self>
    where
        S: BiasedSurrogate + Sync + ?Sized,
        F: ScalarFunction + ?Sized,
    {
        if n == 0 {
            return Err(Error::InvalidInput("validation needs at least one point".into()));
        }
        let pairs: Vec<Result<(f64, f64)>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let x = dom.sample(&mut rng::stream(seed, Stream::Validation, j as u64));
                let v = f.value(&x);
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue { point: x });
                }
                Ok((v, surrogate.predict(&space.project(&x))))
            })
            .collect();
        let (exact, surrogate) = pairs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
        Ok(Self { exact, surrogate })
    }

    pub fn len(&self) -> usize {
        self.exact.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty()
    }

    /// Fraction of points with `μ^(β)(W1ᵀx) ≥ f(x)`.
    pub fn conservativeness(&self) -> f64 {
        let hits = self.exact.iter().zip(&self.surrogate).filter(|(f, m)| m >= f).count();
        hits as f64 / self.len() as f64
    }

    pub fn unfeasibility(&self) -> UnfeasibilityRatio {
        let mut feasible = 0;
        let mut violations = 0;
        for (g, m) in self.exact.iter().zip(&self.surrogate) {
            if *m <= 0.0 {
                feasible += 1;
                violations += usize::from(*g >= 0.0);
            }
        }
        UnfeasibilityRatio {
            ratio: (feasible > 0).then(|| violations as f64 / feasible as f64),
            surrogate_feasible: feasible,
            violations,
        }
    }
}

/// Fraction of `n` fresh points `x ∼ ρ` where the surrogate overestimates `f`.
pub fn empirical_conservativeness<S, F>(
    surrogate: &S,
    space: &ActiveSubspace,
    dom: &Domain,
    f: &F,
    n: usize,
    seed: u64,
) -> Result<f64>
where
    S: BiasedSurrogate + Sync + ?Sized,
    F: ScalarFunction + ?Sized,
{
    Ok(ValidationSample::draw(surrogate, space, dom, f, n, seed)?.conservativeness())
}

/// `P[G(x) ≥ 0 | G^(β)(W1ᵀx) ≤ 0]` estimated by counting over `n` fresh points.
pub fn unfeasibility_ratio<S, F>(
    surrogate: &S,
    space: &ActiveSubspace,
    dom: &Domain,
    g: &F,
    n: usize,
    seed: u64,
) -> Result<UnfeasibilityRatio>
where
    S: BiasedSurrogate + Sync + ?Sized,
    F: ScalarFunction + ?Sized,
{
    Ok(ValidationSample::draw(surrogate, space, dom, g, n, seed)?.unfeasibility())
}

/// A bias beyond which every validation point is conservative:
/// `(max|μ| + max|f|) / min V` over the sample.
pub fn saturation_bias<S, F>(
    surrogate: &S,
    space: &ActiveSubspace,
    dom: &Domain,
    f: &F,
    n: usize,
    seed: u64,
) -> Result<f64>
where
    S: BiasedSurrogate + Sync + ?Sized,
    F: ScalarFunction + ?Sized,
{
    let stats: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = dom.sample(&mut rng::stream(seed, Stream::Validation, j as u64));
            let y = space.project(&x);
            (surrogate.unbiased_mean(&y).abs(), f.value(&x).abs(), surrogate.bias_weight(&y))
        })
        .collect();
    let (mu, fx, v) = stats.iter().fold((0.0f64, 0.0f64, f64::INFINITY), |(a, b, c), (m, f, w)| {
        (a.max(*m), b.max(*f), c.min(*w))
    });
    if !(v > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bias weight reaches {v:e}; no finite bias saturates the sample"
        )));
    }
    Ok((mu + fx) / v)
}
