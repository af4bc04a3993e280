use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::gpr::{factor_with_jitter, gram};
use super::{KernelConfig, TrainingSet};
use crate::error::{Error, Result};

const GRID_POINTS: usize = 40;
const THETA_RANGE: (f64, f64) = (1e-3, 1e3);
const REL_TOL: f64 = 1e-3;

/// How the observation noise is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePolicy {
    Fixed(f64),
    /// `σ² = 1e-4 · var(f_tr)`
    FixedDefault,
    /// Maximize the marginal likelihood jointly with `θ`.
    Fit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterFit {
    pub config: KernelConfig,
    pub log_likelihood: f64,
    pub warnings: Vec<String>,
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

/// Gaussian log marginal likelihood of the targets under the zero-mean
/// unit-amplitude prior; `-inf` when the kernel matrix cannot be factored.
pub fn log_marginal_likelihood(tr: &TrainingSet, theta: f64, noise_var: f64) -> f64 {
    let cfg = KernelConfig { theta, noise_var };
    let k = gram(tr, &cfg);
    let Ok((ch, _)) = factor_with_jitter(&k, noise_var) else {
        return f64::NEG_INFINITY;
    };
    let f = DVector::from_column_slice(tr.targets());
    let alpha = ch.solve(&f);
    let logdet: f64 = ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let s = tr.len() as f64;
    -0.5 * f.dot(&alpha) - logdet - 0.5 * s * (2.0 * std::f64::consts::PI).ln()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Maximize `g` over `[lo, hi]` in log space by golden-section search.
fn golden_max_log<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut gc = g(c.exp());
    let mut gd = g(d.exp());
    while (b - a) > (1.0 + REL_TOL).ln() {
        if gc >= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c.exp());
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d.exp());
        }
    }
    if gc >= gd {
        (c.exp(), gc)
    } else {
        (d.exp(), gd)
    }
}

fn bracket(grid: &[f64], i: usize) -> (f64, f64) {
    (grid[i.saturating_sub(1)], grid[(i + 1).min(grid.len() - 1)])
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Choose `θ` (and `σ²` under [`NoisePolicy::Fit`]) by maximizing the log
/// marginal likelihood: a 40-point log grid on `[1e-3, 1e3]` followed by
/// golden-section refinement to relative tolerance `1e-3`.
pub fn fit_hyperparameters(tr: &TrainingSet, policy: NoisePolicy) -> Result<HyperparameterFit> {
    if tr.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "hyperparameter fit needs at least 3 training points, got {}",
            tr.len()
        )));
    }
    let var = variance(tr.targets());
    let fixed_noise = match policy {
        NoisePolicy::Fixed(v) => Some(v),
        NoisePolicy::FixedDefault | NoisePolicy::Fit => Some(1e-4 * var),
    };
    let spread = tr
        .targets()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let scale = 1.0 + spread.0.abs().max(spread.1.abs());
    if spread.1 - spread.0 <= 1e-12 * scale {
        let config = KernelConfig::new(1.0, fixed_noise.unwrap_or(0.0))?;
        return Ok(HyperparameterFit {
            log_likelihood: log_marginal_likelihood(tr, 1.0, config.noise_var),
            config,
            warnings: vec!["constant training targets: using default theta = 1".into()],
        });
    }

    let thetas = log_grid(THETA_RANGE.0, THETA_RANGE.1, GRID_POINTS);
    let (theta, noise_var, ll) = match policy {
        NoisePolicy::Fixed(_) | NoisePolicy::FixedDefault => {
            let nv = fixed_noise.expect("fixed policy");
            let vals: Vec<f64> = thetas
                .iter()
                .map(|&t| log_marginal_likelihood(tr, t, nv))
                .collect();
            let i = argmax(&vals);
            let (lo, hi) = bracket(&thetas, i);
            let (t, v) = golden_max_log(|t| log_marginal_likelihood(tr, t, nv), lo, hi);
            if v >= vals[i] {
                (t, nv, v)
            } else {
                (thetas[i], nv, vals[i])
            }
        }
        NoisePolicy::Fit => {
            let noises = log_grid(1e-8 * var, var, GRID_POINTS);
            let mut best = (0, 0, f64::NEG_INFINITY);
            for (i, &t) in thetas.iter().enumerate() {
                for (j, &nv) in noises.iter().enumerate() {
                    let v = log_marginal_likelihood(tr, t, nv);
                    if v > best.2 {
                        best = (i, j, v);
                    }
                }
            }
            let (mut t, mut nv, mut v) = (thetas[best.0], noises[best.1], best.2);
            let (tlo, thi) = bracket(&thetas, best.0);
            let (nlo, nhi) = bracket(&noises, best.1);
            for _ in 0..3 {
                let (t2, v2) = golden_max_log(|x| log_marginal_likelihood(tr, x, nv), tlo, thi);
                if v2 >= v {
                    t = t2;
                    v = v2;
                }
                let (n2, v3) = golden_max_log(|x| log_marginal_likelihood(tr, t, x), nlo, nhi);
                if v3 >= v {
                    nv = n2;
                    v = v3;
                }
            }
            (t, nv, v)
        }
    };
    let mut warnings = Vec::new();
    if theta <= THETA_RANGE.0 * 1.01 || theta >= THETA_RANGE.1 / 1.01 {
        warnings.push(format!("fitted theta {theta:e} is at the edge of the search range"));
    }
    Ok(HyperparameterFit {
        config: KernelConfig::new(theta, noise_var)?,
        log_likelihood: ll,
        warnings,
    })
}
