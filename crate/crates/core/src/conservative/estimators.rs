use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::SignedDistanceSample;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Resampling and tail-bound settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailBoundConfig {
    /// Bootstrap resamples `B`, at least 100.
    pub bootstrap_resamples: usize,
    /// Log-spaced grid for the infimum over `u > 0`.
    pub u_min: f64,
    pub u_max: f64,
    /// At least 20.
    pub u_points: usize,
}

impl Default for TailBoundConfig {
    fn default() -> Self {
        Self {
            bootstrap_resamples: 2000,
            u_min: 1e-4,
            u_max: 1e4,
            u_points: 40,
        }
    }
}

impl TailBoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bootstrap_resamples < 100 {
            return Err(Error::InvalidInput(format!(
                "bootstrap needs at least 100 resamples, got {}",
                self.bootstrap_resamples
            )));
        }
        if self.u_points < 20 || !(self.u_min > 0.0 && self.u_min < self.u_max) {
            return Err(Error::InvalidInput("u grid needs >= 20 points on 0 < u_min < u_max".into()));
        }
        Ok(())
    }
}

/// Mean over `B` resamples of `(sample mean, fraction of positive draws)`.
fn bootstrap_stats(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let k = values.len();
    let per: Vec<(f64, f64)> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, Stream::Bootstrap, b as u64);
            let mut sum = 0.0;
            let mut pos = 0usize;
            for _ in 0..k {
                let v = values[r.random_range(0..k)];
                sum += v;
                pos += usize::from(v > 0.0);
            }
            (sum / k as f64, pos as f64 / k as f64)
        })
        .collect();
    let (m, p) = per
        .iter()
        .fold((0.0, 0.0), |(a, b), (m, p)| (a + m, b + p));
    (m / resamples as f64, p / resamples as f64)
}

/// `E_boot[S]`: the average of `B` resampled means.
pub fn bootstrap_mean(s: &SignedDistanceSample, resamples: usize, seed: u64) -> Result<f64> {
    check(s, resamples)?;
    Ok(bootstrap_stats(&s.values, resamples, seed).0)
}

/// `E_boot[𝟙{S>0}] = (1/B) Σ_b #{s_k^(b) > 0}/K`
pub fn bootstrap_conservativeness(s: &SignedDistanceSample, resamples: usize, seed: u64) -> Result<f64> {
    check(s, resamples)?;
    Ok(bootstrap_stats(&s.values, resamples, seed).1)
}

pub(crate) fn bootstrap_both(s: &SignedDistanceSample, resamples: usize, seed: u64) -> (f64, f64) {
    bootstrap_stats(&s.values, resamples, seed)
}

fn check(s: &SignedDistanceSample, resamples: usize) -> Result<()> {
    if resamples == 0 || s.values.is_empty() {
        return Err(Error::InvalidInput("bootstrap needs B >= 1 and a non-empty sample".into()));
    }
    Ok(())
}

/// `ln[(1/n) Σ exp(u(|s_k − c| − ε))]` in log-sum-exp form.
fn log_bound(dev: &[f64], max_dev: f64, eps: f64, u: f64) -> f64 {
    let sum: f64 = dev.iter().map(|d| (u * (d - max_dev)).exp()).sum();
    u * (max_dev - eps) + (sum / dev.len() as f64).ln()
}

/// Empirical Chernoff bound on `P[|S − c| > ε]`:
/// `χ(ε) = inf_{u>0} (1/n) Σ exp(u(|s_k − c| − ε))`, clamped to `[0, 1]`.
///
/// The objective is log-convex in `u`; the infimum is located on a log grid
/// and refined by golden-section search between the neighbouring grid nodes.
pub fn chernoff_bound(s: &SignedDistanceSample, eps: f64, center: f64, cfg: &TailBoundConfig) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
    }
    if s.values.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    cfg.validate()?;
    let dev: Vec<f64> = s.values.iter().map(|v| (v - center).abs()).collect();
    let max_dev = dev.iter().copied().fold(0.0, f64::max);
    let g = |u: f64| log_bound(&dev, max_dev, eps, u);

    let (a, b) = (cfg.u_min.ln(), cfg.u_max.ln());
    let n = cfg.u_points;
    let grid: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&t| g(t.exp())).collect();
    let (ibest, mut best) = vals
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (grid[ibest.saturating_sub(1)], grid[(ibest + 1).min(n - 1)]);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut gc, mut gd) = (g(c.exp()), g(d.exp()));
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        if gc <= gd {
            hi = d;
            d = c;
            gd = gc;
            c = hi - inv_phi * (hi - lo);
            gc = g(c.exp());
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + inv_phi * (hi - lo);
            gd = g(d.exp());
        }
    }
    best = best.min(gc).min(gd);
    Ok(best.exp().clamp(0.0, 1.0))
}
