use serde::{Deserialize, Serialize};

use super::estimators::{bootstrap_both, chernoff_bound, TailBoundConfig};
use super::table::{SignedDistanceTable, SplitTable};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};
use crate::surrogate::BiasedSurrogate;

/// Probability estimator driving the bisection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `1 − χ(E_boot[S])`, a lower estimate of `P[S > 0]`.
    #[default]
    Chernoff,
    /// `E_boot[𝟙{S > 0}]`
    Bootstrap,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chernoff" => Ok(Self::Chernoff),
            "bootstrap" => Ok(Self::Bootstrap),
            _ => Err(Error::InvalidInput(format!("unknown method `{s}` (chernoff|bootstrap)"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Chernoff => "chernoff",
            Self::Bootstrap => "bootstrap",
        })
    }
}

/// One bisection step: the bias tried and the probability estimated there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub beta: f64,
    pub estimate: f64,
    /// `E_boot[S]` at this bias.
    pub mean_signed_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasCalibration {
    pub beta: f64,
    pub achieved_probability: f64,
    pub method: Method,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
    pub warnings: Vec<String>,
    /// Estimate at `β = 0`, checked before bisecting.
    pub base_probability: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub tau: f64,
    pub delta: f64,
    pub beta_max: f64,
    /// Draws `K` of `S^(β)` per iteration; `None` means `s · N`.
    pub draws: Option<usize>,
    pub tail: TailBoundConfig,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            tau: 0.95,
            delta: 0.01,
            beta_max: 10.0,
            draws: None,
            tail: TailBoundConfig::default(),
            max_iter: 60,
            seed: 0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidInput(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidInput(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.beta_max > 0.0 && self.beta_max.is_finite()) {
            return Err(Error::InvalidInput(format!("beta_max must be positive, got {}", self.beta_max)));
        }
        if self.draws == Some(0) || self.max_iter == 0 {
            return Err(Error::InvalidInput("draw count and iteration cap must be >= 1".into()));
        }
        self.tail.validate()
    }
}

// Stream indices for the two bracket probes, kept clear of iteration indices.
const BASE_PROBE: u64 = u64::MAX;
const TOP_PROBE: u64 = u64::MAX - 1;

struct Oracle<'a> {
    split: SplitTable<'a>,
    method: Method,
    cfg: CalibrationConfig,
    draws: usize,
}

impl Oracle<'_> {
    /// `(probability estimate, E_boot[S])` at `beta` using the streams of step `index`.
    fn eval(&self, beta: f64, index: u64) -> Result<(f64, f64)> {
        let sample = self.split.draw(beta, self.draws, self.cfg.seed, index);
        let boot_seed = derive_seed(self.cfg.seed, Stream::Calibration, index);
        let (mean, positive) = bootstrap_both(&sample, self.cfg.tail.bootstrap_resamples, boot_seed);
        let est = match self.method {
            Method::Bootstrap => positive,
            Method::Chernoff if mean <= 0.0 => 0.0,
            Method::Chernoff => 1.0 - chernoff_bound(&sample, mean, mean, &self.cfg.tail)?,
        };
        Ok((est, mean))
    }
}

/// Bisection on the bias until the conservativeness estimate is within `δ`
/// of `τ`.
///
/// Before bisecting, the estimate is probed at `β = 0` (a base level more
/// than two binomial standard errors above `τ + δ` cannot be calibrated down
/// to `τ`) and at `β_m` (which must reach
/// `τ − δ`). Each step draws its sample and resamples from streams derived
/// from `(seed, step)`. If the bracket shrinks below `1e-9 · β_m` or the cap
/// is hit, the smallest bias known to exceed `τ` is returned with a warning.
pub fn calibrate<S: BiasedSurrogate + ?Sized>(
    table: &SignedDistanceTable,
    surrogate: &S,
    method: Method,
    cfg: &CalibrationConfig,
) -> Result<BiasCalibration> {
    cfg.validate()?;
    let split = SplitTable::new(table, surrogate)?;
    let draws = cfg
        .draws
        .unwrap_or(table.locations() * table.per_location());
    let oracle = Oracle { split, method, cfg: *cfg, draws };
    let mut warnings = surrogate.diagnostics();

    let (base, _) = oracle.eval(0.0, BASE_PROBE)?;
    // two binomial standard errors of the probe, so sampling noise alone
    // does not reject a target close to the base level
    let margin = 2.0 * (base * (1.0 - base) / draws as f64).sqrt();
    if base - margin > cfg.tau + cfg.delta {
        return Err(Error::BelowBaseLevel { tau: cfg.tau, base });
    }
    let (top, top_mean) = oracle.eval(cfg.beta_max, TOP_PROBE)?;
    if top < cfg.tau - cfg.delta {
        return Err(Error::BracketExhausted {
            reason: format!(
                "estimate {top:.4} at beta_max = {} stays below tau - delta = {:.4}",
                cfg.beta_max,
                cfg.tau - cfg.delta
            ),
            trace: vec![TraceEntry { beta: cfg.beta_max, estimate: top, mean_signed_distance: top_mean }],
        });
    }

    let (mut lo, mut hi) = (0.0, cfg.beta_max);
    let mut best = (cfg.beta_max, top);
    let mut beta = cfg.beta_max / 2.0;
    let mut trace = Vec::new();
    for n in 0..cfg.max_iter {
        let (est, mean) = oracle.eval(beta, n as u64)?;
        trace.push(TraceEntry { beta, estimate: est, mean_signed_distance: mean });
        if (est - cfg.tau).abs() <= cfg.delta {
            return Ok(BiasCalibration {
                beta,
                achieved_probability: est,
                method,
                iterations: trace.len(),
                trace,
                warnings,
                base_probability: base,
            });
        }
        if method == Method::Chernoff && mean <= 0.0 {
            lo = beta;
        } else if est > cfg.tau {
            hi = beta;
            best = (beta, est);
        } else {
            lo = beta;
        }
        if hi - lo < 1e-9 * cfg.beta_max {
            warnings.push(format!(
                "bracket collapsed at beta = {beta:e} without reaching |estimate - tau| <= delta"
            ));
            break;
        }
        beta = 0.5 * (lo + hi);
    }
    if trace.len() == cfg.max_iter {
        warnings.push(format!("iteration cap {} reached", cfg.max_iter));
    }
    Ok(BiasCalibration {
        beta: best.0,
        achieved_probability: best.1,
        method,
        iterations: trace.len(),
        trace,
        warnings,
        base_probability: base,
    })
}

/// Tail-bound calibration: bisect on `1 − χ(E_boot[S])`.
pub fn calibrate_chernoff<S: BiasedSurrogate + ?Sized>(
    table: &SignedDistanceTable,
    surrogate: &S,
    cfg: &CalibrationConfig,
) -> Result<BiasCalibration> {
    calibrate(table, surrogate, Method::Chernoff, cfg)
}

/// Sampling calibration: bisect on `E_boot[𝟙{S > 0}]`.
pub fn calibrate_bootstrap<S: BiasedSurrogate + ?Sized>(
    table: &SignedDistanceTable,
    surrogate: &S,
    cfg: &CalibrationConfig,
) -> Result<BiasCalibration> {
    calibrate(table, surrogate, Method::Bootstrap, cfg)
}

/// Smallest bias guaranteeing `E[S^(β)] ≥ ε` over the table:
/// `(ε − mean(μ − f)) / mean(V)`, floored at zero.
pub fn bias_for_mean<S: BiasedSurrogate + ?Sized>(
    table: &SignedDistanceTable,
    surrogate: &S,
    eps: f64,
) -> Result<f64> {
    let (u, v) = SplitTable::new(table, surrogate)?.means();
    if !(v > 0.0) {
        return Err(Error::InvalidInput(format!("mean bias weight {v} is not positive")));
    }
    Ok(((eps - u) / v).max(0.0))
}
