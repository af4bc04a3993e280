//! Subspace, training table and GPR surrogate for a constraint with
//! gradients, ready for bias calibration.

use serde::{Deserialize, Serialize};

use crate::active_subspace::{decompose, estimate_covariance, ActiveSubspace, CovarianceEstimate};
use crate::conservative::{build_training, SignedDistanceTable};
use crate::error::Result;
use crate::function::{Counting, Domain, GradientSource, ScalarFunction};
use crate::surrogate::{fit_gpr, fit_hyperparameters, GprSurrogate, HyperparameterFit, NoisePolicy, TrainingSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GprPipelineConfig {
    /// Gradient samples `M`; `None` means `100 · D`.
    pub samples_m: Option<usize>,
    pub active_dim: usize,
    /// Training locations `s`.
    pub train_s: usize,
    /// Slice samples `N` per location.
    pub samples_n: usize,
    pub noise: NoisePolicy,
    pub seed: u64,
}

impl Default for GprPipelineConfig {
    fn default() -> Self {
        Self {
            samples_m: None,
            active_dim: 1,
            train_s: 150,
            samples_n: 1,
            noise: NoisePolicy::Fit,
            seed: 0,
        }
    }
}

pub struct GprPipeline {
    pub covariance: CovarianceEstimate,
    pub space: ActiveSubspace,
    pub training: TrainingSet,
    pub table: SignedDistanceTable,
    pub kernel_fit: HyperparameterFit,
    /// Unbiased surrogate.
    pub surrogate: GprSurrogate,
    /// Exact evaluations spent on the training table.
    pub training_evaluations: usize,
    pub warnings: Vec<String>,
}

/// Estimate the subspace, tabulate `s · N` slice evaluations at projected
/// uniform points and fit the GPR on their averages.
pub fn fit_gpr_pipeline<G>(g: &G, dom: &Domain, cfg: &GprPipelineConfig) -> Result<GprPipeline>
where
    G: GradientSource + ScalarFunction + ?Sized,
{
    let m = cfg.samples_m.unwrap_or(100 * dom.dim());
    let covariance = estimate_covariance(g, dom, m, cfg.seed)?;
    let space = decompose(&covariance, cfg.active_dim)?;
    let mut warnings = Vec::new();
    if space.degenerate_gap {
        warnings.push("eigenvalue gap at the active dimension is degenerate; the subspace is not unique".into());
    }
    let counted = Counting::new(g);
    let (training, table) = build_training(&space, dom, &counted, cfg.train_s, cfg.samples_n, cfg.seed)?;
    let kernel_fit = fit_hyperparameters(&training, cfg.noise)?;
    warnings.extend(kernel_fit.warnings.iter().cloned());
    let surrogate = fit_gpr(&training, &kernel_fit.config)?;
    Ok(GprPipeline {
        covariance,
        space,
        training,
        table,
        kernel_fit,
        surrogate,
        training_evaluations: counted.calls(),
        warnings,
    })
}
