//! Signed-distance sampling, conservativeness estimators and bias calibration.

mod calibrate;
mod estimators;
mod table;
mod validate;

pub use calibrate::{
    bias_for_mean, calibrate, calibrate_bootstrap, calibrate_chernoff, BiasCalibration, CalibrationConfig, Method,
    TraceEntry,
};
pub use estimators::{bootstrap_conservativeness, bootstrap_mean, chernoff_bound, TailBoundConfig};
pub use table::{build_table, build_training, sample_signed_distance, SignedDistanceSample, SignedDistanceTable};
pub use validate::{
    empirical_conservativeness, saturation_bias, unfeasibility_ratio, UnfeasibilityRatio, ValidationSample,
};
