//! Two-material heat conduction on `[-1, 1]²` with piecewise-linear elements.

mod mesh;
mod solver;

pub use mesh::{build_mesh, DesignField, TriMesh};
pub use solver::{
    assemble_solve, diamond_source, element_grad_sq, energy, energy_gradient, l2_error, stiffness_dense, volume,
    FemSolution,
};
mod thermal;

pub use thermal::{
    run_thermal_pipeline, theta_from_unit, DesignRow, RescaledConstraint, ThermalConfig, ThermalModel, ThermalProblem, ThermalReport, TrainingLocations,
};
