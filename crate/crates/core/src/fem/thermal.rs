use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::mesh::{build_mesh, DesignField, TriMesh};
use super::solver::{assemble_solve, diamond_source, energy_gradient};
use crate::active_subspace::{decompose, estimate_covariance, ActiveSubspace};
use crate::conservative::{
    build_table, build_training, calibrate, BiasCalibration, CalibrationConfig, Method, SignedDistanceTable, TailBoundConfig,
};
use crate::error::{Error, Result};
use crate::function::{Counting, Domain, GradientSource, ScalarFunction};
use crate::reduced::{solve_full, solve_reduced, FullConfig, ReducedConfig, ReducedProblem};
use crate::surrogate::{fit_linear, BiasedSurrogate, LinearSurrogate, TrainingSet};

/// Minimum-volume design under a heat-compliance bound.
#[derive(Clone, Debug)]
pub struct ThermalProblem {
    pub mesh: TriMesh,
    pub k1: f64,
    pub k2: f64,
    pub e_max: f64,
    areas: Vec<f64>,
}

impl ThermalProblem {
    pub fn new(n: usize, k1: f64, k2: f64, e_max: f64) -> Result<Self> {
        if !(e_max > 0.0) {
            return Err(Error::InvalidInput(format!("energy bound must be positive, got {e_max}")));
        }
        let mesh = build_mesh(n)?;
        let areas = mesh.areas();
        Ok(Self { mesh, k1, k2, e_max, areas })
    }

    /// Design dimension `D` (one variable per element).
    pub fn dim(&self) -> usize {
        self.mesh.element_count()
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// `(E(θ), ∂E/∂θ)`
    pub fn energy_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let t = DesignField::new(&self.mesh, theta.to_vec())?;
        let sol = assemble_solve(&self.mesh, &t, self.k1, self.k2, &diamond_source)?;
        let g = energy_gradient(&sol, &self.mesh, &t, self.k1, self.k2)?;
        Ok((sol.energy, g))
    }

    pub fn energy(&self, theta: &[f64]) -> Result<f64> {
        let t = DesignField::new(&self.mesh, theta.to_vec())?;
        Ok(assemble_solve(&self.mesh, &t, self.k1, self.k2, &diamond_source)?.energy)
    }

    pub fn volume(&self, theta: &[f64]) -> f64 {
        theta.iter().zip(&self.areas).map(|(t, a)| t * a).sum()
    }

    /// Percentage by which `E(θ)` exceeds the bound, 0 when satisfied.
    pub fn violation_pct(&self, energy: f64) -> f64 {
        100.0 * (energy - self.e_max).max(0.0) / self.e_max
    }
}

/// `θ = (x + 1)/2`
pub fn theta_from_unit(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| 0.5 * (v + 1.0)).collect()
}

/// `G(x) = E(θ(x)) − E_max` on `[-1, 1]^D`.
pub struct RescaledConstraint<'a>(pub &'a ThermalProblem);

impl GradientSource for RescaledConstraint<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self.0.energy_and_gradient(&theta_from_unit(x)) {
            Ok((e, g)) => (e - self.0.e_max, g.into_iter().map(|v| 0.5 * v).collect()),
            Err(_) => (f64::NAN, vec![f64::NAN; x.len()]),
        }
    }
}

impl ScalarFunction for RescaledConstraint<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.0.energy(&theta_from_unit(x)).map_or(f64::NAN, |e| e - self.0.e_max)
    }
}

/// `E(θ) − E_max` on `[0, 1]^D`.
struct DesignConstraint<'a>(&'a ThermalProblem);

impl GradientSource for DesignConstraint<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn evaluate(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        match self.0.energy_and_gradient(theta) {
            Ok((e, g)) => (e - self.0.e_max, g),
            Err(_) => (f64::NAN, vec![f64::NAN; theta.len()]),
        }
    }
}

struct DesignVolume<'a>(&'a ThermalProblem);

impl GradientSource for DesignVolume<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn evaluate(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        (self.0.volume(theta), self.0.areas.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalConfig {
    pub n: usize,
    pub k1: f64,
    pub k2: f64,
    pub e_max: f64,
    /// Gradient samples `M`; `None` means `100 · D`.
    pub samples_m: Option<usize>,
    pub train_s: usize,
    pub samples_n: usize,
    /// Exponents `i` of the ladder `τ = 1 − 10⁻ⁱ`, `δ = 10⁻ⁱ⁻¹`.
    pub ladder: Vec<u32>,
    pub beta_max: f64,
    pub bootstrap_b: usize,
    pub seed: u64,
    pub full_baseline: bool,
    pub training: TrainingLocations,
    pub method: Method,
}

/// Where the surrogate's training locations `y_k` are placed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingLocations {
    /// `y_k = W1ᵀx_k` with `x_k ∼ ρ`.
    Projected,
    /// Midpoints of `s` equal cells of the projected interval.
    #[default]
    EvenGrid,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        Self {
            n: 16,
            k1: 2.0,
            k2: 1.0,
            e_max: 1.35,
            samples_m: None,
            train_s: 50,
            samples_n: 10,
            ladder: vec![3, 4, 5, 6],
            beta_max: 1.0,
            bootstrap_b: 2000,
            seed: 0,
            full_baseline: true,
            training: TrainingLocations::EvenGrid,
            method: Method::Chernoff,
        }
    }
}

/// One row of the design comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub problem: String,
    pub tau: Option<f64>,
    pub beta: Option<f64>,
    pub objective_min: Option<f64>,
    pub energy: Option<f64>,
    pub exact_violation_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
    /// Element-wise design `θ`.
    pub design: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalReport {
    pub config: ThermalConfig,
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    pub spectrum_ratio: f64,
    pub variance_captured: f64,
    pub subspace: ActiveSubspace,
    pub surrogate: LinearSurrogate,
    /// Exact-constraint evaluations spent building the training data.
    pub training_evaluations: usize,
    pub calibrations: Vec<BiasCalibration>,
    pub rows: Vec<DesignRow>,
    pub warnings: Vec<String>,
}

/// Subspace, training table and linear constraint surrogate of the thermal
/// problem, with the exactly linear volume objective.
pub struct ThermalModel {
    pub problem: ThermalProblem,
    pub domain: Domain,
    pub space: ActiveSubspace,
    pub spectrum_ratio: f64,
    pub training: TrainingSet,
    pub table: SignedDistanceTable,
    /// Unbiased constraint surrogate of `E(θ(x)) − E_max`.
    pub surrogate: LinearSurrogate,
    /// Exact-constraint evaluations spent building the table.
    pub training_evaluations: usize,
    pub warnings: Vec<String>,
    objective: LinearSurrogate,
    u1: DMatrix<f64>,
}

impl ThermalModel {
    pub fn build(cfg: &ThermalConfig) -> Result<Self> {
        let problem = ThermalProblem::new(cfg.n, cfg.k1, cfg.k2, cfg.e_max)?;
        let dim = problem.dim();
        let domain = Domain::cube(dim, -1.0, 1.0)?;
        let g = RescaledConstraint(&problem);
        let m = cfg.samples_m.unwrap_or(100 * dim);
        let cov = estimate_covariance(&g, &domain, m, cfg.seed)?;
        let space = decompose(&cov, 1)?;
        space.variance_captured()?;
        let mut warnings = Vec::new();
        if space.degenerate_gap {
            warnings.push("leading eigenvalue gap is degenerate; the active direction is not unique".into());
        }
        let lam = &space.eigenvalues;
        let spectrum_ratio = if lam[1] > 0.0 { lam[0] / lam[1] } else { f64::INFINITY };

        let counted = Counting::new(RescaledConstraint(&problem));
        let (training, table) = match cfg.training {
            TrainingLocations::Projected => {
                build_training(&space, &domain, &counted, cfg.train_s, cfg.samples_n, cfg.seed)?
            }
            TrainingLocations::EvenGrid => {
                if cfg.train_s == 0 {
                    return Err(Error::InvalidInput("need at least one training location".into()));
                }
                let (a, b) = space.projected_bounds(&domain)[0];
                let s = cfg.train_s;
                let y: Vec<Vec<f64>> = (0..s).map(|k| vec![a + (b - a) * (k as f64 + 0.5) / s as f64]).collect();
                let table = build_table(&space, &domain, &counted, &y, cfg.samples_n, cfg.seed)?;
                (table.training_set()?, table)
            }
        };
        let training_evaluations = counted.calls();
        let surrogate = fit_linear(&training)?;

        // V(θ(x)) = A/2 + ½ aᵀx is exactly linear along U1 = a/‖a‖.
        let total: f64 = problem.areas().iter().sum();
        let norm = problem.areas().iter().map(|a| a * a).sum::<f64>().sqrt();
        let u1 = DMatrix::from_iterator(dim, 1, problem.areas().iter().map(|a| a / norm));
        let objective = LinearSurrogate { slope: vec![0.5 * norm], intercept: 0.5 * total, bias: 0.0 };
        Ok(Self {
            problem,
            domain,
            space,
            spectrum_ratio,
            training,
            table,
            surrogate,
            training_evaluations,
            warnings,
            objective,
            u1,
        })
    }

    /// Reduced optimum with the constraint surrogate biased by `beta`,
    /// pulled back and checked against the exact energy.
    pub fn design_row(&self, name: &str, tau: Option<f64>, beta: f64) -> DesignRow {
        let p = &self.problem;
        let mut constraint = self.surrogate.clone();
        constraint.set_bias(beta);
        let solved = ReducedProblem::new(
            &self.objective,
            self.u1.clone(),
            &constraint,
            self.space.w1.clone(),
            self.domain.clone(),
        )
        .and_then(|rp| solve_reduced(&rp, &ReducedConfig::default()));
        match solved {
            Ok(s) => {
                let theta = theta_from_unit(&s.x_star);
                let e = p.energy(&theta).ok();
                DesignRow {
                    problem: name.into(),
                    tau,
                    beta: Some(beta),
                    objective_min: Some(p.volume(&theta)),
                    energy: e,
                    exact_violation_pct: e.map(|e| p.violation_pct(e)),
                    note: None,
                    design: theta,
                }
            }
            Err(err) => DesignRow::failed(name, tau, Some(beta), err.to_string()),
        }
    }

    /// Full-space minimum volume design by the augmented Lagrangian solver,
    /// started from `θ ≡ 0.5`.
    pub fn full_row(&self) -> Result<DesignRow> {
        let p = &self.problem;
        let full = solve_full(
            &DesignVolume(p),
            Some(&DesignConstraint(p)),
            &Domain::cube(p.dim(), 0.0, 1.0)?,
            None,
            &FullConfig::default(),
        )?;
        let e = full.constraint_value + p.e_max;
        Ok(DesignRow {
            problem: "full-size".into(),
            tau: None,
            beta: None,
            objective_min: Some(full.value),
            energy: Some(e),
            exact_violation_pct: Some(p.violation_pct(e)),
            note: (!full.converged).then(|| format!("solver stopped with KKT residual {:e}", full.kkt_residual)),
            design: full.x,
        })
    }

    /// Calibration settings for rung `i` of the ladder.
    pub fn rung_config(cfg: &ThermalConfig, i: u32) -> CalibrationConfig {
        CalibrationConfig {
            tau: 1.0 - 10f64.powi(-(i as i32)),
            delta: 10f64.powi(-(i as i32) - 1),
            beta_max: cfg.beta_max,
            draws: None,
            tail: TailBoundConfig { bootstrap_resamples: cfg.bootstrap_b, ..Default::default() },
            max_iter: 60,
            seed: cfg.seed,
        }
    }
}

impl DesignRow {
    fn failed(name: &str, tau: Option<f64>, beta: Option<f64>, note: String) -> Self {
        Self {
            problem: name.into(),
            tau,
            beta,
            objective_min: None,
            energy: None,
            exact_violation_pct: None,
            note: Some(note),
            design: Vec::new(),
        }
    }
}

/// Spectrum, linear surrogate, bias ladder and reduced optima of the
/// thermal design problem, plus an optional full-space baseline.
pub fn run_thermal_pipeline(cfg: &ThermalConfig) -> Result<ThermalReport> {
    let model = ThermalModel::build(cfg)?;
    let mut warnings = model.warnings.clone();
    let mut rows = Vec::new();
    if cfg.full_baseline {
        rows.push(model.full_row()?);
    }
    rows.push(model.design_row("asm", None, 0.0));

    let mut calibrations = Vec::new();
    for &i in &cfg.ladder {
        let ccfg = ThermalModel::rung_config(cfg, i);
        let name = format!("casm-i{i}");
        match calibrate(&model.table, &model.surrogate, cfg.method, &ccfg) {
            Ok(cal) => {
                rows.push(model.design_row(&name, Some(ccfg.tau), cal.beta));
                calibrations.push(cal);
            }
            Err(err) => {
                warnings.push(format!("{name}: {err}"));
                rows.push(DesignRow::failed(&name, Some(ccfg.tau), None, err.to_string()));
            }
        }
    }

    Ok(ThermalReport {
        config: cfg.clone(),
        dim: model.problem.dim(),
        eigenvalues: model.space.eigenvalues.clone(),
        spectrum_ratio: model.spectrum_ratio,
        variance_captured: model.space.variance_captured()?,
        training_evaluations: model.training_evaluations,
        subspace: model.space,
        surrogate: model.surrogate,
        calibrations,
        rows,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Stream};
    use rand::Rng;

    #[test]
    fn adjoint_gradient_matches_central_differences() {
        let p = ThermalProblem::new(8, 2.0, 1.0, 1.0).unwrap();
        let mut r = rng::stream(1, Stream::Validation, 0);
        let theta: Vec<f64> = (0..p.dim()).map(|_| r.random_range(0.2..0.8)).collect();
        let (_, g) = p.energy_and_gradient(&theta).unwrap();
        for _ in 0..10 {
            let i = r.random_range(0..p.dim());
            let h = 1e-5;
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (p.energy(&tp).unwrap() - p.energy(&tm).unwrap()) / (2.0 * h);
            assert!((g[i] - fd).abs() <= 1e-4 * fd.abs(), "{i}: {} vs {fd}", g[i]);
            assert!(g[i] <= 0.0 && fd <= 0.0);
        }
    }

    #[test]
    fn rescaled_gradient_is_chain_ruled() {
        let p = ThermalProblem::new(4, 2.0, 1.0, 0.5).unwrap();
        let x = vec![0.2; p.dim()];
        let (v, g) = RescaledConstraint(&p).evaluate(&x);
        let (e, ge) = p.energy_and_gradient(&theta_from_unit(&x)).unwrap();
        assert_eq!(v, e - 0.5);
        assert!(g.iter().zip(&ge).all(|(a, b)| *a == 0.5 * b));
    }
}
