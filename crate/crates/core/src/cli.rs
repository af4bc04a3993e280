//! Command-line front end.
//!
//! Settings come from built-in defaults, then an optional JSON config file,
//! then flags. Outputs are written to the output directory; wall-clock
//! timings go to `timings.log` so every CSV and JSON file is reproducible
//! from the seed.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::active_subspace::{decompose, estimate_covariance, write_eigenvalues_csv, ActiveSubspace};
use crate::conservative::{
    calibrate, sample_signed_distance, BiasCalibration, CalibrationConfig, Method, TailBoundConfig, ValidationSample,
};
use crate::error::{Error, Result};
use crate::fem::{run_thermal_pipeline, DesignField, RescaledConstraint, ThermalConfig, ThermalModel, ThermalProblem};
use crate::function::{Domain, GradientSource, ScalarFunction};
use crate::pipeline::{fit_gpr_pipeline, GprPipeline, GprPipelineConfig};
use crate::problems::{ProblemKind, QuadraticForm, ToyConstraint};
use crate::reduced::{solve_reduced, ReducedConfig, ReducedProblem};
use crate::surrogate::{BiasedSurrogate, LinearSurrogate, NoisePolicy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

/// Exit status for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::DimensionOutOfRange { .. } | Error::Io(_) | Error::Json(_) | Error::Csv(_) => {
            EXIT_CONFIG
        }
        Error::BelowBaseLevel { .. } | Error::BracketExhausted { .. } => EXIT_INFEASIBLE,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "casm", version, about = "Conservative active-subspace surrogates for expensive constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Gradient-covariance eigenvalues and the active subspace.
    Spectrum,
    /// Fit the surrogate, calibrate its bias and validate on fresh points.
    Calibrate,
    /// Calibrate, then tabulate exact and surrogate constraints on a grid.
    Feasibility,
    /// Reduced optimization with unbiased and calibrated constraints.
    Optimize,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Spectrum => "spectrum",
            Self::Calibrate => "calibrate",
            Self::Feasibility => "feasibility",
            Self::Optimize => "optimize",
        }
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// JSON file with run settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// toy, thermal or custom:<path to quadratic-form JSON>.
    #[arg(long, global = true)]
    pub problem: Option<ProblemKind>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub beta_max: Option<f64>,
    /// chernoff or bootstrap.
    #[arg(long, global = true)]
    pub method: Option<Method>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Gradient samples for the covariance.
    #[arg(long, global = true)]
    pub samples_m: Option<usize>,
    /// Slice samples per training location.
    #[arg(long, global = true)]
    pub samples_n: Option<usize>,
    /// Training locations.
    #[arg(long, global = true)]
    pub train_s: Option<usize>,
    #[arg(long, global = true)]
    pub bootstrap_b: Option<usize>,
    #[arg(long, global = true)]
    pub validation_n: Option<usize>,
    #[arg(long, global = true)]
    pub mesh_n: Option<usize>,
    #[arg(long, global = true)]
    pub emax: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

/// Sample counts. Unset entries take per-problem defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleCounts {
    /// Gradient samples `M` (default `100 · D`).
    pub m: Option<usize>,
    /// Slice samples `N` per training location.
    pub n: Option<usize>,
    /// Training locations `s`.
    pub s: Option<usize>,
    /// Signed-distance draws `K` per bisection step (default `s · N`).
    pub k: Option<usize>,
    /// Bootstrap resamples `B`.
    pub b: Option<usize>,
    /// Fresh validation points.
    pub validation_n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub tau: f64,
    pub delta: f64,
    /// Upper end of the bias bracket (default 10, thermal 1).
    pub beta_max: Option<f64>,
    pub method: Method,
    pub seed: u64,
    pub samples: SampleCounts,
    /// Squares per side of the thermal mesh.
    pub mesh_n: usize,
    /// Thermal energy bound.
    pub emax: f64,
    /// Exponents `i` of the thermal ladder `τ = 1 − 10⁻ⁱ`.
    pub ladder: Vec<u32>,
    /// Omitted from report echoes so reports do not depend on where they
    /// are written.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Toy,
            tau: 0.95,
            delta: 0.01,
            beta_max: None,
            method: Method::Chernoff,
            seed: 0,
            samples: SampleCounts::default(),
            mesh_n: 16,
            emax: 1.35,
            ladder: vec![3, 4, 5, 6],
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("config {}: {e}", path.display())))
    }

    /// Defaults, then the config file named in `flags`, then the flags.
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let mut c = match &flags.config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        let f = flags;
        c.problem = f.problem.clone().unwrap_or(c.problem);
        c.tau = f.tau.unwrap_or(c.tau);
        c.delta = f.delta.unwrap_or(c.delta);
        c.beta_max = f.beta_max.or(c.beta_max);
        c.method = f.method.unwrap_or(c.method);
        c.seed = f.seed.unwrap_or(c.seed);
        c.samples.m = f.samples_m.or(c.samples.m);
        c.samples.n = f.samples_n.or(c.samples.n);
        c.samples.s = f.train_s.or(c.samples.s);
        c.samples.b = f.bootstrap_b.or(c.samples.b);
        c.samples.validation_n = f.validation_n.or(c.samples.validation_n);
        c.mesh_n = f.mesh_n.unwrap_or(c.mesh_n);
        c.emax = f.emax.unwrap_or(c.emax);
        c.output_dir = f.out.clone().or(c.output_dir);
        c.fill_defaults();
        c.validate()?;
        Ok(c)
    }

    /// Per-problem defaults for unset counts. `M` stays unset until the
    /// problem dimension is known.
    pub fn fill_defaults(&mut self) {
        let thermal = self.problem == ProblemKind::Thermal;
        let s = &mut self.samples;
        s.s.get_or_insert(if thermal { 50 } else { 150 });
        s.n.get_or_insert(if thermal { 10 } else { 1 });
        s.b.get_or_insert(2000);
        s.validation_n.get_or_insert(if thermal { 2000 } else { 10_000 });
        self.beta_max.get_or_insert(if thermal { 1.0 } else { 10.0 });
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if !(self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if let Some(b) = self.beta_max {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("beta_max must be positive, got {b}"));
            }
        }
        let s = &self.samples;
        for (name, v) in [("m", s.m), ("n", s.n), ("s", s.s), ("k", s.k), ("validation_n", s.validation_n)] {
            if v == Some(0) {
                return bad(format!("sample count {name} must be at least 1"));
            }
        }
        if let Some(b) = s.b {
            TailBoundConfig { bootstrap_resamples: b, ..Default::default() }.validate()?;
        }
        if self.mesh_n < 2 {
            return bad(format!("mesh_n must be at least 2, got {}", self.mesh_n));
        }
        if !(self.emax > 0.0) {
            return bad(format!("emax must be positive, got {}", self.emax));
        }
        if self.ladder.is_empty() || self.ladder.iter().any(|&i| i == 0 || i > 15) {
            return bad("ladder exponents must be non-empty and within 1..=15".into());
        }
        Ok(())
    }

    /// Output directory, `casm-out` when unset.
    pub fn dir(&self) -> &Path {
        self.output_dir.as_deref().unwrap_or(Path::new("casm-out"))
    }

    fn calibration(&self) -> CalibrationConfig {
        CalibrationConfig {
            tau: self.tau,
            delta: self.delta,
            beta_max: self.beta_max.unwrap_or(10.0),
            draws: self.samples.k,
            tail: TailBoundConfig { bootstrap_resamples: self.samples.b.unwrap_or(2000), ..Default::default() },
            max_iter: 60,
            seed: self.seed,
        }
    }

    fn thermal(&self) -> ThermalConfig {
        ThermalConfig {
            n: self.mesh_n,
            e_max: self.emax,
            samples_m: self.samples.m,
            train_s: self.samples.s.unwrap_or(50),
            samples_n: self.samples.n.unwrap_or(10),
            ladder: self.ladder.clone(),
            beta_max: self.beta_max.unwrap_or(1.0),
            bootstrap_b: self.samples.b.unwrap_or(2000),
            seed: self.seed,
            method: self.method,
            ..ThermalConfig::default()
        }
    }
}

/// One optimum of the reduced problem, checked against the exact constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimumRow {
    pub problem: String,
    pub tau: Option<f64>,
    pub beta: Option<f64>,
    pub objective_min: Option<f64>,
    /// Exact constraint value at the pulled-back point.
    pub exact_constraint: Option<f64>,
    /// Thermal only: percentage by which the energy bound is exceeded.
    pub exact_violation_pct: Option<f64>,
    pub x_star: Vec<f64>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config: RunConfig,
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    pub variance_captured: f64,
    /// `W1`, one entry per input coordinate.
    pub active_direction: Vec<f64>,
    /// Exact evaluations spent on training data.
    pub training_evaluations: Option<usize>,
    pub calibration: Option<BiasCalibration>,
    /// One calibration per rung of the thermal ladder.
    pub ladder: Vec<BiasCalibration>,
    pub conservativeness_observed: Option<f64>,
    /// Unfeasibility ratio; `None` when nothing is surrogate-feasible.
    pub ur: Option<f64>,
    pub optimum: Vec<OptimumRow>,
    pub warnings: Vec<String>,
}

impl RunReport {
    fn new(command: Command, config: &RunConfig, space: &ActiveSubspace) -> Result<Self> {
        Ok(Self {
            command: command.name().into(),
            config: RunConfig { output_dir: None, ..config.clone() },
            dim: space.dim(),
            eigenvalues: space.eigenvalues.clone(),
            variance_captured: space.variance_captured()?,
            active_direction: space.w1.column(0).iter().copied().collect(),
            training_evaluations: None,
            calibration: None,
            ladder: Vec::new(),
            conservativeness_observed: None,
            ur: None,
            optimum: Vec::new(),
            warnings: space
                .degenerate_gap
                .then(|| "eigenvalue gap at the active dimension is degenerate".to_string())
                .into_iter()
                .collect(),
        })
    }
}

/// Wall-clock phases, written apart from the reproducible outputs.
pub struct Timings {
    start: Instant,
    last: Instant,
    lines: Vec<String>,
}

impl Default for Timings {
    fn default() -> Self {
        Self::new()
    }
}

impl Timings {
    pub fn new() -> Self {
        let now = Instant::now();
        Self { start: now, last: now, lines: Vec::new() }
    }

    fn mark(&mut self, phase: &str) {
        let now = Instant::now();
        self.lines.push(format!("{phase}\t{:.3}s", (now - self.last).as_secs_f64()));
        self.last = now;
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let mut f = fs::File::create(dir.join("timings.log"))?;
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        writeln!(f, "total\t{:.3}s", self.start.elapsed().as_secs_f64())?;
        Ok(())
    }
}

trait Constraint: GradientSource + ScalarFunction {}
impl<T: GradientSource + ScalarFunction> Constraint for T {}

/// An analytic constraint on a box.
struct Analytic {
    g: Box<dyn Constraint>,
    domain: Domain,
}

fn analytic_problem(kind: &ProblemKind) -> Result<Analytic> {
    match kind {
        ProblemKind::Toy => Ok(Analytic { g: Box::new(ToyConstraint), domain: ToyConstraint::domain() }),
        ProblemKind::Custom(path) => {
            let q = QuadraticForm::from_path(path)?;
            let domain = q.domain()?;
            Ok(Analytic { g: Box::new(q), domain })
        }
        ProblemKind::Thermal => unreachable!("thermal is handled separately"),
    }
}

fn gpr_pipeline(cfg: &RunConfig, p: &Analytic) -> Result<GprPipeline> {
    fit_gpr_pipeline(
        p.g.as_ref(),
        &p.domain,
        &GprPipelineConfig {
            samples_m: cfg.samples.m,
            active_dim: 1,
            train_s: cfg.samples.s.unwrap_or(150),
            samples_n: cfg.samples.n.unwrap_or(1),
            noise: NoisePolicy::Fit,
            seed: cfg.seed,
        },
    )
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_trace(path: &Path, cal: &BiasCalibration) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "beta", "estimate"])?;
    for (i, t) in cal.trace.iter().enumerate() {
        w.write_record([i.to_string(), fmt(t.beta), fmt(t.estimate)])?;
    }
    w.flush()?;
    Ok(())
}

fn write_samples(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["draw", "signed_distance"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), fmt(*v)])?;
    }
    w.flush()?;
    Ok(())
}

fn opt_field(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Parse `args` (including the program name), run, and return the exit status.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    let dir = cfg.dir();
    fs::create_dir_all(dir)
        .map_err(|e| Error::InvalidInput(format!("cannot create output directory {}: {e}", dir.display())))?;
    let mut timings = Timings::new();
    let report = match cli.command {
        Command::Spectrum => cmd_spectrum(&cfg, &mut timings)?,
        Command::Calibrate => cmd_calibrate(&cfg, &mut timings)?,
        Command::Feasibility => cmd_feasibility(&cfg, &mut timings)?,
        Command::Optimize => cmd_optimize(&cfg, &mut timings)?,
    };
    write_json(&dir.join("report.json"), &report)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    timings.write(dir)
}

fn write_spectrum(dir: &Path, space: &ActiveSubspace) -> Result<()> {
    write_eigenvalues_csv(&dir.join("eigenvalues.csv"), &space.eigenvalues)?;
    write_json(&dir.join("subspace.json"), space)
}

fn print_spectrum(space: &ActiveSubspace) {
    let lam = &space.eigenvalues;
    let top: Vec<String> = lam.iter().take(5).map(|v| format!("{v:.4e}")).collect();
    println!("eigenvalues: {}{}", top.join(" "), if lam.len() > 5 { " ..." } else { "" });
    if lam.len() > 1 && lam[1] > 0.0 {
        println!("lambda1/lambda2: {:.4}", lam[0] / lam[1]);
    }
}

/// Writes `eigenvalues.csv` (`index,lambda`) and `subspace.json`.
pub fn cmd_spectrum(cfg: &RunConfig, timings: &mut Timings) -> Result<RunReport> {
    let space = match cfg.problem {
        ProblemKind::Thermal => {
            let tc = cfg.thermal();
            let p = ThermalProblem::new(tc.n, tc.k1, tc.k2, tc.e_max)?;
            let dom = Domain::cube(p.dim(), -1.0, 1.0)?;
            let m = cfg.samples.m.unwrap_or(100 * p.dim());
            decompose(&estimate_covariance(&RescaledConstraint(&p), &dom, m, cfg.seed)?, 1)?
        }
        _ => {
            let p = analytic_problem(&cfg.problem)?;
            let m = cfg.samples.m.unwrap_or(100 * p.domain.dim());
            decompose(&estimate_covariance(p.g.as_ref(), &p.domain, m, cfg.seed)?, 1)?
        }
    };
    timings.mark("covariance");
    let report = RunReport::new(Command::Spectrum, cfg, &space)?;
    write_spectrum(cfg.dir(), &space)?;
    print_spectrum(&space);
    Ok(report)
}

/// A calibrated analytic-problem run shared by `calibrate`, `feasibility`
/// and `optimize`.
struct Calibrated {
    problem: Analytic,
    pipeline: GprPipeline,
    calibration: BiasCalibration,
    report: RunReport,
}

fn calibrate_analytic(command: Command, cfg: &RunConfig, timings: &mut Timings) -> Result<Calibrated> {
    let problem = analytic_problem(&cfg.problem)?;
    let pipeline = gpr_pipeline(cfg, &problem)?;
    timings.mark("training");
    let calibration = calibrate(&pipeline.table, &pipeline.surrogate, cfg.method, &cfg.calibration())?;
    timings.mark("calibration");
    let biased = pipeline.surrogate.clone().with_bias(calibration.beta);
    let v = ValidationSample::draw(
        &biased,
        &pipeline.space,
        &problem.domain,
        problem.g.as_ref(),
        cfg.samples.validation_n.unwrap_or(10_000),
        cfg.seed,
    )?;
    timings.mark("validation");

    let mut report = RunReport::new(command, cfg, &pipeline.space)?;
    report.training_evaluations = Some(pipeline.training_evaluations);
    report.conservativeness_observed = Some(v.conservativeness());
    let ur = v.unfeasibility();
    report.ur = ur.ratio;
    if ur.empty_feasible_set() {
        report.warnings.push("no validation point is feasible for the biased surrogate".into());
    }
    report.warnings.extend(pipeline.warnings.iter().cloned());
    report.warnings.extend(calibration.warnings.iter().cloned());
    report.calibration = Some(calibration.clone());
    print_calibration(&calibration, &report);
    Ok(Calibrated { problem, pipeline, calibration, report })
}

fn print_calibration(cal: &BiasCalibration, report: &RunReport) {
    println!(
        "{} calibration: beta = {:.6e}, estimate = {:.4}, iterations = {}",
        cal.method, cal.beta, cal.achieved_probability, cal.iterations
    );
    if let Some(c) = report.conservativeness_observed {
        println!("observed conservativeness: {c:.4}");
    }
    match report.ur {
        Some(u) => println!("unfeasibility ratio: {u:.4}"),
        None => println!("unfeasibility ratio: undefined (empty feasible set)"),
    }
}

/// Writes `report.json`, `trace.csv` (`iteration,beta,estimate`) and
/// `samples.csv` (the signed-distance draws at the final bias).
pub fn cmd_calibrate(cfg: &RunConfig, timings: &mut Timings) -> Result<RunReport> {
    let dir = cfg.dir();
    let k = cfg.samples.k;
    if cfg.problem == ProblemKind::Thermal {
        let model = ThermalModel::build(&cfg.thermal())?;
        timings.mark("training");
        let cal = calibrate(&model.table, &model.surrogate, cfg.method, &cfg.calibration())?;
        timings.mark("calibration");
        let mut biased = model.surrogate.clone();
        biased.set_bias(cal.beta);
        let v = ValidationSample::draw(
            &biased,
            &model.space,
            &model.domain,
            &RescaledConstraint(&model.problem),
            cfg.samples.validation_n.unwrap_or(2000),
            cfg.seed,
        )?;
        timings.mark("validation");
        let mut report = RunReport::new(Command::Calibrate, cfg, &model.space)?;
        report.training_evaluations = Some(model.training_evaluations);
        report.conservativeness_observed = Some(v.conservativeness());
        report.ur = v.unfeasibility().ratio;
        report.warnings.extend(model.warnings.iter().cloned());
        report.warnings.extend(cal.warnings.iter().cloned());
        report.calibration = Some(cal.clone());
        print_calibration(&cal, &report);
        write_trace(&dir.join("trace.csv"), &cal)?;
        let draws = k.unwrap_or(model.table.locations() * model.table.per_location());
        let s = sample_signed_distance(&model.table, &biased, draws, cfg.seed)?;
        write_samples(&dir.join("samples.csv"), &s.values)?;
        return Ok(report);
    }
    let c = calibrate_analytic(Command::Calibrate, cfg, timings)?;
    write_trace(&dir.join("trace.csv"), &c.calibration)?;
    let biased = c.pipeline.surrogate.clone().with_bias(c.calibration.beta);
    let t = &c.pipeline.table;
    let s = sample_signed_distance(t, &biased, k.unwrap_or(t.locations() * t.per_location()), cfg.seed)?;
    write_samples(&dir.join("samples.csv"), &s.values)?;
    Ok(c.report)
}

pub const FEASIBILITY_GRID: usize = 201;

/// Writes `grid.csv` (`x1,x2,G_exact,G_surrogate_beta0,G_surrogate_beta`)
/// on a 201 × 201 grid of a two-dimensional problem.
pub fn cmd_feasibility(cfg: &RunConfig, timings: &mut Timings) -> Result<RunReport> {
    if cfg.problem == ProblemKind::Thermal {
        return Err(Error::InvalidInput("feasibility grids need a two-dimensional problem, not thermal".into()));
    }
    let c = calibrate_analytic(Command::Feasibility, cfg, timings)?;
    let dom = &c.problem.domain;
    if dom.dim() != 2 {
        return Err(Error::InvalidInput(format!(
            "feasibility grids need a two-dimensional problem, got dimension {}",
            dom.dim()
        )));
    }
    let unbiased = &c.pipeline.surrogate;
    let biased = unbiased.clone().with_bias(c.calibration.beta);
    let mut w = csv::Writer::from_path(cfg.dir().join("grid.csv"))?;
    w.write_record(["x1", "x2", "G_exact", "G_surrogate_beta0", "G_surrogate_beta"])?;
    let last = (FEASIBILITY_GRID - 1) as f64;
    let coord = |d: usize, i: usize| dom.lower()[d] + dom.width(d) * i as f64 / last;
    for j in 0..FEASIBILITY_GRID {
        for i in 0..FEASIBILITY_GRID {
            let x = [coord(0, i), coord(1, j)];
            let y = c.pipeline.space.project(&x);
            w.write_record([
                fmt(x[0]),
                fmt(x[1]),
                fmt(c.problem.g.value(&x)),
                fmt(unbiased.predict(&y)),
                fmt(biased.predict(&y)),
            ])?;
        }
    }
    w.flush()?;
    timings.mark("grid");
    Ok(c.report)
}

/// Thermal: writes `table2.csv` (`problem,beta,objective_min,exact_violation_pct`)
/// and one `design_<row>.csv` / `.txt` per row. Analytic problems minimize
/// `Σ xᵢ` and write `optimum.csv` (`problem,beta,objective_min,exact_constraint`).
pub fn cmd_optimize(cfg: &RunConfig, timings: &mut Timings) -> Result<RunReport> {
    let dir = cfg.dir();
    if cfg.problem == ProblemKind::Thermal {
        let tr = run_thermal_pipeline(&cfg.thermal())?;
        timings.mark("thermal pipeline");
        let mut report = RunReport::new(Command::Optimize, cfg, &tr.subspace)?;
        report.training_evaluations = Some(tr.training_evaluations);
        report.ladder = tr.calibrations.clone();
        report.warnings.extend(tr.warnings.iter().cloned());
        for c in &tr.calibrations {
            report.warnings.extend(c.warnings.iter().cloned());
        }
        let mesh = crate::fem::build_mesh(cfg.mesh_n)?;
        let mut w = csv::Writer::from_path(dir.join("table2.csv"))?;
        w.write_record(["problem", "beta", "objective_min", "exact_violation_pct"])?;
        println!("{:<10} {:>12} {:>14} {:>14}", "problem", "beta", "objective_min", "violation_%");
        for row in &tr.rows {
            w.write_record([
                row.problem.clone(),
                opt_field(row.beta),
                opt_field(row.objective_min),
                opt_field(row.exact_violation_pct),
            ])?;
            let show = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
            println!(
                "{:<10} {:>12} {:>14} {:>14}",
                row.problem,
                show(row.beta, 6),
                show(row.objective_min, 6),
                show(row.exact_violation_pct, 4)
            );
            if !row.design.is_empty() {
                let field = DesignField::new(&mesh, row.design.clone())?;
                field.write_csv(fs::File::create(dir.join(format!("design_{}.csv", row.problem)))?)?;
                field.write_grid(&mesh, fs::File::create(dir.join(format!("design_{}.txt", row.problem)))?)?;
            }
            report.optimum.push(OptimumRow {
                problem: row.problem.clone(),
                tau: row.tau,
                beta: row.beta,
                objective_min: row.objective_min,
                exact_constraint: row.energy.map(|e| e - cfg.emax),
                exact_violation_pct: row.exact_violation_pct,
                x_star: Vec::new(),
                note: row.note.clone(),
            });
        }
        w.flush()?;
        return Ok(report);
    }

    let c = calibrate_analytic(Command::Optimize, cfg, timings)?;
    let dom = &c.problem.domain;
    let d = dom.dim();
    // F(x) = Σ xᵢ is exactly linear along U1 = 𝟙/√D.
    let objective = LinearSurrogate { slope: vec![(d as f64).sqrt()], intercept: 0.0, bias: 0.0 };
    let u1 = DMatrix::from_element(d, 1, 1.0 / (d as f64).sqrt());
    let mut report = c.report;
    let mut w = csv::Writer::from_path(dir.join("optimum.csv"))?;
    w.write_record(["problem", "beta", "objective_min", "exact_constraint"])?;
    for (name, tau, beta) in [("asm", None, 0.0), ("casm", Some(cfg.tau), c.calibration.beta)] {
        let constraint = c.pipeline.surrogate.clone().with_bias(beta);
        let solved = ReducedProblem::new(&objective, u1.clone(), &constraint, c.pipeline.space.w1.clone(), dom.clone())
            .and_then(|p| solve_reduced(&p, &ReducedConfig::default()));
        let row = match solved {
            Ok(s) => OptimumRow {
                problem: name.into(),
                tau,
                beta: Some(beta),
                objective_min: Some(s.x_star.iter().sum()),
                exact_constraint: Some(c.problem.g.value(&s.x_star)),
                exact_violation_pct: None,
                x_star: s.x_star,
                note: None,
            },
            Err(e) => {
                report.warnings.push(format!("{name}: {e}"));
                OptimumRow {
                    problem: name.into(),
                    tau,
                    beta: Some(beta),
                    objective_min: None,
                    exact_constraint: None,
                    exact_violation_pct: None,
                    x_star: Vec::new(),
                    note: Some(e.to_string()),
                }
            }
        };
        w.write_record([name.to_string(), fmt(beta), opt_field(row.objective_min), opt_field(row.exact_constraint)])?;
        println!(
            "{name}: beta = {beta:.6e}, objective = {}, exact G = {}",
            row.objective_min.map_or("-".into(), |v| format!("{v:.6}")),
            row.exact_constraint.map_or("-".into(), |v| format!("{v:.6}"))
        );
        report.optimum.push(row);
    }
    w.flush()?;
    timings.mark("optimization");
    Ok(report)
}
