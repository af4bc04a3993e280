//! Material layout under a heat-compliance bound: full-space baseline,
//! the unbiased reduced design and the calibrated ladder.
//!
//! `cargo run --release --example thermal_design -- [mesh_n]`
//! The default 16 × 16 mesh takes about a minute on one core.

use casm::fem::{build_mesh, run_thermal_pipeline, DesignField, ThermalConfig};

fn main() -> casm::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let cfg = ThermalConfig { n, ..Default::default() };
    let report = run_thermal_pipeline(&cfg)?;
    println!("design variables {}  spectrum ratio {:.1}", report.dim, report.spectrum_ratio);
    println!("exact evaluations for training {}", report.training_evaluations);
    println!("{:<10} {:>10} {:>10} {:>10}", "design", "beta", "volume", "violation%");
    for row in &report.rows {
        let f = |v: Option<f64>, p: usize| v.map_or("-".into(), |v| format!("{v:.p$}"));
        println!("{:<10} {:>10} {:>10} {:>10}", row.problem, f(row.beta, 5), f(row.objective_min, 4), f(row.exact_violation_pct, 3));
    }
    if let Some(best) = report.rows.last().filter(|r| !r.design.is_empty()) {
        let mesh = build_mesh(n)?;
        println!("\n{} layout (1 = high conductivity):", best.problem);
        DesignField::new(&mesh, best.design.clone())?.write_grid(&mesh, std::io::stdout())?;
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
