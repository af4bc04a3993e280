//! Compare the surrogate-feasible region of the toy constraint with the
//! exact one on a grid, before and after bias calibration.

use casm::conservative::{calibrate, CalibrationConfig, Method};
use casm::function::ScalarFunction;
use casm::pipeline::{fit_gpr_pipeline, GprPipelineConfig};
use casm::problems::ToyConstraint;
use casm::surrogate::BiasedSurrogate;

fn main() -> casm::Result<()> {
    let dom = ToyConstraint::domain();
    let p = fit_gpr_pipeline(&ToyConstraint, &dom, &GprPipelineConfig::default())?;
    let cfg = CalibrationConfig { tau: 0.95, beta_max: 10.0, ..Default::default() };
    let c = calibrate(&p.table, &p.surrogate, Method::Chernoff, &cfg)?;

    let n = 201;
    for beta in [0.0, c.beta] {
        let model = p.surrogate.clone().with_bias(beta);
        let (mut exact, mut surrogate, mut wrong) = (0, 0, 0);
        for i in 0..n {
            for j in 0..n {
                let x = [-1.0 + 2.0 * i as f64 / (n - 1) as f64, -1.0 + 2.0 * j as f64 / (n - 1) as f64];
                let g_ok = ToyConstraint.value(&x) <= 0.0;
                let s_ok = model.predict(&p.space.project(&x)) <= 0.0;
                exact += g_ok as usize;
                surrogate += s_ok as usize;
                wrong += (s_ok && !g_ok) as usize;
            }
        }
        let total = (n * n) as f64;
        println!(
            "beta {beta:.4}: exact feasible {:.3}  surrogate feasible {:.3}  surrogate-feasible but infeasible {:.4}",
            exact as f64 / total,
            surrogate as f64 / total,
            wrong as f64 / total
        );
    }
    Ok(())
}
