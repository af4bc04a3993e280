//! Calibrate the surrogate bias of the toy constraint with both estimators
//! and check the result on fresh points.
//!
//! `cargo run --release --example toy_calibration -- [tau] [seed]`

use casm::conservative::{calibrate, CalibrationConfig, Method, ValidationSample};
use casm::pipeline::{fit_gpr_pipeline, GprPipelineConfig};
use casm::problems::ToyConstraint;
use casm::surrogate::BiasedSurrogate;

fn main() -> casm::Result<()> {
    let mut args = std::env::args().skip(1);
    let tau: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.95);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let dom = ToyConstraint::domain();
    let p = fit_gpr_pipeline(&ToyConstraint, &dom, &GprPipelineConfig { seed, ..Default::default() })?;
    let cfg = CalibrationConfig { tau, seed, beta_max: 10.0, ..Default::default() };

    for method in [Method::Bootstrap, Method::Chernoff] {
        match calibrate(&p.table, &p.surrogate, method, &cfg) {
            Ok(c) => {
                let mut model = p.surrogate.clone();
                model.set_bias(c.beta);
                let v = ValidationSample::draw(&model, &p.space, &dom, &ToyConstraint, 10_000, seed)?;
                let ur = v.unfeasibility().ratio.map_or("-".into(), |r| format!("{r:.4}"));
                println!(
                    "{method:<9} beta {:.4}  iterations {}  estimate {:.4}  observed {:.4}  UR {ur}",
                    c.beta,
                    c.iterations,
                    c.achieved_probability,
                    v.conservativeness()
                );
                for t in &c.trace {
                    println!("    beta {:.5}  estimate {:.4}", t.beta, t.estimate);
                }
            }
            Err(e) => println!("{method:<9} {e}"),
        }
    }
    Ok(())
}
