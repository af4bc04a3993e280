//! Fit the one-dimensional GPR surrogate of the toy constraint and compare
//! it with slice averages of the exact function.

use casm::active_subspace::f_mc;
use casm::pipeline::{fit_gpr_pipeline, GprPipelineConfig};
use casm::problems::ToyConstraint;
use casm::surrogate::{check_assumption_rowsums, BiasedSurrogate};

fn main() -> casm::Result<()> {
    let dom = ToyConstraint::domain();
    let p = fit_gpr_pipeline(&ToyConstraint, &dom, &GprPipelineConfig::default())?;
    let k = &p.kernel_fit.config;
    println!("training points {}  exact evaluations {}", p.training.len(), p.training_evaluations);
    println!("theta {:.4}  noise variance {:.3e}  log-likelihood {:.3}", k.theta, k.noise_var, p.kernel_fit.log_likelihood);
    let rows = check_assumption_rowsums(&p.surrogate);
    println!("row sums of the inverse Gram matrix nonnegative: {} (min {:.3e})", rows.holds, rows.min_row_sum);

    let (lo, hi) = p.space.projected_bounds(&dom)[0];
    println!("{:>8} {:>12} {:>12} {:>10}", "y", "mu(y)", "slice mean", "V(y)");
    for i in 0..=10 {
        let y = lo + (hi - lo) * (0.02 + 0.96 * i as f64 / 10.0);
        let exact = f_mc(&p.space, &dom, &ToyConstraint, &[y], 2000, 7)?;
        println!(
            "{y:>8.3} {:>12.4} {:>12.4} {:>10.4}",
            p.surrogate.unbiased_mean(&[y]),
            exact,
            p.surrogate.bias_weight(&[y])
        );
    }
    for w in &p.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
