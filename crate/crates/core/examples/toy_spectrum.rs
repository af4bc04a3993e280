//! Gradient covariance spectrum of the two-dimensional toy constraint.
//!
//! Run with `cargo run --release --example toy_spectrum -- [seed]`.

use casm::active_subspace::{decompose, estimate_covariance};
use casm::problems::ToyConstraint;

fn main() -> casm::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let dom = ToyConstraint::domain();
    let c = estimate_covariance(&ToyConstraint, &dom, 200, seed)?;
    let space = decompose(&c, 1)?;
    println!("C =\n{}", c.matrix);
    println!("eigenvalues   {:?}", space.eigenvalues);
    println!("ratio         {:.2}", space.eigenvalues[0] / space.eigenvalues[1]);
    println!("W1            ({:.4}, {:.4})", space.w1[(0, 0)], space.w1[(1, 0)]);
    println!("variance kept {:.2}%", space.variance_captured()?);

    // G depends on x1 + 2x2 to leading order, so W1 sits near (1, 2)/√5.
    let reference = [1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
    let cos = (space.w1[(0, 0)] * reference[0] + space.w1[(1, 0)] * reference[1]).abs();
    println!("angle to (1,2)/sqrt5: {:.2} deg", cos.min(1.0).acos().to_degrees());
    Ok(())
}
