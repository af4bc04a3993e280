//! L2 error of the piecewise-linear heat solver against a manufactured
//! solution `u = sin(πx) sin(πy)`.

use std::f64::consts::PI;

use casm::fem::{assemble_solve, build_mesh, l2_error, DesignField};

fn main() -> casm::Result<()> {
    let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let source = |x: f64, y: f64| 2.0 * PI * PI * exact(x, y);
    let mut prev: Option<f64> = None;
    println!("{:>4} {:>12} {:>6}", "n", "L2 error", "order");
    for n in [4, 8, 16, 32, 64] {
        let mesh = build_mesh(n)?;
        // θ ≡ 1 with k1 = 1 gives the plain Poisson problem.
        let theta = DesignField::uniform(&mesh, 1.0)?;
        let sol = assemble_solve(&mesh, &theta, 1.0, 1.0, &source)?;
        let err = l2_error(&mesh, &sol.u, &exact);
        let order = prev.map_or("-".to_string(), |p| format!("{:.3}", (p / err).log2()));
        println!("{n:>4} {err:>12.4e} {order:>6}");
        prev = Some(err);
    }
    Ok(())
}
