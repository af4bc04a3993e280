//! Map reduced coordinates back to a full design with the minimum-norm
//! pullback, on a random pair of directions in five dimensions.

use casm::function::Domain;
use casm::reduced::pullback;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(r: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let v = DMatrix::from_fn(d, 1, |_, _| r.random_range(-1.0..1.0));
    let n = v.norm();
    v / n
}

fn main() -> casm::Result<()> {
    let d = 5;
    let dom = Domain::cube(d, -1.0, 1.0)?;
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let u1 = unit(&mut r, d);
    let w1 = unit(&mut r, d);
    // targets taken from a point of the box, so a solution exists
    let x0: Vec<f64> = (0..d).map(|_| r.random_range(-0.8..0.8)).collect();
    let y_f = [(0..d).map(|i| u1[i] * x0[i]).sum::<f64>()];
    let y_g = [(0..d).map(|i| w1[i] * x0[i]).sum::<f64>()];

    let res = pullback(&y_f, &y_g, &u1, &w1, &dom)?;
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("targets      y_F {:.5}  y_G {:.5}", y_f[0], y_g[0]);
    println!("x*           {:?}", res.x_star.iter().map(|v| (v * 1e5).round() / 1e5).collect::<Vec<_>>());
    println!("|x*| {:.5} <= |x0| {:.5}", norm(&res.x_star), norm(&x0));
    println!("residuals    {:.2e} {:.2e}  box distance {:.2e}  feasible {}", res.residual_yf, res.residual_yg, res.box_dist, res.feasible);

    // outside the reachable range the result is flagged, not an error
    let far = pullback(&[10.0], &y_g, &u1, &w1, &dom)?;
    println!("unreachable target: feasible {}  residual {:.3}", far.feasible, far.residual_yf);
    Ok(())
}
