use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::mesh::{DesignField, TriMesh};
use crate::error::{Error, Result};

/// The heat source `56(1 − |x| − |y|)⁶`.
pub fn diamond_source(x: f64, y: f64) -> f64 {
    56.0 * (1.0 - x.abs() - y.abs()).powi(6)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FemSolution {
    /// Nodal values, zero on the boundary.
    pub u: Vec<f64>,
    /// Assembled load vector, zero on the boundary.
    pub load: Vec<f64>,
    pub energy: f64,
    /// Hash of `(mesh, theta, k1, k2)` the solution belongs to.
    pub assembled_for: u64,
}

pub(crate) fn state_hash(mesh: &TriMesh, theta: &DesignField, k1: f64, k2: f64) -> u64 {
    let mut h = DefaultHasher::new();
    mesh.n.hash(&mut h);
    mesh.vertex_count().hash(&mut h);
    mesh.element_count().hash(&mut h);
    for t in &theta.theta {
        t.to_bits().hash(&mut h);
    }
    k1.to_bits().hash(&mut h);
    k2.to_bits().hash(&mut h);
    h.finish()
}

/// Symmetric positive definite matrix stored by its lower band.
struct Banded {
    n: usize,
    bw: usize,
    /// Row `i`, column `i − k` at `i(bw+1) + k`.
    data: Vec<f64>,
}

impl Banded {
    fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        debug_assert!(i - j <= self.bw);
        self.data[i * (self.bw + 1) + (i - j)] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[i * (self.bw + 1) + (i - j)]
        }
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[i * (self.bw + 1) + (i - j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// In-place `L Lᵀ` factorization of the band.
    fn cholesky(&self) -> Result<Banded> {
        let (n, bw) = (self.n, self.bw);
        let mut l = Banded::zeros(n, bw);
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.data[i * w + (i - j)];
                for k in lo.max(j.saturating_sub(bw))..j {
                    s -= l.data[i * w + (i - k)] * l.data[j * w + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Singular(format!("stiffness pivot {i} is {s:e}")));
                    }
                    l.data[i * w] = s.sqrt();
                } else {
                    l.data[i * w + (i - j)] = s / l.data[j * w];
                }
            }
        }
        Ok(l)
    }

    fn solve_factored(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for k in lo..i {
                y[i] -= self.data[i * w + (i - k)] * y[k];
            }
            y[i] /= self.data[i * w];
        }
        for i in (0..n).rev() {
            for k in i + 1..(i + bw + 1).min(n) {
                y[i] -= self.data[k * w + (k - i)] * y[k];
            }
            y[i] /= self.data[i * w];
        }
        y
    }
}

/// Interior unknown numbering: vertex `(i, j)` with `0 < i, j < n` maps to
/// `(j − 1)(n − 1) + i − 1`.
fn dof_map(mesh: &TriMesh) -> Vec<Option<usize>> {
    let n = mesh.n;
    (0..mesh.vertex_count())
        .map(|v| {
            let (i, j) = (v % (n + 1), v / (n + 1));
            (i > 0 && j > 0 && i < n && j < n).then(|| (j - 1) * (n - 1) + i - 1)
        })
        .collect()
}

pub(crate) fn conductivity(theta: f64, k1: f64, k2: f64) -> f64 {
    k1 * theta + k2 * (1.0 - theta)
}

fn assemble(mesh: &TriMesh, theta: &DesignField, k1: f64, k2: f64, source: &dyn Fn(f64, f64) -> f64) -> (Banded, Vec<f64>, Vec<Option<usize>>) {
    let dofs = dof_map(mesh);
    let ndof = (mesh.n - 1) * (mesh.n - 1);
    let mut k = Banded::zeros(ndof, mesh.n);
    let mut load = vec![0.0; mesh.vertex_count()];
    for (e, tri) in mesh.elements.iter().enumerate() {
        let area = mesh.area(e);
        let g = mesh.hat_gradients(e);
        let c = conductivity(theta.theta[e], k1, k2);
        for a in 0..3 {
            let Some(ia) = dofs[tri[a]] else { continue };
            for b in 0..=a {
                let Some(ib) = dofs[tri[b]] else { continue };
                let v = c * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                k.add(ia, ib, v);
            }
        }
        // edge midpoints, weight area/3; each hat is 1/2 at the two midpoints
        // of its incident edges
        let p = tri.map(|v| mesh.vertices[v]);
        let mid = |a: usize, b: usize| [(p[a][0] + p[b][0]) / 2.0, (p[a][1] + p[b][1]) / 2.0];
        let f = [mid(0, 1), mid(1, 2), mid(2, 0)].map(|m| source(m[0], m[1]));
        let w = area / 3.0 * 0.5;
        load[tri[0]] += w * (f[0] + f[2]);
        load[tri[1]] += w * (f[0] + f[1]);
        load[tri[2]] += w * (f[1] + f[2]);
    }
    for (v, d) in dofs.iter().enumerate() {
        if d.is_none() {
            load[v] = 0.0;
        }
    }
    (k, load, dofs)
}

/// Squared gradient of the piecewise-linear field on element `e`.
pub fn element_grad_sq(mesh: &TriMesh, u: &[f64], e: usize) -> f64 {
    let g = mesh.hat_gradients(e);
    let t = mesh.elements[e];
    let gx: f64 = (0..3).map(|a| u[t[a]] * g[a][0]).sum();
    let gy: f64 = (0..3).map(|a| u[t[a]] * g[a][1]).sum();
    gx * gx + gy * gy
}

/// Piecewise-linear Galerkin solution of `−∇·(k∇u) = f`, `u = 0` on the
/// boundary, with `k = k1 θ + k2 (1 − θ)` per element.
pub fn assemble_solve(
    mesh: &TriMesh,
    theta: &DesignField,
    k1: f64,
    k2: f64,
    source: &dyn Fn(f64, f64) -> f64,
) -> Result<FemSolution> {
    if !(k1 > 0.0 && k2 > 0.0) {
        return Err(Error::InvalidInput(format!("conductivities must be positive, got {k1} and {k2}")));
    }
    if theta.theta.len() != mesh.element_count() {
        return Err(Error::InvalidInput("design does not match the mesh".into()));
    }
    let (k, load, dofs) = assemble(mesh, theta, k1, k2, source);
    let mut b = vec![0.0; k.n];
    for (v, d) in dofs.iter().enumerate() {
        if let Some(d) = d {
            b[*d] = load[v];
        }
    }
    let l = k.cholesky()?;
    let mut x = l.solve_factored(&b);
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    for _ in 0..3 {
        let r: Vec<f64> = k.mul(&x).iter().zip(&b).map(|(a, c)| c - a).collect();
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= 1e-10 * bnorm {
            break;
        }
        let dx = l.solve_factored(&r);
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
    }
    let r: Vec<f64> = k.mul(&x).iter().zip(&b).map(|(a, c)| c - a).collect();
    let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rnorm > 1e-10 * bnorm {
        return Err(Error::Singular(format!("linear solve residual {:e} relative", rnorm / bnorm)));
    }
    let mut u = vec![0.0; mesh.vertex_count()];
    for (v, d) in dofs.iter().enumerate() {
        if let Some(d) = d {
            u[v] = x[*d];
        }
    }
    let energy = element_energy_sum(mesh, &u, theta, k1, k2);
    Ok(FemSolution { u, load, energy, assembled_for: state_hash(mesh, theta, k1, k2) })
}

fn element_energy_sum(mesh: &TriMesh, u: &[f64], theta: &DesignField, k1: f64, k2: f64) -> f64 {
    (0..mesh.element_count())
        .map(|e| 0.5 * conductivity(theta.theta[e], k1, k2) * element_grad_sq(mesh, u, e) * mesh.area(e))
        .sum()
}

fn check(sol: &FemSolution, mesh: &TriMesh, theta: &DesignField, k1: f64, k2: f64) -> Result<()> {
    if sol.assembled_for != state_hash(mesh, theta, k1, k2) {
        return Err(Error::StaleSolution);
    }
    Ok(())
}

/// `E = ½ Σ k_e |∇u|² area_e`
pub fn energy(sol: &FemSolution, mesh: &TriMesh, theta: &DesignField, k1: f64, k2: f64) -> Result<f64> {
    check(sol, mesh, theta, k1, k2)?;
    Ok(element_energy_sum(mesh, &sol.u, theta, k1, k2))
}

/// `∂E/∂θ_e = −½ (k1 − k2) |∇u|² area_e`
pub fn energy_gradient(sol: &FemSolution, mesh: &TriMesh, theta: &DesignField, k1: f64, k2: f64) -> Result<Vec<f64>> {
    check(sol, mesh, theta, k1, k2)?;
    Ok((0..mesh.element_count())
        .map(|e| -0.5 * (k1 - k2) * element_grad_sq(mesh, &sol.u, e) * mesh.area(e))
        .collect())
}

/// `V = Σ θ_e area_e`
pub fn volume(mesh: &TriMesh, theta: &DesignField) -> f64 {
    theta.theta.iter().enumerate().map(|(e, t)| t * mesh.area(e)).sum()
}

/// Degree-5 seven-point rule: (barycentric coordinates, weight).
const DUNAVANT7: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([0.059715871789770, 0.470142064105115, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.059715871789770, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.470142064105115, 0.059715871789770], 0.132394152788506),
    ([0.797426985353087, 0.101286507323456, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.797426985353087, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.101286507323456, 0.797426985353087], 0.125939180544827),
];

/// `‖u_h − u*‖_{L²}` with a seven-point rule on every element.
pub fn l2_error(mesh: &TriMesh, u: &[f64], exact: &dyn Fn(f64, f64) -> f64) -> f64 {
    let mut s = 0.0;
    for (e, t) in mesh.elements.iter().enumerate() {
        let p = t.map(|v| mesh.vertices[v]);
        let area = mesh.area(e);
        for (b, w) in DUNAVANT7 {
            let x = b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0];
            let y = b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1];
            let uh = b[0] * u[t[0]] + b[1] * u[t[1]] + b[2] * u[t[2]];
            s += w * area * (uh - exact(x, y)).powi(2);
        }
    }
    s.sqrt()
}

/// Lower band of the stiffness matrix as a dense matrix (small meshes only).
pub fn stiffness_dense(mesh: &TriMesh, theta: &DesignField, k1: f64, k2: f64) -> nalgebra::DMatrix<f64> {
    let (k, _, _) = assemble(mesh, theta, k1, k2, &|_, _| 0.0);
    nalgebra::DMatrix::from_fn(k.n, k.n, |i, j| k.get(i, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::mesh::build_mesh;
    use crate::rng::{self, Stream};
    use rand::Rng;

    fn random_design(mesh: &TriMesh, seed: u64) -> DesignField {
        let mut r = rng::stream(seed, Stream::Validation, 0);
        DesignField::new(mesh, (0..mesh.element_count()).map(|_| r.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn zero_source_gives_zero() {
        let m = build_mesh(4).unwrap();
        let t = DesignField::uniform(&m, 0.3).unwrap();
        let s = assemble_solve(&m, &t, 2.0, 1.0, &|_, _| 0.0).unwrap();
        assert!(s.u.iter().all(|v| *v == 0.0));
        assert_eq!(energy(&s, &m, &t, 2.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn uniform_coefficient_scaling() {
        let m = build_mesh(8).unwrap();
        let one = assemble_solve(&m, &DesignField::uniform(&m, 1.0).unwrap(), 2.0, 1.0, &diamond_source).unwrap();
        let zero = assemble_solve(&m, &DesignField::uniform(&m, 0.0).unwrap(), 2.0, 1.0, &diamond_source).unwrap();
        for (a, b) in one.u.iter().zip(&zero.u) {
            assert!((a - 0.5 * b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn compliance_identity() {
        let m = build_mesh(16).unwrap();
        for seed in 0..3 {
            let t = random_design(&m, seed);
            let s = assemble_solve(&m, &t, 2.0, 1.0, &diamond_source).unwrap();
            let half_lu: f64 = 0.5 * s.load.iter().zip(&s.u).map(|(a, b)| a * b).sum::<f64>();
            assert!((s.energy - half_lu).abs() <= 1e-10 * half_lu, "{} vs {half_lu}", s.energy);
        }
    }

    #[test]
    fn stiffness_is_spd() {
        let m = build_mesh(4).unwrap();
        let k = stiffness_dense(&m, &random_design(&m, 1), 2.0, 1.0);
        assert!((&k - k.transpose()).amax() < 1e-14);
        let eig = k.symmetric_eigenvalues();
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn stale_solution_detected() {
        let m = build_mesh(4).unwrap();
        let t = DesignField::uniform(&m, 0.5).unwrap();
        let s = assemble_solve(&m, &t, 2.0, 1.0, &diamond_source).unwrap();
        let t2 = DesignField::uniform(&m, 0.6).unwrap();
        assert!(matches!(energy(&s, &m, &t2, 2.0, 1.0), Err(Error::StaleSolution)));
        assert!(matches!(energy_gradient(&s, &m, &t, 2.0, 1.5), Err(Error::StaleSolution)));
    }

    #[test]
    fn equal_conductivities_give_zero_gradient() {
        let m = build_mesh(4).unwrap();
        let t = random_design(&m, 2);
        let s = assemble_solve(&m, &t, 1.5, 1.5, &diamond_source).unwrap();
        assert!(energy_gradient(&s, &m, &t, 1.5, 1.5).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn volume_of_uniform_fields() {
        let m = build_mesh(5).unwrap();
        assert!((volume(&m, &DesignField::uniform(&m, 1.0).unwrap()) - 4.0).abs() < 1e-12);
        assert!((volume(&m, &DesignField::uniform(&m, 0.5).unwrap()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_conductivity() {
        let m = build_mesh(2).unwrap();
        let t = DesignField::uniform(&m, 0.5).unwrap();
        assert!(assemble_solve(&m, &t, 0.0, 1.0, &diamond_source).is_err());
    }
}
