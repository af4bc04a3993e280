use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structured triangulation of `[-1, 1]²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    /// Squares per side.
    pub n: usize,
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub elements: Vec<[usize; 3]>,
    pub boundary_vertices: Vec<usize>,
}

/// `n × n` squares on `[-1, 1]²`, each cut along its lower-left to
/// upper-right diagonal. Vertex `(i, j)` has index `j(n+1) + i`; square
/// `(i, j)` owns elements `2(jn + i)` (below the diagonal) and `2(jn + i) + 1`.
pub fn build_mesh(n: usize) -> Result<TriMesh> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("mesh needs n >= 2, got {n}")));
    }
    let h = 2.0 / n as f64;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    let mut boundary_vertices = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([-1.0 + h * i as f64, -1.0 + h * j as f64]);
            if i == 0 || j == 0 || i == n || j == n {
                boundary_vertices.push(idx(i, j));
            }
        }
    }
    let mut elements = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    Ok(TriMesh { n, vertices, elements, boundary_vertices })
}

impl TriMesh {
    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Signed area (positive for counterclockwise triangles).
    pub fn area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn areas(&self) -> Vec<f64> {
        (0..self.element_count()).map(|e| self.area(e)).collect()
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let [a, b, c] = self.elements[e].map(|v| self.vertices[v]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Gradients of the three hat functions on element `e`.
    pub fn hat_gradients(&self, e: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.elements[e].map(|v| self.vertices[v]);
        let two_area = 2.0 * self.area(e);
        [
            [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area],
            [(c[1] - a[1]) / two_area, (a[0] - c[0]) / two_area],
            [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area],
        ]
    }

    /// Number of distinct edges.
    pub fn edge_count(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .elements
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    /// `element,v0,v1,v2`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["element", "v0", "v1", "v2"])?;
        for (e, t) in self.elements.iter().enumerate() {
            w.write_record([e.to_string(), t[0].to_string(), t[1].to_string(), t[2].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-element material fraction, clamped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignField {
    pub theta: Vec<f64>,
}

impl DesignField {
    pub fn new(mesh: &TriMesh, mut theta: Vec<f64>) -> Result<Self> {
        if theta.len() != mesh.element_count() {
            return Err(Error::InvalidInput(format!(
                "design has {} entries for {} elements",
                theta.len(),
                mesh.element_count()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design contains non-finite values".into()));
        }
        theta.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(Self { theta })
    }

    pub fn uniform(mesh: &TriMesh, value: f64) -> Result<Self> {
        Self::new(mesh, vec![value; mesh.element_count()])
    }

    /// `element,theta`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["element", "theta"])?;
        for (e, t) in self.theta.iter().enumerate() {
            w.write_record([e.to_string(), format!("{t:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Square-averaged field as `n` text rows (top row first), for viewing
    /// the layout of a design.
    pub fn write_grid<W: Write>(&self, mesh: &TriMesh, mut out: W) -> Result<()> {
        let n = mesh.n;
        for j in (0..n).rev() {
            let row: Vec<String> = (0..n)
                .map(|i| {
                    let e = 2 * (j * n + i);
                    format!("{:.4}", 0.5 * (self.theta[e] + self.theta[e + 1]))
                })
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert!(build_mesh(1).is_err());
        let m = build_mesh(2).unwrap();
        assert_eq!((m.element_count(), m.vertex_count()), (8, 9));
        assert_eq!(build_mesh(16).unwrap().element_count(), 512);
    }

    #[test]
    fn euler_characteristic_of_a_disk() {
        for n in [2, 5, 16] {
            let m = build_mesh(n).unwrap();
            let (v, e, f) = (m.vertex_count() as i64, m.edge_count() as i64, m.element_count() as i64);
            assert_eq!(v - e + f, 1);
            // boundary edges: 4n, each interior edge shared by two triangles
            assert_eq!(3 * f, 2 * e - 4 * n as i64);
        }
    }

    #[test]
    fn orientation_area_and_cover() {
        let m = build_mesh(7).unwrap();
        assert!(m.areas().iter().all(|a| *a > 0.0));
        assert!((m.areas().iter().sum::<f64>() - 4.0).abs() < 1e-12);
        assert_eq!(m.boundary_vertices.len(), 4 * 7);
    }

    #[test]
    fn hat_gradients_sum_to_zero() {
        let m = build_mesh(3).unwrap();
        for e in 0..m.element_count() {
            let g = m.hat_gradients(e);
            assert!((g[0][0] + g[1][0] + g[2][0]).abs() < 1e-12);
            assert!((g[0][1] + g[1][1] + g[2][1]).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = serde_json::to_vec(&build_mesh(6).unwrap()).unwrap();
        let b = serde_json::to_vec(&build_mesh(6).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn design_is_clamped() {
        let m = build_mesh(2).unwrap();
        let d = DesignField::new(&m, vec![-0.5, 1.5, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3]).unwrap();
        assert_eq!(&d.theta[..2], &[0.0, 1.0]);
        assert!(DesignField::new(&m, vec![0.0; 3]).is_err());
    }
}
