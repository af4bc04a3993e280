//! Constraint problems available to the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::function::{Domain, GradientSource, ScalarFunction};

/// `G(x) = (x₁ + 2x₂)² + x₁ − x₂ − 3` on `[-1, 1]²`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ToyConstraint;

impl ToyConstraint {
    pub fn domain() -> Domain {
        Domain::cube(2, -1.0, 1.0).expect("valid square")
    }
}

impl GradientSource for ToyConstraint {
    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let s = x[0] + 2.0 * x[1];
        (s * s + x[0] - x[1] - 3.0, vec![2.0 * s + 1.0, 4.0 * s - 1.0])
    }
}

impl ScalarFunction for ToyConstraint {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(x).0
    }
}

/// `G(x) = xᵀAx + bᵀx + c` on a box, read from JSON
/// `{"lower": [..], "upper": [..], "A": [[..], ..], "b": [..], "c": ..}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl QuadraticForm {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read problem file {}: {e}", path.display())))?;
        let q: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("problem file {}: {e}", path.display())))?;
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lower.len();
        self.domain()?;
        if self.b.len() != d || self.a.len() != d || self.a.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput(format!("quadratic form: A must be {d}x{d} and b of length {d}")));
        }
        if d < 2 {
            return Err(Error::InvalidInput("quadratic form needs at least two variables".into()));
        }
        let finite = self.a.iter().flatten().chain(&self.b).all(|v| v.is_finite()) && self.c.is_finite();
        if !finite {
            return Err(Error::InvalidInput("quadratic form has non-finite coefficients".into()));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain> {
        Domain::new(self.lower.clone(), self.upper.clone())
    }
}

impl GradientSource for QuadraticForm {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = x.len();
        let mut g = self.b.clone();
        let mut v = self.c;
        for i in 0..d {
            v += self.b[i] * x[i];
            for j in 0..d {
                let a = self.a[i][j];
                v += x[i] * a * x[j];
                g[i] += a * x[j];
                g[j] += a * x[i];
            }
        }
        (v, g)
    }
}

impl ScalarFunction for QuadraticForm {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(x).0
    }
}

/// Which constraint a run works on. Written `toy`, `thermal` or
/// `custom:<path>`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum ProblemKind {
    #[default]
    Toy,
    Thermal,
    Custom(PathBuf),
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Self::Toy),
            "thermal" => Ok(Self::Thermal),
            _ => match s.strip_prefix("custom:") {
                Some(p) if !p.is_empty() => Ok(Self::Custom(PathBuf::from(p))),
                _ => Err(Error::InvalidInput(format!(
                    "unknown problem '{s}' (expected toy, thermal or custom:<path>)"
                ))),
            },
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Toy => f.write_str("toy"),
            Self::Thermal => f.write_str("thermal"),
            Self::Custom(p) => write!(f, "custom:{}", p.display()),
        }
    }
}

impl Serialize for ProblemKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProblemKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_gradient_matches_differences() {
        let g = ToyConstraint;
        let x = [0.3, -0.7];
        let (_, grad) = g.evaluate(&x);
        let h = 1e-6;
        for i in 0..2 {
            let (mut p, mut m) = (x, x);
            p[i] += h;
            m[i] -= h;
            let fd = (g.value(&p) - g.value(&m)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7);
        }
        assert_eq!(g.value(&[0.0, 0.0]), -3.0);
    }

    #[test]
    fn quadratic_form_value_and_gradient() {
        let q = QuadraticForm {
            lower: vec![-1.0; 2],
            upper: vec![1.0; 2],
            a: vec![vec![1.0, 2.0], vec![0.0, 3.0]],
            b: vec![1.0, -1.0],
            c: 0.5,
        };
        q.validate().unwrap();
        let (v, g) = q.evaluate(&[1.0, 2.0]);
        // xᵀAx = 1 + 4 + 0 + 12, bᵀx = -1
        assert_eq!(v, 16.5);
        // (A + Aᵀ)x + b
        assert_eq!(g, vec![7.0, 13.0]);
    }

    #[test]
    fn quadratic_form_rejects_bad_shapes() {
        let q = QuadraticForm { lower: vec![0.0; 2], upper: vec![1.0; 2], a: vec![vec![1.0]], b: vec![0.0; 2], c: 0.0 };
        assert!(q.validate().is_err());
    }

    #[test]
    fn problem_kind_round_trip() {
        for s in ["toy", "thermal", "custom:/tmp/q.json"] {
            let p: ProblemKind = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
            let j = serde_json::to_string(&p).unwrap();
            assert_eq!(serde_json::from_str::<ProblemKind>(&j).unwrap(), p);
        }
        assert!("custom:".parse::<ProblemKind>().is_err());
        assert!("cube".parse::<ProblemKind>().is_err());
    }
}
