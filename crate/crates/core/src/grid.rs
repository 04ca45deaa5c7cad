//! Uniform interior grid on the unit square, discrete L² geometry and the
//! five-point Laplacian.
//!
//! Nodes are stored row-major: index `r * n + c` is the node at
//! `x = (c + 1) h`, `y = (r + 1) h`. Boundary values are identically zero and
//! never stored.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdbliError};

/// Interior nodes per axis of the uniform grid on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(SdbliError::config("grid.n", "must be at least 1"));
        }
        Ok(GridSpec { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Mesh width `1 / (n + 1)`.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / (self.n as f64 + 1.0)
    }

    /// Number of stored nodes, `n²`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical coordinates `(x, y)` of node `j`.
    pub fn coords(&self, j: usize) -> (f64, f64) {
        let h = self.h();
        let (r, c) = (j / self.n, j % self.n);
        ((c as f64 + 1.0) * h, (r as f64 + 1.0) * h)
    }
}

/// A real field on the interior nodes of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(spec: GridSpec) -> Self {
        GridFunction {
            spec,
            values: vec![0.0; spec.len()],
        }
    }

    pub fn constant(spec: GridSpec, value: f64) -> Self {
        GridFunction {
            spec,
            values: vec![value; spec.len()],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(SdbliError::Shape(format!(
                "expected {} values for n = {}, got {}",
                spec.len(),
                spec.n(),
                values.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(SdbliError::Shape(format!("non-finite value at node {j}")));
        }
        Ok(GridFunction { spec, values })
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let values = (0..spec.len())
            .map(|j| {
                let (x, y) = spec.coords(j);
                f(x, y)
            })
            .collect();
        GridFunction { spec, values }
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_same(&self, other: &GridFunction) -> Result<()> {
        if self.spec != other.spec {
            return Err(SdbliError::Shape(format!(
                "grid n = {} vs n = {}",
                self.spec.n(),
                other.spec.n()
            )));
        }
        Ok(())
    }

    /// Discrete L² inner product `h² Σ a_j b_j`.
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        self.check_same(other)?;
        let h = self.spec.h();
        Ok(h * h * dot(&self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        let h = self.spec.h();
        h * dot(&self.values, &self.values).sqrt()
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction {
            spec: self.spec,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// `self + c · other`
    pub fn axpy(&self, c: f64, other: &GridFunction) -> Result<GridFunction> {
        self.check_same(other)?;
        Ok(GridFunction {
            spec: self.spec,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.axpy(1.0, other)
    }

    /// `−Δ_h` with the five-point stencil and zero extension at the boundary.
    pub fn apply_laplacian(&self) -> GridFunction {
        let mut out = vec![0.0; self.values.len()];
        laplacian_into(self.spec, &self.values, &mut out);
        GridFunction {
            spec: self.spec,
            values: out,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = −Δ_h v` on raw row-major storage.
pub(crate) fn laplacian_into(spec: GridSpec, v: &[f64], out: &mut [f64]) {
    let n = spec.n();
    let inv_h2 = 1.0 / (spec.h() * spec.h());
    for r in 0..n {
        for c in 0..n {
            let j = r * n + c;
            let mut s = 4.0 * v[j];
            if c > 0 {
                s -= v[j - 1];
            }
            if c + 1 < n {
                s -= v[j + 1];
            }
            if r > 0 {
                s -= v[j - n];
            }
            if r + 1 < n {
                s -= v[j + n];
            }
            out[j] = s * inv_h2;
        }
    }
}

pub fn inner(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    a.inner(b)
}

pub fn norm(a: &GridFunction) -> f64 {
    a.norm()
}

pub fn apply_laplacian(a: &GridFunction) -> GridFunction {
    a.apply_laplacian()
}
