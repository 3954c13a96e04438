use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    Scalar,
    /// Row vector of the given length.
    Vector(usize),
    /// Square matrix of the given order, stored row-major.
    Matrix(usize),
}

impl Kind {
    pub fn components(&self) -> usize {
        match *self {
            Kind::Scalar => 1,
            Kind::Vector(len) => len,
            Kind::Matrix(dim) => dim * dim,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Kind::Scalar => "scalar",
            Kind::Vector(_) => "vector",
            Kind::Matrix(_) => "matrix",
        }
    }
}

/// Uniform ellipticity certificate: smallest eigenvalue of the symmetric
/// part and largest spectral norm, over all nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipticity {
    pub lambda: f64,
    pub big_lambda: f64,
}

impl Ellipticity {
    /// `C_A = max(1/lambda, Lambda)`.
    pub fn constant(&self) -> f64 {
        (1.0 / self.lambda).max(self.big_lambda)
    }
}

/// Sampled scalar, vector or matrix data on a [`Grid`].
#[derive(Debug, Clone)]
pub struct Field {
    grid: Grid,
    kind: Kind,
    name: String,
    values: Vec<f64>,
    ellipticity: Option<Ellipticity>,
}

pub type ScalarField = Field;
pub type VectorField = Field;
pub type MatrixField = Field;

impl Field {
    pub fn new(grid: Grid, kind: Kind, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let expected = grid.node_count() * kind.components();
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "field `{name}` has {} values, expected {expected}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: name,
                node: pos / kind.components(),
            });
        }
        Ok(Field {
            grid,
            kind,
            name,
            values,
            ellipticity: None,
        })
    }

    /// Samples `f(x, t, out)` at every node; `out` has `kind.components()` slots.
    pub fn from_fn<F>(grid: Grid, kind: Kind, name: impl Into<String>, f: F) -> Result<Self>
    where
        F: Fn(&[f64], f64, &mut [f64]),
    {
        let nc = kind.components();
        let mut values = vec![0.0; grid.node_count() * nc];
        let coords: Vec<Vec<f64>> = (0..grid.tangential_len()).map(|i| grid.coords(i)).collect();
        for j in 0..grid.level_count() {
            let t = grid.t(j);
            for (i, x) in coords.iter().enumerate() {
                let node = grid.node(j, i);
                f(x, t, &mut values[node * nc..(node + 1) * nc]);
            }
        }
        Field::new(grid, kind, name, values)
    }

    pub fn scalar_fn<F>(grid: Grid, name: impl Into<String>, f: F) -> Result<Self>
    where
        F: Fn(&[f64], f64) -> f64,
    {
        Field::from_fn(grid, Kind::Scalar, name, |x, t, out| out[0] = f(x, t))
    }

    pub fn matrix_fn<F>(grid: Grid, dim: usize, name: impl Into<String>, f: F) -> Result<Self>
    where
        F: Fn(&[f64], f64) -> DMatrix<f64>,
    {
        Field::from_fn(grid, Kind::Matrix(dim), name, |x, t, out| {
            write_matrix(&f(x, t), out)
        })
    }

    pub fn constant(grid: Grid, kind: Kind, name: impl Into<String>, value: &[f64]) -> Result<Self> {
        if value.len() != kind.components() {
            return Err(Error::Shape("constant value has wrong length".into()));
        }
        let values = value
            .iter()
            .copied()
            .cycle()
            .take(grid.node_count() * kind.components())
            .collect();
        Field::new(grid, kind, name, values)
    }

    pub fn constant_matrix(grid: Grid, name: impl Into<String>, m: &DMatrix<f64>) -> Result<Self> {
        let mut buf = vec![0.0; m.nrows() * m.ncols()];
        write_matrix(m, &mut buf);
        Field::constant(grid, Kind::Matrix(m.nrows()), name, &buf)
    }

    pub fn identity(grid: Grid) -> Self {
        Field::constant_matrix(grid, "identity", &DMatrix::identity(grid.n(), grid.n()))
            .expect("identity is finite")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn components(&self) -> usize {
        self.kind.components()
    }

    pub fn at(&self, node: usize) -> &[f64] {
        let nc = self.components();
        &self.values[node * nc..(node + 1) * nc]
    }

    pub fn scalar(&self, node: usize) -> f64 {
        self.values[node * self.components()]
    }

    pub fn matrix_at(&self, node: usize) -> DMatrix<f64> {
        let dim = match self.kind {
            Kind::Matrix(d) => d,
            _ => panic!("matrix_at on a {} field", self.kind.label()),
        };
        DMatrix::from_row_slice(dim, dim, self.at(node))
    }

    pub fn vector_at(&self, node: usize) -> DVector<f64> {
        DVector::from_column_slice(self.at(node))
    }

    pub fn ellipticity(&self) -> Option<Ellipticity> {
        self.ellipticity
    }

    pub(crate) fn set_ellipticity(&mut self, e: Ellipticity) {
        self.ellipticity = Some(e);
    }

    /// Euclidean (Frobenius) magnitude of the node values.
    pub fn magnitude(&self) -> Field {
        let nc = self.components();
        let values = self
            .values
            .chunks(nc)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Field {
            grid: self.grid,
            kind: Kind::Scalar,
            name: format!("|{}|", self.name),
            values,
            ellipticity: None,
        }
    }

    /// Builds a new field node by node; `f(node, input, out)`.
    pub fn map_nodes<F>(&self, kind: Kind, name: impl Into<String>, f: F) -> Result<Field>
    where
        F: Fn(usize, &[f64], &mut [f64]),
    {
        let nc = kind.components();
        let mut values = vec![0.0; self.grid.node_count() * nc];
        for (node, out) in values.chunks_mut(nc).enumerate() {
            f(node, self.at(node), out);
        }
        Field::new(self.grid, kind, name, values)
    }

    fn check_same(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid || self.kind != other.kind {
            return Err(Error::Shape(format!(
                "fields `{}` and `{}` differ in grid or kind",
                self.name, other.name
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Field::new(self.grid, self.kind, format!("{}+{}", self.name, other.name), values)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Field::new(self.grid, self.kind, format!("{}-{}", self.name, other.name), values)
    }

    pub fn scale(&self, c: f64) -> Result<Field> {
        let values = self.values.iter().map(|v| c * v).collect();
        Field::new(self.grid, self.kind, format!("{c}*{}", self.name), values)
    }

    /// Pointwise sum of magnitudes of several fields on the same grid.
    pub fn magnitude_sum(parts: &[&Field]) -> Result<Field> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("empty magnitude sum".into()))?;
        let mut acc = vec![0.0; first.grid.node_count()];
        for p in parts {
            if p.grid != first.grid {
                return Err(Error::Shape("magnitude sum over different grids".into()));
            }
            for (a, m) in acc.iter_mut().zip(p.magnitude().values) {
                *a += m;
            }
        }
        Field::new(first.grid, Kind::Scalar, "magnitude-sum", acc)
    }
}

pub fn write_matrix(m: &DMatrix<f64>, out: &mut [f64]) {
    let cols = m.ncols();
    for r in 0..m.nrows() {
        for c in 0..cols {
            out[r * cols + c] = m[(r, c)];
        }
    }
}

/// Max of the entrywise magnitude over all nodes.
pub fn sup_norm(f: &Field) -> f64 {
    let nc = f.components();
    f.values()
        .chunks(nc)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}
