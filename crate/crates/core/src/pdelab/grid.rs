use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[0, 1] x [0, height]` with spacing `delta` on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverGrid {
    nx: usize,
    nt: usize,
    delta: f64,
}

pub const MIN_NODES: usize = 8;

impl SolverGrid {
    pub fn new(delta: f64, height: f64) -> Result<Self> {
        if !(delta > 0.0) || !(height > 0.0) {
            return Err(Error::InvalidInput {
                key: "delta".into(),
                reason: format!("need delta > 0 and T_s > 0, got {delta} and {height}"),
            });
        }
        let nx = (1.0 / delta).round() as usize;
        let nt = (height / delta).round() as usize;
        if (nx as f64 * delta - 1.0).abs() > 1e-9 || (nt as f64 * delta - height).abs() > 1e-9 * height.max(1.0) {
            return Err(Error::InvalidInput {
                key: "delta".into(),
                reason: format!("1 and T_s = {height} must be multiples of delta = {delta}"),
            });
        }
        if nx + 1 < MIN_NODES || nt + 1 < MIN_NODES {
            return Err(Error::InsufficientResolution(format!(
                "solver grid has {} x {} nodes, need at least {MIN_NODES} per axis",
                nx + 1,
                nt + 1
            )));
        }
        Ok(SolverGrid { nx, nt, delta })
    }

    /// Intervals along `y`.
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Intervals along `t`.
    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn height(&self) -> f64 {
        self.nt as f64 * self.delta
    }

    pub fn y(&self, i: usize) -> f64 {
        i as f64 * self.delta
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.delta
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.nt + 1)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.nt
    }

    pub fn refine(&self) -> SolverGrid {
        SolverGrid {
            nx: 2 * self.nx,
            nt: 2 * self.nt,
            delta: self.delta / 2.0,
        }
    }
}

/// Nodal values on a [`SolverGrid`], `t`-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: SolverGrid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: SolverGrid, f: F) -> Self {
        let mut values = Vec::with_capacity(grid.node_count());
        for j in 0..=grid.nt() {
            for i in 0..=grid.nx() {
                values.push(f(grid.y(i), grid.t(j)));
            }
        }
        GridFunction { grid, values }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Max of `|value|` over interior nodes.
    pub fn interior_max(&self) -> f64 {
        let g = self.grid;
        let mut m: f64 = 0.0;
        for j in 1..g.nt() {
            for i in 1..g.nx() {
                m = m.max(self.at(i, j).abs());
            }
        }
        m
    }

    /// Tensor-product four-point Lagrange interpolation; `None` outside the rectangle.
    pub fn sample_cubic(&self, y: f64, t: f64) -> Option<f64> {
        let g = self.grid;
        let tol = 1e-12;
        if y < -tol || y > 1.0 + tol || t < -tol || t > g.height() + tol {
            return None;
        }
        let (iy, wy) = stencil(y / g.delta(), g.nx());
        let (it, wt) = stencil(t / g.delta(), g.nt());
        let mut acc = 0.0;
        for (b, wb) in wt.iter().enumerate() {
            let mut row = 0.0;
            for (a, wa) in wy.iter().enumerate() {
                row += wa * self.at(iy + a, it + b);
            }
            acc += wb * row;
        }
        Some(acc)
    }
}

/// First index and weights of the four-point stencil around `s` on `0..=n`.
fn stencil(s: f64, n: usize) -> (usize, [f64; 4]) {
    let base = (s.floor() as isize - 1).clamp(0, n as isize - 3) as usize;
    let x = s - base as f64;
    let nodes = [0.0, 1.0, 2.0, 3.0];
    let mut w = [1.0; 4];
    for k in 0..4 {
        for m in 0..4 {
            if m != k {
                w[k] *= (x - nodes[m]) / (nodes[k] - nodes[m]);
            }
        }
    }
    (base, w)
}

/// Dirichlet data on the four edges of a [`SolverGrid`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryFunction {
    pub grid: SolverGrid,
    /// `t = 0`, indexed by `i`.
    pub bottom: Vec<f64>,
    pub top: Vec<f64>,
    /// `y = 0`, indexed by `j`.
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl BoundaryFunction {
    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: SolverGrid, g: F) -> Result<Self> {
        let row = |t: f64| (0..=grid.nx()).map(|i| g(grid.y(i), t)).collect::<Vec<_>>();
        let col = |y: f64| (0..=grid.nt()).map(|j| g(y, grid.t(j))).collect::<Vec<_>>();
        let b = BoundaryFunction {
            grid,
            bottom: row(0.0),
            top: row(grid.height()),
            left: col(0.0),
            right: col(1.0),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid;
        if self.bottom.len() != g.nx() + 1
            || self.top.len() != g.nx() + 1
            || self.left.len() != g.nt() + 1
            || self.right.len() != g.nt() + 1
        {
            return Err(Error::Shape("boundary data does not match the solver grid".into()));
        }
        let all = self.bottom.iter().chain(&self.top).chain(&self.left).chain(&self.right);
        if let Some(pos) = all.clone().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: "boundary".into(),
                node: pos,
            });
        }
        Ok(())
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        let g = self.grid;
        if j == 0 {
            self.bottom[i]
        } else if j == g.nt() {
            self.top[i]
        } else if i == 0 {
            self.left[j]
        } else {
            self.right[j]
        }
    }

    pub fn range(&self) -> (f64, f64) {
        self.bottom
            .iter()
            .chain(&self.top)
            .chain(&self.left)
            .chain(&self.right)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Centered differences of the bottom data, one-sided at the ends.
    pub fn bottom_gradient(&self) -> BoundarySamples {
        let g = self.grid;
        let d = g.delta();
        let n = g.nx();
        let b = &self.bottom;
        let values = (0..=n)
            .map(|i| {
                if i == 0 {
                    (b[1] - b[0]) / d
                } else if i == n {
                    (b[n] - b[n - 1]) / d
                } else {
                    (b[i + 1] - b[i - 1]) / (2.0 * d)
                }
            })
            .collect();
        BoundarySamples {
            x: (0..=n).map(|i| g.y(i)).collect(),
            values,
            spacing: d,
        }
    }
}

/// Values at boundary sample points, with the spacing used for norms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundarySamples {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub spacing: f64,
}

impl BoundarySamples {
    /// `(spacing * sum |v|^q)^(1/q)`.
    pub fn q_norm(&self, q: f64) -> f64 {
        (self.spacing * self.values.iter().map(|v| v.abs().powf(q)).sum::<f64>()).powf(1.0 / q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_checks() {
        assert!(SolverGrid::new(1.0 / 32.0, 0.5).is_ok());
        assert!(matches!(SolverGrid::new(0.25, 1.0), Err(Error::InsufficientResolution(_))));
        assert!(matches!(SolverGrid::new(0.3, 1.0), Err(Error::InvalidInput { .. })));
    }

    #[test]
    fn cubic_sampling_exact_on_cubics() {
        let g = SolverGrid::new(1.0 / 16.0, 0.5).unwrap();
        let f = |y: f64, t: f64| y * y * y - 2.0 * y * t * t + t;
        let u = GridFunction::from_fn(g, f);
        for &(y, t) in &[(0.013, 0.21), (0.5, 0.49), (0.97, 0.003), (0.33, 0.25)] {
            assert!((u.sample_cubic(y, t).unwrap() - f(y, t)).abs() < 1e-12);
        }
        assert!(u.sample_cubic(1.2, 0.1).is_none());
    }
}
