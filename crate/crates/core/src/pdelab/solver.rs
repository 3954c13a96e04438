use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::grid::{BoundaryFunction, GridFunction, SolverGrid};
use crate::error::{Error, Result};

pub type Coefficient<'a> = &'a (dyn Fn(f64, f64) -> Matrix2<f64> + Sync);

pub const SOLVER_TOLERANCE: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 3;

/// Weights of one node's nine-point stencil, indexed `[di + 1][dj + 1]`.
type Stencil = [[f64; 3]; 3];

/// Flux-form discretization of `div A grad u` at an interior node.
///
/// Face fluxes use `A` at the face midpoint. The cross derivative at a face
/// takes the diagonal pair matching the sign of the off-diagonal entry, so
/// the stencil is monotone when `A` is diagonally dominant.
fn stencil(a: Coefficient<'_>, g: &SolverGrid, i: usize, j: usize) -> Stencil {
    let d = g.delta();
    let (y, t) = (g.y(i), g.t(j));
    let mut s = [[0.0; 3]; 3];
    let inv = 1.0 / (d * d);
    // y-faces: sign +1 for i + 1/2, -1 for i - 1/2
    for (side, sign) in [(1isize, 1.0), (-1, -1.0)] {
        let m = a(y + 0.5 * side as f64 * d, t);
        let (a11, a12) = (m[(0, 0)], m[(0, 1)]);
        let near = 1 + side;
        // a11 (u_nb - u_c) / d^2, with the outward sign folded in
        s[near as usize][1] += a11 * inv;
        s[1][1] -= a11 * inv;
        // cross term a12 u_t at the face, then divided by d and signed
        let w = sign * a12 * inv / 2.0;
        let (hi, lo) = if side == 1 { (2usize, 1usize) } else { (1, 0) };
        if a12 >= 0.0 {
            // (u_hi,j+1 - u_hi,j) + (u_lo,j - u_lo,j-1)
            s[hi][2] += w;
            s[hi][1] -= w;
            s[lo][1] += w;
            s[lo][0] -= w;
        } else {
            // (u_hi,j - u_hi,j-1) + (u_lo,j+1 - u_lo,j)
            s[hi][1] += w;
            s[hi][0] -= w;
            s[lo][2] += w;
            s[lo][1] -= w;
        }
    }
    for (side, sign) in [(1isize, 1.0), (-1, -1.0)] {
        let m = a(y, t + 0.5 * side as f64 * d);
        let (a22, a21) = (m[(1, 1)], m[(1, 0)]);
        let near = 1 + side;
        s[1][near as usize] += a22 * inv;
        s[1][1] -= a22 * inv;
        let w = sign * a21 * inv / 2.0;
        let (hi, lo) = if side == 1 { (2usize, 1usize) } else { (1, 0) };
        if a21 >= 0.0 {
            // (u_i+1,hi - u_i,hi) + (u_i,lo - u_i-1,lo)
            s[2][hi] += w;
            s[1][hi] -= w;
            s[1][lo] += w;
            s[0][lo] -= w;
        } else {
            // (u_i,hi - u_i-1,hi) + (u_i+1,lo - u_i,lo)
            s[1][hi] += w;
            s[0][hi] -= w;
            s[2][lo] += w;
            s[1][lo] -= w;
        }
    }
    s
}

/// `-div A grad u` at interior nodes; zero on the boundary.
pub fn operator_residual(a: Coefficient<'_>, u: &GridFunction) -> GridFunction {
    let g = u.grid;
    let mut values = vec![0.0; g.node_count()];
    for j in 1..g.nt() {
        for i in 1..g.nx() {
            let s = stencil(a, &g, i, j);
            let mut acc = 0.0;
            for (di, col) in s.iter().enumerate() {
                for (dj, w) in col.iter().enumerate() {
                    acc += w * u.at(i + di - 1, j + dj - 1);
                }
            }
            values[g.index(i, j)] = -acc;
        }
    }
    GridFunction { grid: g, values }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solve {
    pub u: GridFunction,
    /// Relative residual after the factorization and each refinement step.
    pub residual_history: Vec<f64>,
    pub max_principle: bool,
}

/// Band matrix with equal lower and upper bandwidth, rows stored densely.
struct Banded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl Banded {
    fn new(n: usize, bw: usize) -> Self {
        Banded {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    fn idx(&self, r: usize, c: usize) -> usize {
        r * (2 * self.bw + 1) + (c + self.bw - r)
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        self.data[self.idx(r, c)]
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.bw);
                let hi = (r + self.bw).min(self.n - 1);
                (lo..=hi).map(|c| self.get(r, c) * x[c]).sum()
            })
            .collect()
    }

    /// In-place LU without pivoting.
    fn factor(mut self) -> Result<Banded> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.get(k, k);
            if !(pivot.abs() > 0.0) || !pivot.is_finite() {
                return Err(Error::SolverDiverged { history: vec![f64::NAN] });
            }
            let end = (k + bw).min(n - 1);
            for r in k + 1..=end {
                let ir = self.idx(r, k);
                if self.data[ir] == 0.0 {
                    continue;
                }
                let l = self.data[ir] / pivot;
                self.data[ir] = l;
                for c in k + 1..=end {
                    let kc = self.idx(k, c);
                    let rc = self.idx(r, c);
                    self.data[rc] -= l * self.data[kc];
                }
            }
        }
        Ok(self)
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let mut x = b.to_vec();
        for r in 0..n {
            let lo = r.saturating_sub(bw);
            let s: f64 = (lo..r).map(|c| self.get(r, c) * x[c]).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let hi = (r + bw).min(n - 1);
            let s: f64 = (r + 1..=hi).map(|c| self.get(r, c) * x[c]).sum();
            x[r] = (x[r] - s) / self.get(r, r);
        }
        x
    }
}

fn check_elliptic(a: Coefficient<'_>, g: &SolverGrid) -> Result<()> {
    let d = g.delta();
    for j in 0..=2 * g.nt() {
        for i in 0..=2 * g.nx() {
            let m = a(i as f64 * d / 2.0, j as f64 * d / 2.0);
            let sym = (m + m.transpose()) * 0.5;
            let lambda = sym.symmetric_eigenvalues().min();
            if !(lambda > 0.0) {
                return Err(Error::NotElliptic {
                    lambda,
                    node: g.index(i / 2, j / 2),
                });
            }
        }
    }
    Ok(())
}

/// Solves `-div A grad u = 0` with Dirichlet data `g` on all four edges.
pub fn solve_dirichlet(a: Coefficient<'_>, data: &BoundaryFunction, grid: &SolverGrid) -> Result<Solve> {
    if data.grid != *grid {
        return Err(Error::Shape("boundary data lives on a different solver grid".into()));
    }
    data.validate()?;
    check_elliptic(a, grid)?;
    let (mx, mt) = (grid.nx() - 1, grid.nt() - 1);
    let n = mx * mt;
    let unknown = |i: usize, j: usize| (j - 1) * mx + (i - 1);
    let mut mat = Banded::new(n, mx + 1);
    let mut rhs = vec![0.0; n];
    for j in 1..=mt {
        for i in 1..=mx {
            let r = unknown(i, j);
            let s = stencil(a, grid, i, j);
            for (di, col) in s.iter().enumerate() {
                for (dj, &w) in col.iter().enumerate() {
                    let (ii, jj) = (i + di - 1, j + dj - 1);
                    if grid.is_boundary(ii, jj) {
                        rhs[r] += w * data.value(ii, jj);
                    } else {
                        mat.add(r, unknown(ii, jj), -w);
                    }
                }
            }
        }
    }
    let original = Banded {
        n,
        bw: mat.bw,
        data: mat.data.clone(),
    };
    let lu = mat.factor()?;
    let norm_b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut x = lu.solve(&rhs);
    let mut history = Vec::new();
    for step in 0..=REFINEMENT_STEPS {
        let ax = original.mul(&x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / norm_b;
        history.push(rel);
        if !rel.is_finite() {
            return Err(Error::SolverDiverged { history });
        }
        if rel <= SOLVER_TOLERANCE && step > 0 {
            break;
        }
        if step == REFINEMENT_STEPS {
            if rel > SOLVER_TOLERANCE {
                return Err(Error::SolverDiverged { history });
            }
            break;
        }
        let dx = lu.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
    }
    let mut u = GridFunction {
        grid: *grid,
        values: vec![0.0; grid.node_count()],
    };
    for j in 0..=grid.nt() {
        for i in 0..=grid.nx() {
            u.values[grid.index(i, j)] = if grid.is_boundary(i, j) {
                data.value(i, j)
            } else {
                x[unknown(i, j)]
            };
        }
    }
    let (lo, hi) = data.range();
    let slack = 1e-9 * (hi - lo).abs().max(1.0);
    let max_principle = u.values.iter().all(|&v| v >= lo - slack && v <= hi + slack);
    Ok(Solve {
        u,
        residual_history: history,
        max_principle,
    })
}
