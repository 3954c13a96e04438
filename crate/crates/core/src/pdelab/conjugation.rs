use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::grid::{GridFunction, SolverGrid};
use super::solver::{operator_residual, Coefficient};
use crate::changevar::default_threshold;
use crate::error::{Error, Result};

const FD_STEP: f64 = 1e-6;

type Scalar2<'a> = Box<dyn Fn(f64, f64) -> f64 + Sync + 'a>;

/// `rho(y, t) = (y + t v(y, t), h(y, t) t)` from closed-form `v` and `h`,
/// with derivatives by central differences.
pub struct AnalyticMap<'a> {
    v: Scalar2<'a>,
    h: Scalar2<'a>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapBounds {
    /// `||t grad h||_inf + ||t grad v||_inf` over the solver nodes.
    pub eps: f64,
    pub eps0: f64,
    pub certified: bool,
    pub h_min: f64,
    pub h_max: f64,
    pub v_sup: f64,
    /// `max(|jac|, |jac^-1|)` in operator norm.
    pub lipschitz: f64,
    /// Aperture `(4 + |v|) / h_min` of the cones that contain the images of unit cones.
    pub aperture: f64,
}

impl<'a> AnalyticMap<'a> {
    pub fn new<V, H>(v: V, h: H) -> Self
    where
        V: Fn(f64, f64) -> f64 + Sync + 'a,
        H: Fn(f64, f64) -> f64 + Sync + 'a,
    {
        AnalyticMap {
            v: Box::new(v),
            h: Box::new(h),
        }
    }

    pub fn identity() -> Self {
        AnalyticMap::new(|_, _| 0.0, |_, _| 1.0)
    }

    pub fn image(&self, y: f64, t: f64) -> (f64, f64) {
        (y + t * (self.v)(y, t), (self.h)(y, t) * t)
    }

    fn partials(f: &Scalar2<'_>, y: f64, t: f64) -> (f64, f64) {
        let s = FD_STEP;
        ((f(y + s, t) - f(y - s, t)) / (2.0 * s), (f(y, t + s) - f(y, t - s)) / (2.0 * s))
    }

    /// `jac[(i, j)] = d_i rho_j`.
    pub fn jacobian(&self, y: f64, t: f64) -> Matrix2<f64> {
        let (vy, vt) = Self::partials(&self.v, y, t);
        let (hy, ht) = Self::partials(&self.h, y, t);
        Matrix2::new(
            1.0 + t * vy,
            t * hy,
            (self.v)(y, t) + t * vt,
            (self.h)(y, t) + t * ht,
        )
    }

    /// `det(jac) jac^-T (A o rho) jac^-1`.
    pub fn conjugated<'b>(&'b self, a: Coefficient<'b>) -> impl Fn(f64, f64) -> Matrix2<f64> + Sync + 'b {
        move |y, t| {
            let (x, s) = self.image(y, t);
            let jac = self.jacobian(y, t);
            let inv = jac.try_inverse().unwrap_or_else(Matrix2::zeros);
            inv.transpose() * a(x, s) * inv * jac.determinant()
        }
    }

    pub fn bounds(&self, grid: &SolverGrid) -> MapBounds {
        let (mut gh, mut gv) = (0.0f64, 0.0f64);
        let (mut h_min, mut h_max, mut v_sup) = (f64::INFINITY, 0.0f64, 0.0f64);
        let mut lip: f64 = 0.0;
        for j in 0..=grid.nt() {
            for i in 0..=grid.nx() {
                let (y, t) = (grid.y(i), grid.t(j));
                let (vy, vt) = Self::partials(&self.v, y, t);
                let (hy, ht) = Self::partials(&self.h, y, t);
                gv = gv.max(t * vy.hypot(vt));
                gh = gh.max(t * hy.hypot(ht));
                let h = (self.h)(y, t);
                h_min = h_min.min(h);
                h_max = h_max.max(h);
                v_sup = v_sup.max((self.v)(y, t).abs());
                let jac = self.jacobian(y, t);
                let norm = jac.svd(false, false).singular_values;
                lip = lip.max(norm.max()).max(1.0 / norm.min());
            }
        }
        let eps = gh + gv;
        let eps0 = default_threshold(2, h_min, h_max, v_sup).0;
        MapBounds {
            eps,
            eps0,
            certified: eps < eps0 && h_min > 0.0,
            h_min,
            h_max,
            v_sup,
            lipschitz: lip,
            aperture: (4.0 + v_sup) / h_min,
        }
    }
}

/// `L^(1 + n/2) (2 (1 + K))^((n - 1)/q)` with `n = 2`, `L` the Lipschitz
/// constant and `K` the aperture from the bounds.
pub fn certificate_factor(bounds: &MapBounds, q: f64) -> f64 {
    bounds.lipschitz.powi(2) * (2.0 * (1.0 + bounds.aperture)).powf(1.0 / q)
}

pub enum Solution<'a> {
    Closed(&'a (dyn Fn(f64, f64) -> f64 + Sync)),
    /// Interpolated with four-point Lagrange stencils.
    Nodal(&'a GridFunction),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConjugationCheck {
    pub delta: f64,
    pub max_residual: f64,
    pub l2_residual: f64,
    /// Nodes whose image left the solved rectangle.
    pub flagged_nodes: usize,
}

/// Residual of the conjugated operator applied to `u o rho`.
pub fn verify_conjugation(
    a: Coefficient<'_>,
    rho: &AnalyticMap<'_>,
    u: Solution<'_>,
    grid: &SolverGrid,
) -> Result<ConjugationCheck> {
    let mut outside = vec![false; grid.node_count()];
    let mut values = vec![0.0; grid.node_count()];
    for j in 0..=grid.nt() {
        for i in 0..=grid.nx() {
            let (x, s) = rho.image(grid.y(i), grid.t(j));
            let k = grid.index(i, j);
            match &u {
                Solution::Closed(f) => values[k] = f(x, s),
                Solution::Nodal(g) => match g.sample_cubic(x, s) {
                    Some(v) => values[k] = v,
                    None => outside[k] = true,
                },
            }
        }
    }
    let flagged_nodes = outside.iter().filter(|&&o| o).count();
    let composed = GridFunction { grid: *grid, values };
    let conj = rho.conjugated(a);
    let residual = operator_residual(&conj, &composed);
    let (mut max_residual, mut sum) = (0.0f64, 0.0);
    for j in 1..grid.nt() {
        for i in 1..grid.nx() {
            let touches_outside = (0..3).any(|a| (0..3).any(|b| outside[grid.index(i + a - 1, j + b - 1)]));
            if touches_outside {
                continue;
            }
            let r = residual.at(i, j);
            if !r.is_finite() {
                return Err(Error::NonFinite {
                    field: "conjugation residual".into(),
                    node: grid.index(i, j),
                });
            }
            max_residual = max_residual.max(r.abs());
            sum += r * r;
        }
    }
    let d = grid.delta();
    Ok(ConjugationCheck {
        delta: d,
        max_residual,
        l2_residual: (sum * d * d).sqrt(),
        flagged_nodes,
    })
}
