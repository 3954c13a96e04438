//! Conjugation for operators `-div |t|^(d+1-n) A grad` on `R^n` minus a
//! `d`-plane, evaluated at sample points.
//!
//! Points are `(y, t)` with `y` in `R^d` and `t` in `R^(n-d)`, both read as
//! row vectors. The map is `rho(y, t) = (y + t v, h t)` with `v` an
//! `(n-d) x d` matrix and `h` a positive scalar.

use nalgebra::DMatrix;

use crate::changevar::transform_matrix;
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-6;

pub type MatrixFn<'a> = &'a (dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Sync);
pub type ScalarFn<'a> = &'a (dyn Fn(&[f64], &[f64]) -> f64 + Sync);

/// Dilation factor of the normal coordinates.
pub enum Dilation<'a> {
    Scalar(ScalarFn<'a>),
    /// Only representable to be refused: the weight `(|Ht|/|t|)^(d+1-n)` is
    /// cancelled by the Jacobian determinant only for `H = h I`.
    Matrix(MatrixFn<'a>),
}

#[derive(Debug, Clone)]
pub struct SamplePoint {
    pub y: Vec<f64>,
    pub t: Vec<f64>,
}

pub struct HighCodimMap<'a> {
    pub d: usize,
    pub n: usize,
    pub v: MatrixFn<'a>,
    pub h: ScalarFn<'a>,
}

/// `v`, `h` and their partial derivatives along each of the `n` coordinates.
#[derive(Debug, Clone)]
pub struct LocalData {
    pub v: DMatrix<f64>,
    pub h: f64,
    pub dv: Vec<DMatrix<f64>>,
    pub dh: Vec<f64>,
}

fn split_point(z: &[f64], d: usize) -> (&[f64], &[f64]) {
    z.split_at(d)
}

impl HighCodimMap<'_> {
    pub fn local(&self, p: &SamplePoint) -> LocalData {
        let z: Vec<f64> = p.y.iter().chain(&p.t).copied().collect();
        let mut dv = Vec::with_capacity(self.n);
        let mut dh = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += FD_STEP;
            zm[i] -= FD_STEP;
            let (yp, tp) = split_point(&zp, self.d);
            let (ym, tm) = split_point(&zm, self.d);
            dv.push(((self.v)(yp, tp) - (self.v)(ym, tm)) / (2.0 * FD_STEP));
            dh.push(((self.h)(yp, tp) - (self.h)(ym, tm)) / (2.0 * FD_STEP));
        }
        LocalData {
            v: (self.v)(&p.y, &p.t),
            h: (self.h)(&p.y, &p.t),
            dv,
            dh,
        }
    }

    pub fn image(&self, p: &SamplePoint, l: &LocalData) -> SamplePoint {
        let k = self.n - self.d;
        let y = (0..self.d)
            .map(|j| p.y[j] + (0..k).map(|a| p.t[a] * l.v[(a, j)]).sum::<f64>())
            .collect();
        SamplePoint {
            y,
            t: p.t.iter().map(|t| l.h * t).collect(),
        }
    }

    /// `jac[(i, j)] = d_i rho_j`.
    pub fn jacobian(&self, p: &SamplePoint, l: &LocalData) -> DMatrix<f64> {
        let (n, d) = (self.n, self.d);
        let k = n - d;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..d {
                let mut e = if i == j { 1.0 } else { 0.0 };
                e += (0..k).map(|a| p.t[a] * l.dv[i][(a, j)]).sum::<f64>();
                if i >= d {
                    e += l.v[(i - d, j)];
                }
                m[(i, j)] = e;
            }
            for c in 0..k {
                let mut e = p.t[c] * l.dh[i];
                if i == d + c {
                    e += l.h;
                }
                m[(i, d + c)] = e;
            }
        }
        m
    }
}

/// `h^(d+1-n) det(jac) jac^-T (A o rho) jac^-1` at every sample point.
pub fn highcodim_conjugate(
    a: MatrixFn<'_>,
    v: MatrixFn<'_>,
    h: Dilation<'_>,
    d: usize,
    n: usize,
    points: &[SamplePoint],
) -> Result<Vec<DMatrix<f64>>> {
    let h = match h {
        Dilation::Scalar(h) => h,
        Dilation::Matrix(_) => return Err(Error::MatrixDilation),
    };
    if d == 0 || d >= n {
        return Err(Error::InvalidInput {
            key: "d".into(),
            reason: format!("need 1 <= d <= n - 1, got d = {d}, n = {n}"),
        });
    }
    let map = HighCodimMap { d, n, v, h };
    points
        .iter()
        .enumerate()
        .map(|(idx, p)| {
            if p.y.len() != d || p.t.len() != n - d {
                return Err(Error::Shape(format!("sample point {idx} has the wrong dimensions")));
            }
            let l = map.local(p);
            if !(l.h > 0.0) {
                return Err(Error::NotAGraphMap { value: l.h, node: idx });
            }
            let q = map.image(p, &l);
            let jac = map.jacobian(p, &l);
            let weight = l.h.powi(d as i32 + 1 - n as i32);
            Ok(transform_matrix(&a(&q.y, &q.t), &jac) * weight)
        })
        .collect()
}
