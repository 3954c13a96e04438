//! Built-in coefficient fields with properties known by construction.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{Field, Grid};

#[derive(Debug, Clone, Serialize)]
pub struct KnownProperty {
    pub property: &'static str,
    pub provenance: &'static str,
}

/// Principal part `B` and remainder `C` at a point; `x` tangential, `top` the strip height.
type Sampler = fn(&[f64], f64, f64, usize) -> (DMatrix<f64>, DMatrix<f64>);

#[derive(Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub summary: &'static str,
    pub known: &'static [KnownProperty],
    sampler: Sampler,
    /// Lower-right entry alone, for the diagonal variant.
    scalar: Option<fn(&[f64], f64, f64) -> f64>,
}

/// Sampled `A = B + C` on a grid.
#[derive(Debug, Clone)]
pub struct FixtureFields {
    pub a: Field,
    pub b: Field,
    pub c: Field,
    pub scalar: Option<Field>,
}

fn identity_sampler(_: &[f64], _: f64, _: f64, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    (DMatrix::identity(n, n), DMatrix::zeros(n, n))
}

fn diag_b_scalar(x: &[f64], t: f64, top: f64) -> f64 {
    2.0 + 0.5 * (t / top).tanh() * (2.0 * PI * x[0]).cos()
}

fn rpcor_scalar(_: &[f64], t: f64, top: f64) -> f64 {
    1.0 + 0.5 * t / top
}

fn diagonal(b: f64, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n, n) / b;
    m[(n - 1, n - 1)] = b;
    m
}

fn diag_b_sampler(x: &[f64], t: f64, top: f64, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    (diagonal(diag_b_scalar(x, t, top), n), DMatrix::zeros(n, n))
}

fn rpcor_sampler(x: &[f64], t: f64, top: f64, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    (diagonal(rpcor_scalar(x, t, top), n), DMatrix::zeros(n, n))
}

fn dkp_principal(x: &[f64], t: f64, top: f64, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n, n);
    m[(n - 1, 0)] = 0.3 * t / top;
    m[(n - 1, n - 1)] = 2.0 + 0.5 * (2.0 * PI * x[0]).sin() * t / top;
    m
}

/// Smooth bump of height one supported in a ball of radius `T/8` around `(1/2, T/4)`.
fn bump(x: &[f64], t: f64, top: f64) -> f64 {
    let r = top / 8.0;
    let dist2 = x.iter().map(|y| (y - 0.5).powi(2)).sum::<f64>() + (t - top / 4.0).powi(2);
    let s = dist2 / (r * r);
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - s).powi(2)
    }
}

fn dkp_generic_sampler(x: &[f64], t: f64, top: f64, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    (dkp_principal(x, t, top, n), DMatrix::identity(n, n) * (0.2 * bump(x, t, top)))
}

fn rough_dkp_sampler(x: &[f64], t: f64, top: f64, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let sign = if (16.0 * PI * x[0]).sin() >= 0.0 { 1.0 } else { -1.0 };
    (dkp_principal(x, t, top, n), DMatrix::identity(n, n) * (0.3 * t / top * sign))
}

const IDENTITY_KNOWN: &[KnownProperty] = &[
    KnownProperty {
        property: "lambda = Lambda = 1",
        provenance: "closed form",
    },
    KnownProperty {
        property: "all Carleson constants vanish",
        provenance: "zero gradient and zero remainder",
    },
];

const DIAG_B_KNOWN: &[KnownProperty] = &[
    KnownProperty {
        property: "1.5 <= b <= 2.5, so lambda >= 0.4 and Lambda <= 2.5",
        provenance: "closed form: |tanh| <= 1, |cos| <= 1",
    },
    KnownProperty {
        property: "|t grad b| <= C t / T, truncated Carleson constants converge as t_min -> 0",
        provenance: "tanh(t/T) vanishes linearly; measured by the carleson module on two ladders",
    },
];

const DKP_GENERIC_KNOWN: &[KnownProperty] = &[
    KnownProperty {
        property: "B3 = 0.3 t/T, b = 2 + 0.5 sin(2 pi y) t/T, C = 0.2 bump I",
        provenance: "closed-form sampling",
    },
    KnownProperty {
        property: "lambda >= 0.9",
        provenance: "symmetric part [[1, 0.15 s], [0.15 s, b]] with s <= 1, b >= 1.5, C >= 0",
    },
    KnownProperty {
        property: "Carleson constants finite and stable under halving t_min",
        provenance: "factors vanish linearly in t; C supported in t in [T/8, 3T/8]",
    },
];

const ROUGH_DKP_KNOWN: &[KnownProperty] = &[
    KnownProperty {
        property: "B as in dkp-generic, C = 0.3 (t/T) sign(sin 16 pi y) I",
        provenance: "closed-form sampling",
    },
    KnownProperty {
        property: "lambda >= 0.6",
        provenance: "lambda(B) >= 0.9 and |C| <= 0.3",
    },
];

const RPCOR_KNOWN: &[KnownProperty] = &[
    KnownProperty {
        property: "A = diag(1/b, b), b = 1 + 0.5 t/T in [1, 1.5]",
        provenance: "closed form",
    },
    KnownProperty {
        property: "|t grad b| = 0.5 t/T",
        provenance: "closed form",
    },
];

pub fn registry() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "identity",
            summary: "A = I",
            known: IDENTITY_KNOWN,
            sampler: identity_sampler,
            scalar: Some(|_, _, _| 1.0),
        },
        Fixture {
            name: "diag-b",
            summary: "A = diag(1/b, b), b = 2 + 0.5 tanh(t/T) cos(2 pi y)",
            known: DIAG_B_KNOWN,
            sampler: diag_b_sampler,
            scalar: Some(diag_b_scalar),
        },
        Fixture {
            name: "dkp-generic",
            summary: "B with last row (0.3 t/T, 2 + 0.5 sin(2 pi y) t/T), C a compact bump",
            known: DKP_GENERIC_KNOWN,
            sampler: dkp_generic_sampler,
            scalar: None,
        },
        Fixture {
            name: "rough-dkp",
            summary: "dkp-generic principal part with a checkerboard remainder",
            known: ROUGH_DKP_KNOWN,
            sampler: rough_dkp_sampler,
            scalar: None,
        },
        Fixture {
            name: "rpcor",
            summary: "A = diag(1/b, b), b = 1 + 0.5 t/T",
            known: RPCOR_KNOWN,
            sampler: rpcor_sampler,
            scalar: Some(rpcor_scalar),
        },
    ]
}

pub fn lookup(name: &str) -> Result<Fixture> {
    registry()
        .into_iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::UnknownFixture(name.to_string()))
}

impl Fixture {
    pub fn sample(&self, grid: Grid) -> Result<FixtureFields> {
        let n = grid.n();
        let top = grid.top();
        let sampler = self.sampler;
        let b = Field::matrix_fn(grid, n, format!("{}.B", self.name), |x, t| sampler(x, t, top, n).0)?;
        let c = Field::matrix_fn(grid, n, format!("{}.C", self.name), |x, t| sampler(x, t, top, n).1)?;
        let a = b.add(&c)?.with_name(format!("{}.A", self.name));
        let scalar = match self.scalar {
            Some(f) => Some(Field::scalar_fn(grid, format!("{}.b", self.name), |x, t| f(x, t, top))?),
            None => None,
        };
        Ok(FixtureFields { a, b, c, scalar })
    }

    /// `A(y, t)` in two dimensions for the rectangle solver.
    pub fn coefficient(&self, top: f64) -> impl Fn(f64, f64) -> Matrix2<f64> + Sync + 'static {
        let sampler = self.sampler;
        move |y, t| {
            let (b, c) = sampler(&[y], t, top, 2);
            let a = b + c;
            Matrix2::new(a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)])
        }
    }

    pub fn scalar_fn(&self, top: f64) -> Option<impl Fn(f64, f64) -> f64 + Sync + 'static> {
        self.scalar.map(|f| move |y: f64, t: f64| f(&[y], t, top))
    }
}

pub fn fixture(name: &str, grid: Grid) -> Result<FixtureFields> {
    lookup(name)?.sample(grid)
}

/// A harmonic function for `A = I` and the maps it is composed with.
pub struct HarmonicPair {
    pub name: &'static str,
    pub u: fn(f64, f64) -> f64,
}

pub fn harmonic_pairs() -> Vec<HarmonicPair> {
    vec![
        HarmonicPair {
            name: "u = y",
            u: |y, _| y,
        },
        HarmonicPair {
            name: "u = y t",
            u: |y, t| y * t,
        },
    ]
}

/// `(name, v, h)` of the constant maps used with the harmonic pairs.
pub fn harmonic_maps() -> Vec<(&'static str, f64, f64)> {
    vec![("scaling (y, 2t)", 0.0, 2.0), ("shear (y + t, t)", 1.0, 1.0)]
}
