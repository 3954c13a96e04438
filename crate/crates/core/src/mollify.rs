//! `t`-scaled averaging of a coefficient field against a smooth bump.
//!
//! `B~(y, t) = sum_k w_k A(y + t X_k, t + t S_k)` over a fixed symmetric
//! reference lattice `(X_k, S_k)` inside the ball of radius 1/2. Values of `A`
//! off the grid come from multilinear interpolation, clamped at the ends of
//! the ladder.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleson::cmsup_constant;
use crate::error::{Error, Result};
use crate::fields::{interp, Grid, measure_ellipticity, sup_norm, t_gradient, Ellipticity, Field};

/// Default lattice points per half-width of the support.
pub const DEFAULT_RESOLUTION: usize = 6;

#[derive(Debug, Clone)]
pub struct BumpKernel {
    n: usize,
    resolution: usize,
    spacing: f64,
    normalization: f64,
    /// Reference offsets, `n` coordinates each (tangential first).
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

fn raw_bump(x: &[f64]) -> f64 {
    let q = 4.0 * x.iter().map(|v| v * v).sum::<f64>();
    if q >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - q)).exp()
    }
}

fn raw_bump_gradient(x: &[f64]) -> Vec<f64> {
    let q = 4.0 * x.iter().map(|v| v * v).sum::<f64>();
    if q >= 1.0 {
        return vec![0.0; x.len()];
    }
    let th = raw_bump(x);
    x.iter().map(|&v| th * (-8.0 * v / (1.0 - q).powi(2))).collect()
}

pub fn make_bump(n: usize) -> Result<BumpKernel> {
    make_bump_with(n, DEFAULT_RESOLUTION)
}

/// Bump `c exp(-1/(1 - |2X|^2))` on a lattice with `resolution` points per
/// half-width; `c` makes the discrete mass exactly one.
pub fn make_bump_with(n: usize, resolution: usize) -> Result<BumpKernel> {
    if resolution < 2 {
        return Err(Error::KernelUnderResolved(format!(
            "{resolution} lattice points per half-width, need >= 2"
        )));
    }
    let spacing = 0.5 / resolution as f64;
    let r = resolution as isize;
    let side = (2 * r + 1) as usize;
    let mut points = Vec::new();
    let mut raw = Vec::new();
    for flat in 0..side.pow(n as u32) {
        let mut rem = flat;
        let mut x = vec![0.0; n];
        for c in x.iter_mut() {
            *c = ((rem % side) as isize - r) as f64 * spacing;
            rem /= side;
        }
        let th = raw_bump(&x);
        if th > 0.0 {
            points.push(x);
            raw.push(th);
        }
    }
    let cell = spacing.powi(n as i32);
    let mass: f64 = raw.iter().sum::<f64>() * cell;
    let weights = raw.iter().map(|th| th * cell / mass).collect();
    Ok(BumpKernel {
        n,
        resolution,
        spacing,
        normalization: 1.0 / mass,
        points,
        weights,
    })
}

impl BumpKernel {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Normalized profile `theta(X)`.
    pub fn profile(&self, x: &[f64]) -> f64 {
        self.normalization * raw_bump(x)
    }

    pub fn support_radius(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn first_moment(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for (p, w) in self.points.iter().zip(&self.weights) {
            for (mk, pk) in m.iter_mut().zip(p) {
                *mk += w * pk;
            }
        }
        m
    }

    /// Discrete L1 norm of `t grad_{y,t} theta_{y,t}`, i.e. of
    /// `-(grad_x theta, n theta + X . grad theta + d_s theta)` on the lattice.
    pub fn derivative_l1(&self) -> f64 {
        let cell = self.spacing.powi(self.n as i32);
        let n = self.n;
        self.points
            .iter()
            .map(|p| {
                let th = self.profile(p);
                let g: Vec<f64> = raw_bump_gradient(p)
                    .into_iter()
                    .map(|v| v * self.normalization)
                    .collect();
                let radial: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
                let normal = n as f64 * th + radial + g[n - 1];
                let tang: f64 = g[..n - 1].iter().map(|v| v * v).sum();
                (tang + normal * normal).sqrt() * cell
            })
            .sum()
    }
}

/// Lattice resolution at which the scaled stencil spacing `t / (2 res)` is no
/// coarser than a grid cell in either direction.
pub fn level_resolution(kernel: &BumpKernel, grid: &Grid, level: usize) -> usize {
    let t = grid.t(level);
    let across = (0.5 * t / grid.x_spacing()).ceil() as usize;
    let along = (0.5 / grid.log_step()).ceil() as usize;
    kernel.resolution().max(across).max(along)
}

fn level_kernels(kernel: &BumpKernel, grid: &Grid) -> Result<Vec<BumpKernel>> {
    let mut cache: Vec<BumpKernel> = Vec::new();
    (0..grid.level_count())
        .map(|j| {
            let res = level_resolution(kernel, grid, j);
            if let Some(k) = cache.iter().find(|k| k.resolution() == res) {
                return Ok(k.clone());
            }
            let k = if res == kernel.resolution() { kernel.clone() } else { make_bump_with(kernel.dim(), res)? };
            cache.push(k.clone());
            Ok(k)
        })
        .collect()
}

/// Averages `a` against the scaled bump at every node.
pub fn mollify(a: &Field, kernel: &BumpKernel) -> Result<Field> {
    let grid = *a.grid();
    if kernel.dim() != grid.n() {
        return Err(Error::Shape(format!(
            "kernel dimension {} on an n = {} grid",
            kernel.dim(),
            grid.n()
        )));
    }
    // the stencil spans log(3) in log t; it must straddle at least two ladder steps
    let levels_spanned = 3f64.ln() / grid.log_step();
    if levels_spanned < 2.0 {
        return Err(Error::KernelUnderResolved(format!(
            "stencil spans {levels_spanned:.2} ladder steps, need >= 2 (m = {})",
            grid.levels_per_octave()
        )));
    }
    if grid.top() / 2.0 < 2.0 * grid.x_spacing() {
        return Err(Error::KernelUnderResolved(format!(
            "coarsest stencil half-width {} spans fewer than two cells of width {}",
            grid.top() / 2.0,
            grid.x_spacing()
        )));
    }
    let nc = a.components();
    let d = grid.tangential_dims();
    let levels = level_kernels(kernel, &grid)?;
    let values: Vec<f64> = (0..grid.node_count())
        .into_par_iter()
        .flat_map_iter(|node| {
            let level = grid.level_of(node);
            let kernel = &levels[level];
            let t = grid.t(level);
            let y = grid.coords(grid.tangential_of(node));
            // weights sum to one, so offsets from the centre value keep constants exact
            let centre = a.at(node);
            let mut acc = vec![0.0; nc];
            let mut buf = vec![0.0; nc];
            let mut z = vec![0.0; d];
            for (p, w) in kernel.points.iter().zip(&kernel.weights) {
                for k in 0..d {
                    z[k] = y[k] + t * p[k];
                }
                interp::sample_into(a, &z, t * (1.0 + p[d]), &mut buf);
                for c in 0..nc {
                    acc[c] += w * (buf[c] - centre[c]);
                }
            }
            for c in 0..nc {
                acc[c] += centre[c];
            }
            acc
        })
        .collect();
    Field::new(grid, a.kind(), format!("mollified {}", a.name()), values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MollifyCertificate {
    pub input: Ellipticity,
    pub output: Ellipticity,
    /// `||t grad B~||_inf`.
    pub gradient_sup: f64,
    /// `||t grad B~||_inf / C_A`.
    pub gradient_ratio: f64,
    pub gradient_cmsup: f64,
    pub residual_cmsup: f64,
    pub ellipticity_preserved: bool,
    pub flags: Vec<String>,
}

pub const CONVEXITY_TOLERANCE: f64 = 1e-10;

pub fn mollify_certificate(a: &Field, smoothed: &Field) -> Result<MollifyCertificate> {
    if a.grid() != smoothed.grid() {
        return Err(Error::Shape("certificate fields live on different grids".into()));
    }
    let input = measure_ellipticity(a)?;
    let output = measure_ellipticity(smoothed)?;
    let grad = t_gradient(smoothed)?;
    let gradient_sup = sup_norm(&grad.magnitude());
    let gradient_cmsup = cmsup_constant(&grad.magnitude())?.constant;
    let residual_cmsup = cmsup_constant(&a.sub(smoothed)?)?.constant;
    let mut flags = Vec::new();
    let lower_ok = output.lambda >= input.lambda - CONVEXITY_TOLERANCE;
    let upper_ok = output.big_lambda <= input.big_lambda + CONVEXITY_TOLERANCE;
    if !lower_ok {
        flags.push(format!("lambda dropped: {} < {}", output.lambda, input.lambda));
    }
    if !upper_ok {
        flags.push(format!("Lambda grew: {} > {}", output.big_lambda, input.big_lambda));
    }
    Ok(MollifyCertificate {
        input,
        output,
        gradient_sup,
        gradient_ratio: gradient_sup / input.constant(),
        gradient_cmsup,
        residual_cmsup,
        ellipticity_preserved: lower_ok && upper_ok,
        flags,
    })
}

/// `C_theta ||A||_inf`, the a priori bound on `||t grad B~||_inf`.
pub fn gradient_bound(kernel: &BumpKernel, a: &Field) -> f64 {
    kernel.derivative_l1() * sup_norm(a)
}
