//! Graph-type maps `rho(y, t) = (y + t v, h t)` of the strip, their
//! Jacobians and certificates, and the transformed coefficient matrices.
//!
//! Jacobians are stored transposed against the usual convention:
//! `jac[(i, j)] = d_i rho_j`, so for `rho` it reads
//! `[[I + t grad_y v, t grad_y h], [v + t d_t v, h + t d_t h]]`
//! and the operator transforms as `det(jac) jac^-T (A o rho) jac^-1`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleson::cmsup_constant;
use crate::error::{Error, Result};
use crate::fields::{
    block_decompose, ellipticity_constants, interp, measure_ellipticity, spectral_norm, sup_norm,
    t_gradient, write_matrix, Field, Gradient, Grid, Kind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCertificate {
    /// `||t grad h||_inf + ||t grad v||_inf`.
    pub eps: f64,
    pub eps0: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub v_sup: f64,
    pub certified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Threshold below which the map is bi-Lipschitz with the bounds
/// `|det jac - h| <= h_min / 2` and `|jac^-1 - J^-1| <= C0 eps`, plus that `C0`.
///
/// With `kappa = sqrt(n-1) + (1 + |v|)/h_min` bounding `|J^-1|`, the Neumann
/// series for `(I + J^-1 (jac - J))^-1` converges once `kappa eps <= 1/2`,
/// and `det(I + M) - 1` is at most `(1 + |M|)^n - 1`.
pub fn default_threshold(n: usize, h_min: f64, h_max: f64, v_sup: f64) -> (f64, f64) {
    let kappa = ((n - 1) as f64).sqrt() + (1.0 + v_sup) / h_min;
    let delta = 0.5f64.min((1.0 + h_min / (2.0 * h_max)).ln() / n as f64);
    (delta / kappa, 2.0 * kappa * kappa)
}

/// Values needed to evaluate `rho` and its Jacobian at one point.
#[derive(Debug, Clone)]
struct Local {
    v: Vec<f64>,
    h: f64,
    /// `t d_i v_j` at `i * d + j`, `i` over all `n` directions.
    dv: Vec<f64>,
    /// `t d_i h`.
    dh: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ChangeOfVariable {
    v: Field,
    h: Field,
    grad_v: Gradient,
    grad_h: Gradient,
    /// `v, h, t grad v, t grad h` packed per node for interpolation.
    packed: Field,
    certificate: MapCertificate,
}

/// `jac`, `J = [[I, 0], [v, h]]`, `det(jac)` and both inverses at a node.
#[derive(Debug, Clone)]
pub struct JacobianPair {
    pub jac: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub det: f64,
    pub jac_inv: DMatrix<f64>,
    pub j_inv: DMatrix<f64>,
}

/// Image point and Jacobian of a map at one point.
#[derive(Debug, Clone)]
pub struct MapPoint {
    pub x: Vec<f64>,
    pub t: f64,
    pub jac: DMatrix<f64>,
    /// Some evaluation left `[t_min, T]` and was clamped.
    pub clamped: bool,
}

/// Maps of the strip that can be evaluated with their Jacobian anywhere.
pub trait PointMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], t: f64) -> MapPoint;
}

pub fn build_map(v: &Field, h: &Field, eps0: Option<f64>) -> Result<ChangeOfVariable> {
    let grid = *h.grid();
    let n = grid.n();
    let d = n - 1;
    if h.kind() != Kind::Scalar {
        return Err(Error::Shape("h must be a scalar field".into()));
    }
    if v.kind() != Kind::Vector(d) || *v.grid() != grid {
        return Err(Error::Shape(format!("v must be a length-{d} vector field on the grid of h")));
    }
    for (node, &hv) in h.values().iter().enumerate() {
        if hv <= 0.0 {
            return Err(Error::NotAGraphMap { value: hv, node });
        }
    }
    let grad_v = t_gradient(v)?;
    let grad_h = t_gradient(h)?;
    let eps = sup_norm(&grad_h.magnitude()) + sup_norm(&grad_v.magnitude());
    let h_min = h.values().iter().copied().fold(f64::INFINITY, f64::min);
    let h_max = h.values().iter().copied().fold(0.0, f64::max);
    let v_sup = sup_norm(v);
    let (default_eps0, c0) = default_threshold(n, h_min, h_max, v_sup);
    let eps0 = eps0.unwrap_or(default_eps0);
    let certified = eps < eps0;
    let diagnostic = (!certified).then(|| {
        format!("eps = {eps:.6e} >= eps0 = {eps0:.6e} (h in [{h_min:.4}, {h_max:.4}], |v| <= {v_sup:.4})")
    });

    let len = d + 1 + n * d + n;
    let mut values = vec![0.0; grid.node_count() * len];
    for (node, out) in values.chunks_mut(len).enumerate() {
        out[..d].copy_from_slice(v.at(node));
        out[d] = h.scalar(node);
        for i in 0..n {
            out[d + 1 + i * d..d + 1 + (i + 1) * d].copy_from_slice(grad_v.directions[i].at(node));
            out[d + 1 + n * d + i] = grad_h.directions[i].scalar(node);
        }
    }
    let packed = Field::new(grid, Kind::Vector(len), "packed map", values)?;

    Ok(ChangeOfVariable {
        v: v.clone(),
        h: h.clone(),
        grad_v,
        grad_h,
        packed,
        certificate: MapCertificate {
            eps,
            eps0,
            c0,
            h_min,
            h_max,
            v_sup,
            certified,
            diagnostic,
        },
    })
}

pub fn identity_map(grid: Grid) -> Result<ChangeOfVariable> {
    let v = Field::constant(grid, Kind::Vector(grid.tangential_dims()), "v", &vec![0.0; grid.tangential_dims()])?;
    let h = Field::constant(grid, Kind::Scalar, "h", &[1.0])?;
    build_map(&v, &h, None)
}

fn unpack(buf: &[f64], n: usize) -> Local {
    let d = n - 1;
    Local {
        v: buf[..d].to_vec(),
        h: buf[d],
        dv: buf[d + 1..d + 1 + n * d].to_vec(),
        dh: buf[d + 1 + n * d..].to_vec(),
    }
}

fn jacobian_of(l: &Local, n: usize) -> DMatrix<f64> {
    let d = n - 1;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = if i == j { 1.0 } else { 0.0 } + l.dv[i * d + j];
        }
        m[(i, d)] = l.dh[i];
    }
    for j in 0..d {
        m[(d, j)] = l.v[j] + l.dv[d * d + j];
    }
    m[(d, d)] = l.h + l.dh[d];
    m
}

/// Jacobian of a codimension-one graph map from pointwise data: `v`, `h`,
/// `dv[i * (n-1) + j] = t d_i v_j` and `dh[i] = t d_i h`, directions tangential first.
pub fn point_jacobian(v: &[f64], h: f64, dv: &[f64], dh: &[f64]) -> DMatrix<f64> {
    let n = v.len() + 1;
    let l = Local {
        v: v.to_vec(),
        h,
        dv: dv.to_vec(),
        dh: dh.to_vec(),
    };
    jacobian_of(&l, n)
}

fn lower_block(v: &[f64], h: f64) -> DMatrix<f64> {
    let n = v.len() + 1;
    let mut m = DMatrix::identity(n, n);
    for (j, &vj) in v.iter().enumerate() {
        m[(n - 1, j)] = vj;
    }
    m[(n - 1, n - 1)] = h;
    m
}

fn lower_block_inverse(v: &[f64], h: f64) -> DMatrix<f64> {
    let n = v.len() + 1;
    let mut m = DMatrix::identity(n, n);
    for (j, &vj) in v.iter().enumerate() {
        m[(n - 1, j)] = -vj / h;
    }
    m[(n - 1, n - 1)] = 1.0 / h;
    m
}

fn invert(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("certified Jacobian is invertible")
}

/// `det(jac) jac^-T a jac^-1`.
pub fn transform_matrix(a: &DMatrix<f64>, jac: &DMatrix<f64>) -> DMatrix<f64> {
    let inv = invert(jac);
    inv.transpose() * a * &inv * jac.determinant()
}

impl ChangeOfVariable {
    pub fn grid(&self) -> &Grid {
        self.h.grid()
    }

    pub fn v(&self) -> &Field {
        &self.v
    }

    pub fn h(&self) -> &Field {
        &self.h
    }

    pub fn grad_v(&self) -> &Gradient {
        &self.grad_v
    }

    pub fn grad_h(&self) -> &Gradient {
        &self.grad_h
    }

    pub fn certificate(&self) -> &MapCertificate {
        &self.certificate
    }

    pub fn is_certified(&self) -> bool {
        self.certificate.certified
    }

    fn require_certified(&self) -> Result<()> {
        if self.certificate.certified {
            Ok(())
        } else {
            Err(Error::Uncertified {
                eps: self.certificate.eps,
                eps0: self.certificate.eps0,
            })
        }
    }

    fn local(&self, node: usize) -> Local {
        unpack(self.packed.at(node), self.grid().n())
    }

    fn local_at(&self, x: &[f64], t: f64) -> (Local, bool) {
        let (buf, clamped) = interp::sample(&self.packed, x, t);
        (unpack(&buf, self.grid().n()), clamped)
    }

    /// `rho` at a node: image tangential coordinates (not wrapped) and height.
    pub fn image(&self, node: usize) -> (Vec<f64>, f64) {
        let grid = self.grid();
        let t = grid.t(grid.level_of(node));
        let y = grid.coords(grid.tangential_of(node));
        let l = self.local(node);
        (y.iter().zip(&l.v).map(|(y, v)| y + t * v).collect(), l.h * t)
    }

    pub fn jacobian(&self, node: usize) -> DMatrix<f64> {
        jacobian_of(&self.local(node), self.grid().n())
    }

    pub fn jacobian_pair(&self, node: usize) -> JacobianPair {
        let l = self.local(node);
        let jac = jacobian_of(&l, self.grid().n());
        let jac_inv = invert(&jac);
        JacobianPair {
            det: jac.determinant(),
            j: lower_block(&l.v, l.h),
            j_inv: lower_block_inverse(&l.v, l.h),
            jac,
            jac_inv,
        }
    }

    /// Lower bound `min det(jac) / |jac|^2` on the ratio of output to input
    /// ellipticity under conjugation.
    pub fn ellipticity_factor(&self) -> f64 {
        (0..self.grid().node_count())
            .into_par_iter()
            .map(|node| {
                let jac = self.jacobian(node);
                jac.determinant() / spectral_norm(&jac).powi(2)
            })
            .reduce(|| f64::INFINITY, f64::min)
    }

    /// Resamples `v` and `h` of this map on another grid.
    pub fn resample(&self, grid: Grid) -> Result<ChangeOfVariable> {
        let d = grid.tangential_dims();
        let v = Field::from_fn(grid, Kind::Vector(d), "v", |x, t, out| {
            out.copy_from_slice(&interp::sample(&self.v, x, t).0)
        })?;
        let h = Field::scalar_fn(grid, "h", |x, t| interp::sample(&self.h, x, t).0[0])?;
        build_map(&v, &h, Some(self.certificate.eps0))
    }
}

impl PointMap for ChangeOfVariable {
    fn dim(&self) -> usize {
        self.grid().n()
    }

    fn apply(&self, x: &[f64], t: f64) -> MapPoint {
        let (l, clamped) = self.local_at(x, t);
        MapPoint {
            x: x.iter().zip(&l.v).map(|(y, v)| y + t * v).collect(),
            t: l.h * t,
            jac: jacobian_of(&l, self.grid().n()),
            clamped,
        }
    }
}

/// Output of [`conjugate`]: the transformed field with its ellipticity
/// certificate, nodes whose image was clamped to the ladder, and the
/// guaranteed factor `lambda' >= factor * lambda`.
#[derive(Debug, Clone)]
pub struct Conjugation {
    pub field: Field,
    pub clamped_nodes: Vec<usize>,
    pub ellipticity_factor: f64,
    pub ellipticity_chain_holds: bool,
}

fn conjugate_with<F>(a: &Field, eval: F) -> Result<Conjugation>
where
    F: Fn(usize) -> (Vec<f64>, f64, DMatrix<f64>, bool) + Sync,
{
    let grid = *a.grid();
    let n = grid.n();
    if a.kind() != Kind::Matrix(n) {
        return Err(Error::Shape(format!("expected an {n}x{n} matrix field")));
    }
    let input = measure_ellipticity(a)?;
    let nc = n * n;
    let per_node: Vec<(Vec<f64>, bool, f64)> = (0..grid.node_count())
        .into_par_iter()
        .map(|node| {
            let (x, t, jac, clamped_map) = eval(node);
            let mut buf = vec![0.0; nc];
            let clamped = interp::sample_into(a, &x, t, &mut buf) | clamped_map;
            let a_img = DMatrix::from_row_slice(n, n, &buf);
            let out = transform_matrix(&a_img, &jac);
            let mut vals = vec![0.0; nc];
            write_matrix(&out, &mut vals);
            (vals, clamped, jac.determinant() / spectral_norm(&jac).powi(2))
        })
        .collect();
    let mut values = Vec::with_capacity(grid.node_count() * nc);
    let mut clamped_nodes = Vec::new();
    let mut factor = f64::INFINITY;
    for (node, (vals, clamped, f)) in per_node.into_iter().enumerate() {
        values.extend(vals);
        if clamped {
            clamped_nodes.push(node);
        }
        factor = factor.min(f);
    }
    let mut field = Field::new(grid, a.kind(), format!("{} conjugated", a.name()), values)?;
    let out = ellipticity_constants(&mut field)?;
    Ok(Conjugation {
        field,
        clamped_nodes,
        ellipticity_factor: factor,
        ellipticity_chain_holds: out.lambda >= factor * input.lambda * (1.0 - 1e-12),
    })
}

/// `A_rho = det(jac) jac^-T (A o rho) jac^-1` at every node.
pub fn conjugate(a: &Field, rho: &ChangeOfVariable) -> Result<Conjugation> {
    rho.require_certified()?;
    if a.grid() != rho.grid() {
        return Err(Error::Shape("coefficients and map live on different grids".into()));
    }
    conjugate_with(a, |node| {
        let (x, t) = rho.image(node);
        (x, t, rho.jacobian(node), false)
    })
}

/// `B_rho = h J^-T B J^-1`, `C_rho = A_rho - B_rho`.
#[derive(Debug, Clone)]
pub struct ResidualSplit {
    pub b_rho: Field,
    pub c_rho: Field,
    pub a_rho: Conjugation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitDiagnostics {
    pub c_rho_cmsup: f64,
    pub majorant_cmsup: f64,
    /// Largest nodewise `|C_rho| / majorant` where the majorant is nonzero.
    pub pointwise_ratio: f64,
}

/// `h J^-T B J^-1` at every node, with `B` evaluated at the node itself.
pub fn lower_conjugate(b: &Field, rho: &ChangeOfVariable) -> Result<Field> {
    let grid = *rho.grid();
    let n = grid.n();
    if b.kind() != Kind::Matrix(n) || *b.grid() != grid {
        return Err(Error::Shape("B must be an n x n matrix field on the map grid".into()));
    }
    b.map_nodes(b.kind(), format!("{}_rho", b.name()), |node, vals, out| {
        let l = rho.local(node);
        let inv = lower_block_inverse(&l.v, l.h);
        let m = DMatrix::from_row_slice(n, n, vals);
        write_matrix(&(inv.transpose() * m * &inv * l.h), out);
    })
}

pub fn residual_split(b: &Field, c: &Field, rho: &ChangeOfVariable) -> Result<ResidualSplit> {
    rho.require_certified()?;
    let a = b.add(c)?;
    let a_rho = conjugate(&a, rho)?;
    let b_rho = lower_conjugate(b, rho)?;
    let c_rho = a_rho.field.sub(&b_rho)?.with_name("C_rho");
    Ok(ResidualSplit { b_rho, c_rho, a_rho })
}

/// `|B o rho - B| + |C o rho| + |t grad h| + |t grad v|` at every node.
pub fn split_majorant(b: &Field, c: &Field, rho: &ChangeOfVariable) -> Result<Field> {
    let grid = *rho.grid();
    let nc = b.components();
    let values: Vec<f64> = (0..grid.node_count())
        .map(|node| {
            let (x, t) = rho.image(node);
            let (bi, _) = interp::sample(b, &x, t);
            let (ci, _) = interp::sample(c, &x, t);
            let db: f64 = (0..nc).map(|k| (bi[k] - b.at(node)[k]).powi(2)).sum::<f64>().sqrt();
            let cc: f64 = ci.iter().map(|v| v * v).sum::<f64>().sqrt();
            db + cc
        })
        .collect();
    let comp = Field::new(grid, Kind::Scalar, "composition", values)?;
    Field::magnitude_sum(&[&comp, &rho.grad_h.magnitude(), &rho.grad_v.magnitude()])
}

impl ResidualSplit {
    pub fn diagnostics(&self, b: &Field, c: &Field, rho: &ChangeOfVariable) -> Result<SplitDiagnostics> {
        let majorant = split_majorant(b, c, rho)?;
        let cmag = self.c_rho.magnitude();
        let scale = sup_norm(&majorant).max(1.0);
        let pointwise_ratio = cmag
            .values()
            .iter()
            .zip(majorant.values())
            .filter(|(_, m)| **m > 1e-12 * scale)
            .map(|(c, m)| c / m)
            .fold(0.0, f64::max);
        Ok(SplitDiagnostics {
            c_rho_cmsup: cmsup_constant(&self.c_rho)?.constant,
            majorant_cmsup: cmsup_constant(&majorant)?.constant,
            pointwise_ratio,
        })
    }
}

/// `rho_0 o rho_1 o ... o rho_k`, kept as a list and evaluated pointwise.
#[derive(Debug, Clone, Default)]
pub struct CompositeMap {
    /// Outermost first.
    pub stages: Vec<ChangeOfVariable>,
}

/// `outer o inner`.
pub fn compose(outer: &ChangeOfVariable, inner: &ChangeOfVariable) -> Result<CompositeMap> {
    outer.require_certified()?;
    inner.require_certified()?;
    Ok(CompositeMap {
        stages: vec![outer.clone(), inner.clone()],
    })
}

impl CompositeMap {
    pub fn new() -> Self {
        CompositeMap::default()
    }

    /// Appends `rho` as the new innermost map.
    pub fn push_inner(&mut self, rho: ChangeOfVariable) -> Result<()> {
        rho.require_certified()?;
        self.stages.push(rho);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    fn grid(&self) -> Result<Grid> {
        self.stages
            .last()
            .map(|s| *s.grid())
            .ok_or_else(|| Error::Shape("empty composite map".into()))
    }

    /// Image and Jacobian at a node of the innermost grid; the innermost
    /// factor uses exact node values.
    pub fn apply_node(&self, node: usize) -> Result<MapPoint> {
        let inner = self.stages.last().ok_or_else(|| Error::Shape("empty composite map".into()))?;
        let (x, t) = inner.image(node);
        let mut p = MapPoint {
            x,
            t,
            jac: inner.jacobian(node),
            clamped: false,
        };
        for stage in self.stages.iter().rev().skip(1) {
            let q = stage.apply(&p.x, p.t);
            p = MapPoint {
                jac: &p.jac * q.jac,
                x: q.x,
                t: q.t,
                clamped: p.clamped | q.clamped,
            };
        }
        Ok(p)
    }

    /// Nodes whose composed image leaves `[t_min, T]` by more than `tol` relative.
    pub fn exits(&self, tol: f64) -> Result<Vec<usize>> {
        let grid = self.grid()?;
        let mut out = Vec::new();
        for node in 0..grid.node_count() {
            let p = self.apply_node(node)?;
            if p.clamped || p.t > grid.top() * (1.0 + tol) || p.t < grid.t_min() * (1.0 - tol) {
                out.push(node);
            }
        }
        Ok(out)
    }

    /// Collapses the list into a single map sampled on the innermost grid.
    pub fn resample(&self) -> Result<ChangeOfVariable> {
        let grid = self.grid()?;
        let d = grid.tangential_dims();
        let mut v = vec![0.0; grid.node_count() * d];
        let mut h = vec![0.0; grid.node_count()];
        for node in 0..grid.node_count() {
            let p = self.apply_node(node)?;
            let t = grid.t(grid.level_of(node));
            let y = grid.coords(grid.tangential_of(node));
            for k in 0..d {
                v[node * d + k] = (p.x[k] - y[k]) / t;
            }
            h[node] = p.t / t;
        }
        build_map(
            &Field::new(grid, Kind::Vector(d), "v", v)?,
            &Field::new(grid, Kind::Scalar, "h", h)?,
            None,
        )
    }
}

impl PointMap for CompositeMap {
    fn dim(&self) -> usize {
        self.stages.first().map(|s| s.grid().n()).unwrap_or(0)
    }

    fn apply(&self, x: &[f64], t: f64) -> MapPoint {
        let n = self.dim();
        let mut p = MapPoint {
            x: x.to_vec(),
            t,
            jac: DMatrix::identity(n, n),
            clamped: false,
        };
        for stage in self.stages.iter().rev() {
            let q = stage.apply(&p.x, p.t);
            p = MapPoint {
                jac: &p.jac * q.jac,
                x: q.x,
                t: q.t,
                clamped: p.clamped | q.clamped,
            };
        }
        p
    }
}

/// Conjugation by a composite map in one step.
pub fn conjugate_composite(a: &Field, phi: &CompositeMap) -> Result<Conjugation> {
    let grid = phi.grid()?;
    if *a.grid() != grid {
        return Err(Error::Shape("coefficients and map live on different grids".into()));
    }
    let points: Vec<MapPoint> = (0..grid.node_count())
        .into_par_iter()
        .map(|node| phi.apply_node(node))
        .collect::<Result<_>>()?;
    conjugate_with(a, |node| {
        let p = &points[node];
        (p.x.clone(), p.t, p.jac.clone(), p.clamped)
    })
}

/// `-div B grad = -b div(B~ grad) + b D . grad` with
/// `B~ = [[B1/b, (B2 + B3^T)/b], [0, 1]]`, `T = [[0, B3^T], [-B3, 0]]` and
/// `D = div(T/b) - B^T grad b / b^2`.
#[derive(Debug, Clone)]
pub struct DriftTransform {
    pub b_tilde: Field,
    pub antisymmetric: Field,
    pub drift: Field,
    pub b: Field,
}

pub fn kp_drift_transform(m: &Field) -> Result<DriftTransform> {
    let grid = *m.grid();
    let n = grid.n();
    let d = n - 1;
    let blocks = block_decompose(m)?;
    let b_min = blocks.b.values().iter().copied().fold(f64::INFINITY, f64::min);
    if b_min <= 0.0 {
        return Err(Error::DegenerateLowerRight(b_min));
    }
    let b_tilde = m.map_nodes(m.kind(), "B~", |_, v, out| {
        let b = v[n * n - 1];
        for r in 0..d {
            for c in 0..d {
                out[r * n + c] = v[r * n + c] / b;
            }
            out[r * n + d] = (v[r * n + d] + v[d * n + r]) / b;
        }
        out[d * n..d * n + d].iter_mut().for_each(|x| *x = 0.0);
        out[n * n - 1] = 1.0;
    })?;
    let antisymmetric = m.map_nodes(m.kind(), "T", |_, v, out| {
        out.iter_mut().for_each(|x| *x = 0.0);
        for r in 0..d {
            out[r * n + d] = v[d * n + r];
            out[d * n + r] = -v[d * n + r];
        }
    })?;
    let scaled = antisymmetric.map_nodes(m.kind(), "T/b", |node, v, out| {
        let b = blocks.b.scalar(node);
        for (o, x) in out.iter_mut().zip(v) {
            *o = x / b;
        }
    })?;
    let div_t = matrix_divergence(&scaled)?;
    let grad_b = t_gradient(&blocks.b)?.unscaled();
    let drift = div_t.map_nodes(Kind::Vector(n), "D", |node, dv, out| {
        let b = blocks.b.scalar(node);
        let mv = m.at(node);
        for j in 0..n {
            let btgb: f64 = (0..n).map(|i| mv[i * n + j] * grad_b.directions[i].scalar(node)).sum();
            out[j] = dv[j] - btgb / (b * b);
        }
    })?;
    Ok(DriftTransform {
        b_tilde,
        antisymmetric,
        drift,
        b: blocks.b,
    })
}

/// Column divergence `(div M)_j = sum_i d_i M_ij`.
pub fn matrix_divergence(m: &Field) -> Result<Field> {
    let n = m.grid().n();
    let g = t_gradient(m)?.unscaled();
    m.map_nodes(Kind::Vector(n), format!("div {}", m.name()), |node, _, out| {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (0..n).map(|i| g.directions[i].at(node)[i * n + j]).sum();
        }
    })
}

/// `div(M grad u)` with the same centered differences as everywhere else.
pub fn divergence_form(m: &Field, u: &Field) -> Result<Field> {
    let n = m.grid().n();
    let gu = t_gradient(u)?.unscaled();
    let flux = m.map_nodes(Kind::Vector(n), "flux", |node, mv, out| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..n).map(|j| mv[i * n + j] * gu.directions[j].scalar(node)).sum();
        }
    })?;
    let g = t_gradient(&flux)?.unscaled();
    flux.map_nodes(Kind::Scalar, "div flux", |node, _, out| {
        out[0] = (0..n).map(|i| g.directions[i].at(node)[i]).sum();
    })
}

/// `-div B grad u + b div(B~ grad u) - b D . grad u` at every node.
pub fn drift_identity_residual(m: &Field, transform: &DriftTransform, u: &Field) -> Result<Field> {
    let n = m.grid().n();
    let lhs = divergence_form(m, u)?;
    let rhs = divergence_form(&transform.b_tilde, u)?;
    let gu = t_gradient(u)?.unscaled();
    lhs.map_nodes(Kind::Scalar, "drift residual", |node, l, out| {
        let b = transform.b.scalar(node);
        let dd = transform.drift.at(node);
        let dgu: f64 = (0..n).map(|i| dd[i] * gu.directions[i].scalar(node)).sum();
        out[0] = -l[0] + b * rhs.scalar(node) - b * dgu;
    })
}
