//! Iterated changes of variable that bring the last row of the principal
//! part to `(0, ..., 0, 1)`.
//!
//! With `h = b^(1/N)` and `v_k = b^(-k/N) B3 / N`, the map built from
//! `(v_{k-1}, h)` takes a last row `(k/N B3, b^(k/N))` to
//! `((k-1)/N B3, b^((k-1)/N))`, so `N` stages reach `(0, 1)`.

use serde::{Deserialize, Serialize};

use crate::carleson::cmsup_constant;
use crate::changevar::{build_map, default_threshold, residual_split, ChangeOfVariable, CompositeMap, MapCertificate};
use crate::error::{Error, Result};
use crate::fields::{block_decompose, measure_ellipticity, sup_norm, t_gradient, Ellipticity, Field, Kind};
use crate::mollify::{make_bump, mollify};

pub const DEFAULT_N_MAX: usize = 1 << 16;
pub const STAGE_TOLERANCE: f64 = 1e-10;
const LINEAR_SEARCH: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Overrides the default certification threshold.
    pub eps0: Option<f64>,
    pub n_max: usize,
    /// Use `B = A`, `C = 0` instead of mollifying.
    pub skip_mollify: bool,
    /// Measure Carleson constants at every stage.
    pub diagnostics: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            eps0: None,
            n_max: DEFAULT_N_MAX,
            skip_mollify: false,
            diagnostics: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    /// The stage produces `A_k` from `A_{k+1}`.
    pub k: usize,
    pub certificate: MapCertificate,
    pub h_gradient_sup: f64,
    pub v_gradient_sup: f64,
    pub ellipticity: Ellipticity,
    pub ellipticity_factor: f64,
    pub last_row_error: f64,
    pub clamped_nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_gradient_cmsup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_cmsup: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointSummary {
    pub ellipticity: Ellipticity,
    pub b_gradient_cmsup: f64,
    pub c_cmsup: f64,
    /// Carleson constant of `|t grad B| + |C|`.
    pub m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub variant: String,
    #[serde(rename = "N")]
    pub n_stages: usize,
    pub eps0: f64,
    pub mollified: bool,
    pub initial: EndpointSummary,
    pub stages: Vec<StageRecord>,
    pub last: EndpointSummary,
    /// `M' / (M + 1)`.
    pub ratio: f64,
    pub last_row_exact: bool,
    /// Product of stage ellipticity factors.
    pub ellipticity_bound: f64,
    pub ellipticity_chain_holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_identity_cmsup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_b_cmsup: Option<f64>,
    #[serde(skip)]
    pub composite: CompositeMap,
    #[serde(skip)]
    pub b_final: Option<Field>,
    #[serde(skip)]
    pub c_final: Option<Field>,
}

fn powered(b: &Field, p: f64, name: &str) -> Result<Field> {
    b.map_nodes(Kind::Scalar, name, |_, v, out| out[0] = v[0].powf(p))
}

/// `v_k = b^(-k/N) B3 / N`.
fn shift_field(b: &Field, b3: &Field, n_stages: usize, k: usize) -> Result<Field> {
    let nn = n_stages as f64;
    b3.map_nodes(b3.kind(), format!("v_{k}"), |node, v, out| {
        let s = b.scalar(node).powf(-(k as f64) / nn) / nn;
        for (o, x) in out.iter_mut().zip(v) {
            *o = s * x;
        }
    })
}

struct Candidate {
    feasible: bool,
    eps0: f64,
}

fn check_candidate(b: &Field, b3: &Field, n_stages: usize, eps0: Option<f64>) -> Result<Candidate> {
    let h = powered(b, 1.0 / n_stages as f64, "h")?;
    let h_min = h.values().iter().copied().fold(f64::INFINITY, f64::min);
    let h_max = h.values().iter().copied().fold(0.0, f64::max);
    let h_grad = sup_norm(&t_gradient(&h)?.magnitude());
    let mut v_sup: f64 = 0.0;
    let mut v_grad: f64 = 0.0;
    for k in 0..=n_stages {
        let v = shift_field(b, b3, n_stages, k)?;
        v_sup = v_sup.max(sup_norm(&v));
        v_grad = v_grad.max(sup_norm(&t_gradient(&v)?.magnitude()));
    }
    let eps0 = eps0.unwrap_or_else(|| default_threshold(b.grid().n(), h_min, h_max, v_sup).0);
    let feasible = h_min > 0.5 && h_max < 2.0 && v_sup <= 1.0 && h_grad + v_grad < eps0;
    Ok(Candidate { feasible, eps0 })
}

fn lower_right(b_field: &Field) -> Result<(Field, Field)> {
    let blocks = block_decompose(b_field)?;
    let b_min = blocks.b.values().iter().copied().fold(f64::INFINITY, f64::min);
    if b_min <= 0.0 {
        return Err(Error::DegenerateLowerRight(b_min));
    }
    Ok((blocks.b, blocks.b3))
}

/// Smallest stage count meeting the stage bounds, with the threshold used.
///
/// Counts up to 64 are tried in order; beyond that the search doubles to a
/// feasible count and bisects back down.
pub fn choose_n(b_field: &Field, eps0: Option<f64>, n_max: usize) -> Result<(usize, f64)> {
    let (b, b3) = lower_right(b_field)?;
    for n in 1..=LINEAR_SEARCH.min(n_max) {
        let c = check_candidate(&b, &b3, n, eps0)?;
        if c.feasible {
            return Ok((n, c.eps0));
        }
    }
    let mut lo = LINEAR_SEARCH;
    let mut hi = 2 * LINEAR_SEARCH;
    let mut hit = None;
    while hi <= n_max {
        let c = check_candidate(&b, &b3, hi, eps0)?;
        if c.feasible {
            hit = Some((hi, c.eps0));
            break;
        }
        lo = hi;
        hi *= 2;
    }
    let (mut hi, mut eps) = hit.ok_or(Error::PipelineInfeasible { n_max })?;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let c = check_candidate(&b, &b3, mid, eps0)?;
        if c.feasible {
            hi = mid;
            eps = c.eps0;
        } else {
            lo = mid;
        }
    }
    Ok((hi, eps))
}

fn summarize(b: &Field, c: &Field) -> Result<EndpointSummary> {
    let grad = t_gradient(b)?.magnitude();
    let cm = c.magnitude();
    let both = Field::magnitude_sum(&[&grad, &cm])?;
    Ok(EndpointSummary {
        ellipticity: measure_ellipticity(&b.add(c)?)?,
        b_gradient_cmsup: cmsup_constant(&grad)?.constant,
        c_cmsup: cmsup_constant(&cm)?.constant,
        m: cmsup_constant(&both)?.constant,
    })
}

fn stage_error(stage: usize, e: Error) -> Error {
    match e {
        Error::Stage { .. } => e,
        other => Error::Stage {
            stage,
            reason: other.to_string(),
        },
    }
}

/// Largest deviation of the last row of `m` from `(target_row, target_corner)`.
fn last_row_error<F>(m: &Field, target: F) -> f64
where
    F: Fn(usize, &mut [f64]),
{
    let n = m.grid().n();
    let mut buf = vec![0.0; n];
    (0..m.grid().node_count())
        .map(|node| {
            target(node, &mut buf);
            let row = &m.at(node)[(n - 1) * n..];
            row.iter().zip(&buf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Moves the last row of `b` to exactly `(0, ..., 0, 1)` and the difference into `c`.
fn snap_last_row(b: &Field, c: &Field) -> Result<(Field, Field)> {
    let n = b.grid().n();
    let snapped = b.map_nodes(b.kind(), "B_0", |_, v, out| {
        out.copy_from_slice(v);
        out[(n - 1) * n..].iter_mut().for_each(|x| *x = 0.0);
        out[n * n - 1] = 1.0;
    })?;
    let moved = c.add(&b.sub(&snapped)?)?.with_name("C_0");
    Ok((snapped, moved))
}

struct Stage {
    rho: ChangeOfVariable,
    expected: Box<dyn Fn(usize, &mut [f64]) + Sync>,
}

fn iterate<F>(
    variant: &str,
    b: Field,
    c: Field,
    n_stages: usize,
    eps0: f64,
    mollified: bool,
    diagnostics: bool,
    make_stage: F,
) -> Result<PipelineReport>
where
    F: Fn(usize) -> Result<Stage>,
{
    let initial = summarize(&b, &c)?;
    let lambda0 = initial.ellipticity.lambda;
    let mut composite = CompositeMap::new();
    let mut stages = Vec::with_capacity(n_stages);
    let (mut bk, mut ck) = (b, c);
    let mut bound = 1.0;
    let mut chain_holds = true;
    for k in (1..=n_stages).rev() {
        let stage = make_stage(k).map_err(|e| stage_error(k - 1, e))?;
        let rho = stage.rho;
        if !rho.is_certified() {
            return Err(Error::Stage {
                stage: k - 1,
                reason: rho.certificate().diagnostic.clone().unwrap_or_default(),
            });
        }
        let split = residual_split(&bk, &ck, &rho).map_err(|e| stage_error(k - 1, e))?;
        let err = last_row_error(&split.b_rho, &stage.expected);
        if !(err <= STAGE_TOLERANCE) {
            return Err(Error::Stage {
                stage: k - 1,
                reason: format!("last row off the predicted form by {err:.3e}"),
            });
        }
        let ell = split.a_rho.field.ellipticity().expect("conjugate certifies ellipticity");
        bound *= split.a_rho.ellipticity_factor;
        chain_holds &= split.a_rho.ellipticity_chain_holds;
        let (b_gradient_cmsup, c_cmsup) = if diagnostics {
            (
                Some(cmsup_constant(&t_gradient(&split.b_rho)?.magnitude())?.constant),
                Some(cmsup_constant(&split.c_rho)?.constant),
            )
        } else {
            (None, None)
        };
        stages.push(StageRecord {
            k: k - 1,
            certificate: rho.certificate().clone(),
            h_gradient_sup: sup_norm(&rho.grad_h().magnitude()),
            v_gradient_sup: sup_norm(&rho.grad_v().magnitude()),
            ellipticity: ell,
            ellipticity_factor: split.a_rho.ellipticity_factor,
            last_row_error: err,
            clamped_nodes: split.a_rho.clamped_nodes.len(),
            b_gradient_cmsup,
            c_cmsup,
        });
        composite.push_inner(rho)?;
        bk = split.b_rho;
        ck = split.c_rho;
    }
    let (b_final, c_final) = snap_last_row(&bk, &ck)?;
    let last = summarize(&b_final, &c_final)?;
    let n = b_final.grid().n();
    let last_row_exact = (0..b_final.grid().node_count()).all(|node| {
        let row = &b_final.at(node)[(n - 1) * n..];
        row[..n - 1].iter().all(|&x| x == 0.0) && row[n - 1] == 1.0
    });
    chain_holds &= last.ellipticity.lambda >= bound * lambda0 * (1.0 - 1e-12);
    Ok(PipelineReport {
        variant: variant.to_string(),
        n_stages,
        eps0,
        mollified,
        ratio: last.m / (initial.m + 1.0),
        initial,
        stages,
        last,
        last_row_exact,
        ellipticity_bound: bound,
        ellipticity_chain_holds: chain_holds,
        final_identity_cmsup: None,
        gradient_b_cmsup: None,
        composite,
        b_final: Some(b_final),
        c_final: Some(c_final),
    })
}

/// Runs the full iteration on `A`, split as `B + C` by the caller or by
/// mollification.
pub fn run_pipeline(a: &Field, split: Option<(Field, Field)>, options: &PipelineOptions) -> Result<PipelineReport> {
    let grid = *a.grid();
    let n = grid.n();
    if a.kind() != Kind::Matrix(n) {
        return Err(Error::Shape(format!("expected an {n}x{n} matrix field")));
    }
    measure_ellipticity(a)?;
    let (b, c, mollified) = match split {
        Some((b, c)) => {
            let sum = b.add(&c)?;
            let gap = sup_norm(&sum.sub(a)?);
            if gap > 1e-12 * sup_norm(a).max(1.0) {
                return Err(Error::InvalidInput {
                    key: "split".into(),
                    reason: format!("B + C differs from A by {gap:.3e}"),
                });
            }
            (b, c, false)
        }
        None if options.skip_mollify => (a.clone(), a.scale(0.0)?, false),
        None => {
            let b = mollify(a, &make_bump(n)?)?.with_name("B");
            let c = a.sub(&b)?.with_name("C");
            (b, c, true)
        }
    };
    let (n_stages, eps0) = choose_n(&b, options.eps0, options.n_max)?;
    let (bb, b3) = lower_right(&b)?;
    let h = powered(&bb, 1.0 / n_stages as f64, "h")?;
    let nn = n_stages as f64;
    iterate("main", b, c, n_stages, eps0, mollified, options.diagnostics, |k| {
        let v = shift_field(&bb, &b3, n_stages, k - 1)?;
        let rho = build_map(&v, &h, Some(eps0))?;
        let (bb, b3) = (bb.clone(), b3.clone());
        Ok(Stage {
            rho,
            expected: Box::new(move |node, out: &mut [f64]| {
                let d = out.len() - 1;
                let s = (k - 1) as f64 / nn;
                for (o, x) in out[..d].iter_mut().zip(b3.at(node)) {
                    *o = s * x;
                }
                out[d] = bb.scalar(node).powf(s);
            }),
        })
    })
}

/// `diag(b^-1 I, b)`.
pub fn rpcor_matrix(b: &Field) -> Result<Field> {
    let n = b.grid().n();
    b.map_nodes(Kind::Matrix(n), "diag(1/b, b)", |_, v, out| {
        out.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n - 1 {
            out[i * n + i] = 1.0 / v[0];
        }
        out[n * n - 1] = v[0];
    })
}

/// Stage count for the diagonal variant and its threshold `min(h) / 2`.
pub fn choose_n_rpcor(b: &Field, n_max: usize) -> Result<(usize, f64)> {
    for n_stages in 1..=n_max {
        let h = powered(b, 1.0 / n_stages as f64, "h")?;
        let h_min = h.values().iter().copied().fold(f64::INFINITY, f64::min);
        let grad = sup_norm(&t_gradient(&h)?.magnitude());
        if grad < h_min / 2.0 {
            return Ok((n_stages, h_min / 2.0));
        }
    }
    Err(Error::PipelineInfeasible { n_max })
}

/// Diagonal variant: `A = diag(b^-1 I, b)` and `v = 0` at every stage.
pub fn run_rpcor(b: &Field, options: &PipelineOptions) -> Result<PipelineReport> {
    if b.kind() != Kind::Scalar {
        return Err(Error::Shape("run_rpcor expects a scalar field".into()));
    }
    let b_min = b.values().iter().copied().fold(f64::INFINITY, f64::min);
    if b_min <= 0.0 {
        return Err(Error::DegenerateLowerRight(b_min));
    }
    let grid = *b.grid();
    let a = rpcor_matrix(b)?;
    let (n_stages, eps0) = choose_n_rpcor(b, options.n_max)?;
    let nn = n_stages as f64;
    let h = powered(b, 1.0 / nn, "h")?;
    let d = grid.tangential_dims();
    let v = Field::constant(grid, Kind::Vector(d), "v", &vec![0.0; d])?;
    let rho = build_map(&v, &h, Some(eps0))?;
    let zero = a.scale(0.0)?;
    let mut report = iterate("rpcor", a.clone(), zero, n_stages, eps0, false, options.diagnostics, |k| {
        let b = b.clone();
        Ok(Stage {
            rho: rho.clone(),
            expected: Box::new(move |node, out: &mut [f64]| {
                let last = out.len() - 1;
                out[..last].iter_mut().for_each(|x| *x = 0.0);
                out[last] = b.scalar(node).powf((k - 1) as f64 / nn);
            }),
        })
    })?;
    let b_final = report.b_final.as_ref().expect("pipeline keeps final B");
    let c_final = report.c_final.as_ref().expect("pipeline keeps final C");
    let n = grid.n();
    // the principal part of every stage is diagonal; check the top block too
    let top_error = (0..grid.node_count())
        .map(|node| {
            let m = b_final.at(node);
            (0..n - 1)
                .flat_map(|i| (0..n - 1).map(move |j| (i, j)))
                .map(|(i, j)| (m[i * n + j] - if i == j { 1.0 } else { 0.0 }).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    if top_error > STAGE_TOLERANCE {
        return Err(Error::Stage {
            stage: 0,
            reason: format!("top block of the final matrix is off the identity by {top_error:.3e}"),
        });
    }
    let a_final = b_final.add(c_final)?;
    let identity = Field::identity(grid);
    report.final_identity_cmsup = Some(cmsup_constant(&a_final.sub(&identity)?)?.constant);
    report.gradient_b_cmsup = Some(cmsup_constant(&t_gradient(b)?.magnitude())?.constant);
    Ok(report)
}
