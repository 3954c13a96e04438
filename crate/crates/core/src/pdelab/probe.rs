use serde::{Deserialize, Serialize};

use super::grid::{BoundaryFunction, SolverGrid};
use super::ntmax::ntmax_avg;
use super::solver::{solve_dirichlet, Coefficient};
use crate::error::Result;

/// Residuals below this are rounding noise and count as exact.
pub const NOISE_FLOOR: f64 = 1e-9;

/// `log(e_k / e_{k+1}) / log(d_k / d_{k+1})` for consecutive refinements.
pub fn observed_orders(deltas: &[f64], errors: &[f64]) -> Vec<f64> {
    deltas
        .windows(2)
        .zip(errors.windows(2))
        .map(|(d, e)| (e[0] / e[1]).ln() / (d[0] / d[1]).ln())
        .collect()
}

/// Every observed order reaches `min_order`, or every error is below the noise floor.
pub fn order_check(deltas: &[f64], errors: &[f64], min_order: f64) -> bool {
    if errors.iter().all(|&e| e <= NOISE_FLOOR) {
        return true;
    }
    observed_orders(deltas, errors).iter().all(|&p| p >= min_order)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRow {
    pub fixture: String,
    pub q: f64,
    #[serde(rename = "K")]
    pub aperture: f64,
    pub ratio: f64,
    pub refinement: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityProbe {
    pub ratio: f64,
    pub members: Vec<(String, f64)>,
    /// Members with vanishing boundary gradient.
    pub skipped: Vec<String>,
    pub max_principle: bool,
}

pub type BoundaryData<'a> = (&'a str, &'a (dyn Fn(f64, f64) -> f64 + Sync));

/// Max over the family of `|N~(grad u_g)|_q / |grad g|_q`, with `g` prescribed
/// on all four edges and the maximal function sampled at the bottom nodes.
pub fn regularity_ratio(
    a: Coefficient<'_>,
    family: &[BoundaryData<'_>],
    q: f64,
    aperture: f64,
    grid: &SolverGrid,
) -> Result<RegularityProbe> {
    let x: Vec<f64> = (0..=grid.nx()).map(|i| grid.y(i)).collect();
    let mut members = Vec::new();
    let mut skipped = Vec::new();
    let mut max_principle = true;
    for (name, g) in family {
        let data = BoundaryFunction::from_fn(*grid, g)?;
        let denom = data.bottom_gradient().q_norm(q);
        if !(denom > 1e-12) {
            skipped.push(name.to_string());
            continue;
        }
        let solve = solve_dirichlet(a, &data, grid)?;
        max_principle &= solve.max_principle;
        let num = ntmax_avg(&solve.u, aperture, &x).q_norm(q);
        members.push((name.to_string(), num / denom));
    }
    let ratio = members.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    Ok(RegularityProbe {
        ratio,
        members,
        skipped,
        max_principle,
    })
}
