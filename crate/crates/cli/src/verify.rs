use std::f64::consts::PI;
use std::fs;

use dkp_core::fixtures::{harmonic_maps, harmonic_pairs, lookup, Fixture};
use dkp_core::io::write_json;
use dkp_core::pdelab::{
    aperture_bound, certificate_factor, ntmax_avg, observed_orders, NOISE_FLOOR, order_check, regularity_ratio, solve_dirichlet,
    verify_conjugation, AnalyticMap, BoundaryFunction, Solution, SolverGrid,
};
use dkp_core::pipeline::choose_n_rpcor;
use dkp_core::{Error, Result};
use nalgebra::Matrix2;
use serde::Serialize;

use crate::config::RunConfig;

const CONJUGATION_ORDER: f64 = 1.5;
const STABILITY: f64 = 0.2;

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub fixture: String,
    pub case: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub pass: bool,
}

type Family = Vec<(String, Box<dyn Fn(f64, f64) -> f64 + Sync>)>;

/// Linear data followed by bottom sines of increasing frequency.
fn boundary_family() -> Family {
    let mut family: Family = vec![("y".into(), Box::new(|y: f64, _: f64| y))];
    for k in 1..=3 {
        let f = move |y: f64, t: f64| if t == 0.0 { (2.0 * PI * k as f64 * y).sin() } else { 0.0 };
        family.push((format!("sin(2 pi {k} y)"), Box::new(f)));
    }
    family
}

fn identity(_: f64, _: f64) -> Matrix2<f64> {
    Matrix2::identity()
}

fn conjugation_rows(cfg: &RunConfig, rows: &mut Vec<CheckRow>) -> Result<()> {
    let deltas = [cfg.delta, cfg.delta / 2.0, cfg.delta / 4.0];
    for pair in harmonic_pairs() {
        for (map_name, v, h) in harmonic_maps() {
            let rho = AnalyticMap::new(move |_, _| v, move |_, _| h);
            let mut errors = Vec::new();
            for &d in &deltas {
                let grid = SolverGrid::new(d, cfg.solver_height)?;
                let check = verify_conjugation(&identity, &rho, Solution::Closed(&pair.u), &grid)?;
                errors.push(check.max_residual);
            }
            let order = observed_orders(&deltas, &errors).into_iter().fold(f64::INFINITY, f64::min);
            let exact = errors.iter().all(|&e| e <= NOISE_FLOOR);
            rows.push(CheckRow {
                check: "conjugation".into(),
                fixture: "identity".into(),
                case: if exact {
                    format!("{} under {map_name}, exact to rounding", pair.name)
                } else {
                    format!("{} under {map_name}, observed order {order:.3}", pair.name)
                },
                value: errors.iter().copied().fold(0.0, f64::max),
                bound: Some(CONJUGATION_ORDER),
                pass: order_check(&deltas, &errors, CONJUGATION_ORDER),
            });
        }
    }
    Ok(())
}

fn worst_aperture_ratio(coef: &(dyn Fn(f64, f64) -> Matrix2<f64> + Sync), aperture: f64, q: f64, grid: &SolverGrid) -> Result<(f64, f64)> {
    let x: Vec<f64> = (0..=grid.nx()).map(|i| grid.y(i)).collect();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (_, g) in boundary_family() {
        let data = BoundaryFunction::from_fn(*grid, g)?;
        let u = solve_dirichlet(coef, &data, grid)?.u;
        let r = ntmax_avg(&u, aperture, &x).q_norm(q) / ntmax_avg(&u, 1.0, &x).q_norm(q);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

fn aperture_rows(cfg: &RunConfig, name: &str, fixture: &Fixture, rows: &mut Vec<CheckRow>) -> Result<()> {
    let coef = fixture.coefficient(cfg.top);
    let coarse = SolverGrid::new(cfg.delta, cfg.solver_height)?;
    let fine = coarse.refine();
    for &k in &cfg.apertures {
        let bound = aperture_bound(k, cfg.q);
        let (lo, hi) = worst_aperture_ratio(&coef, k, cfg.q, &coarse)?;
        let (_, hi_fine) = worst_aperture_ratio(&coef, k, cfg.q, &fine)?;
        rows.push(CheckRow {
            check: "aperture".into(),
            fixture: name.into(),
            case: format!("K = {k}"),
            value: hi,
            bound: Some(bound),
            pass: lo >= 1.0 - 1e-12 && hi <= bound,
        });
        let change = (hi_fine - hi).abs() / hi.max(hi_fine);
        rows.push(CheckRow {
            check: "aperture stability".into(),
            fixture: name.into(),
            case: format!("K = {k}"),
            value: change,
            bound: Some(STABILITY),
            pass: change <= STABILITY,
        });
    }
    Ok(())
}

fn regularity_rows(cfg: &RunConfig, name: &str, fixture: &Fixture, rows: &mut Vec<CheckRow>) -> Result<()> {
    let coef = fixture.coefficient(cfg.top);
    let grid = SolverGrid::new(cfg.delta, cfg.solver_height)?;
    let family = boundary_family();
    let members: Vec<(&str, &(dyn Fn(f64, f64) -> f64 + Sync))> =
        family.iter().map(|(n, f)| (n.as_str(), f.as_ref())).collect();
    let before = regularity_ratio(&coef, &members, cfg.q, 1.0, &grid)?;
    for (member, r) in &before.members {
        rows.push(CheckRow {
            check: "regularity".into(),
            fixture: name.into(),
            case: member.clone(),
            value: *r,
            bound: None,
            pass: true,
        });
    }
    rows.push(CheckRow {
        check: "maximum principle".into(),
        fixture: name.into(),
        case: "regularity family".into(),
        value: before.max_principle as u8 as f64,
        bound: Some(1.0),
        pass: before.max_principle,
    });
    let Some(b) = fixture.scalar_fn(cfg.top) else {
        return Ok(());
    };
    let sampled = fixture.sample(cfg.grid()?)?.scalar.ok_or_else(|| Error::InvalidInput {
        key: "inputs".into(),
        reason: format!("{name} has no scalar entry"),
    })?;
    let (mut stages, _) = choose_n_rpcor(&sampled, cfg.n_max)?;
    let (rho, bounds) = loop {
        let n = stages as f64;
        let b = &b;
        let rho = AnalyticMap::new(|_, _| 0.0, move |y: f64, t: f64| b(y, t).powf(1.0 / n));
        let bounds = rho.bounds(&grid);
        if bounds.certified {
            break (rho, bounds);
        }
        if stages >= cfg.n_max {
            return Err(Error::PipelineInfeasible { n_max: cfg.n_max });
        }
        stages += 1;
    };
    let conj = rho.conjugated(&coef);
    let after = regularity_ratio(&conj, &members, cfg.q, 1.0, &grid)?;
    let factor = certificate_factor(&bounds, cfg.q);
    let spread = (after.ratio / before.ratio).max(before.ratio / after.ratio);
    rows.push(CheckRow {
        check: "regularity under change of variable".into(),
        fixture: name.into(),
        case: format!("N = {stages}, before {:.6}, after {:.6}", before.ratio, after.ratio),
        value: spread,
        bound: Some(factor),
        pass: spread <= factor && after.max_principle,
    });
    Ok(())
}

/// Runs every check; `Ok(false)` when some threshold is missed.
pub fn verify(cfg: &RunConfig) -> Result<bool> {
    if cfg.n != 2 {
        return Err(Error::InvalidInput {
            key: "n".into(),
            reason: "verify runs on the plane strip, n = 2".into(),
        });
    }
    let fixtures = cfg
        .inputs
        .iter()
        .map(|name| lookup(name).map(|f| (name.as_str(), f)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    conjugation_rows(cfg, &mut rows)?;
    for (name, fixture) in &fixtures {
        aperture_rows(cfg, name, fixture, &mut rows)?;
        regularity_rows(cfg, name, fixture, &mut rows)?;
    }
    fs::create_dir_all(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("verify.json"), &rows)?;
    let mut w = csv::Writer::from_path(cfg.out_dir.join("verify.csv")).map_err(|e| Error::Io(e.into()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    let failed: Vec<&CheckRow> = rows.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        println!("FAIL {} [{}] {}: {} (bound {:?})", r.check, r.fixture, r.case, r.value, r.bound);
    }
    println!("{} checks, {} failed", rows.len(), failed.len());
    Ok(failed.is_empty())
}
