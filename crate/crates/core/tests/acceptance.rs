//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use dkp_core::carleson::{carleson_constant, BoxFamily};
use dkp_core::changevar::{drift_identity_residual, kp_drift_transform, point_jacobian, transform_matrix};
use dkp_core::fields::{sup_norm, t_gradient, Field, Grid};
use dkp_core::fixtures::{harmonic_maps, harmonic_pairs, lookup};
use dkp_core::highcodim::{highcodim_conjugate, Dilation, HighCodimMap, SamplePoint};
use dkp_core::mollify::{make_bump, mollify, mollify_certificate};
use dkp_core::pdelab::{
    aperture_bound, certificate_factor, observed_orders, order_check, regularity_ratio, solve_dirichlet,
    verify_conjugation, AnalyticMap, BoundaryFunction, GridFunction, Solution, SolverGrid,
};
use dkp_core::pipeline::{run_pipeline, PipelineOptions};
use nalgebra::{DMatrix, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const PIPELINE_FIXTURES: [&str; 3] = ["identity", "diag-b", "dkp-generic"];

fn acceptance_grid() -> Grid {
    Grid::new(2, 128, 0.5, 4, 24).unwrap()
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a.abs() < 1e-12 && b.abs() < 1e-12 {
        0.0
    } else {
        (b - a).abs() / a.abs().max(b.abs())
    }
}

fn pipeline_structure() -> Outcome {
    let mut notes = Vec::new();
    for name in PIPELINE_FIXTURES {
        let fields = lookup(name).unwrap().sample(acceptance_grid()).unwrap();
        let start = Instant::now();
        let report = run_pipeline(&fields.a, None, &PipelineOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        let secs = start.elapsed().as_secs_f64();
        let certified = report.stages.iter().all(|s| s.certificate.certified && s.certificate.eps < s.certificate.eps0);
        if !certified || !report.last_row_exact || secs > 60.0 {
            return Err(format!(
                "{name}: certified {certified}, last row exact {}, {secs:.1}s",
                report.last_row_exact
            ));
        }
        notes.push(format!("{name} N={} {secs:.1}s", report.n_stages));
    }
    Ok(notes.join(", "))
}

fn carleson_control() -> Outcome {
    let mut notes = Vec::new();
    for name in PIPELINE_FIXTURES {
        let mut ratios = Vec::new();
        for grid in [acceptance_grid(), acceptance_grid().refine()] {
            let fields = lookup(name).unwrap().sample(grid).unwrap();
            let report = run_pipeline(&fields.a, None, &PipelineOptions::default()).map_err(|e| e.to_string())?;
            let finite = report
                .stages
                .iter()
                .all(|s| s.c_cmsup.is_some_and(f64::is_finite) && s.b_gradient_cmsup.is_some_and(f64::is_finite));
            if !finite {
                return Err(format!("{name}: non-finite stage constant"));
            }
            ratios.push(report.ratio);
        }
        let change = relative_change(ratios[0], ratios[1]);
        if change > 0.2 {
            return Err(format!("{name}: M'/(M+1) {:.4} -> {:.4}", ratios[0], ratios[1]));
        }
        notes.push(format!("{name} {:.3}->{:.3}", ratios[0], ratios[1]));
    }
    Ok(notes.join(", "))
}

fn mollifier_certificate() -> Outcome {
    let mut notes = Vec::new();
    for name in ["diag-b", "dkp-generic", "rough-dkp"] {
        let mut ratios = Vec::new();
        for grid in [acceptance_grid(), acceptance_grid().refine()] {
            let a = lookup(name).unwrap().sample(grid).unwrap().a;
            let smoothed = mollify(&a, &make_bump(2).unwrap()).map_err(|e| e.to_string())?;
            let cert = mollify_certificate(&a, &smoothed).map_err(|e| e.to_string())?;
            if !cert.ellipticity_preserved {
                return Err(format!("{name}: {:?}", cert.flags));
            }
            if !cert.residual_cmsup.is_finite() {
                return Err(format!("{name}: cmsup(A - B~) not finite"));
            }
            ratios.push(cert.gradient_ratio);
        }
        let change = relative_change(ratios[0], ratios[1]);
        if change > 0.1 {
            return Err(format!("{name}: |t grad B~| / C_A {:.4} -> {:.4}", ratios[0], ratios[1]));
        }
        notes.push(format!("{name} C={:.3}->{:.3}", ratios[0], ratios[1]));
    }
    Ok(notes.join(", "))
}

fn identity(_: f64, _: f64) -> Matrix2<f64> {
    Matrix2::identity()
}

fn conjugation_exactness() -> Outcome {
    let deltas = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let mut worst: f64 = 0.0;
    for pair in harmonic_pairs() {
        for (map_name, v, h) in harmonic_maps() {
            let rho = AnalyticMap::new(move |_, _| v, move |_, _| h);
            let mut errors = Vec::new();
            for &d in &deltas {
                let grid = SolverGrid::new(d, 0.5).unwrap();
                let u = pair.u;
                let check = verify_conjugation(&identity, &rho, Solution::Closed(&u), &grid).map_err(|e| e.to_string())?;
                errors.push(check.max_residual);
            }
            let c = errors.iter().zip(&deltas).map(|(e, d)| e / (d * d)).fold(0.0, f64::max);
            worst = worst.max(c);
            if !order_check(&deltas, &errors, 1.5) || c > 1.0 {
                return Err(format!("{} under {map_name}: residuals {errors:?}", pair.name));
            }
        }
    }
    // a non-constant map and harmonic u exercise the order itself
    let rho = AnalyticMap::new(
        |y: f64, t: f64| 0.2 * t * (2.0 * PI * y).sin(),
        |y: f64, t: f64| 1.0 + 0.2 * t * (2.0 * PI * y).cos(),
    );
    let u = |y: f64, t: f64| (PI * y).sin() * (PI * t).exp();
    let mut errors = Vec::new();
    for &d in &deltas {
        let grid = SolverGrid::new(d, 0.5).unwrap();
        errors.push(verify_conjugation(&identity, &rho, Solution::Closed(&u), &grid).map_err(|e| e.to_string())?.max_residual);
    }
    let orders = observed_orders(&deltas, &errors);
    if !order_check(&deltas, &errors, 1.5) {
        return Err(format!("smooth map: orders {orders:?}"));
    }
    Ok(format!(
        "harmonic pairs max residual/delta^2 = {worst:.2e}, smooth map orders {:.2}, {:.2}",
        orders[0], orders[1]
    ))
}

fn sandwich_fields() -> Vec<Field> {
    let g = Grid::new(2, 16, 0.5, 2, 7).unwrap();
    let top = g.top();
    let dkp = lookup("dkp-generic").unwrap().sample(g).unwrap();
    let rough = lookup("rough-dkp").unwrap().sample(g).unwrap();
    let diag = lookup("diag-b").unwrap().sample(g).unwrap();
    vec![
        Field::scalar_fn(g, "t/T", |_, t| t / top).unwrap(),
        Field::scalar_fn(g, "t cos", |x, t| t * (2.0 * PI * x[0]).cos()).unwrap(),
        Field::scalar_fn(g, "one", |_, _| 1.0).unwrap(),
        Field::scalar_fn(g, "t^2 sin", |x, t| t * t * (2.0 * PI * x[0]).sin().abs() * 8.0).unwrap(),
        Field::scalar_fn(g, "spike", |x, t| if (x[0] - 0.25).abs() < 1e-9 && t > 0.2 { 1.0 } else { 0.0 }).unwrap(),
        t_gradient(&dkp.b).unwrap().magnitude(),
        dkp.c.magnitude(),
        rough.c.magnitude(),
        t_gradient(&diag.b).unwrap().magnitude(),
        Field::scalar_fn(g, "low band", |_, t| if t < 0.1 { 1.0 } else { 0.0 }).unwrap(),
    ]
}

fn estimator_sandwich() -> Outcome {
    let upper = 2f64.powi(3);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for f in sandwich_fields() {
        let dense = carleson_constant(&f, BoxFamily::Dense).map_err(|e| e.to_string())?.constant;
        let dyadic = carleson_constant(&f, BoxFamily::Dyadic).map_err(|e| e.to_string())?.constant;
        if dense == 0.0 {
            return Err(format!("{}: dense constant vanished", f.name()));
        }
        let r = dyadic / dense;
        lo = lo.min(r);
        hi = hi.max(r);
        if !(r >= 1.0 - 1e-12 && r <= upper) {
            return Err(format!("{}: dyadic/dense = {r:.4}", f.name()));
        }
    }
    Ok(format!("dyadic/dense in [{lo:.3}, {hi:.3}] over 10 fields"))
}

fn drift_baseline() -> Outcome {
    let mut notes = Vec::new();
    for name in ["dkp-generic", "diag-b"] {
        let mut errors = Vec::new();
        let mut deltas = Vec::new();
        let mut grid = Grid::new(2, 32, 0.5, 2, 10).unwrap();
        for _ in 0..3 {
            let b = lookup(name).unwrap().sample(grid).unwrap().b;
            let u = Field::scalar_fn(grid, "u", |x, t| (2.0 * PI * x[0]).sin() * t + t * t).unwrap();
            let dt = kp_drift_transform(&b).map_err(|e| e.to_string())?;
            let r = drift_identity_residual(&b, &dt, &u).map_err(|e| e.to_string())?;
            errors.push(sup_norm(&r));
            deltas.push(grid.log_step());
            grid = grid.refine();
        }
        let orders = observed_orders(&deltas, &errors);
        if !order_check(&deltas, &errors, 1.0) {
            return Err(format!("{name}: residuals {errors:?}, orders {orders:?}"));
        }
        notes.push(format!("{name} orders {:.2}, {:.2}", orders[0], orders[1]));
    }
    Ok(notes.join(", "))
}

fn solver_sanity() -> Outcome {
    let deltas = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let exact = |y: f64, t: f64| (PI * y).sin() * (PI * (1.0 - t)).sinh() / PI.sinh();
    let mut errors = Vec::new();
    let mut max_principle = true;
    for &d in &deltas {
        let grid = SolverGrid::new(d, 1.0).unwrap();
        let data = BoundaryFunction::from_fn(grid, |y, t| if t == 0.0 { (PI * y).sin() } else { 0.0 }).unwrap();
        let solve = solve_dirichlet(&identity, &data, &grid).map_err(|e| e.to_string())?;
        max_principle &= solve.max_principle;
        let reference = GridFunction::from_fn(grid, exact);
        let err = solve
            .u
            .values
            .iter()
            .zip(&reference.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    // every other solve in the suite also reports its maximum principle
    for fixture in ["identity", "diag-b", "dkp-generic"] {
        let coef = lookup(fixture).unwrap().coefficient(0.5);
        let grid = SolverGrid::new(1.0 / 32.0, 0.5).unwrap();
        for k in 1..=3 {
            let g = move |y: f64, t: f64| if t == 0.0 { (2.0 * PI * k as f64 * y).sin() } else { 0.0 };
            let data = BoundaryFunction::from_fn(grid, g).unwrap();
            max_principle &= solve_dirichlet(&coef, &data, &grid).map_err(|e| e.to_string())?.max_principle;
        }
    }
    let orders = observed_orders(&deltas, &errors);
    let c = errors.iter().zip(&deltas).map(|(e, d)| e / (d * d)).fold(0.0, f64::max);
    if !orders.iter().all(|&p| p >= 1.8) || !max_principle {
        return Err(format!("orders {orders:?}, max principle {max_principle}"));
    }
    Ok(format!(
        "max error/delta^2 <= {c:.3}, orders {}",
        orders.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(", ")
    ))
}

fn sine_family() -> Vec<(String, Box<dyn Fn(f64, f64) -> f64 + Sync>)> {
    (1..=4)
        .map(|k| {
            let f: Box<dyn Fn(f64, f64) -> f64 + Sync> =
                Box::new(move |y: f64, t: f64| if t == 0.0 { (2.0 * PI * k as f64 * y).sin() } else { 0.0 });
            (format!("sin(2 pi {k} y)"), f)
        })
        .collect()
}

fn aperture_and_stability() -> Outcome {
    use dkp_core::pdelab::ntmax_avg;
    let q = 2.0;
    let mut notes = Vec::new();
    for fixture in ["identity", "diag-b", "dkp-generic"] {
        let coef = lookup(fixture).unwrap().coefficient(0.5);
        for aperture in [2.0, 4.0] {
            let mut ratios = Vec::new();
            for d in [1.0 / 32.0, 1.0 / 64.0] {
                let grid = SolverGrid::new(d, 0.5).unwrap();
                let x: Vec<f64> = (0..=grid.nx()).map(|i| grid.y(i)).collect();
                let mut worst: f64 = 0.0;
                for (_, g) in sine_family() {
                    let data = BoundaryFunction::from_fn(grid, g).unwrap();
                    let u = solve_dirichlet(&coef, &data, &grid).map_err(|e| e.to_string())?.u;
                    let r = ntmax_avg(&u, aperture, &x).q_norm(q) / ntmax_avg(&u, 1.0, &x).q_norm(q);
                    if !(r >= 1.0 && r <= aperture_bound(aperture, q)) {
                        return Err(format!("{fixture} K={aperture}: ratio {r:.4} outside [1, {:.4}]", aperture_bound(aperture, q)));
                    }
                    worst = worst.max(r);
                }
                ratios.push(worst);
            }
            if relative_change(ratios[0], ratios[1]) > 0.2 {
                return Err(format!("{fixture} K={aperture}: {:.4} -> {:.4}", ratios[0], ratios[1]));
            }
        }
    }
    notes.push("aperture ratios within C(K) and stable".to_string());

    let fixture = lookup("diag-b").unwrap();
    let coef = fixture.coefficient(0.5);
    let b = fixture.scalar_fn(0.5).unwrap();
    let grid = SolverGrid::new(1.0 / 64.0, 0.5).unwrap();
    let mut stages = 1;
    let (rho, bounds) = loop {
        let n = stages as f64;
        let bq = &b;
        let rho = AnalyticMap::new(|_, _| 0.0, move |y: f64, t: f64| bq(y, t).powf(1.0 / n));
        let bounds = rho.bounds(&grid);
        if bounds.certified {
            break (rho, bounds);
        }
        stages += 1;
        if stages > 256 {
            return Err("no certified map for diag-b".into());
        }
    };
    let family = sine_family();
    let members: Vec<(&str, &(dyn Fn(f64, f64) -> f64 + Sync))> =
        family.iter().map(|(n, f)| (n.as_str(), f.as_ref())).collect();
    let before = regularity_ratio(&coef, &members, q, 1.0, &grid).map_err(|e| e.to_string())?;
    let conj = rho.conjugated(&coef);
    let after = regularity_ratio(&conj, &members, q, 1.0, &grid).map_err(|e| e.to_string())?;
    let factor = certificate_factor(&bounds, q);
    let spread = (after.ratio / before.ratio).max(before.ratio / after.ratio);
    if spread > factor || !before.max_principle || !after.max_principle {
        return Err(format!(
            "regularity ratio {:.4} vs {:.4}, spread {spread:.3} > C(rho) = {factor:.3}",
            before.ratio, after.ratio
        ));
    }
    notes.push(format!(
        "regularity ratio {:.4} -> {:.4} (spread {spread:.3} <= C(rho) = {factor:.2}, N = {stages})",
        before.ratio, after.ratio
    ));
    Ok(notes.join("; "))
}

fn highcodim_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 3;
    let d = 2;
    let a = |y: &[f64], t: &[f64]| {
        DMatrix::from_row_slice(3, 3, &[
            2.0 + y[0].sin(), 0.1 * t[0], 0.0,
            0.2, 1.5 + 0.3 * y[1].cos(), 0.1,
            0.3 * t[0], 0.0, 1.0 + t[0] * t[0],
        ])
    };
    let v = |y: &[f64], t: &[f64]| DMatrix::from_row_slice(1, 2, &[0.1 * y[1] * t[0], 0.05 * (y[0] + t[0]).cos()]);
    let h = |y: &[f64], t: &[f64]| 1.2 + 0.1 * (y[0] - y[1]).sin() * t[0];
    let points: Vec<SamplePoint> = (0..100)
        .map(|_| SamplePoint {
            y: vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
            t: vec![rng.gen_range(0.01..0.5)],
        })
        .collect();
    let out = highcodim_conjugate(&a, &v, Dilation::Scalar(&h), d, n, &points).map_err(|e| e.to_string())?;
    let map = HighCodimMap { d, n, v: &v, h: &h };
    let mut worst: f64 = 0.0;
    for (p, m) in points.iter().zip(&out) {
        let l = map.local(p);
        let t = p.t[0];
        let vrow: Vec<f64> = (0..d).map(|j| l.v[(0, j)]).collect();
        let dv: Vec<f64> = (0..n).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| t * l.dv[i][(0, j)]).collect();
        let dh: Vec<f64> = l.dh.iter().map(|x| t * x).collect();
        let jac = point_jacobian(&vrow, l.h, &dv, &dh);
        let image_y: Vec<f64> = (0..d).map(|j| p.y[j] + t * vrow[j]).collect();
        let reference = transform_matrix(&a(&image_y, &[l.h * t]), &jac);
        worst = worst.max((m - reference).abs().max());
    }
    let c = 1.7;
    let hc = move |_: &[f64], _: &[f64]| c;
    let zero = |_: &[f64], _: &[f64]| DMatrix::zeros(2, 1);
    let id = |_: &[f64], _: &[f64]| DMatrix::identity(3, 3);
    let flat: Vec<SamplePoint> = (0..100)
        .map(|_| SamplePoint {
            y: vec![rng.gen_range(0.0..1.0)],
            t: vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
        })
        .collect();
    let scaled = highcodim_conjugate(&id, &zero, Dilation::Scalar(&hc), 1, 3, &flat).map_err(|e| e.to_string())?;
    let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c, 1.0 / c, 1.0 / c]));
    let worst_const = scaled.iter().map(|m| (m - &expected).abs().max()).fold(0.0, f64::max);
    if worst > 1e-12 || worst_const > 1e-12 {
        return Err(format!("codim-1 deviation {worst:.2e}, constant-h deviation {worst_const:.2e}"));
    }
    Ok(format!("codim-1 deviation {worst:.1e}, constant-h deviation {worst_const:.1e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("pipeline structural guarantee", pipeline_structure),
        ("Carleson control", carleson_control),
        ("mollifier certificate", mollifier_certificate),
        ("conjugation exactness", conjugation_exactness),
        ("estimator sandwich", estimator_sandwich),
        ("drift-transform baseline", drift_baseline),
        ("solver sanity", solver_sanity),
        ("aperture equivalence and stability probe", aperture_and_stability),
        ("higher-codimension consistency", highcodim_consistency),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|f| f == &id || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {id} [{name}]: PASS ({detail}; {secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} [{name}]: FAIL ({detail}; {secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
