use dkp_core::changevar::{build_map, residual_split};
use dkp_core::fields::{t_gradient, sup_norm, Field, Grid, Kind};
use dkp_core::fixtures::lookup;
use dkp_core::pipeline::{choose_n_rpcor, run_pipeline, run_rpcor, PipelineOptions};
use nalgebra::DMatrix;

fn grid() -> Grid {
    Grid::new(2, 32, 0.5, 2, 10).unwrap()
}

#[test]
fn constant_diagonal_flattens_exactly() {
    let g = grid();
    let a = Field::constant_matrix(g, "A", &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0])).unwrap();
    let opts = PipelineOptions {
        skip_mollify: true,
        ..PipelineOptions::default()
    };
    let report = run_pipeline(&a, None, &opts).unwrap();
    // each stage dilates by h = 4^(1/N) < 2 and maps diag(p, q) to diag(h p, q / h)
    let expected_n = (1..).find(|&n| 4f64.powf(1.0 / n as f64) < 2.0).unwrap();
    assert_eq!(report.n_stages, expected_n);
    assert!(report.last_row_exact);
    let b = report.b_final.unwrap();
    let c = report.c_final.unwrap();
    for node in 0..g.node_count() {
        let m = b.at(node);
        assert!((m[0] - 4.0).abs() < 1e-12 && m[1].abs() < 1e-12);
        assert!(c.at(node).iter().all(|x| x.abs() < 1e-12));
    }
}

#[test]
fn stages_telescope() {
    let g = grid();
    let fx = lookup("dkp-generic").unwrap().sample(g).unwrap();
    let report = run_pipeline(&fx.a, Some((fx.b.clone(), fx.c.clone())), &PipelineOptions::default()).unwrap();
    assert!(report.n_stages >= 1);
    let (mut b, mut c) = (fx.b, fx.c);
    for rho in &report.composite.stages {
        let split = residual_split(&b, &c, rho).unwrap();
        b = split.b_rho;
        c = split.c_rho;
    }
    let replayed = b.add(&c).unwrap();
    let final_a = report.b_final.unwrap().add(&report.c_final.unwrap()).unwrap();
    for (x, y) in replayed.values().iter().zip(final_a.values()) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!(report.stages.iter().all(|s| s.certificate.certified && s.last_row_error <= 1e-10));
}

#[test]
fn rpcor_picks_the_smallest_certified_stage_count() {
    let g = grid();
    let fx = lookup("rpcor").unwrap().sample(g).unwrap();
    let b = fx.scalar.unwrap();
    let report = run_rpcor(&b, &PipelineOptions::default()).unwrap();
    assert!(report.last_row_exact);
    assert!(report.final_identity_cmsup.unwrap().is_finite());
    let n = report.n_stages;
    let (chosen, _) = choose_n_rpcor(&b, 64).unwrap();
    assert_eq!(chosen, n);
    let v = Field::constant(g, Kind::Vector(1), "v", &[0.0]).unwrap();
    let certified_at = |k: usize| {
        let h = b.map_nodes(Kind::Scalar, "h", |_, x, o| o[0] = x[0].powf(1.0 / k as f64)).unwrap();
        let h_min = h.values().iter().copied().fold(f64::INFINITY, f64::min);
        let eps = sup_norm(&t_gradient(&h).unwrap().magnitude());
        let rho = build_map(&v, &h, Some(h_min / 2.0)).unwrap();
        assert_eq!(rho.is_certified(), eps < h_min / 2.0);
        rho.is_certified()
    };
    assert!(certified_at(n));
    if n > 1 {
        assert!(!certified_at(n - 1));
    }
}

#[test]
fn non_elliptic_input_is_refused() {
    let g = grid();
    let a = Field::constant_matrix(g, "A", &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).unwrap();
    let err = run_pipeline(&a, None, &PipelineOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}
