use dkp_core::carleson::{carleson_constant, cmsup_constant, fsup_field, BoxFamily};
use dkp_core::fields::{periodic_distance, t_gradient, Field, Grid};
use dkp_core::fixtures::lookup;
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::new(2, 16, 0.5, 2, 7).unwrap()
}

fn field_from(g: Grid, values: &[f64]) -> Field {
    Field::new(g, dkp_core::fields::Kind::Scalar, "f", values.to_vec()).unwrap()
}

#[test]
fn fsup_of_a_spike_covers_its_band() {
    let g = grid();
    let m = g.levels_per_octave();
    let (level, col) = (4, 5);
    let spike = g.node(level, col);
    let f = Field::scalar_fn(g, "spike", |_, _| 0.0).unwrap();
    let mut values = f.values().to_vec();
    values[spike] = 1.0;
    let sup = fsup_field(&field_from(g, &values));
    let xs = g.coords(col)[0];
    for node in 0..g.node_count() {
        let j = g.level_of(node);
        let t = g.t(j);
        let dist = periodic_distance(g.coords(g.tangential_of(node))[0], xs);
        let in_band = j.abs_diff(level) <= m;
        if in_band && dist <= t {
            assert_eq!(sup.scalar(node), 1.0, "node {node} should see the spike");
        }
        if !in_band || dist - 0.5 * g.x_spacing() > t {
            assert_eq!(sup.scalar(node), 0.0, "node {node} is out of reach");
        }
    }
}

#[test]
fn fixture_constants_converge_as_t_min_halves() {
    for name in ["diag-b", "dkp-generic"] {
        let mut last: Option<f64> = None;
        for j in [20, 24] {
            let g = Grid::new(2, 64, 0.5, 4, j).unwrap();
            let fx = lookup(name).unwrap().sample(g).unwrap();
            let grad = t_gradient(&fx.b).unwrap().magnitude();
            let both = Field::magnitude_sum(&[&grad, &fx.c]).unwrap();
            let c = cmsup_constant(&both).unwrap().constant;
            if let Some(prev) = last {
                let change = (c - prev) / prev;
                assert!(change.abs() < 0.05, "{name}: {prev} -> {c}");
            }
            last = Some(c);
        }
    }
}

fn values_strategy() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, 16 * 8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cmsup_dominates_the_plain_constant(values in values_strategy()) {
        let f = field_from(grid(), &values);
        let plain = carleson_constant(&f, BoxFamily::Dyadic).unwrap().constant;
        let sup = cmsup_constant(&f).unwrap().constant;
        prop_assert!(sup >= plain * (1.0 - 1e-12));
    }

    #[test]
    fn constants_scale_quadratically(values in values_strategy(), c in 0.1f64..10.0) {
        let f = field_from(grid(), &values);
        let scaled = f.scale(c).unwrap();
        for family in [BoxFamily::Dyadic, BoxFamily::Dense] {
            let a = carleson_constant(&f, family).unwrap().constant;
            let b = carleson_constant(&scaled, family).unwrap().constant;
            prop_assert!((b - c * c * a).abs() <= 1e-10 * (1.0 + b));
        }
    }

    #[test]
    fn constants_are_monotone(values in values_strategy(), extra in values_strategy()) {
        let f = field_from(grid(), &values);
        let bigger: Vec<f64> = values.iter().zip(&extra).map(|(a, b)| a + b).collect();
        let g = field_from(grid(), &bigger);
        for family in [BoxFamily::Dyadic, BoxFamily::Dense] {
            prop_assert!(carleson_constant(&f, family).unwrap().constant
                <= carleson_constant(&g, family).unwrap().constant * (1.0 + 1e-12));
        }
        prop_assert!(cmsup_constant(&f).unwrap().constant <= cmsup_constant(&g).unwrap().constant * (1.0 + 1e-12));
    }

    #[test]
    fn fsup_dominates_the_field(values in values_strategy()) {
        let f = field_from(grid(), &values);
        let sup = fsup_field(&f);
        for (a, b) in f.values().iter().zip(sup.values()) {
            prop_assert!(b >= a);
        }
    }
}
