//! Multilinear interpolation in `(x, log t)`: periodic in `x`, clamped to
//! `[t_min, T]` in height.

use super::field::Field;

/// Interpolates `f` at `(x, t)` into `out`. Returns `true` when the height
/// was clamped to the ladder.
pub fn sample_into(f: &Field, x: &[f64], t: f64, out: &mut [f64]) -> bool {
    let grid = f.grid();
    let d = grid.tangential_dims();
    let nc = f.components();
    debug_assert_eq!(x.len(), d);

    let mut s = grid.level_coordinate(t);
    let mut clamped = false;
    let last = grid.last_level() as f64;
    if !(s >= 0.0) {
        s = 0.0;
        clamped = true;
    } else if s > last {
        s = last;
        clamped = true;
    }
    let j0 = (s.floor() as usize).min(grid.last_level().saturating_sub(1));
    let ft = s - j0 as f64;

    let nx = grid.x_count();
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for k in 0..d {
        let u = (x[k] * nx as f64).rem_euclid(nx as f64);
        let i = (u.floor() as usize).min(nx - 1);
        base[k] = i;
        frac[k] = u - i as f64;
    }

    // corner c: bit k (k < d) selects the +1 neighbour on axis k, bit d the lower level
    let corners = 1usize << (d + 1);
    let mut buf = vec![0.0; corners * nc];
    let mut idx = vec![0usize; d];
    for c in 0..corners {
        for k in 0..d {
            idx[k] = (base[k] + ((c >> k) & 1)) % nx;
        }
        let level = j0 + ((c >> d) & 1);
        let node = grid.node(level.min(grid.last_level()), grid.flat_index(&idx));
        buf[c * nc..(c + 1) * nc].copy_from_slice(f.at(node));
    }
    // reduce one axis at a time with v0 + f (v1 - v0) so constants are reproduced exactly
    let mut width = corners;
    let weights: Vec<f64> = frac.iter().copied().chain(std::iter::once(ft)).collect();
    for w in weights {
        width /= 2;
        for c in 0..width {
            for k in 0..nc {
                let v0 = buf[(2 * c) * nc + k];
                let v1 = buf[(2 * c + 1) * nc + k];
                buf[c * nc + k] = v0 + w * (v1 - v0);
            }
        }
        // the next axis is now the lowest bit again
    }
    out.copy_from_slice(&buf[..nc]);
    clamped
}

pub fn sample(f: &Field, x: &[f64], t: f64) -> (Vec<f64>, bool) {
    let mut out = vec![0.0; f.components()];
    let clamped = sample_into(f, x, t, &mut out);
    (out, clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Field, Grid, Kind};

    #[test]
    fn reproduces_nodes_and_constants() {
        let g = Grid::new(3, 6, 0.5, 2, 6).unwrap();
        let f = Field::scalar_fn(g, "f", |x, t| x[0] + 2.0 * x[1] * x[1] + t).unwrap();
        for node in (0..g.node_count()).step_by(7) {
            let x = g.coords(g.tangential_of(node));
            let t = g.t(g.level_of(node));
            let (v, clamped) = sample(&f, &x, t);
            assert!(!clamped);
            assert!((v[0] - f.scalar(node)).abs() < 1e-12);
        }
        let c = Field::constant(g, Kind::Scalar, "c", &[0.7]).unwrap();
        let (v, _) = sample(&c, &[0.123, 0.987], 0.0321);
        assert_eq!(v[0], 0.7);
    }

    #[test]
    fn periodic_wrap_and_clamp() {
        let g = Grid::new(2, 8, 0.5, 2, 6).unwrap();
        let f = Field::scalar_fn(g, "f", |x, _| (2.0 * std::f64::consts::PI * x[0]).cos()).unwrap();
        let (a, _) = sample(&f, &[0.95], 0.1);
        let (b, _) = sample(&f, &[-0.05], 0.1);
        assert!((a[0] - b[0]).abs() < 1e-14);
        let (_, clamped) = sample(&f, &[0.3], 10.0);
        assert!(clamped);
        let (_, clamped) = sample(&f, &[0.3], 1e-6);
        assert!(clamped);
    }

    #[test]
    fn linear_in_x_is_exact_between_nodes() {
        let g = Grid::new(2, 8, 0.5, 2, 6).unwrap();
        let f = Field::scalar_fn(g, "f", |_, t| t.ln()).unwrap();
        // linear in log t, so exact
        let (v, _) = sample(&f, &[0.31], 0.2);
        assert!((v[0] - 0.2f64.ln()).abs() < 1e-12);
    }
}
