use rayon::prelude::*;

use super::grid::{BoundarySamples, GridFunction, SolverGrid};

/// `(2 (1 + K))^((n - 1)/q)` with `n = 2`: bound on `|N_K| / |N_1|` in `L^q`.
pub fn aperture_bound(aperture: f64, q: f64) -> f64 {
    (2.0 * (1.0 + aperture)).powf(1.0 / q)
}

fn samples(grid: &SolverGrid, x: &[f64], values: Vec<f64>) -> BoundarySamples {
    let spacing = if x.len() > 1 { (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64 } else { grid.delta() };
    BoundarySamples {
        x: x.to_vec(),
        values,
        spacing,
    }
}

/// Nodes `(i, j)`, `j >= 1`, whose position lies in the open cone `|x - y| < K t`.
fn cone_nodes(grid: &SolverGrid, x: f64, aperture: f64) -> impl Iterator<Item = (usize, usize)> + '_ {
    (1..=grid.nt()).flat_map(move |j| {
        let t = grid.t(j);
        (0..=grid.nx()).filter_map(move |i| ((x - grid.y(i)).abs() < aperture * t).then_some((i, j)))
    })
}

/// `N_K(u)(x) = max |u|` over cone nodes.
pub fn ntmax(u: &GridFunction, aperture: f64, x: &[f64]) -> BoundarySamples {
    let g = u.grid;
    let values = x
        .par_iter()
        .map(|&xv| cone_nodes(&g, xv, aperture).map(|(i, j)| u.at(i, j).abs()).fold(0.0, f64::max))
        .collect();
    samples(&g, x, values)
}

/// `|grad u|` by centered differences, one-sided on the edges.
pub fn gradient_magnitude(u: &GridFunction) -> GridFunction {
    let g = u.grid;
    let d = g.delta();
    let diff = |i: usize, j: usize, along_y: bool| -> f64 {
        let (n, k) = if along_y { (g.nx(), i) } else { (g.nt(), j) };
        let at = |m: usize| if along_y { u.at(m, j) } else { u.at(i, m) };
        if k == 0 {
            (at(1) - at(0)) / d
        } else if k == n {
            (at(n) - at(n - 1)) / d
        } else {
            (at(k + 1) - at(k - 1)) / (2.0 * d)
        }
    };
    let mut values = vec![0.0; g.node_count()];
    for j in 0..=g.nt() {
        for i in 0..=g.nx() {
            values[g.index(i, j)] = diff(i, j, true).hypot(diff(i, j, false));
        }
    }
    GridFunction { grid: g, values }
}

/// Two-dimensional prefix sums of nodal values.
struct Prefix {
    nx: usize,
    sum: Vec<f64>,
}

impl Prefix {
    fn new(sq: &GridFunction) -> Self {
        let g = sq.grid;
        let nx = g.nx() + 1;
        let mut sum = vec![0.0; (nx + 1) * (g.nt() + 2)];
        for j in 0..=g.nt() {
            for i in 0..=g.nx() {
                sum[(j + 1) * (nx + 1) + i + 1] =
                    sq.at(i, j) + sum[j * (nx + 1) + i + 1] + sum[(j + 1) * (nx + 1) + i] - sum[j * (nx + 1) + i];
            }
        }
        Prefix { nx, sum }
    }

    /// Sum over `i0..=i1`, `j0..=j1`.
    fn rect(&self, i0: usize, i1: usize, j0: usize, j1: usize) -> f64 {
        let w = self.nx + 1;
        self.sum[(j1 + 1) * w + i1 + 1] - self.sum[j0 * w + i1 + 1] - self.sum[(j1 + 1) * w + i0] + self.sum[j0 * w + i0]
    }
}

/// Window of the Whitney region `B(y_i, t_j) x (t_j/2, 2 t_j)` in index space.
fn window(g: &SolverGrid, i: usize, j: usize) -> (usize, usize, usize, usize) {
    let r = j; // radius t_j in cells
    let i0 = i.saturating_sub(r);
    let i1 = (i + r).min(g.nx());
    let j0 = j / 2 + 1;
    let j1 = (2 * j - 1).min(g.nt());
    (i0, i1, j0.min(j1), j1)
}

/// `N~_K(|grad u|)(x)`: max over cone nodes of the root mean square of
/// `|grad u|` over the Whitney region of the node.
pub fn ntmax_avg(u: &GridFunction, aperture: f64, x: &[f64]) -> BoundarySamples {
    let g = u.grid;
    let grad = gradient_magnitude(u);
    let sq = GridFunction {
        grid: g,
        values: grad.values.iter().map(|v| v * v).collect(),
    };
    let prefix = Prefix::new(&sq);
    let rms: Vec<f64> = (0..g.node_count())
        .map(|k| {
            let (i, j) = (k % (g.nx() + 1), k / (g.nx() + 1));
            if j == 0 {
                return 0.0;
            }
            let (i0, i1, j0, j1) = window(&g, i, j);
            let count = ((i1 - i0 + 1) * (j1 - j0 + 1)) as f64;
            (prefix.rect(i0, i1, j0, j1) / count).max(0.0).sqrt()
        })
        .collect();
    let values = x
        .par_iter()
        .map(|&xv| cone_nodes(&g, xv, aperture).map(|(i, j)| rms[g.index(i, j)]).fold(0.0, f64::max))
        .collect();
    samples(&g, x, values)
}
