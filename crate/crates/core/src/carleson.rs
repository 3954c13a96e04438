//! Carleson measure diagnostics for `|f|^2 dt/t dx` on the truncated strip.
//!
//! Boxes are `B(x, r) x (t_min, r]`. Spatial quadrature uses the exact
//! overlap of each node's cell with the box base (sub-sampled for balls in
//! two or more tangential dimensions); the height uses the midpoint rule in
//! `log t` with half weights on the top of the box and on `t_min`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Field, Grid, Kind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxFamily {
    /// Dyadic cubes `Q` of side `l`, box `3Q x (t_min, min(l, T)]`,
    /// normalized by `(l/2)^(n-1)`.
    Dyadic,
    /// Every node as centre, every ladder height in `[dx, min(T, 1/2)]` as radius.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxId {
    pub x: Vec<f64>,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub r: f64,
    pub max_average: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub t_min: f64,
    #[serde(rename = "T")]
    pub top: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    pub constant: f64,
    pub argmax: BoxId,
    pub profile: Vec<ScaleEntry>,
    pub truncation: Truncation,
    pub family: BoxFamily,
}

const SUBSAMPLES: usize = 4;

/// Length of `[c - half, c + half]` inside `[a, b]` on the unit circle.
fn circle_overlap(c: f64, half: f64, a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for shift in [-1.0, 0.0, 1.0] {
        let lo = (c - half).max(a + shift);
        let hi = (c + half).min(b + shift);
        if hi > lo {
            total += hi - lo;
        }
    }
    total.min(2.0 * half)
}

/// Signed periodic displacement `z - x` in `[-1/2, 1/2)`.
fn displacement(z: f64, x: f64) -> f64 {
    (z - x + 0.5).rem_euclid(1.0) - 0.5
}

/// Tangential nodes whose cells may meet the ball `B(x, r)`, with their
/// per-axis displacements.
fn ball_candidates(grid: &Grid, center: &[f64], r: f64) -> Vec<(usize, Vec<f64>)> {
    let d = grid.tangential_dims();
    let nx = grid.x_count();
    let dx = grid.x_spacing();
    let reach = (r / dx).ceil() as isize + 1;
    let per_axis: Vec<Vec<(usize, f64)>> = center
        .iter()
        .map(|&c| {
            if 2 * reach + 1 >= nx as isize {
                (0..nx).map(|i| (i, displacement(i as f64 * dx, c))).collect()
            } else {
                let base = (c / dx).round() as isize;
                (-reach..=reach)
                    .map(|o| {
                        let i = (base + o).rem_euclid(nx as isize) as usize;
                        (i, displacement(i as f64 * dx, c))
                    })
                    .collect()
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let multi: Vec<usize> = (0..d).map(|k| per_axis[k][idx[k]].0).collect();
        let disp: Vec<f64> = (0..d).map(|k| per_axis[k][idx[k]].1).collect();
        out.push((grid.flat_index(&multi), disp));
        let mut k = 0;
        loop {
            if k == d {
                return out;
            }
            idx[k] += 1;
            if idx[k] < per_axis[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Measure of (cell of a node at displacement `disp`) ∩ B(0, r).
fn ball_cell_measure(disp: &[f64], dx: f64, r: f64) -> f64 {
    let half = 0.5 * dx;
    if disp.len() == 1 {
        return circle_overlap(disp[0], half, -r, r);
    }
    // nearest and farthest points of the cell decide the trivial cases
    let near: f64 = disp.iter().map(|&v| (v.abs() - half).max(0.0).powi(2)).sum::<f64>().sqrt();
    let far: f64 = disp.iter().map(|&v| (v.abs() + half).powi(2)).sum::<f64>().sqrt();
    let vol = dx.powi(disp.len() as i32);
    if near > r {
        return 0.0;
    }
    if far <= r {
        return vol;
    }
    let d = disp.len();
    let total = SUBSAMPLES.pow(d as u32);
    let mut inside = 0usize;
    for s in 0..total {
        let mut rem = s;
        let mut dist2 = 0.0;
        for &v in disp {
            let k = rem % SUBSAMPLES;
            rem /= SUBSAMPLES;
            let p = v - half + (k as f64 + 0.5) * dx / SUBSAMPLES as f64;
            dist2 += p * p;
        }
        if dist2 <= r * r {
            inside += 1;
        }
    }
    vol * inside as f64 / total as f64
}

/// Column sums of `w_j |f|^2` from the bottom level upward.
struct TentSums {
    grid: Grid,
    sq: Vec<f64>,
    cum: Vec<f64>,
}

impl TentSums {
    fn new(f: &Field) -> Self {
        let grid = *f.grid();
        let sq: Vec<f64> = f.magnitude().values().iter().map(|v| v * v).collect();
        let tl = grid.tangential_len();
        let last = grid.last_level();
        let h = grid.log_step();
        let mut cum = vec![0.0; sq.len()];
        for i in 0..tl {
            let mut acc = 0.0;
            for j in (0..=last).rev() {
                let w = if j == last { 0.5 * h } else { h };
                acc += w * sq[grid.node(j, i)];
                cum[grid.node(j, i)] = acc;
            }
        }
        TentSums { grid, sq, cum }
    }

    /// `sum_{t_j <= top} w_j |f|^2` at tangential node `i`, with half weight on a
    /// level that coincides with `top`.
    fn tent(&self, i: usize, top: f64) -> f64 {
        let g = &self.grid;
        let s = g.level_coordinate(top);
        let first = (s - 1e-9).ceil().max(0.0) as usize;
        if first > g.last_level() {
            return 0.0;
        }
        let node = g.node(first, i);
        let on_level = (s - first as f64).abs() < 1e-9;
        if on_level && first < g.last_level() {
            self.cum[node] - 0.5 * g.log_step() * self.sq[node]
        } else {
            self.cum[node]
        }
    }
}

fn admissible_radii(grid: &Grid) -> Vec<f64> {
    let cap = grid.top().min(0.5);
    let dx = grid.x_spacing();
    (0..grid.level_count())
        .map(|j| grid.t(j))
        .filter(|&r| r <= cap * (1.0 + 1e-12) && r >= dx * (1.0 - 1e-12))
        .collect()
}

fn dyadic_sides(grid: &Grid) -> Vec<f64> {
    let radii = admissible_radii(grid);
    let Some(&r_min) = radii.last() else {
        return Vec::new();
    };
    let mut sides = Vec::new();
    let mut l = 0.5;
    while l >= r_min * (1.0 - 1e-12) {
        sides.push(l);
        l *= 0.5;
    }
    // ends at the smallest dyadic side >= r_min, so every ball has a parent cube
    sides
}

/// Truncated Carleson constant of `|f|^2 dt/t dx` over a box family.
pub fn carleson_constant(f: &Field, family: BoxFamily) -> Result<CarlesonReport> {
    let grid = *f.grid();
    let tents = TentSums::new(f);
    let d = grid.tangential_dims() as i32;
    let dx = grid.x_spacing();
    let truncation = Truncation {
        t_min: grid.t_min(),
        top: grid.top(),
    };

    let mut best = (0.0f64, BoxId { x: vec![0.0; d as usize], r: 0.0 });
    let mut profile = Vec::new();

    match family {
        BoxFamily::Dense => {
            let radii = admissible_radii(&grid);
            if radii.is_empty() {
                return Err(Error::NoAdmissibleBoxes(format!(
                    "no ladder height in [dx = {dx}, min(T, 1/2)]"
                )));
            }
            for &r in &radii {
                let scores: Vec<(f64, usize)> = (0..grid.tangential_len())
                    .into_par_iter()
                    .map(|c| {
                        let center = grid.coords(c);
                        let sum: f64 = ball_candidates(&grid, &center, r)
                            .iter()
                            .map(|(z, disp)| ball_cell_measure(disp, dx, r) * tents.tent(*z, r))
                            .sum();
                        (sum / r.powi(d), c)
                    })
                    .collect();
                let (val, c) = scores
                    .into_iter()
                    .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
                profile.push(ScaleEntry { r, max_average: val });
                if val > best.0 {
                    best = (val, BoxId { x: grid.coords(c), r });
                }
            }
        }
        BoxFamily::Dyadic => {
            let sides = dyadic_sides(&grid);
            if sides.is_empty() {
                return Err(Error::NoAdmissibleBoxes(format!(
                    "no ladder height in [dx = {dx}, min(T, 1/2)]"
                )));
            }
            let nx = grid.x_count();
            for &l in &sides {
                let per_axis = (1.0 / l).round() as usize;
                // cell overlap of every tangential index with 3Q along one axis, per cube offset
                let overlaps: Vec<Vec<f64>> = (0..per_axis)
                    .map(|a| {
                        let q0 = a as f64 * l;
                        (0..nx)
                            .map(|i| {
                                if 3.0 * l >= 1.0 {
                                    dx
                                } else {
                                    circle_overlap(i as f64 * dx, 0.5 * dx, q0 - l, q0 + 2.0 * l)
                                }
                            })
                            .collect()
                    })
                    .collect();
                let top = l.min(grid.top());
                let column: Vec<f64> = (0..grid.tangential_len()).map(|i| tents.tent(i, top)).collect();
                let cubes = per_axis.pow(d as u32);
                let mut scale_max = f64::NEG_INFINITY;
                for q in 0..cubes {
                    let mut a = vec![0usize; d as usize];
                    let mut rem = q;
                    for k in (0..d as usize).rev() {
                        a[k] = rem % per_axis;
                        rem /= per_axis;
                    }
                    let mut sum = 0.0;
                    for (i, col) in column.iter().enumerate() {
                        if *col == 0.0 {
                            continue;
                        }
                        let multi = grid.multi_index(i);
                        let w: f64 = (0..d as usize).map(|k| overlaps[a[k]][multi[k]]).product();
                        sum += w * col;
                    }
                    let val = sum / (0.5 * l).powi(d);
                    scale_max = scale_max.max(val);
                    if val > best.0 {
                        let x = a.iter().map(|&ak| (ak as f64 + 0.5) * l).collect();
                        best = (val, BoxId { x, r: l });
                    }
                }
                profile.push(ScaleEntry { r: l, max_average: scale_max });
            }
        }
    }

    if best.1.r == 0.0 {
        // all boxes are zero: report the first scanned box
        best.1.r = profile.first().map_or(0.0, |p| p.r);
    }
    Ok(CarlesonReport {
        constant: best.0.max(0.0),
        argmax: best.1,
        profile,
        truncation,
        family,
    })
}

/// Nodewise sup of `|f|` over the cells meeting `B(y, t) x (t/2, 2t)`.
///
/// A cell is the box of side `dx` around a node times the `log t` interval
/// `[s 2^{-1/2m}, s 2^{1/2m}]`; any overlap with the band counts, so the
/// discrete value dominates the sup of the samples it covers.
pub fn fsup_field(f: &Field) -> Field {
    let grid = *f.grid();
    let mag = f.magnitude();
    let m = grid.levels_per_octave();
    let last = grid.last_level();
    let dx = grid.x_spacing();
    let values: Vec<f64> = (0..grid.node_count())
        .into_par_iter()
        .map(|node| {
            let j = grid.level_of(node);
            let t = grid.t(j);
            let center = grid.coords(grid.tangential_of(node));
            let cands = ball_candidates(&grid, &center, t);
            let lo = j.saturating_sub(m);
            let hi = (j + m).min(last);
            let mut best: f64 = 0.0;
            for (z, disp) in &cands {
                let near: f64 = disp
                    .iter()
                    .map(|&v| (v.abs() - 0.5 * dx).max(0.0).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if near > t {
                    continue;
                }
                for jj in lo..=hi {
                    best = best.max(mag.scalar(grid.node(jj, *z)));
                }
            }
            best
        })
        .collect();
    Field::new(grid, Kind::Scalar, format!("{}_sup", f.name()), values).expect("finite sup")
}

/// `carleson_constant(fsup_field(f), Dyadic)`.
pub fn cmsup_constant(f: &Field) -> Result<CarlesonReport> {
    carleson_constant(&fsup_field(f), BoxFamily::Dyadic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(2, 16, 0.5, 2, 8).unwrap()
    }

    #[test]
    fn zero_field() {
        let f = Field::constant(grid(), Kind::Scalar, "0", &[0.0]).unwrap();
        for fam in [BoxFamily::Dense, BoxFamily::Dyadic] {
            assert_eq!(carleson_constant(&f, fam).unwrap().constant, 0.0);
        }
        assert_eq!(cmsup_constant(&f).unwrap().constant, 0.0);
    }

    #[test]
    fn constant_field_has_log_divergent_constant() {
        let g = Grid::new(2, 32, 0.5, 4, 20).unwrap();
        let c = 1.5;
        let f = Field::constant(g, Kind::Scalar, "c", &[c]).unwrap();
        let rep = carleson_constant(&f, BoxFamily::Dense).unwrap();
        let expected = c * c * 2.0 * (g.top() / g.t_min()).ln();
        assert!((rep.constant - expected).abs() < 1e-10 * expected, "{} {expected}", rep.constant);
        assert!((rep.argmax.r - g.top()).abs() < 1e-12);
    }

    #[test]
    fn linear_in_height() {
        // int_0^r (t/T)^2 dt/t over |B| = 2r, divided by r: r^2/T^2, maximal at r = T
        let g = Grid::new(2, 32, 0.5, 8, 64).unwrap();
        let f = Field::scalar_fn(g, "t/T", |_, t| t / 0.5).unwrap();
        let rep = carleson_constant(&f, BoxFamily::Dense).unwrap();
        let h = g.log_step();
        // trapezoid in log t: relative error h^2 * 4 / 12
        assert!((rep.constant - 1.0).abs() < h * h / 3.0 + (g.t_min() / g.top()).powi(2));
    }

    #[test]
    fn scaling_is_quadratic() {
        let f = Field::scalar_fn(grid(), "f", |x, t| t * (2.0 * PI * x[0]).cos()).unwrap();
        let a = carleson_constant(&f, BoxFamily::Dyadic).unwrap().constant;
        let b = carleson_constant(&f.scale(3.0).unwrap(), BoxFamily::Dyadic).unwrap().constant;
        assert!((b - 9.0 * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn fsup_of_height_is_twice_height_inside_ladder() {
        let g = grid();
        let f = Field::scalar_fn(g, "t", |_, t| t).unwrap();
        let s = fsup_field(&f);
        for node in 0..g.node_count() {
            let t = g.t(g.level_of(node));
            let expect = (2.0 * t).min(g.top());
            assert!((s.scalar(node) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn no_admissible_boxes() {
        // T below the tangential spacing
        let g = Grid::new(2, 4, 0.1, 1, 3).unwrap();
        let f = Field::constant(g, Kind::Scalar, "c", &[1.0]).unwrap();
        assert!(matches!(
            carleson_constant(&f, BoxFamily::Dense),
            Err(Error::NoAdmissibleBoxes(_))
        ));
        assert!(matches!(
            carleson_constant(&f, BoxFamily::Dyadic),
            Err(Error::NoAdmissibleBoxes(_))
        ));
    }

    #[test]
    fn ball_measure_in_two_dimensions() {
        // whole ball covered by cells sums to about pi r^2
        let g = Grid::new(3, 32, 0.5, 1, 3).unwrap();
        let r = 0.2;
        let total: f64 = ball_candidates(&g, &[0.5, 0.5], r)
            .iter()
            .map(|(_, d)| ball_cell_measure(d, g.x_spacing(), r))
            .sum();
        assert!((total - PI * r * r).abs() < 0.01);
    }
}
