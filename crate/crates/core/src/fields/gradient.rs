use super::field::{Field, Kind};
use crate::error::{Error, Result};

/// `t * grad f`, one field per direction: the `n - 1` tangential axes first,
/// then the height.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub directions: Vec<Field>,
}

impl Gradient {
    pub fn tangential(&self, axis: usize) -> &Field {
        &self.directions[axis]
    }

    pub fn normal(&self) -> &Field {
        self.directions.last().expect("gradient has n directions")
    }

    /// Euclidean magnitude over directions and components.
    pub fn magnitude(&self) -> Field {
        let grid = *self.directions[0].grid();
        let mut acc = vec![0.0; grid.node_count()];
        for d in &self.directions {
            let nc = d.components();
            for (a, c) in acc.iter_mut().zip(d.values().chunks(nc)) {
                *a += c.iter().map(|v| v * v).sum::<f64>();
            }
        }
        acc.iter_mut().for_each(|a| *a = a.sqrt());
        Field::new(grid, Kind::Scalar, "|t grad|", acc).expect("finite gradient")
    }

    /// Undo the `t` scaling: plain partial derivatives.
    pub fn unscaled(&self) -> Gradient {
        let directions = self
            .directions
            .iter()
            .map(|d| {
                let grid = *d.grid();
                d.map_nodes(d.kind(), d.name().to_string(), |node, v, out| {
                    let t = grid.t(grid.level_of(node));
                    for (o, x) in out.iter_mut().zip(v) {
                        *o = x / t;
                    }
                })
                .expect("finite")
            })
            .collect();
        Gradient { directions }
    }
}

/// `t * grad f` by finite differences.
///
/// Tangential derivatives are centered with periodic wrap. The normal part
/// `t d/dt = d/d(log t)` is centered on the ladder, with second-order
/// one-sided formulas on the top and bottom levels.
pub fn t_gradient(f: &Field) -> Result<Gradient> {
    let grid = *f.grid();
    if grid.x_count() < 3 || grid.level_count() < 3 {
        return Err(Error::InsufficientResolution(format!(
            "t_gradient needs >= 3 nodes per axis (x_count = {}, levels = {})",
            grid.x_count(),
            grid.level_count()
        )));
    }
    let nc = f.components();
    let dx = grid.x_spacing();
    let h = grid.log_step();
    let last = grid.last_level();
    let mut directions = Vec::with_capacity(grid.n());

    for axis in 0..grid.tangential_dims() {
        let mut vals = vec![0.0; f.values().len()];
        for node in 0..grid.node_count() {
            let j = grid.level_of(node);
            let i = grid.tangential_of(node);
            let plus = grid.node(j, grid.shift(i, axis, 1));
            let minus = grid.node(j, grid.shift(i, axis, -1));
            let t = grid.t(j);
            let (fp, fm) = (f.at(plus), f.at(minus));
            for c in 0..nc {
                vals[node * nc + c] = t * (fp[c] - fm[c]) / (2.0 * dx);
            }
        }
        directions.push(Field::new(grid, f.kind(), format!("t d{axis} {}", f.name()), vals)?);
    }

    // level index increases as log t decreases
    let mut vals = vec![0.0; f.values().len()];
    for node in 0..grid.node_count() {
        let j = grid.level_of(node);
        let i = grid.tangential_of(node);
        let at = |jj: usize| f.at(grid.node(jj, i));
        for c in 0..nc {
            vals[node * nc + c] = if j == 0 {
                (3.0 * at(0)[c] - 4.0 * at(1)[c] + at(2)[c]) / (2.0 * h)
            } else if j == last {
                (-3.0 * at(last)[c] + 4.0 * at(last - 1)[c] - at(last - 2)[c]) / (2.0 * h)
            } else {
                (at(j - 1)[c] - at(j + 1)[c]) / (2.0 * h)
            };
        }
    }
    directions.push(Field::new(grid, f.kind(), format!("t dt {}", f.name()), vals)?);
    Ok(Gradient { directions })
}
