use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{Error, Result};

/// Tensor discretization of the strip `[0,1)^{n-1} x [t_min, T]`.
///
/// The tangential torus is sampled uniformly (`x_i = i / x_count`, periodic);
/// the height follows the geometric ladder `t_j = T 2^{-j/m}`, `j = 0..=J`,
/// so level 0 is the top of the strip and level `J` is `t_min`.
///
/// Nodes are numbered level-major: `node = j * tangential_len + i` where `i`
/// is the row-major flattening of the tangential multi-index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    x_count: usize,
    top: f64,
    levels_per_octave: usize,
    last_level: usize,
}

/// Wire form of a grid inside the JSON field container.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub x_count: usize,
    #[serde(rename = "T")]
    pub top: f64,
    pub t_min: f64,
    pub m: usize,
}

impl Grid {
    pub fn new(
        n: usize,
        x_count: usize,
        top: f64,
        levels_per_octave: usize,
        last_level: usize,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("ambient dimension {n} < 2")));
        }
        if x_count < 4 {
            return Err(Error::InvalidGrid(format!("x_count {x_count} < 4")));
        }
        if levels_per_octave < 1 {
            return Err(Error::InvalidGrid("m must be >= 1".into()));
        }
        if !(top.is_finite() && top > 0.0) {
            return Err(Error::InvalidGrid(format!("T = {top} must be positive")));
        }
        let tangential = x_count
            .checked_pow((n - 1) as u32)
            .ok_or_else(|| Error::InvalidGrid("tangential node count overflows".into()))?;
        if tangential.checked_mul(last_level + 1).is_none() {
            return Err(Error::InvalidGrid("node count overflows".into()));
        }
        Ok(Grid {
            n,
            x_count,
            top,
            levels_per_octave,
            last_level,
        })
    }

    /// Builds the grid from `(T, t_min)`; `t_min` must sit on the ladder.
    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        if !(spec.t_min > 0.0 && spec.t_min <= spec.top) {
            return Err(Error::InvalidGrid(format!(
                "t_min = {} must lie in (0, T]",
                spec.t_min
            )));
        }
        let exact = spec.m as f64 * (spec.top / spec.t_min).log2();
        let last = exact.round();
        if (exact - last).abs() > 1e-6 {
            return Err(Error::InvalidGrid(format!(
                "t_min = {} is not on the ladder T 2^(-j/m)",
                spec.t_min
            )));
        }
        Grid::new(spec.n, spec.x_count, spec.top, spec.m, last as usize)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            n: self.n,
            x_count: self.x_count,
            top: self.top,
            t_min: self.t_min(),
            m: self.levels_per_octave,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tangential_dims(&self) -> usize {
        self.n - 1
    }

    pub fn x_count(&self) -> usize {
        self.x_count
    }

    pub fn x_spacing(&self) -> f64 {
        1.0 / self.x_count as f64
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    pub fn levels_per_octave(&self) -> usize {
        self.levels_per_octave
    }

    pub fn last_level(&self) -> usize {
        self.last_level
    }

    pub fn level_count(&self) -> usize {
        self.last_level + 1
    }

    pub fn t(&self, level: usize) -> f64 {
        self.top * (-(level as f64) / self.levels_per_octave as f64).exp2()
    }

    /// Ladder height at a possibly negative or out-of-range level index.
    pub fn t_extended(&self, level: f64) -> f64 {
        self.top * (-level / self.levels_per_octave as f64).exp2()
    }

    pub fn t_min(&self) -> f64 {
        self.t(self.last_level)
    }

    /// Spacing of the ladder in `log t`.
    pub fn log_step(&self) -> f64 {
        LN_2 / self.levels_per_octave as f64
    }

    /// Fractional level index of height `t` (0 at `T`, `J` at `t_min`).
    pub fn level_coordinate(&self, t: f64) -> f64 {
        self.levels_per_octave as f64 * (self.top / t).log2()
    }

    /// Midpoint-in-log-t quadrature weight of a level over `[t_min, T]`.
    pub fn level_weight(&self, level: usize) -> f64 {
        if level == 0 || level == self.last_level {
            0.5 * self.log_step()
        } else {
            self.log_step()
        }
    }

    pub fn tangential_len(&self) -> usize {
        self.x_count.pow((self.n - 1) as u32)
    }

    pub fn node_count(&self) -> usize {
        self.tangential_len() * self.level_count()
    }

    pub fn node(&self, level: usize, tangential: usize) -> usize {
        level * self.tangential_len() + tangential
    }

    pub fn level_of(&self, node: usize) -> usize {
        node / self.tangential_len()
    }

    pub fn tangential_of(&self, node: usize) -> usize {
        node % self.tangential_len()
    }

    /// Row-major multi-index of a flattened tangential index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let d = self.n - 1;
        let mut idx = vec![0; d];
        for axis in (0..d).rev() {
            idx[axis] = flat % self.x_count;
            flat /= self.x_count;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.x_count + i)
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|i| i as f64 * self.x_spacing())
            .collect()
    }

    /// Tangential neighbour along `axis`, wrapping periodically.
    pub fn shift(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let d = self.n - 1;
        let stride = self.x_count.pow((d - 1 - axis) as u32);
        let i = (flat / stride) % self.x_count;
        let nc = self.x_count as isize;
        let j = ((i as isize + offset) % nc + nc) % nc;
        flat - i * stride + j as usize * stride
    }

    /// Doubles the resolution in `x` and in `log t`, keeping `T` and `t_min`.
    pub fn refine(&self) -> Grid {
        Grid {
            n: self.n,
            x_count: 2 * self.x_count,
            top: self.top,
            levels_per_octave: 2 * self.levels_per_octave,
            last_level: 2 * self.last_level,
        }
    }
}

/// Distance on the unit circle.
pub fn periodic_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}
