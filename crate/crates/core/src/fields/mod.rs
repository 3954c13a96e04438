//! Grids on the truncated strip, sampled fields, block views, `t`-scaled
//! gradients and ellipticity diagnostics.

mod block;
mod ellipticity;
mod field;
mod gradient;
mod grid;
pub mod interp;

pub use block::{block_decompose, BlockDecomposition};
pub use ellipticity::{ellipticity_constants, measure_ellipticity, min_symmetric_eigenvalue, spectral_norm};
pub use field::{sup_norm, write_matrix, Ellipticity, Field, Kind, MatrixField, ScalarField, VectorField};
pub use gradient::{t_gradient, Gradient};
pub use grid::{periodic_distance, Grid, GridSpec};
