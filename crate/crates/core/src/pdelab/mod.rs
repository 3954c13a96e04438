//! Finite-difference experiments on a rectangle `[0, 1] x [0, T_s]`: a
//! Dirichlet solver for `-div A grad u = 0`, conjugation checks,
//! non-tangential maximal functions and regularity-ratio probes.

mod conjugation;
mod grid;
mod ntmax;
mod probe;
mod solver;

pub use conjugation::{certificate_factor, verify_conjugation, AnalyticMap, ConjugationCheck, MapBounds, Solution};
pub use grid::{BoundaryFunction, BoundarySamples, GridFunction, SolverGrid};
pub use ntmax::{aperture_bound, gradient_magnitude, ntmax, ntmax_avg};
pub use probe::{observed_orders, order_check, regularity_ratio, ProbeRow, RegularityProbe, NOISE_FLOOR};
pub use solver::{operator_residual, solve_dirichlet, Coefficient, Solve, SOLVER_TOLERANCE};
