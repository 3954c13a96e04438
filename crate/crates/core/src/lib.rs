//! Change-of-variable machinery for divergence-form elliptic operators on
//! the upper half-space.

pub mod error;
pub mod carleson;
pub mod changevar;
pub mod fields;
pub mod fixtures;
pub mod highcodim;
pub mod io;
pub mod mollify;
pub mod pdelab;
pub mod pipeline;

pub use error::{Error, Result};
