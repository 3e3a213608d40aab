//! Dense forests built from finite unions of grids.

pub mod diophantine;
pub mod error;
pub mod experiments;
pub mod exact;
pub mod grid;
pub mod lattice;
pub mod linalg;
pub mod registry;
pub mod rationality;
pub mod rng;
pub mod sphere_cover;
pub mod stats;
pub mod torus;
pub mod visibility;

pub use error::{Error, Result};
