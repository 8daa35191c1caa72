//! Coupled wave / Klein-Gordon system with null-form quadratic nonlinearities
//! in 2+1 dimensions.

pub mod decay;
pub mod energies;
pub mod error;
pub mod evolve;
pub mod experiments;
pub mod grid;
pub mod identities;
pub mod io;
pub mod linear;
pub mod nullforms;
pub mod picard;
pub mod quad;
pub mod spectral;
pub mod taylor;
pub mod vectorfields;

pub use error::{Error, Result};
pub use grid::{Axis, Field2D, Grid2D, Region, RegionMask, Scheme};
