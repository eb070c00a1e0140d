//! Isogeometric Galerkin discretization of the Poisson problem on unions of
//! overlapping B-spline patches, coupled by additive Schwarz iteration.

pub mod analysis;
pub mod assembly;
pub mod boundary;
pub mod cases;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod quadrature;
pub mod runner;
pub mod schwarz;
pub mod splines;

pub use error::{Error, Result};
