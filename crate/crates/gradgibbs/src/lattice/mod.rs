//! Discrete domains, configurations, and the discrete/continuum dictionary.
//!
//! A [`LatticeDomain`] is the integer lattice superimposed over a continuum
//! box at scale `eps`: the sites are `i` with `eps*i` inside the (half-open)
//! box. [`Configuration`]s attach an `R^m` value to every site, fields map the
//! continuum box to `R^m`, and [`discretize`]/[`interpolate`] translate
//! between the two pictures. The factor-2 norm equivalences that make the
//! translation quantitative live in [`norms`].

mod affine;
mod config;
mod domain;
mod field;
pub mod norms;

pub use affine::AffineMap;
pub use config::Configuration;
pub use domain::{BoxShape, LatticeDomain, Strip, Topology};
pub use field::{
    discretize, interpolate, Field, PiecewiseLinearField, Simplex, SEGMENT_RULE, TRIANGLE_RULE,
};
