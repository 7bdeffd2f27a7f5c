//! A desk-scale laboratory for lattice gradient-interface models.
//!
//! The crate builds finite lattice domains over a continuum box, equips them
//! with finite-range gradient potentials, and estimates constrained partition
//! functions and free energies under several boundary formulations (soft
//! clamp, `ℓ^r` neighborhoods, combined, periodic). On top of the estimators
//! sit the certified checks: subadditivity of `log Z`, exponential tightness,
//! quasiconvexity probes, a null-Lagrangian non-convexity experiment, a
//! large-deviations rate comparison, and local window diagnostics for the
//! sampled Gibbs measures.
//!
//! Every Monte Carlo estimator is validated against at least one independent
//! oracle: exact Gaussian linear algebra for quadratic potentials, nested
//! quadrature on systems with few free sites, or closed-form constants.

pub mod error;
pub mod numeric;
pub mod stats;
pub mod lattice;
pub mod potential;
pub mod hamiltonian;
pub mod sampler;
pub mod free_energy;
pub mod nonconvexity;
pub mod ldp;
pub mod cli;

pub use error::{Error, Result};
