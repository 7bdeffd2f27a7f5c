//! Partition-function and free-energy estimators with their certified
//! inequality checks.
//!
//! The estimator is thermodynamic integration from an on-site product
//! reference whose `log Z` stays exactly computable (or cheaply countable)
//! on every constraint set; quadratic systems additionally have exact
//! log-determinant routes under the hard-clamp and periodic formulations,
//! which is what the acceptance oracles compare against.

mod checks;
mod estimate;
pub(crate) mod reference;
mod thermo;

pub use checks::{
    check_subadditivity_oracle, check_subadditivity_quadrature, check_tightness_mc,
    check_tightness_quadrature, gradient_cells, quasiconvexity_gap_quadratic,
    quasiconvexity_probe_mc, tightness_corollary_bound, QuasiconvexityRow, SubadditivityReport,
    TightnessPoint,
};
pub use estimate::{
    derive_seed, estimate_free_energy, per_eps_log_z, EstimateBudget, Formulation,
    FreeEnergyEstimate, PerEpsValue,
};
pub use reference::{reference_log_z, ReferenceLogZ};
pub use thermo::{log_z_thermo, LogZEstimate, ThermoSettings};
