//! Energies over site regions, the conditioned (specification) form, the
//! plaquette term, constraint-set membership, and the boundary-strip
//! interpolation machinery.

mod appendix;
mod constraint;
mod energy;
mod region;

pub use appendix::{
    blend_configurations, extend_into_strip, select_low_energy_slice, theta_profile,
    AppendixBoundConstants,
};
pub use constraint::{ConstraintSet, ConstraintTracker, Membership};
pub use energy::{ConditionedHamiltonian, EnergyModel, Hamiltonian, OnsiteQuadratic, PathEnergy};
pub use region::{overlap_strip_size, SiteBox};
