//! Experiment runner: declarative configs, deterministic seeding, run-record
//! persistence, and plot-data emission.

mod config;
mod records;
mod report;
mod runner;

pub use config::{
    BudgetConfig, ConstraintConfig, DeformationConfig, DomainConfig, ExperimentConfig,
    ExperimentKind, LdpConfig, NonconvexConfig, PotentialConfig, SplitConfig, TightnessConfig,
    WindowsConfig,
};
pub use records::{read_records, RecordStore};
pub use report::report;
pub use runner::{run, RunSummary};
