//! Large-deviations machinery and local window diagnostics: macroscopic
//! profiles with their rate functional, neighborhood-constrained free
//! energies, blow-up origin selection, and the slope/consistency checks for
//! sampled Gibbs measures.

mod blowup;
mod fkappa;
mod macrofield;
mod rate;
mod windows;

pub use blowup::{select_blowup_origin, BlowupSelection, SHIFT_GRID};
pub use fkappa::{neighborhood_free_energy, rate_comparison, SqueezeReport, SqueezeRow};
pub use macrofield::MacroField;
pub use rate::{profile_energy, rate_functional, RateReport, WMap, WTable};
pub use windows::{
    slope_check, stats_for_site, window_stats, write_histogram_csv, write_stats_jsonl,
    ClampMode, HistogramBin, SlopeCheck, WindowSpec, WindowStats,
};
