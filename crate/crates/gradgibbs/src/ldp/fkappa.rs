use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::free_energy::{
    derive_seed, log_z_thermo, reference_log_z, EstimateBudget, ThermoSettings,
};
use crate::hamiltonian::{ConstraintSet, Hamiltonian, OnsiteQuadratic, SiteBox};
use crate::lattice::{discretize, BoxShape, Field, LatticeDomain};
use crate::potential::PotentialSpec;
use crate::stats;

use super::macrofield::MacroField;
use super::rate::{profile_energy, WMap};

/// One constrained free-energy value
/// `-eps^d |Omega|^{-1} log Z(N_{Omega_eps, r}(v, kappa))` with its error.
pub fn neighborhood_free_energy(
    spec: &PotentialSpec,
    v: &MacroField,
    kappa: f64,
    eps: f64,
    shape: &BoxShape,
    budget: &EstimateBudget,
    seed: u64,
) -> Result<(f64, f64)> {
    let dom = LatticeDomain::build(shape.clone(), eps, spec.m)?;
    let ham = Hamiltonian::new(spec.clone(), &dom)?;
    let field = Field::PiecewiseLinear(v.field.clone());
    let anchor = discretize(&field, &dom)?;
    let constraint = ConstraintSet::lr_neighborhood(&dom, &field, kappa, budget.r)?;
    let frozen = vec![false; dom.n_sites()];
    let onsite = OnsiteQuadratic::new(anchor.clone(), &SiteBox::full(&dom));
    let r = reference_log_z(&constraint, &anchor, &frozen, budget.ref_draws, seed)?;
    let est = log_z_thermo(
        &ham,
        &onsite,
        r.log_z,
        r.se,
        &constraint,
        anchor,
        &frozen,
        &ThermoSettings::new(budget.path_points, budget.sweeps_at(eps), seed),
    )?;
    let scale = eps.powf(spec.d as f64) / shape.volume();
    Ok((-scale * est.log_z, scale * est.se))
}

/// Grid of constrained free energies against the macroscopic target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqueezeReport {
    /// `(1/|Omega|) sum_T vol W(grad v)`
    pub target: f64,
    /// rows per kappa: `(kappa, per-eps values, extrapolated value, se)`
    pub rows: Vec<SqueezeRow>,
    /// finest-grid comparison: `|F - target| <= 3 se + |fit residual|`
    pub squeeze_holds: bool,
    pub finest_gap: f64,
    pub finest_tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SqueezeRow {
    pub kappa: f64,
    pub per_eps: Vec<(f64, f64, f64)>,
    pub extrapolated: f64,
    pub extrapolated_se: f64,
    pub residual: f64,
}

/// Tabulate `F_{kappa, eps}(v)` over the grid and compare the finest corner
/// against the simplex average of the free-energy map.
#[allow(clippy::too_many_arguments)]
pub fn rate_comparison(
    spec: &PotentialSpec,
    v: &MacroField,
    wmap: &WMap,
    kappa_list: &[f64],
    eps_list: &[f64],
    shape: &BoxShape,
    budget: &EstimateBudget,
    seed: u64,
) -> Result<SqueezeReport> {
    let target = profile_energy(wmap, &v.field)? / shape.volume();
    let mut rows = Vec::with_capacity(kappa_list.len());
    for &kappa in kappa_list {
        let mut per_eps = Vec::with_capacity(eps_list.len());
        for &eps in eps_list {
            let task_seed = derive_seed(seed, &format!("fke|{kappa:.6e}|{eps:.6e}"));
            let (f, se) =
                neighborhood_free_energy(spec, v, kappa, eps, shape, budget, task_seed)?;
            per_eps.push((eps, f, se));
        }
        let xs: Vec<f64> = per_eps.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = per_eps.iter().map(|p| p.1).collect();
        let ses: Vec<f64> = per_eps.iter().map(|p| p.2).collect();
        let fit = stats::affine_fit(&xs, &ys, &ses);
        rows.push(SqueezeRow {
            kappa,
            per_eps,
            extrapolated: fit.intercept,
            extrapolated_se: fit.intercept_se,
            residual: fit.rms_residual,
        });
    }
    // finest corner: smallest kappa, smallest eps
    let finest = rows
        .iter()
        .min_by(|a, b| a.kappa.partial_cmp(&b.kappa).unwrap())
        .expect("at least one kappa");
    let (_, f_fine, se_fine) = *finest
        .per_eps
        .iter()
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .expect("at least one eps");
    let tolerance = 3.0 * (se_fine * se_fine + finest.extrapolated_se.powi(2)).sqrt()
        + finest.residual;
    let gap = (f_fine - target).abs();
    Ok(SqueezeReport {
        target,
        squeeze_holds: gap <= tolerance,
        finest_gap: gap,
        finest_tolerance: tolerance,
        rows,
    })
}
