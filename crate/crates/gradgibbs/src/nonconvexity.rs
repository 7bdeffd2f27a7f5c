//! Midpoint non-convexity of the free energy under a plaquette perturbation.
//!
//! Adding `M sum_plaq (1 - V)` to a bounded-free-energy base shifts `W` by
//! `M` at the zero deformation but only by a vanishing boundary term at
//! `±identity` (the plaquette sum telescopes to a boundary shoelace). Once
//! `M` exceeds the spread of the base free energy over `|L| <= 1`, the
//! midpoint inequality fails and `W` is non-convex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_energy::{
    derive_seed, estimate_free_energy, EstimateBudget, Formulation, FreeEnergyEstimate,
};
use crate::hamiltonian::{ConstraintSet, Hamiltonian};
use crate::lattice::{AffineMap, BoxShape, Configuration, LatticeDomain};
use crate::potential::{bound_constants, PotentialSpec};
use crate::sampler::{metropolis_run, RunSettings};
use crate::stats;

/// Result of the midpoint experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonconvexityReport {
    pub m_weight: f64,
    /// printed threshold `B - b` of the base potential over `|L| <= 1`
    pub threshold: f64,
    pub w_id: (f64, f64),
    pub w_neg_id: (f64, f64),
    pub w_zero: (f64, f64),
    /// base free energies under the same formulation, for the shift checks
    pub base_w_id: (f64, f64),
    pub base_w_zero: (f64, f64),
    /// `W(0) - (W(id) + W(-id)) / 2` with propagated error
    pub gap: f64,
    pub gap_se: f64,
    /// gap positive at three standard errors
    pub verdict: bool,
}

/// `B - b` for the base over `|L| <= 1` from the printed constants.
pub fn nonconvexity_threshold(base: &PotentialSpec) -> f64 {
    let l_unit = AffineMap::identity(base.d);
    let c = bound_constants(&base.growth, base.m, base.d, base.range(), &l_unit);
    c.subadditivity - c.lower
}

/// Estimate the three clamped free energies for `H_base + M * plaquette term`
/// and report the midpoint gap.
pub fn run_nonconvexity(
    base: &PotentialSpec,
    m_weight: f64,
    shape: &BoxShape,
    eps_list: &[f64],
    budget: &EstimateBudget,
    seed: u64,
) -> Result<NonconvexityReport> {
    if base.d != 2 || base.m != 2 {
        return Err(Error::RequiresPlanar {
            d: base.d,
            m: base.m,
        });
    }
    if m_weight <= 0.0 {
        return Err(Error::Config {
            path: "nonconvex.m_weight".into(),
            msg: format!("plaquette weight must be positive, got {m_weight}"),
        });
    }
    let spec = base.clone().with_null_weight(m_weight);
    let id = AffineMap::identity(2);
    let neg = id.negate();
    let zero = AffineMap::zero(2, 2);

    let est = |spec: &PotentialSpec, l: &AffineMap, tag: &str| -> Result<FreeEnergyEstimate> {
        estimate_free_energy(
            spec,
            l,
            Formulation::SoftClamp,
            shape,
            eps_list,
            budget,
            derive_seed(seed, tag),
        )
    };
    let w_id = est(&spec, &id, "nc-id")?;
    let w_neg = est(&spec, &neg, "nc-neg")?;
    let w_zero = est(&spec, &zero, "nc-zero")?;
    let base_id = est(base, &id, "nc-base-id")?;
    let base_zero = est(base, &zero, "nc-base-zero")?;

    let gap = w_zero.value - 0.5 * (w_id.value + w_neg.value);
    let gap_se = (w_zero.se.powi(2) + 0.25 * w_id.se.powi(2) + 0.25 * w_neg.se.powi(2)).sqrt();
    let threshold = nonconvexity_threshold(base);
    Ok(NonconvexityReport {
        m_weight,
        threshold,
        w_id: (w_id.value, w_id.se),
        w_neg_id: (w_neg.value, w_neg.se),
        w_zero: (w_zero.value, w_zero.se),
        base_w_id: (base_id.value, base_id.se),
        base_w_zero: (base_zero.value, base_zero.se),
        gap,
        gap_se,
        verdict: gap > 3.0 * gap_se,
    })
}

/// Signed area of the boundary-ring image of a 2-D configuration: walk the
/// outer ring counterclockwise and apply the shoelace formula. Equals the
/// plaquette sum `sum_j V(X at plaquette j)` by telescoping.
pub fn boundary_shoelace(x: &Configuration) -> f64 {
    let dom = x.domain();
    assert_eq!(dom.d(), 2);
    assert_eq!(dom.m(), 2);
    let lo = dom.site_lo();
    let hi: Vec<i64> = lo
        .iter()
        .zip(dom.site_ext())
        .map(|(&l, &e)| l + e - 1)
        .collect();
    let mut ring: Vec<usize> = Vec::new();
    let push = |c0: i64, c1: i64, ring: &mut Vec<usize>| {
        ring.push(dom.site_index(&[c0, c1]).expect("ring site exists"));
    };
    for c0 in lo[0]..=hi[0] {
        push(c0, lo[1], &mut ring);
    }
    for c1 in (lo[1] + 1)..=hi[1] {
        push(hi[0], c1, &mut ring);
    }
    for c0 in (lo[0]..hi[0]).rev() {
        push(c0, hi[1], &mut ring);
    }
    for c1 in ((lo[1] + 1)..hi[1]).rev() {
        push(lo[0], c1, &mut ring);
    }
    let mut area = 0.0;
    for w in 0..ring.len() {
        let a = x.values(ring[w]);
        let b = x.values(ring[(w + 1) % ring.len()]);
        area += a[0] * b[1] - b[0] * a[1];
    }
    area / 2.0
}

/// Per-scale maxima of the normalized plaquette-term fluctuation on clamped
/// ensembles, with the fitted log-log slope in eps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryTermScan {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
}

/// Sample the base measure under the soft clamp at `l` and record
/// `max over samples of eps^d |H*(X) - H*(clamp datum)|`.
pub fn boundary_term_scan(
    base: &PotentialSpec,
    m_weight: f64,
    l: &AffineMap,
    eps_list: &[f64],
    sweeps: usize,
    seed: u64,
) -> Result<BoundaryTermScan> {
    if base.d != 2 || base.m != 2 {
        return Err(Error::RequiresPlanar {
            d: base.d,
            m: base.m,
        });
    }
    let spec = base.clone().with_null_weight(m_weight);
    let mut points = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let dom = LatticeDomain::build(BoxShape::unit(2), eps, 2)?;
        let base_ham = Hamiltonian::new(base.clone(), &dom)?;
        let full_ham = Hamiltonian::new(spec.clone(), &dom)?;
        let anchor = l.lattice_config(&dom);
        let h_star_anchor = full_ham.null_energy(&anchor);
        let set = ConstraintSet::soft_clamp(anchor.clone(), base.range());
        let frozen = vec![false; dom.n_sites()];
        let settings = RunSettings::new(sweeps, derive_seed(seed, &format!("scan-{eps}")))
            .with_burn_in(sweeps / 5)
            .with_thin(5);
        let batch = metropolis_run(&base_ham, &set, anchor, &frozen, &settings)?;
        let scale = eps.powi(2);
        let max_fluct = batch
            .snapshots
            .iter()
            .map(|x| scale * (full_ham.null_energy(x) - h_star_anchor).abs())
            .fold(0.0f64, f64::max);
        points.push((eps, max_fluct));
    }
    let xs: Vec<f64> = points.iter().map(|&(e, _)| e.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, f)| f.max(1e-300).ln()).collect();
    let fit = stats::affine_fit(&xs, &ys, &vec![0.0; xs.len()]);
    Ok(BoundaryTermScan {
        points,
        slope: fit.slope,
    })
}
