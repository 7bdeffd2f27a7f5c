use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hamiltonian::{
    overlap_strip_size, ConstraintSet, EnergyModel, Hamiltonian, SiteBox,
};
use crate::lattice::{AffineMap, BoxShape, LatticeDomain, PiecewiseLinearField};
use crate::potential::{bound_constants, PotentialSpec};
use crate::sampler::{
    adaptive_log_z, envelope_radius, metropolis_run, tensor_gl_log_z, FreeDims, GaussianOracle,
    RunSettings,
};

use super::estimate::{
    derive_seed, estimate_free_energy, EstimateBudget, Formulation, FreeEnergyEstimate,
};

/// Outcome of one subadditivity comparison
/// `log Z_whole >= log Z_a + log Z_b - B(L) |S(a, b)|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubadditivityReport {
    pub log_z_whole: f64,
    pub log_z_a: f64,
    pub log_z_b: f64,
    pub defect_constant: f64,
    pub overlap_sites: usize,
    /// `log Z_whole - log Z_a - log Z_b + B(L) |S|`; nonnegative when the
    /// inequality holds
    pub slack: f64,
}

fn region_soft_quadrature(
    spec: &PotentialSpec,
    l: &AffineMap,
    dom: &Arc<LatticeDomain>,
    region: &SiteBox,
    nodes: usize,
) -> Result<f64> {
    if region.is_empty() {
        return Ok(0.0); // Z over the empty region is 1
    }
    let ham = Hamiltonian::on_region(spec.clone(), dom, region.clone())?;
    let anchor = l.lattice_config(dom);
    let sites = region.sites(dom);
    let g = spec.growth;
    let radius = envelope_radius(g.c, g.p, 30.0) + 1.5;
    let strip_sites = region.strip_sites(dom, spec.range());
    let mut strip_mask = vec![false; dom.n_sites()];
    for &i in &strip_sites {
        strip_mask[i] = true;
    }
    let free = FreeDims::around(&anchor, &sites, radius)?.clip_to_clamp(&anchor, &strip_mask);
    tensor_gl_log_z(&ham, &anchor, &free, nodes, None)
}

/// Soft-clamp subadditivity on a small system, both sides by quadrature.
pub fn check_subadditivity_quadrature(
    spec: &PotentialSpec,
    l: &AffineMap,
    dom: &Arc<LatticeDomain>,
    axis: usize,
    cut: i64,
    nodes: usize,
) -> Result<SubadditivityReport> {
    let whole = SiteBox::full(dom);
    let (a, b) = whole.bisect(axis, cut);
    let log_z_whole = region_soft_quadrature(spec, l, dom, &whole, nodes)?;
    let log_z_a = region_soft_quadrature(spec, l, dom, &a, nodes)?;
    let log_z_b = region_soft_quadrature(spec, l, dom, &b, nodes)?;
    finish_subadditivity(spec, l, dom, &whole, &a, &b, log_z_whole, log_z_a, log_z_b)
}

/// Dirichlet-form subadditivity for quadratic potentials via the exact
/// oracle (strip sites frozen at the affine datum).
pub fn check_subadditivity_oracle(
    spec: &PotentialSpec,
    l: &AffineMap,
    dom: &Arc<LatticeDomain>,
    axis: usize,
    cut: i64,
) -> Result<SubadditivityReport> {
    let whole = SiteBox::full(dom);
    let (a, b) = whole.bisect(axis, cut);
    let clamp = l.lattice_config(dom);
    let log_z_of = |region: &SiteBox| -> Result<f64> {
        if region.is_empty() {
            return Ok(0.0);
        }
        let ham = Hamiltonian::on_region(spec.clone(), dom, region.clone())?;
        let strip = region.strip_sites(dom, spec.range());
        let mut pinned = vec![true; dom.n_sites()];
        for &i in &region.sites(dom) {
            pinned[i] = false;
        }
        for &i in &strip {
            pinned[i] = true;
        }
        Ok(GaussianOracle::new(&ham, &pinned, &clamp)?.log_z())
    };
    let log_z_whole = log_z_of(&whole)?;
    let log_z_a = log_z_of(&a)?;
    let log_z_b = log_z_of(&b)?;
    finish_subadditivity(spec, l, dom, &whole, &a, &b, log_z_whole, log_z_a, log_z_b)
}

#[allow(clippy::too_many_arguments)]
fn finish_subadditivity(
    spec: &PotentialSpec,
    l: &AffineMap,
    dom: &Arc<LatticeDomain>,
    whole: &SiteBox,
    a: &SiteBox,
    b: &SiteBox,
    log_z_whole: f64,
    log_z_a: f64,
    log_z_b: f64,
) -> Result<SubadditivityReport> {
    let consts = bound_constants(&spec.growth, spec.m, spec.d, spec.range(), l);
    let overlap = if a.is_empty() || b.is_empty() {
        0
    } else {
        overlap_strip_size(dom, whole, a, b, spec.range())
    };
    let slack =
        log_z_whole - log_z_a - log_z_b + consts.subadditivity * overlap as f64;
    Ok(SubadditivityReport {
        log_z_whole,
        log_z_a,
        log_z_b,
        defect_constant: consts.subadditivity,
        overlap_sites: overlap,
        slack,
    })
}

/// One point of an exponential-tightness audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TightnessPoint {
    pub k: f64,
    /// `log Z(M_K intersect set)`; `None` when no mass was observed
    pub log_z_cut: Option<f64>,
    /// `log` of the printed bound `exp(-K n / 2) D^n`
    pub log_bound: f64,
    /// `log Z(set)` for the conditional version
    pub log_z_set: f64,
    /// observed hit count (Monte Carlo route)
    pub hits: Option<usize>,
    pub consistent: bool,
}

/// Quadrature audit of `Z(M_K ∩ soft clamp) <= exp(-K n/2) D^n` on a small
/// 1-D system.
pub fn check_tightness_quadrature(
    spec: &PotentialSpec,
    l: &AffineMap,
    dom: &Arc<LatticeDomain>,
    k_list: &[f64],
) -> Result<Vec<TightnessPoint>> {
    let ham = Hamiltonian::new(spec.clone(), dom)?;
    let anchor = l.lattice_config(dom);
    let n = dom.n_sites() as f64;
    let consts = bound_constants(&spec.growth, spec.m, spec.d, spec.range(), l);
    let strip = dom.boundary_strip(spec.range());
    let strip_mask: Vec<bool> = (0..dom.n_sites()).map(|i| strip.contains(i)).collect();
    let sites: Vec<usize> = (0..dom.n_sites()).collect();

    // unconstrained-but-clamped normalization Z(set)
    let g = spec.growth;
    let base_radius = envelope_radius(g.c, g.p, 30.0) + 1.5;
    let free_smooth =
        FreeDims::around(&anchor, &sites, base_radius)?.clip_to_clamp(&anchor, &strip_mask);
    let log_z_set = tensor_gl_log_z(&ham, &anchor, &free_smooth, 32, None)?;

    let mut out = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let log_bound = -k * n / 2.0 + n * consts.tightness.ln();
        // widen the box to cover the high-energy shell
        let radius = ((k * n / g.c).powf(1.0 / g.p) + base_radius).min(25.0);
        let free =
            FreeDims::around(&anchor, &sites, radius)?.clip_to_clamp(&anchor, &strip_mask);
        let cut = ConstraintSet::energy_cut(k);
        let tol = log_bound.exp() * 1e-3;
        let log_z_cut = match adaptive_log_z(&ham, &anchor, &free, tol, Some(&cut)) {
            Ok(v) => Some(v),
            Err(crate::error::Error::MeasureZeroConstraint) => None,
            Err(e) => return Err(e),
        };
        let consistent = match log_z_cut {
            Some(v) => v <= log_bound,
            None => true, // no observed mass: trivially below the bound
        };
        out.push(TightnessPoint {
            k,
            log_z_cut,
            log_bound,
            log_z_set,
            hits: None,
            consistent,
        });
    }
    Ok(out)
}

/// Monte Carlo audit on a larger system: sample the clamped measure, count
/// high-energy hits, and compare `Z(set) * P(H > K n)` against the bound.
#[allow(clippy::too_many_arguments)]
pub fn check_tightness_mc(
    spec: &PotentialSpec,
    l: &AffineMap,
    shape: &BoxShape,
    eps: f64,
    k_list: &[f64],
    log_z_set: f64,
    sweeps: usize,
    seed: u64,
) -> Result<Vec<TightnessPoint>> {
    let dom = LatticeDomain::build(shape.clone(), eps, spec.m)?;
    let ham = Hamiltonian::new(spec.clone(), &dom)?;
    let anchor = l.lattice_config(&dom);
    let set = ConstraintSet::soft_clamp(anchor.clone(), spec.range());
    let frozen = vec![false; dom.n_sites()];
    let settings = RunSettings::new(sweeps, derive_seed(seed, "tightness-mc"))
        .with_burn_in(sweeps / 5)
        .with_thin(2)
        .without_snapshots();
    let batch = metropolis_run(&ham, &set, anchor, &frozen, &settings)?;
    let n = dom.n_sites() as f64;
    let consts = bound_constants(&spec.growth, spec.m, spec.d, spec.range(), l);
    let draws = batch.energies.len();
    let mut out = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let hits = batch.energies.iter().filter(|&&h| h > k * n).count();
        let log_bound = -k * n / 2.0 + n * consts.tightness.ln();
        let p_hat = hits as f64 / draws as f64;
        let se_p = (p_hat * (1.0 - p_hat) / draws as f64).sqrt();
        // 3-se upper confidence on the probability; for zero hits use the
        // standard 3/N one-sided bound
        let p_upper = if hits == 0 {
            3.0 / draws as f64
        } else {
            p_hat + 3.0 * se_p
        };
        let log_z_cut = if hits == 0 {
            None
        } else {
            Some(log_z_set + p_hat.ln())
        };
        let consistent = log_z_set + p_upper.ln() <= log_bound || hits == 0;
        out.push(TightnessPoint {
            k,
            log_z_cut,
            log_bound,
            log_z_set,
            hits: Some(hits),
            consistent,
        });
    }
    Ok(out)
}

/// Conditional-measure corollary on a small system:
/// `mu(M_K) <= exp(-K n/2) (D / omega(m))^n exp(C (H(clamp) + (1 + R0^d) n))`.
pub fn tightness_corollary_bound(
    spec: &PotentialSpec,
    l: &AffineMap,
    dom: &Arc<LatticeDomain>,
    k: f64,
) -> Result<(Option<f64>, f64)> {
    let points = check_tightness_quadrature(spec, l, dom, &[k])?;
    let p = &points[0];
    let mu_hat = p.log_z_cut.map(|v| v - p.log_z_set);
    let n = dom.n_sites() as f64;
    let consts = bound_constants(&spec.growth, spec.m, spec.d, spec.range(), l);
    let omega_m = match spec.m {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => unreachable!(),
    };
    let ham = Hamiltonian::new(spec.clone(), dom)?;
    let clamp_energy = ham.energy(&l.lattice_config(dom));
    let r0 = spec.range();
    let log_rhs = -k * n / 2.0
        + n * (consts.tightness / omega_m).ln()
        + spec.growth.big_c * (clamp_energy + (1.0 + r0.powi(spec.d as i32)) * n);
    Ok((mu_hat, log_rhs))
}

/// One quasiconvexity comparison: `W(L)` against the simplex average of `W`
/// along a perturbed profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuasiconvexityRow {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    /// `rhs - lhs`; expected nonnegative within error
    pub gap: f64,
    pub gap_se: f64,
}

/// Distinct per-simplex gradients of a piecewise-linear profile, with their
/// accumulated volumes.
pub fn gradient_cells(v: &PiecewiseLinearField) -> Vec<(Vec<f64>, f64)> {
    let d = v.d();
    let m = v.m();
    let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut grad = vec![0.0; m * d];
    for s in v.simplices() {
        let centroid: Vec<f64> = (0..d)
            .map(|k| s.vertices.iter().map(|p| p[k]).sum::<f64>() / s.vertices.len() as f64)
            .collect();
        v.gradient_at(&centroid, &mut grad).expect("centroid inside");
        match out
            .iter_mut()
            .find(|(g, _)| g.iter().zip(&grad).all(|(a, b)| (a - b).abs() < 1e-10))
        {
            Some((_, vol)) => *vol += s.volume,
            None => out.push((grad.clone(), s.volume)),
        }
    }
    out
}

/// Closed-form quasiconvexity gap for quadratic potentials:
/// `sum_T vol (|grad v|_cols^2 - |L|_cols^2) / |Omega|`.
pub fn quasiconvexity_gap_quadratic(
    l: &AffineMap,
    v: &PiecewiseLinearField,
    volume: f64,
) -> f64 {
    let d = l.d();
    let m = l.m();
    let mut gap = 0.0;
    for (grad, vol) in gradient_cells(v) {
        let g_sq: f64 = grad.iter().map(|x| x * x).sum();
        gap += vol * (g_sq - l.columns_sq());
        debug_assert_eq!(grad.len(), m * d);
    }
    gap / volume
}

/// Monte Carlo quasiconvexity probe: both sides estimated, errors propagated.
#[allow(clippy::too_many_arguments)]
pub fn quasiconvexity_probe_mc(
    spec: &PotentialSpec,
    l: &AffineMap,
    v: &PiecewiseLinearField,
    shape: &BoxShape,
    eps_list: &[f64],
    budget: &EstimateBudget,
    seed: u64,
) -> Result<QuasiconvexityRow> {
    let lhs = estimate_free_energy(
        spec,
        l,
        Formulation::SoftClamp,
        shape,
        eps_list,
        budget,
        derive_seed(seed, "qc-lhs"),
    )?;
    let volume = shape.volume();
    let mut rhs = 0.0;
    let mut rhs_var = 0.0;
    for (idx, (grad, vol)) in gradient_cells(v).into_iter().enumerate() {
        let lg = AffineMap::linear(spec.m, spec.d, grad);
        let west: FreeEnergyEstimate = estimate_free_energy(
            spec,
            &lg,
            Formulation::SoftClamp,
            shape,
            eps_list,
            budget,
            derive_seed(seed, &format!("qc-rhs-{idx}")),
        )?;
        rhs += vol * west.value / volume;
        rhs_var += (vol * west.se / volume).powi(2);
    }
    let gap = rhs - lhs.value;
    let gap_se = (rhs_var + lhs.se * lhs.se).sqrt();
    Ok(QuasiconvexityRow {
        lhs: lhs.value,
        lhs_se: lhs.se,
        rhs,
        rhs_se: rhs_var.sqrt(),
        gap,
        gap_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subadditivity_1d_quadrature_nonnegative_slack() {
        let spec = PotentialSpec::gaussian(1, 1).with_forward_patch();
        let dom =
            LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 1.0 / 5.0, 1).unwrap();
        let l = AffineMap::zero(1, 1);
        let rep = check_subadditivity_quadrature(&spec, &l, &dom, 0, 2, 28).unwrap();
        assert!(rep.slack >= 0.0, "{rep:?}");
        assert!(rep.overlap_sites > 0);
    }

    #[test]
    fn subadditivity_empty_half_trivial() {
        let spec = PotentialSpec::gaussian(1, 1).with_forward_patch();
        let dom =
            LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 1.0 / 4.0, 1).unwrap();
        let l = AffineMap::zero(1, 1);
        let rep = check_subadditivity_quadrature(&spec, &l, &dom, 0, 10, 24).unwrap();
        assert_eq!(rep.overlap_sites, 0);
        assert!((rep.log_z_b).abs() < 1e-12);
        assert!(rep.slack.abs() < 1e-9, "{rep:?}"); // Z_b = 1, halves equal
    }

    #[test]
    fn subadditivity_2d_oracle_nonnegative_slack() {
        let spec = PotentialSpec::gaussian(2, 2);
        let dom = LatticeDomain::build(BoxShape::unit(2), 1.0 / 6.0, 2).unwrap();
        let l = AffineMap::identity(2);
        let rep = check_subadditivity_oracle(&spec, &l, &dom, 0, 2).unwrap();
        assert!(rep.slack >= 0.0, "{rep:?}");
    }

    #[test]
    fn tightness_quadrature_small_chain() {
        let spec = PotentialSpec::gaussian(1, 1).with_forward_patch();
        let dom =
            LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 1.0 / 4.0, 1).unwrap();
        let l = AffineMap::zero(1, 1);
        let pts = check_tightness_quadrature(&spec, &l, &dom, &[1.0, 2.0, 4.0]).unwrap();
        for p in &pts {
            assert!(p.consistent, "{p:?}");
        }
        // huge K: no mass observed, trivially consistent
        let pts = check_tightness_quadrature(&spec, &l, &dom, &[60.0]).unwrap();
        assert!(pts[0].consistent);
    }

    #[test]
    fn quadratic_quasiconvexity_gap_closed_form() {
        // v = L + hat phi: gap = sum vol |grad phi|^2 / |Omega| > 0; phi = 0
        // gives gap 0.
        let l = AffineMap::identity(2);
        let n = 8usize;
        let a = 0.3;
        let v = PiecewiseLinearField::from_vertex_fn(
            2,
            2,
            vec![0.0, 0.0],
            1.0 / n as f64,
            vec![n, n],
            |x, out| {
                let hat = a * x[0].min(1.0 - x[0]).min(x[1]).min(1.0 - x[1]).max(0.0);
                out[0] = x[0] + hat;
                out[1] = x[1];
            },
        );
        let gap = quasiconvexity_gap_quadratic(&l, &v, 1.0);
        assert!(gap > 0.0);
        let flat = PiecewiseLinearField::from_vertex_fn(
            2,
            2,
            vec![0.0, 0.0],
            1.0 / n as f64,
            vec![n, n],
            |x, out| {
                out[0] = x[0];
                out[1] = x[1];
            },
        );
        let gap0 = quasiconvexity_gap_quadratic(&l, &flat, 1.0);
        assert!(gap0.abs() < 1e-12);
    }
}
