use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{Configuration, LatticeDomain, Strip};
use crate::potential::GrowthConstants;

use super::energy::Hamiltonian;

/// Ramp profile interpolating between 0 on the inner strip and 1 in the bulk:
/// `theta_k(i) = min(1, (dist(eps i, complement)/eps - R0 - (k-1) R)_+ / R)`.
///
/// The profile climbs by at most `R0/R` across any patch, which is what makes
/// blended configurations energetically affordable.
pub fn theta_profile(
    dom: &Arc<LatticeDomain>,
    k: usize,
    ramp: f64,
    r0: f64,
) -> Result<Vec<f64>> {
    if ramp <= 2.0 * r0 {
        return Err(Error::RampTooNarrow { ramp, range: r0 });
    }
    assert!(k >= 1);
    let eps = dom.eps();
    let shape = dom.shape();
    let inner = r0 + (k as f64 - 1.0) * ramp;
    Ok((0..dom.n_sites())
        .map(|i| {
            let x = dom.position(i);
            let lattice_dist = shape.dist_to_complement(&x) / eps;
            ((lattice_dist - inner) / ramp).clamp(0.0, 1.0)
        })
        .collect())
}

/// `T_k(X, Y)(i) = theta(i) X(i) + (1 - theta(i)) Y(i)`.
pub fn blend_configurations(x: &Configuration, y: &Configuration, theta: &[f64]) -> Configuration {
    let dom = x.domain();
    assert_eq!(theta.len(), dom.n_sites());
    let mut out = Configuration::zeros(dom);
    let m = dom.m();
    for i in 0..dom.n_sites() {
        let t = theta[i];
        for alpha in 0..m {
            out.values_mut(i)[alpha] =
                t * x.values(i)[alpha] + (1.0 - t) * y.values(i)[alpha];
        }
    }
    out
}

/// Extend strip data by a background configuration: `Y` on the strip, `Z`
/// elsewhere.
pub fn extend_into_strip(y: &Configuration, z: &Configuration, strip: &Strip) -> Configuration {
    let mut out = z.clone();
    for &i in strip.sites() {
        let src = y.values(i).to_vec();
        out.values_mut(i).copy_from_slice(&src);
    }
    out
}

/// Partition the boundary band into `n_slices - 1` concentric slices of ramp
/// width and return the smallest slice index whose patch-energy share is at
/// most `H(X) / (n_slices - 1)`, together with the slice energies.
///
/// Existence is a pigeonhole over nonnegative patch energies: the slices are
/// disjoint, so not every slice can exceed the average share.
pub fn select_low_energy_slice(
    ham: &Hamiltonian,
    x: &Configuration,
    n_slices: usize,
    ramp: f64,
) -> (usize, Vec<f64>) {
    assert!(n_slices >= 2);
    let dom = ham.domain();
    let r0 = ham.spec().range();
    let total = ham.energy_full(x);
    let budget = total / (n_slices as f64 - 1.0);
    let mut energies = Vec::with_capacity(n_slices - 1);
    let mut chosen = None;
    for k in 1..n_slices {
        let outer = dom.domain_strip(r0 + k as f64 * ramp);
        let inner = dom.domain_strip(r0 + (k as f64 - 1.0) * ramp);
        let slice: Vec<usize> = outer
            .sites()
            .iter()
            .copied()
            .filter(|&i| !inner.contains(i))
            .collect();
        let e = ham.energy_over_centers(x, &slice);
        energies.push(e);
        if chosen.is_none() && e <= budget + 1e-12 * (1.0 + total) {
            chosen = Some(k);
        }
    }
    let k = chosen.expect("pigeonhole: some slice is below the average share");
    (k, energies)
}

/// The constant in front of the interpolation energy bound,
/// `max(C |Omega|, (C^2(1+C+R0^d)+C) C_bd |bd Omega|, R0^{d+r} 2^r |Omega|^{1+r/d}, C^2)`.
#[derive(Debug, Clone, Copy)]
pub struct AppendixBoundConstants {
    pub c_tilde: f64,
}

impl AppendixBoundConstants {
    pub fn new(
        g: &GrowthConstants,
        r0: f64,
        d: usize,
        volume: f64,
        surface: f64,
        boundary_constant: f64,
    ) -> Self {
        let c = g.big_c;
        let small = c * c * (1.0 + c + r0.powi(d as i32)) + c;
        let c_tilde = (c * volume)
            .max(small * boundary_constant * surface)
            .max(r0.powf(d as f64 + g.r) * 2f64.powf(g.r) * volume.powf(1.0 + g.r / d as f64))
            .max(c * c);
        AppendixBoundConstants { c_tilde }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{AffineMap, BoxShape};
    use crate::potential::PotentialSpec;

    #[test]
    fn theta_saturates_and_clamps() {
        let dom =
            LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 1.0 / 40.0, 1).unwrap();
        let r0 = 1.0;
        let ramp = 4.0;
        let theta = theta_profile(&dom, 1, ramp, r0).unwrap();
        // deep interior: distance >= R0 + R -> 1
        let mid = dom.site_index(&[20]).unwrap();
        assert_eq!(theta[mid], 1.0);
        // inside the inner strip: 0
        let near = dom.site_index(&[1]).unwrap();
        assert_eq!(theta[near], 0.0);
        // exactly mid-ramp: dist = R0 + R/2 -> 1/2
        let ramp_site = dom.site_index(&[3]).unwrap(); // dist 3 = 1 + 2
        assert!((theta[ramp_site] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn theta_rejects_narrow_ramp() {
        let dom =
            LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 1.0 / 40.0, 1).unwrap();
        assert!(matches!(
            theta_profile(&dom, 1, 2.0, 1.0),
            Err(Error::RampTooNarrow { .. })
        ));
    }

    #[test]
    fn theta_lipschitz_across_patches() {
        let dom = LatticeDomain::build(BoxShape::unit(2), 1.0 / 24.0, 1).unwrap();
        let (r0, ramp) = (2.0, 5.0);
        let theta = theta_profile(&dom, 2, ramp, r0).unwrap();
        for i in 0..dom.n_sites() {
            let c = dom.coords(i);
            for off in [[1i64, 0], [0, 1], [-1, 0], [0, -1], [1, 1]] {
                if let Some(j) = dom.site_index(&[c[0] + off[0], c[1] + off[1]]) {
                    let dist = ((off[0] * off[0] + off[1] * off[1]) as f64).sqrt();
                    if dist <= r0 {
                        assert!(
                            (theta[i] - theta[j]).abs() <= r0 / ramp + 1e-12,
                            "sites {i},{j}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn blend_endpoint_identities() {
        let dom =
            LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 1.0 / 20.0, 1).unwrap();
        let x = AffineMap::linear(1, 1, vec![1.0]).lattice_config(&dom);
        let y = AffineMap::linear(1, 1, vec![-2.0]).lattice_config(&dom);
        // theta == 1 -> T = X
        let t = blend_configurations(&x, &y, &vec![1.0; dom.n_sites()]);
        assert_eq!(t.raw(), x.raw());
        // X == Y -> T = X for any theta
        let theta = theta_profile(&dom, 1, 4.0, 1.0).unwrap();
        let t = blend_configurations(&x, &x, &theta);
        assert_eq!(t.raw(), x.raw());
        // endpoint sets: T = Y on the inner strip, T = X off the outer strip
        let t = blend_configurations(&x, &y, &theta);
        for i in 0..dom.n_sites() {
            if theta[i] == 0.0 {
                assert_eq!(t.values(i), y.values(i));
            }
            if theta[i] == 1.0 {
                assert_eq!(t.values(i), x.values(i));
            }
        }
    }

    #[test]
    fn blend_pointwise_mix_on_ramp() {
        // 20-site chain, k=1, ramp=4, r0=1: hand-check three ramp sites.
        let dom =
            LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 1.0 / 20.0, 1).unwrap();
        let x = AffineMap::linear(1, 1, vec![1.0]).lattice_config(&dom);
        let y = Configuration::zeros(&dom);
        let theta = theta_profile(&dom, 1, 4.0, 1.0).unwrap();
        let t = blend_configurations(&x, &y, &theta);
        for site in [2usize, 3, 4] {
            // continuum distance of eps*site to the complement, in lattice units
            let dist = (site as f64).min(20.0 - site as f64);
            let th = ((dist - 1.0) / 4.0).clamp(0.0, 1.0);
            let want = th * site as f64;
            assert!((t.values(site)[0] - want).abs() < 1e-12, "site {site}");
        }
    }

    #[test]
    fn slice_selection_uniform_energy_returns_first() {
        let dom =
            LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 1.0 / 64.0, 1).unwrap();
        let spec = PotentialSpec::gaussian(1, 1).with_forward_patch();
        let ham = Hamiltonian::new(spec, &dom).unwrap();
        let x = AffineMap::linear(1, 1, vec![1.0]).lattice_config(&dom);
        let (k, _) = select_low_energy_slice(&ham, &x, 4, 3.0);
        assert_eq!(k, 1);
        // constant configuration: every slice qualifies, returns 1
        let c = Configuration::zeros(&dom);
        let (k, energies) = select_low_energy_slice(&ham, &c, 4, 3.0);
        assert_eq!(k, 1);
        assert!(energies.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn slice_selection_skips_loaded_slice() {
        // concentrate energy in slice 1 (sites at distance in (r0, r0+ramp]);
        // the pigeonhole must pick a later slice.
        let dom =
            LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 1.0 / 64.0, 1).unwrap();
        let spec = PotentialSpec::gaussian(1, 1).with_forward_patch();
        let ham = Hamiltonian::new(spec, &dom).unwrap();
        let mut x = Configuration::zeros(&dom);
        // slice 1 for r0=1, ramp=3 holds centers with dist in (1, 4]; a bump
        // at site 3 puts both incident bonds (centers 2 and 3) there, so
        // slice 1 carries the whole energy and exceeds its share
        x.values_mut(3)[0] = 10.0;
        let (k, energies) = select_low_energy_slice(&ham, &x, 3, 3.0);
        assert_eq!(energies[0], 200.0);
        assert_eq!(k, 2);
    }
}
