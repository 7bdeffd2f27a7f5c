use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{AffineMap, Configuration, LatticeDomain, Topology};
use crate::potential::{plaquette_signed_area, PotentialSpec};

use super::region::SiteBox;

/// Anything the samplers can target: total energy plus exact single-site
/// energy differences.
pub trait EnergyModel: Sync {
    fn energy(&self, x: &Configuration) -> f64;
    /// Energy change if `site` takes `new_vals`, everything else fixed.
    fn delta(&self, x: &Configuration, site: usize, new_vals: &[f64]) -> f64;
}

/// `H_Lambda(X)`: patch potentials summed over centers whose patch lies
/// inside the region, plus the optional plaquette term.
///
/// On torus domains configurations store the deviation from the affine
/// deformation; the deformation column is added to every bond difference, so
/// wrapped bonds need no special casing and the periodic constraint holds
/// exactly.
const NO_SITE: u32 = u32::MAX;

#[derive(Clone)]
pub struct Hamiltonian {
    spec: PotentialSpec,
    dom: Arc<LatticeDomain>,
    region: SiteBox,
    twist: Option<AffineMap>,
    patch_center: Vec<bool>,
    plaq_center: Vec<bool>,
    /// forward/backward neighbor tables, `NO_SITE` when absent or outside
    /// the region; indexed `site * d + axis`
    fwd: Vec<u32>,
    bwd: Vec<u32>,
    /// corner sites of each plaquette center (i, i+e1, i+e2, i+e1+e2)
    plaq_corners: Vec<[u32; 4]>,
    plaq_id: Vec<u32>,
    /// plaquette centers touching each site
    plaq_of_site: Vec<Vec<u32>>,
}

impl Hamiltonian {
    pub fn new(spec: PotentialSpec, dom: &Arc<LatticeDomain>) -> Result<Self> {
        let region = SiteBox::full(dom);
        Self::on_region(spec, dom, region)
    }

    pub fn on_region(
        spec: PotentialSpec,
        dom: &Arc<LatticeDomain>,
        region: SiteBox,
    ) -> Result<Self> {
        let twist = None;
        Self::build(spec, dom, region, twist)
    }

    /// Torus Hamiltonian for the periodic formulation: configurations are
    /// deviations from the affine map `l`.
    pub fn twisted_torus(
        spec: PotentialSpec,
        dom: &Arc<LatticeDomain>,
        l: AffineMap,
    ) -> Result<Self> {
        assert_eq!(dom.topology(), Topology::Torus);
        let region = SiteBox::full(dom);
        Self::build(spec, dom, region, Some(l))
    }

    fn build(
        spec: PotentialSpec,
        dom: &Arc<LatticeDomain>,
        region: SiteBox,
        twist: Option<AffineMap>,
    ) -> Result<Self> {
        assert_eq!(spec.d, dom.d());
        assert_eq!(spec.m, dom.m());
        let torus = dom.topology() == Topology::Torus;
        if spec.null_weight != 0.0 && (spec.d != 2 || spec.m != 2) {
            return Err(Error::RequiresPlanar {
                d: spec.d,
                m: spec.m,
            });
        }
        if spec.null_weight != 0.0 && torus {
            return Err(Error::UnsupportedDimension {
                d: spec.d,
                supported: "plaquette term on box domains",
            });
        }
        let offsets = spec.patch.offsets(spec.d);
        let mut patch_center = vec![false; dom.n_sites()];
        for i in 0..dom.n_sites() {
            let c = dom.coords(i);
            if !region.contains(&c) {
                continue;
            }
            patch_center[i] = torus
                || offsets.iter().all(|off| {
                    let shifted: Vec<i64> = c.iter().zip(off).map(|(a, b)| a + b).collect();
                    region.contains(&shifted) && dom.site_index(&shifted).is_some()
                });
        }
        let mut plaq_center = vec![false; dom.n_sites()];
        if spec.null_weight != 0.0 {
            for i in 0..dom.n_sites() {
                let c = dom.coords(i);
                plaq_center[i] = region.contains(&c)
                    && [[1i64, 0], [0, 1], [1, 1]].iter().all(|off| {
                        let s = [c[0] + off[0], c[1] + off[1]];
                        region.contains(&s) && dom.site_index(&s).is_some()
                    });
            }
        }
        // neighbor tables: bonds restricted to the region
        let d = spec.d;
        let n = dom.n_sites();
        let in_region: Vec<bool> = (0..n).map(|i| region.contains(&dom.coords(i))).collect();
        let mut fwd = vec![NO_SITE; n * d];
        let mut bwd = vec![NO_SITE; n * d];
        for i in 0..n {
            if !in_region[i] {
                continue;
            }
            for k in 0..d {
                if let Some((j, _)) = dom.neighbor(i, k, 1) {
                    if in_region[j] {
                        fwd[i * d + k] = j as u32;
                    }
                }
                if let Some((j, _)) = dom.neighbor(i, k, -1) {
                    if in_region[j] {
                        bwd[i * d + k] = j as u32;
                    }
                }
            }
        }
        let mut plaq_corners = Vec::new();
        let mut plaq_id = vec![NO_SITE; n];
        let mut plaq_of_site = vec![Vec::new(); n];
        if spec.null_weight != 0.0 {
            for i in 0..n {
                if !plaq_center[i] {
                    continue;
                }
                let c = dom.coords(i);
                let corner = |dx: i64, dy: i64| {
                    dom.site_index(&[c[0] + dx, c[1] + dy]).unwrap() as u32
                };
                let id = plaq_corners.len() as u32;
                plaq_id[i] = id;
                let corners = [corner(0, 0), corner(1, 0), corner(0, 1), corner(1, 1)];
                plaq_corners.push(corners);
                for &s in &corners {
                    plaq_of_site[s as usize].push(id);
                }
            }
        }
        Ok(Hamiltonian {
            spec,
            dom: Arc::clone(dom),
            region,
            twist,
            patch_center,
            plaq_center,
            fwd,
            bwd,
            plaq_corners,
            plaq_id,
            plaq_of_site,
        })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }
    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.dom
    }
    pub fn region(&self) -> &SiteBox {
        &self.region
    }
    pub fn twist(&self) -> Option<&AffineMap> {
        self.twist.as_ref()
    }
    pub fn is_patch_center(&self, site: usize) -> bool {
        self.patch_center[site]
    }
    pub fn n_patch_centers(&self) -> usize {
        self.patch_center.iter().filter(|&&b| b).count()
    }

    /// Region sites (the integration variables of the partition function).
    pub fn region_sites(&self) -> Vec<usize> {
        self.region.sites(&self.dom)
    }

    #[inline]
    fn value_of<'a>(
        &self,
        x: &'a Configuration,
        site: usize,
        subst: Option<(usize, &'a [f64])>,
    ) -> &'a [f64] {
        match subst {
            Some((s, v)) if s == site => v,
            _ => x.values(site),
        }
    }

    /// Bond difference along `axis` at center `j`, with twist applied.
    #[inline]
    fn bond_diff(
        &self,
        x: &Configuration,
        j: usize,
        axis: usize,
        subst: Option<(usize, &[f64])>,
        out: &mut [f64],
    ) -> bool {
        let m = self.spec.m;
        let nb = self.fwd[j * self.spec.d + axis];
        if nb == NO_SITE {
            return false;
        }
        let nb = nb as usize;
        let a = self.value_of(x, j, subst);
        let b = self.value_of(x, nb, subst);
        for alpha in 0..m {
            out[alpha] = b[alpha] - a[alpha];
        }
        if let Some(l) = &self.twist {
            for alpha in 0..m {
                out[alpha] += l.entry(alpha, axis);
            }
        }
        true
    }

    #[inline]
    fn bond_term(&self, diff: &[f64]) -> f64 {
        let sq: f64 = diff.iter().map(|v| v * v).sum();
        let p = self.spec.exponent();
        if p == 2.0 {
            sq
        } else {
            sq.sqrt().powf(p)
        }
    }

    fn patch_energy_at(
        &self,
        x: &Configuration,
        j: usize,
        subst: Option<(usize, &[f64])>,
    ) -> f64 {
        let m = self.spec.m;
        let mut buf = [0.0f64; 2];
        let mut total = 0.0;
        for k in 0..self.spec.d {
            if self.bond_diff(x, j, k, subst, &mut buf[..m]) {
                total += self.bond_term(&buf[..m]);
            }
        }
        total
    }

    fn plaquette_area_at(
        &self,
        x: &Configuration,
        j: usize,
        subst: Option<(usize, &[f64])>,
    ) -> f64 {
        let corners = &self.plaq_corners[self.plaq_id[j] as usize];
        let x0 = self.value_of(x, corners[0] as usize, subst);
        let x1 = self.value_of(x, corners[1] as usize, subst);
        let x2 = self.value_of(x, corners[2] as usize, subst);
        let x3 = self.value_of(x, corners[3] as usize, subst);
        plaquette_signed_area(x0, x1, x2, x3)
    }

    /// Total energy, including the plaquette term when configured.
    pub fn energy_full(&self, x: &Configuration) -> f64 {
        let mut total = 0.0;
        for j in 0..self.dom.n_sites() {
            if self.patch_center[j] {
                total += self.patch_energy_at(x, j, None);
            }
        }
        if self.spec.null_weight != 0.0 {
            total += self.spec.null_weight * self.null_plaquette_sum(x);
        }
        total
    }

    /// The plaquette sum `sum_j (1 - V(X at plaquette j))`.
    pub fn null_plaquette_sum(&self, x: &Configuration) -> f64 {
        let mut total = 0.0;
        for j in 0..self.dom.n_sites() {
            if self.plaq_center[j] {
                total += 1.0 - self.plaquette_area_at(x, j, None);
            }
        }
        total
    }

    /// Weighted plaquette energy `M * sum (1 - V)`.
    pub fn null_energy(&self, x: &Configuration) -> f64 {
        self.spec.null_weight * self.null_plaquette_sum(x)
    }

    /// `sum over qualified centers of |grad X(j)|^p` (the lower-growth
    /// envelope used for truncation and tightness bounds).
    pub fn grad_p_sum(&self, x: &Configuration, p: f64) -> f64 {
        let m = self.spec.m;
        let mut buf = [0.0f64; 2];
        let mut total = 0.0;
        for j in 0..self.dom.n_sites() {
            if !self.patch_center[j] {
                continue;
            }
            for k in 0..self.spec.d {
                if self.bond_diff(x, j, k, None, &mut buf[..m]) {
                    let sq: f64 = buf[..m].iter().map(|v| v * v).sum();
                    total += sq.sqrt().powf(p);
                }
            }
        }
        total
    }

    /// Patch-energy sum restricted to centers in `centers`.
    pub fn energy_over_centers(&self, x: &Configuration, centers: &[usize]) -> f64 {
        centers
            .iter()
            .filter(|&&j| self.patch_center[j])
            .map(|&j| self.patch_energy_at(x, j, None))
            .sum()
    }
}

impl EnergyModel for Hamiltonian {
    fn energy(&self, x: &Configuration) -> f64 {
        self.energy_full(x)
    }

    fn delta(&self, x: &Configuration, site: usize, new_vals: &[f64]) -> f64 {
        let subst = Some((site, new_vals));
        let mut old = 0.0;
        let mut new = 0.0;
        // bonds with center `site` and centers one back along each axis
        if self.patch_center[site] {
            old += self.patch_energy_at(x, site, None);
            new += self.patch_energy_at(x, site, subst);
        }
        let m = self.spec.m;
        let mut buf = [0.0f64; 2];
        for k in 0..self.spec.d {
            let back = self.bwd[site * self.spec.d + k];
            if back != NO_SITE && self.patch_center[back as usize] {
                if self.bond_diff(x, back as usize, k, None, &mut buf[..m]) {
                    old += self.bond_term(&buf[..m]);
                }
                if self.bond_diff(x, back as usize, k, subst, &mut buf[..m]) {
                    new += self.bond_term(&buf[..m]);
                }
            }
        }
        if self.spec.null_weight != 0.0 {
            for &pid in &self.plaq_of_site[site] {
                let c = self.plaq_corners[pid as usize];
                let old_v = plaquette_signed_area(
                    self.value_of(x, c[0] as usize, None),
                    self.value_of(x, c[1] as usize, None),
                    self.value_of(x, c[2] as usize, None),
                    self.value_of(x, c[3] as usize, None),
                );
                let new_v = plaquette_signed_area(
                    self.value_of(x, c[0] as usize, subst),
                    self.value_of(x, c[1] as usize, subst),
                    self.value_of(x, c[2] as usize, subst),
                    self.value_of(x, c[3] as usize, subst),
                );
                old -= self.spec.null_weight * old_v;
                new -= self.spec.null_weight * new_v;
            }
        }
        new - old
    }
}

/// On-site quadratic anchor `sum_i |X(i) - anchor(i)|^2` over region sites.
///
/// This is the exactly solvable reference for thermodynamic integration: its
/// partition function factorizes over sites, so closed forms survive product
/// constraint sets.
#[derive(Clone)]
pub struct OnsiteQuadratic {
    anchor: Configuration,
    sites: Vec<bool>,
}

impl OnsiteQuadratic {
    pub fn new(anchor: Configuration, region: &SiteBox) -> Self {
        let dom = Arc::clone(anchor.domain());
        let sites = (0..dom.n_sites())
            .map(|i| region.contains(&dom.coords(i)))
            .collect();
        OnsiteQuadratic { anchor, sites }
    }

    pub fn anchor(&self) -> &Configuration {
        &self.anchor
    }
}

impl EnergyModel for OnsiteQuadratic {
    fn energy(&self, x: &Configuration) -> f64 {
        let mut total = 0.0;
        for i in 0..x.domain().n_sites() {
            if self.sites[i] {
                total += x
                    .values(i)
                    .iter()
                    .zip(self.anchor.values(i))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
        }
        total
    }

    fn delta(&self, x: &Configuration, site: usize, new_vals: &[f64]) -> f64 {
        if !self.sites[site] {
            return 0.0;
        }
        let anchor = self.anchor.values(site);
        let old: f64 = x
            .values(site)
            .iter()
            .zip(anchor)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let new: f64 = new_vals
            .iter()
            .zip(anchor)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        new - old
    }
}

/// Convex path `(1-lambda) H_ref + lambda H_target` for thermodynamic
/// integration.
pub struct PathEnergy<'a> {
    pub reference: &'a dyn EnergyModel,
    pub target: &'a dyn EnergyModel,
    pub lambda: f64,
}

impl EnergyModel for PathEnergy<'_> {
    fn energy(&self, x: &Configuration) -> f64 {
        (1.0 - self.lambda) * self.reference.energy(x) + self.lambda * self.target.energy(x)
    }

    fn delta(&self, x: &Configuration, site: usize, new_vals: &[f64]) -> f64 {
        (1.0 - self.lambda) * self.reference.delta(x, site, new_vals)
            + self.lambda * self.target.delta(x, site, new_vals)
    }
}

/// `H_Lambda(X | Y)`: the Gibbs-specification energy of a window, summing
/// over every patch that meets the window with `X` inside and `Y` outside.
///
/// Construction fails if any such patch leaves the ambient domain: the
/// collar values would be missing.
pub struct ConditionedHamiltonian {
    spec: PotentialSpec,
    dom: Arc<LatticeDomain>,
    window_mask: Vec<bool>,
    centers: Vec<usize>,
    plaq_centers: Vec<usize>,
    boundary: Configuration,
}

impl ConditionedHamiltonian {
    pub fn new(
        spec: PotentialSpec,
        window: &[usize],
        boundary: Configuration,
    ) -> Result<Self> {
        let dom = Arc::clone(boundary.domain());
        assert_eq!(spec.d, dom.d());
        assert_eq!(spec.m, dom.m());
        let mut window_mask = vec![false; dom.n_sites()];
        for &i in window {
            window_mask[i] = true;
        }
        let offsets = spec.patch.offsets(spec.d);
        // candidate centers: window dilated by the negated patch offsets
        let mut center_mask = vec![false; dom.n_sites()];
        let mut centers = Vec::new();
        for &i in window {
            let c = dom.coords(i);
            for off in &offsets {
                let cand: Vec<i64> = c.iter().zip(off).map(|(a, b)| a - b).collect();
                match dom.site_index(&cand) {
                    Some(j) => {
                        if !center_mask[j] {
                            center_mask[j] = true;
                            centers.push(j);
                        }
                    }
                    None => return Err(Error::MissingCollar { site: cand }),
                }
            }
        }
        // every patch site of every center must exist in the ambient domain
        for &j in &centers {
            let c = dom.coords(j);
            for off in &offsets {
                let s: Vec<i64> = c.iter().zip(off).map(|(a, b)| a + b).collect();
                if dom.site_index(&s).is_none() {
                    return Err(Error::MissingCollar { site: s });
                }
            }
        }
        centers.sort_unstable();
        let mut plaq_centers = Vec::new();
        if spec.null_weight != 0.0 {
            if spec.d != 2 || spec.m != 2 {
                return Err(Error::RequiresPlanar {
                    d: spec.d,
                    m: spec.m,
                });
            }
            let mut mask = vec![false; dom.n_sites()];
            for &i in window {
                let c = dom.coords(i);
                for off in [[0i64, 0], [-1, 0], [0, -1], [-1, -1]] {
                    let cand = [c[0] + off[0], c[1] + off[1]];
                    if let Some(j) = dom.site_index(&cand) {
                        let ok = [[1i64, 0], [0, 1], [1, 1]].iter().all(|o| {
                            dom.site_index(&[cand[0] + o[0], cand[1] + o[1]]).is_some()
                        });
                        if ok && !mask[j] {
                            mask[j] = true;
                            plaq_centers.push(j);
                        }
                    }
                }
            }
            plaq_centers.sort_unstable();
        }
        Ok(ConditionedHamiltonian {
            spec,
            dom,
            window_mask,
            centers,
            plaq_centers,
            boundary,
        })
    }

    pub fn window_mask(&self) -> &[bool] {
        &self.window_mask
    }

    #[inline]
    fn glued<'a>(
        &'a self,
        x: &'a Configuration,
        site: usize,
        subst: Option<(usize, &'a [f64])>,
    ) -> &'a [f64] {
        if let Some((s, v)) = subst {
            if s == site {
                return v;
            }
        }
        if self.window_mask[site] {
            x.values(site)
        } else {
            self.boundary.values(site)
        }
    }

    fn patch_energy_at(
        &self,
        x: &Configuration,
        j: usize,
        subst: Option<(usize, &[f64])>,
    ) -> f64 {
        let m = self.spec.m;
        let p = self.spec.exponent();
        let c = self.dom.coords(j);
        let mut total = 0.0;
        for k in 0..self.spec.d {
            let mut nb = c.clone();
            nb[k] += 1;
            let nb = self.dom.site_index(&nb).expect("validated at build");
            let a = self.glued(x, j, subst);
            let b = self.glued(x, nb, subst);
            let sq: f64 = (0..m).map(|al| (b[al] - a[al]) * (b[al] - a[al])).sum();
            total += if p == 2.0 { sq } else { sq.sqrt().powf(p) };
        }
        total
    }

    fn plaquette_term_at(
        &self,
        x: &Configuration,
        j: usize,
        subst: Option<(usize, &[f64])>,
    ) -> f64 {
        let c = self.dom.coords(j);
        let id = |dx: i64, dy: i64| self.dom.site_index(&[c[0] + dx, c[1] + dy]).unwrap();
        1.0 - plaquette_signed_area(
            self.glued(x, j, subst),
            self.glued(x, id(1, 0), subst),
            self.glued(x, id(0, 1), subst),
            self.glued(x, id(1, 1), subst),
        )
    }
}

impl EnergyModel for ConditionedHamiltonian {
    fn energy(&self, x: &Configuration) -> f64 {
        let mut total: f64 = self
            .centers
            .iter()
            .map(|&j| self.patch_energy_at(x, j, None))
            .sum();
        total += self.spec.null_weight
            * self
                .plaq_centers
                .iter()
                .map(|&j| self.plaquette_term_at(x, j, None))
                .sum::<f64>();
        total
    }

    fn delta(&self, x: &Configuration, site: usize, new_vals: &[f64]) -> f64 {
        debug_assert!(self.window_mask[site]);
        let subst = Some((site, new_vals));
        let c = self.dom.coords(site);
        let offsets = self.spec.patch.offsets(self.spec.d);
        let mut old = 0.0;
        let mut new = 0.0;
        for off in &offsets {
            let cand: Vec<i64> = c.iter().zip(off).map(|(a, b)| a - b).collect();
            if let Some(j) = self.dom.site_index(&cand) {
                if self.centers.binary_search(&j).is_ok() {
                    old += self.patch_energy_at(x, j, None);
                    new += self.patch_energy_at(x, j, subst);
                }
            }
        }
        if self.spec.null_weight != 0.0 {
            for off in [[0i64, 0], [-1, 0], [0, -1], [-1, -1]] {
                if let Some(j) = self.dom.site_index(&[c[0] + off[0], c[1] + off[1]]) {
                    if self.plaq_centers.binary_search(&j).is_ok() {
                        old += self.spec.null_weight * self.plaquette_term_at(x, j, None);
                        new += self.spec.null_weight * self.plaquette_term_at(x, j, subst);
                    }
                }
            }
        }
        new - old
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::lattice::BoxShape;
    use crate::potential::PatchKind;
    use std::collections::HashMap;

    fn chain(n: usize) -> Arc<LatticeDomain> {
        LatticeDomain::build(
            BoxShape::new(vec![0.0], vec![1.0]),
            1.0 / n as f64,
            1,
        )
        .unwrap()
    }

    #[test]
    fn constant_configuration_has_zero_energy() {
        let dom = chain(10);
        let ham = Hamiltonian::new(PotentialSpec::gaussian(1, 1), &dom).unwrap();
        let mut x = Configuration::zeros(&dom);
        for v in x.raw_mut() {
            *v = 3.25;
        }
        assert_eq!(ham.energy(&x), 0.0);
    }

    #[test]
    fn affine_chain_energy_counts_bonds() {
        // Lambda = {0..9}, bond patch A = {0,1}, gaussian, X(i) = 2i:
        // 9 bonds x 4 = 36.
        let dom = chain(10);
        let spec = PotentialSpec::gaussian(1, 1).with_forward_patch();
        let ham = Hamiltonian::new(spec, &dom).unwrap();
        let x = AffineMap::linear(1, 1, vec![2.0]).lattice_config(&dom);
        assert_eq!(ham.energy(&x), 36.0);
    }

    #[test]
    fn random_chain_matches_patchwise_resummation() {
        let dom = chain(3);
        let spec = PotentialSpec::gaussian(1, 1).with_forward_patch();
        let ham = Hamiltonian::new(spec.clone(), &dom).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = Configuration::zeros(&dom);
        for v in x.raw_mut() {
            *v = rng.random::<f64>() * 4.0 - 2.0;
        }
        // independent re-summation through the public patch API
        let mut brute = 0.0;
        for j in 0..2i64 {
            let mut vals: HashMap<Vec<i64>, Vec<f64>> = HashMap::new();
            for off in PatchKind::ForwardBonds.offsets(1) {
                let idx = dom.site_index(&[j + off[0]]).unwrap();
                vals.insert(off, x.values(idx).to_vec());
            }
            brute += spec.eval_patch(&vals).unwrap();
        }
        assert!((ham.energy(&x) - brute).abs() < 1e-12);
    }

    #[test]
    fn cross_patch_restricts_centers_to_interior() {
        let dom = chain(10);
        let ham = Hamiltonian::new(PotentialSpec::gaussian(1, 1), &dom).unwrap();
        // full cross in 1-D has offsets {0, 1, -1}: centers 1..=8
        assert_eq!(ham.n_patch_centers(), 8);
    }

    #[test]
    fn delta_energy_is_exact() {
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.125, 2).unwrap();
        let spec = PotentialSpec::gaussian(2, 2);
        let ham = Hamiltonian::new(spec, &dom).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = Configuration::zeros(&dom);
        for v in x.raw_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        let mut e = ham.energy(&x);
        for _ in 0..2000 {
            let site = rng.random_range(0..dom.n_sites());
            let new = [rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0];
            let d = ham.delta(&x, site, &new);
            x.values_mut(site).copy_from_slice(&new);
            e += d;
            let fresh = ham.energy(&x);
            assert!(
                (e - fresh).abs() < 1e-9 * (1.0 + fresh.abs()),
                "drift: {e} vs {fresh}"
            );
        }
    }

    #[test]
    fn conditioned_empty_window_is_zero() {
        let dom = chain(10);
        let y = Configuration::zeros(&dom);
        let ch = ConditionedHamiltonian::new(PotentialSpec::gaussian(1, 1), &[], y).unwrap();
        let x = Configuration::zeros(&dom);
        assert_eq!(ch.energy(&x), 0.0);
    }

    #[test]
    fn conditioned_gluing_identity() {
        // X = Y on the window: H_Lambda(Y|Y) equals the plain patch sum over
        // patches meeting the window.
        let dom = chain(10);
        let spec = PotentialSpec::gaussian(1, 1).with_forward_patch();
        let l = AffineMap::linear(1, 1, vec![1.5]);
        let y = l.lattice_config(&dom);
        let window: Vec<usize> = [4usize, 5].into_iter().collect();
        let ch = ConditionedHamiltonian::new(spec, &window, y.clone()).unwrap();
        // patches meeting {4,5} with A = {0,1}: centers 3,4,5 -> 3 bonds of slope 1.5
        assert!((ch.energy(&y) - 3.0 * 1.5 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn conditioned_single_site_two_bonds() {
        // Lambda = {1}, A = {0,1}, gaussian, Y = 0, X(1) = t -> 2 t^2
        let dom = chain(3);
        let spec = PotentialSpec::gaussian(1, 1).with_forward_patch();
        let y = Configuration::zeros(&dom);
        let ch = ConditionedHamiltonian::new(spec, &[1], y).unwrap();
        let mut x = Configuration::zeros(&dom);
        let t = 1.7;
        x.values_mut(1)[0] = t;
        assert!((ch.energy(&x) - 2.0 * t * t).abs() < 1e-12);
    }

    #[test]
    fn conditioned_window_touching_edge_errors() {
        let dom = chain(10);
        let spec = PotentialSpec::gaussian(1, 1);
        let y = Configuration::zeros(&dom);
        match ConditionedHamiltonian::new(spec, &[0], y) {
            Err(Error::MissingCollar { .. }) => {}
            other => panic!("expected MissingCollar, got {:?}", other.err()),
        }
    }

    #[test]
    fn conditioned_delta_is_exact() {
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.125, 1).unwrap();
        let spec = PotentialSpec::gaussian(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut y = Configuration::zeros(&dom);
        for v in y.raw_mut() {
            *v = rng.random::<f64>();
        }
        let window: Vec<usize> = (0..dom.n_sites())
            .filter(|&i| {
                let c = dom.coords(i);
                (2..=4).contains(&c[0]) && (2..=4).contains(&c[1])
            })
            .collect();
        let ch = ConditionedHamiltonian::new(spec, &window, y.clone()).unwrap();
        let mut x = y.clone();
        let mut e = ch.energy(&x);
        for _ in 0..500 {
            let site = window[rng.random_range(0..window.len())];
            let new = [rng.random::<f64>() * 2.0 - 1.0];
            e += ch.delta(&x, site, &new);
            x.values_mut(site).copy_from_slice(&new);
            let fresh = ch.energy(&x);
            assert!((e - fresh).abs() < 1e-9, "{e} vs {fresh}");
        }
    }

    #[test]
    fn null_energy_identity_and_zero_maps() {
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.25, 2).unwrap();
        let m_weight = 2.5;
        let spec = PotentialSpec::gaussian(2, 2).with_null_weight(m_weight);
        let ham = Hamiltonian::new(spec, &dom).unwrap();
        let id = AffineMap::identity(2).lattice_config(&dom);
        assert!(ham.null_energy(&id).abs() < 1e-12);
        let zero = Configuration::zeros(&dom);
        // 3x3 plaquette centers on a 4x4 site box
        assert!((ham.null_energy(&zero) - m_weight * 9.0).abs() < 1e-12);
    }

    #[test]
    fn null_energy_depends_only_on_boundary_layer() {
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.125, 2).unwrap();
        let spec = PotentialSpec::gaussian(2, 2).with_null_weight(1.0);
        let ham = Hamiltonian::new(spec, &dom).unwrap();
        let strip = dom.boundary_strip(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut x = Configuration::zeros(&dom);
        for v in x.raw_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        let h0 = ham.null_energy(&x);
        // resample the interior; the weighted plaquette sum must not move
        for _ in 0..100 {
            let mut y = x.clone();
            for i in 0..dom.n_sites() {
                if !strip.contains(i) {
                    for v in y.values_mut(i) {
                        *v = rng.random::<f64>() * 4.0 - 2.0;
                    }
                }
            }
            assert!((ham.null_energy(&y) - h0).abs() < 1e-9);
        }
    }

    #[test]
    fn torus_twist_cancels_for_deviations() {
        // On the twisted torus the energy of the zero deviation equals
        // n_sites * sum_k |A e_k|^2 for the quadratic potential.
        let dom = LatticeDomain::build_torus(2, 0.25, 2).unwrap();
        let l = AffineMap::linear(2, 2, vec![1.0, 0.5, -0.25, 2.0]);
        let ham =
            Hamiltonian::twisted_torus(PotentialSpec::gaussian(2, 2), &dom, l.clone()).unwrap();
        let phi = Configuration::zeros(&dom);
        let want = dom.n_sites() as f64 * l.columns_sq();
        assert!((ham.energy(&phi) - want).abs() < 1e-10);
    }
}
