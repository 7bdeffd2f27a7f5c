use std::sync::Arc;

use crate::lattice::LatticeDomain;

/// An axis-aligned box of sites, in site coordinates with inclusive bounds.
///
/// Regions restrict energies and partition functions to sub-volumes; the
/// subadditivity checks split a domain into two of these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl SiteBox {
    pub fn full(dom: &LatticeDomain) -> Self {
        let lo = dom.site_lo().to_vec();
        let hi: Vec<i64> = dom
            .site_lo()
            .iter()
            .zip(dom.site_ext())
            .map(|(&l, &e)| l + e - 1)
            .collect();
        SiteBox { lo, hi }
    }

    pub fn d(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, coords: &[i64]) -> bool {
        coords
            .iter()
            .enumerate()
            .all(|(k, &c)| c >= self.lo[k] && c <= self.hi[k])
    }

    pub fn n_sites(&self) -> usize {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| ((h - l + 1).max(0)) as usize)
            .product()
    }

    pub fn is_empty(&self) -> bool {
        self.n_sites() == 0
    }

    /// Site indices of the region inside a domain.
    pub fn sites(&self, dom: &Arc<LatticeDomain>) -> Vec<usize> {
        (0..dom.n_sites())
            .filter(|&i| self.contains(&dom.coords(i)))
            .collect()
    }

    /// Euclidean distance from a lattice point to this box (0 inside).
    pub fn dist(&self, coords: &[i64]) -> f64 {
        let mut sq = 0.0;
        for k in 0..self.d() {
            let below = (self.lo[k] - coords[k]).max(0);
            let above = (coords[k] - self.hi[k]).max(0);
            let gap = below.max(above) as f64;
            sq += gap * gap;
        }
        sq.sqrt()
    }

    /// Lattice distance from an interior site to the complement of the box.
    pub fn dist_to_complement(&self, coords: &[i64]) -> f64 {
        let mut best = i64::MAX;
        for k in 0..self.d() {
            let lo = coords[k] - self.lo[k];
            let hi = self.hi[k] - coords[k];
            best = best.min(1 + lo.min(hi));
        }
        best as f64
    }

    /// Boundary strip `S_R` of the region: sites within lattice distance `R`
    /// of the complement.
    pub fn strip_sites(&self, dom: &Arc<LatticeDomain>, r: f64) -> Vec<usize> {
        self.sites(dom)
            .into_iter()
            .filter(|&i| self.dist_to_complement(&dom.coords(i)) <= r)
            .collect()
    }

    /// Split along `axis` into lower (`<= cut`) and upper (`> cut`) halves;
    /// both halves stay inside the parent box.
    pub fn bisect(&self, axis: usize, cut: i64) -> (SiteBox, SiteBox) {
        let mut lo_half = self.clone();
        let mut hi_half = self.clone();
        lo_half.hi[axis] = cut.min(self.hi[axis]);
        hi_half.lo[axis] = (cut + 1).max(self.lo[axis]);
        (lo_half, hi_half)
    }
}

/// `|S(L1, L2)|`: the number of sites of the union within range `r0` of both
/// halves; the volume factor in the subadditivity defect.
pub fn overlap_strip_size(
    dom: &Arc<LatticeDomain>,
    whole: &SiteBox,
    a: &SiteBox,
    b: &SiteBox,
    r0: f64,
) -> usize {
    whole
        .sites(dom)
        .into_iter()
        .filter(|&i| {
            let c = dom.coords(i);
            a.dist(&c) <= r0 && b.dist(&c) <= r0
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::BoxShape;

    #[test]
    fn bisection_partitions_sites() {
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.125, 1).unwrap();
        let whole = SiteBox::full(&dom);
        let (a, b) = whole.bisect(0, 3);
        assert_eq!(a.n_sites() + b.n_sites(), whole.n_sites());
        let sa = a.sites(&dom);
        let sb = b.sites(&dom);
        assert_eq!(sa.len() + sb.len(), 64);
        assert!(sa.iter().all(|i| !sb.contains(i)));
    }

    #[test]
    fn overlap_strip_counts_cut_neighborhood() {
        // 8-site chain split at 3 with r0=1: sites at distance <= 1 from both
        // halves are {3, 4} on each side's border -> 2 sites.
        let dom =
            LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.125, 1).unwrap();
        let whole = SiteBox::full(&dom);
        let (a, b) = whole.bisect(0, 3);
        assert_eq!(overlap_strip_size(&dom, &whole, &a, &b, 1.0), 2);
        assert_eq!(overlap_strip_size(&dom, &whole, &a, &b, 2.0), 4);
    }

    #[test]
    fn empty_half_has_no_sites() {
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.25, 1).unwrap();
        let whole = SiteBox::full(&dom);
        let (a, b) = whole.bisect(0, 3); // all four sites in the lower half
        assert_eq!(a.n_sites(), 4);
        assert!(b.is_empty());
    }
}
