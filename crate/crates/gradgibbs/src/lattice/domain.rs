use std::sync::Arc;

use crate::error::{Error, Result};

/// Axis-aligned half-open box `[lo_1, hi_1) x ... x [lo_d, hi_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxShape {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxShape {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        BoxShape { lo, hi }
    }

    /// Unit cube `[0,1)^d`.
    pub fn unit(d: usize) -> Self {
        BoxShape {
            lo: vec![0.0; d],
            hi: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a).max(0.0))
            .product()
    }

    /// Surface measure: endpoint count in d=1, perimeter in d=2.
    pub fn boundary_measure(&self) -> f64 {
        match self.dim() {
            1 => 2.0,
            2 => 2.0 * ((self.hi[0] - self.lo[0]) + (self.hi[1] - self.lo[1])),
            _ => unreachable!("domains are 1- or 2-dimensional"),
        }
    }

    /// Distance from an interior point to the complement of the box.
    pub fn dist_to_complement(&self, x: &[f64]) -> f64 {
        let mut dist = f64::INFINITY;
        for k in 0..self.dim() {
            dist = dist.min(x[k] - self.lo[k]).min(self.hi[k] - x[k]);
        }
        dist.max(0.0)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|k| x[k] >= self.lo[k] && x[k] < self.hi[k])
    }
}

/// Whether the site box is an open patch of `Z^d` or a torus.
///
/// Torus domains wrap every bond; the affine deformation enters through a
/// per-crossing shift handled by the Hamiltonian, so membership in the
/// periodic constraint set is exact by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Box,
    Torus,
}

/// The discrete domain: `Z^d` sites whose `eps`-rescaling lands in the shape.
///
/// Sites form an integer box (shapes are boxes), enumerated lexicographically;
/// `site_index` is plain stride arithmetic and stable across runs.
#[derive(Debug, Clone)]
pub struct LatticeDomain {
    d: usize,
    m: usize,
    eps: f64,
    shape: BoxShape,
    topology: Topology,
    site_lo: Vec<i64>,
    site_ext: Vec<i64>,
    strides: Vec<usize>,
    n_sites: usize,
}

fn snap_ceil(x: f64) -> i64 {
    (x - 1e-9).ceil() as i64
}

impl LatticeDomain {
    /// Enumerate `Z^d \cap (1/eps) * shape` with target dimension `m`.
    pub fn build(shape: BoxShape, eps: f64, m: usize) -> Result<Arc<Self>> {
        let d = shape.dim();
        if !(1..=2).contains(&d) || !(1..=2).contains(&m) {
            return Err(Error::UnsupportedDimension {
                d: d.max(m),
                supported: "d, m in {1, 2}",
            });
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::ScaleOutOfRange { eps });
        }
        let mut site_lo = Vec::with_capacity(d);
        let mut site_ext = Vec::with_capacity(d);
        for k in 0..d {
            let lo = snap_ceil(shape.lo[k] / eps);
            let hi_excl = snap_ceil(shape.hi[k] / eps);
            if hi_excl <= lo {
                return Err(Error::EmptyLattice { eps });
            }
            site_lo.push(lo);
            site_ext.push(hi_excl - lo);
        }
        Ok(Arc::new(Self::from_parts(
            d,
            m,
            eps,
            shape,
            Topology::Box,
            site_lo,
            site_ext,
        )))
    }

    /// Torus over `[0,1)^d` at scale `eps = 1/n`; used by the periodic
    /// boundary formulation.
    pub fn build_torus(d: usize, eps: f64, m: usize) -> Result<Arc<Self>> {
        if !(1..=2).contains(&d) || !(1..=2).contains(&m) {
            return Err(Error::UnsupportedDimension {
                d: d.max(m),
                supported: "d, m in {1, 2}",
            });
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::ScaleOutOfRange { eps });
        }
        let n = (1.0 / eps).round();
        if ((1.0 / eps) - n).abs() > 1e-9 || n < 2.0 {
            return Err(Error::NonIntegralTorus { eps });
        }
        let n = n as i64;
        Ok(Arc::new(Self::from_parts(
            d,
            m,
            eps,
            BoxShape::unit(d),
            Topology::Torus,
            vec![0; d],
            vec![n; d],
        )))
    }

    fn from_parts(
        d: usize,
        m: usize,
        eps: f64,
        shape: BoxShape,
        topology: Topology,
        site_lo: Vec<i64>,
        site_ext: Vec<i64>,
    ) -> Self {
        let mut strides = vec![0usize; d];
        let mut acc = 1usize;
        // lexicographic: last axis fastest
        for k in (0..d).rev() {
            strides[k] = acc;
            acc *= site_ext[k] as usize;
        }
        LatticeDomain {
            d,
            m,
            eps,
            shape,
            topology,
            site_lo,
            site_ext,
            strides,
            n_sites: acc,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn shape(&self) -> &BoxShape {
        &self.shape
    }
    pub fn topology(&self) -> Topology {
        self.topology
    }
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }
    pub fn site_lo(&self) -> &[i64] {
        &self.site_lo
    }
    pub fn site_ext(&self) -> &[i64] {
        &self.site_ext
    }

    pub fn coords(&self, idx: usize) -> Vec<i64> {
        debug_assert!(idx < self.n_sites);
        let mut rem = idx;
        let mut out = vec![0i64; self.d];
        for k in 0..self.d {
            let q = rem / self.strides[k];
            rem %= self.strides[k];
            out[k] = self.site_lo[k] + q as i64;
        }
        out
    }

    pub fn site_index(&self, coords: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for k in 0..self.d {
            let off = coords[k] - self.site_lo[k];
            if off < 0 || off >= self.site_ext[k] {
                return None;
            }
            idx += off as usize * self.strides[k];
        }
        Some(idx)
    }

    /// Macroscopic position `eps * i` of a site.
    pub fn position(&self, idx: usize) -> Vec<f64> {
        self.coords(idx).iter().map(|&c| c as f64 * self.eps).collect()
    }

    /// Neighbor of `idx` one step along `axis` in direction `dir`.
    ///
    /// Returns the neighbor index and, for torus domains, the seam-crossing
    /// count (`±1` when the bond wraps).
    pub fn neighbor(&self, idx: usize, axis: usize, dir: i64) -> Option<(usize, i64)> {
        let mut c = self.coords(idx);
        c[axis] += dir;
        match self.topology {
            Topology::Box => self.site_index(&c).map(|j| (j, 0)),
            Topology::Torus => {
                let n = self.site_ext[axis];
                let mut crossing = 0i64;
                if c[axis] < 0 {
                    c[axis] += n;
                    crossing = -1;
                } else if c[axis] >= n {
                    c[axis] -= n;
                    crossing = 1;
                }
                self.site_index(&c).map(|j| (j, crossing))
            }
        }
    }

    /// Offset site `i + v`, with torus wrapping; the second component counts
    /// seam crossings per axis (always zero on boxes).
    pub fn offset(&self, idx: usize, v: &[i64]) -> Option<(usize, Vec<i64>)> {
        let mut c = self.coords(idx);
        let mut crossings = vec![0i64; self.d];
        for k in 0..self.d {
            c[k] += v[k];
            if self.topology == Topology::Torus {
                let n = self.site_ext[k];
                while c[k] < 0 {
                    c[k] += n;
                    crossings[k] -= 1;
                }
                while c[k] >= n {
                    c[k] -= n;
                    crossings[k] += 1;
                }
            }
        }
        self.site_index(&c).map(|j| (j, crossings))
    }

    /// Euclidean distance from a site to the complement `Z^d \ Omega_eps`.
    ///
    /// For a box of sites the nearest outside point lies straight out along
    /// one axis, so the distance is `min_k (1 + min(i_k - lo_k, hi_k - i_k))`.
    /// Torus domains have no complement; the distance is infinite.
    pub fn lattice_dist_to_complement(&self, idx: usize) -> f64 {
        if self.topology == Topology::Torus {
            return f64::INFINITY;
        }
        let c = self.coords(idx);
        let mut best = i64::MAX;
        for k in 0..self.d {
            let lo = c[k] - self.site_lo[k];
            let hi = self.site_lo[k] + self.site_ext[k] - 1 - c[k];
            best = best.min(1 + lo.min(hi));
        }
        best as f64
    }

    /// `S_R(Lambda)`: sites within lattice distance `R` of the complement.
    pub fn boundary_strip(self: &Arc<Self>, r: f64) -> Strip {
        assert!(r >= 1.0, "strip radius must be >= 1");
        self.strip_by(|dom, i| dom.lattice_dist_to_complement(i) <= r, r)
    }

    /// Strip measured in the continuum: sites with
    /// `eps^{-1} dist(eps*i, complement of shape) <= r`.
    pub fn domain_strip(self: &Arc<Self>, r: f64) -> Strip {
        self.strip_by(
            |dom, i| {
                let x = dom.position(i);
                dom.shape.dist_to_complement(&x) / dom.eps <= r
            },
            r,
        )
    }

    fn strip_by(self: &Arc<Self>, pred: impl Fn(&Self, usize) -> bool, r: f64) -> Strip {
        let mut sites = Vec::new();
        let mut mask = vec![false; self.n_sites];
        for i in 0..self.n_sites {
            if pred(self, i) {
                sites.push(i);
                mask[i] = true;
            }
        }
        Strip {
            domain: Arc::clone(self),
            radius: r,
            sites,
            mask,
        }
    }

    /// Measured box constant: `max over rho` of `|S_{rho/eps}| eps^d / (|bd Omega| rho)`.
    ///
    /// The strip `S_{rho/eps}` collects sites whose position is within `rho`
    /// of the boundary; the bound certified is linear in `rho`.
    pub fn boundary_count_constant(self: &Arc<Self>, rho_list: &[f64]) -> f64 {
        let surf = self.shape.boundary_measure();
        let mut worst: f64 = 0.0;
        for &rho in rho_list {
            let strip = self.domain_strip(rho / self.eps);
            let lhs = strip.len() as f64 * self.eps.powi(self.d as i32);
            worst = worst.max(lhs / (surf * rho));
        }
        worst
    }
}

/// A boundary strip: subset of sites with O(1) membership queries.
#[derive(Debug, Clone)]
pub struct Strip {
    domain: Arc<LatticeDomain>,
    radius: f64,
    sites: Vec<usize>,
    mask: Vec<bool>,
}

impl Strip {
    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn sites(&self) -> &[usize] {
        &self.sites
    }
    pub fn len(&self) -> usize {
        self.sites.len()
    }
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
    pub fn contains(&self, idx: usize) -> bool {
        self.mask[idx]
    }
}
