use crate::error::{Error, Result};
use crate::hamiltonian::{ConstraintSet, EnergyModel, Hamiltonian};
use crate::lattice::Configuration;
use crate::numeric::{adaptive_simpson, gauss_legendre};

/// Integration variables: free (site, component) pairs with per-dimension
/// truncation boxes. The neglected tail is controlled by the lower-growth
/// envelope `exp(-c sum |grad X|^p)`; [`envelope_radius`] turns `(c, p)` into
/// a safe half-width.
#[derive(Debug, Clone)]
pub struct FreeDims {
    pub dims: Vec<(usize, usize)>,
    pub boxes: Vec<(f64, f64)>,
}

pub const MAX_QUADRATURE_DIMS: usize = 6;

/// Half-width such that the envelope factor drops below `exp(-tail_log)`.
pub fn envelope_radius(c: f64, p: f64, tail_log: f64) -> f64 {
    (tail_log / c).powf(1.0 / p)
}

impl FreeDims {
    pub fn new(dims: Vec<(usize, usize)>, boxes: Vec<(f64, f64)>) -> Result<Self> {
        if dims.len() > MAX_QUADRATURE_DIMS {
            return Err(Error::QuadratureDimension {
                dims: dims.len(),
                max: MAX_QUADRATURE_DIMS,
            });
        }
        assert_eq!(dims.len(), boxes.len());
        Ok(FreeDims { dims, boxes })
    }

    /// All components of the listed sites, every box centered at the anchor
    /// configuration with half-width `radius`.
    pub fn around(
        anchor: &Configuration,
        sites: &[usize],
        radius: f64,
    ) -> Result<Self> {
        let m = anchor.domain().m();
        let mut dims = Vec::new();
        let mut boxes = Vec::new();
        for &i in sites {
            for alpha in 0..m {
                dims.push((i, alpha));
                let c = anchor.values(i)[alpha];
                boxes.push((c - radius, c + radius));
            }
        }
        Self::new(dims, boxes)
    }

    /// Clip the boxes of sites in `strip_sites` to the exact clamp support
    /// `[anchor - 1, anchor + 1]`.
    pub fn clip_to_clamp(mut self, anchor: &Configuration, strip_sites: &[bool]) -> Self {
        for (j, &(site, alpha)) in self.dims.iter().enumerate() {
            if strip_sites[site] {
                let c = anchor.values(site)[alpha];
                self.boxes[j].0 = self.boxes[j].0.max(c - 1.0);
                self.boxes[j].1 = self.boxes[j].1.min(c + 1.0);
            }
        }
        self
    }
}

struct Integrand<'a> {
    model: &'a dyn EnergyModel,
    constraint: Option<&'a ConstraintSet>,
    dims: &'a [(usize, usize)],
}

impl Integrand<'_> {
    fn eval(&self, scratch: &mut Configuration, point: &[f64]) -> f64 {
        for (&(site, alpha), &v) in self.dims.iter().zip(point) {
            scratch.values_mut(site)[alpha] = v;
        }
        let h = self.model.energy(scratch);
        if let Some(set) = self.constraint {
            if !set.contains_cached(scratch, Some(h)).inside {
                return 0.0;
            }
        }
        (-h).exp()
    }
}

/// Fixed tensor Gauss-Legendre integration of `exp(-H) 1_set` over the boxes.
///
/// Spectrally accurate when the integrand is smooth on the boxes (no active
/// indicator away from box faces); returns `log` of the integral.
pub fn tensor_gl_log_z(
    model: &dyn EnergyModel,
    base: &Configuration,
    free: &FreeDims,
    nodes_per_dim: usize,
    constraint: Option<&ConstraintSet>,
) -> Result<f64> {
    let integrand = Integrand {
        model,
        constraint,
        dims: &free.dims,
    };
    let rule = gauss_legendre(nodes_per_dim);
    let mut scratch = base.clone();
    let n = free.dims.len();
    let mut point = vec![0.0; n];
    let mut total = 0.0f64;
    let mut idx = vec![0usize; n];
    let vol: f64 = free.boxes.iter().map(|&(a, b)| b - a).product();
    if vol <= 0.0 {
        return Err(Error::MeasureZeroConstraint);
    }
    loop {
        let mut w = 1.0;
        for k in 0..n {
            let (t, wk) = rule[idx[k]];
            let (a, b) = free.boxes[k];
            point[k] = a + (b - a) * t;
            w *= wk;
        }
        total += w * integrand.eval(&mut scratch, &point);
        // odometer
        let mut k = 0;
        loop {
            if k == n {
                let val = total * vol;
                if val <= 0.0 {
                    return Err(Error::MeasureZeroConstraint);
                }
                return Ok(val.ln());
            }
            idx[k] += 1;
            if idx[k] < rule.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Nested adaptive Simpson with an absolute tolerance; handles indicator
/// discontinuities in the interior at the cost of more evaluations.
pub fn adaptive_log_z(
    model: &dyn EnergyModel,
    base: &Configuration,
    free: &FreeDims,
    tol_abs: f64,
    constraint: Option<&ConstraintSet>,
) -> Result<f64> {
    let integrand = Integrand {
        model,
        constraint,
        dims: &free.dims,
    };
    let mut scratch = base.clone();
    let n = free.dims.len();
    let mut point = vec![0.0; n];

    fn level(
        k: usize,
        n: usize,
        integrand: &Integrand,
        boxes: &[(f64, f64)],
        scratch: &mut Configuration,
        point: &mut Vec<f64>,
        tol: f64,
    ) -> f64 {
        let (a, b) = boxes[k];
        if k + 1 == n {
            let mut f = |t: f64| {
                point[k] = t;
                integrand.eval(scratch, point)
            };
            adaptive_simpson(&mut f, a, b, tol)
        } else {
            let width = b - a;
            let inner_tol = tol / (2.0 * width.max(1.0));
            let mut f = |t: f64| {
                point[k] = t;
                level(k + 1, n, integrand, boxes, scratch, point, inner_tol)
            };
            adaptive_simpson(&mut f, a, b, tol)
        }
    }

    let val = level(
        0,
        n,
        &integrand,
        &free.boxes,
        &mut scratch,
        &mut point,
        tol_abs,
    );
    if val <= 0.0 {
        return Err(Error::MeasureZeroConstraint);
    }
    Ok(val.ln())
}

/// Dirichlet partition function of a quadratic-or-not system on its free
/// sites by tensor Gauss-Legendre, truncated by the growth envelope.
pub fn dirichlet_log_z_gl(
    ham: &Hamiltonian,
    pinned: &[bool],
    clamp: &Configuration,
    nodes_per_dim: usize,
    extra_radius: f64,
) -> Result<f64> {
    let g = ham.spec().growth;
    let radius = envelope_radius(g.c, g.p, 34.0) + extra_radius;
    let sites: Vec<usize> = ham
        .region_sites()
        .into_iter()
        .filter(|&i| !pinned[i])
        .collect();
    let free = FreeDims::around(clamp, &sites, radius)?;
    tensor_gl_log_z(ham, clamp, &free, nodes_per_dim, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{BoxShape, LatticeDomain};
    use crate::potential::PotentialSpec;
    use crate::sampler::gaussian::GaussianOracle;

    #[test]
    fn single_site_gaussian_integral() {
        // single free site, quadratic with both neighbors clamped at 0:
        // Z = integral exp(-2 x^2) = sqrt(pi/2)
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.34, 1).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(1, 1).with_forward_patch(), &dom)
            .unwrap();
        let clamp = Configuration::zeros(&dom);
        let free = FreeDims::around(&clamp, &[1], 5.0).unwrap();
        let lz = tensor_gl_log_z(&ham, &clamp, &free, 48, None).unwrap();
        let want = 0.5 * (std::f64::consts::PI / 2.0).ln();
        assert!((lz - want).abs() < 1e-10, "{lz} vs {want}");
    }

    #[test]
    fn zero_potential_box_volume() {
        // zero potential on a unit sup-clamp box: Z = 2^{m n}
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.26, 2).unwrap();
        assert_eq!(dom.n_sites(), 4);
        struct Zero;
        impl EnergyModel for Zero {
            fn energy(&self, _: &Configuration) -> f64 {
                0.0
            }
            fn delta(&self, _: &Configuration, _: usize, _: &[f64]) -> f64 {
                0.0
            }
        }
        let clamp = Configuration::zeros(&dom);
        let sites: Vec<usize> = (0..4).collect();
        let free = FreeDims::around(&clamp, &sites[..3], 1.0).unwrap();
        let lz = tensor_gl_log_z(&Zero, &clamp, &free, 8, None).unwrap();
        let want = (3.0 * 2.0) * 2f64.ln();
        assert!((lz - want).abs() < 1e-10);
    }

    #[test]
    fn matches_gaussian_oracle_two_free_sites() {
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.25, 1).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(1, 1).with_forward_patch(), &dom)
            .unwrap();
        let mut clamp = Configuration::zeros(&dom);
        clamp.values_mut(0)[0] = -0.4;
        clamp.values_mut(3)[0] = 1.1;
        let pinned = vec![true, false, false, true];
        let oracle = GaussianOracle::new(&ham, &pinned, &clamp).unwrap();
        let lz = dirichlet_log_z_gl(&ham, &pinned, &clamp, 44, 2.0).unwrap();
        assert!(
            (lz - oracle.log_z()).abs() < 1e-8,
            "{lz} vs {}",
            oracle.log_z()
        );
    }

    #[test]
    fn adaptive_agrees_with_gl_on_smooth_case() {
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.34, 1).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::p_power(1, 1, 4.0).with_forward_patch(), &dom)
            .unwrap();
        let clamp = Configuration::zeros(&dom);
        // quartic weights are entire of order 4: Gauss-Legendre needs a tight
        // box and many nodes, the adaptive rule does not care
        let free = FreeDims::around(&clamp, &[1], 4.0).unwrap();
        let gl = tensor_gl_log_z(&ham, &clamp, &free, 96, None).unwrap();
        let ad = adaptive_log_z(&ham, &clamp, &free, 1e-11, None).unwrap();
        assert!((gl - ad).abs() < 1e-8, "{gl} vs {ad}");
    }

    #[test]
    fn dimension_cap_enforced() {
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.1, 1).unwrap();
        let clamp = Configuration::zeros(&dom);
        let sites: Vec<usize> = (0..7).collect();
        assert!(matches!(
            FreeDims::around(&clamp, &sites, 1.0),
            Err(Error::QuadratureDimension { .. })
        ));
    }
}
