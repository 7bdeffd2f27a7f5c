use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hamiltonian::Hamiltonian;
use crate::lattice::Configuration;

/// Exact linear algebra for quadratic Hamiltonians with hard-pinned sites.
///
/// Per component the energy is `x^T Q x - 2 l^T x + c0` over free sites, so
/// `log Z = (n/2) log pi - (1/2) log det Q + l^T Q^{-1} l - c0`, the mean is
/// the discrete-harmonic extension `Q^{-1} l`, and the covariance is
/// `Q^{-1}/2`. All components share `Q`; clamp data enters `l` and `c0`.
pub struct GaussianOracle {
    ham: Hamiltonian,
    pinned: Vec<bool>,
    free: Vec<usize>,
    free_pos: Vec<Option<usize>>,
    chol: Cholesky<f64, Dyn>,
    log_det_q: f64,
    mean_free: Vec<DVector<f64>>,
    log_z: f64,
    clamp: Configuration,
}

impl GaussianOracle {
    /// Build for `ham` with sites marked in `pinned` frozen at the clamp's
    /// values. Fails unless the potential is the plain quadratic kind.
    pub fn new(ham: &Hamiltonian, pinned: &[bool], clamp: &Configuration) -> Result<Self> {
        let spec = ham.spec();
        if !spec.is_quadratic() {
            return Err(Error::NonQuadratic {
                kind: format!("{:?}", spec.kind),
            });
        }
        let dom = ham.domain();
        let m = dom.m();
        let n_sites = dom.n_sites();
        assert_eq!(pinned.len(), n_sites);

        let region_sites = ham.region_sites();
        let in_region = {
            let mut mask = vec![false; n_sites];
            for &i in &region_sites {
                mask[i] = true;
            }
            mask
        };
        let free: Vec<usize> = region_sites
            .iter()
            .copied()
            .filter(|&i| !pinned[i])
            .collect();
        let mut free_pos = vec![None; n_sites];
        for (a, &i) in free.iter().enumerate() {
            free_pos[i] = Some(a);
        }
        let n = free.len();
        let mut q = DMatrix::<f64>::zeros(n, n);
        let mut lin = vec![DVector::<f64>::zeros(n); m];
        let mut const_term = vec![0.0; m];

        let mut twist_col = vec![0.0; m];
        for j in 0..n_sites {
            if !ham.is_patch_center(j) {
                continue;
            }
            for k in 0..dom.d() {
                let (nb, _) = match dom.neighbor(j, k, 1) {
                    Some(v) => v,
                    None => continue,
                };
                if !in_region[j] || !in_region[nb] {
                    continue;
                }
                for (alpha, t) in twist_col.iter_mut().enumerate() {
                    *t = ham.twist().map_or(0.0, |l| l.entry(alpha, k));
                }
                match (free_pos[j], free_pos[nb]) {
                    (Some(a), Some(b)) => {
                        // (x_b - x_a + g)^2
                        q[(a, a)] += 1.0;
                        q[(b, b)] += 1.0;
                        q[(a, b)] -= 1.0;
                        q[(b, a)] -= 1.0;
                        for alpha in 0..m {
                            let g = twist_col[alpha];
                            lin[alpha][a] += g;
                            lin[alpha][b] -= g;
                            const_term[alpha] += g * g;
                        }
                    }
                    (Some(a), None) => {
                        // (y_b + g - x_a)^2
                        q[(a, a)] += 1.0;
                        for alpha in 0..m {
                            let t = clamp.values(nb)[alpha] + twist_col[alpha];
                            lin[alpha][a] += t;
                            const_term[alpha] += t * t;
                        }
                    }
                    (None, Some(b)) => {
                        // (x_b - (y_a - g))^2
                        q[(b, b)] += 1.0;
                        for alpha in 0..m {
                            let t = clamp.values(j)[alpha] - twist_col[alpha];
                            lin[alpha][b] += t;
                            const_term[alpha] += t * t;
                        }
                    }
                    (None, None) => {
                        for alpha in 0..m {
                            let diff = clamp.values(nb)[alpha] - clamp.values(j)[alpha]
                                + twist_col[alpha];
                            const_term[alpha] += diff * diff;
                        }
                    }
                }
            }
        }

        let chol = Cholesky::new(q.clone()).ok_or_else(|| Error::Compute {
            task: "gaussian oracle".into(),
            msg: "quadratic form is not positive definite (free sites unanchored?)".into(),
        })?;
        let log_det_q: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();

        let mut mean_free = Vec::with_capacity(m);
        let mut log_z = 0.0;
        for alpha in 0..m {
            let mu = chol.solve(&lin[alpha]);
            log_z += (n as f64 / 2.0) * std::f64::consts::PI.ln() - 0.5 * log_det_q
                + lin[alpha].dot(&mu)
                - const_term[alpha];
            mean_free.push(mu);
        }

        Ok(GaussianOracle {
            ham: ham.clone(),
            pinned: pinned.to_vec(),
            free,
            free_pos,
            chol,
            log_det_q,
            mean_free,
            log_z,
            clamp: clamp.clone(),
        })
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn log_det_q(&self) -> f64 {
        self.log_det_q
    }

    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    /// The exact mean field: clamp values on pinned sites, harmonic
    /// extension on free sites.
    pub fn mean_field(&self) -> Configuration {
        let mut out = self.clamp.clone();
        let m = out.domain().m();
        for (a, &i) in self.free.iter().enumerate() {
            for alpha in 0..m {
                out.values_mut(i)[alpha] = self.mean_free[alpha][a];
            }
        }
        out
    }

    /// Covariance of components at two free sites (same component; distinct
    /// components are independent): `Q^{-1}[a,b] / 2`.
    pub fn covariance(&self, site_a: usize, site_b: usize) -> Option<f64> {
        let a = self.free_pos[site_a]?;
        let b = self.free_pos[site_b]?;
        let mut e = DVector::zeros(self.free.len());
        e[b] = 1.0;
        let col = self.chol.solve(&e);
        Some(col[a] / 2.0)
    }

    /// Exact `E |grad X(i)|^2` summed over axes (and components).
    pub fn mean_grad_sq(&self, site: usize) -> f64 {
        let dom = self.ham.domain();
        let m = dom.m();
        let mean = self.mean_field();
        let mut total = 0.0;
        for k in 0..dom.d() {
            if let Some((nb, _)) = dom.neighbor(site, k, 1) {
                let var_pair = {
                    let caa = self.site_var(site);
                    let cbb = self.site_var(nb);
                    let cab = self.covariance(site, nb).unwrap_or(0.0);
                    cbb + caa - 2.0 * cab
                };
                for alpha in 0..m {
                    let g = self.ham.twist().map_or(0.0, |l| l.entry(alpha, k));
                    let mu = mean.values(nb)[alpha] - mean.values(site)[alpha] + g;
                    total += mu * mu + var_pair;
                }
            }
        }
        total
    }

    fn site_var(&self, site: usize) -> f64 {
        match self.free_pos[site] {
            Some(_) => self.covariance(site, site).unwrap(),
            None => 0.0,
        }
    }

    /// Draw an exact sample: `mu + L^{-T} xi / sqrt(2)` per component.
    pub fn sample(&self, rng: &mut impl Rng) -> Configuration {
        let n = self.free.len();
        let m = self.clamp.domain().m();
        let mut out = self.clamp.clone();
        let lt = self.chol.l().transpose();
        for alpha in 0..m {
            let xi = DVector::from_iterator(n, (0..n).map(|_| {
                let g: f64 = rng.sample(StandardNormal);
                g / 2f64.sqrt()
            }));
            let z = lt
                .solve_upper_triangular(&xi)
                .expect("cholesky factor is invertible");
            for (a, &i) in self.free.iter().enumerate() {
                out.values_mut(i)[alpha] = self.mean_free[alpha][a] + z[a];
            }
        }
        out
    }

    /// Reduced quadratic energy of a configuration (for cross-checks):
    /// `sum_alpha x^T Q x - 2 l x + c0` evaluated through the Hamiltonian.
    pub fn energy(&self, x: &Configuration) -> f64 {
        use crate::hamiltonian::EnergyModel;
        self.ham.energy(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::EnergyModel;
    use crate::lattice::{AffineMap, BoxShape, LatticeDomain};
    use crate::potential::PotentialSpec;
    use rand::SeedableRng;

    #[test]
    fn three_site_chain_closed_form() {
        // sites {0,1,2}, bond patch, clamp X(0)=0, X(2)=2L:
        // H = x^2 + (2L - x)^2, log Z = -2 L^2 + 0.5 log(pi/2)
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.34, 1).unwrap();
        assert_eq!(dom.n_sites(), 3);
        let spec = PotentialSpec::gaussian(1, 1).with_forward_patch();
        let ham = Hamiltonian::new(spec, &dom).unwrap();
        for l in [0.0, 0.7, -1.3] {
            let mut clamp = Configuration::zeros(&dom);
            clamp.values_mut(2)[0] = 2.0 * l;
            let pinned = vec![true, false, true];
            let oracle = GaussianOracle::new(&ham, &pinned, &clamp).unwrap();
            let want = -2.0 * l * l + 0.5 * (std::f64::consts::PI / 2.0).ln();
            assert!(
                (oracle.log_z() - want).abs() < 1e-12,
                "L={l}: {} vs {want}",
                oracle.log_z()
            );
            // mean of x is L by completing the square
            let mean = oracle.mean_field();
            assert!((mean.values(1)[0] - l).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_clamp_zero_mean() {
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.2, 2).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(2, 2), &dom).unwrap();
        let strip = dom.boundary_strip(2.0);
        let pinned: Vec<bool> = (0..dom.n_sites()).map(|i| strip.contains(i)).collect();
        let clamp = Configuration::zeros(&dom);
        let oracle = GaussianOracle::new(&ham, &pinned, &clamp).unwrap();
        let mean = oracle.mean_field();
        assert!(mean.raw().iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn harmonic_extension_of_affine_clamp_is_affine() {
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.125, 2).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(2, 2), &dom).unwrap();
        let l = AffineMap::linear(2, 2, vec![1.0, 0.25, -0.5, 0.75]);
        let clamp = l.lattice_config(&dom);
        let strip = dom.boundary_strip(2.0);
        let pinned: Vec<bool> = (0..dom.n_sites()).map(|i| strip.contains(i)).collect();
        let oracle = GaussianOracle::new(&ham, &pinned, &clamp).unwrap();
        let mean = oracle.mean_field();
        for (a, b) in mean.raw().iter().zip(clamp.raw()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn dirichlet_shift_identity() {
        // log Z(L) - log Z(0) = -(number of counted bonds) * sum_k |A e_k|^2
        // for affine clamps with the full-cross patch (telescoping kills the
        // cross terms because the strip covers two layers).
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.125, 1).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(2, 1), &dom).unwrap();
        let strip = dom.boundary_strip(2.0);
        let pinned: Vec<bool> = (0..dom.n_sites()).map(|i| strip.contains(i)).collect();
        let l = AffineMap::linear(1, 2, vec![0.8, -0.6]);
        let z0 = GaussianOracle::new(&ham, &pinned, &Configuration::zeros(&dom))
            .unwrap()
            .log_z();
        let zl = GaussianOracle::new(&ham, &pinned, &l.lattice_config(&dom))
            .unwrap()
            .log_z();
        // counted bonds: centers are the 6x6 interior, 2 bonds each
        let bonds = ham.n_patch_centers() as f64 * 2.0;
        let shift = bonds * (0.8f64 * 0.8 + 0.6 * 0.6) / 2.0;
        // per axis: |A e_1|^2 = 0.64, |A e_2|^2 = 0.36; bonds split evenly
        let want = z0 - ham.n_patch_centers() as f64 * (0.64 + 0.36);
        assert!(
            (zl - want).abs() < 1e-9,
            "zl={zl}, want={want}, bonds={bonds}, shift={shift}"
        );
    }

    #[test]
    fn torus_oracle_twist_cancels_linear_term() {
        let dom = LatticeDomain::build_torus(2, 0.25, 1).unwrap();
        let l = AffineMap::linear(1, 2, vec![0.5, -1.0]);
        let ham = Hamiltonian::twisted_torus(PotentialSpec::gaussian(2, 1), &dom, l.clone()).unwrap();
        let mut pinned = vec![false; dom.n_sites()];
        pinned[0] = true;
        let clamp = Configuration::zeros(&dom);
        let oracle = GaussianOracle::new(&ham, &pinned, &clamp).unwrap();
        // the twist contributes only the constant: log Z(L) = log Z(0) - n |A|^2
        let ham0 =
            Hamiltonian::twisted_torus(PotentialSpec::gaussian(2, 1), &dom, AffineMap::zero(1, 2))
                .unwrap();
        let oracle0 = GaussianOracle::new(&ham0, &pinned, &clamp).unwrap();
        let want = oracle0.log_z() - dom.n_sites() as f64 * l.columns_sq();
        assert!((oracle.log_z() - want).abs() < 1e-9);
        // and the mean deviation is exactly zero
        assert!(oracle.mean_field().raw().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sampler_matches_mean_and_covariance() {
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.2, 1).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(1, 1).with_forward_patch(), &dom)
            .unwrap();
        let pinned = vec![true, false, false, false, true];
        let l = AffineMap::linear(1, 1, vec![1.0]);
        let clamp = l.lattice_config(&dom);
        let oracle = GaussianOracle::new(&ham, &pinned, &clamp).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let n = 40_000;
        let mut mean2 = 0.0;
        let mut var2 = 0.0;
        for _ in 0..n {
            let s = oracle.sample(&mut rng);
            let v = s.values(2)[0];
            mean2 += v;
            var2 += v * v;
        }
        mean2 /= n as f64;
        var2 = var2 / n as f64 - mean2 * mean2;
        let mu = oracle.mean_field().values(2)[0];
        let cov = oracle.covariance(2, 2).unwrap();
        assert!((mean2 - mu).abs() < 4.0 * (cov / n as f64).sqrt());
        assert!((var2 - cov).abs() < 0.05 * cov);
        // energy of samples is finite and consistent with the model
        let s = oracle.sample(&mut rng);
        assert!(oracle.energy(&s).is_finite());
        let _ = EnergyModel::energy(&ham, &s);
    }
}
