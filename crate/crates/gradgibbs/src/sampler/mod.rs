//! Constrained MCMC plus the two exact oracles every estimator is checked
//! against: closed-form Gaussian linear algebra and nested quadrature.

mod dlr;
mod gaussian;
mod metropolis;
mod quadrature;

pub use dlr::{check_window_interior, dlr_resample};
pub use gaussian::GaussianOracle;
pub use metropolis::{chain_rng, metropolis_run, write_manifest, RunSettings, SampleBatch};
pub use quadrature::{
    adaptive_log_z, dirichlet_log_z_gl, envelope_radius, tensor_gl_log_z, FreeDims,
    MAX_QUADRATURE_DIMS,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{ConstraintSet, EnergyModel, Hamiltonian};
    use crate::lattice::{AffineMap, BoxShape, Configuration, LatticeDomain};
    use crate::potential::PotentialSpec;
    use crate::stats;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_free_site_variance_quarter() {
        // H = 2 x^2 around zero-clamped neighbors: Var = 1/4.
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.34, 1).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(1, 1).with_forward_patch(), &dom)
            .unwrap();
        let frozen = vec![true, false, true];
        let init = Configuration::zeros(&dom);
        let settings = RunSettings::new(60_000, 99).with_burn_in(5_000).with_thin(2);
        let batch = metropolis_run(&ham, &ConstraintSet::Unconstrained, init, &frozen, &settings)
            .unwrap();
        let xs = batch.observable(|c| c.values(1)[0]);
        let (mean, se) = stats::mean_with_error(&xs);
        assert!(mean.abs() < 3.0 * se, "mean {mean} +- {se}");
        let sq = batch.observable(|c| c.values(1)[0].powi(2));
        let (var, var_se) = stats::mean_with_error(&sq);
        assert!(
            (var - 0.25).abs() < 3.0 * var_se,
            "var {var} +- {var_se} (expect 0.25)"
        );
    }

    #[test]
    fn metropolis_mean_matches_harmonic_extension() {
        // clamp Y = L on the strip, gaussian: the sample mean converges to
        // the exact Gaussian (discrete-harmonic) mean.
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.125, 1).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(2, 1), &dom).unwrap();
        let l = AffineMap::linear(1, 2, vec![0.7, -0.4]);
        let clamp = l.lattice_config(&dom);
        let strip = dom.boundary_strip(2.0);
        let frozen: Vec<bool> = (0..dom.n_sites()).map(|i| strip.contains(i)).collect();
        let oracle = GaussianOracle::new(&ham, &frozen, &clamp).unwrap();
        let settings = RunSettings::new(40_000, 7).with_burn_in(4_000).with_thin(4);
        let batch = metropolis_run(
            &ham,
            &ConstraintSet::Unconstrained,
            clamp.clone(),
            &frozen,
            &settings,
        )
        .unwrap();
        let site = dom.site_index(&[1, 2]).unwrap();
        let (mean, se) = batch.mean_se(|c| c.values(site)[0]);
        let exact = oracle.mean_field().values(site)[0];
        assert!(
            (mean - exact).abs() < 3.5 * se,
            "site mean {mean} +- {se} vs exact {exact}"
        );
    }

    #[test]
    fn zero_potential_ball_constraint_uniform_law() {
        // U = 0 with a lattice ell^2 ball constraint: the stationary law is
        // uniform on the ball; compare a radial moment against rejection
        // sampling from the bounding box.
        struct Zero;
        impl EnergyModel for Zero {
            fn energy(&self, _: &Configuration) -> f64 {
                0.0
            }
            fn delta(&self, _: &Configuration, _: usize, _: &[f64]) -> f64 {
                0.0
            }
        }
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.34, 1).unwrap();
        let n = dom.n_sites(); // 3 sites
        let center = Configuration::zeros(&dom);
        let kappa = 0.4;
        let set = ConstraintSet::lattice_lr(center.clone(), kappa, 2.0);
        let radius = kappa * (n as f64).powf(0.5 + 1.0); // ell^2 bound
        let settings = RunSettings::new(60_000, 3).with_burn_in(5_000).with_thin(2);
        let frozen = vec![false; n];
        let batch = metropolis_run(&Zero, &set, center, &frozen, &settings).unwrap();
        let rsq = batch.observable(|c| c.raw().iter().map(|v| v * v).sum::<f64>());
        let (mc, se) = stats::mean_with_error(&rsq);
        // uniform on a 3-ball of radius R: E r^2 = 3/5 R^2
        let want = 3.0 / 5.0 * radius * radius;
        assert!(
            (mc - want).abs() < 4.0 * se.max(1e-6),
            "E r^2 = {mc} +- {se}, want {want}"
        );
        // independent oracle: rejection sampling from the box
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut acc = 0.0;
        let mut cnt = 0usize;
        while cnt < 200_000 {
            let x: [f64; 3] = [
                (rng.random::<f64>() * 2.0 - 1.0) * radius,
                (rng.random::<f64>() * 2.0 - 1.0) * radius,
                (rng.random::<f64>() * 2.0 - 1.0) * radius,
            ];
            let r2 = x.iter().map(|v| v * v).sum::<f64>();
            if r2 < radius * radius {
                acc += r2;
                cnt += 1;
            }
        }
        let brute = acc / cnt as f64;
        assert!((mc - brute).abs() < 5.0 * se.max(brute * 5e-3), "{mc} vs {brute}");
    }

    #[test]
    fn identical_seed_identical_stream() {
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.125, 2).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(2, 2), &dom).unwrap();
        let clamp = Configuration::zeros(&dom);
        let strip = dom.boundary_strip(2.0);
        let frozen: Vec<bool> = (0..dom.n_sites()).map(|i| strip.contains(i)).collect();
        let settings = RunSettings::new(500, 42).with_burn_in(100);
        let b1 = metropolis_run(
            &ham,
            &ConstraintSet::Unconstrained,
            clamp.clone(),
            &frozen,
            &settings,
        )
        .unwrap();
        let b2 = metropolis_run(
            &ham,
            &ConstraintSet::Unconstrained,
            clamp.clone(),
            &frozen,
            &settings,
        )
        .unwrap();
        assert_eq!(b1.snapshots.len(), b2.snapshots.len());
        for (a, b) in b1.snapshots.iter().zip(&b2.snapshots) {
            assert_eq!(a.raw(), b.raw());
        }
        // different stream diverges
        let b3 = metropolis_run(
            &ham,
            &ConstraintSet::Unconstrained,
            clamp,
            &frozen,
            &settings.clone().with_stream(1),
        )
        .unwrap();
        assert_ne!(b1.snapshots[10].raw(), b3.snapshots[10].raw());
    }

    #[test]
    fn init_violating_constraint_errors() {
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.2, 1).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(1, 1), &dom).unwrap();
        let anchor = Configuration::zeros(&dom);
        let set = ConstraintSet::soft_clamp(anchor.clone(), 2.0);
        let mut bad = anchor;
        bad.values_mut(0)[0] = 5.0;
        let frozen = vec![false; dom.n_sites()];
        let err = metropolis_run(
            &ham,
            &set,
            bad,
            &frozen,
            &RunSettings::new(100, 1),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            crate::error::Error::InitViolatesConstraint { .. }
        ));
    }

    #[test]
    fn stationarity_from_exact_start() {
        // start at an exact oracle sample; moments must not drift.
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.125, 1).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(2, 1), &dom).unwrap();
        let clamp = Configuration::zeros(&dom);
        let strip = dom.boundary_strip(2.0);
        let frozen: Vec<bool> = (0..dom.n_sites()).map(|i| strip.contains(i)).collect();
        let oracle = GaussianOracle::new(&ham, &frozen, &clamp).unwrap();
        let mut rng = chain_rng(1234, 0);
        let init = oracle.sample(&mut rng);
        let settings = RunSettings::new(30_000, 77).with_burn_in(0).with_thin(3);
        let batch = metropolis_run(&ham, &ConstraintSet::Unconstrained, init, &frozen, &settings)
            .unwrap();
        let site = dom.site_index(&[2, 2]).unwrap();
        let first: Vec<f64> = batch
            .snapshots
            .iter()
            .take(batch.snapshots.len() / 2)
            .map(|c| c.values(site)[0])
            .collect();
        let second: Vec<f64> = batch
            .snapshots
            .iter()
            .skip(batch.snapshots.len() / 2)
            .map(|c| c.values(site)[0])
            .collect();
        let (m1, s1) = stats::mean_with_error(&first);
        let (m2, s2) = stats::mean_with_error(&second);
        assert!(
            (m1 - m2).abs() < 3.0 * (s1 * s1 + s2 * s2).sqrt(),
            "halves drift: {m1}+-{s1} vs {m2}+-{s2}"
        );
    }

    #[test]
    fn dlr_empty_window_is_identity() {
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.125, 1).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(2, 1), &dom).unwrap();
        let clamp = Configuration::zeros(&dom);
        let strip = dom.boundary_strip(2.0);
        let frozen: Vec<bool> = (0..dom.n_sites()).map(|i| strip.contains(i)).collect();
        let settings = RunSettings::new(2_000, 5).with_burn_in(500).with_thin(10);
        let batch = metropolis_run(
            &ham,
            &ConstraintSet::Unconstrained,
            clamp,
            &frozen,
            &settings,
        )
        .unwrap();
        let spec = PotentialSpec::gaussian(2, 1);
        let out = dlr_resample(&spec, &batch, &[], 10, 1).unwrap();
        for (a, b) in out.snapshots.iter().zip(&batch.snapshots) {
            assert_eq!(a.raw(), b.raw());
        }
    }

    #[test]
    fn dlr_window_mean_matches_conditional_oracle() {
        // Gaussian case: after resampling a window, the window mean given a
        // frame equals the harmonic extension of the frame values.
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.125, 1).unwrap();
        let ham = Hamiltonian::new(PotentialSpec::gaussian(2, 1), &dom).unwrap();
        let l = AffineMap::linear(1, 2, vec![0.5, 0.5]);
        let clamp = l.lattice_config(&dom);
        let window: Vec<usize> = (0..dom.n_sites())
            .filter(|&i| {
                let c = dom.coords(i);
                (3..=4).contains(&c[0]) && (3..=4).contains(&c[1])
            })
            .collect();
        // conditional oracle: pin everything except the window at the clamp
        let pinned: Vec<bool> = (0..dom.n_sites()).map(|i| !window.contains(&i)).collect();
        let oracle = GaussianOracle::new(&ham, &pinned, &clamp).unwrap();
        // fake a batch of identical frames
        let base = clamp.clone();
        let batch = SampleBatch {
            snapshots: vec![base.clone(); 600],
            sweep_indices: (0..600).collect(),
            energies: vec![0.0; 600],
            acceptance: 1.0,
            tau_energy: 1.0,
            ess_energy: 600.0,
            final_state: base.clone(),
            final_energy: 0.0,
            final_steps: vec![],
        };
        let spec = PotentialSpec::gaussian(2, 1);
        let out = dlr_resample(&spec, &batch, &window, 400, 9).unwrap();
        let site = window[0];
        let xs: Vec<f64> = out.snapshots.iter().map(|c| c.values(site)[0]).collect();
        let mean = stats::mean(&xs);
        let se = (stats::variance(&xs) / xs.len() as f64).sqrt();
        let exact = oracle.mean_field().values(site)[0];
        assert!(
            (mean - exact).abs() < 4.0 * se,
            "window mean {mean}+-{se} vs {exact}"
        );
    }
}
