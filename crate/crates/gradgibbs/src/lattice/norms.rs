//! Discrete/continuum norm comparisons.
//!
//! The lattice and continuum pictures are linked by two factor-2 sandwich
//! inequalities: the scaled `ell^r` distance between a configuration and the
//! discretized field is equivalent to the `L^r` distance between the
//! interpolant and the field, and likewise for gradients. Generic (sign-free)
//! configurations satisfy the printed factor 2; adversarially oscillating
//! configurations can push the value-side constant above 2, which is why the
//! randomized check draws positive entries.

use crate::error::Result;

use super::{discretize, interpolate, Configuration, Field};

#[derive(Debug, Clone, Copy)]
pub struct NormReport {
    /// `eps^{d+r} sum_i |X(i) - X_{v,eps}(i)|^r`
    pub disc_lr: f64,
    /// `eps^d sum_i sum_k |grad_k X(i) - grad_k X_{v,eps}(i)|^p`
    pub disc_grad_lp: f64,
    /// `|| Pi_eps(X) - v ||_{L^r}^r` over the triangulated region
    pub cont_lr: f64,
    /// `|| grad(Pi_eps(X) - v) ||_{L^p}^p`, columnwise p-norm of the gradient
    pub cont_grad_lp: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SandwichCheck {
    pub report: NormReport,
    /// `disc - cont/2` (must be >= 0)
    pub value_lower_slack: f64,
    /// `2 cont - disc` (must be >= 0)
    pub value_upper_slack: f64,
    pub grad_lower_slack: f64,
    pub grad_upper_slack: f64,
}

impl SandwichCheck {
    pub fn holds(&self) -> bool {
        let tol = 1e-12;
        self.value_lower_slack >= -tol
            && self.value_upper_slack >= -tol
            && self.grad_lower_slack >= -tol
            && self.grad_upper_slack >= -tol
    }
}

fn field_gradient(v: &Field, x: &[f64], out: &mut [f64]) -> Result<()> {
    match v {
        Field::Affine(l) => {
            for alpha in 0..l.m() {
                for k in 0..l.d() {
                    out[alpha * l.d() + k] = l.entry(alpha, k);
                }
            }
            Ok(())
        }
        Field::PiecewiseLinear(p) => p.gradient_at(x, out),
        Field::Analytic { .. } => panic!("gradient norms need affine or piecewise-linear fields"),
    }
}

/// Evaluate the four distances between a configuration and a field.
pub fn norms(x: &Configuration, v: &Field, r: f64, p: f64) -> Result<NormReport> {
    assert!(r >= 1.0 && p >= 1.0);
    let dom = x.domain();
    let (d, m, eps) = (dom.d(), dom.m(), dom.eps());
    let z = discretize(v, dom)?;

    let mut disc_lr = 0.0;
    let mut disc_grad_lp = 0.0;
    let mut gx = [0.0f64; 2];
    let mut gz = [0.0f64; 2];
    for i in 0..dom.n_sites() {
        let sq: f64 = x
            .values(i)
            .iter()
            .zip(z.values(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        disc_lr += sq.sqrt().powf(r);
        for k in 0..d {
            if x.grad(i, k, &mut gx[..m]) && z.grad(i, k, &mut gz[..m]) {
                let sq: f64 = gx[..m]
                    .iter()
                    .zip(&gz[..m])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                disc_grad_lp += sq.sqrt().powf(p);
            }
        }
    }
    disc_lr *= eps.powf(d as f64 + r);
    disc_grad_lp *= eps.powi(d as i32);

    let interp = interpolate(x)?;
    let mut cont_lr = 0.0;
    let mut cont_grad_lp = 0.0;
    let mut bi = vec![0.0; m];
    let mut bv = vec![0.0; m];
    let mut gi = vec![0.0; m * d];
    let mut gv = vec![0.0; m * d];
    for s in interp.simplices() {
        // gradients are constant per simplex of the interpolant; for the
        // field they are evaluated pointwise (exact for affine / aligned PL)
        for (pt, w) in interp.quad_points(&s) {
            interp.eval(&pt, &mut bi)?;
            v.eval(&pt, &mut bv)?;
            let sq: f64 = bi.iter().zip(&bv).map(|(a, b)| (a - b) * (a - b)).sum();
            cont_lr += w * sq.sqrt().powf(r);

            interp.gradient_at(&pt, &mut gi)?;
            field_gradient(v, &pt, &mut gv)?;
            let mut cols = 0.0;
            for k in 0..d {
                let sq: f64 = (0..m)
                    .map(|alpha| {
                        let diff = gi[alpha * d + k] - gv[alpha * d + k];
                        diff * diff
                    })
                    .sum();
                cols += sq.sqrt().powf(p);
            }
            cont_grad_lp += w * cols;
        }
    }

    Ok(NormReport {
        disc_lr,
        disc_grad_lp,
        cont_lr,
        cont_grad_lp,
    })
}

/// Evaluate both factor-2 sandwich inequalities.
pub fn check_sandwich(x: &Configuration, v: &Field, r: f64, p: f64) -> Result<SandwichCheck> {
    let report = norms(x, v, r, p)?;
    Ok(SandwichCheck {
        report,
        value_lower_slack: report.disc_lr - 0.5 * report.cont_lr,
        value_upper_slack: 2.0 * report.cont_lr - report.disc_lr,
        grad_lower_slack: report.disc_grad_lp - 0.5 * report.cont_grad_lp,
        grad_upper_slack: 2.0 * report.cont_grad_lp - report.disc_grad_lp,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::super::{AffineMap, BoxShape, LatticeDomain, PiecewiseLinearField};
    use super::*;
    use std::sync::Arc;

    #[test]
    fn zero_distance_for_matching_pl_field() {
        // X sampled from a piecewise-linear v on the eps-triangulation:
        // both discrete distances and the continuum distance vanish.
        let eps = 0.25;
        let dom = LatticeDomain::build(BoxShape::unit(2), eps, 1).unwrap();
        let n = dom.site_ext()[0] as usize;
        let pl = PiecewiseLinearField::from_vertex_fn(
            2,
            1,
            vec![0.0, 0.0],
            eps,
            vec![n - 1, n - 1],
            |x, out| out[0] = x[0].min(1.0 - x[0]) + 0.5 * x[1],
        );
        let v = Field::PiecewiseLinear(Arc::new(pl));
        let x = discretize(&v, &dom).unwrap();
        let rep = norms(&x, &v, 2.0, 2.0).unwrap();
        assert!(rep.disc_lr < 1e-24);
        assert!(rep.disc_grad_lp < 1e-24);
        assert!(rep.cont_lr < 1e-24);
        assert!(rep.cont_grad_lp < 1e-24);
    }

    #[test]
    fn single_site_perturbation_slack_closed_form() {
        // v = L affine, X = L + delta at one interior site, r = p = 2, d = 1:
        // disc = eps^3 delta^2, cont = (2/3) eps^3 delta^2 — both slacks positive.
        let eps = 0.125;
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), eps, 1).unwrap();
        let l = AffineMap::new(1, 1, vec![0.75], vec![0.0]);
        let mut x = l.lattice_config(&dom);
        let delta = 0.9;
        x.values_mut(4)[0] += delta;
        let chk = check_sandwich(&x, &Field::Affine(l), 2.0, 2.0).unwrap();
        let disc = eps.powi(3) * delta * delta;
        let cont = 2.0 / 3.0 * eps.powi(3) * delta * delta;
        assert!((chk.report.disc_lr - disc).abs() < 1e-12 * disc);
        assert!((chk.report.cont_lr - cont).abs() < 1e-10 * cont);
        assert!(chk.value_lower_slack > 0.0 && chk.value_upper_slack > 0.0);
        assert!(chk.holds(), "{chk:?}");
    }

    #[test]
    fn sandwich_random_positive_configurations() {
        // Reduced-count version of the acceptance sweep (40 draws per cell).
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in [1usize, 2] {
            for m in [1usize, 2] {
                for r in [1.0f64, 2.0, 4.0] {
                    let eps = if d == 1 { 1.0 / 64.0 } else { 1.0 / 16.0 };
                    let dom = LatticeDomain::build(BoxShape::unit(d), eps, m).unwrap();
                    for trial in 0..40 {
                        let mut x = Configuration::zeros(&dom);
                        for v in x.raw_mut() {
                            *v = rng.random::<f64>();
                        }
                        let chk =
                            check_sandwich(&x, &Field::Affine(AffineMap::zero(m, d)), r, 2.0)
                                .unwrap();
                        assert!(
                            chk.holds(),
                            "violation at d={d} m={m} r={r} trial={trial}: {chk:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn grad_sandwich_any_sign_configurations() {
        // The gradient sandwich is deterministic on boxes: exercise it with
        // signed entries.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dom = LatticeDomain::build(BoxShape::unit(2), 1.0 / 12.0, 2).unwrap();
        for _ in 0..50 {
            let mut x = Configuration::zeros(&dom);
            for v in x.raw_mut() {
                *v = rng.random::<f64>() * 2.0 - 1.0;
            }
            let chk = check_sandwich(&x, &Field::Affine(AffineMap::zero(2, 2)), 2.0, 2.0).unwrap();
            assert!(chk.grad_lower_slack >= -1e-12, "{chk:?}");
            assert!(chk.grad_upper_slack >= -1e-12, "{chk:?}");
        }
    }
}
