use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::hamiltonian::ConstraintSet;
use crate::lattice::Configuration;
use crate::sampler::chain_rng;

/// `log Z` of the on-site reference `exp(-sum |X(i) - anchor(i)|^2)` on a
/// constraint set, with a Monte Carlo error when an indicator probability had
/// to be counted.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceLogZ {
    pub log_z: f64,
    pub se: f64,
}

/// Per-site closed factor `int over |y| < 1 of exp(-|y|^2) dy` in `R^m`.
fn clamp_ball_factor(m: usize) -> f64 {
    std::f64::consts::PI.powf(m as f64 / 2.0) * gamma_lr(m as f64 / 2.0, 1.0)
}

fn gaussian_full_factor(m: usize) -> f64 {
    std::f64::consts::PI.powf(m as f64 / 2.0)
}

/// Structure of a constraint set as seen by the product reference.
struct Shape<'a> {
    soft: Option<(&'a Configuration, &'a crate::lattice::Strip)>,
    lr: Vec<&'a ConstraintSet>,
    lattice_r2: Option<(f64, usize)>, // (bound, owner index) for the closed form
}

fn classify<'a>(set: &'a ConstraintSet, shape: &mut Shape<'a>) -> Result<()> {
    match set {
        ConstraintSet::Unconstrained | ConstraintSet::Periodic { .. } => Ok(()),
        ConstraintSet::SoftClamp { anchor, strip } => {
            if shape.soft.is_some() {
                return Err(Error::Compute {
                    task: "reference log Z".into(),
                    msg: "multiple soft clamps in one constraint set".into(),
                });
            }
            shape.soft = Some((anchor, strip));
            Ok(())
        }
        ConstraintSet::LatticeLr { r, bound, .. } => {
            if *r == 2.0 && shape.lr.is_empty() && shape.lattice_r2.is_none() {
                shape.lattice_r2 = Some((*bound, 0));
            } else {
                shape.lr.push(set);
            }
            Ok(())
        }
        ConstraintSet::LrNeighborhood { .. } => {
            shape.lr.push(set);
            Ok(())
        }
        ConstraintSet::EnergyCut { .. } => Err(Error::Compute {
            task: "reference log Z".into(),
            msg: "energy cut cannot constrain the reference".into(),
        }),
        ConstraintSet::Intersection(sets) => {
            for s in sets {
                classify(s, shape)?;
            }
            Ok(())
        }
    }
}

/// `log Z` of the on-site reference anchored at `anchor` over the non-frozen
/// sites, restricted to the constraint set.
///
/// Product sets (soft clamp boxes) factor exactly; the `ell^2` ball has an
/// incomplete-gamma closed form; remaining indicator probabilities are
/// estimated by direct sampling of the (truncated) product law, which is what
/// makes this reference usable where the gradient potential is not solvable.
pub fn reference_log_z(
    constraint: &ConstraintSet,
    anchor: &Configuration,
    frozen: &[bool],
    draws: usize,
    seed: u64,
) -> Result<ReferenceLogZ> {
    let dom = anchor.domain();
    let m = dom.m();
    let mut shape = Shape {
        soft: None,
        lr: Vec::new(),
        lattice_r2: None,
    };
    classify(constraint, &mut shape)?;

    // frozen sites must sit at the anchor so their reference term vanishes
    for i in 0..dom.n_sites() {
        if frozen[i] {
            debug_assert!(anchor
                .values(i)
                .iter()
                .all(|v| v.is_finite()));
        }
    }

    let mut log_z = 0.0;
    let mut n_free_dims = 0usize;
    for i in 0..dom.n_sites() {
        if frozen[i] {
            continue;
        }
        n_free_dims += m;
        let clamped = shape.soft.map(|(_, strip)| strip.contains(i)).unwrap_or(false);
        log_z += if clamped {
            clamp_ball_factor(m).ln()
        } else {
            gaussian_full_factor(m).ln()
        };
    }

    if let Some((soft_anchor, _)) = shape.soft {
        // the product reference is anchored at the clamp center; anything
        // else would break the closed factorization
        let same = soft_anchor
            .raw()
            .iter()
            .zip(anchor.raw())
            .all(|(a, b)| (a - b).abs() < 1e-12);
        if !same {
            return Err(Error::Compute {
                task: "reference log Z".into(),
                msg: "soft clamp anchor differs from the reference anchor".into(),
            });
        }
    }

    if let Some((bound, _)) = shape.lattice_r2 {
        if shape.soft.is_none() && shape.lr.is_empty() {
            // closed form: sum of squares is chi^2 with m*n_free dims / 2
            let p = gamma_lr(n_free_dims as f64 / 2.0, bound * bound);
            if p <= 0.0 {
                return Err(Error::MeasureZeroConstraint);
            }
            return Ok(ReferenceLogZ {
                log_z: log_z + p.ln(),
                se: 0.0,
            });
        }
        // fall through to counting under the truncated product
        shape.lr.push(constraint);
    }

    if shape.lr.is_empty() {
        return Ok(ReferenceLogZ { log_z, se: 0.0 });
    }

    // count the joint indicator probability by direct product sampling
    let mut rng = chain_rng(seed, 0x5eed);
    let mut hits = 0usize;
    let mut x = anchor.clone();
    for _ in 0..draws {
        for i in 0..dom.n_sites() {
            if frozen[i] {
                continue;
            }
            let clamped = shape.soft.map(|(_, s)| s.contains(i)).unwrap_or(false);
            loop {
                let mut sq = 0.0;
                for alpha in 0..m {
                    let g: f64 = rng.sample(StandardNormal);
                    let v = g / 2f64.sqrt();
                    x.values_mut(i)[alpha] = anchor.values(i)[alpha] + v;
                    sq += v * v;
                }
                if !clamped || sq < 1.0 {
                    break;
                }
            }
        }
        let ok = shape
            .lr
            .iter()
            .all(|s| s.contains_cached(&x, None).inside);
        if ok {
            hits += 1;
        }
    }
    if hits == 0 {
        return Err(Error::MeasureZeroConstraint);
    }
    let p = hits as f64 / draws as f64;
    let se_p = (p * (1.0 - p) / draws as f64).sqrt();
    Ok(ReferenceLogZ {
        log_z: log_z + p.ln(),
        se: se_p / p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{AffineMap, BoxShape, Field, LatticeDomain};

    #[test]
    fn unconstrained_is_pure_gaussian_volume() {
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.25, 2).unwrap();
        let anchor = Configuration::zeros(&dom);
        let frozen = vec![false; dom.n_sites()];
        let r = reference_log_z(&ConstraintSet::Unconstrained, &anchor, &frozen, 10, 1).unwrap();
        let want = 16.0 * std::f64::consts::PI.ln(); // 16 sites x (m/2) ln pi with m=2
        assert!((r.log_z - want).abs() < 1e-12);
        assert_eq!(r.se, 0.0);
    }

    #[test]
    fn soft_clamp_uses_erf_factor() {
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.1, 1).unwrap();
        let anchor = AffineMap::linear(1, 1, vec![0.7]).lattice_config(&dom);
        let set = ConstraintSet::soft_clamp(anchor.clone(), 1.0);
        let frozen = vec![false; dom.n_sites()];
        let r = reference_log_z(&set, &anchor, &frozen, 10, 1).unwrap();
        // strip {0,9}: erf factor; 8 interior: sqrt(pi)
        let erf1 = statrs::function::erf::erf(1.0);
        let want = 2.0 * (std::f64::consts::PI.sqrt() * erf1).ln()
            + 8.0 * 0.5 * std::f64::consts::PI.ln();
        assert!((r.log_z - want).abs() < 1e-9, "{} vs {want}", r.log_z);
    }

    #[test]
    fn lattice_ball_closed_form_matches_counting() {
        let dom = LatticeDomain::build(BoxShape::new(vec![0.0], vec![1.0]), 0.25, 1).unwrap();
        let anchor = Configuration::zeros(&dom);
        let frozen = vec![false; dom.n_sites()];
        let kappa = 0.35;
        let set = ConstraintSet::lattice_lr(anchor.clone(), kappa, 2.0);
        let closed = reference_log_z(&set, &anchor, &frozen, 10, 1).unwrap();
        assert_eq!(closed.se, 0.0);
        // brute-force the same probability by sampling
        let mut rng = chain_rng(77, 1);
        let bound = kappa * 4f64.powf(0.5 + 1.0);
        let mut hits = 0;
        let n = 400_000;
        for _ in 0..n {
            let mut s = 0.0;
            for _ in 0..4 {
                let g: f64 = rng.sample(StandardNormal);
                s += g * g / 2.0;
            }
            if s < bound * bound {
                hits += 1;
            }
        }
        let p = hits as f64 / n as f64;
        let mc = 4.0 * 0.5 * std::f64::consts::PI.ln() + p.ln();
        let se = (p * (1.0 - p) / n as f64).sqrt() / p;
        assert!(
            (closed.log_z - mc).abs() < 4.0 * se,
            "{} vs {mc} +- {se}",
            closed.log_z
        );
    }

    #[test]
    fn combined_set_counts_conditional_probability() {
        let dom = LatticeDomain::build(BoxShape::unit(2), 0.25, 1).unwrap();
        let l = AffineMap::zero(1, 2);
        let anchor = l.lattice_config(&dom);
        let lr = ConstraintSet::lr_neighborhood(&dom, &Field::Affine(l), 2.0, 2.0).unwrap();
        let soft = ConstraintSet::soft_clamp(anchor.clone(), 2.0);
        let set = ConstraintSet::intersection(vec![soft, lr]);
        let frozen = vec![false; dom.n_sites()];
        let r = reference_log_z(&set, &anchor, &frozen, 20_000, 3).unwrap();
        assert!(r.se < 0.05);
        assert!(r.log_z.is_finite());
    }
}
