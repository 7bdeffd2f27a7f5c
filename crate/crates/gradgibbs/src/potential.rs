//! Finite-range interaction potentials and their growth constants.
//!
//! A potential acts on a finite patch of sites around the origin and, for the
//! built-in kinds, depends only on the forward differences `X(e_k) - X(0)`.
//! The growth constants `(c, p)` (lower bound) and `(C, r)` (upper convexity
//! bound) feed every printed constant downstream: the subadditivity constant,
//! the free-energy lower bound, and the exponential-tightness factor.
//!
//! The plaquette functional [`plaquette_signed_area`] is the discrete null
//! Lagrangian used by the non-convexity experiment. Its argument order is
//! pinned by the normalization `V(id) = 1`, `V(0) = 0`: the printed second
//! determinant must take its differences from the corner `i3`, otherwise the
//! identity map evaluates to zero.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::lattice::AffineMap;

/// Shape of the interaction patch `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchKind {
    /// `{0, +-e_1, ..., +-e_d}`; diameter 2. The default.
    FullCross,
    /// `{0, e_1, ..., e_d}`; diameter 1. Bond potentials for small oracles.
    ForwardBonds,
}

impl PatchKind {
    pub fn offsets(self, d: usize) -> Vec<Vec<i64>> {
        let mut out = vec![vec![0i64; d]];
        for k in 0..d {
            let mut plus = vec![0i64; d];
            plus[k] = 1;
            out.push(plus);
            if self == PatchKind::FullCross {
                let mut minus = vec![0i64; d];
                minus[k] = -1;
                out.push(minus);
            }
        }
        out
    }

    /// Chebyshev diameter of the patch, the strip width `R0`.
    pub fn range(self) -> f64 {
        match self {
            PatchKind::FullCross => 2.0,
            PatchKind::ForwardBonds => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PotentialKind {
    /// `U = sum_k |X(e_k) - X(0)|^2`
    GaussianGradient,
    /// `U = sum_k |X(e_k) - X(0)|^p`
    PPowerGradient { p: f64 },
}

/// The declared growth constants: `U >= c |grad X(0)|^p` and the convexity
/// upper bound with constants `(C, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants {
    pub c: f64,
    pub p: f64,
    pub big_c: f64,
    pub r: f64,
}

impl GrowthConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.c > 0.0 && self.r > 1.0 && self.big_c > 1.0) {
            return Err(Error::Config {
                path: "potential.constants".into(),
                msg: format!("need p>0, c>0, r>1, C>1, got {self:?}"),
            });
        }
        Ok(())
    }

    /// Additional restrictions used by the large-deviations experiments.
    pub fn validate_for_ldp(&self, d: usize) -> Result<()> {
        self.validate()?;
        if !(self.r >= self.p && self.p > 1.0 && 1.0 / self.r > 1.0 / self.p - 1.0 / d as f64) {
            return Err(Error::Config {
                path: "potential.constants".into(),
                msg: format!("LDP needs r >= p > 1 and 1/r > 1/p - 1/d, got {self:?}"),
            });
        }
        Ok(())
    }
}

/// A finite-range interaction with declared constants.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub d: usize,
    pub m: usize,
    pub kind: PotentialKind,
    pub patch: PatchKind,
    pub growth: GrowthConstants,
    /// Weight `M` of the additive plaquette (null-Lagrangian) term; zero for
    /// plain gradient potentials. Kept out of the patch potential: the
    /// plaquette term is sign-indefinite and is assembled by the Hamiltonian.
    pub null_weight: f64,
}

impl PotentialSpec {
    /// Quadratic potential. `c = 1, p = 2` hold with equality; `C = 6(d+1)`
    /// follows from `|a+b+c|^2 <= 3(|a|^2+|b|^2+|c|^2)` plus the patch bound
    /// on `|grad Z(0)|^2`.
    pub fn gaussian(d: usize, m: usize) -> Self {
        PotentialSpec {
            d,
            m,
            kind: PotentialKind::GaussianGradient,
            patch: PatchKind::FullCross,
            growth: GrowthConstants {
                c: 1.0,
                p: 2.0,
                big_c: 6.0 * (d as f64 + 1.0),
                r: 2.0,
            },
            null_weight: 0.0,
        }
    }

    /// `p`-power potential with its valid declared constants.
    pub fn p_power(d: usize, m: usize, p: f64) -> Self {
        assert!(p > 1.0);
        let big_c = 3f64.powf(p - 1.0) * 2f64.powf(p - 1.0) * (d as f64 + 1.0);
        PotentialSpec {
            d,
            m,
            kind: PotentialKind::PPowerGradient { p },
            patch: PatchKind::FullCross,
            growth: GrowthConstants {
                c: 1.0,
                p,
                big_c,
                r: p,
            },
            null_weight: 0.0,
        }
    }

    /// Switch to the bond patch `{0, e_k}` (range 1).
    pub fn with_forward_patch(mut self) -> Self {
        self.patch = PatchKind::ForwardBonds;
        self
    }

    /// Add the plaquette term with weight `m_weight` (requires d = m = 2 at
    /// energy-assembly time).
    pub fn with_null_weight(mut self, m_weight: f64) -> Self {
        self.null_weight = m_weight;
        self
    }

    pub fn range(&self) -> f64 {
        self.patch.range()
    }

    pub fn is_quadratic(&self) -> bool {
        self.kind == PotentialKind::GaussianGradient && self.null_weight == 0.0
    }

    /// Exponent applied to each forward difference.
    pub fn exponent(&self) -> f64 {
        match self.kind {
            PotentialKind::GaussianGradient => 2.0,
            PotentialKind::PPowerGradient { p } => p,
        }
    }

    /// Patch energy from forward differences `X(e_k) - X(0)`.
    ///
    /// `diffs` is row-major `d x m`.
    pub fn eval_diffs(&self, diffs: &[f64]) -> f64 {
        let m = self.m;
        let p = self.exponent();
        let mut total = 0.0;
        for k in 0..self.d {
            let sq: f64 = diffs[k * m..(k + 1) * m].iter().map(|v| v * v).sum();
            total += if p == 2.0 { sq } else { sq.sqrt().powf(p) };
        }
        total
    }

    /// Patch energy from explicit patch values (API form; the Hamiltonian
    /// uses direct bond loops).
    pub fn eval_patch(&self, values: &HashMap<Vec<i64>, Vec<f64>>) -> Result<f64> {
        let origin = vec![0i64; self.d];
        let x0 = values
            .get(&origin)
            .ok_or(Error::MissingPatchSite { offset: origin })?;
        let mut diffs = vec![0.0; self.d * self.m];
        for k in 0..self.d {
            let mut e = vec![0i64; self.d];
            e[k] = 1;
            let xk = values
                .get(&e)
                .ok_or(Error::MissingPatchSite { offset: e.clone() })?;
            for alpha in 0..self.m {
                diffs[k * self.m + alpha] = xk[alpha] - x0[alpha];
            }
        }
        // remaining patch sites must be present even though the built-in
        // kinds do not read them
        for off in self.patch.offsets(self.d) {
            if !values.contains_key(&off) {
                return Err(Error::MissingPatchSite { offset: off });
            }
        }
        Ok(self.eval_diffs(&diffs))
    }
}

/// Signed area of the image of a unit plaquette.
///
/// Corners are ordered `(i0, i1, i2, i3) = ((0,0), (1,0), (0,1), (1,1))`;
/// values are the four image points in `R^2`. Normalized so the identity map
/// gives 1 and the zero map gives 0.
pub fn plaquette_signed_area(x0: &[f64], x1: &[f64], x2: &[f64], x3: &[f64]) -> f64 {
    let det = |u0: f64, u1: f64, v0: f64, v1: f64| u0 * v1 - u1 * v0;
    0.5 * det(x1[0] - x0[0], x1[1] - x0[1], x2[0] - x0[0], x2[1] - x0[1])
        + 0.5 * det(x2[0] - x3[0], x2[1] - x3[1], x1[0] - x3[0], x1[1] - x3[1])
}

/// `c(p, m) = integral over R^m of exp(-|xi|^p)`, in closed form:
/// `(2 pi^{m/2} / Gamma(m/2)) * Gamma(m/p) / p`.
pub fn c_integral(p: f64, m: usize) -> f64 {
    assert!(p > 0.0 && m >= 1);
    let mf = m as f64;
    let surface = 2.0 * std::f64::consts::PI.powf(mf / 2.0) / gamma(mf / 2.0);
    surface * gamma(mf / p) / p
}

/// The three printed constants derived from the growth data.
#[derive(Debug, Clone, Copy)]
pub struct BoundConstants {
    /// `B(L) = C (1 + C + (1 + C d |L|^r) R0^d)`: subadditivity defect and
    /// free-energy upper bound.
    pub subadditivity: f64,
    /// `b = (m/p) log c - log c(p,m)`: free-energy lower bound.
    pub lower: f64,
    /// `D = 2 (2/c)^{m/p} c(p,m)`: exponential-tightness base.
    pub tightness: f64,
}

pub fn bound_constants(g: &GrowthConstants, m: usize, d: usize, r0: f64, l: &AffineMap) -> BoundConstants {
    let mf = m as f64;
    let l_norm = l.norm();
    let subadditivity = g.big_c
        * (1.0 + g.big_c + (1.0 + g.big_c * d as f64 * l_norm.powf(g.r)) * r0.powi(d as i32));
    let lower = mf / g.p * g.c.ln() - c_integral(g.p, m).ln();
    let tightness = 2.0 * (2.0 / g.c).powf(mf / g.p) * c_integral(g.p, m);
    BoundConstants {
        subadditivity,
        lower,
        tightness,
    }
}

/// Worst-case slack of the declared growth inequalities over random patches.
#[derive(Debug, Clone, Copy)]
pub struct GrowthProbe {
    /// min over samples of `U(X) - c |grad X(0)|^p`
    pub a1_min_slack: f64,
    /// min over samples of `C(1 + U(X) + U(Y) + sum_A |Z(i)|^r) - U(sX + (1-s)Y + Z)`
    pub a2_min_slack: f64,
    pub samples: usize,
}

/// Randomized falsification probe for (A1)/(A2). Patch entries are drawn from
/// a Student-t with 3 degrees of freedom: inequality failures live in the
/// tails. Negative slack means the declared constants are falsified; that is
/// a reported result, not an error.
pub fn probe_growth(spec: &PotentialSpec, n_samples: usize, rng: &mut impl Rng) -> GrowthProbe {
    let t3 = StudentT::new(3.0).unwrap();
    let (d, m) = (spec.d, spec.m);
    let n_offsets = spec.patch.offsets(d).len();
    let draw_patch = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        (0..n_offsets * m).map(|_| t3.sample(rng)).collect()
    };
    // offsets() lists origin first, then forward directions (interleaved with
    // backward for the cross); locate forward offsets once
    let offsets = spec.patch.offsets(d);
    let fwd: Vec<usize> = (0..d)
        .map(|k| {
            offsets
                .iter()
                .position(|o| o.iter().enumerate().all(|(j, &v)| v == i64::from(j == k)))
                .unwrap()
        })
        .collect();
    let u_of = |patch: &[f64]| -> f64 {
        let mut diffs = vec![0.0; d * m];
        for k in 0..d {
            for alpha in 0..m {
                diffs[k * m + alpha] = patch[fwd[k] * m + alpha] - patch[alpha];
            }
        }
        spec.eval_diffs(&diffs)
    };
    let grad_p = |patch: &[f64]| -> f64 {
        let mut total = 0.0;
        for k in 0..d {
            let sq: f64 = (0..m)
                .map(|alpha| {
                    let v = patch[fwd[k] * m + alpha] - patch[alpha];
                    v * v
                })
                .sum();
            total += sq.sqrt().powf(spec.growth.p);
        }
        total
    };

    let mut a1 = f64::INFINITY;
    let mut a2 = f64::INFINITY;
    for _ in 0..n_samples {
        let x = draw_patch(rng);
        a1 = a1.min(u_of(&x) - spec.growth.c * grad_p(&x));

        let y = draw_patch(rng);
        let z = draw_patch(rng);
        let s: f64 = rng.random();
        let mixed: Vec<f64> = x
            .iter()
            .zip(&y)
            .zip(&z)
            .map(|((&xv, &yv), &zv)| s * xv + (1.0 - s) * yv + zv)
            .collect();
        let z_pow: f64 = (0..n_offsets)
            .map(|o| {
                let sq: f64 = z[o * m..(o + 1) * m].iter().map(|v| v * v).sum();
                sq.sqrt().powf(spec.growth.r)
            })
            .sum();
        let rhs = spec.growth.big_c * (1.0 + u_of(&x) + u_of(&y) + z_pow);
        a2 = a2.min(rhs - u_of(&mixed));
    }
    GrowthProbe {
        a1_min_slack: a1,
        a2_min_slack: a2,
        samples: n_samples,
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numeric::adaptive_simpson;

    fn patch_map(spec: &PotentialSpec, f: impl Fn(&[i64]) -> Vec<f64>) -> HashMap<Vec<i64>, Vec<f64>> {
        spec.patch
            .offsets(spec.d)
            .into_iter()
            .map(|o| {
                let v = f(&o);
                (o, v)
            })
            .collect()
    }

    #[test]
    fn constant_patch_has_zero_energy() {
        let spec = PotentialSpec::gaussian(2, 2);
        let vals = patch_map(&spec, |_| vec![3.0, -1.0]);
        assert_eq!(spec.eval_patch(&vals).unwrap(), 0.0);
    }

    #[test]
    fn single_bond_energy() {
        // d=1, m=1, gaussian, X(0)=0, X(1)=2 -> 4
        let spec = PotentialSpec::gaussian(1, 1);
        let vals = patch_map(&spec, |o| vec![if o[0] == 1 { 2.0 } else { 0.0 }]);
        assert_eq!(spec.eval_patch(&vals).unwrap(), 4.0);
    }

    #[test]
    fn affine_patch_energy_is_column_norms() {
        let spec = PotentialSpec::gaussian(2, 2);
        let l = AffineMap::linear(2, 2, vec![1.0, 2.0, -0.5, 0.25]);
        let vals = patch_map(&spec, |o| {
            let mut out = vec![0.0; 2];
            l.at_site(o, &mut out);
            out
        });
        let want: f64 = (0..2)
            .map(|k| l.column(k).iter().map(|v| v * v).sum::<f64>())
            .sum();
        assert!((spec.eval_patch(&vals).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn missing_patch_site_errors() {
        let spec = PotentialSpec::gaussian(1, 1);
        let mut vals = patch_map(&spec, |_| vec![0.0]);
        vals.remove(&vec![-1i64]);
        assert!(matches!(
            spec.eval_patch(&vals),
            Err(Error::MissingPatchSite { .. })
        ));
    }

    #[test]
    fn plaquette_area_normalization() {
        // identity square -> 1, zero map -> 0, dilation by 2 -> 4
        let id = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        assert!((plaquette_signed_area(&id[0], &id[1], &id[2], &id[3]) - 1.0).abs() < 1e-15);
        let z = [0.0, 0.0];
        assert_eq!(plaquette_signed_area(&z, &z, &z, &z), 0.0);
        let two: Vec<[f64; 2]> = id.iter().map(|p| [2.0 * p[0], 2.0 * p[1]]).collect();
        assert!((plaquette_signed_area(&two[0], &two[1], &two[2], &two[3]) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn c_integral_trivial_values() {
        assert!((c_integral(2.0, 1) - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!((c_integral(2.0, 2) - std::f64::consts::PI).abs() < 1e-12);
        assert!((c_integral(1.0, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn c_integral_matches_radial_quadrature() {
        for &m in &[1usize, 2] {
            for &p in &[1.0f64, 1.5, 2.0, 4.0] {
                let mf = m as f64;
                let surface = 2.0 * std::f64::consts::PI.powf(mf / 2.0) / gamma(mf / 2.0);
                let upper = 60f64.powf(1.0 / p);
                let mut integrand = |rho: f64| (-rho.powf(p)).exp() * rho.powf(mf - 1.0);
                let quad = surface * adaptive_simpson(&mut integrand, 0.0, upper, 1e-12);
                let closed = c_integral(p, m);
                assert!(
                    (quad - closed).abs() < 1e-8,
                    "p={p} m={m}: {quad} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn printed_constants_match_formulas() {
        // C=2, d=1, r=2, R0=1, |L|=1 -> B = 2(1+2+3) = 12
        let g = GrowthConstants {
            c: 1.0,
            p: 2.0,
            big_c: 2.0,
            r: 2.0,
        };
        let l = AffineMap::linear(1, 1, vec![1.0]);
        let b = bound_constants(&g, 1, 1, 1.0, &l);
        assert!((b.subadditivity - 12.0).abs() < 1e-12);
        // c=1, p=2, m=1: b = -log(sqrt(pi)), D = 2 sqrt(2 pi)
        assert!((b.lower + 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
        assert!((b.tightness - 2.0 * (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
        assert!((b.lower + 0.5724).abs() < 1e-4);
        assert!((b.tightness - 5.0133).abs() < 1e-4);
    }

    #[test]
    fn growth_probe_gaussian_slack() {
        let spec = PotentialSpec::gaussian(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let probe = probe_growth(&spec, 20_000, &mut rng);
        // A1 holds with equality for the built-in kinds
        assert!(probe.a1_min_slack.abs() < 1e-10, "{probe:?}");
        assert!(probe.a2_min_slack >= 0.0, "{probe:?}");
    }

    #[test]
    fn growth_probe_p_power_slack() {
        let spec = PotentialSpec::p_power(1, 1, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let probe = probe_growth(&spec, 20_000, &mut rng);
        assert!(probe.a1_min_slack.abs() < 1e-9, "{probe:?}");
        assert!(probe.a2_min_slack >= 0.0, "{probe:?}");
    }

    #[test]
    fn rigid_motion_invariance() {
        // U(R(tau_a X)) = U(X) for random rotations and shifts, d=m=2.
        let spec = PotentialSpec::gaussian(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let offsets = spec.patch.offsets(2);
        for _ in 0..1000 {
            let patch: Vec<Vec<f64>> = offsets
                .iter()
                .map(|_| vec![rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0])
                .collect();
            let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            let shift = [rng.random::<f64>() * 10.0 - 5.0, rng.random::<f64>() * 10.0 - 5.0];
            let (c, s) = (theta.cos(), theta.sin());
            let moved: Vec<Vec<f64>> = patch
                .iter()
                .map(|v| {
                    let x = v[0] + shift[0];
                    let y = v[1] + shift[1];
                    vec![c * x - s * y, s * x + c * y]
                })
                .collect();
            let as_map = |vals: &[Vec<f64>]| -> HashMap<Vec<i64>, Vec<f64>> {
                offsets
                    .iter()
                    .cloned()
                    .zip(vals.iter().cloned())
                    .collect()
            };
            let u0 = spec.eval_patch(&as_map(&patch)).unwrap();
            let u1 = spec.eval_patch(&as_map(&moved)).unwrap();
            assert!((u0 - u1).abs() < 1e-10 * (1.0 + u0), "{u0} vs {u1}");
        }
    }

    #[test]
    fn builtin_potentials_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for spec in [PotentialSpec::gaussian(2, 1), PotentialSpec::p_power(2, 1, 3.0)] {
            for _ in 0..500 {
                let diffs: Vec<f64> = (0..spec.d * spec.m)
                    .map(|_| rng.random::<f64>() * 8.0 - 4.0)
                    .collect();
                assert!(spec.eval_diffs(&diffs) >= 0.0);
            }
        }
    }
}
