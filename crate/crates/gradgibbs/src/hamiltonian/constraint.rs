use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{AffineMap, Configuration, Field, LatticeDomain, Strip, SEGMENT_RULE, TRIANGLE_RULE};

use super::energy::{EnergyModel, Hamiltonian};

/// Membership plus the signed distance to the constraint boundary, in the
/// set's own units (sup-distance for clamps, norm slack for neighborhoods,
/// energy density for the cut). Positive margin means strictly inside.
#[derive(Debug, Clone, Copy)]
pub struct Membership {
    pub inside: bool,
    pub margin: f64,
}

/// One quadrature point of the interpolant mesh: site ids and barycentric
/// weights reconstruct `Pi_eps(X)` at the point; the target value is frozen.
#[derive(Debug, Clone)]
struct QuadPoint {
    sites: [usize; 3],
    lambda: [f64; 3],
    n_vertices: usize,
    weight: f64,
    target: [f64; 2],
}

/// Precomputed geometry for the continuum `L^r` distance: simplices of the
/// Kuhn mesh over the site box with per-simplex quadrature points.
#[derive(Debug, Clone)]
struct LrScaffold {
    eps: f64,
    m: usize,
    r: f64,
    points: Vec<QuadPoint>,
    n_simplices: usize,
    /// simplices touching each site
    site_simplices: Vec<Vec<u32>>,
    /// quad point ids per simplex
    simplex_points: Vec<Vec<u32>>,
}

impl LrScaffold {
    fn build(dom: &Arc<LatticeDomain>, v: &Field, r: f64) -> Result<Self> {
        let d = dom.d();
        let m = dom.m();
        let eps = dom.eps();
        let ext = dom.site_ext();
        let mut points = Vec::new();
        let mut site_simplices = vec![Vec::new(); dom.n_sites()];
        let mut simplex_points: Vec<Vec<u32>> = Vec::new();
        let mut target = vec![0.0; m];
        let mut push_simplex =
            |sites: [usize; 3], n_vertices: usize, verts: &[Vec<f64>]| -> Result<()> {
                let sid = simplex_points.len() as u32;
                let mut pts = Vec::new();
                let volume = if n_vertices == 2 { eps } else { eps * eps / 2.0 };
                let rule: Vec<([f64; 3], f64)> = if n_vertices == 2 {
                    SEGMENT_RULE
                        .iter()
                        .map(|&(t, w)| ([1.0 - t, t, 0.0], w))
                        .collect()
                } else {
                    TRIANGLE_RULE.to_vec()
                };
                for (lam, w) in rule {
                    let mut x = vec![0.0; d];
                    for (vi, vert) in verts.iter().enumerate().take(n_vertices) {
                        for k in 0..d {
                            x[k] += lam[vi] * vert[k];
                        }
                    }
                    v.eval(&x, &mut target)?;
                    let mut tg = [0.0; 2];
                    tg[..m].copy_from_slice(&target);
                    let pid = points.len() as u32;
                    points.push(QuadPoint {
                        sites,
                        lambda: lam,
                        n_vertices,
                        weight: w * volume,
                        target: tg,
                    });
                    pts.push(pid);
                }
                for &s in sites.iter().take(n_vertices) {
                    if !site_simplices[s].contains(&sid) {
                        site_simplices[s].push(sid);
                    }
                }
                simplex_points.push(pts);
                Ok(())
            };

        match d {
            1 => {
                for c in 0..(ext[0] - 1) {
                    let lo = dom.site_lo()[0];
                    let i0 = dom.site_index(&[lo + c]).unwrap();
                    let i1 = dom.site_index(&[lo + c + 1]).unwrap();
                    let verts = vec![dom.position(i0), dom.position(i1)];
                    push_simplex([i0, i1, i1], 2, &verts)?;
                }
            }
            2 => {
                let lo = dom.site_lo().to_vec();
                for cx in 0..(ext[0] - 1) {
                    for cy in 0..(ext[1] - 1) {
                        let id = |dx: i64, dy: i64| {
                            dom.site_index(&[lo[0] + cx + dx, lo[1] + cy + dy]).unwrap()
                        };
                        let (i00, i10, i01, i11) = (id(0, 0), id(1, 0), id(0, 1), id(1, 1));
                        let p = |i: usize| dom.position(i);
                        push_simplex([i00, i10, i11], 3, &[p(i00), p(i10), p(i11)])?;
                        push_simplex([i00, i01, i11], 3, &[p(i00), p(i01), p(i11)])?;
                    }
                }
            }
            _ => unreachable!(),
        }
        let n_simplices = simplex_points.len();
        Ok(LrScaffold {
            eps,
            m,
            r,
            points,
            n_simplices,
            site_simplices,
            simplex_points,
        })
    }

    #[inline]
    fn point_value(&self, x: &Configuration, pt: &QuadPoint, subst: Option<(usize, &[f64])>) -> f64 {
        let mut sq = 0.0;
        for alpha in 0..self.m {
            let mut val = 0.0;
            for vi in 0..pt.n_vertices {
                let s = pt.sites[vi];
                let xv = match subst {
                    Some((ss, nv)) if ss == s => nv[alpha],
                    _ => x.values(s)[alpha],
                };
                val += pt.lambda[vi] * xv;
            }
            let diff = self.eps * val - pt.target[alpha];
            sq += diff * diff;
        }
        if self.r == 2.0 {
            sq
        } else {
            sq.sqrt().powf(self.r)
        }
    }

    fn simplex_integral(&self, x: &Configuration, sid: u32, subst: Option<(usize, &[f64])>) -> f64 {
        self.simplex_points[sid as usize]
            .iter()
            .map(|&pid| {
                let pt = &self.points[pid as usize];
                pt.weight * self.point_value(x, pt, subst)
            })
            .sum()
    }

    fn total(&self, x: &Configuration) -> f64 {
        self.points
            .iter()
            .map(|pt| pt.weight * self.point_value(x, pt, None))
            .sum()
    }
}

/// The constraint sets of the partition functions.
#[derive(Clone)]
pub enum ConstraintSet {
    /// `|X(i) - Y(i)| < 1` on the boundary strip.
    SoftClamp {
        anchor: Configuration,
        strip: Arc<Strip>,
    },
    /// `|| Pi_eps(X) - v ||_{L^r} < kappa |Omega|^{1/r + 1/d}`.
    LrNeighborhood {
        scaffold: Arc<LrScaffoldHolder>,
        kappa: f64,
        bound: f64,
    },
    /// `|| X - Z ||_{ell^r} < kappa |Lambda|^{1/r + 1/d}`.
    LatticeLr {
        anchor: Configuration,
        r: f64,
        kappa: f64,
        bound: f64,
    },
    /// Wrapped-bond condition on the torus; exact in the deviation
    /// representation, margin saturated at the bound 2.
    Periodic { deformation: AffineMap },
    /// The high-energy set `{H > K |Omega_eps|}` (an observable set for the
    /// tightness bounds, not a sampling constraint).
    EnergyCut { k: f64 },
    /// Intersection; margin is the minimum over members.
    Intersection(Vec<ConstraintSet>),
    /// No restriction (plain Gibbs sampling plumbing).
    Unconstrained,
}

/// Newtype so the scaffold stays private.
pub struct LrScaffoldHolder(LrScaffold);

impl Clone for LrScaffoldHolder {
    fn clone(&self) -> Self {
        LrScaffoldHolder(self.0.clone())
    }
}

impl ConstraintSet {
    pub fn soft_clamp(anchor: Configuration, r0: f64) -> Self {
        let strip = anchor.domain().boundary_strip(r0);
        ConstraintSet::SoftClamp {
            anchor,
            strip: Arc::new(strip),
        }
    }

    pub fn lr_neighborhood(
        dom: &Arc<LatticeDomain>,
        v: &Field,
        kappa: f64,
        r: f64,
    ) -> Result<Self> {
        let scaffold = LrScaffold::build(dom, v, r)?;
        let vol = dom.shape().volume();
        let bound = kappa * vol.powf(1.0 / r + 1.0 / dom.d() as f64);
        Ok(ConstraintSet::LrNeighborhood {
            scaffold: Arc::new(LrScaffoldHolder(scaffold)),
            kappa,
            bound,
        })
    }

    pub fn lattice_lr(anchor: Configuration, kappa: f64, r: f64) -> Self {
        let n = anchor.domain().n_sites() as f64;
        let d = anchor.domain().d() as f64;
        let bound = kappa * n.powf(1.0 / r + 1.0 / d);
        ConstraintSet::LatticeLr {
            anchor,
            r,
            kappa,
            bound,
        }
    }

    pub fn periodic(deformation: AffineMap) -> Self {
        ConstraintSet::Periodic { deformation }
    }

    pub fn energy_cut(k: f64) -> Self {
        ConstraintSet::EnergyCut { k }
    }

    pub fn intersection(sets: Vec<ConstraintSet>) -> Self {
        ConstraintSet::Intersection(sets)
    }

    /// Strict membership with the signed margin.
    pub fn contains(&self, x: &Configuration, ham: &Hamiltonian) -> Membership {
        let energy = if self.needs_energy() {
            Some(ham.energy(x))
        } else {
            None
        };
        self.contains_cached(x, energy)
    }

    fn needs_energy(&self) -> bool {
        match self {
            ConstraintSet::EnergyCut { .. } => true,
            ConstraintSet::Intersection(sets) => sets.iter().any(|s| s.needs_energy()),
            _ => false,
        }
    }

    /// Membership with a caller-supplied total energy (samplers track it).
    pub fn contains_cached(&self, x: &Configuration, energy: Option<f64>) -> Membership {
        match self {
            ConstraintSet::SoftClamp { anchor, strip } => {
                let m = x.domain().m();
                let mut worst: f64 = 0.0;
                for &i in strip.sites() {
                    let sq: f64 = (0..m)
                        .map(|al| {
                            let d = x.values(i)[al] - anchor.values(i)[al];
                            d * d
                        })
                        .sum();
                    worst = worst.max(sq.sqrt());
                }
                let margin = 1.0 - worst;
                Membership {
                    inside: margin > 0.0,
                    margin,
                }
            }
            ConstraintSet::LrNeighborhood { scaffold, bound, .. } => {
                let norm = scaffold.0.total(x).powf(1.0 / scaffold.0.r);
                Membership {
                    inside: norm < *bound,
                    margin: bound - norm,
                }
            }
            ConstraintSet::LatticeLr {
                anchor, r, bound, ..
            } => {
                let m = x.domain().m();
                let mut total = 0.0;
                for i in 0..x.domain().n_sites() {
                    let sq: f64 = (0..m)
                        .map(|al| {
                            let d = x.values(i)[al] - anchor.values(i)[al];
                            d * d
                        })
                        .sum();
                    total += sq.sqrt().powf(*r);
                }
                let norm = total.powf(1.0 / r);
                Membership {
                    inside: norm < *bound,
                    margin: bound - norm,
                }
            }
            ConstraintSet::Periodic { .. } => Membership {
                inside: true,
                margin: 2.0,
            },
            ConstraintSet::EnergyCut { k } => {
                let n = x.domain().n_sites() as f64;
                let h = energy.expect("energy-cut membership needs the total energy");
                Membership {
                    inside: h > k * n,
                    margin: h / n - k,
                }
            }
            ConstraintSet::Intersection(sets) => {
                let mut inside = true;
                let mut margin = f64::INFINITY;
                for s in sets {
                    let mem = s.contains_cached(x, energy);
                    inside &= mem.inside;
                    margin = margin.min(mem.margin);
                }
                Membership { inside, margin }
            }
            ConstraintSet::Unconstrained => Membership {
                inside: true,
                margin: f64::INFINITY,
            },
        }
    }

    /// Incremental tracker for samplers. Errors for the energy-cut set, which
    /// is an observable rather than a support restriction.
    pub fn tracker(&self, x: &Configuration) -> Result<ConstraintTracker> {
        Ok(match self {
            ConstraintSet::SoftClamp { .. }
            | ConstraintSet::Periodic { .. }
            | ConstraintSet::Unconstrained => ConstraintTracker::Stateless(self.clone()),
            ConstraintSet::LatticeLr { anchor, r, bound, .. } => {
                let m = x.domain().m();
                let mut total = 0.0;
                for i in 0..x.domain().n_sites() {
                    let sq: f64 = (0..m)
                        .map(|al| {
                            let d = x.values(i)[al] - anchor.values(i)[al];
                            d * d
                        })
                        .sum();
                    total += sq.sqrt().powf(*r);
                }
                ConstraintTracker::LatticeLr {
                    anchor: anchor.clone(),
                    r: *r,
                    bound_pow: bound.powf(*r),
                    total,
                }
            }
            ConstraintSet::LrNeighborhood { scaffold, bound, .. } => {
                let sc = &scaffold.0;
                let per: Vec<f64> = (0..sc.n_simplices)
                    .map(|sid| sc.simplex_integral(x, sid as u32, None))
                    .collect();
                let total = per.iter().sum();
                ConstraintTracker::Lr {
                    scaffold: Arc::clone(scaffold),
                    bound_pow: bound.powf(sc.r),
                    per_simplex: per,
                    total,
                }
            }
            ConstraintSet::EnergyCut { .. } => {
                return Err(Error::Compute {
                    task: "constraint tracker".into(),
                    msg: "the energy cut is observable-only; it cannot restrict sampling".into(),
                })
            }
            ConstraintSet::Intersection(sets) => ConstraintTracker::Many(
                sets.iter()
                    .map(|s| s.tracker(x))
                    .collect::<Result<Vec<_>>>()?,
            ),
        })
    }
}

/// Mutable companion of a constraint set during a chain run.
pub enum ConstraintTracker {
    Stateless(ConstraintSet),
    LatticeLr {
        anchor: Configuration,
        r: f64,
        bound_pow: f64,
        total: f64,
    },
    Lr {
        scaffold: Arc<LrScaffoldHolder>,
        bound_pow: f64,
        per_simplex: Vec<f64>,
        total: f64,
    },
    Many(Vec<ConstraintTracker>),
}

impl ConstraintTracker {
    /// Would the move keep the chain inside the set?
    pub fn move_allowed(&self, x: &Configuration, site: usize, new_vals: &[f64]) -> bool {
        match self {
            ConstraintTracker::Stateless(set) => match set {
                ConstraintSet::SoftClamp { anchor, strip } => {
                    if !strip.contains(site) {
                        return true;
                    }
                    let sq: f64 = new_vals
                        .iter()
                        .zip(anchor.values(site))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    sq.sqrt() < 1.0
                }
                ConstraintSet::Periodic { .. } | ConstraintSet::Unconstrained => true,
                _ => unreachable!(),
            },
            ConstraintTracker::LatticeLr {
                anchor,
                r,
                bound_pow,
                total,
            } => {
                let old_sq: f64 = x
                    .values(site)
                    .iter()
                    .zip(anchor.values(site))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let new_sq: f64 = new_vals
                    .iter()
                    .zip(anchor.values(site))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let new_total = total - old_sq.sqrt().powf(*r) + new_sq.sqrt().powf(*r);
                new_total < *bound_pow
            }
            ConstraintTracker::Lr {
                scaffold,
                bound_pow,
                per_simplex,
                total,
            } => {
                let sc = &scaffold.0;
                let mut new_total = *total;
                for &sid in &sc.site_simplices[site] {
                    new_total -= per_simplex[sid as usize];
                    new_total += sc.simplex_integral(x, sid, Some((site, new_vals)));
                }
                new_total < *bound_pow
            }
            ConstraintTracker::Many(ts) => {
                ts.iter().all(|t| t.move_allowed(x, site, new_vals))
            }
        }
    }

    /// Record an accepted move; call before mutating the configuration.
    pub fn commit(&mut self, x: &Configuration, site: usize, new_vals: &[f64]) {
        match self {
            ConstraintTracker::Stateless(_) => {}
            ConstraintTracker::LatticeLr {
                anchor, r, total, ..
            } => {
                let old_sq: f64 = x
                    .values(site)
                    .iter()
                    .zip(anchor.values(site))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let new_sq: f64 = new_vals
                    .iter()
                    .zip(anchor.values(site))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                *total += new_sq.sqrt().powf(*r) - old_sq.sqrt().powf(*r);
            }
            ConstraintTracker::Lr {
                scaffold,
                per_simplex,
                total,
                ..
            } => {
                let sc = &scaffold.0;
                for &sid in &sc.site_simplices[site] {
                    let fresh = sc.simplex_integral(x, sid, Some((site, new_vals)));
                    *total += fresh - per_simplex[sid as usize];
                    per_simplex[sid as usize] = fresh;
                }
            }
            ConstraintTracker::Many(ts) => {
                for t in ts {
                    t.commit(x, site, new_vals);
                }
            }
        }
    }

    /// Recompute cached state from scratch (audit hook).
    pub fn refresh(&mut self, x: &Configuration) {
        match self {
            ConstraintTracker::Stateless(_) => {}
            ConstraintTracker::LatticeLr {
                anchor, r, total, ..
            } => {
                let m = x.domain().m();
                *total = (0..x.domain().n_sites())
                    .map(|i| {
                        let sq: f64 = (0..m)
                            .map(|al| {
                                let d = x.values(i)[al] - anchor.values(i)[al];
                                d * d
                            })
                            .sum();
                        sq.sqrt().powf(*r)
                    })
                    .sum();
            }
            ConstraintTracker::Lr {
                scaffold,
                per_simplex,
                total,
                ..
            } => {
                let sc = &scaffold.0;
                for sid in 0..sc.n_simplices {
                    per_simplex[sid] = sc.simplex_integral(x, sid as u32, None);
                }
                *total = per_simplex.iter().sum();
            }
            ConstraintTracker::Many(ts) => {
                for t in ts {
                    t.refresh(x);
                }
            }
        }
    }
}
