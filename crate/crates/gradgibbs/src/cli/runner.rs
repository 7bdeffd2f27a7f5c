use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::free_energy::{
    check_subadditivity_oracle, check_subadditivity_quadrature, check_tightness_mc,
    check_tightness_quadrature, derive_seed, estimate_free_energy, per_eps_log_z,
    quasiconvexity_gap_quadratic, quasiconvexity_probe_mc, EstimateBudget, Formulation,
    FreeEnergyEstimate,
};
use crate::hamiltonian::SiteBox;
use crate::lattice::{AffineMap, LatticeDomain};
use crate::ldp::{
    rate_comparison, rate_functional, select_blowup_origin, slope_check, window_stats, ClampMode,
    MacroField, WMap, WindowSpec,
};
use crate::nonconvexity::{boundary_term_scan, nonconvexity_threshold, run_nonconvexity};
use crate::potential::{bound_constants, c_integral, PotentialSpec};
use crate::sampler::dlr_resample;
use crate::stats;

use super::config::{ExperimentConfig, ExperimentKind};
use super::records::RecordStore;

/// Outcome of a run: per-check verdicts and where the records went.
#[derive(Debug)]
pub struct RunSummary {
    pub verdicts: Vec<(String, bool)>,
    pub records_dir: PathBuf,
}

impl RunSummary {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|(_, ok)| *ok)
    }
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var("GRADGIBBS_OUT") {
        Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(&cfg.output),
    }
}

fn budget_of(cfg: &ExperimentConfig) -> EstimateBudget {
    EstimateBudget {
        path_points: cfg.budget.path_points,
        sweeps_per_point: cfg.budget.sweeps,
        sweeps_ref_eps: 0.125,
        ref_draws: cfg.budget.ref_draws,
        r: cfg.constraint.as_ref().map_or(2.0, |c| c.r),
    }
}

fn deformation_of(cfg: &ExperimentConfig, spec: &PotentialSpec) -> Result<AffineMap> {
    match &cfg.deformation {
        Some(d) => d.build(spec.m, spec.d),
        None => Ok(AffineMap::zero(spec.m, spec.d)),
    }
}

/// Execute the configured experiment, appending records and returning the
/// verdict list. Completed tasks are skipped unless `force` is set.
pub fn run(cfg: &ExperimentConfig, force: bool, workers: usize) -> Result<RunSummary> {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build_global();
    let dir = output_dir(cfg);
    let mut store = RecordStore::open(&dir, cfg.content_hash())?;
    let spec = cfg.potential.build()?;
    let shape = cfg.domain.build_shape()?;
    let budget = budget_of(cfg);

    let mut verdicts = Vec::new();
    match cfg.experiment {
        ExperimentKind::CheckConstants => {
            let l = deformation_of(cfg, &spec)?;
            let g = spec.growth;
            let consts = bound_constants(&g, spec.m, spec.d, spec.range(), &l);
            let c_pm = c_integral(g.p, spec.m);
            let payload = json!({
                "c_integral": c_pm,
                "lower_bound_b": consts.lower,
                "upper_bound_B": consts.subadditivity,
                "tightness_D": consts.tightness,
                "constants": g,
                "deformation_norm": l.norm(),
            });
            println!("c(p={}, m={}) = {c_pm:.10}", g.p, spec.m);
            println!("b  = {:.10}", consts.lower);
            println!("B(L) = {:.10}", consts.subadditivity);
            println!("D  = {:.10}", consts.tightness);
            if !store.is_done("constants") || force {
                store.push("constants", &payload, 0.0)?;
            }
            verdicts.push(("constants-finite".into(), payload["c_integral"].as_f64().unwrap().is_finite()));
        }

        ExperimentKind::FreeEnergy => {
            let l = deformation_of(cfg, &spec)?;
            let formulations = collect_formulations(cfg)?;
            let tasks: Vec<(String, Formulation)> = formulations
                .iter()
                .map(|f| (format!("free-energy|{}", f.tag()), *f))
                .collect();
            let todo: Vec<&(String, Formulation)> = tasks
                .iter()
                .filter(|(name, _)| force || !store.is_done(name))
                .collect();
            let results: Vec<(String, FreeEnergyEstimate, f64)> = todo
                .par_iter()
                .map(|(name, f)| {
                    let t0 = Instant::now();
                    let est = estimate_free_energy(
                        &spec,
                        &l,
                        *f,
                        &shape,
                        &cfg.domain.eps_list,
                        &budget,
                        cfg.seed,
                    )?;
                    Ok((name.clone(), est, t0.elapsed().as_secs_f64()))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut rows = Vec::new();
            let consts = bound_constants(&spec.growth, spec.m, spec.d, spec.range(), &l);
            let mut bounds_ok = true;
            let mut estimates = Vec::new();
            for (name, est, wall) in results {
                for p in &est.per_eps {
                    rows.push(format!(
                        "{},{} ,{:.6e},{:.6e},{:.6e}",
                        est.formulation_tag, p.eps, p.value, p.se, p.log_z
                    ));
                    bounds_ok &= p.value >= consts.lower - 3.0 * p.se - 1e-9
                        && p.value <= consts.subadditivity + 3.0 * p.se + 1e-9;
                }
                store.push(&name, &est, wall)?;
                estimates.push(est);
            }
            store.write_csv(
                "w_vs_eps.csv",
                "formulation,eps,value,se,log_z",
                &rows,
            )?;
            verdicts.push(("per-eps-values-in-[b,B]".into(), bounds_ok));
            if estimates.len() >= 2 {
                let mut agree = true;
                for i in 0..estimates.len() {
                    for j in (i + 1)..estimates.len() {
                        let (a, b) = (&estimates[i], &estimates[j]);
                        let tol = 3.0 * (a.se * a.se + b.se * b.se).sqrt();
                        agree &= (a.value - b.value).abs() <= tol;
                    }
                }
                verdicts.push(("formulations-agree-3se".into(), agree));
            }
        }

        ExperimentKind::Subadditivity => {
            let l = deformation_of(cfg, &spec)?;
            let mut all_ok = true;
            for &eps in &cfg.domain.eps_list {
                let task = format!("subadditivity|eps={eps}");
                if store.is_done(&task) && !force {
                    continue;
                }
                let t0 = Instant::now();
                let dom = LatticeDomain::build(shape.clone(), eps, spec.m)?;
                let whole = SiteBox::full(&dom);
                let (axis, cut) = match &cfg.split {
                    Some(s) => (s.axis, s.cut),
                    None => (0, (whole.lo[0] + whole.hi[0]) / 2),
                };
                let rep = if spec.d == 2 && spec.is_quadratic() {
                    check_subadditivity_oracle(&spec, &l, &dom, axis, cut)?
                } else {
                    if dom.n_sites() * spec.m > 6 {
                        return Err(Error::Compute {
                            task,
                            msg: "quadrature subadditivity needs <= 6 free dimensions".into(),
                        });
                    }
                    check_subadditivity_quadrature(&spec, &l, &dom, axis, cut, 28)?
                };
                all_ok &= rep.slack >= 0.0;
                store.push(&task, &rep, t0.elapsed().as_secs_f64())?;
            }
            verdicts.push(("subadditivity-slack-nonnegative".into(), all_ok));
        }

        ExperimentKind::Tightness => {
            let l = deformation_of(cfg, &spec)?;
            let tcfg = cfg.tightness.as_ref().expect("validated");
            let mut all_ok = true;
            for &eps in &cfg.domain.eps_list {
                let task = format!("tightness-quadrature|eps={eps}");
                if store.is_done(&task) && !force {
                    continue;
                }
                let t0 = Instant::now();
                let dom = LatticeDomain::build(shape.clone(), eps, spec.m)?;
                if dom.n_sites() * spec.m > 5 {
                    return Err(Error::Compute {
                        task,
                        msg: "tightness quadrature needs <= 5 dimensions".into(),
                    });
                }
                let pts = check_tightness_quadrature(&spec, &l, &dom, &tcfg.k_list)?;
                all_ok &= pts.iter().all(|p| p.consistent);
                store.push(&task, &pts, t0.elapsed().as_secs_f64())?;
            }
            if let Some(mc_eps) = tcfg.mc_eps {
                let task = format!("tightness-mc|eps={mc_eps}");
                if !store.is_done(&task) || force {
                    let t0 = Instant::now();
                    let (log_z_set, _) = per_eps_log_z(
                        &spec,
                        &l,
                        Formulation::SoftClamp,
                        &shape,
                        mc_eps,
                        &budget,
                        derive_seed(cfg.seed, "tightness-set"),
                    )?;
                    let pts = check_tightness_mc(
                        &spec,
                        &l,
                        &shape,
                        mc_eps,
                        &tcfg.k_list,
                        log_z_set,
                        tcfg.mc_sweeps,
                        cfg.seed,
                    )?;
                    all_ok &= pts.iter().all(|p| p.consistent);
                    store.push(&task, &pts, t0.elapsed().as_secs_f64())?;
                }
            }
            verdicts.push(("tightness-bound-consistent".into(), all_ok));
        }

        ExperimentKind::Quasiconvexity => {
            let l = deformation_of(cfg, &spec)?;
            let amp = cfg.ldp.as_ref().map_or(0.5, |c| c.wedge_amp);
            let mesh = cfg.ldp.as_ref().map_or(8, |c| c.mesh);
            let task = "quasiconvexity".to_string();
            if !store.is_done(&task) || force {
                let t0 = Instant::now();
                let wedge = MacroField::wedge(spec.d, spec.m, l.matrix(), amp, mesh);
                let flat = MacroField::wedge(spec.d, spec.m, l.matrix(), 0.0, mesh);
                let ok;
                let payload;
                if spec.is_quadratic() {
                    let gap = quasiconvexity_gap_quadratic(&l, &wedge.field, shape.volume());
                    let gap0 = quasiconvexity_gap_quadratic(&l, &flat.field, shape.volume());
                    ok = gap >= 0.0 && gap0.abs() < 1e-12;
                    payload = json!({"closed_form_gap": gap, "zero_perturbation_gap": gap0});
                } else {
                    let row = quasiconvexity_probe_mc(
                        &spec,
                        &l,
                        &wedge.field,
                        &shape,
                        &cfg.domain.eps_list,
                        &budget,
                        cfg.seed,
                    )?;
                    ok = row.gap >= -3.0 * row.gap_se;
                    payload = serde_json::to_value(&row).unwrap();
                }
                store.push(&task, &payload, t0.elapsed().as_secs_f64())?;
                verdicts.push(("quasiconvexity-gap-nonnegative".into(), ok));
            }
        }

        ExperimentKind::Nonconvex => {
            let ncfg = cfg.nonconvex.clone().unwrap_or(super::config::NonconvexConfig {
                m_weight: None,
                scan_eps: vec![],
            });
            let m_weight = ncfg
                .m_weight
                .unwrap_or_else(|| nonconvexity_threshold(&spec) + 10.0);
            let task = format!("nonconvex|M={m_weight}");
            if !store.is_done(&task) || force {
                let t0 = Instant::now();
                let rep = run_nonconvexity(
                    &spec,
                    m_weight,
                    &shape,
                    &cfg.domain.eps_list,
                    &budget,
                    cfg.seed,
                )?;
                println!(
                    "midpoint gap = {:.4} +- {:.4} (threshold B - b = {:.4})",
                    rep.gap, rep.gap_se, rep.threshold
                );
                let sym = (rep.w_id.0 - rep.w_neg_id.0).abs()
                    <= 3.0 * (rep.w_id.1.powi(2) + rep.w_neg_id.1.powi(2)).sqrt();
                verdicts.push(("midpoint-gap-positive-3se".into(), rep.verdict));
                verdicts.push(("w(id)-symmetric-3se".into(), sym));
                store.push(&task, &rep, t0.elapsed().as_secs_f64())?;
            }
            if !ncfg.scan_eps.is_empty() {
                let task = "nonconvex-boundary-scan".to_string();
                if !store.is_done(&task) || force {
                    let t0 = Instant::now();
                    let scan = boundary_term_scan(
                        &spec,
                        m_weight,
                        &AffineMap::identity(2),
                        &ncfg.scan_eps,
                        cfg.budget.sweeps,
                        cfg.seed,
                    )?;
                    verdicts.push(("boundary-term-decays".into(), scan.slope > 0.4));
                    store.push(&task, &scan, t0.elapsed().as_secs_f64())?;
                }
            }
        }

        ExperimentKind::Ldp => {
            let l = deformation_of(cfg, &spec)?;
            let lcfg = cfg.ldp.as_ref().expect("validated");
            let wedge = MacroField::wedge(spec.d, spec.m, l.matrix(), lcfg.wedge_amp, lcfg.mesh);
            // quadratic map anchored at the exact periodic value of W(0)
            let task = "ldp-squeeze".to_string();
            if !store.is_done(&task) || force {
                let t0 = Instant::now();
                let w0 = estimate_free_energy(
                    &spec,
                    &AffineMap::zero(spec.m, spec.d),
                    Formulation::Periodic,
                    &shape,
                    &cfg.domain.eps_list,
                    &budget,
                    derive_seed(cfg.seed, "ldp-w0"),
                )?;
                let wmap = WMap::Quadratic { w0: w0.value };
                let squeeze = rate_comparison(
                    &spec,
                    &wedge,
                    &wmap,
                    &lcfg.kappa_list,
                    &cfg.domain.eps_list,
                    &shape,
                    &budget,
                    cfg.seed,
                )?;
                let rate_at_min = rate_functional(&wmap, &wedge.harmonic_extension(), &[])?;
                verdicts.push(("ldp-squeeze-brackets".into(), squeeze.squeeze_holds));
                verdicts.push((
                    "rate-zero-at-minimizer".into(),
                    rate_at_min.rate.abs() < 1e-10,
                ));
                let mut rows = Vec::new();
                for r in &squeeze.rows {
                    for &(eps, f, se) in &r.per_eps {
                        rows.push(format!("{},{eps},{f:.6e},{se:.6e}", r.kappa));
                    }
                }
                store.write_csv("f_kappa_eps.csv", "kappa,eps,value,se", &rows)?;
                store.push(&task, &squeeze, t0.elapsed().as_secs_f64())?;
                store.push("ldp-rate-minimizer", &rate_at_min, 0.0)?;
            }
            let task = "ldp-blowup".to_string();
            if !store.is_done(&task) || force {
                let t0 = Instant::now();
                let padded = MacroField::from_fn(
                    spec.d,
                    1,
                    vec![-0.5; spec.d],
                    1.0 / 16.0,
                    vec![32; spec.d],
                    |x, out| out[0] = 0.5 * x[0] + 0.8 * (x[0] - 0.5).max(0.0),
                );
                let f = |x: &[f64]| {
                    if x.iter().all(|&v| (0.0..1.0).contains(&v)) {
                        1.0
                    } else {
                        0.0
                    }
                };
                let mut ok = true;
                let mut sels = Vec::new();
                for rho in [0.25, 0.125] {
                    let sel = select_blowup_origin(
                        &padded.field,
                        spec.growth.p,
                        rho,
                        0.1,
                        0.9,
                        &f,
                        &vec![0.0; spec.d],
                        &vec![1.0; spec.d],
                    )?;
                    ok &= sel.grad_certificate < 0.1 && sel.mass_certificate > 0.9;
                    sels.push((rho, sel));
                }
                verdicts.push(("blowup-certificates".into(), ok));
                store.push(&task, &sels, t0.elapsed().as_secs_f64())?;
            }
        }

        ExperimentKind::YoungGibbs => {
            let l = deformation_of(cfg, &spec)?;
            let wcfg = cfg.windows.as_ref().expect("validated");
            let eps = *cfg.domain.eps_list.last().unwrap();
            let windows: Vec<WindowSpec> = wcfg
                .centers
                .iter()
                .map(|c| WindowSpec {
                    center: c.clone(),
                    side: wcfg.side,
                })
                .collect();
            let task = "young-gibbs-slope".to_string();
            if !store.is_done(&task) || force {
                let t0 = Instant::now();
                let (hard_stats, _hb) = window_stats(
                    &spec,
                    &l,
                    eps,
                    &shape,
                    &windows,
                    cfg.budget.sweeps,
                    derive_seed(cfg.seed, "yg-hard"),
                    ClampMode::Hard,
                )?;
                let mut pass = true;
                for s in &hard_stats {
                    pass &= slope_check(s, l.matrix()).pass;
                }
                let (soft_stats, soft_batch) = window_stats(
                    &spec,
                    &l,
                    eps,
                    &shape,
                    &windows,
                    cfg.budget.sweeps,
                    derive_seed(cfg.seed, "yg-soft"),
                    ClampMode::Soft,
                )?;
                verdicts.push(("slope-condition-3se".into(), pass));
                store.push(&task, &(hard_stats, &soft_stats), t0.elapsed().as_secs_f64())?;

                // DLR consistency on the soft ensemble
                let task2 = "young-gibbs-dlr".to_string();
                if !store.is_done(&task2) || force {
                    let t1 = Instant::now();
                    let dom = LatticeDomain::build(shape.clone(), eps, spec.m)?;
                    let (_, sites) = windows
                        .first()
                        .map(|w| {
                            let center: Vec<i64> =
                                w.center.iter().map(|&x| (x / eps).floor() as i64).collect();
                            let c0 = dom.site_index(&center).unwrap();
                            let half = (w.side / 2) as i64;
                            let mut sites = Vec::new();
                            for a in -half..=half {
                                for b in -half..=half {
                                    sites.push(
                                        dom.site_index(&[center[0] + a, center[1] + b]).unwrap(),
                                    );
                                }
                            }
                            (c0, sites)
                        })
                        .unwrap();
                    let resampled = dlr_resample(
                        &spec,
                        &soft_batch,
                        &sites,
                        wcfg.dlr_inner_sweeps,
                        derive_seed(cfg.seed, "yg-dlr"),
                    )?;
                    let center_site = sites[sites.len() / 2];
                    let grad_moment = |b: &crate::sampler::SampleBatch| -> (f64, f64) {
                        let xs: Vec<f64> = b
                            .snapshots
                            .iter()
                            .map(|x| {
                                let mut g = [0.0f64; 2];
                                x.grad(center_site, 0, &mut g[..spec.m]);
                                g[0].tanh()
                            })
                            .collect();
                        stats::mean_with_error(&xs)
                    };
                    let (m0, s0) = grad_moment(&soft_batch);
                    let (m1, s1) = grad_moment(&resampled);
                    let ok = (m0 - m1).abs() <= 3.0 * (s0 * s0 + s1 * s1).sqrt();
                    verdicts.push(("dlr-moments-agree-3se".into(), ok));
                    store.push(
                        &task2,
                        &json!({"pre": [m0, s0], "post": [m1, s1]}),
                        t1.elapsed().as_secs_f64(),
                    )?;
                }
            }
        }
    }

    store.flush()?;
    Ok(RunSummary {
        verdicts,
        records_dir: dir,
    })
}

fn collect_formulations(cfg: &ExperimentConfig) -> Result<Vec<Formulation>> {
    let c = match &cfg.constraint {
        Some(c) => c,
        None => return Ok(vec![Formulation::SoftClamp]),
    };
    let mut out = Vec::new();
    for f in &c.formulations {
        match f.as_str() {
            "soft_clamp" => out.push(Formulation::SoftClamp),
            "hard_clamp" => out.push(Formulation::HardClamp),
            "periodic" => out.push(Formulation::Periodic),
            "lr_neighborhood" => {
                for &k in &c.kappa_list {
                    out.push(Formulation::LrNeighborhood { kappa: k });
                }
            }
            "combined" => {
                for &k in &c.kappa_list {
                    out.push(Formulation::Combined { kappa: k });
                }
            }
            other => {
                return Err(Error::Config {
                    path: "constraint.formulations".into(),
                    msg: format!("unknown formulation '{other}'"),
                })
            }
        }
    }
    Ok(out)
}
