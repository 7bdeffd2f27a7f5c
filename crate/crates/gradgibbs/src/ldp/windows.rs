use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_energy::derive_seed;
use crate::hamiltonian::{ConstraintSet, Hamiltonian};
use crate::lattice::{AffineMap, BoxShape, LatticeDomain};
use crate::potential::PotentialSpec;
use crate::sampler::{metropolis_run, RunSettings, SampleBatch};
use crate::stats;

/// A sampling window: a box of odd side length centered at a macroscopic
/// position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowSpec {
    pub center: Vec<f64>,
    pub side: usize,
}

/// Empirical local-gradient statistics of one window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowStats {
    pub center: Vec<f64>,
    pub center_site: Vec<i64>,
    pub n_samples: usize,
    /// `E[grad X(i0)]` entries (m x d, row-major) with standard errors
    pub mean_grad: Vec<f64>,
    pub se_grad: Vec<f64>,
    /// `E sum_k |grad_k X(i0)|^2`
    pub mean_grad_sq: f64,
    pub se_grad_sq: f64,
    /// histogram of the first gradient component at the center site
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

fn window_sites(
    dom: &std::sync::Arc<LatticeDomain>,
    w: &WindowSpec,
    collar: f64,
) -> Result<(usize, Vec<usize>)> {
    assert!(w.side % 2 == 1 && w.side <= 5, "windows are odd boxes of side <= 5");
    let eps = dom.eps();
    let center: Vec<i64> = w.center.iter().map(|&x| (x / eps).floor() as i64).collect();
    let center_site = dom
        .site_index(&center)
        .ok_or(Error::SiteOutsideDomain { site: center.clone() })?;
    let half = (w.side / 2) as i64;
    let mut sites = Vec::new();
    match dom.d() {
        1 => {
            for a in -half..=half {
                let c = [center[0] + a];
                let i = dom
                    .site_index(&c)
                    .ok_or(Error::WindowTouchesBoundary)?;
                sites.push(i);
            }
        }
        2 => {
            for a in -half..=half {
                for b in -half..=half {
                    let c = [center[0] + a, center[1] + b];
                    let i = dom
                        .site_index(&c)
                        .ok_or(Error::WindowTouchesBoundary)?;
                    sites.push(i);
                }
            }
        }
        _ => unreachable!(),
    }
    for &i in &sites {
        if dom.lattice_dist_to_complement(i) <= collar {
            return Err(Error::WindowTouchesBoundary);
        }
    }
    Ok((center_site, sites))
}

/// Boundary treatment for a window-statistics run.
///
/// The soft clamp is the paper ensemble; its boundary layer may wiggle, which
/// biases the mean slope at order `|L|/n` at finite scale. The hard clamp is
/// the Gibbs-specification ensemble with the strip frozen at the datum, where
/// the mean-slope identity is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClampMode {
    Soft,
    Hard,
}

/// Sample the clamped measure at the affine datum and collect per-window
/// gradient statistics.
#[allow(clippy::too_many_arguments)]
pub fn window_stats(
    spec: &PotentialSpec,
    u: &AffineMap,
    eps: f64,
    shape: &BoxShape,
    windows: &[WindowSpec],
    sweeps: usize,
    seed: u64,
    mode: ClampMode,
) -> Result<(Vec<WindowStats>, SampleBatch)> {
    let dom = LatticeDomain::build(shape.clone(), eps, spec.m)?;
    let ham = Hamiltonian::new(spec.clone(), &dom)?;
    let anchor = u.lattice_config(&dom);
    let strip = dom.boundary_strip(spec.range());
    let (set, frozen) = match mode {
        ClampMode::Soft => (
            ConstraintSet::soft_clamp(anchor.clone(), spec.range()),
            vec![false; dom.n_sites()],
        ),
        ClampMode::Hard => (
            ConstraintSet::Unconstrained,
            (0..dom.n_sites()).map(|i| strip.contains(i)).collect(),
        ),
    };
    let settings = RunSettings::new(sweeps, derive_seed(seed, "window-stats"))
        .with_burn_in(sweeps / 5)
        .with_thin(4);
    let batch = metropolis_run(&ham, &set, anchor, &frozen, &settings)?;
    let collar = spec.range();
    let mut out = Vec::with_capacity(windows.len());
    for w in windows {
        let (center_site, _sites) = window_sites(&dom, w, collar)?;
        out.push(stats_for_site(&dom, &batch, w, center_site)?);
    }
    Ok((out, batch))
}

/// Gradient statistics at a site over an existing batch.
pub fn stats_for_site(
    dom: &std::sync::Arc<LatticeDomain>,
    batch: &SampleBatch,
    w: &WindowSpec,
    center_site: usize,
) -> Result<WindowStats> {
    let (d, m) = (dom.d(), dom.m());
    let mut mean_grad = vec![0.0; m * d];
    let mut se_grad = vec![0.0; m * d];
    let mut gbuf = [0.0f64; 2];
    for k in 0..d {
        for alpha in 0..m {
            let series: Vec<f64> = batch
                .snapshots
                .iter()
                .map(|x| {
                    let ok = x.grad(center_site, k, &mut gbuf[..m]);
                    debug_assert!(ok);
                    gbuf[alpha]
                })
                .collect();
            let (mu, se) = stats::mean_with_error(&series);
            mean_grad[alpha * d + k] = mu;
            se_grad[alpha * d + k] = se;
        }
    }
    let sq_series: Vec<f64> = batch
        .snapshots
        .iter()
        .map(|x| x.grad_p_norm(center_site, 2.0))
        .collect();
    let (mean_grad_sq, se_grad_sq) = stats::mean_with_error(&sq_series);

    // histogram of the first component of grad_1 X(i0)
    let first: Vec<f64> = batch
        .snapshots
        .iter()
        .map(|x| {
            x.grad(center_site, 0, &mut gbuf[..m]);
            gbuf[0]
        })
        .collect();
    let lo = first.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = first.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n_bins = 24usize;
    let width = ((hi - lo) / n_bins as f64).max(1e-12);
    let mut histogram: Vec<HistogramBin> = (0..n_bins)
        .map(|b| HistogramBin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in &first {
        let b = (((v - lo) / width) as usize).min(n_bins - 1);
        histogram[b].count += 1;
    }

    Ok(WindowStats {
        center: w.center.clone(),
        center_site: dom.coords(center_site),
        n_samples: batch.snapshots.len(),
        mean_grad,
        se_grad,
        mean_grad_sq,
        se_grad_sq,
        histogram,
    })
}

/// Residual of the slope condition `E[grad X(i0)] = grad v(x)` with its
/// pass/fail verdict at three standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub residual: f64,
    pub se: f64,
    pub pass: bool,
}

pub fn slope_check(stats: &WindowStats, grad_v: &[f64]) -> SlopeCheck {
    assert_eq!(stats.mean_grad.len(), grad_v.len());
    let residual = stats
        .mean_grad
        .iter()
        .zip(grad_v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let se = stats.se_grad.iter().map(|s| s * s).sum::<f64>().sqrt();
    SlopeCheck {
        residual,
        se,
        pass: residual <= 3.0 * se,
    }
}

/// Write window statistics as JSON lines.
pub fn write_stats_jsonl<W: Write>(w: &mut W, stats: &[WindowStats]) -> Result<()> {
    for s in stats {
        serde_json::to_writer(&mut *w, s).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w)?;
    }
    Ok(())
}

/// Histogram CSV: `bin_lo,bin_hi,count`.
pub fn write_histogram_csv<W: Write>(w: &mut W, stats: &WindowStats) -> Result<()> {
    writeln!(w, "bin_lo,bin_hi,count")?;
    for b in &stats.histogram {
        writeln!(w, "{:.12e},{:.12e},{}", b.lo, b.hi, b.count)?;
    }
    Ok(())
}
