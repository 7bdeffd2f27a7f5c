use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hamiltonian::{ConstraintSet, EnergyModel};
use crate::lattice::Configuration;
use crate::stats;

/// Knobs of a single chain. Step sizes adapt toward the target acceptance
/// during burn-in only and stay frozen afterwards, so the post-burn-in chain
/// is an exact Metropolis chain for the constrained Gibbs measure.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// chain id; seeds are partitioned per stream
    pub stream: u64,
    pub target_acceptance: f64,
    pub adapt_window: usize,
    pub initial_step: f64,
    /// audit cadence for cached energy and constraint state
    pub audit_every: usize,
    /// keep configuration snapshots (otherwise only scalar series)
    pub keep_snapshots: bool,
}

impl RunSettings {
    pub fn new(sweeps: usize, seed: u64) -> Self {
        RunSettings {
            sweeps,
            burn_in: sweeps / 5,
            thin: 1,
            seed,
            stream: 0,
            target_acceptance: 0.4,
            adapt_window: 50,
            initial_step: 0.5,
            audit_every: 10_000,
            keep_snapshots: true,
        }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_thin(mut self, thin: usize) -> Self {
        self.thin = thin.max(1);
        self
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.initial_step = step;
        self
    }

    pub fn without_snapshots(mut self) -> Self {
        self.keep_snapshots = false;
        self
    }
}

/// Thinned output of a chain.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub snapshots: Vec<Configuration>,
    pub sweep_indices: Vec<usize>,
    pub energies: Vec<f64>,
    pub acceptance: f64,
    /// integrated autocorrelation time of the energy series
    pub tau_energy: f64,
    pub ess_energy: f64,
    pub final_state: Configuration,
    pub final_energy: f64,
    pub final_steps: Vec<f64>,
}

impl SampleBatch {
    /// Scalar observable series over the stored snapshots.
    pub fn observable(&self, f: impl Fn(&Configuration) -> f64) -> Vec<f64> {
        self.snapshots.iter().map(f).collect()
    }

    /// Mean and autocorrelation-corrected standard error of an observable.
    pub fn mean_se(&self, f: impl Fn(&Configuration) -> f64) -> (f64, f64) {
        let xs = self.observable(f);
        stats::mean_with_error(&xs)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len().max(self.energies.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Single-site random-scan Metropolis for `exp(-H) 1_set`, with hard-frozen
/// sites excluded from proposals and constraint-violating moves rejected.
pub fn metropolis_run(
    model: &dyn EnergyModel,
    constraint: &ConstraintSet,
    init: Configuration,
    frozen: &[bool],
    settings: &RunSettings,
) -> Result<SampleBatch> {
    let dom = std::sync::Arc::clone(init.domain());
    let m = dom.m();
    assert_eq!(frozen.len(), dom.n_sites());
    let free: Vec<usize> = (0..dom.n_sites()).filter(|&i| !frozen[i]).collect();
    assert!(!free.is_empty(), "no free sites to sample");

    let mut x = init;
    let mut energy = model.energy(&x);
    let membership = constraint.contains_cached(&x, Some(energy));
    if !membership.inside {
        return Err(Error::InitViolatesConstraint {
            margin: membership.margin,
        });
    }
    let mut tracker = constraint.tracker(&x)?;

    let mut rng = chain_rng(settings.seed, settings.stream);
    let mut steps = vec![settings.initial_step; dom.n_sites()];
    let mut win_prop = vec![0u32; dom.n_sites()];
    let mut win_acc = vec![0u32; dom.n_sites()];

    let mut snapshots = Vec::new();
    let mut sweep_indices = Vec::new();
    let mut energies = Vec::new();
    let mut total_prop: u64 = 0;
    let mut total_acc: u64 = 0;

    let step_floor = 1e-9;
    let mut proposal = [0.0f64; 2];

    for sweep in 0..settings.sweeps {
        for _ in 0..free.len() {
            let site = free[rng.random_range(0..free.len())];
            let cur = x.values(site);
            let s = steps[site];
            for (alpha, out) in proposal[..m].iter_mut().enumerate() {
                let g: f64 = rng.sample(StandardNormal);
                *out = cur[alpha] + s * g;
            }
            win_prop[site] += 1;
            total_prop += 1;
            if !tracker.move_allowed(&x, site, &proposal[..m]) {
                continue;
            }
            let dh = model.delta(&x, site, &proposal[..m]);
            let accept = dh <= 0.0 || rng.random::<f64>() < (-dh).exp();
            if accept {
                tracker.commit(&x, site, &proposal[..m]);
                x.values_mut(site).copy_from_slice(&proposal[..m]);
                energy += dh;
                win_acc[site] += 1;
                total_acc += 1;
            }
        }

        let in_burn_in = sweep < settings.burn_in;
        if in_burn_in && (sweep + 1) % settings.adapt_window == 0 {
            let mut window_acc: u64 = 0;
            let mut window_prop: u64 = 0;
            for &site in &free {
                window_prop += win_prop[site] as u64;
                window_acc += win_acc[site] as u64;
                if win_prop[site] >= 8 {
                    let rate = win_acc[site] as f64 / win_prop[site] as f64;
                    let factor =
                        ((rate + 0.02) / (settings.target_acceptance + 0.02)).powf(0.7);
                    steps[site] = (steps[site] * factor).clamp(step_floor, 1e3);
                }
                win_prop[site] = 0;
                win_acc[site] = 0;
            }
            if window_acc == 0
                && window_prop > 0
                && free.iter().all(|&s| steps[s] <= step_floor * 1.0001)
            {
                return Err(Error::ZeroAcceptance { site: free[0] });
            }
        }

        if (sweep + 1) % settings.audit_every == 0 {
            let fresh = model.energy(&x);
            assert!(
                (energy - fresh).abs() <= 1e-9 * (1.0 + fresh.abs()),
                "cached energy drifted: {energy} vs {fresh}"
            );
            energy = fresh;
            tracker.refresh(&x);
        }

        if !in_burn_in && (sweep + 1 - settings.burn_in) % settings.thin == 0 {
            debug_assert!(
                constraint.contains_cached(&x, Some(energy)).inside,
                "emitted snapshot violates the constraint set"
            );
            if settings.keep_snapshots {
                snapshots.push(x.clone());
            }
            sweep_indices.push(sweep);
            energies.push(energy);
        }
    }

    let tau_energy = stats::integrated_autocorr_time(&energies);
    let ess_energy = if energies.is_empty() {
        0.0
    } else {
        (energies.len() as f64 / tau_energy).min(energies.len() as f64)
    };
    Ok(SampleBatch {
        snapshots,
        sweep_indices,
        energies,
        acceptance: if total_prop == 0 {
            0.0
        } else {
            total_acc as f64 / total_prop as f64
        },
        tau_energy,
        ess_energy,
        final_state: x,
        final_energy: energy,
        final_steps: steps,
    })
}

/// Key-value sidecar manifest describing a batch.
pub fn write_manifest<W: std::io::Write>(
    w: &mut W,
    batch: &SampleBatch,
    settings: &RunSettings,
) -> Result<()> {
    writeln!(w, "seed = {}", settings.seed)?;
    writeln!(w, "stream = {}", settings.stream)?;
    writeln!(w, "sweeps = {}", settings.sweeps)?;
    writeln!(w, "burn_in = {}", settings.burn_in)?;
    writeln!(w, "thin = {}", settings.thin)?;
    writeln!(w, "snapshots = {}", batch.len())?;
    writeln!(w, "acceptance = {:.6}", batch.acceptance)?;
    writeln!(w, "tau_energy = {:.6}", batch.tau_energy)?;
    writeln!(w, "ess_energy = {:.6}", batch.ess_energy)?;
    Ok(())
}
