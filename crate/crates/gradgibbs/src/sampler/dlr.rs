use crate::error::{Error, Result};
use crate::hamiltonian::{ConditionedHamiltonian, ConstraintSet};
use crate::lattice::Configuration;
use crate::potential::PotentialSpec;

use super::metropolis::{metropolis_run, RunSettings, SampleBatch};

/// Resample a window of every snapshot from the conditional specification
/// given the rest of the configuration.
///
/// Each inner chain targets the window's conditioned energy with the exterior
/// frozen, so a batch distributed by the constrained Gibbs measure maps to an
/// equal-in-law batch (up to inner-chain equilibration). The window must stay
/// clear of both the domain collar and any constraint support: construction
/// fails if a patch would leave the domain, and the caller keeps windows away
/// from clamp strips.
pub fn dlr_resample(
    spec: &PotentialSpec,
    batch: &SampleBatch,
    window: &[usize],
    inner_sweeps: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if window.is_empty() {
        // empty window: the identity map
        return Ok(SampleBatch {
            snapshots: batch.snapshots.clone(),
            sweep_indices: batch.sweep_indices.clone(),
            energies: batch.energies.clone(),
            acceptance: 1.0,
            tau_energy: batch.tau_energy,
            ess_energy: batch.ess_energy,
            final_state: batch.final_state.clone(),
            final_energy: batch.final_energy,
            final_steps: batch.final_steps.clone(),
        });
    }
    if batch.snapshots.is_empty() {
        return Err(Error::Compute {
            task: "dlr resample".into(),
            msg: "batch carries no snapshots".into(),
        });
    }
    let dom = batch.snapshots[0].domain().clone();
    let mut frozen = vec![true; dom.n_sites()];
    for &i in window {
        frozen[i] = false;
    }

    let mut out = Vec::with_capacity(batch.snapshots.len());
    let mut energies = Vec::with_capacity(batch.snapshots.len());
    let mut acc = 0.0;
    for (idx, snap) in batch.snapshots.iter().enumerate() {
        let cond = ConditionedHamiltonian::new(spec.clone(), window, snap.clone())?;
        let settings = RunSettings::new(inner_sweeps, seed)
            .with_stream(idx as u64 + 1)
            .with_burn_in(inner_sweeps / 2)
            .without_snapshots();
        let inner = metropolis_run(
            &cond,
            &ConstraintSet::Unconstrained,
            snap.clone(),
            &frozen,
            &settings,
        )?;
        acc += inner.acceptance;
        energies.push(inner.final_energy);
        out.push(inner.final_state);
    }
    let n = out.len();
    Ok(SampleBatch {
        final_state: out.last().cloned().unwrap(),
        snapshots: out,
        sweep_indices: batch.sweep_indices.clone(),
        energies,
        acceptance: acc / n as f64,
        tau_energy: batch.tau_energy,
        ess_energy: batch.ess_energy,
        final_energy: 0.0,
        final_steps: Vec::new(),
    })
}

/// Validate that a window keeps collar distance from the domain boundary.
pub fn check_window_interior(
    dom: &Configuration,
    window: &[usize],
    collar: f64,
) -> Result<()> {
    let d = dom.domain();
    for &i in window {
        if d.lattice_dist_to_complement(i) <= collar {
            return Err(Error::WindowTouchesBoundary);
        }
    }
    Ok(())
}
