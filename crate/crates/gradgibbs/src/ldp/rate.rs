use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_energy::gradient_cells;
use crate::lattice::PiecewiseLinearField;

use super::macrofield::MacroField;

/// Evaluable free-energy map over deformation gradients.
///
/// Quadratic potentials admit the exact closed map `W(L) = w0 + sum_k
/// |L e_k|^2`; anything else is tabulated on a grid of deformations and
/// looked up by multilinear interpolation.
#[derive(Debug, Clone)]
pub enum WMap {
    Quadratic { w0: f64 },
    Table(WTable),
}

#[derive(Debug, Clone)]
pub struct WTable {
    /// entries of the m x d matrix vary over a common axis grid
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
    pub dims: usize,
    /// values in lexicographic order over the grid, last axis fastest
    pub values: Vec<f64>,
}

impl WMap {
    pub fn eval(&self, grad: &[f64]) -> Result<f64> {
        match self {
            WMap::Quadratic { w0 } => Ok(w0 + grad.iter().map(|g| g * g).sum::<f64>()),
            WMap::Table(t) => t.eval(grad),
        }
    }
}

impl WTable {
    pub fn eval(&self, grad: &[f64]) -> Result<f64> {
        assert_eq!(grad.len(), self.dims);
        let n = self.steps;
        let h = (self.hi - self.lo) / (n as f64 - 1.0);
        let mut cell = vec![0usize; self.dims];
        let mut t = vec![0.0; self.dims];
        for (k, &g) in grad.iter().enumerate() {
            if g < self.lo - 1e-12 || g > self.hi + 1e-12 {
                return Err(Error::GradientOutOfTable {
                    grad: grad.to_vec(),
                });
            }
            let rel = ((g - self.lo) / h).clamp(0.0, (n - 1) as f64);
            let c = (rel.floor() as usize).min(n - 2);
            cell[k] = c;
            t[k] = rel - c as f64;
        }
        // multilinear over 2^dims corners
        let mut total = 0.0;
        for corner in 0..(1usize << self.dims) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for k in 0..self.dims {
                let up = (corner >> k) & 1 == 1;
                w *= if up { t[k] } else { 1.0 - t[k] };
                idx = idx * n + cell[k] + usize::from(up);
            }
            total += w * self.values[idx];
        }
        Ok(total)
    }
}

/// `integral over the box of W(grad v)`: simplex volumes times the map at the
/// per-simplex gradients.
pub fn profile_energy(wmap: &WMap, v: &PiecewiseLinearField) -> Result<f64> {
    let mut total = 0.0;
    for (grad, vol) in gradient_cells(v) {
        total += vol * wmap.eval(&grad)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    /// `integral W(grad v)`
    pub energy: f64,
    /// minimum over the candidate family (exact harmonic minimizer for the
    /// quadratic map)
    pub min_energy: f64,
    /// `I(v) = energy - min_energy`
    pub rate: f64,
    /// true when the minimum is exact rather than a family upper bound
    pub min_is_exact: bool,
}

/// The rate functional `I(v)` relative to the trace of `v`.
///
/// For the quadratic map the minimizer over profiles with the same trace is
/// the finite-element harmonic extension, computed exactly; otherwise the
/// minimum is taken over the supplied candidate family (plus the harmonic
/// extension) and reported as an upper bound of the true minimum.
pub fn rate_functional(
    wmap: &WMap,
    v: &MacroField,
    candidates: &[MacroField],
) -> Result<RateReport> {
    let energy = profile_energy(wmap, &v.field)?;
    let harmonic = v.harmonic_extension();
    let mut min_energy = profile_energy(wmap, &harmonic.field)?;
    let mut min_is_exact = matches!(wmap, WMap::Quadratic { .. });
    for cand in candidates {
        let e = profile_energy(wmap, &cand.field)?;
        if e < min_energy {
            min_energy = e;
            // a candidate beating the harmonic extension means the map is
            // not the quadratic one; the min is a family bound
            min_is_exact = false;
        }
    }
    Ok(RateReport {
        energy,
        min_energy,
        rate: energy - min_energy,
        min_is_exact,
    })
}
