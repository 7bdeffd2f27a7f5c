use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::PiecewiseLinearField;

/// A selected blow-up origin with the two certificate sums, evaluated by the
/// fixed midpoint rule so the inequalities can be re-checked verbatim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlowupSelection {
    pub z: Vec<f64>,
    /// `sum_x rho^d int over Q of |grad v(x + rho y) - grad v(x)|^p dy`
    pub grad_certificate: f64,
    /// `rho^d sum_x f(x)`
    pub mass_certificate: f64,
}

/// Grid resolution per axis when scanning the shift cell.
pub const SHIFT_GRID: usize = 16;

/// Midpoint sub-cells per axis for the window integrals.
const WINDOW_RULE: usize = 8;

/// Search the shift cell `[-rho/2, rho/2)^d` for an origin such that the
/// rescaled windows carry less than `delta` of gradient oscillation while the
/// window lattice captures more than `ell` of the mass of `f`.
///
/// The profile must cover every window `x + rho Q` that meets the support box
/// of `f`; pad the mesh accordingly.
pub fn select_blowup_origin(
    v: &PiecewiseLinearField,
    p: f64,
    rho: f64,
    delta: f64,
    ell: f64,
    f: &dyn Fn(&[f64]) -> f64,
    support_lo: &[f64],
    support_hi: &[f64],
) -> Result<BlowupSelection> {
    let d = v.d();
    let m = v.m();
    assert!(rho > 0.0 && delta > 0.0);
    let mut best_grad = f64::INFINITY;
    let mut best_mass = f64::NEG_INFINITY;

    let mut grad_center = vec![0.0; m * d];
    let mut grad_window = vec![0.0; m * d];

    let mut z_idx = vec![0usize; d];
    loop {
        let z: Vec<f64> = z_idx
            .iter()
            .map(|&i| -rho / 2.0 + rho * (i as f64 + 0.5) / SHIFT_GRID as f64)
            .collect();

        // window lattice points x in rho Z^d + z whose window meets the support
        let mut grad_sum = 0.0;
        let mut mass_sum = 0.0;
        let mut idx_lo = vec![0i64; d];
        let mut idx_hi = vec![0i64; d];
        for k in 0..d {
            idx_lo[k] = ((support_lo[k] - z[k]) / rho - 1.0).floor() as i64;
            idx_hi[k] = ((support_hi[k] - z[k]) / rho + 1.0).ceil() as i64;
        }
        let mut lattice_idx = idx_lo.clone();
        'lattice: loop {
            let x: Vec<f64> = lattice_idx
                .iter()
                .zip(&z)
                .map(|(&i, &zk)| i as f64 * rho + zk)
                .collect();
            let window_meets_support = (0..d).all(|k| {
                x[k] + rho / 2.0 > support_lo[k] - 1e-12
                    && x[k] - rho / 2.0 < support_hi[k] + 1e-12
            });
            if window_meets_support {
                mass_sum += f(&x);
                v.gradient_at(&x, &mut grad_center)?;
                // midpoint rule over the unit window Q = [-1/2, 1/2)^d
                let mut sub = vec![0usize; d];
                let cell_w = 1.0 / (WINDOW_RULE as f64).powi(d as i32);
                loop {
                    let y: Vec<f64> = sub
                        .iter()
                        .map(|&i| -0.5 + (i as f64 + 0.5) / WINDOW_RULE as f64)
                        .collect();
                    let pt: Vec<f64> = x.iter().zip(&y).map(|(&xk, &yk)| xk + rho * yk).collect();
                    v.gradient_at(&pt, &mut grad_window)?;
                    let mut cols = 0.0;
                    for k in 0..d {
                        let sq: f64 = (0..m)
                            .map(|al| {
                                let diff =
                                    grad_window[al * d + k] - grad_center[al * d + k];
                                diff * diff
                            })
                            .sum();
                        cols += sq.sqrt().powf(p);
                    }
                    grad_sum += rho.powi(d as i32) * cell_w * cols;
                    let mut k = 0;
                    loop {
                        if k == d {
                            break;
                        }
                        sub[k] += 1;
                        if sub[k] < WINDOW_RULE {
                            break;
                        }
                        sub[k] = 0;
                        k += 1;
                    }
                    if sub.iter().all(|&s| s == 0) {
                        break;
                    }
                }
            }
            let mut k = 0;
            loop {
                if k == d {
                    break 'lattice;
                }
                lattice_idx[k] += 1;
                if lattice_idx[k] <= idx_hi[k] {
                    break;
                }
                lattice_idx[k] = idx_lo[k];
                k += 1;
            }
        }
        let mass = rho.powi(d as i32) * mass_sum;
        if grad_sum < delta && mass > ell {
            return Ok(BlowupSelection {
                z,
                grad_certificate: grad_sum,
                mass_certificate: mass,
            });
        }
        best_grad = best_grad.min(grad_sum);
        best_mass = best_mass.max(mass);

        let mut k = 0;
        loop {
            if k == d {
                return Err(Error::NoQualifyingPoint {
                    best_grad_sum: best_grad,
                    delta,
                    best_mass,
                    ell,
                });
            }
            z_idx[k] += 1;
            if z_idx[k] < SHIFT_GRID {
                break;
            }
            z_idx[k] = 0;
            k += 1;
        }
    }
}
