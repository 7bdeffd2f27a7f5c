use std::sync::Arc;

use super::{Configuration, LatticeDomain};

/// Affine deformation `L(x) = A x + b` with `A` an `m x d` matrix.
///
/// `L` doubles as a macroscopic field on the continuum box and as the lattice
/// boundary datum `i -> A i + b` that clamp sets are anchored to.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    m: usize,
    d: usize,
    /// row-major, `a[alpha * d + k]`
    a: Vec<f64>,
    b: Vec<f64>,
}

impl AffineMap {
    pub fn new(m: usize, d: usize, a: Vec<f64>, b: Vec<f64>) -> Self {
        assert_eq!(a.len(), m * d);
        assert_eq!(b.len(), m);
        AffineMap { m, d, a, b }
    }

    /// Linear map with zero offset.
    pub fn linear(m: usize, d: usize, a: Vec<f64>) -> Self {
        let b = vec![0.0; m];
        Self::new(m, d, a, b)
    }

    pub fn zero(m: usize, d: usize) -> Self {
        Self::linear(m, d, vec![0.0; m * d])
    }

    /// Identity deformation; requires `m == d`.
    pub fn identity(d: usize) -> Self {
        let mut a = vec![0.0; d * d];
        for k in 0..d {
            a[k * d + k] = 1.0;
        }
        Self::linear(d, d, a)
    }

    /// Uniform dilation `x -> s x`; requires `m == d`.
    pub fn dilation(d: usize, s: f64) -> Self {
        let mut l = Self::identity(d);
        for v in &mut l.a {
            *v *= s;
        }
        l
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn matrix(&self) -> &[f64] {
        &self.a
    }
    pub fn offset(&self) -> &[f64] {
        &self.b
    }

    pub fn entry(&self, alpha: usize, k: usize) -> f64 {
        self.a[alpha * self.d + k]
    }

    /// Image of the k-th coordinate direction, `A e_k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.m).map(|alpha| self.entry(alpha, k)).collect()
    }

    /// Evaluate at a continuum point.
    pub fn at(&self, x: &[f64], out: &mut [f64]) {
        for alpha in 0..self.m {
            let mut v = self.b[alpha];
            for k in 0..self.d {
                v += self.entry(alpha, k) * x[k];
            }
            out[alpha] = v;
        }
    }

    /// Lattice datum `L(i) = A i + b` at integer coordinates.
    pub fn at_site(&self, coords: &[i64], out: &mut [f64]) {
        for alpha in 0..self.m {
            let mut v = self.b[alpha];
            for k in 0..self.d {
                v += self.entry(alpha, k) * coords[k] as f64;
            }
            out[alpha] = v;
        }
    }

    /// Operator-norm surrogate: maximum Euclidean column norm of `A`.
    pub fn norm(&self) -> f64 {
        (0..self.d)
            .map(|k| {
                (0..self.m)
                    .map(|alpha| self.entry(alpha, k).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Sum of squared column norms, the quadratic free-energy shift.
    pub fn columns_sq(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum()
    }

    /// The configuration `X(i) = A i + b` on a domain.
    pub fn lattice_config(&self, dom: &Arc<LatticeDomain>) -> Configuration {
        assert_eq!(self.d, dom.d());
        assert_eq!(self.m, dom.m());
        let mut cfg = Configuration::zeros(dom);
        let mut buf = vec![0.0; self.m];
        for i in 0..dom.n_sites() {
            self.at_site(&dom.coords(i), &mut buf);
            cfg.values_mut(i).copy_from_slice(&buf);
        }
        cfg
    }

    /// Midpoint-convex combination `(1-s) L0 + s L1`.
    pub fn mix(l0: &AffineMap, l1: &AffineMap, s: f64) -> AffineMap {
        assert_eq!((l0.m, l0.d), (l1.m, l1.d));
        AffineMap {
            m: l0.m,
            d: l0.d,
            a: l0
                .a
                .iter()
                .zip(&l1.a)
                .map(|(x, y)| (1.0 - s) * x + s * y)
                .collect(),
            b: l0
                .b
                .iter()
                .zip(&l1.b)
                .map(|(x, y)| (1.0 - s) * x + s * y)
                .collect(),
        }
    }

    pub fn negate(&self) -> AffineMap {
        AffineMap {
            m: self.m,
            d: self.d,
            a: self.a.iter().map(|v| -v).collect(),
            b: self.b.iter().map(|v| -v).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_is_max_column_norm() {
        let l = AffineMap::linear(2, 2, vec![3.0, 0.0, 4.0, 1.0]);
        // columns: (3,4) -> 5, (0,1) -> 1
        assert!((l.norm() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn identity_maps_sites_to_themselves() {
        let l = AffineMap::identity(2);
        let mut out = [0.0; 2];
        l.at_site(&[3, -4], &mut out);
        assert_eq!(out, [3.0, -4.0]);
    }
}
