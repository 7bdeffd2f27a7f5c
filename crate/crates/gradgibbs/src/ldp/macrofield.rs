use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::lattice::PiecewiseLinearField;

/// A macroscopic piecewise-linear profile on the triangulated box, together
/// with the boundary-vertex set that carries its trace.
#[derive(Debug, Clone)]
pub struct MacroField {
    pub field: Arc<PiecewiseLinearField>,
}

impl MacroField {
    pub fn new(field: PiecewiseLinearField) -> Self {
        MacroField {
            field: Arc::new(field),
        }
    }

    pub fn from_fn(
        d: usize,
        m: usize,
        origin: Vec<f64>,
        h: f64,
        n_cells: Vec<usize>,
        f: impl Fn(&[f64], &mut [f64]),
    ) -> Self {
        Self::new(PiecewiseLinearField::from_vertex_fn(
            d, m, origin, h, n_cells, f,
        ))
    }

    /// Wedge profile on the unit box: `v(x) = A x + a * min(x_1, 1 - x_1) e_1`
    /// with two constant-gradient halves.
    pub fn wedge(d: usize, m: usize, a_matrix: &[f64], amp: f64, n_cells: usize) -> Self {
        assert!(n_cells % 2 == 0, "wedge crease must sit on the mesh");
        let d_ = d;
        let a = a_matrix.to_vec();
        Self::from_fn(
            d,
            m,
            vec![0.0; d],
            1.0 / n_cells as f64,
            vec![n_cells; d],
            move |x, out| {
                for alpha in 0..m {
                    let mut v = 0.0;
                    for k in 0..d_ {
                        v += a[alpha * d_ + k] * x[k];
                    }
                    out[alpha] = v;
                }
                out[0] += amp * x[0].min(1.0 - x[0]);
            },
        )
    }

    /// Vertex indices on the mesh boundary.
    fn boundary_vertices(&self) -> Vec<Vec<usize>> {
        let f = &self.field;
        let dims: Vec<usize> = f.n_cells().iter().map(|&n| n + 1).collect();
        let mut out = Vec::new();
        match f.d() {
            1 => {
                out.push(vec![0]);
                out.push(vec![dims[0] - 1]);
            }
            2 => {
                for i in 0..dims[0] {
                    for j in 0..dims[1] {
                        if i == 0 || j == 0 || i == dims[0] - 1 || j == dims[1] - 1 {
                            out.push(vec![i, j]);
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        out
    }

    /// The Dirichlet-energy minimizer with this field's boundary trace: the
    /// exact finite-element harmonic extension on the same mesh, per
    /// component. This is the exact minimizer of `sum_T vol |grad v|^2` over
    /// piecewise-linear fields with the given trace.
    pub fn harmonic_extension(&self) -> MacroField {
        let f = &self.field;
        let d = f.d();
        let m = f.m();
        let dims: Vec<usize> = f.n_cells().iter().map(|&n| n + 1).collect();
        let n_vertices: usize = dims.iter().product();
        let vertex_of = |c: &[usize]| -> usize {
            let mut idx = 0;
            for k in 0..d {
                idx = idx * dims[k] + c[k];
            }
            idx
        };
        let boundary: Vec<usize> = self
            .boundary_vertices()
            .iter()
            .map(|c| vertex_of(c))
            .collect();
        let mut is_boundary = vec![false; n_vertices];
        for &b in &boundary {
            is_boundary[b] = true;
        }
        let interior: Vec<usize> = (0..n_vertices).filter(|&v| !is_boundary[v]).collect();
        if interior.is_empty() {
            return self.clone();
        }
        let mut pos_of = vec![usize::MAX; n_vertices];
        for (a, &v) in interior.iter().enumerate() {
            pos_of[v] = a;
        }

        // assemble the P1 stiffness matrix from the simplices
        let n = interior.len();
        let mut k_mat = DMatrix::<f64>::zeros(n, n);
        let mut rhs = vec![DVector::<f64>::zeros(n); m];
        let mut vertex_values: Vec<Vec<f64>> = Vec::with_capacity(n_vertices);
        {
            // flat copy of vertex values in vertex-index order
            let mut c = vec![0usize; d];
            for v in 0..n_vertices {
                let mut rem = v;
                for k in (0..d).rev() {
                    c[k] = rem % dims[k];
                    rem /= dims[k];
                }
                vertex_values.push(f.vertex_value(&c).to_vec());
            }
        }
        for s in f.simplices() {
            let grads = p1_gradients(&s.vertices);
            for (i, &vi) in s.vertex_ids.iter().enumerate() {
                for (j, &vj) in s.vertex_ids.iter().enumerate() {
                    let kij = s.volume
                        * grads[i]
                            .iter()
                            .zip(&grads[j])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    match (pos_of[vi], pos_of[vj]) {
                        (a, b) if a != usize::MAX && b != usize::MAX => {
                            k_mat[(a, b)] += kij;
                        }
                        (a, b) if a != usize::MAX && b == usize::MAX => {
                            for alpha in 0..m {
                                rhs[alpha][a] -= kij * vertex_values[vj][alpha];
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
        let chol = k_mat
            .cholesky()
            .expect("stiffness matrix is positive definite on interior vertices");
        let mut values = Vec::with_capacity(n_vertices * m);
        let sols: Vec<DVector<f64>> = (0..m).map(|alpha| chol.solve(&rhs[alpha])).collect();
        for v in 0..n_vertices {
            for (alpha, sol) in sols.iter().enumerate() {
                if pos_of[v] != usize::MAX {
                    values.push(sol[pos_of[v]]);
                } else {
                    values.push(vertex_values[v][alpha]);
                }
            }
        }
        MacroField::new(PiecewiseLinearField::new(
            d,
            m,
            f.origin().to_vec(),
            f.mesh_size(),
            f.n_cells().to_vec(),
            values,
        ))
    }
}

/// Gradients of the P1 basis functions on a simplex.
fn p1_gradients(vertices: &[Vec<f64>]) -> Vec<Vec<f64>> {
    match vertices.len() {
        2 => {
            let h = vertices[1][0] - vertices[0][0];
            vec![vec![-1.0 / h], vec![1.0 / h]]
        }
        3 => {
            let p = vertices;
            let twice_area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let grad = |a: &[f64], b: &[f64]| -> Vec<f64> {
                // gradient of the hat that is 1 opposite the edge (a, b)
                vec![(a[1] - b[1]) / twice_area, (b[0] - a[0]) / twice_area]
            };
            vec![
                grad(&p[1], &p[2]),
                grad(&p[2], &p[0]),
                grad(&p[0], &p[1]),
            ]
        }
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_extension_of_affine_trace_is_affine() {
        let v = MacroField::from_fn(2, 2, vec![0.0, 0.0], 0.125, vec![8, 8], |x, out| {
            out[0] = 1.5 * x[0] - 0.5 * x[1] + 0.25;
            out[1] = 0.75 * x[1];
        });
        // destroy the interior, keep the trace
        let mut wrecked = (*v.field).clone();
        for i in 1..8 {
            for j in 1..8 {
                wrecked.vertex_value_mut(&[i, j]).copy_from_slice(&[9.0, -9.0]);
            }
        }
        let ext = MacroField::new(wrecked).harmonic_extension();
        let mut got = [0.0; 2];
        let mut want = [0.0; 2];
        for &x in &[[0.3, 0.4], [0.7, 0.2], [0.5, 0.5]] {
            ext.field.eval(&x, &mut got).unwrap();
            v.field.eval(&x, &mut want).unwrap();
            assert!((got[0] - want[0]).abs() < 1e-10, "{got:?} vs {want:?}");
            assert!((got[1] - want[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn harmonic_extension_minimizes_dirichlet_energy() {
        let wedge = MacroField::wedge(2, 2, &[1.0, 0.0, 0.0, 1.0], 0.5, 8);
        let ext = wedge.harmonic_extension();
        let energy = |mf: &MacroField| -> f64 {
            let f = &mf.field;
            let mut grad = vec![0.0; 4];
            f.simplices()
                .iter()
                .map(|s| {
                    let c: Vec<f64> = (0..2)
                        .map(|k| s.vertices.iter().map(|p| p[k]).sum::<f64>() / 3.0)
                        .collect();
                    f.gradient_at(&c, &mut grad).unwrap();
                    s.volume * grad.iter().map(|g| g * g).sum::<f64>()
                })
                .sum()
        };
        assert!(energy(&ext) < energy(&wedge));
        // extending again is idempotent
        let ext2 = ext.harmonic_extension();
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        ext.field.eval(&[0.4, 0.6], &mut a).unwrap();
        ext2.field.eval(&[0.4, 0.6], &mut b).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-12);
    }

    #[test]
    fn wedge_has_two_gradient_cells() {
        let wedge = MacroField::wedge(2, 1, &[0.5, 0.25], 0.75, 8);
        let cells = crate::free_energy::gradient_cells(&wedge.field);
        assert_eq!(cells.len(), 2);
        let total: f64 = cells.iter().map(|(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // gradients are A ± amp e1 in the first row
        let mut slopes: Vec<f64> = cells.iter().map(|(g, _)| g[0]).collect();
        slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((slopes[0] - (0.5 - 0.75)).abs() < 1e-12);
        assert!((slopes[1] - (0.5 + 0.75)).abs() < 1e-12);
    }
}
