use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::{AffineMap, Configuration, LatticeDomain, Topology};

/// 4-point Gauss-Legendre rule on [0,1]: (node, weight).
pub const SEGMENT_RULE: [(f64, f64); 4] = [
    (0.069431844202973712, 0.173927422568727_f64),
    (0.330009478207571871, 0.326072577431273),
    (0.669990521792428129, 0.326072577431273),
    (0.930568155797026288, 0.173927422568727),
];

/// 7-point degree-5 rule on the reference triangle, barycentric (l1, l2, l3, weight);
/// weights sum to 1 and are relative to the triangle area.
pub const TRIANGLE_RULE: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    (
        [0.059715871789769820, 0.470142064105115090, 0.470142064105115090],
        0.132394152788506181,
    ),
    (
        [0.470142064105115090, 0.059715871789769820, 0.470142064105115090],
        0.132394152788506181,
    ),
    (
        [0.470142064105115090, 0.470142064105115090, 0.059715871789769820],
        0.132394152788506181,
    ),
    (
        [0.797426985353087320, 0.101286507323456340, 0.101286507323456340],
        0.125939180544827153,
    ),
    (
        [0.101286507323456340, 0.797426985353087320, 0.101286507323456340],
        0.125939180544827153,
    ),
    (
        [0.101286507323456340, 0.101286507323456340, 0.797426985353087320],
        0.125939180544827153,
    ),
];

/// A simplex of the Kuhn triangulation with its geometry and vertex ids.
#[derive(Debug, Clone)]
pub struct Simplex {
    /// vertex positions, `d+1` points in `R^d`
    pub vertices: Vec<Vec<f64>>,
    /// flat vertex ids into the owning field's vertex array
    pub vertex_ids: Vec<usize>,
    pub volume: f64,
}

/// Piecewise-linear field on the Kuhn triangulation of a vertex grid.
///
/// In d=2 every grid cell is split along its lower-left to upper-right
/// diagonal; the interpolant is affine on each simplex and continuous across
/// faces. This type carries both macroscopic test profiles and the canonical
/// interpolation of lattice configurations.
#[derive(Clone)]
pub struct PiecewiseLinearField {
    d: usize,
    m: usize,
    origin: Vec<f64>,
    h: f64,
    /// cells per axis; vertices per axis are `n_cells + 1`
    n_cells: Vec<usize>,
    /// vertex-major values, lexicographic vertex order, m-stride
    values: Vec<f64>,
}

impl fmt::Debug for PiecewiseLinearField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PiecewiseLinearField")
            .field("d", &self.d)
            .field("m", &self.m)
            .field("origin", &self.origin)
            .field("h", &self.h)
            .field("n_cells", &self.n_cells)
            .finish()
    }
}

impl PiecewiseLinearField {
    pub fn new(
        d: usize,
        m: usize,
        origin: Vec<f64>,
        h: f64,
        n_cells: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        assert!(h > 0.0);
        assert_eq!(origin.len(), d);
        assert_eq!(n_cells.len(), d);
        let n_vertices: usize = n_cells.iter().map(|&n| n + 1).product();
        assert_eq!(values.len(), n_vertices * m);
        PiecewiseLinearField {
            d,
            m,
            origin,
            h,
            n_cells,
            values,
        }
    }

    /// Build from a vertex-value closure on a mesh covering `[lo, lo + n h]`.
    pub fn from_vertex_fn(
        d: usize,
        m: usize,
        origin: Vec<f64>,
        h: f64,
        n_cells: Vec<usize>,
        f: impl Fn(&[f64], &mut [f64]),
    ) -> Self {
        let dims: Vec<usize> = n_cells.iter().map(|&n| n + 1).collect();
        let n_vertices: usize = dims.iter().product();
        let mut values = vec![0.0; n_vertices * m];
        let mut x = vec![0.0; d];
        for v in 0..n_vertices {
            let c = Self::decode(&dims, v);
            for k in 0..d {
                x[k] = origin[k] + h * c[k] as f64;
            }
            f(&x, &mut values[v * m..(v + 1) * m]);
        }
        Self::new(d, m, origin, h, n_cells, values)
    }

    fn decode(dims: &[usize], mut idx: usize) -> Vec<usize> {
        let d = dims.len();
        let mut out = vec![0usize; d];
        for k in (0..d).rev() {
            out[k] = idx % dims[k];
            idx /= dims[k];
        }
        out
    }

    fn vertex_index(&self, c: &[usize]) -> usize {
        let mut idx = 0;
        for k in 0..self.d {
            idx = idx * (self.n_cells[k] + 1) + c[k];
        }
        idx
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn mesh_size(&self) -> f64 {
        self.h
    }
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }
    pub fn n_cells(&self) -> &[usize] {
        &self.n_cells
    }

    pub fn vertex_value(&self, c: &[usize]) -> &[f64] {
        let v = self.vertex_index(c);
        &self.values[v * self.m..(v + 1) * self.m]
    }

    pub fn vertex_value_mut(&mut self, c: &[usize]) -> &mut [f64] {
        let v = self.vertex_index(c);
        &mut self.values[v * self.m..(v + 1) * self.m]
    }

    fn locate(&self, x: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
        let mut cell = vec![0usize; self.d];
        let mut t = vec![0.0; self.d];
        for k in 0..self.d {
            let rel = (x[k] - self.origin[k]) / self.h;
            if rel < -1e-9 || rel > self.n_cells[k] as f64 + 1e-9 {
                return Err(Error::OutsideDomain { point: x.to_vec() });
            }
            let c = (rel.floor().max(0.0) as usize).min(self.n_cells[k] - 1);
            cell[k] = c;
            t[k] = (rel - c as f64).clamp(0.0, 1.0);
        }
        Ok((cell, t))
    }

    /// Evaluate the interpolant.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let (cell, t) = self.locate(x)?;
        match self.d {
            1 => {
                let a = self.vertex_value(&[cell[0]]).to_vec();
                let b = self.vertex_value(&[cell[0] + 1]);
                for alpha in 0..self.m {
                    out[alpha] = (1.0 - t[0]) * a[alpha] + t[0] * b[alpha];
                }
            }
            2 => {
                let (cx, cy) = (cell[0], cell[1]);
                let v00 = self.vertex_value(&[cx, cy]).to_vec();
                let v11 = self.vertex_value(&[cx + 1, cy + 1]).to_vec();
                if t[0] >= t[1] {
                    // lower simplex: (0,0), (1,0), (1,1)
                    let v10 = self.vertex_value(&[cx + 1, cy]);
                    for alpha in 0..self.m {
                        out[alpha] = v00[alpha]
                            + t[0] * (v10[alpha] - v00[alpha])
                            + t[1] * (v11[alpha] - v10[alpha]);
                    }
                } else {
                    // upper simplex: (0,0), (0,1), (1,1)
                    let v01 = self.vertex_value(&[cx, cy + 1]);
                    for alpha in 0..self.m {
                        out[alpha] = v00[alpha]
                            + t[1] * (v01[alpha] - v00[alpha])
                            + t[0] * (v11[alpha] - v01[alpha]);
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    /// Constant gradient on the simplex containing `x` (row-major m x d).
    pub fn gradient_at(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let (cell, t) = self.locate(x)?;
        let lower = self.d == 1 || t[0] >= t[1];
        self.cell_gradient(&cell, lower, out);
        Ok(())
    }

    /// Gradient of the (lower/upper) simplex of a cell, row-major `m x d`.
    pub fn cell_gradient(&self, cell: &[usize], lower: bool, out: &mut [f64]) {
        match self.d {
            1 => {
                let a = self.vertex_value(&[cell[0]]).to_vec();
                let b = self.vertex_value(&[cell[0] + 1]);
                for alpha in 0..self.m {
                    out[alpha] = (b[alpha] - a[alpha]) / self.h;
                }
            }
            2 => {
                let (cx, cy) = (cell[0], cell[1]);
                let v00 = self.vertex_value(&[cx, cy]).to_vec();
                let v11 = self.vertex_value(&[cx + 1, cy + 1]).to_vec();
                if lower {
                    let v10 = self.vertex_value(&[cx + 1, cy]);
                    for alpha in 0..self.m {
                        out[alpha * 2] = (v10[alpha] - v00[alpha]) / self.h;
                        out[alpha * 2 + 1] = (v11[alpha] - v10[alpha]) / self.h;
                    }
                } else {
                    let v01 = self.vertex_value(&[cx, cy + 1]);
                    for alpha in 0..self.m {
                        out[alpha * 2] = (v11[alpha] - v01[alpha]) / self.h;
                        out[alpha * 2 + 1] = (v01[alpha] - v00[alpha]) / self.h;
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    /// All simplices of the triangulation.
    pub fn simplices(&self) -> Vec<Simplex> {
        let mut out = Vec::new();
        match self.d {
            1 => {
                for c in 0..self.n_cells[0] {
                    let x0 = self.origin[0] + self.h * c as f64;
                    out.push(Simplex {
                        vertices: vec![vec![x0], vec![x0 + self.h]],
                        vertex_ids: vec![self.vertex_index(&[c]), self.vertex_index(&[c + 1])],
                        volume: self.h,
                    });
                }
            }
            2 => {
                let vol = self.h * self.h / 2.0;
                for cx in 0..self.n_cells[0] {
                    for cy in 0..self.n_cells[1] {
                        let x0 = self.origin[0] + self.h * cx as f64;
                        let y0 = self.origin[1] + self.h * cy as f64;
                        let p00 = vec![x0, y0];
                        let p10 = vec![x0 + self.h, y0];
                        let p01 = vec![x0, y0 + self.h];
                        let p11 = vec![x0 + self.h, y0 + self.h];
                        out.push(Simplex {
                            vertices: vec![p00.clone(), p10, p11.clone()],
                            vertex_ids: vec![
                                self.vertex_index(&[cx, cy]),
                                self.vertex_index(&[cx + 1, cy]),
                                self.vertex_index(&[cx + 1, cy + 1]),
                            ],
                            volume: vol,
                        });
                        out.push(Simplex {
                            vertices: vec![p00, p01, p11],
                            vertex_ids: vec![
                                self.vertex_index(&[cx, cy]),
                                self.vertex_index(&[cx, cy + 1]),
                                self.vertex_index(&[cx + 1, cy + 1]),
                            ],
                            volume: vol,
                        });
                    }
                }
            }
            _ => unreachable!(),
        }
        out
    }

    /// Quadrature points (position, weight * volume) on a simplex.
    pub fn quad_points(&self, s: &Simplex) -> Vec<(Vec<f64>, f64)> {
        match self.d {
            1 => SEGMENT_RULE
                .iter()
                .map(|&(t, w)| {
                    let x = s.vertices[0][0] * (1.0 - t) + s.vertices[1][0] * t;
                    (vec![x], w * s.volume)
                })
                .collect(),
            2 => TRIANGLE_RULE
                .iter()
                .map(|&(l, w)| {
                    let x = (0..2)
                        .map(|k| {
                            l[0] * s.vertices[0][k] + l[1] * s.vertices[1][k] + l[2] * s.vertices[2][k]
                        })
                        .collect();
                    (x, w * s.volume)
                })
                .collect(),
            _ => unreachable!(),
        }
    }

    /// `L^r` norm (to the r-th power) of the field over its covered region.
    pub fn lr_norm_pow(&self, r: f64) -> f64 {
        let mut total = 0.0;
        let mut buf = vec![0.0; self.m];
        for s in self.simplices() {
            for (x, w) in self.quad_points(&s) {
                self.eval(&x, &mut buf).expect("quad point inside");
                let sq: f64 = buf.iter().map(|v| v * v).sum();
                total += w * sq.sqrt().powf(r);
            }
        }
        total
    }
}

type AnalyticFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A macroscopic field on the continuum box.
#[derive(Clone)]
pub enum Field {
    Affine(AffineMap),
    PiecewiseLinear(Arc<PiecewiseLinearField>),
    Analytic { m: usize, f: Arc<AnalyticFn> },
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Affine(l) => write!(f, "Field::Affine({l:?})"),
            Field::PiecewiseLinear(p) => write!(f, "Field::PiecewiseLinear({p:?})"),
            Field::Analytic { m, .. } => write!(f, "Field::Analytic(m={m})"),
        }
    }
}

impl Field {
    pub fn analytic(m: usize, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Field::Analytic { m, f: Arc::new(f) }
    }

    pub fn m(&self) -> usize {
        match self {
            Field::Affine(l) => l.m(),
            Field::PiecewiseLinear(p) => p.m(),
            Field::Analytic { m, .. } => *m,
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Field::Affine(l) => {
                l.at(x, out);
                Ok(())
            }
            Field::PiecewiseLinear(p) => p.eval(x, out),
            Field::Analytic { f, .. } => {
                f(x, out);
                Ok(())
            }
        }
    }
}

/// Discretize a macroscopic field: `X(i) = (1/eps) <u>_{cell(i)}`.
///
/// Cell averages over `eps i + [-eps/2, eps/2]^d` use a 4-point tensor
/// Gauss rule, exact for polynomial integrands up to degree 7 and hence exact
/// for affine fields. Piecewise-linear fields are sampled at the vertices
/// instead: cell averaging would smear their creases, and vertex sampling
/// makes discretize/interpolate mutually inverse on the grid-aligned class.
pub fn discretize(u: &Field, dom: &Arc<LatticeDomain>) -> Result<Configuration> {
    let m = dom.m();
    assert_eq!(u.m(), m, "field target dimension mismatch");
    let eps = dom.eps();
    let mut cfg = Configuration::zeros(dom);
    let mut buf = vec![0.0; m];
    let mut acc = vec![0.0; m];
    for i in 0..dom.n_sites() {
        let pos = dom.position(i);
        let out = cfg.values_mut(i);
        match u {
            Field::Affine(l) => {
                l.at(&pos, &mut buf);
                out.copy_from_slice(&buf);
            }
            Field::PiecewiseLinear(p) => {
                p.eval(&pos, &mut buf)?;
                out.copy_from_slice(&buf);
            }
            Field::Analytic { f, .. } => {
                acc.iter_mut().for_each(|v| *v = 0.0);
                match dom.d() {
                    1 => {
                        for &(t, w) in &SEGMENT_RULE {
                            let x = [pos[0] + eps * (t - 0.5)];
                            f(&x, &mut buf);
                            for alpha in 0..m {
                                acc[alpha] += w * buf[alpha];
                            }
                        }
                    }
                    2 => {
                        for &(t0, w0) in &SEGMENT_RULE {
                            for &(t1, w1) in &SEGMENT_RULE {
                                let x = [pos[0] + eps * (t0 - 0.5), pos[1] + eps * (t1 - 0.5)];
                                f(&x, &mut buf);
                                for alpha in 0..m {
                                    acc[alpha] += w0 * w1 * buf[alpha];
                                }
                            }
                        }
                    }
                    _ => unreachable!(),
                }
                out.copy_from_slice(&acc);
            }
        }
        for v in out.iter_mut() {
            *v /= eps;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "discretize",
                });
            }
        }
    }
    Ok(cfg)
}

/// Canonical interpolation: the piecewise-linear field with
/// `v(eps i) = eps X(i)` on the Kuhn triangulation of the site box.
pub fn interpolate(x: &Configuration) -> Result<PiecewiseLinearField> {
    let dom = x.domain();
    if dom.topology() == Topology::Torus {
        return Err(Error::UnsupportedDimension {
            d: dom.d(),
            supported: "interpolation is defined on box domains",
        });
    }
    let d = dom.d();
    let m = dom.m();
    let eps = dom.eps();
    let n_cells: Vec<usize> = dom.site_ext().iter().map(|&e| (e - 1).max(0) as usize).collect();
    if n_cells.iter().any(|&n| n == 0) {
        return Err(Error::EmptyLattice { eps });
    }
    let origin: Vec<f64> = dom.site_lo().iter().map(|&c| c as f64 * eps).collect();
    let dims: Vec<usize> = n_cells.iter().map(|&n| n + 1).collect();
    let n_vertices: usize = dims.iter().product();
    let mut values = vec![0.0; n_vertices * m];
    for v in 0..n_vertices {
        let c = PiecewiseLinearField::decode(&dims, v);
        let coords: Vec<i64> = c
            .iter()
            .zip(dom.site_lo())
            .map(|(&ck, &lo)| lo + ck as i64)
            .collect();
        let i = dom.site_index(&coords).expect("vertex is a site");
        for alpha in 0..m {
            values[v * m + alpha] = eps * x.values(i)[alpha];
        }
    }
    Ok(PiecewiseLinearField::new(d, m, origin, eps, n_cells, values))
}
