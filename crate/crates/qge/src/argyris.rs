//! The quintic Argyris triangle and the global C1 space built from it.
//!
//! Each triangle carries 21 degrees of freedom: value, both first
//! derivatives, and all three second derivatives at every vertex, plus the
//! normal derivative at every edge midpoint. Sharing those functionals
//! between neighboring cells makes the piecewise quintic globally C1: the
//! trace on a shared edge is a 1D quintic pinned by the six shared Hermite
//! values at its endpoints, and the normal derivative along the edge is a
//! quartic pinned by the shared gradient and mixed second derivatives at the
//! endpoints together with the shared midpoint normal value.
//!
//! The nodal basis is built per element by solving the 21x21 system that
//! pairs the functionals with quintic monomials. Raw monomials in physical
//! coordinates would make that system catastrophically ill-conditioned under
//! refinement, so the solve uses coordinates centered at the element centroid
//! and scaled by the element diameter, with each derivative functional scaled
//! by the matching power of the diameter. In that form the matrix depends
//! only on the element's shape and the orientation of its edge normals, never
//! on its position or size, so congruent translated elements (all of them, on
//! a structured mesh) share one factorization and one set of quadrature
//! tables.

use crate::error::QgeError;
use crate::linalg::DenseMatrix;
use crate::mesh::Mesh;
use crate::quadrature::{triangle_rule, QuadratureRule};
use std::collections::HashMap;

/// Monomial exponents of the quintic space, graded lexicographic.
pub const MONOMIALS: [(usize, usize); 21] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
    (4, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 4),
    (5, 0),
    (4, 1),
    (3, 2),
    (2, 3),
    (1, 4),
    (0, 5),
];

/// Derivative order of each local functional (three vertices, then edges).
const DOF_ORDER: [usize; 21] = [
    0, 1, 1, 2, 2, 2, //
    0, 1, 1, 2, 2, 2, //
    0, 1, 1, 2, 2, 2, //
    1, 1, 1,
];

pub const QUADRATURE_DEGREE: usize = 12;

/// A field with enough smoothness to supply every Argyris functional.
pub trait ScalarField {
    fn value(&self, x: f64, y: f64) -> f64;
    fn gradient(&self, x: f64, y: f64) -> [f64; 2];
    /// Second derivatives ordered (xx, xy, yy).
    fn hessian(&self, x: f64, y: f64) -> [f64; 3];
}

/// Value and derivatives of a discrete field at one point.
#[derive(Clone, Copy, Debug, Default)]
pub struct FieldSample {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
    pub dxy: f64,
    pub dyy: f64,
}

impl FieldSample {
    pub fn laplacian(&self) -> f64 {
        self.dxx + self.dyy
    }
}

/// Coefficients of a discrete field, one per global degree of freedom.
#[derive(Clone, Debug)]
pub struct CoefficientVector {
    pub values: Vec<f64>,
    pub time: f64,
}

/// Nodal basis shared by all congruent translated elements.
pub struct ShapeBasis {
    pub diameter: f64,
    /// Monomial coefficients of each basis function: `coef[k * 21 + j]` is
    /// the coefficient of monomial `j` in basis function `k`, in centered
    /// diameter-scaled coordinates.
    coef: Vec<f64>,
    /// Infinity-norm condition estimate of the scaled nodal matrix.
    pub condition: f64,
    /// Quadrature point locations in scaled local coordinates.
    pub qp_local: Vec<[f64; 2]>,
    /// Basis values and global derivatives at every quadrature point,
    /// laid out `[q][deriv][k]` with deriv in (val, dx, dy, dxx, dxy, dyy).
    pub tables: Vec<f64>,
}

pub const TAB_VAL: usize = 0;
pub const TAB_DX: usize = 1;
pub const TAB_DY: usize = 2;
pub const TAB_DXX: usize = 3;
pub const TAB_DXY: usize = 4;
pub const TAB_DYY: usize = 5;

impl ShapeBasis {
    #[inline]
    pub fn table(&self, q: usize, deriv: usize) -> &[f64] {
        let at = (q * 6 + deriv) * 21;
        &self.tables[at..at + 21]
    }

    /// Values of all 21 basis functions at a scaled local point.
    pub fn basis_values(&self, local: [f64; 2]) -> [f64; 21] {
        let m = monomial_derivatives(local[0], local[1]);
        let mut out = [0.0f64; 21];
        for k in 0..21 {
            let row = &self.coef[k * 21..(k + 1) * 21];
            let mut s = 0.0;
            for j in 0..21 {
                s += row[j] * m[0][j];
            }
            out[k] = s;
        }
        out
    }

    /// Evaluate one local polynomial (a 21-coefficient combination of the
    /// basis) at a scaled local point, returning global derivatives.
    pub fn eval_local(&self, local: [f64; 2], dofs: &[f64; 21]) -> FieldSample {
        // Collapse the basis combination into monomial coefficients first.
        let mut w = [0.0f64; 21];
        for k in 0..21 {
            let ck = dofs[k];
            if ck != 0.0 {
                let row = &self.coef[k * 21..(k + 1) * 21];
                for j in 0..21 {
                    w[j] += ck * row[j];
                }
            }
        }
        let m = monomial_derivatives(local[0], local[1]);
        let d = self.diameter;
        let mut out = FieldSample::default();
        for j in 0..21 {
            out.value += w[j] * m[0][j];
            out.dx += w[j] * m[1][j];
            out.dy += w[j] * m[2][j];
            out.dxx += w[j] * m[3][j];
            out.dxy += w[j] * m[4][j];
            out.dyy += w[j] * m[5][j];
        }
        out.dx /= d;
        out.dy /= d;
        out.dxx /= d * d;
        out.dxy /= d * d;
        out.dyy /= d * d;
        out
    }
}

/// Value and first/second derivatives of all 21 monomials at one point.
fn monomial_derivatives(x: f64, y: f64) -> [[f64; 21]; 6] {
    let mut out = [[0.0f64; 21]; 6];
    // Powers with the convention x^-n = 0 handled by the guards below.
    let pow = |b: f64, e: i32| -> f64 {
        if e < 0 {
            0.0
        } else {
            b.powi(e)
        }
    };
    for (j, &(a, b)) in MONOMIALS.iter().enumerate() {
        let (af, bf) = (a as f64, b as f64);
        out[0][j] = pow(x, a as i32) * pow(y, b as i32);
        out[1][j] = af * pow(x, a as i32 - 1) * pow(y, b as i32);
        out[2][j] = bf * pow(x, a as i32) * pow(y, b as i32 - 1);
        out[3][j] = af * (af - 1.0) * pow(x, a as i32 - 2) * pow(y, b as i32);
        out[4][j] = af * bf * pow(x, a as i32 - 1) * pow(y, b as i32 - 1);
        out[5][j] = bf * (bf - 1.0) * pow(x, a as i32) * pow(y, b as i32 - 2);
    }
    out
}

fn build_shape(
    cell: usize,
    verts: [[f64; 2]; 3],
    normals: [[f64; 2]; 3],
    quad: &QuadratureRule,
) -> Result<ShapeBasis, QgeError> {
    let mut diameter = 0.0f64;
    for a in 0..3 {
        let b = (a + 1) % 3;
        let d = ((verts[a][0] - verts[b][0]).powi(2) + (verts[a][1] - verts[b][1]).powi(2)).sqrt();
        diameter = diameter.max(d);
    }
    let cx = (verts[0][0] + verts[1][0] + verts[2][0]) / 3.0;
    let cy = (verts[0][1] + verts[1][1] + verts[2][1]) / 3.0;
    let local: [[f64; 2]; 3] = [
        [(verts[0][0] - cx) / diameter, (verts[0][1] - cy) / diameter],
        [(verts[1][0] - cx) / diameter, (verts[1][1] - cy) / diameter],
        [(verts[2][0] - cx) / diameter, (verts[2][1] - cy) / diameter],
    ];

    // Scaled nodal matrix: row i = functional i applied to monomial j, with
    // derivative functionals premultiplied by diameter^order so every entry
    // is O(1) regardless of element size.
    let mut a = DenseMatrix::zeros(21, 21);
    for v in 0..3 {
        let m = monomial_derivatives(local[v][0], local[v][1]);
        for d in 0..6 {
            for j in 0..21 {
                a.set(6 * v + d, j, m[d][j]);
            }
        }
    }
    for e in 0..3 {
        let p = local[e];
        let q = local[(e + 1) % 3];
        let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        let m = monomial_derivatives(mid[0], mid[1]);
        let n = normals[e];
        for j in 0..21 {
            a.set(18 + e, j, n[0] * m[1][j] + n[1] * m[2][j]);
        }
    }

    let norm_a = a.norm_inf();
    let lu = a
        .factorize()
        .map_err(|_| QgeError::SingularElement { cell })?;

    // Columns of the inverse give the monomial coefficients of each basis
    // function in the scaled frame; undo the functional scaling per column.
    let mut coef = vec![0.0f64; 21 * 21];
    let mut norm_ainv = 0.0f64;
    let mut rows_abs = vec![0.0f64; 21];
    for k in 0..21 {
        let mut e = vec![0.0; 21];
        e[k] = 1.0;
        let col = lu.solve(&e);
        let scale = diameter.powi(DOF_ORDER[k] as i32);
        for j in 0..21 {
            coef[k * 21 + j] = col[j] * scale;
            rows_abs[j] += col[j].abs();
        }
    }
    for j in 0..21 {
        norm_ainv = norm_ainv.max(rows_abs[j]);
    }
    let condition = norm_a * norm_ainv;

    // Quadrature tables with global derivatives.
    let nq = quad.len();
    let mut qp_local = Vec::with_capacity(nq);
    let mut tables = vec![0.0f64; nq * 6 * 21];
    for q in 0..nq {
        let l = quad.points[q];
        let px = l[0] * local[0][0] + l[1] * local[1][0] + l[2] * local[2][0];
        let py = l[0] * local[0][1] + l[1] * local[1][1] + l[2] * local[2][1];
        qp_local.push([px, py]);
        let m = monomial_derivatives(px, py);
        let inv_d = 1.0 / diameter;
        let scale = [1.0, inv_d, inv_d, inv_d * inv_d, inv_d * inv_d, inv_d * inv_d];
        for k in 0..21 {
            let row = &coef[k * 21..(k + 1) * 21];
            for d in 0..6 {
                let mut s = 0.0;
                for j in 0..21 {
                    s += row[j] * m[d][j];
                }
                tables[(q * 6 + d) * 21 + k] = s * scale[d];
            }
        }
    }

    Ok(ShapeBasis {
        diameter,
        coef,
        condition,
        qp_local,
        tables,
    })
}

/// Global C1 space over a mesh: numbering, constraints, and per-element
/// basis data ready for assembly.
pub struct ArgyrisSpace {
    pub mesh: Mesh,
    pub quad: QuadratureRule,
    pub shapes: Vec<ShapeBasis>,
    pub cell_shape: Vec<usize>,
    pub cell_centroid: Vec<[f64; 2]>,
    /// Global degree of freedom for each of the 21 local slots per cell.
    pub cell_dofs: Vec<[usize; 21]>,
    pub n_dofs: usize,
    pub constrained: Vec<bool>,
    /// Full index of every unconstrained degree of freedom.
    pub free_dofs: Vec<usize>,
    /// Free slot of every full index, or usize::MAX when constrained.
    pub full_to_free: Vec<usize>,
}

impl ArgyrisSpace {
    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    #[inline]
    pub fn edge_dof(&self, edge: usize) -> usize {
        6 * self.mesh.n_vertices() + edge
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        self.mesh.cell_area(cell)
    }

    /// Physical location of quadrature point `q` of `cell`.
    #[inline]
    pub fn quad_point(&self, cell: usize, q: usize) -> [f64; 2] {
        let shape = &self.shapes[self.cell_shape[cell]];
        let c = self.cell_centroid[cell];
        let l = shape.qp_local[q];
        [c[0] + shape.diameter * l[0], c[1] + shape.diameter * l[1]]
    }

    /// Interpolate a smooth field by evaluating every nodal functional.
    /// Boundary constraints are not applied here; the caller decides.
    pub fn interpolate(&self, field: &dyn ScalarField) -> CoefficientVector {
        let mesh = &self.mesh;
        let mut values = vec![0.0f64; self.n_dofs];
        for (v, p) in mesh.vertices.iter().enumerate() {
            let g = field.gradient(p.x, p.y);
            let h = field.hessian(p.x, p.y);
            values[6 * v] = field.value(p.x, p.y);
            values[6 * v + 1] = g[0];
            values[6 * v + 2] = g[1];
            values[6 * v + 3] = h[0];
            values[6 * v + 4] = h[1];
            values[6 * v + 5] = h[2];
        }
        for e in 0..mesh.n_edges() {
            let mid = mesh.edge_midpoint(e);
            let g = field.gradient(mid.x, mid.y);
            let n = mesh.edge_normal(e);
            values[self.edge_dof(e)] = g[0] * n[0] + g[1] * n[1];
        }
        CoefficientVector { values, time: 0.0 }
    }

    /// Zero every constrained coefficient.
    pub fn apply_constraints(&self, coeffs: &mut CoefficientVector) {
        for (i, &c) in self.constrained.iter().enumerate() {
            if c {
                coeffs.values[i] = 0.0;
            }
        }
    }

    /// Gather the 21 local coefficients of a cell.
    #[inline]
    pub fn gather(&self, cell: usize, values: &[f64]) -> [f64; 21] {
        let dofs = &self.cell_dofs[cell];
        let mut out = [0.0f64; 21];
        for k in 0..21 {
            out[k] = values[dofs[k]];
        }
        out
    }

    /// Evaluate the discrete field at a point inside a given cell.
    pub fn evaluate_in_cell(&self, cell: usize, values: &[f64], x: f64, y: f64) -> FieldSample {
        let shape = &self.shapes[self.cell_shape[cell]];
        let c = self.cell_centroid[cell];
        let local = [(x - c[0]) / shape.diameter, (y - c[1]) / shape.diameter];
        let dofs = self.gather(cell, values);
        shape.eval_local(local, &dofs)
    }

    /// Evaluate the discrete field anywhere in the domain.
    pub fn evaluate(&self, coeffs: &CoefficientVector, x: f64, y: f64) -> Result<FieldSample, QgeError> {
        let cell = self.mesh.locate(x, y)?;
        Ok(self.evaluate_in_cell(cell, &coeffs.values, x, y))
    }

    /// Transport velocity carried by the streamfunction: u = (dψ/dy, -dψ/dx).
    pub fn velocity(&self, coeffs: &CoefficientVector, x: f64, y: f64) -> Result<[f64; 2], QgeError> {
        let s = self.evaluate(coeffs, x, y)?;
        Ok([s.dy, -s.dx])
    }

    /// Expand a free-slot vector into a full coefficient vector (constrained
    /// entries zero).
    pub fn scatter_free(&self, free: &[f64]) -> Vec<f64> {
        debug_assert_eq!(free.len(), self.n_free());
        let mut full = vec![0.0f64; self.n_dofs];
        for (slot, &dof) in self.free_dofs.iter().enumerate() {
            full[dof] = free[slot];
        }
        full
    }

    /// Restrict a full vector to its free slots.
    pub fn restrict_free(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }
}

/// A discrete field viewed as a smooth field, for re-interpolation and for
/// manufactured solutions that live exactly in the discrete space.
pub struct DiscreteField<'a> {
    pub space: &'a ArgyrisSpace,
    pub values: &'a [f64],
    pub scale: f64,
}

impl ScalarField for DiscreteField<'_> {
    fn value(&self, x: f64, y: f64) -> f64 {
        let cell = self.space.mesh.locate(x, y).expect("point outside mesh");
        self.scale * self.space.evaluate_in_cell(cell, self.values, x, y).value
    }
    fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let cell = self.space.mesh.locate(x, y).expect("point outside mesh");
        let s = self.space.evaluate_in_cell(cell, self.values, x, y);
        [self.scale * s.dx, self.scale * s.dy]
    }
    fn hessian(&self, x: f64, y: f64) -> [f64; 3] {
        let cell = self.space.mesh.locate(x, y).expect("point outside mesh");
        let s = self.space.evaluate_in_cell(cell, self.values, x, y);
        [self.scale * s.dxx, self.scale * s.dxy, self.scale * s.dyy]
    }
}

/// Build the global space: local bases (deduplicated by congruence class),
/// vertex-major numbering, and the clamped-boundary constraint set.
///
/// Numbering: vertex `v` owns slots `6v .. 6v+5` ordered (value, dx, dy,
/// dxx, dxy, dyy); edge `e` owns slot `6 * n_vertices + e`.
pub fn build_space(mesh: Mesh) -> Result<ArgyrisSpace, QgeError> {
    let quad = triangle_rule(QUADRATURE_DEGREE);
    let n_dofs = 6 * mesh.n_vertices() + mesh.n_edges();

    let mut shapes: Vec<ShapeBasis> = Vec::new();
    let mut shape_of_key: HashMap<[i64; 10], usize> = HashMap::new();
    let mut cell_shape = Vec::with_capacity(mesh.n_cells());
    let mut cell_centroid = Vec::with_capacity(mesh.n_cells());
    let mut cell_dofs = Vec::with_capacity(mesh.n_cells());

    for c in 0..mesh.n_cells() {
        let verts = mesh.cell_vertex_coords(c);
        let cell = &mesh.cells[c];
        let normals = [
            mesh.edge_normal(cell.edges[0]),
            mesh.edge_normal(cell.edges[1]),
            mesh.edge_normal(cell.edges[2]),
        ];
        let cx = (verts[0][0] + verts[1][0] + verts[2][0]) / 3.0;
        let cy = (verts[0][1] + verts[1][1] + verts[2][1]) / 3.0;
        cell_centroid.push([cx, cy]);

        // Congruence key: vertex offsets and edge normals, quantized. The
        // offsets are scale-invariant only per fixed size, which is what we
        // want; translated copies collide, anything else gets its own basis.
        let quant = |v: f64| -> i64 { (v * 1e12).round() as i64 };
        let key = [
            quant(verts[1][0] - verts[0][0]),
            quant(verts[1][1] - verts[0][1]),
            quant(verts[2][0] - verts[0][0]),
            quant(verts[2][1] - verts[0][1]),
            quant(normals[0][0]),
            quant(normals[0][1]),
            quant(normals[1][0]),
            quant(normals[1][1]),
            quant(normals[2][0]),
            quant(normals[2][1]),
        ];
        let shape_id = match shape_of_key.get(&key) {
            Some(&id) => id,
            None => {
                let shape = build_shape(c, verts, normals, &quad)?;
                shapes.push(shape);
                let id = shapes.len() - 1;
                shape_of_key.insert(key, id);
                id
            }
        };
        cell_shape.push(shape_id);

        let mut dofs = [0usize; 21];
        for v in 0..3 {
            for d in 0..6 {
                dofs[6 * v + d] = 6 * cell.v[v] + d;
            }
        }
        for e in 0..3 {
            dofs[18 + e] = 6 * mesh.n_vertices() + cell.edges[e];
        }
        cell_dofs.push(dofs);
    }

    // Clamped boundary: the function and its full gradient vanish at every
    // boundary vertex. Along a straight boundary run both tangential
    // derivatives of those traces vanish too, which pins the
    // tangent-tangent and mixed second derivatives; only the normal-normal
    // second derivative stays free. Corners sit on two runs, so everything
    // is pinned there. Midpoint normal slopes on boundary edges vanish with
    // the gradient trace.
    let tol = 1e-12 * mesh.width.max(mesh.height).max(1.0);
    let mut constrained = vec![false; n_dofs];
    for (v, p) in mesh.vertices.iter().enumerate() {
        let on_vertical = p.x.abs() <= tol || (p.x - mesh.width).abs() <= tol;
        let on_horizontal = p.y.abs() <= tol || (p.y - mesh.height).abs() <= tol;
        if on_vertical || on_horizontal {
            constrained[6 * v] = true;
            constrained[6 * v + 1] = true;
            constrained[6 * v + 2] = true;
            constrained[6 * v + 4] = true; // mixed derivative on any straight run
            if on_horizontal {
                constrained[6 * v + 3] = true; // tangent is x
            }
            if on_vertical {
                constrained[6 * v + 5] = true; // tangent is y
            }
        }
    }
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge.boundary {
            constrained[6 * mesh.n_vertices() + e] = true;
        }
    }

    let mut free_dofs = Vec::new();
    let mut full_to_free = vec![usize::MAX; n_dofs];
    for (i, &c) in constrained.iter().enumerate() {
        if !c {
            full_to_free[i] = free_dofs.len();
            free_dofs.push(i);
        }
    }

    Ok(ArgyrisSpace {
        mesh,
        quad,
        shapes,
        cell_shape,
        cell_centroid,
        cell_dofs,
        n_dofs,
        constrained,
        free_dofs,
        full_to_free,
    })
}
