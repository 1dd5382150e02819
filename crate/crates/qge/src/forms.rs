//! Weak-form assembly over the C1 space.
//!
//! The solver advances the streamfunction ψ through
//!
//!   (∇ψ_t, ∇χ) + Re⁻¹ (Δψ, Δχ) + b(ψ; ψ, χ) − Ro⁻¹ (ψ_x, χ) = Ro⁻¹ (F, χ)
//!
//! for every test function χ in the constrained space, where
//!
//!   b(ξ; ψ, χ) = ∫ Δξ (ψ_y χ_x − ψ_x χ_y)
//!
//! carries the advection of vorticity by the streamfunction velocity. This
//! module assembles the three linear operators (gradient, biharmonic through
//! Δ·Δ pairing, and the x-derivative pairing from the planetary term), the
//! load vector, and the nonlinear term with its exact Jacobian. Everything
//! integrates with the same degree-12 rule: the highest integrand here is
//! the trilinear form's degree 11, so all the structural identities (skew
//! symmetry, the b/b* exchange rule, energy balance) hold to round-off, not
//! just asymptotically.

use crate::argyris::{ArgyrisSpace, TAB_DX, TAB_DXX, TAB_DXY, TAB_DY, TAB_DYY, TAB_VAL};
use crate::quadrature::QuadratureRule;
use crate::sparse::CsrMatrix;

/// The time-independent operators of the weak form, on the full
/// (unconstrained) index set.
pub struct LinearForms {
    /// (∇φ_j, ∇φ_i)
    pub grad: CsrMatrix,
    /// (Δφ_j, Δφ_i)
    pub lap: CsrMatrix,
    /// ((φ_j)_x, φ_i)
    pub dx: CsrMatrix,
}

/// Empty matrix with the element-coupling pattern of the space.
pub fn full_pattern(space: &ArgyrisSpace) -> CsrMatrix {
    CsrMatrix::from_element_dofs(space.n_dofs, space.cell_dofs.iter().copied())
}

pub fn assemble_linear_forms(space: &ArgyrisSpace) -> LinearForms {
    let mut grad = full_pattern(space);
    let mut lap = grad.clone();
    let mut dx = grad.clone();
    let nq = space.quad.len();

    for c in 0..space.mesh.n_cells() {
        let shape = &space.shapes[space.cell_shape[c]];
        let area = space.cell_area(c);
        let mut g_loc = [0.0f64; 21 * 21];
        let mut b_loc = [0.0f64; 21 * 21];
        let mut d_loc = [0.0f64; 21 * 21];
        for q in 0..nq {
            let w = area * space.quad.weights[q];
            let val = shape.table(q, TAB_VAL);
            let px = shape.table(q, TAB_DX);
            let py = shape.table(q, TAB_DY);
            let pxx = shape.table(q, TAB_DXX);
            let pyy = shape.table(q, TAB_DYY);
            for i in 0..21 {
                let wx = w * px[i];
                let wy = w * py[i];
                let wl = w * (pxx[i] + pyy[i]);
                let wv = w * val[i];
                let gi = &mut g_loc[i * 21..(i + 1) * 21];
                let bi = &mut b_loc[i * 21..(i + 1) * 21];
                let di = &mut d_loc[i * 21..(i + 1) * 21];
                for j in 0..21 {
                    gi[j] += wx * px[j] + wy * py[j];
                    bi[j] += wl * (pxx[j] + pyy[j]);
                    di[j] += wv * px[j];
                }
            }
        }
        let dofs = &space.cell_dofs[c];
        for i in 0..21 {
            for j in 0..21 {
                grad.add(dofs[i], dofs[j], g_loc[i * 21 + j]);
                lap.add(dofs[i], dofs[j], b_loc[i * 21 + j]);
                dx.add(dofs[i], dofs[j], d_loc[i * 21 + j]);
            }
        }
    }
    LinearForms { grad, lap, dx }
}

/// Full second-derivative pairing: Σ over (xx, xy twice, yy) of
/// (∂²φ_j, ∂²φ_i). On the constrained space its quadratic form equals the
/// one of the Δ·Δ pairing.
pub fn assemble_h2_form(space: &ArgyrisSpace) -> CsrMatrix {
    let mut s = full_pattern(space);
    let nq = space.quad.len();
    for c in 0..space.mesh.n_cells() {
        let shape = &space.shapes[space.cell_shape[c]];
        let area = space.cell_area(c);
        let mut loc = [0.0f64; 21 * 21];
        for q in 0..nq {
            let w = area * space.quad.weights[q];
            let pxx = shape.table(q, TAB_DXX);
            let pxy = shape.table(q, TAB_DXY);
            let pyy = shape.table(q, TAB_DYY);
            for i in 0..21 {
                let row = &mut loc[i * 21..(i + 1) * 21];
                let (wxx, wxy, wyy) = (w * pxx[i], 2.0 * w * pxy[i], w * pyy[i]);
                for j in 0..21 {
                    row[j] += wxx * pxx[j] + wxy * pxy[j] + wyy * pyy[j];
                }
            }
        }
        let dofs = &space.cell_dofs[c];
        for i in 0..21 {
            for j in 0..21 {
                s.add(dofs[i], dofs[j], loc[i * 21 + j]);
            }
        }
    }
    s
}

/// Load vector L_i = (f, φ_i) with the space's own quadrature.
pub fn assemble_load(space: &ArgyrisSpace, f: &dyn Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0f64; space.n_dofs];
    let nq = space.quad.len();
    for c in 0..space.mesh.n_cells() {
        let shape = &space.shapes[space.cell_shape[c]];
        let area = space.cell_area(c);
        let dofs = &space.cell_dofs[c];
        for q in 0..nq {
            let p = space.quad_point(c, q);
            let wf = area * space.quad.weights[q] * f(p[0], p[1]);
            let val = shape.table(q, TAB_VAL);
            for i in 0..21 {
                out[dofs[i]] += wf * val[i];
            }
        }
    }
    out
}

/// Load vector under an arbitrary rule; the cross-check path for quadrature
/// sufficiency, so it deliberately avoids the precomputed tables.
pub fn assemble_load_with_rule(
    space: &ArgyrisSpace,
    rule: &QuadratureRule,
    f: &dyn Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let mut out = vec![0.0f64; space.n_dofs];
    for c in 0..space.mesh.n_cells() {
        let shape = &space.shapes[space.cell_shape[c]];
        let area = space.cell_area(c);
        let dofs = &space.cell_dofs[c];
        let verts = space.mesh.cell_vertex_coords(c);
        let centroid = space.cell_centroid[c];
        for q in 0..rule.len() {
            let p = rule.physical_point(q, verts);
            let local = [
                (p[0] - centroid[0]) / shape.diameter,
                (p[1] - centroid[1]) / shape.diameter,
            ];
            let val = shape.basis_values(local);
            let wf = area * rule.weights[q] * f(p[0], p[1]);
            for i in 0..21 {
                out[dofs[i]] += wf * val[i];
            }
        }
    }
    out
}

/// Laplacian and gradient of a coefficient vector at every quadrature point,
/// cached once per Newton iterate and reused by the residual and by every
/// Jacobian application.
pub struct StateTable {
    pub lap: Vec<f64>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

pub fn compute_state(space: &ArgyrisSpace, u: &[f64]) -> StateTable {
    let nq = space.quad.len();
    let n = space.mesh.n_cells() * nq;
    let mut state = StateTable {
        lap: vec![0.0; n],
        dx: vec![0.0; n],
        dy: vec![0.0; n],
    };
    for c in 0..space.mesh.n_cells() {
        let shape = &space.shapes[space.cell_shape[c]];
        let local = space.gather(c, u);
        for q in 0..nq {
            let px = shape.table(q, TAB_DX);
            let py = shape.table(q, TAB_DY);
            let pxx = shape.table(q, TAB_DXX);
            let pyy = shape.table(q, TAB_DYY);
            let (mut sx, mut sy, mut sl) = (0.0f64, 0.0f64, 0.0f64);
            for k in 0..21 {
                let u_k = local[k];
                sx += u_k * px[k];
                sy += u_k * py[k];
                sl += u_k * (pxx[k] + pyy[k]);
            }
            let at = c * nq + q;
            state.dx[at] = sx;
            state.dy[at] = sy;
            state.lap[at] = sl;
        }
    }
    state
}

/// Add N(u)_i = b(u; u, φ_i) to `out`, given the state of `u`.
pub fn add_nonlinear_residual(space: &ArgyrisSpace, state: &StateTable, out: &mut [f64]) {
    let nq = space.quad.len();
    for c in 0..space.mesh.n_cells() {
        let shape = &space.shapes[space.cell_shape[c]];
        let area = space.cell_area(c);
        let dofs = &space.cell_dofs[c];
        for q in 0..nq {
            let at = c * nq + q;
            let w = area * space.quad.weights[q] * state.lap[at];
            let (ux, uy) = (state.dx[at], state.dy[at]);
            let px = shape.table(q, TAB_DX);
            let py = shape.table(q, TAB_DY);
            for i in 0..21 {
                out[dofs[i]] += w * (uy * px[i] - ux * py[i]);
            }
        }
    }
}

/// Add J(u) v to `out`, where J is the exact derivative of N at the state's
/// base point: J(u)v = b(v; u, ·) + b(u; v, ·).
pub fn add_jacobian_matvec(space: &ArgyrisSpace, state: &StateTable, v: &[f64], out: &mut [f64]) {
    let nq = space.quad.len();
    for c in 0..space.mesh.n_cells() {
        let shape = &space.shapes[space.cell_shape[c]];
        let area = space.cell_area(c);
        let dofs = &space.cell_dofs[c];
        let local = space.gather(c, v);
        for q in 0..nq {
            let px = shape.table(q, TAB_DX);
            let py = shape.table(q, TAB_DY);
            let pxx = shape.table(q, TAB_DXX);
            let pyy = shape.table(q, TAB_DYY);
            let (mut vx, mut vy, mut vl) = (0.0f64, 0.0f64, 0.0f64);
            for k in 0..21 {
                let vk = local[k];
                vx += vk * px[k];
                vy += vk * py[k];
                vl += vk * (pxx[k] + pyy[k]);
            }
            let at = c * nq + q;
            let w = area * space.quad.weights[q];
            // Coefficients multiplying the test gradient.
            let cx = w * (vl * state.dy[at] + state.lap[at] * vy);
            let cy = w * (vl * state.dx[at] + state.lap[at] * vx);
            for i in 0..21 {
                out[dofs[i]] += cx * px[i] - cy * py[i];
            }
        }
    }
}

/// Assemble the nonlinear Jacobian into a matrix with the full pattern.
pub fn assemble_nonlinear_jacobian(space: &ArgyrisSpace, state: &StateTable, jac: &mut CsrMatrix) {
    let nq = space.quad.len();
    for c in 0..space.mesh.n_cells() {
        let shape = &space.shapes[space.cell_shape[c]];
        let area = space.cell_area(c);
        let dofs = &space.cell_dofs[c];
        let mut loc = [0.0f64; 21 * 21];
        for q in 0..nq {
            let at = c * nq + q;
            let w = area * space.quad.weights[q];
            let (ux, uy, ul) = (state.dx[at], state.dy[at], state.lap[at]);
            let px = shape.table(q, TAB_DX);
            let py = shape.table(q, TAB_DY);
            let pxx = shape.table(q, TAB_DXX);
            let pyy = shape.table(q, TAB_DYY);
            for j in 0..21 {
                let lj = pxx[j] + pyy[j];
                // d/du_j of (Δu u_y, Δu u_x) at the quadrature point.
                let ax = lj * uy + ul * py[j];
                let ay = lj * ux + ul * px[j];
                for i in 0..21 {
                    loc[i * 21 + j] += w * (ax * px[i] - ay * py[i]);
                }
            }
        }
        for i in 0..21 {
            for j in 0..21 {
                jac.add(dofs[i], dofs[j], loc[i * 21 + j]);
            }
        }
    }
}

/// The advected-vorticity trilinear form b(ξ; ψ, χ).
pub fn trilinear_b(space: &ArgyrisSpace, xi: &[f64], psi: &[f64], chi: &[f64]) -> f64 {
    let nq = space.quad.len();
    let mut total = 0.0;
    for c in 0..space.mesh.n_cells() {
        let shape = &space.shapes[space.cell_shape[c]];
        let area = space.cell_area(c);
        let lx = space.gather(c, xi);
        let lp = space.gather(c, psi);
        let lc = space.gather(c, chi);
        for q in 0..nq {
            let px = shape.table(q, TAB_DX);
            let py = shape.table(q, TAB_DY);
            let pxx = shape.table(q, TAB_DXX);
            let pyy = shape.table(q, TAB_DYY);
            let (mut xl, mut px_psi, mut py_psi, mut px_chi, mut py_chi) =
                (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for k in 0..21 {
                xl += lx[k] * (pxx[k] + pyy[k]);
                px_psi += lp[k] * px[k];
                py_psi += lp[k] * py[k];
                px_chi += lc[k] * px[k];
                py_chi += lc[k] * py[k];
            }
            total += area * space.quad.weights[q] * xl * (py_psi * px_chi - px_psi * py_chi);
        }
    }
    total
}

/// The integrated-by-parts companion form
/// b*(ξ, ψ, φ) = ∫ (ξ_y ψ_xy − ξ_x ψ_yy) φ_y − (ξ_x ψ_xy − ξ_y ψ_xx) φ_x,
/// which trades the Laplacian for first derivatives on its leading argument.
/// On the constrained space the exchange rule
/// b(ξ; ψ, χ) = b*(χ, ψ, ξ) − b*(ψ, χ, ξ) holds exactly: the by-parts step
/// drops no boundary terms under clamping, and the quadrature integrates the
/// degree-11 integrands without error.
pub fn trilinear_bstar(space: &ArgyrisSpace, xi: &[f64], psi: &[f64], phi: &[f64]) -> f64 {
    let nq = space.quad.len();
    let mut total = 0.0;
    for c in 0..space.mesh.n_cells() {
        let shape = &space.shapes[space.cell_shape[c]];
        let area = space.cell_area(c);
        let lx = space.gather(c, xi);
        let lp = space.gather(c, psi);
        let lf = space.gather(c, phi);
        for q in 0..nq {
            let px = shape.table(q, TAB_DX);
            let py = shape.table(q, TAB_DY);
            let pxx = shape.table(q, TAB_DXX);
            let pxy = shape.table(q, TAB_DXY);
            let pyy = shape.table(q, TAB_DYY);
            let (mut xix, mut xiy) = (0.0f64, 0.0f64);
            let (mut pxx_s, mut pxy_s, mut pyy_s) = (0.0f64, 0.0f64, 0.0f64);
            let (mut fx, mut fy) = (0.0f64, 0.0f64);
            for k in 0..21 {
                xix += lx[k] * px[k];
                xiy += lx[k] * py[k];
                pxx_s += lp[k] * pxx[k];
                pxy_s += lp[k] * pxy[k];
                pyy_s += lp[k] * pyy[k];
                fx += lf[k] * px[k];
                fy += lf[k] * py[k];
            }
            let w = area * space.quad.weights[q];
            total += w * ((xiy * pxy_s - xix * pyy_s) * fy - (xix * pxy_s - xiy * pxx_s) * fx);
        }
    }
    total
}

/// ∫ u_h² for a coefficient vector.
pub fn l2_norm_sq(space: &ArgyrisSpace, u: &[f64]) -> f64 {
    let nq = space.quad.len();
    let mut total = 0.0;
    for c in 0..space.mesh.n_cells() {
        let shape = &space.shapes[space.cell_shape[c]];
        let area = space.cell_area(c);
        let local = space.gather(c, u);
        for q in 0..nq {
            let val = shape.table(q, TAB_VAL);
            let mut s = 0.0;
            for k in 0..21 {
                s += local[k] * val[k];
            }
            total += area * space.quad.weights[q] * s * s;
        }
    }
    total
}

/// ∫ f² for a pointwise field, with the space's rule; a measurement helper
/// for forcing magnitudes, not a spectrally exact integral.
pub fn integrate_field_sq(space: &ArgyrisSpace, f: &dyn Fn(f64, f64) -> f64) -> f64 {
    let nq = space.quad.len();
    let mut total = 0.0;
    for c in 0..space.mesh.n_cells() {
        let area = space.cell_area(c);
        for q in 0..nq {
            let p = space.quad_point(c, q);
            let v = f(p[0], p[1]);
            total += area * space.quad.weights[q] * v * v;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::argyris::{build_space, ArgyrisSpace, CoefficientVector, ScalarField, MONOMIALS};
    use crate::mesh::generate_rectangle_mesh;
    use crate::quadrature::{gauss_legendre, triangle_rule};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    struct Quintic {
        coeffs: Vec<(usize, usize, f64)>,
    }

    impl Quintic {
        fn random(rng: &mut impl Rng) -> Self {
            Quintic {
                coeffs: MONOMIALS
                    .iter()
                    .map(|&(a, b)| (a, b, rng.gen_range(-1.0..1.0)))
                    .collect(),
            }
        }
        fn laplacian(&self, x: f64, y: f64) -> f64 {
            let h = self.hessian(x, y);
            h[0] + h[2]
        }
    }

    impl ScalarField for Quintic {
        fn value(&self, x: f64, y: f64) -> f64 {
            self.coeffs.iter().map(|&(a, b, c)| c * x.powi(a as i32) * y.powi(b as i32)).sum()
        }
        fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
            let mut g = [0.0; 2];
            for &(a, b, c) in &self.coeffs {
                if a > 0 {
                    g[0] += c * a as f64 * x.powi(a as i32 - 1) * y.powi(b as i32);
                }
                if b > 0 {
                    g[1] += c * b as f64 * x.powi(a as i32) * y.powi(b as i32 - 1);
                }
            }
            g
        }
        fn hessian(&self, x: f64, y: f64) -> [f64; 3] {
            let mut h = [0.0; 3];
            for &(a, b, c) in &self.coeffs {
                let (af, bf) = (a as f64, b as f64);
                if a > 1 {
                    h[0] += c * af * (af - 1.0) * x.powi(a as i32 - 2) * y.powi(b as i32);
                }
                if a > 0 && b > 0 {
                    h[1] += c * af * bf * x.powi(a as i32 - 1) * y.powi(b as i32 - 1);
                }
                if b > 1 {
                    h[2] += c * bf * (bf - 1.0) * x.powi(a as i32) * y.powi(b as i32 - 2);
                }
            }
            h
        }
    }

    fn unit_space(n: usize) -> ArgyrisSpace {
        build_space(generate_rectangle_mesh(1.0, 1.0, n, n).unwrap()).unwrap()
    }

    /// Tensor Gauss quadrature over the rectangle, independent of the
    /// triangle rule and of the element tables.
    fn tensor_integral(
        width: f64,
        height: f64,
        n: usize,
        f: &dyn Fn(f64, f64) -> f64,
    ) -> f64 {
        let (nodes, weights) = gauss_legendre(n);
        let mut total = 0.0;
        for (xi, wi) in nodes.iter().zip(&weights) {
            let x = 0.5 * width * (xi + 1.0);
            for (yj, wj) in nodes.iter().zip(&weights) {
                let y = 0.5 * height * (yj + 1.0);
                total += wi * wj * f(x, y);
            }
        }
        total * 0.25 * width * height
    }

    fn random_constrained(space: &ArgyrisSpace, rng: &mut impl Rng) -> Vec<f64> {
        let mut v = CoefficientVector {
            values: (0..space.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            time: 0.0,
        };
        space.apply_constraints(&mut v);
        v.values
    }

    #[test]
    fn gradient_and_biharmonic_matrices_are_symmetric() {
        let space = unit_space(3);
        let forms = assemble_linear_forms(&space);
        let scale_g = forms.grad.max_abs();
        let scale_b = forms.lap.max_abs();
        assert!(forms.grad.max_asymmetry() <= 1e-12 * scale_g);
        assert!(forms.lap.max_asymmetry() <= 1e-12 * scale_b);
        let s = assemble_h2_form(&space);
        assert!(s.max_asymmetry() <= 1e-12 * s.max_abs());
    }

    #[test]
    fn gradient_and_biharmonic_forms_are_positive_on_the_constrained_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let space = unit_space(3);
        let forms = assemble_linear_forms(&space);
        for _ in 0..20 {
            let u = random_constrained(&space, &mut rng);
            let norm: f64 = u.iter().map(|v| v * v).sum();
            if norm == 0.0 {
                continue;
            }
            assert!(forms.grad.bilinear(&u, &u) > 0.0);
            assert!(forms.lap.bilinear(&u, &u) > 0.0);
        }
    }

    #[test]
    fn advection_matrix_is_skew_on_the_constrained_space() {
        let space = unit_space(3);
        let forms = assemble_linear_forms(&space);
        let free = forms.dx.restrict(&space.free_dofs, &space.full_to_free);
        // Integration by parts leaves no boundary term once the trace and
        // normal slope vanish, so the pairing must be exactly antisymmetric.
        assert!(free.max_skew_defect() <= 1e-10, "defect {:.3e}", free.max_skew_defect());
        // The unconstrained matrix is NOT skew; the boundary terms are real.
        assert!(forms.dx.max_skew_defect() > 1e-6);
    }

    #[test]
    fn quadratic_forms_match_tensor_quadrature_oracle() {
        // Interpolate a random quintic (reproduced exactly by the space) and
        // compare every assembled quadratic form against a 40-point tensor
        // Gauss integral of the analytic derivatives.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let space = unit_space(3);
        let forms = assemble_linear_forms(&space);
        let s = assemble_h2_form(&space);
        let p = Quintic::random(&mut rng);
        let u = space.interpolate(&p).values;

        let grad_oracle = tensor_integral(1.0, 1.0, 40, &|x, y| {
            let g = p.gradient(x, y);
            g[0] * g[0] + g[1] * g[1]
        });
        let lap_oracle = tensor_integral(1.0, 1.0, 40, &|x, y| p.laplacian(x, y).powi(2));
        let h2_oracle = tensor_integral(1.0, 1.0, 40, &|x, y| {
            let h = p.hessian(x, y);
            h[0] * h[0] + 2.0 * h[1] * h[1] + h[2] * h[2]
        });
        let l2_oracle = tensor_integral(1.0, 1.0, 40, &|x, y| p.value(x, y).powi(2));
        let dx_oracle = tensor_integral(1.0, 1.0, 40, &|x, y| p.gradient(x, y)[0] * p.value(x, y));

        let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1e-30);
        assert!(rel(forms.grad.bilinear(&u, &u), grad_oracle) < 1e-9);
        assert!(rel(forms.lap.bilinear(&u, &u), lap_oracle) < 1e-9);
        assert!(rel(s.bilinear(&u, &u), h2_oracle) < 1e-9);
        assert!(rel(l2_norm_sq(&space, &u), l2_oracle) < 1e-9);
        assert!(rel(forms.dx.bilinear(&u, &u), dx_oracle) < 1e-9);
    }

    #[test]
    fn laplacian_energy_equals_full_second_derivative_energy_when_clamped() {
        // |v|_{H2}² = ‖Δv‖² on the constrained space: the Hessian
        // determinant integrates to a pure boundary term that the clamping
        // kills. This is what makes ‖Δ·‖ a true norm for the method.
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let space = unit_space(3);
        let forms = assemble_linear_forms(&space);
        let s = assemble_h2_form(&space);
        for _ in 0..10 {
            let u = random_constrained(&space, &mut rng);
            let a = forms.lap.bilinear(&u, &u);
            let b = s.bilinear(&u, &u);
            assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()), "{a} vs {b}");
        }
        // And it genuinely needs the constraints: unconstrained vectors
        // violate the identity.
        let v: Vec<f64> = (0..space.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = forms.lap.bilinear(&v, &v);
        let b = s.bilinear(&v, &v);
        assert!((a - b).abs() > 1e-3 * a.abs().max(b.abs()));
    }

    #[test]
    fn load_vector_tested_against_constant_and_finer_rule() {
        let space = build_space(generate_rectangle_mesh(3.0, 1.0, 9, 3).unwrap()).unwrap();
        // Partition of unity: pairing f = 1 against the interpolant of 1
        // integrates to the domain area.
        struct One;
        impl ScalarField for One {
            fn value(&self, _: f64, _: f64) -> f64 {
                1.0
            }
            fn gradient(&self, _: f64, _: f64) -> [f64; 2] {
                [0.0, 0.0]
            }
            fn hessian(&self, _: f64, _: f64) -> [f64; 3] {
                [0.0, 0.0, 0.0]
            }
        }
        let ones = space.interpolate(&One).values;
        let f = |x: f64, y: f64| (3.0 * x).sin() * (2.0 * y).cos() + 0.25 * x;
        let load = assemble_load(&space, &f);
        let load_const = assemble_load(&space, &|_, _| 1.0);
        let area: f64 = ones.iter().zip(&load_const).map(|(a, b)| a * b).sum();
        assert!((area - 3.0).abs() < 1e-9, "area {area}");

        // A degree-20 rule on the same smooth integrand must agree to
        // round-off on this mesh, confirming the default rule's degree is
        // high enough for the pairings the solver feeds it.
        let fine = triangle_rule(20);
        let load20 = assemble_load_with_rule(&space, &fine, &f);
        let scale = load.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in load.iter().zip(&load20) {
            assert!((a - b).abs() <= 1e-10 * scale.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn trilinear_form_with_repeated_later_arguments_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let space = unit_space(2);
        for _ in 0..100 {
            let xi = random_constrained(&space, &mut rng);
            let psi = random_constrained(&space, &mut rng);
            // The integrand pairs the rotated gradient of ψ with the gradient
            // of the last argument, so repeating ψ zeroes it pointwise. This
            // is the discrete face of energy conservation by advection.
            let b1 = trilinear_b(&space, &xi, &psi, &psi);
            let b2 = trilinear_b(&space, &psi, &psi, &psi);
            let scale = 1.0f64
                .max(l2_norm_sq(&space, &xi))
                .max(l2_norm_sq(&space, &psi));
            assert!(b1.abs() <= 1e-12 * scale, "b(xi; psi, psi) = {b1:e}");
            assert!(b2.abs() <= 1e-12 * scale, "b(psi; psi, psi) = {b2:e}");
        }
    }

    #[test]
    fn trilinear_exchange_identity_holds_discretely() {
        // b(ξ; ψ, χ) = b*(χ, ψ, ξ) − b*(ψ, χ, ξ) for constrained fields:
        // moving the Laplacian off ξ by parts drops no boundary terms and
        // the quadrature integrates the degree-11 integrands exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let space = unit_space(2);
        for trial in 0..20 {
            let xi = random_constrained(&space, &mut rng);
            let psi = random_constrained(&space, &mut rng);
            let chi = random_constrained(&space, &mut rng);
            let lhs = trilinear_b(&space, &xi, &psi, &chi);
            let rhs = trilinear_bstar(&space, &chi, &psi, &xi) - trilinear_bstar(&space, &psi, &chi, &xi);
            assert!(
                (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0),
                "trial {trial}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn nonlinear_term_agrees_with_trilinear_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let space = unit_space(2);
        let u = random_constrained(&space, &mut rng);
        let state = compute_state(&space, &u);
        let mut n_of_u = vec![0.0; space.n_dofs];
        add_nonlinear_residual(&space, &state, &mut n_of_u);
        for _ in 0..5 {
            let w = random_constrained(&space, &mut rng);
            let dot: f64 = w.iter().zip(&n_of_u).map(|(a, b)| a * b).sum();
            let want = trilinear_b(&space, &u, &u, &w);
            assert!((dot - want).abs() <= 1e-11 * want.abs().max(1.0), "{dot} vs {want}");
        }
    }

    #[test]
    fn jacobian_assembly_matches_matrix_free_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let space = unit_space(2);
        let u = random_constrained(&space, &mut rng);
        let state = compute_state(&space, &u);
        let mut jac = full_pattern(&space);
        assemble_nonlinear_jacobian(&space, &state, &mut jac);
        for _ in 0..5 {
            let v = random_constrained(&space, &mut rng);
            let assembled = jac.matvec_alloc(&v);
            let mut free = vec![0.0; space.n_dofs];
            add_jacobian_matvec(&space, &state, &v, &mut free);
            let scale = assembled.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for (a, b) in assembled.iter().zip(&free) {
                assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences_of_the_nonlinear_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let space = unit_space(2);
        let u = random_constrained(&space, &mut rng);
        let eps = 1e-6;
        for _ in 0..3 {
            let v = random_constrained(&space, &mut rng);
            let mut up = u.clone();
            let mut dn = u.clone();
            for i in 0..u.len() {
                up[i] += eps * v[i];
                dn[i] -= eps * v[i];
            }
            let mut n_up = vec![0.0; space.n_dofs];
            let mut n_dn = vec![0.0; space.n_dofs];
            add_nonlinear_residual(&space, &compute_state(&space, &up), &mut n_up);
            add_nonlinear_residual(&space, &compute_state(&space, &dn), &mut n_dn);
            let mut jv = vec![0.0; space.n_dofs];
            add_jacobian_matvec(&space, &compute_state(&space, &u), &v, &mut jv);
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for i in 0..u.len() {
                let fd = (n_up[i] - n_dn[i]) / (2.0 * eps);
                num += (fd - jv[i]).powi(2);
                den += jv[i].powi(2);
            }
            let rel = (num / den.max(1e-30)).sqrt();
            assert!(rel < 1e-6, "relative Jacobian error {rel:e}");
        }
    }

    #[test]
    fn diagonal_entries_scale_with_the_expected_mesh_powers() {
        // Entry for the value DOF at the domain center: the biharmonic
        // pairing grows like h⁻², the gradient pairing stays O(1).
        let value_diag = |n: usize| -> (f64, f64) {
            let space = unit_space(n);
            let forms = assemble_linear_forms(&space);
            let center = space
                .mesh
                .vertices
                .iter()
                .position(|p| (p.x - 0.5).abs() < 1e-12 && (p.y - 0.5).abs() < 1e-12)
                .expect("center vertex");
            let dof = 6 * center;
            (forms.lap.get(dof, dof), forms.grad.get(dof, dof))
        };
        let (b4, g4) = value_diag(4);
        let (b8, g8) = value_diag(8);
        let ratio_b = b8 / b4;
        let ratio_g = g8 / g4;
        assert!((ratio_b - 4.0).abs() < 0.8, "biharmonic diagonal ratio {ratio_b}");
        assert!((ratio_g - 1.0).abs() < 0.2, "gradient diagonal ratio {ratio_g}");
    }
}
