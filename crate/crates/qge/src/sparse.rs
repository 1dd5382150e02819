//! Compressed sparse row matrices sized for C1 element assembly, plus the
//! band-reduction ordering used by the direct solver.

use crate::argyris::ArgyrisSpace;
use crate::linalg::BandedMatrix;

/// Square CSR matrix with a fixed symbolic pattern.
#[derive(Clone)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build the symbolic pattern from per-element coupling lists: every pair
    /// of degrees of freedom that shares an element gets an entry.
    pub fn from_element_dofs(n: usize, elements: impl Iterator<Item = [usize; 21]> + Clone) -> Self {
        let mut cols_per_row: Vec<Vec<usize>> = vec![Vec::new(); n];
        for dofs in elements {
            for &i in &dofs {
                cols_per_row[i].extend_from_slice(&dofs);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for cols in cols_per_row.iter_mut() {
            cols.sort_unstable();
            cols.dedup();
            col_idx.extend_from_slice(cols);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn zero_values(&mut self) {
        for v in self.values.iter_mut() {
            *v = 0.0;
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        let row = &self.col_idx[lo..hi];
        match row.binary_search(&j) {
            Ok(k) => lo + k,
            Err(_) => panic!("entry ({i}, {j}) is outside the symbolic pattern"),
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.values[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// Quadratic form x' A y.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * y[self.col_idx[k]];
            }
            total += x[i] * s;
        }
        total
    }

    /// Restriction to a subset of indices: keep rows and columns whose
    /// position in `keep_map` is not `usize::MAX`, renumbering by that map.
    /// `keep` lists the original index of every kept slot, in order.
    pub fn restrict(&self, keep: &[usize], keep_map: &[usize]) -> CsrMatrix {
        let m = keep.len();
        let mut row_ptr = Vec::with_capacity(m + 1);
        row_ptr.push(0usize);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &i in keep {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = keep_map[self.col_idx[k]];
                if j != usize::MAX {
                    col_idx.push(j);
                    values.push(self.values[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n: m, row_ptr, col_idx, values }
    }

    /// Largest absolute asymmetry max |A_ij - A_ji| over the pattern.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if j > i {
                    worst = worst.max((self.values[k] - self.get(j, i)).abs());
                }
            }
        }
        worst
    }

    /// Largest absolute skew defect max |A_ij + A_ji| over the pattern.
    pub fn max_skew_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if j >= i {
                    worst = worst.max((self.values[k] + self.get(j, i)).abs());
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Linear combination with an identically-patterned matrix.
    pub fn axpy_same_pattern(&mut self, alpha: f64, other: &CsrMatrix) {
        debug_assert_eq!(self.row_ptr, other.row_ptr);
        debug_assert_eq!(self.col_idx, other.col_idx);
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += alpha * o;
        }
    }

    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= alpha;
        }
        out
    }

    /// Spread the matrix into banded storage under a symmetric permutation:
    /// entry (i, j) lands at (perm[i], perm[j]). The bandwidth is taken from
    /// the permuted pattern.
    pub fn to_banded(&self, perm: &[usize]) -> BandedMatrix {
        debug_assert_eq!(perm.len(), self.n);
        let mut bw = 0usize;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                bw = bw.max(perm[i].abs_diff(perm[j]));
            }
        }
        let mut band = BandedMatrix::zeros(self.n, bw, bw);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                band.set(perm[i], perm[self.col_idx[k]], self.values[k]);
            }
        }
        band
    }
}

/// Permutation that renumbers the free degrees of freedom by sweeping the
/// domain in x, so that element coupling only spans adjacent coordinate
/// slabs and the banded factorization stays narrow. Returns `perm` with
/// `perm[free_slot] = new_position`.
pub fn bandwidth_ordering(space: &ArgyrisSpace) -> Vec<usize> {
    let mesh = &space.mesh;
    let nv = mesh.n_vertices();
    // Sort key per free DOF: the x coordinate of its owning entity, then y,
    // then the full index for a stable tie-break.
    let mut keyed: Vec<(f64, f64, usize, usize)> = Vec::with_capacity(space.n_free());
    for (slot, &dof) in space.free_dofs.iter().enumerate() {
        let (x, y) = if dof < 6 * nv {
            let p = mesh.vertices[dof / 6];
            (p.x, p.y)
        } else {
            let mid = mesh.edge_midpoint(dof - 6 * nv);
            (mid.x, mid.y)
        };
        keyed.push((x, y, dof, slot));
    }
    keyed.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
            .then(a.2.cmp(&b.2))
    });
    let mut perm = vec![0usize; space.n_free()];
    for (pos, &(_, _, _, slot)) in keyed.iter().enumerate() {
        perm[slot] = pos;
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::argyris::build_space;
    use crate::mesh::generate_rectangle_mesh;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn toy_pattern() -> CsrMatrix {
        // Two overlapping fake elements on 25 dofs.
        let a: [usize; 21] = core::array::from_fn(|i| i);
        let b: [usize; 21] = core::array::from_fn(|i| i + 4);
        CsrMatrix::from_element_dofs(25, [a, b].into_iter())
    }

    #[test]
    fn pattern_rows_are_sorted_and_deduplicated() {
        let m = toy_pattern();
        assert_eq!(m.n, 25);
        for i in 0..m.n {
            let row = &m.col_idx[m.row_ptr[i]..m.row_ptr[i + 1]];
            assert!(row.windows(2).all(|w| w[0] < w[1]), "row {i} not strictly sorted");
        }
        // Dof 0 couples only to the first element.
        assert_eq!(m.row_ptr[1] - m.row_ptr[0], 21);
        // Dof 10 sits in both elements: union is 0..25.
        assert_eq!(m.row_ptr[11] - m.row_ptr[10], 25);
    }

    #[test]
    fn add_and_matvec_round_trip() {
        let mut m = toy_pattern();
        m.add(0, 3, 2.0);
        m.add(0, 3, 0.5);
        m.add(10, 24, -1.0);
        assert_eq!(m.get(0, 3), 2.5);
        assert_eq!(m.get(3, 0), 0.0);
        let mut x = vec![0.0; 25];
        x[3] = 2.0;
        x[24] = 3.0;
        let y = m.matvec_alloc(&x);
        assert_eq!(y[0], 5.0);
        assert_eq!(y[10], -3.0);
    }

    #[test]
    #[should_panic(expected = "outside the symbolic pattern")]
    fn add_outside_pattern_panics() {
        let mut m = toy_pattern();
        m.add(0, 24, 1.0);
    }

    #[test]
    fn restriction_drops_rows_and_columns() {
        let mut m = toy_pattern();
        for i in 0..m.n {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                let j = m.col_idx[k];
                m.values[k] = (i * 100 + j) as f64;
            }
        }
        let keep: Vec<usize> = (0..25).filter(|i| i % 2 == 0).collect();
        let mut keep_map = vec![usize::MAX; 25];
        for (slot, &i) in keep.iter().enumerate() {
            keep_map[i] = slot;
        }
        let r = m.restrict(&keep, &keep_map);
        assert_eq!(r.n, 13);
        assert_eq!(r.get(0, 1), m.get(0, 2));
        assert_eq!(r.get(5, 6), m.get(10, 12));
        for i in 0..r.n {
            let row = &r.col_idx[r.row_ptr[i]..r.row_ptr[i + 1]];
            assert!(row.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn banded_conversion_matches_csr_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = toy_pattern();
        for v in m.values.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for i in 0..m.n {
            m.add(i, i, 6.0);
        }
        let perm: Vec<usize> = (0..m.n).collect();
        let band = m.to_banded(&perm);
        let x_true: Vec<f64> = (0..m.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = m.matvec_alloc(&x_true);
        let x = band.factorize().unwrap().solve(&b);
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-9);
        }
    }

    #[test]
    fn banded_conversion_respects_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = toy_pattern();
        for v in m.values.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for i in 0..m.n {
            m.add(i, i, 6.0);
        }
        // Reversal permutation: solve P A P' (P x) = P b.
        let perm: Vec<usize> = (0..m.n).rev().collect();
        let band = m.to_banded(&perm);
        let x_true: Vec<f64> = (0..m.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = m.matvec_alloc(&x_true);
        let mut pb = vec![0.0; m.n];
        for i in 0..m.n {
            pb[perm[i]] = b[i];
        }
        let px = band.factorize().unwrap().solve(&pb);
        for i in 0..m.n {
            assert!((px[perm[i]] - x_true[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn sweep_ordering_shrinks_the_band() {
        let mesh = generate_rectangle_mesh(1.0, 1.0, 8, 8).unwrap();
        let space = build_space(mesh).unwrap();
        let full = CsrMatrix::from_element_dofs(space.n_dofs, space.cell_dofs.iter().copied());
        let free = full.restrict(&space.free_dofs, &space.full_to_free);

        let natural: Vec<usize> = (0..free.n).collect();
        let bw = |perm: &[usize]| -> usize {
            let mut w = 0;
            for i in 0..free.n {
                for k in free.row_ptr[i]..free.row_ptr[i + 1] {
                    w = w.max(perm[i].abs_diff(perm[free.col_idx[k]]));
                }
            }
            w
        };
        let ordered = bandwidth_ordering(&space);
        assert!(ordered.len() == free.n);
        let mut seen = vec![false; free.n];
        for &p in &ordered {
            assert!(!seen[p], "ordering is not a permutation");
            seen[p] = true;
        }
        let bw_nat = bw(&natural);
        let bw_ord = bw(&ordered);
        assert!(
            bw_ord * 2 < bw_nat,
            "sweep ordering should at least halve the bandwidth: {bw_ord} vs {bw_nat}"
        );
        // Two grid columns of entities bound the coupling span.
        assert!(bw_ord < 180, "bandwidth {bw_ord} too wide for an 8x8 grid");
    }
}
