//! Small dense and banded direct solvers plus vector helpers.
//!
//! The dense LU covers the 21x21 element basis systems; the banded LU covers
//! the time-step operator after the unknowns are ordered by a coordinate
//! sweep, which keeps the bandwidth proportional to one grid column.

use crate::error::QgeError;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug)]
pub struct DenseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            y[i] = dot(&self.data[i * self.n_cols..(i + 1) * self.n_cols], x);
        }
        y
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| self.data[i * self.n_cols..(i + 1) * self.n_cols].iter().map(|v| v.abs()).sum())
            .fold(0.0, f64::max)
    }

    /// LU factorization with partial pivoting. Consumes the matrix values.
    pub fn factorize(mut self) -> Result<DenseLu, QgeError> {
        assert_eq!(self.n_rows, self.n_cols, "LU requires a square matrix");
        let n = self.n_rows;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let mut p = k;
            let mut max = self.get(k, k).abs();
            for i in k + 1..n {
                let v = self.get(i, k).abs();
                if v > max {
                    max = v;
                    p = i;
                }
            }
            if max == 0.0 {
                return Err(QgeError::LinearSolve(format!("zero pivot at column {k}")));
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    let t = self.get(k, j);
                    self.set(k, j, self.get(p, j));
                    self.set(p, j, t);
                }
            }
            let pivot = self.get(k, k);
            for i in k + 1..n {
                let m = self.get(i, k) / pivot;
                self.set(i, k, m);
                if m != 0.0 {
                    for j in k + 1..n {
                        let v = self.get(i, j) - m * self.get(k, j);
                        self.set(i, j, v);
                    }
                }
            }
        }
        Ok(DenseLu { lu: self, piv })
    }
}

/// Dense LU factors with the pivot sequence.
pub struct DenseLu {
    lu: DenseMatrix,
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn n(&self) -> usize {
        self.lu.n_rows
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        debug_assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        // The factorization swaps whole rows, multipliers included, so the
        // permutation must be applied to the right side in full before any
        // elimination; interleaving the two is only valid when the L part is
        // left unswapped, as in the banded factorization below.
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
        }
        for k in 0..n {
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..n {
                    x[i] -= self.lu.get(i, k) * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..n {
                s -= self.lu.get(k, j) * x[j];
            }
            x[k] = s / self.lu.get(k, k);
        }
        x
    }
}

/// Band matrix in LAPACK-style storage: `kl` subdiagonals, `ku` superdiagonals,
/// with `kl` extra rows of headroom for pivoting fill. Entry (i, j) of the
/// logical matrix lives at `data[(kl + ku + i - j) + j * ld]`.
pub struct BandedMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    ld: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        BandedMatrix { n, kl, ku, ld, data: vec![0.0; ld * n] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && i + self.ku + self.kl >= j, "entry outside band");
        self.kl + self.ku + i - j + j * self.ld
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let at = self.idx(i, j);
        self.data[at] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let at = self.idx(i, j);
        self.data[at] = v;
    }

    /// In-place banded LU with partial pivoting (unblocked).
    pub fn factorize(mut self) -> Result<BandedLu, QgeError> {
        let (n, kl, ku, ld) = (self.n, self.kl, self.ku, self.ld);
        let kv = kl + ku; // row offset of the diagonal in storage
        let mut piv = vec![0usize; n];
        let mut ju = 0usize; // last column touched by the current elimination
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut max = self.data[kv + j * ld].abs();
            for i in 1..=km {
                let v = self.data[kv + i + j * ld].abs();
                if v > max {
                    max = v;
                    jp = i;
                }
            }
            piv[j] = j + jp;
            if max == 0.0 {
                return Err(QgeError::LinearSolve(format!("banded LU: zero pivot at column {j}")));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = kv + j - c + c * ld;
                    let b = kv + j + jp - c + c * ld;
                    self.data.swap(a, b);
                }
            }
            if km > 0 {
                let pivot = self.data[kv + j * ld];
                for i in 1..=km {
                    self.data[kv + i + j * ld] /= pivot;
                }
                for c in j + 1..=ju {
                    let f = self.data[kv + j - c + c * ld];
                    if f != 0.0 {
                        for i in 1..=km {
                            let m = self.data[kv + i + j * ld];
                            self.data[kv + j + i - c + c * ld] -= f * m;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku, ld, data: self.data, piv })
    }
}

/// Factored band matrix; solves overwrite a scratch copy of the right side.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, ku, ld) = (self.n, self.kl, self.ku, self.ld);
        debug_assert_eq!(b.len(), n);
        let kv = kl + ku;
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                let km = kl.min(n - 1 - j);
                for i in 1..=km {
                    b[j + i] -= self.data[kv + i + j * ld] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let xj = b[j] / self.data[kv + j * ld];
            b[j] = xj;
            if xj != 0.0 {
                let top = j.saturating_sub(kv);
                for i in top..j {
                    b[i] -= self.data[kv + i - j + j * ld] * xj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}


/// Left-preconditioned GMRES without restarts, for inner solves whose
/// operator is a small perturbation of the preconditioner. Returns the
/// solution and the iteration count, or an error if `max_iters` Krylov
/// vectors cannot reach `rtol` relative to the preconditioned right side.
pub fn gmres(
    apply: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    precondition: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rtol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize), QgeError> {
    let n = b.len();
    let z = precondition(b);
    let beta = norm2(&z);
    if beta == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let m = max_iters;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    basis.push(z.iter().map(|v| v / beta).collect());
    // Column-major Hessenberg with the Givens rotations folded in as we go.
    let mut h = vec![0.0f64; (m + 1) * m];
    let mut cs = vec![0.0f64; m];
    let mut sn = vec![0.0f64; m];
    let mut g = vec![0.0f64; m + 1];
    g[0] = beta;

    for j in 0..m {
        let mut w = precondition(&apply(&basis[j]));
        for i in 0..=j {
            let hij = dot(&w, &basis[i]);
            h[i * m + j] = hij;
            axpy(-hij, &basis[i], &mut w);
        }
        let hnext = norm2(&w);
        for i in 0..j {
            let a = h[i * m + j];
            let b2 = h[(i + 1) * m + j];
            h[i * m + j] = cs[i] * a + sn[i] * b2;
            h[(i + 1) * m + j] = -sn[i] * a + cs[i] * b2;
        }
        let a = h[j * m + j];
        let r = (a * a + hnext * hnext).sqrt();
        if r == 0.0 {
            return Err(QgeError::LinearSolve("gmres hit a zero Hessenberg column".into()));
        }
        cs[j] = a / r;
        sn[j] = hnext / r;
        h[j * m + j] = r;
        g[j + 1] = -sn[j] * g[j];
        g[j] *= cs[j];

        let res = g[j + 1].abs();
        let done = res <= rtol * beta || hnext == 0.0;
        if !done {
            basis.push(w.iter().map(|v| v / hnext).collect());
            continue;
        }
        // Back-substitute the (j+1)-square triangular system and expand.
        let k = j + 1;
        let mut y = vec![0.0f64; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for l in i + 1..k {
                s -= h[i * m + l] * y[l];
            }
            y[i] = s / h[i * m + i];
        }
        let mut x = vec![0.0f64; n];
        for (yi, v) in y.iter().zip(&basis) {
            axpy(*yi, v, &mut x);
        }
        return Ok((x, k));
    }
    Err(QgeError::LinearSolve(format!(
        "gmres stalled: relative residual {:.3e} after {m} iterations",
        g[m].abs() / beta
    )))
}

#[cfg(test)]
mod gmres_tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gmres_solves_a_perturbed_identity_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 60;
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let v = if i == j { 2.0 } else { 0.02 * rng.gen_range(-1.0..1.0) };
                a.set(i, j, v);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.matvec(&x_true);
        // Preconditioner: exact diagonal inverse. The off-diagonal part is
        // a 1% perturbation, so convergence takes only a few iterations.
        let (x, iters) = gmres(
            &mut |v: &[f64]| a.matvec(v),
            &|v: &[f64]| v.iter().map(|t| t / 2.0).collect(),
            &b,
            1e-12,
            50,
        )
        .unwrap();
        assert!(iters < 12, "took {iters} iterations");
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-9);
        }
    }

    #[test]
    fn gmres_with_exact_preconditioner_takes_one_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 25;
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        for i in 0..n {
            a.add(i, i, 4.0);
        }
        let lu = a.clone().factorize().unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, iters) = gmres(
            &mut |v: &[f64]| a.matvec(v),
            &|v: &[f64]| lu.solve(v),
            &b,
            1e-12,
            50,
        )
        .unwrap();
        assert_eq!(iters, 1);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn gmres_reports_stall_when_capped_too_low() {
        // An operator far from the preconditioner cannot converge in two
        // Krylov directions; the caller needs the error to trigger fallback.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = 40;
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        for i in 0..n {
            a.add(i, i, 1.5);
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = gmres(&mut |v: &[f64]| a.matvec(v), &|v: &[f64]| v.to_vec(), &b, 1e-12, 2);
        assert!(out.is_err());
    }
}
