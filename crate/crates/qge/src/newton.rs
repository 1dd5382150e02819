//! Newton's method with an exact Jacobian, shared by every implicit step.

use crate::error::QgeError;
use crate::linalg::norm2;

/// A square nonlinear system r(x) = 0 together with a way to solve its
/// linearization. Implementations may cache state between the two calls.
pub trait NewtonSystem {
    fn dim(&self) -> usize;
    fn residual(&mut self, x: &[f64], out: &mut [f64]);
    /// Solve J(x) d = rhs with the exact Jacobian at x.
    fn solve_linearized(&mut self, x: &[f64], rhs: &[f64]) -> Result<Vec<f64>, QgeError>;
}

#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Euclidean norm of every applied update, in order.
    pub update_norms: Vec<f64>,
    pub final_residual_norm: f64,
}

impl NewtonReport {
    pub fn last_update(&self) -> f64 {
        self.update_norms.last().copied().unwrap_or(0.0)
    }
}

/// Drive x to a root. Convergence is declared when the applied update's
/// norm drops to `tol`, or when the residual reaches a round-off floor
/// relative to its starting value; the floor clause is what lets an exactly
/// linear system finish in a single iteration regardless of `tol`.
pub fn newton_solve(
    sys: &mut dyn NewtonSystem,
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
) -> Result<NewtonReport, QgeError> {
    let n = sys.dim();
    debug_assert_eq!(x.len(), n);
    let mut r = vec![0.0; n];
    sys.residual(x, &mut r);
    let mut r_norm = norm2(&r);
    let floor = 1e-14 * r_norm.max(1.0);
    let mut update_norms = Vec::new();

    if r_norm <= floor {
        return Ok(NewtonReport { iterations: 0, update_norms, final_residual_norm: r_norm });
    }
    for iter in 1..=max_iters {
        for v in r.iter_mut() {
            *v = -*v;
        }
        let delta = sys.solve_linearized(x, &r)?;
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi += di;
        }
        let step = norm2(&delta);
        update_norms.push(step);
        sys.residual(x, &mut r);
        r_norm = norm2(&r);
        if step <= tol || r_norm <= floor {
            return Ok(NewtonReport { iterations: iter, update_norms, final_residual_norm: r_norm });
        }
    }
    Err(QgeError::NewtonDiverged {
        max_iters,
        last_update: update_norms.last().copied().unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    struct Scalar {
        f: fn(f64) -> f64,
        df: fn(f64) -> f64,
    }

    impl NewtonSystem for Scalar {
        fn dim(&self) -> usize {
            1
        }
        fn residual(&mut self, x: &[f64], out: &mut [f64]) {
            out[0] = (self.f)(x[0]);
        }
        fn solve_linearized(&mut self, x: &[f64], rhs: &[f64]) -> Result<Vec<f64>, QgeError> {
            Ok(vec![rhs[0] / (self.df)(x[0])])
        }
    }

    struct Linear {
        a: DenseMatrix,
        b: Vec<f64>,
    }

    impl NewtonSystem for Linear {
        fn dim(&self) -> usize {
            self.b.len()
        }
        fn residual(&mut self, x: &[f64], out: &mut [f64]) {
            let ax = self.a.matvec(x);
            for i in 0..out.len() {
                out[i] = ax[i] - self.b[i];
            }
        }
        fn solve_linearized(&mut self, _x: &[f64], rhs: &[f64]) -> Result<Vec<f64>, QgeError> {
            Ok(self.a.clone().factorize()?.solve(rhs))
        }
    }

    #[test]
    fn converges_quadratically_on_a_scalar_quadratic() {
        let mut sys = Scalar { f: |x| x * x - 4.0, df: |x| 2.0 * x };
        let mut x = vec![3.0];
        let report = newton_solve(&mut sys, &mut x, 1e-12, 25).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        // Update norms square from one iteration to the next; allow a loose
        // constant since the asymptotic regime takes a step or two.
        let u = &report.update_norms;
        assert!(u.len() >= 3, "expected several updates, got {u:?}");
        for w in u.windows(2) {
            if w[0] < 1e-1 && w[1] > 1e-15 {
                let predicted = w[0] * w[0];
                assert!(
                    w[1] < 10.0 * predicted && w[1] > predicted / 10.0,
                    "updates {w:?} do not square"
                );
            }
        }
    }

    #[test]
    fn linear_systems_finish_in_one_iteration() {
        let mut a = DenseMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                a.set(i, j, if i == j { 3.0 } else { 0.5 / (1.0 + i as f64 + j as f64) });
            }
        }
        let b = vec![1.0, -2.0, 0.5, 4.0];
        let mut sys = Linear { a, b };
        let mut x = vec![10.0, -7.0, 3.0, 0.0];
        // Tolerance far tighter than the first update's size: only the
        // residual floor can stop the iteration this early.
        let report = newton_solve(&mut sys, &mut x, 1e-30, 25).unwrap();
        assert_eq!(report.iterations, 1, "updates: {:?}", report.update_norms);
        let mut r = vec![0.0; 4];
        sys.residual(&x, &mut r);
        assert!(norm2(&r) < 1e-12);
    }

    #[test]
    fn zero_initial_residual_takes_no_iterations() {
        let mut sys = Scalar { f: |x| x * x - 4.0, df: |x| 2.0 * x };
        let mut x = vec![2.0];
        let report = newton_solve(&mut sys, &mut x, 1e-12, 25).unwrap();
        assert_eq!(report.iterations, 0);
    }

    #[test]
    fn rootless_problems_error_out() {
        let mut sys = Scalar { f: |x| x * x + 1.0, df: |x| 2.0 * x };
        let mut x = vec![3.0];
        match newton_solve(&mut sys, &mut x, 1e-12, 12) {
            Err(QgeError::NewtonDiverged { max_iters, .. }) => assert_eq!(max_iters, 12),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn two_dimensional_root_is_found() {
        // r = (x² + y² − 1, y − x²): intersect the circle with a parabola.
        struct Curve;
        impl NewtonSystem for Curve {
            fn dim(&self) -> usize {
                2
            }
            fn residual(&mut self, x: &[f64], out: &mut [f64]) {
                out[0] = x[0] * x[0] + x[1] * x[1] - 1.0;
                out[1] = x[1] - x[0] * x[0];
            }
            fn solve_linearized(&mut self, x: &[f64], rhs: &[f64]) -> Result<Vec<f64>, QgeError> {
                let mut j = DenseMatrix::zeros(2, 2);
                j.set(0, 0, 2.0 * x[0]);
                j.set(0, 1, 2.0 * x[1]);
                j.set(1, 0, -2.0 * x[0]);
                j.set(1, 1, 1.0);
                Ok(j.factorize()?.solve(rhs))
            }
        }
        let mut x = vec![1.0, 1.0];
        newton_solve(&mut Curve, &mut x, 1e-13, 25).unwrap();
        let golden = ((5.0f64).sqrt() - 1.0) / 2.0; // y solves y² + y = 1
        assert!((x[1] - golden).abs() < 1e-12);
        assert!((x[0] - golden.sqrt()).abs() < 1e-12);
    }
}
