//! Triangle quadrature built from collapsed Gauss-Legendre product rules.
//!
//! A rule of requested exactness degree `d` uses an n x n tensor grid mapped
//! onto the reference triangle through (a, b) -> (a, b(1-a)); the extra factor
//! of (1-a) from the Jacobian is absorbed into the weights, so choosing
//! 2n - 1 >= d + 1 makes every bivariate monomial of total degree <= d exact.
//! All points are interior and all weights positive.

/// Quadrature rule on the reference triangle {x >= 0, y >= 0, x + y <= 1}.
///
/// Points are barycentric; weights are normalized to sum to one, so an
/// integral over a physical cell is `cell_area * sum(w_q * f(x_q))`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Map barycentric point `q` onto the triangle with the given vertices.
    pub fn physical_point(&self, q: usize, v: [[f64; 2]; 3]) -> [f64; 2] {
        let l = self.points[q];
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
/// Weights sum to 2. Nodes found by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // The cosine guesses run from +1 toward -1; report ascending.
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Rule exact for all polynomials of total degree <= `degree`.
pub fn triangle_rule(degree: usize) -> QuadratureRule {
    let n = (degree + 3) / 2; // 2n - 1 >= degree + 1
    triangle_rule_with_points(degree, n)
}

/// Collapsed product rule with an explicit 1D point count per direction.
/// Used directly by test oracles that want far more points than necessary.
pub fn triangle_rule_with_points(degree: usize, n: usize) -> QuadratureRule {
    let (xs, ws) = gauss_legendre(n);
    // Shift to [0, 1] with unit total weight.
    let a: Vec<f64> = xs.iter().map(|x| 0.5 * (x + 1.0)).collect();
    let wa: Vec<f64> = ws.iter().map(|w| 0.5 * w).collect();
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let x = a[i];
            let y = a[j] * (1.0 - a[i]);
            // Jacobian (1 - a) folded in; factor 2 renormalizes the reference
            // area of 1/2 so the weights sum to one.
            weights.push(2.0 * wa[i] * wa[j] * (1.0 - a[i]));
            points.push([1.0 - x - y, x, y]);
        }
    }
    QuadratureRule { points, weights, degree }
}
