//! Manufactured solutions and convergence studies.
//!
//! Each benchmark solution is a separable product ψ(x, y, t) = X(x) Y(y) τ(t)
//! whose factors vanish together with their first derivatives at the domain
//! edges, so the clamped boundary conditions hold exactly. The factors are
//! carried as derivative tables [f, f', f'', f''', f''''], which is enough to
//! evaluate every term of the forcing
//!
//!   F = Ro ( −Δψ_t + Re⁻¹ Δ²ψ + ψ_x (Δψ)_y − ψ_y (Δψ)_x − Ro⁻¹ ψ_x )
//!
//! in closed form. A study runs the solver against that forcing on a ladder
//! of meshes and step sizes and reports errors and observed orders.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Mutex;

use crate::argyris::{
    build_space, ArgyrisSpace, DiscreteField, ScalarField, TAB_DX, TAB_DXX, TAB_DXY, TAB_DY,
    TAB_DYY, TAB_VAL,
};
use crate::error::QgeError;
use crate::forms::{
    add_nonlinear_residual, assemble_linear_forms, compute_state, l2_norm_sq, LinearForms,
};
use crate::mesh::generate_rectangle_mesh;
use crate::stepper::{run_simulation, Forcing, LinearSolverKind, SolverConfig};

/// Derivative table [f, f', f'', f''', f''''] of a one-dimensional factor.
type Profile = fn(f64) -> [f64; 5];

/// [τ, τ'] of the time factor.
type TimeFactor = fn(f64) -> [f64; 2];

/// Leibniz rule through fourth order.
fn product(a: [f64; 5], b: [f64; 5]) -> [f64; 5] {
    [
        a[0] * b[0],
        a[1] * b[0] + a[0] * b[1],
        a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2],
        a[3] * b[0] + 3.0 * a[2] * b[1] + 3.0 * a[1] * b[2] + a[0] * b[3],
        a[4] * b[0] + 4.0 * a[3] * b[1] + 6.0 * a[2] * b[2] + 4.0 * a[1] * b[3] + a[0] * b[4],
    ]
}

/// Derivatives of g = u² from those of u.
fn square(u: [f64; 5]) -> [f64; 5] {
    [
        u[0] * u[0],
        2.0 * u[0] * u[1],
        2.0 * (u[1] * u[1] + u[0] * u[2]),
        2.0 * (3.0 * u[1] * u[2] + u[0] * u[3]),
        2.0 * (3.0 * u[2] * u[2] + 4.0 * u[1] * u[3] + u[0] * u[4]),
    ]
}

fn sine_squared(s: f64) -> [f64; 5] {
    let (sn, cs) = ((PI * s).sin(), (PI * s).cos());
    square([sn, PI * cs, -PI * PI * sn, -PI * PI * PI * cs, PI * PI * PI * PI * sn])
}

/// [(1 − x/3)(1 − e^{−20x})]², a western boundary layer profile on [0, 3].
fn boundary_layer_squared(x: f64) -> [f64; 5] {
    let a = [1.0 - x / 3.0, -1.0 / 3.0, 0.0, 0.0, 0.0];
    let e = (-20.0 * x).exp();
    let b = [1.0 - e, 20.0 * e, -400.0 * e, 8000.0 * e, -160_000.0 * e];
    square(product(a, b))
}

fn sine_time(t: f64) -> [f64; 2] {
    [t.sin(), t.cos()]
}

/// Every space-time derivative of the exact solution needed by the forcing.
struct Jet {
    value: f64,
    dx: f64,
    dy: f64,
    dxx: f64,
    dxy: f64,
    dyy: f64,
    lap_t: f64,
    lap_x: f64,
    lap_y: f64,
    bilap: f64,
}

pub struct ManufacturedSolution {
    pub name: &'static str,
    pub width: f64,
    pub height: f64,
    fx: Profile,
    fy: Profile,
    time: TimeFactor,
}

/// Smooth interior vortex on the unit square: [sin(πx) sin(πy)]² sin(t).
pub fn smooth_vortex() -> ManufacturedSolution {
    ManufacturedSolution {
        name: "smooth-vortex",
        width: 1.0,
        height: 1.0,
        fx: sine_squared,
        fy: sine_squared,
        time: sine_time,
    }
}

/// Boundary layer benchmark on [0, 3] x [0, 1]: the x profile rises over a
/// width of about 1/20 near the western wall, mimicking a wind-driven gyre.
pub fn boundary_layer() -> ManufacturedSolution {
    ManufacturedSolution {
        name: "boundary-layer",
        width: 3.0,
        height: 1.0,
        fx: boundary_layer_squared,
        fy: sine_squared,
        time: sine_time,
    }
}

impl ManufacturedSolution {
    fn jet(&self, t: f64, x: f64, y: f64) -> Jet {
        let fx = (self.fx)(x);
        let fy = (self.fy)(y);
        let tau = (self.time)(t);
        let lap = fx[2] * fy[0] + fx[0] * fy[2];
        Jet {
            value: fx[0] * fy[0] * tau[0],
            dx: fx[1] * fy[0] * tau[0],
            dy: fx[0] * fy[1] * tau[0],
            dxx: fx[2] * fy[0] * tau[0],
            dxy: fx[1] * fy[1] * tau[0],
            dyy: fx[0] * fy[2] * tau[0],
            lap_t: lap * tau[1],
            lap_x: (fx[3] * fy[0] + fx[1] * fy[2]) * tau[0],
            lap_y: (fx[2] * fy[1] + fx[0] * fy[3]) * tau[0],
            bilap: (fx[4] * fy[0] + 2.0 * fx[2] * fy[2] + fx[0] * fy[4]) * tau[0],
        }
    }

    /// The right side that makes this solution exact for the given
    /// parameters.
    pub fn forcing_at(&self, reynolds: f64, rossby: f64, t: f64, x: f64, y: f64) -> f64 {
        let j = self.jet(t, x, y);
        let advection = j.dx * j.lap_y - j.dy * j.lap_x;
        rossby * (-j.lap_t + j.bilap / reynolds + advection - j.dx / rossby)
    }

    pub fn forcing_field(
        &self,
        reynolds: f64,
        rossby: f64,
    ) -> impl Fn(f64, f64, f64) -> f64 + '_ {
        move |t, x, y| self.forcing_at(reynolds, rossby, t, x, y)
    }

    /// Freeze the time coordinate, giving a spatial field.
    pub fn field_at(&self, t: f64) -> SolutionAtTime<'_> {
        SolutionAtTime { sol: self, t }
    }
}

pub struct SolutionAtTime<'a> {
    sol: &'a ManufacturedSolution,
    t: f64,
}

impl ScalarField for SolutionAtTime<'_> {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.sol.jet(self.t, x, y).value
    }

    fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let j = self.sol.jet(self.t, x, y);
        [j.dx, j.dy]
    }

    fn hessian(&self, x: f64, y: f64) -> [f64; 3] {
        let j = self.sol.jet(self.t, x, y);
        [j.dxx, j.dxy, j.dyy]
    }
}

/// L² norm and first and second order seminorms of the difference between a
/// discrete field and a smooth one.
#[derive(Clone, Copy, Debug)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1: f64,
    pub h2: f64,
}

pub fn error_norms(space: &ArgyrisSpace, values: &[f64], exact: &dyn ScalarField) -> ErrorNorms {
    let nq = space.quad.len();
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for c in 0..space.mesh.n_cells() {
        let shape = &space.shapes[space.cell_shape[c]];
        let area = space.cell_area(c);
        let local = space.gather(c, values);
        for q in 0..nq {
            let w = area * space.quad.weights[q];
            let mut d = [0.0f64; 6];
            for (deriv, out) in d.iter_mut().enumerate() {
                let tab = shape.table(q, deriv);
                let mut s = 0.0;
                for k in 0..21 {
                    s += local[k] * tab[k];
                }
                *out = s;
            }
            let p = space.quad_point(c, q);
            let grad = exact.gradient(p[0], p[1]);
            let hess = exact.hessian(p[0], p[1]);
            let ev = d[TAB_VAL] - exact.value(p[0], p[1]);
            let ex = d[TAB_DX] - grad[0];
            let ey = d[TAB_DY] - grad[1];
            let exx = d[TAB_DXX] - hess[0];
            let exy = d[TAB_DXY] - hess[1];
            let eyy = d[TAB_DYY] - hess[2];
            s0 += w * ev * ev;
            s1 += w * (ex * ex + ey * ey);
            s2 += w * (exx * exx + 2.0 * exy * exy + eyy * eyy);
        }
    }
    ErrorNorms { l2: s0.sqrt(), h1: s1.sqrt(), h2: s2.sqrt() }
}

/// One requested resolution: nominal time step and mesh size.
#[derive(Clone, Copy, Debug)]
pub struct StudyPoint {
    pub dt: f64,
    pub h: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct StudyRow {
    /// Nominal step; the run itself uses t_final divided by the nearest
    /// integer step count.
    pub dt: f64,
    pub h: f64,
    /// Unknowns actually solved for (constrained slots excluded).
    pub dofs: usize,
    pub errors: ErrorNorms,
}

#[derive(Clone, Copy, Debug)]
pub struct StudyConfig {
    pub reynolds: f64,
    pub rossby: f64,
    pub t_final: f64,
    pub solver: LinearSolverKind,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Worker threads for independent rows; 1 runs them in order. Results
    /// are identical either way, rows never share state.
    pub workers: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        StudyConfig {
            reynolds: 1.0,
            rossby: 1.0,
            t_final: 1.0,
            solver: solver.linear_solver,
            newton_tol: solver.newton_tol,
            newton_max_iters: solver.newton_max_iters,
            workers: 1,
        }
    }
}

fn mesh_counts(sol_width: f64, sol_height: f64, h: f64) -> Result<(usize, usize), QgeError> {
    if !(h > 0.0) {
        return Err(QgeError::InvalidConfig(format!("mesh size must be positive, got {}", h)));
    }
    let nx = (sol_width / h).round();
    let ny = (sol_height / h).round();
    if nx < 1.0 || ny < 1.0 {
        return Err(QgeError::InvalidConfig(format!(
            "mesh size {} is coarser than the {} x {} domain",
            h, sol_width, sol_height
        )));
    }
    if (nx * h - sol_width).abs() > 1e-9 * sol_width || (ny * h - sol_height).abs() > 1e-9 * sol_height {
        return Err(QgeError::InvalidConfig(format!(
            "mesh size {} does not evenly divide the {} x {} domain",
            h, sol_width, sol_height
        )));
    }
    Ok((nx as usize, ny as usize))
}

/// Solve one benchmark at one resolution and measure the final-time error.
pub fn run_study_point(
    sol: &ManufacturedSolution,
    cfg: &StudyConfig,
    point: StudyPoint,
) -> Result<StudyRow, QgeError> {
    let (nx, ny) = mesh_counts(sol.width, sol.height, point.h)?;
    if !(point.dt > 0.0) {
        return Err(QgeError::InvalidConfig(format!("dt must be positive, got {}", point.dt)));
    }
    let n_steps = (cfg.t_final / point.dt).round().max(1.0);
    let dt = cfg.t_final / n_steps;
    let mesh = generate_rectangle_mesh(sol.width, sol.height, nx, ny)?;
    let space = build_space(mesh)?;
    let forms = assemble_linear_forms(&space);
    let config = SolverConfig {
        reynolds: cfg.reynolds,
        rossby: cfg.rossby,
        dt,
        t_final: cfg.t_final,
        newton_tol: cfg.newton_tol,
        newton_max_iters: cfg.newton_max_iters,
        linear_solver: cfg.solver,
    };
    let f = sol.forcing_field(cfg.reynolds, cfg.rossby);
    let result = run_simulation(&space, &forms, config, &sol.field_at(0.0), &Forcing::Field(&f))?;
    let errors = error_norms(&space, &result.coeffs.values, &sol.field_at(cfg.t_final));
    Ok(StudyRow { dt: point.dt, h: point.h, dofs: space.n_free(), errors })
}

/// Run a ladder of resolutions, keeping every row that finished before the
/// first failure.
///
/// Returns the completed prefix of rows plus the error that stopped the
/// study, if any. A sequential run stops scheduling work at the failure; a
/// parallel run may finish later rows first, but the output is still cut at
/// the first failed index so the table never has gaps.
pub fn run_study_partial(
    sol: &ManufacturedSolution,
    cfg: &StudyConfig,
    points: &[StudyPoint],
) -> (Vec<StudyRow>, Option<QgeError>) {
    let workers = cfg.workers.max(1).min(points.len().max(1));
    let mut slots: Vec<Option<Result<StudyRow, QgeError>>> = Vec::new();
    slots.resize_with(points.len(), || None);
    if workers == 1 {
        for (slot, &point) in slots.iter_mut().zip(points) {
            let row = run_study_point(sol, cfg, point);
            let failed = row.is_err();
            *slot = Some(row);
            if failed {
                break;
            }
        }
    } else {
        let shared = Mutex::new(std::mem::take(&mut slots));
        std::thread::scope(|scope| {
            for w in 0..workers {
                let shared = &shared;
                scope.spawn(move || {
                    let mut i = w;
                    while i < points.len() {
                        let row = run_study_point(sol, cfg, points[i]);
                        shared.lock().unwrap()[i] = Some(row);
                        i += workers;
                    }
                });
            }
        });
        slots = shared.into_inner().expect("study workers never panic holding the lock");
    }
    let mut rows = Vec::new();
    let mut failure = None;
    for slot in slots {
        match slot {
            Some(Ok(row)) => rows.push(row),
            Some(Err(err)) => {
                failure = Some(err);
                break;
            }
            None => break,
        }
    }
    (rows, failure)
}

/// Run a ladder of resolutions, optionally spreading rows over threads.
pub fn run_study(
    sol: &ManufacturedSolution,
    cfg: &StudyConfig,
    points: &[StudyPoint],
) -> Result<Vec<StudyRow>, QgeError> {
    match run_study_partial(sol, cfg, points) {
        (rows, None) => Ok(rows),
        (_, Some(err)) => Err(err),
    }
}

/// Errors below this are round-off or iteration noise; no order is reported
/// across them.
pub const ORDER_FLOOR: f64 = 1e-9;

/// Observed orders between consecutive rows, per norm. The rate is measured
/// against whichever resolution parameter changed, mesh size first; rows
/// that refine nothing, coarsen, or sit at the noise floor get none.
pub fn study_orders(rows: &[StudyRow]) -> Vec<[Option<f64>; 3]> {
    let mut orders = vec![[None; 3]; rows.len()];
    for i in 1..rows.len() {
        let (prev, curr) = (&rows[i - 1], &rows[i]);
        let ratio = if (prev.h - curr.h).abs() > 1e-12 * prev.h.abs() {
            prev.h / curr.h
        } else if (prev.dt - curr.dt).abs() > 1e-12 * prev.dt.abs() {
            prev.dt / curr.dt
        } else {
            continue;
        };
        if !(ratio > 1.0) {
            continue;
        }
        let e_prev = [prev.errors.l2, prev.errors.h1, prev.errors.h2];
        let e_curr = [curr.errors.l2, curr.errors.h1, curr.errors.h2];
        for k in 0..3 {
            if e_prev[k] > ORDER_FLOOR && e_curr[k] > ORDER_FLOOR {
                orders[i][k] = Some((e_prev[k] / e_curr[k]).ln() / ratio.ln());
            }
        }
    }
    orders
}

/// Render rows as the study table. Orders are blank where undefined.
pub fn study_csv(rows: &[StudyRow]) -> String {
    let orders = study_orders(rows);
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str("k,h,dofs,e_l2,l2_order,e_h1,h1_order,e_h2,h2_order\n");
    let fmt = |o: Option<f64>| o.map(|v| format!("{:.2}", v)).unwrap_or_default();
    for (row, ord) in rows.iter().zip(&orders) {
        writeln!(
            out,
            "{},{},{},{:.6e},{},{:.6e},{},{:.6e},{}",
            row.dt,
            row.h,
            row.dofs,
            row.errors.l2,
            fmt(ord[0]),
            row.errors.h1,
            fmt(ord[1]),
            row.errors.h2,
            fmt(ord[2]),
        )
        .expect("writing to a string cannot fail");
    }
    out
}

/// A manufactured problem whose exact solution lives in the discrete space
/// itself: ψ(t) = (α + βt) c for a fixed constrained coefficient vector c.
/// The matching right side follows from applying each discrete operator to
/// c, and because the trajectory is affine in time, implicit Euler carries
/// no time discretization error: the solver must reproduce it to iteration
/// tolerance on any mesh.
pub struct DiscreteManufactured {
    pub alpha: f64,
    pub beta: f64,
    pub coeffs: Vec<f64>,
    reynolds: f64,
    rossby: f64,
    g_c: Vec<f64>,
    b_c: Vec<f64>,
    d_c: Vec<f64>,
    n_c: Vec<f64>,
}

impl DiscreteManufactured {
    pub fn new(
        space: &ArgyrisSpace,
        forms: &LinearForms,
        reynolds: f64,
        rossby: f64,
        alpha: f64,
        beta: f64,
        coeffs: Vec<f64>,
    ) -> Self {
        let state = compute_state(space, &coeffs);
        let mut n_c = vec![0.0; space.n_dofs];
        add_nonlinear_residual(space, &state, &mut n_c);
        DiscreteManufactured {
            alpha,
            beta,
            reynolds,
            rossby,
            g_c: forms.grad.matvec_alloc(&coeffs),
            b_c: forms.lap.matvec_alloc(&coeffs),
            d_c: forms.dx.matvec_alloc(&coeffs),
            n_c,
            coeffs,
        }
    }

    pub fn tau(&self, t: f64) -> f64 {
        self.alpha + self.beta * t
    }

    /// Load functional L(t) with (G, B, D, N applied to c) cached: the weak
    /// equation at ψ = τ(t) c reads
    /// τ' G c + τ (Re⁻¹ B − Ro⁻¹ D) c + τ² N(c) = Ro⁻¹ L(t).
    pub fn load(&self, t: f64) -> Vec<f64> {
        let tau = self.tau(t);
        let mut l = vec![0.0; self.g_c.len()];
        for i in 0..l.len() {
            l[i] = self.rossby
                * (self.beta * self.g_c[i]
                    + tau * (self.b_c[i] / self.reynolds - self.d_c[i] / self.rossby)
                    + tau * tau * self.n_c[i]);
        }
        l
    }

    pub fn exact_at(&self, t: f64) -> Vec<f64> {
        let tau = self.tau(t);
        self.coeffs.iter().map(|&v| tau * v).collect()
    }
}

/// Largest coefficient error of a full run against the affine trajectory.
pub fn discrete_reproduction_error(
    space: &ArgyrisSpace,
    forms: &LinearForms,
    problem: &DiscreteManufactured,
    config: SolverConfig,
) -> Result<f64, QgeError> {
    let initial = DiscreteField { space, values: &problem.coeffs, scale: problem.alpha };
    let load = |t: f64| problem.load(t);
    let result = run_simulation(space, forms, config, &initial, &Forcing::DiscreteLoad(&load))?;
    let exact = problem.exact_at(config.t_final);
    let err = result
        .coeffs
        .values
        .iter()
        .zip(&exact)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(err)
}

/// Study rows for the discrete-trajectory problem on a mesh ladder; the
/// error norms are the discrete ones, so every entry should sit at the
/// iteration noise floor regardless of resolution.
pub fn run_discrete_study(
    cfg: &StudyConfig,
    width: f64,
    height: f64,
    points: &[StudyPoint],
    alpha: f64,
    beta: f64,
    seed: u64,
) -> Result<Vec<StudyRow>, QgeError> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    let mut rows = Vec::with_capacity(points.len());
    for &point in points {
        let (nx, ny) = mesh_counts(width, height, point.h)?;
        let n_steps = (cfg.t_final / point.dt).round().max(1.0);
        let dt = cfg.t_final / n_steps;
        let mesh = generate_rectangle_mesh(width, height, nx, ny)?;
        let space = build_space(mesh)?;
        let forms = assemble_linear_forms(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let free: Vec<f64> = (0..space.n_free()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let coeffs = space.scatter_free(&free);
        let problem = DiscreteManufactured::new(
            &space,
            &forms,
            cfg.reynolds,
            cfg.rossby,
            alpha,
            beta,
            coeffs,
        );
        let config = SolverConfig {
            reynolds: cfg.reynolds,
            rossby: cfg.rossby,
            dt,
            t_final: cfg.t_final,
            newton_tol: cfg.newton_tol,
            newton_max_iters: cfg.newton_max_iters,
            linear_solver: cfg.solver,
        };
        let initial = DiscreteField { space: &space, values: &problem.coeffs, scale: alpha };
        let load = |t: f64| problem.load(t);
        let result =
            run_simulation(&space, &forms, config, &initial, &Forcing::DiscreteLoad(&load))?;
        let exact = problem.exact_at(cfg.t_final);
        let diff: Vec<f64> =
            result.coeffs.values.iter().zip(&exact).map(|(a, b)| a - b).collect();
        let errors = ErrorNorms {
            l2: l2_norm_sq(&space, &diff).sqrt(),
            h1: forms.grad.bilinear(&diff, &diff).max(0.0).sqrt(),
            h2: forms.lap.bilinear(&diff, &diff).max(0.0).sqrt(),
        };
        rows.push(StudyRow { dt: point.dt, h: point.h, dofs: space.n_free(), errors });
    }
    Ok(rows)
}
