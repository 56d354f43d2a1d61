//! Explicit adaptive-Euler integration of u_t - Δu = |∇u|^p + h(x) with
//! homogeneous Dirichlet data, on the graded meshes of [`crate::geometry`].
//!
//! Near blow-up the Hamiltonian term dominates, so the step size obeys a
//! gradient CFL dt ~ h_min / (p m^{p-1}) in addition to the diffusive one;
//! an implicit treatment of Δ would not relax the overall cost. No
//! upwinding: with u >= 0 and Dirichlet 0 the centered scheme is stable
//! under that CFL, and upwinding would smear the d^{-beta} boundary
//! profile that the Bernstein checks measure.

use crate::geometry::{DomainSpec, Grid, Mesh};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Derived constants of the exponent p. `c_p` and the rate exponents are
/// only meaningful for p > 2 and are None otherwise.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PExponents {
    pub p: f64,
    /// beta = 1/(p-1): boundary profile exponent, u ~ c_p d^{1-beta}.
    pub beta: f64,
    /// d_p = (p-1)^{-1/(p-1)}: the sharp Bernstein constant.
    pub d_p: f64,
    /// c_p = ((p-1)/(p-2)) (p-1)^{-1/(p-1)}: profile amplitude (p > 2).
    pub c_p: Option<f64>,
    /// q = p-1: exponent in the lower-bound ODE chain.
    pub q_lower: f64,
    /// 1/(p-2): sharp blow-up rate of time-increasing solutions (p > 2).
    pub rate: Option<f64>,
    /// 2/(p-2): lower bound on the rate of minimal solutions (p > 2).
    pub rate_singular: Option<f64>,
    /// 1/(2(p-1)): self-similar exponent; exceeding it means Type II.
    pub rate_selfsim: f64,
}

impl PExponents {
    pub fn new(p: f64) -> Result<Self, SolverError> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(SolverError::InvalidProblem(format!("p = {p}, need p > 1")));
        }
        let beta = 1.0 / (p - 1.0);
        let d_p = (p - 1.0).powf(-1.0 / (p - 1.0));
        let (c_p, rate, rate_singular) = if p > 2.0 {
            (
                Some((p - 1.0) / (p - 2.0) * d_p),
                Some(1.0 / (p - 2.0)),
                Some(2.0 / (p - 2.0)),
            )
        } else {
            (None, None, None)
        };
        Ok(PExponents {
            p,
            beta,
            d_p,
            c_p,
            q_lower: p - 1.0,
            rate,
            rate_singular,
            rate_selfsim: 0.5 / (p - 1.0),
        })
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("field length {got} does not match mesh with {want} nodes")]
    ShapeMismatch { got: usize, want: usize },
    #[error("forcing search exhausted amplitude budget {a_max}")]
    NotFound { a_max: f64 },
}

/// A fully specified simulation instance. Fields are sampled on a
/// specific mesh; `Problem::new` validates membership of u0 in the class
/// X = {u0 >= 0, u0 = 0 on the boundary} and h >= 0.
#[derive(Debug, Clone)]
pub struct Problem {
    pub domain: DomainSpec,
    pub p: f64,
    pub exponents: PExponents,
    pub h: Vec<f64>,
    pub u0: Vec<f64>,
    pub t_max: f64,
    pub g_max: f64,
}

impl Problem {
    pub fn new(
        mesh: &Mesh,
        p: f64,
        h: Vec<f64>,
        mut u0: Vec<f64>,
        t_max: f64,
        g_max: f64,
    ) -> Result<Self, SolverError> {
        let n = mesh.n_nodes();
        if h.len() != n {
            return Err(SolverError::ShapeMismatch { got: h.len(), want: n });
        }
        if u0.len() != n {
            return Err(SolverError::ShapeMismatch { got: u0.len(), want: n });
        }
        if h.iter().any(|&v| !(v >= 0.0)) {
            return Err(SolverError::InvalidProblem("h must be >= 0".into()));
        }
        if u0.iter().any(|&v| !(v >= 0.0)) {
            return Err(SolverError::InvalidProblem("u0 must be >= 0".into()));
        }
        // Dirichlet data: boundary values must vanish up to rounding in
        // the caller's evaluation (e.g. sin(pi * 1.0) != 0 exactly);
        // clamp them so the boundary condition holds identically.
        let scale = u0.iter().cloned().fold(1.0f64, f64::max);
        for i in 0..n {
            if mesh.is_boundary(i) {
                if u0[i].abs() > 1e-12 * scale {
                    return Err(SolverError::InvalidProblem(
                        "u0 must vanish on the boundary".into(),
                    ));
                }
                u0[i] = 0.0;
            }
        }
        if !(t_max > 0.0) || !(g_max > 0.0) {
            return Err(SolverError::InvalidProblem(
                "t_max and g_max must be positive".into(),
            ));
        }
        Ok(Problem {
            domain: mesh.spec,
            p,
            exponents: PExponents::new(p)?,
            h,
            u0,
            t_max,
            g_max,
        })
    }
}

/// Solution snapshot. `u_t_field` is the spatial residual
/// Δ_h u + |∇_h u|^p + h (not a time difference), so functional checks
/// are free of step noise.
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub grad_mag: Vec<f64>,
    pub u_t_field: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    /// m = ||∇u||_inf (including one-sided boundary derivatives).
    pub m: f64,
    pub sup_u: f64,
    pub sup_ut: f64,
    /// Max over boundary nodes of the inward normal derivative.
    pub u_nu_boundary: f64,
    /// Max over the interior boundary layer of d^beta |∇u|.
    pub bernstein_sup: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    BlewUp { t_stop: f64 },
    ReachedHorizon,
    Underflow,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub samples: Vec<TraceSample>,
    pub outcome: Outcome,
}

/// Time-step and sampling controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepControl {
    pub safety: f64,
    pub dt_max: f64,
    /// Record a sample whenever m has grown by this ratio (or on
    /// outcome / horizon events).
    pub sample_ratio: f64,
    /// Stop declaring blow-up once m reaches d_p h_min^{-beta}: beyond
    /// that level the steepest cell cannot represent the d^{-beta}
    /// profile, the discrete dynamics leave the PDE regime (the discrete
    /// maximum principle fails) and the tail would bias rate fits.
    pub resolution_guard: bool,
    /// Keep at most this many full states (0 = none), thinned by m-growth.
    pub keep_states: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            safety: 0.4,
            dt_max: 1e-3,
            sample_ratio: 1.05,
            resolution_guard: true,
            keep_states: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Trace,
    /// Thinned snapshots (only if keep_states > 0), last one at the stop time.
    pub states: Vec<State>,
    pub final_state: State,
    pub steps: u64,
    /// The gradient level at which the run was declared blown up.
    pub g_stop: f64,
}

/// |g|^p with fast paths for the exponents used throughout; powf
/// dominates the step cost otherwise.
#[derive(Debug, Clone, Copy)]
enum PowKind {
    TwoHalf,
    Three,
    Four,
    Int(i32),
    General(f64),
}

impl PowKind {
    fn of(p: f64) -> PowKind {
        if p == 2.5 {
            PowKind::TwoHalf
        } else if p == 3.0 {
            PowKind::Three
        } else if p == 4.0 {
            PowKind::Four
        } else if p.fract() == 0.0 && p.abs() < 16.0 {
            PowKind::Int(p as i32)
        } else {
            PowKind::General(p)
        }
    }

    #[inline(always)]
    fn abs_pow(self, g: f64) -> f64 {
        match self {
            PowKind::TwoHalf => g * g * g.abs().sqrt(),
            PowKind::Three => g * g * g.abs(),
            PowKind::Four => (g * g) * (g * g),
            PowKind::Int(k) => g.abs().powi(k),
            PowKind::General(p) => g.abs().powf(p),
        }
    }
}

/// Precomputed stencil weights for a 1D/radial line grid.
struct LineOps {
    n: usize,
    // Gradient: g_i = gw u_{i-1} + gc u_i + ge u_{i+1} (interior).
    gw: Vec<f64>,
    gc: Vec<f64>,
    ge: Vec<f64>,
    // Laplacian including the radial (dim-1)/r u_r term.
    lw: Vec<f64>,
    lc: Vec<f64>,
    le: Vec<f64>,
    left_is_boundary: bool,
    /// Center coefficient 2 dim / h1^2 for a ball (node 0 regular).
    center_coeff: f64,
    /// One-sided inward-derivative weights at each boundary end,
    /// applied along the inward node line.
    bnd_weights: Vec<(usize, isize, [f64; 3])>, // (boundary idx, stride, weights)
    dt_diff: f64,
    h_min: f64,
}

fn one_sided_weights(h1: f64, h2: f64) -> [f64; 3] {
    [
        -(2.0 * h1 + h2) / (h1 * (h1 + h2)),
        (h1 + h2) / (h1 * h2),
        -h1 / (h2 * (h1 + h2)),
    ]
}

impl LineOps {
    fn build(mesh: &Mesh) -> LineOps {
        let Grid::Line(line) = &mesh.grid else {
            panic!("LineOps requires a line grid");
        };
        let x = &line.coords;
        let n = x.len();
        let dim = line.dim as f64;
        let (mut gw, mut gc, mut ge) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let (mut lw, mut lc, mut le) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut dt_diff = f64::INFINITY;
        for i in 1..n - 1 {
            let hl = x[i] - x[i - 1];
            let hr = x[i + 1] - x[i];
            gw[i] = -hr / (hl * (hl + hr));
            gc[i] = (hr - hl) / (hl * hr);
            ge[i] = hl / (hr * (hl + hr));
            lw[i] = 2.0 / (hl * (hl + hr));
            lc[i] = -2.0 / (hl * hr);
            le[i] = 2.0 / (hr * (hl + hr));
            if dim > 1.0 && x[i] > 0.0 {
                // u_rr + (dim-1)/r u_r folded into one stencil.
                let c = (dim - 1.0) / x[i];
                lw[i] += c * gw[i];
                lc[i] += c * gc[i];
                le[i] += c * ge[i];
            }
            dt_diff = dt_diff.min(0.5 * hl * hr);
        }
        let mut center_coeff = 0.0;
        if !line.left_is_boundary {
            // Regular center r = 0: Δu(0) = 2 dim (u1 - u0)/h1^2, ∇u(0) = 0.
            let h1 = x[1] - x[0];
            center_coeff = 2.0 * dim / (h1 * h1);
            dt_diff = dt_diff.min(1.0 / center_coeff);
        }
        let mut bnd_weights = Vec::new();
        if line.left_is_boundary {
            bnd_weights.push((0usize, 1isize, one_sided_weights(x[1] - x[0], x[2] - x[1])));
        }
        bnd_weights.push((
            n - 1,
            -1,
            one_sided_weights(x[n - 1] - x[n - 2], x[n - 2] - x[n - 3]),
        ));
        let h_min = mesh.h_min();
        LineOps {
            n,
            gw,
            gc,
            ge,
            lw,
            lc,
            le,
            left_is_boundary: line.left_is_boundary,
            center_coeff,
            bnd_weights,
            dt_diff,
            h_min,
        }
    }

    /// Fused gradient/RHS evaluation. Fills `grad` (signed derivative at
    /// interior nodes, inward derivative at boundary nodes, 0 at a ball
    /// center) and `rhs` (interior only), returns m = ||∇u||_inf.
    fn eval(&self, pow: PowKind, h: &[f64], u: &[f64], grad: &mut [f64], rhs: &mut [f64]) -> f64 {
        let n = self.n;
        let mut m = 0.0f64;
        for i in 1..n - 1 {
            let g = self.gw[i] * u[i - 1] + self.gc[i] * u[i] + self.ge[i] * u[i + 1];
            let lap = self.lw[i] * u[i - 1] + self.lc[i] * u[i] + self.le[i] * u[i + 1];
            grad[i] = g;
            rhs[i] = lap + pow.abs_pow(g) + h[i];
            let ga = g.abs();
            if ga > m {
                m = ga;
            }
        }
        if !self.left_is_boundary {
            grad[0] = 0.0;
            rhs[0] = self.center_coeff * (u[1] - u[0]) + h[0];
        } else {
            rhs[0] = 0.0;
        }
        rhs[n - 1] = 0.0;
        for &(b, stride, w) in &self.bnd_weights {
            let i1 = (b as isize + stride) as usize;
            let i2 = (b as isize + 2 * stride) as usize;
            let du = w[0] * u[b] + w[1] * u[i1] + w[2] * u[i2];
            grad[b] = du;
            if du.abs() > m {
                m = du.abs();
            }
        }
        m
    }
}

/// Precomputed operators for the polar disc grid.
struct PolarOps {
    nr: usize,
    nt: usize,
    rings: Vec<f64>,
    inv_r: Vec<f64>,
    inv_r2_dt2: Vec<f64>, // 1/(r^2 dθ^2) per ring
    // Radial 3-point weights per ring (ring 0 couples to the center).
    gw: Vec<f64>,
    gc: Vec<f64>,
    ge: Vec<f64>,
    lw: Vec<f64>,
    lc: Vec<f64>,
    le: Vec<f64>,
    center_coeff: f64, // Δu(0) = center_coeff (mean(ring 0) - u0)
    bnd_w: [f64; 3],   // inward derivative weights on (u_bnd, u_{nr-2}, u_{nr-3}) lines
    dt_diff: f64,
    h_min: f64,
}

impl PolarOps {
    fn build(mesh: &Mesh) -> PolarOps {
        let Grid::Polar(p) = &mesh.grid else {
            panic!("PolarOps requires a polar grid");
        };
        let nr = p.rings.len();
        let nt = p.n_theta;
        let dt_theta = 2.0 * std::f64::consts::PI / nt as f64;
        let (mut gw, mut gc, mut ge) = (vec![0.0; nr], vec![0.0; nr], vec![0.0; nr]);
        let (mut lw, mut lc, mut le) = (vec![0.0; nr], vec![0.0; nr], vec![0.0; nr]);
        let mut dt_diff = f64::INFINITY;
        for j in 0..nr - 1 {
            let r = p.rings[j];
            let hl = if j == 0 { r } else { r - p.rings[j - 1] };
            let hr = p.rings[j + 1] - r;
            gw[j] = -hr / (hl * (hl + hr));
            gc[j] = (hr - hl) / (hl * hr);
            ge[j] = hl / (hr * (hl + hr));
            lw[j] = 2.0 / (hl * (hl + hr));
            lc[j] = -2.0 / (hl * hr);
            le[j] = 2.0 / (hr * (hl + hr));
            let c = 1.0 / r;
            lw[j] += c * gw[j];
            lc[j] += c * gc[j];
            le[j] += c * ge[j];
            let dth = r * dt_theta;
            dt_diff = dt_diff.min(0.5 / (1.0 / (hl * hr) + 1.0 / (dth * dth)));
        }
        let r1 = p.rings[0];
        let center_coeff = 4.0 / (r1 * r1);
        dt_diff = dt_diff.min(0.5 / center_coeff);
        let h1 = p.rings[nr - 1] - p.rings[nr - 2];
        let h2 = p.rings[nr - 2] - p.rings[nr - 3];
        PolarOps {
            nr,
            nt,
            rings: p.rings.clone(),
            inv_r: p.rings.iter().map(|&r| 1.0 / r).collect(),
            inv_r2_dt2: p
                .rings
                .iter()
                .map(|&r| 1.0 / (r * r * dt_theta * dt_theta))
                .collect(),
            gw,
            gc,
            ge,
            lw,
            lc,
            le,
            center_coeff,
            bnd_w: one_sided_weights(h1, h2),
            dt_diff,
            h_min: mesh.h_min(),
        }
    }

    fn node(&self, j: usize, k: usize) -> usize {
        1 + j * self.nt + k
    }

    /// Fills grad (gradient magnitude; inward normal derivative on the
    /// boundary ring) and rhs; returns m.
    fn eval(&self, pow: PowKind, h: &[f64], u: &[f64], grad: &mut [f64], rhs: &mut [f64]) -> f64 {
        let (nr, nt) = (self.nr, self.nt);
        let mut m = 0.0f64;
        // Center: flux-balance Laplacian over the first ring; gradient
        // from the first Fourier harmonic of that ring.
        let mut mean1 = 0.0;
        let mut ax = 0.0;
        let mut ay = 0.0;
        for k in 0..nt {
            let v = u[self.node(0, k)];
            mean1 += v;
            let th = 2.0 * std::f64::consts::PI * k as f64 / nt as f64;
            ax += (v - u[0]) * th.cos();
            ay += (v - u[0]) * th.sin();
        }
        mean1 /= nt as f64;
        let scale = 2.0 / (nt as f64 * self.rings[0]);
        let g0 = ((ax * scale).powi(2) + (ay * scale).powi(2)).sqrt();
        grad[0] = g0;
        rhs[0] = self.center_coeff * (mean1 - u[0]) + pow.abs_pow(g0) + h[0];
        if g0 > m {
            m = g0;
        }
        for j in 0..nr - 1 {
            for k in 0..nt {
                let i = self.node(j, k);
                let iw = if j == 0 { 0 } else { self.node(j - 1, k) };
                let ie = self.node(j + 1, k);
                let il = self.node(j, (k + nt - 1) % nt);
                let ir = self.node(j, (k + 1) % nt);
                let ur = self.gw[j] * u[iw] + self.gc[j] * u[i] + self.ge[j] * u[ie];
                // ∇u = (u_r, u_θ / r); θ spacing is uniform.
                let dth = 2.0 * std::f64::consts::PI / nt as f64;
                let gt = 0.5 * (u[ir] - u[il]) / dth * self.inv_r[j];
                let g = (ur * ur + gt * gt).sqrt();
                let lap_r = self.lw[j] * u[iw] + self.lc[j] * u[i] + self.le[j] * u[ie];
                let lap_t = (u[ir] - 2.0 * u[i] + u[il]) * self.inv_r2_dt2[j];
                grad[i] = g;
                rhs[i] = lap_r + lap_t + pow.abs_pow(g) + h[i];
                if g > m {
                    m = g;
                }
            }
        }
        // Boundary ring: inward normal derivative, one-sided along r.
        for k in 0..nt {
            let i = self.node(nr - 1, k);
            let du = self.bnd_w[0] * u[i]
                + self.bnd_w[1] * u[self.node(nr - 2, k)]
                + self.bnd_w[2] * u[self.node(nr - 3, k)];
            grad[i] = du;
            rhs[i] = 0.0;
            if du.abs() > m {
                m = du.abs();
            }
        }
        m
    }
}

enum Ops {
    Line(LineOps),
    Polar(PolarOps),
}

impl Ops {
    fn build(mesh: &Mesh) -> Ops {
        match &mesh.grid {
            Grid::Line(_) => Ops::Line(LineOps::build(mesh)),
            Grid::Polar(_) => Ops::Polar(PolarOps::build(mesh)),
        }
    }
    fn eval(&self, pow: PowKind, h: &[f64], u: &[f64], grad: &mut [f64], rhs: &mut [f64]) -> f64 {
        match self {
            Ops::Line(o) => o.eval(pow, h, u, grad, rhs),
            Ops::Polar(o) => o.eval(pow, h, u, grad, rhs),
        }
    }
    fn dt_diff(&self) -> f64 {
        match self {
            Ops::Line(o) => o.dt_diff,
            Ops::Polar(o) => o.dt_diff,
        }
    }
    fn h_min(&self) -> f64 {
        match self {
            Ops::Line(o) => o.h_min,
            Ops::Polar(o) => o.h_min,
        }
    }
}

/// Δ_h u + |∇_h u|^p + h at interior nodes (0 at boundary nodes).
pub fn discretize_rhs(problem: &Problem, mesh: &Mesh, u: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = mesh.n_nodes();
    if u.len() != n {
        return Err(SolverError::ShapeMismatch { got: u.len(), want: n });
    }
    let ops = Ops::build(mesh);
    let pow = PowKind::of(problem.p);
    let mut grad = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    ops.eval(pow, &problem.h, u, &mut grad, &mut rhs);
    Ok(rhs)
}

/// Evaluate the state diagnostics (gradient field and spatial-residual
/// u_t) for a given field.
pub fn make_state(problem: &Problem, mesh: &Mesh, t: f64, u: Vec<f64>) -> State {
    let n = mesh.n_nodes();
    let ops = Ops::build(mesh);
    let pow = PowKind::of(problem.p);
    let mut grad = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    ops.eval(pow, &problem.h, &u, &mut grad, &mut rhs);
    State {
        t,
        u,
        grad_mag: grad,
        u_t_field: rhs,
    }
}

/// One adaptive explicit Euler step (diagnostic-grade entry point; `run`
/// keeps its own fused loop).
pub fn step(problem: &Problem, mesh: &Mesh, state: &State, ctrl: &StepControl) -> Option<State> {
    let ops = Ops::build(mesh);
    let pow = PowKind::of(problem.p);
    let n = mesh.n_nodes();
    let mut grad = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let m = ops.eval(pow, &problem.h, &state.u, &mut grad, &mut rhs);
    let dt = pick_dt(ctrl, ops.dt_diff(), ops.h_min(), problem.p, m);
    if dt < 1e-15 * problem.t_max {
        return None;
    }
    let mut u = state.u.clone();
    for i in 0..n {
        if !mesh.is_boundary(i) {
            u[i] += dt * rhs[i];
        }
    }
    Some(make_state(problem, mesh, state.t + dt, u))
}

#[inline]
fn pick_dt(ctrl: &StepControl, dt_diff: f64, h_min: f64, p: f64, m: f64) -> f64 {
    let mut dt = dt_diff.min(ctrl.dt_max);
    if m > 0.0 {
        let dt_adv = 0.5 * h_min / (p * m.powf(p - 1.0));
        dt = dt.min(dt_adv);
    }
    ctrl.safety * dt
}

struct TraceBuilder<'a> {
    mesh: &'a Mesh,
    beta: f64,
    layer: f64,
    samples: Vec<TraceSample>,
    states: Vec<State>,
    keep_states: usize,
    last_state_m: f64,
    last_m: f64,
}

impl<'a> TraceBuilder<'a> {
    fn record(&mut self, t: f64, m: f64, u: &[f64], grad: &[f64], rhs: &[f64], force: bool) {
        let mut sup_u = 0.0f64;
        let mut sup_ut = 0.0f64;
        let mut u_nu = 0.0f64;
        let mut bern = 0.0f64;
        let dist = self.mesh.dist();
        for i in 0..u.len() {
            if u[i] > sup_u {
                sup_u = u[i];
            }
            let d = dist[i];
            if d > 0.0 {
                if rhs[i].abs() > sup_ut {
                    sup_ut = rhs[i].abs();
                }
                if d < self.layer {
                    let b = d.powf(self.beta) * grad[i].abs();
                    if b > bern {
                        bern = b;
                    }
                }
            } else if grad[i] > u_nu {
                u_nu = grad[i];
            }
        }
        self.samples.push(TraceSample {
            t,
            m,
            sup_u,
            sup_ut,
            u_nu_boundary: u_nu,
            bernstein_sup: bern,
        });
        self.last_m = m;
        if self.keep_states > 0 && (force || m > self.last_state_m * 1.15) {
            self.states.push(State {
                t,
                u: u.to_vec(),
                grad_mag: grad.to_vec(),
                u_t_field: rhs.to_vec(),
            });
            self.last_state_m = m;
            if self.states.len() > self.keep_states {
                // Halve the density of kept snapshots, preserving the ends.
                let n = self.states.len();
                let mut thinned = Vec::with_capacity(n / 2 + 1);
                for (k, s) in self.states.drain(..).enumerate() {
                    if k % 2 == 0 || k == n - 1 {
                        thinned.push(s);
                    }
                }
                self.states = thinned;
            }
        }
    }
}

/// Integrate until blow-up (m >= effective gradient cap), the horizon
/// t_max, or step underflow.
pub fn run(problem: &Problem, mesh: &Mesh, ctrl: &StepControl) -> RunResult {
    let ops = Ops::build(mesh);
    let pow = PowKind::of(problem.p);
    let n = mesh.n_nodes();
    let mut u = problem.u0.clone();
    let mut grad = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let boundary: Vec<bool> = (0..n).map(|i| mesh.is_boundary(i)).collect();
    let exps = problem.exponents;
    let g_stop = if ctrl.resolution_guard && problem.p > 2.0 {
        problem.g_max.min(exps.d_p * ops.h_min().powf(-exps.beta))
    } else {
        problem.g_max
    };
    let dt_min = 1e-15 * problem.t_max;
    let mut tb = TraceBuilder {
        mesh,
        beta: exps.beta,
        layer: mesh.boundary_layer_width,
        samples: Vec::new(),
        states: Vec::new(),
        keep_states: ctrl.keep_states,
        last_state_m: 0.0,
        last_m: 0.0,
    };
    let mut t = 0.0f64;
    let mut steps = 0u64;
    let mut next_sample_m = 0.0f64;
    let outcome = loop {
        let m = ops.eval(pow, &problem.h, &u, &mut grad, &mut rhs);
        if m >= g_stop {
            tb.record(t, m, &u, &grad, &rhs, true);
            break Outcome::BlewUp { t_stop: t };
        }
        if t >= problem.t_max {
            tb.record(t, m, &u, &grad, &rhs, true);
            break Outcome::ReachedHorizon;
        }
        if m >= next_sample_m || steps == 0 {
            tb.record(t, m, &u, &grad, &rhs, false);
            next_sample_m = (m * ctrl.sample_ratio).max(1e-12);
        }
        let mut dt = pick_dt(ctrl, ops.dt_diff(), ops.h_min(), problem.p, m);
        if t + dt > problem.t_max {
            dt = problem.t_max - t;
        }
        if dt < dt_min {
            tb.record(t, m, &u, &grad, &rhs, true);
            break Outcome::Underflow;
        }
        for i in 0..n {
            if !boundary[i] {
                u[i] += dt * rhs[i];
            }
        }
        t += dt;
        steps += 1;
    };
    let final_state = State {
        t,
        u: u.clone(),
        grad_mag: grad.clone(),
        u_t_field: rhs.clone(),
    };
    if ctrl.keep_states > 0 {
        tb.states.push(final_state.clone());
    }
    RunResult {
        trace: Trace {
            samples: tb.samples,
            outcome,
        },
        states: tb.states,
        final_state,
        steps,
        g_stop,
    }
}

/// Min over interior nodes of Δ_h u0 + |∇_h u0|^p + h; nonnegativity is
/// the sufficient criterion for a time-increasing (monotone) solution.
pub fn check_monotone_criterion(problem: &Problem, mesh: &Mesh) -> (bool, f64) {
    let rhs = discretize_rhs(problem, mesh, &problem.u0).expect("validated problem");
    let mut min_v = f64::INFINITY;
    for i in 0..mesh.n_nodes() {
        if !mesh.is_boundary(i) && rhs[i] < min_v {
            min_v = rhs[i];
        }
    }
    let scale = problem.h.iter().cloned().fold(1.0f64, f64::max);
    (min_v >= -1e-9 * scale, min_v)
}

/// Smallest amplitude A (doubling then bisection, 5% relative) such that
/// h = A h0 yields both the monotonicity criterion and blow-up before
/// t_max.
pub fn forcing_search(
    mesh: &Mesh,
    p: f64,
    h0: &[f64],
    u0: &[f64],
    t_max: f64,
    g_max: f64,
    a_max: f64,
) -> Result<f64, SolverError> {
    let try_a = |a: f64| -> Result<bool, SolverError> {
        let h: Vec<f64> = h0.iter().map(|&v| a * v).collect();
        let problem = Problem::new(mesh, p, h, u0.to_vec(), t_max, g_max)?;
        let (mono, _) = check_monotone_criterion(&problem, mesh);
        if !mono {
            return Ok(false);
        }
        let res = run(&problem, mesh, &StepControl::default());
        Ok(matches!(res.trace.outcome, Outcome::BlewUp { .. }))
    };
    let mut a = 1.0f64;
    let mut lo = 0.0f64;
    loop {
        if a > a_max {
            return Err(SolverError::NotFound { a_max });
        }
        if try_a(a)? {
            break;
        }
        lo = a;
        a *= 2.0;
    }
    let mut hi = a;
    while (hi - lo) / hi > 0.05 {
        let mid = 0.5 * (lo + hi);
        if try_a(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Manufactured-solution harness: integrates
/// u_t = Δu + [|∇u|^p if enabled] + source(x, t) on a line mesh up to
/// t_end. Time-dependent forcing exists only here, for convergence
/// studies; dt is capped at c h_min^2 so spatial error dominates.
pub fn run_manufactured<F: Fn(f64, f64) -> f64>(
    mesh: &Mesh,
    p: f64,
    u_init: &[f64],
    source: F,
    include_hamiltonian: bool,
    t_end: f64,
) -> Vec<f64> {
    let Grid::Line(line) = &mesh.grid else {
        panic!("manufactured runs use line meshes");
    };
    let x = line.coords.clone();
    let n = x.len();
    let ops = LineOps::build(mesh);
    let pow = PowKind::of(p);
    let mut u = u_init.to_vec();
    let mut grad = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let h0 = vec![0.0; n];
    let mut t = 0.0;
    while t < t_end {
        ops.eval(pow, &h0, &u, &mut grad, &mut rhs);
        let dt = (0.4 * ops.dt_diff).min(t_end - t);
        if dt <= 0.0 {
            break;
        }
        let lo = if line.left_is_boundary { 1 } else { 0 };
        for i in lo..n - 1 {
            let mut r = rhs[i];
            if !include_hamiltonian {
                r -= pow.abs_pow(grad[i]);
            }
            u[i] += dt * (r + source(x[i], t));
        }
        t += dt;
    }
    u
}
