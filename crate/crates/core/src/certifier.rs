//! Numerical certification of the closed-form inequality algebra behind
//! the rate argument: the F/G case analysis over parameter grids, the
//! Young-inequality step, the supersolution ODE of the Bernstein
//! estimate, and the parabolic-operator identity for weights u^a d^b.
//!
//! Grid sampling with convexity side-checks, not interval arithmetic:
//! every family is a low-dimensional polynomial / power expression, so a
//! dense grid plus second-difference convexity gives practical certainty.
//! "Sufficiently small" remainders are never expanded symbolically; the
//! full expressions are evaluated as written.

use crate::geometry::{build_mesh, DomainSpec, Grid, Mesh};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertifierError {
    #[error("singular weight: b = {b} < 0 evaluated at a boundary node")]
    SingularWeight { b: f64 },
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("operator identity requires a 1D line mesh")]
    UnsupportedMesh,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamGrid {
    pub p_values: Vec<f64>,
    /// Absolute kappa values, used as-is when inside (0, p-2).
    pub kappa_abs: Vec<f64>,
    /// Relative kappa values, taken as fractions of (p-2).
    pub kappa_frac: Vec<f64>,
    pub x_values: Vec<f64>,
    pub s_values: Vec<f64>,
}

impl ParamGrid {
    pub fn default_grid() -> Self {
        let x_values = (0..401).map(|k| 5.0 * k as f64 / 400.0).collect();
        let s_values = (0..200)
            .map(|k| 10f64.powf(-4.0 + 4.0 * k as f64 / 199.0))
            .collect();
        ParamGrid {
            p_values: vec![2.1, 2.25, 2.5, 2.75, 3.0],
            kappa_abs: vec![1e-3, 1e-2],
            kappa_frac: vec![0.05, 0.1],
            x_values,
            s_values,
        }
    }

    /// Negative-control grid: the default plus an extra p (e.g. 3.2).
    pub fn with_extra_p(mut self, p: f64) -> Self {
        self.p_values.push(p);
        self
    }

    pub fn kappas(&self, p: f64) -> Vec<f64> {
        let mut ks: Vec<f64> = self
            .kappa_abs
            .iter()
            .cloned()
            .chain(self.kappa_frac.iter().map(|&f| f * (p - 2.0)))
            .filter(|&k| k > 0.0 && k < p - 2.0)
            .collect();
        ks.sort_by(f64::total_cmp);
        ks.dedup();
        ks
    }

    pub fn validate(&self) -> Result<(), CertifierError> {
        if self.p_values.is_empty() || self.x_values.is_empty() || self.s_values.is_empty() {
            return Err(CertifierError::EmptyGrid);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub family: String,
    pub worst_margin: f64,
    pub worst_point: Vec<(String, f64)>,
    pub pass: bool,
}

/// Pass threshold per family: margins are normalized so that
/// worst_margin >= -margin_for(family) certifies the family.
pub fn margin_for(family: &str) -> f64 {
    match family {
        "f_identities" | "young_step" => 1e-12,
        _ => 1e-10,
    }
}

struct Worst {
    margin: f64,
    point: Vec<(String, f64)>,
}

impl Worst {
    fn new() -> Self {
        Worst { margin: f64::INFINITY, point: Vec::new() }
    }
    fn update(&mut self, margin: f64, point: &[(&str, f64)]) {
        if margin < self.margin {
            self.margin = margin;
            self.point = point.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        }
    }
    fn cert(self, family: &str) -> Certificate {
        let pass = self.margin >= -margin_for(family);
        Certificate {
            family: family.to_string(),
            worst_margin: self.margin,
            worst_point: self.point,
            pass,
        }
    }
}

/// F(X) = (p-1-s)(p-2-s)X^2 - 2(p-1-s)(p-2-k)X + (p-1-k)(p-2-k).
fn f_quad(p: f64, sigma: f64, kappa: f64, x: f64) -> f64 {
    (p - 1.0 - sigma) * (p - 2.0 - sigma) * x * x
        - 2.0 * (p - 1.0 - sigma) * (p - 2.0 - kappa) * x
        + (p - 1.0 - kappa) * (p - 2.0 - kappa)
}

/// Case-2 normalized quadratic G(X).
fn g_fun(p: f64, sigma: f64, kappa: f64, eta: f64, x: f64) -> f64 {
    x * x - 2.0 * (p - 2.0 - kappa) / (p - 2.0 - sigma) * x
        + (p - 1.0 - kappa) * (p - 2.0 - kappa) / ((p - 1.0 - sigma) * (p - 2.0 - sigma))
        + (1.0 + eta) / (p - 1.0)
            * ((p - 1.0) / (p - 2.0 - sigma) * x
                - p / (p - 1.0 - sigma) * (p - 2.0 - kappa) / (p - 2.0 - sigma))
}

/// Case-3 lower envelope after the Young step.
fn tilde_p0(p: f64, sigma: f64, kappa: f64, eta: f64, x: f64) -> f64 {
    f_quad(p, sigma, kappa, x)
        - (1.0 + eta) * (p - 2.0 - kappa) / (p - 1.0)
            * (((p - 2.0 - kappa) * (p - 1.0)) / ((p - 1.0 - sigma) * (p - 2.0))).powf(p - 1.0)
}

/// F-identities: the sigma = kappa perfect-square form and the sigma = 0
/// infimum, both as relative mismatches.
pub fn check_f_identities(grid: &ParamGrid) -> Certificate {
    let mut w = Worst::new();
    for &p in &grid.p_values {
        for kappa in grid.kappas(p) {
            for &x in &grid.x_values {
                // sigma = kappa: F = (p-1-k)(p-2-k)(X-1)^2.
                let f = f_quad(p, kappa, kappa, x);
                let closed = (p - 1.0 - kappa) * (p - 2.0 - kappa) * (x - 1.0) * (x - 1.0);
                let scale = closed.abs().max(1.0);
                w.update(
                    -((f - closed).abs() / scale),
                    &[("p", p), ("kappa", kappa), ("x", x), ("which", 1.0)],
                );
                // sigma = 0: F >= kappa (p-2-kappa)/(p-2).
                let inf = kappa * (p - 2.0 - kappa) / (p - 2.0);
                let f0 = f_quad(p, 0.0, kappa, x);
                w.update(
                    f0 - inf,
                    &[("p", p), ("kappa", kappa), ("x", x), ("which", 2.0)],
                );
            }
            // Equality at the analytic minimizer X* = (p-2-kappa)/(p-2).
            let xs = (p - 2.0 - kappa) / (p - 2.0);
            let inf = kappa * (p - 2.0 - kappa) / (p - 2.0);
            w.update(
                -(f_quad(p, 0.0, kappa, xs) - inf).abs(),
                &[("p", p), ("kappa", kappa), ("x", xs), ("which", 3.0)],
            );
        }
    }
    w.cert("f_identities")
}

/// Lower bound asserted in each sub-case (absolute, on the stated
/// quantity) together with its eta choice and evaluation region.
struct CaseSpec {
    name: &'static str,
    sigma_eq_kappa: bool,
    region_upper: bool, // Sigma_2 (X >= X*) vs Sigma_3 (X <= X*)
}

const CASES: [CaseSpec; 6] = [
    CaseSpec { name: "case_2_1", sigma_eq_kappa: true, region_upper: true },
    CaseSpec { name: "case_2_2", sigma_eq_kappa: true, region_upper: true },
    CaseSpec { name: "case_2_3", sigma_eq_kappa: false, region_upper: true },
    CaseSpec { name: "case_3_1", sigma_eq_kappa: true, region_upper: false },
    CaseSpec { name: "case_3_2", sigma_eq_kappa: true, region_upper: false },
    CaseSpec { name: "case_3_3", sigma_eq_kappa: false, region_upper: false },
];

/// One certificate per sub-case of the X-partition, with the eta choices
/// used in the argument (eta = kappa/(2(p-1)(p-2)) when sigma = kappa,
/// eta = kappa/(2(p-2)) when sigma = 0; eta = 0 in the kappa = 0 cases).
///
/// Each certificate combines convexity (second differences >= 0), the
/// hinge value/derivative at X* = (p-2)/(p-1), and the stated lower
/// bound. For p > 3 the derivative (3-p)/((p-1)(p-2)) at the hinge goes
/// negative and case 2.1 fails — the intended negative control.
pub fn check_case_inequalities(grid: &ParamGrid) -> Vec<Certificate> {
    CASES
        .iter()
        .map(|case| {
            let mut w = Worst::new();
            for &p in &grid.p_values {
                let xs = (p - 2.0) / (p - 1.0);
                let kappas: Vec<f64> = if case.name.ends_with("_1") {
                    vec![0.0]
                } else {
                    grid.kappas(p)
                };
                for kappa in kappas {
                    let (sigma, eta) = if kappa == 0.0 {
                        (0.0, 0.0)
                    } else if case.sigma_eq_kappa {
                        (kappa, kappa / (2.0 * (p - 1.0) * (p - 2.0)))
                    } else {
                        (0.0, kappa / (2.0 * (p - 2.0)))
                    };
                    let pt = |x: f64, which: f64| {
                        [("p", p), ("kappa", kappa), ("x", x), ("which", which)]
                    };
                    if case.region_upper {
                        // Sigma_2 checks work on G.
                        let bound = match case.name {
                            "case_2_1" => 0.0,
                            "case_2_2" => kappa / (3.0 * (p - 1.0).powi(3) * (p - 2.0)),
                            _ => kappa / (2.0 * (p - 1.0).powi(2) * (p - 2.0)),
                        };
                        // Hinge value: identity G(X*) = 0 in case 2.1,
                        // >= bound otherwise.
                        let gx = g_fun(p, sigma, kappa, eta, xs);
                        if case.name == "case_2_1" {
                            w.update(-gx.abs(), &pt(xs, 1.0));
                        } else {
                            w.update(gx - bound, &pt(xs, 1.0));
                        }
                        // Hinge derivative: G'(X*) >= (3-p)/((p-1)(p-2)),
                        // which itself must be >= 0 (the p <= 3 hinge).
                        let gp =
                            2.0 * xs - 2.0 * (p - 2.0 - kappa) / (p - 2.0 - sigma)
                                + (1.0 + eta) / (p - 2.0 - sigma);
                        let hinge = (3.0 - p) / ((p - 1.0) * (p - 2.0));
                        w.update(gp - hinge, &pt(xs, 2.0));
                        w.update(hinge, &pt(xs, 3.0));
                        // Convexity (exact: leading coefficient 1) and the
                        // bound on the grid portion of Sigma_2.
                        for &x in grid.x_values.iter().filter(|&&x| x >= xs) {
                            w.update(g_fun(p, sigma, kappa, eta, x) - bound, &pt(x, 4.0));
                        }
                        for win in grid.x_values.windows(3) {
                            let dd = g_fun(p, sigma, kappa, eta, win[2])
                                - 2.0 * g_fun(p, sigma, kappa, eta, win[1])
                                + g_fun(p, sigma, kappa, eta, win[0]);
                            w.update(dd, &pt(win[1], 5.0));
                        }
                    } else {
                        // Sigma_3 checks work on tilde P_0 (and F in 3.3).
                        let bound = match case.name {
                            "case_3_1" => 0.0,
                            "case_3_2" => kappa / (6.0 * (p - 1.0).powi(2)),
                            _ => 0.0, // 3.3 asserts the F bound below
                        };
                        for x in grid
                            .x_values
                            .iter()
                            .cloned()
                            .filter(|&x| x <= xs)
                            .chain(std::iter::once(xs))
                        {
                            w.update(tilde_p0(p, sigma, kappa, eta, x) - bound, &pt(x, 1.0));
                            if case.name == "case_3_3" {
                                // F(X) >= (p-2)/(p-1) - kappa on Sigma_3.
                                let fb = xs - kappa;
                                w.update(f_quad(p, 0.0, kappa, x) - fb, &pt(x, 2.0));
                            }
                        }
                        // Convexity of F (second difference >= 0).
                        for win in grid.x_values.windows(3) {
                            let dd = f_quad(p, sigma, kappa, win[2])
                                - 2.0 * f_quad(p, sigma, kappa, win[1])
                                + f_quad(p, sigma, kappa, win[0]);
                            w.update(dd, &pt(win[1], 3.0));
                        }
                    }
                }
            }
            w.cert(case.name)
        })
        .collect()
}

/// Young split d G^{p-1} <= ((p-1)/p) theta^{p/(p-1)} d^2 G^p / u
/// + (1/p) d^{2-p} u^{p-1} / theta^p, with theta as chosen in the
/// argument, sigma in {0, kappa}. Also checks that this theta equalizes
/// the first Young term against the (p-1-sigma)(p-1) d^2 G^p / u budget:
/// p(p-2-kappa) ((p-1)/p) theta^{p/(p-1)} = (p-1)(p-1-sigma).
pub fn check_young_step(grid: &ParamGrid) -> Certificate {
    let mut w = Worst::new();
    let samples: Vec<f64> = (0..7).map(|k| 10f64.powf(-3.0 + k as f64)).collect();
    for &p in &grid.p_values {
        for kappa in grid.kappas(p) {
            for &sigma in &[0.0, kappa] {
                let theta = ((p - 1.0 - sigma) / (p - 2.0 - kappa)).powf((p - 1.0) / p);
                // Coefficient combination identity.
                let combo = p * (p - 2.0 - kappa) * ((p - 1.0) / p) * theta.powf(p / (p - 1.0));
                let target = (p - 1.0) * (p - 1.0 - sigma);
                w.update(
                    -((combo - target).abs() / target),
                    &[("p", p), ("kappa", kappa), ("which", 0.0)],
                );
                for &thet in &[theta, 2.0 * theta] {
                    for &d in &samples {
                        for &g in &samples {
                            for &u in &samples {
                                let lhs = d * g.powf(p - 1.0);
                                let rhs = (p - 1.0) / p * thet.powf(p / (p - 1.0)) * d * d
                                    * g.powf(p)
                                    / u
                                    + d.powf(2.0 - p) * u.powf(p - 1.0) / (p * thet.powf(p));
                                w.update(
                                    (rhs - lhs) / lhs.max(1e-300),
                                    &[("p", p), ("d", d), ("g", g), ("u", u)],
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    w.cert("young_step")
}

/// Supersolution w(s) = d_p s^{-beta} + M s^{-gamma} of the normal-
/// direction ODE: w' + w^p >= M (beta+1-gamma) s^{-1-gamma}, using the
/// exact cancellation beta d_p = d_p^p (so M = 0 gives w' + w^p = 0).
pub fn check_supersolution_ode(grid: &ParamGrid, m_values: &[f64]) -> Certificate {
    let mut w = Worst::new();
    for &p in &grid.p_values {
        let beta = 1.0 / (p - 1.0);
        let d_p = (p - 1.0).powf(-beta);
        // Exact cancellation at arbitrary s.
        for &s in &[1e-4f64, 1e-2, 0.37, 1.0] {
            let lhs = -beta * d_p * s.powf(-1.0 - beta) + d_p.powf(p) * s.powf(-p * beta);
            let scale = beta * d_p * s.powf(-1.0 - beta);
            w.update(-(lhs.abs() / scale), &[("p", p), ("s", s), ("which", 0.0)]);
        }
        for &gamma_frac in &[0.55, 0.75, 1.0] {
            let gamma = gamma_frac * beta; // in (beta/2, beta]
            for &m in m_values {
                for &s in &grid.s_values {
                    let wv = d_p * s.powf(-beta) + m * s.powf(-gamma);
                    let wp = -beta * d_p * s.powf(-1.0 - beta) - m * gamma * s.powf(-1.0 - gamma);
                    let claim = m * (beta + 1.0 - gamma) * s.powf(-1.0 - gamma);
                    let scale = wp.abs().max(1.0);
                    w.update(
                        (wp + wv.powf(p) - claim) / scale,
                        &[("p", p), ("gamma", gamma), ("m", m), ("s", s)],
                    );
                }
            }
        }
    }
    w.cert("supersolution_ode")
}

/// Analytic data for the operator-identity check: a smooth positive
/// profile and forcing on (0,1), with u_t defined by the PDE residual.
pub struct ManufacturedField<'a> {
    pub p: f64,
    pub u: &'a dyn Fn(f64) -> f64,
    pub h: &'a dyn Fn(f64) -> f64,
}

/// Default manufactured profile: the exact boundary profile perturbed by
/// a linear term, u = c_p d^{1-beta} + amp d.
pub fn perturbed_profile(p: f64, amp: f64) -> impl Fn(f64) -> f64 {
    let beta = 1.0 / (p - 1.0);
    let c_p = (p - 1.0) / (p - 2.0) * (p - 1.0).powf(-beta);
    move |x: f64| {
        let d = x.min(1.0 - x);
        c_p * d.powf(1.0 - beta) + amp * d
    }
}

/// Compare the discrete evaluation of -P(u^a d^b)/(u^a d^{b-2}) against
/// the closed form, over the window d in [0.1, 0.4] near the left
/// boundary; worst_margin is minus the max relative mismatch.
pub fn check_operator_identity(
    field: &ManufacturedField,
    a: f64,
    b: f64,
    mesh: &Mesh,
) -> Result<Certificate, CertifierError> {
    let Grid::Line(line) = &mesh.grid else {
        return Err(CertifierError::UnsupportedMesh);
    };
    let x = &line.coords;
    let n = x.len();
    let p = field.p;
    let u: Vec<f64> = x.iter().map(|&v| (field.u)(v)).collect();
    let h: Vec<f64> = x.iter().map(|&v| (field.h)(v)).collect();
    let d: Vec<f64> = x.iter().map(|&v| v.min(1.0 - v)).collect();
    // phi = u^a d^b is singular on the boundary for b < 0; the
    // evaluation window [0.1, 0.4] must stay clear of it, stencils
    // included. A too-coarse mesh would let the window touch d = 0.
    if b < 0.0 && x.len() < 8 {
        return Err(CertifierError::SingularWeight { b });
    }
    let phi: Vec<f64> = (0..n)
        .map(|i| {
            if d[i] == 0.0 {
                0.0
            } else {
                u[i].powf(a) * d[i].powf(b)
            }
        })
        .collect();
    let stencil = |f: &[f64], i: usize| -> (f64, f64) {
        let hl = x[i] - x[i - 1];
        let hr = x[i + 1] - x[i];
        let grad = -hr / (hl * (hl + hr)) * f[i - 1]
            + (hr - hl) / (hl * hr) * f[i]
            + hl / (hr * (hl + hr)) * f[i + 1];
        let lap = 2.0 / (hl * (hl + hr)) * f[i - 1] - 2.0 / (hl * hr) * f[i]
            + 2.0 / (hr * (hl + hr)) * f[i + 1];
        (grad, lap)
    };
    let mut w = Worst::new();
    for i in 1..n - 1 {
        if !(x[i] >= 0.1 && x[i] <= 0.4) {
            continue;
        }
        let (ux, uxx) = stencil(&u, i);
        let (phix, phixx) = stencil(&phi, i);
        let g = ux.abs();
        let ut = uxx + g.powf(p) + h[i];
        let phit = a * u[i].powf(a - 1.0) * d[i].powf(b) * ut;
        // P phi = phi_t - Δphi - p |∇u|^{p-2} ∇u · ∇phi.
        let p_phi = phit - phixx - p * g.powf(p - 2.0) * ux * phix;
        let lhs = -p_phi / (u[i].powf(a) * d[i].powf(b - 2.0));
        // Closed form: near the left boundary d = x, ∇d = 1, Δd = 0.
        let rhs = a
            * ((p - 1.0) * d[i] * d[i] * g.powf(p) / u[i]
                + (a - 1.0) * (d[i] * g / u[i]).powi(2)
                - h[i] * d[i] * d[i] / u[i]
                + 2.0 * b * d[i] / u[i] * ux)
            + b * (p * d[i] * g.powf(p - 2.0) * ux + (b - 1.0));
        let scale = rhs.abs().max(1.0);
        w.update(-((lhs - rhs).abs() / scale), &[("x", x[i])]);
    }
    let mut cert = w.cert("operator_identity");
    // Pass for a single mesh means "mismatch small at this resolution";
    // the convergence order across refinements is the real assertion and
    // is computed by operator_identity_order.
    cert.pass = cert.worst_margin > -0.05;
    Ok(cert)
}

/// Refinement study of the operator identity on uniform meshes; returns
/// (minimum observed order between successive refinements, mismatches).
pub fn operator_identity_order(
    field: &ManufacturedField,
    a: f64,
    b: f64,
    resolutions: &[usize],
) -> (f64, Vec<f64>) {
    let errs: Vec<f64> = resolutions
        .iter()
        .map(|&cells| {
            let mesh = build_mesh(DomainSpec::Interval { a: 0.0, b: 1.0 }, cells, 1.0).unwrap();
            let cert = check_operator_identity(field, a, b, &mesh).unwrap();
            -cert.worst_margin
        })
        .collect();
    let order = errs
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min);
    (order, errs)
}

/// All deterministic certificate families on one grid (the operator
/// identity is mesh-convergent and reported separately).
pub fn certify_all(grid: &ParamGrid, m_values: &[f64]) -> Vec<Certificate> {
    let mut certs = vec![check_f_identities(grid)];
    certs.extend(check_case_inequalities(grid));
    certs.push(check_young_step(grid));
    certs.push(check_supersolution_ode(grid, m_values));
    certs
}
