//! Domains, exact distance-to-boundary, and boundary-graded meshes.
//!
//! Only domains with an exact analytic distance function are supported:
//! 1D intervals, radial balls/annuli in n dimensions, and the 2D disc in
//! polar coordinates (for nonradial data). The gradient blows up like
//! d^{-beta} at the boundary, so meshes cluster nodes there via the
//! polynomial map xi -> xi^g (xi measured from the boundary).

use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Interval { a: f64, b: f64 },
    RadialBall { dim: u32, radius: f64 },
    RadialAnnulus { dim: u32, r_in: f64, r_out: f64 },
    Disc2D { radius: f64 },
}

impl DomainSpec {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = match *self {
            DomainSpec::Interval { a, b } => a < b && a.is_finite() && b.is_finite(),
            DomainSpec::RadialBall { dim, radius } => dim >= 1 && radius > 0.0,
            DomainSpec::RadialAnnulus { dim, r_in, r_out } => {
                dim >= 1 && r_in > 0.0 && r_in < r_out
            }
            DomainSpec::Disc2D { radius } => radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidDomain(format!("{self:?}")))
        }
    }

    /// Inradius: the largest distance-to-boundary attained in the domain.
    pub fn inradius(&self) -> f64 {
        match *self {
            DomainSpec::Interval { a, b } => 0.5 * (b - a),
            DomainSpec::RadialBall { radius, .. } => radius,
            DomainSpec::RadialAnnulus { r_in, r_out, .. } => 0.5 * (r_out - r_in),
            DomainSpec::Disc2D { radius } => radius,
        }
    }

    /// Exact distance to the boundary at radial/linear coordinate `x`
    /// (position for intervals, radius otherwise).
    pub fn dist(&self, x: f64) -> f64 {
        match *self {
            DomainSpec::Interval { a, b } => (x - a).min(b - x),
            DomainSpec::RadialBall { radius, .. } => radius - x,
            DomainSpec::RadialAnnulus { r_in, r_out, .. } => (x - r_in).min(r_out - x),
            DomainSpec::Disc2D { radius } => radius - x,
        }
    }
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("mesh too coarse: {cells} cells (need >= 8)")]
    TooCoarse { cells: usize },
}

/// 1D line of nodes: an interval, or the radial coordinate of a
/// ball/annulus. Coordinates are strictly increasing.
#[derive(Debug, Clone)]
pub struct LineGrid {
    pub coords: Vec<f64>,
    /// Spatial dimension carried by the radial Laplacian term.
    pub dim: u32,
    /// Whether coords[0] is a Dirichlet boundary node (false for the
    /// regular center r = 0 of a ball).
    pub left_is_boundary: bool,
}

/// Polar tensor grid on the disc: a single shared center node plus
/// `rings.len()` rings of `n_theta` nodes each. Node 0 is the center;
/// node 1 + j*n_theta + k sits at (rings[j], theta_k). The outermost ring
/// is the Dirichlet boundary.
#[derive(Debug, Clone)]
pub struct PolarGrid {
    pub radius: f64,
    pub rings: Vec<f64>,
    pub n_theta: usize,
}

impl PolarGrid {
    pub fn node(&self, ring: usize, k: usize) -> usize {
        1 + ring * self.n_theta + k
    }
    pub fn theta(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.n_theta as f64
    }
}

#[derive(Debug, Clone)]
pub enum Grid {
    Line(LineGrid),
    Polar(PolarGrid),
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub spec: DomainSpec,
    pub grading_exponent: f64,
    /// Default evaluation layer {d < delta} for boundary estimates.
    pub boundary_layer_width: f64,
    pub grid: Grid,
    dist: Vec<f64>,
}

/// Graded offsets from a boundary: (i/n)^g * half for i = 0..=n.
fn graded_offsets(n: usize, g: f64, half: f64) -> Vec<f64> {
    (0..=n)
        .map(|i| (i as f64 / n as f64).powf(g) * half)
        .collect()
}

pub fn build_mesh(
    spec: DomainSpec,
    cells_per_direction: usize,
    grading_exponent: f64,
) -> Result<Mesh, GeometryError> {
    spec.validate()?;
    if cells_per_direction < 8 {
        return Err(GeometryError::TooCoarse {
            cells: cells_per_direction,
        });
    }
    if !(1.0..=4.0).contains(&grading_exponent) {
        return Err(GeometryError::InvalidDomain(format!(
            "grading exponent {grading_exponent} outside [1, 4]"
        )));
    }
    let n = cells_per_direction;
    let g = grading_exponent;
    let grid = match spec {
        DomainSpec::Interval { a, b } | DomainSpec::RadialAnnulus { r_in: a, r_out: b, .. } => {
            // Two Dirichlet ends: grade each half toward its boundary.
            if n % 2 != 0 {
                return Err(GeometryError::InvalidDomain(format!(
                    "two-sided domain needs an even cell count, got {n}"
                )));
            }
            let half = 0.5 * (b - a);
            let off = graded_offsets(n / 2, g, half);
            let mut coords: Vec<f64> = off.iter().map(|&o| a + o).collect();
            for &o in off.iter().rev().skip(1) {
                coords.push(b - o);
            }
            let dim = match spec {
                DomainSpec::RadialAnnulus { dim, .. } => dim,
                _ => 1,
            };
            Grid::Line(LineGrid {
                coords,
                dim,
                left_is_boundary: true,
            })
        }
        DomainSpec::RadialBall { dim, radius } => {
            // Boundary only at r = R; grade toward it, center is regular.
            let off = graded_offsets(n, g, radius);
            let coords: Vec<f64> = off.iter().rev().map(|&o| radius - o).collect();
            Grid::Line(LineGrid {
                coords,
                dim,
                left_is_boundary: false,
            })
        }
        DomainSpec::Disc2D { radius } => {
            let off = graded_offsets(n, g, radius);
            let rings: Vec<f64> = off.iter().take(n).rev().map(|&o| radius - o).collect();
            Grid::Polar(PolarGrid {
                radius,
                rings,
                n_theta: n,
            })
        }
    };
    let mut mesh = Mesh {
        spec,
        grading_exponent,
        boundary_layer_width: 0.2 * spec.inradius(),
        grid,
        dist: Vec::new(),
    };
    mesh.dist = distance_field(&mesh);
    Ok(mesh)
}

/// Exact analytic distance to the boundary at every node.
pub fn distance_field(mesh: &Mesh) -> Vec<f64> {
    match &mesh.grid {
        Grid::Line(line) => line.coords.iter().map(|&x| mesh.spec.dist(x)).collect(),
        Grid::Polar(polar) => {
            let mut d = Vec::with_capacity(mesh_polar_nodes(polar));
            d.push(polar.radius);
            for &r in &polar.rings {
                for _ in 0..polar.n_theta {
                    d.push(polar.radius - r);
                }
            }
            d
        }
    }
}

fn mesh_polar_nodes(p: &PolarGrid) -> usize {
    1 + p.rings.len() * p.n_theta
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        match &self.grid {
            Grid::Line(l) => l.coords.len(),
            Grid::Polar(p) => mesh_polar_nodes(p),
        }
    }

    /// Exact distance to the boundary, per node.
    pub fn dist(&self) -> &[f64] {
        &self.dist
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        match &self.grid {
            Grid::Line(l) => (i == 0 && l.left_is_boundary) || i == l.coords.len() - 1,
            Grid::Polar(p) => i >= p.node(p.rings.len() - 1, 0),
        }
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| self.is_boundary(i)).collect()
    }

    /// Smallest cell width (radial direction for the disc).
    pub fn h_min(&self) -> f64 {
        match &self.grid {
            Grid::Line(l) => l
                .coords
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min),
            Grid::Polar(p) => {
                let mut h = p.rings[0];
                for w in p.rings.windows(2) {
                    h = h.min(w[1] - w[0]);
                }
                h
            }
        }
    }

    /// For each boundary node, the node indices along the inward normal,
    /// starting at the boundary node itself.
    pub fn inward_normal_lines(&self) -> Vec<Vec<usize>> {
        match &self.grid {
            Grid::Line(l) => {
                let n = l.coords.len();
                let mut lines = Vec::new();
                if l.left_is_boundary {
                    lines.push((0..n).collect());
                }
                lines.push((0..n).rev().collect());
                lines
            }
            Grid::Polar(p) => {
                let nr = p.rings.len();
                (0..p.n_theta)
                    .map(|k| {
                        let mut line: Vec<usize> =
                            (0..nr).rev().map(|j| p.node(j, k)).collect();
                        line.push(0);
                        line
                    })
                    .collect()
            }
        }
    }

    /// CSV dump: (index, coordinate(s), dist, cell_width).
    pub fn dump_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        match &self.grid {
            Grid::Line(l) => {
                writeln!(out, "index,x,dist,cell_width")?;
                for (i, &x) in l.coords.iter().enumerate() {
                    let w = if i + 1 < l.coords.len() {
                        l.coords[i + 1] - x
                    } else {
                        0.0
                    };
                    writeln!(out, "{i},{x:.17e},{:.17e},{w:.17e}", self.dist[i])?;
                }
            }
            Grid::Polar(p) => {
                writeln!(out, "index,r,theta,dist,cell_width")?;
                writeln!(out, "0,0.0,0.0,{:.17e},{:.17e}", self.dist[0], p.rings[0])?;
                for (j, &r) in p.rings.iter().enumerate() {
                    let w = if j + 1 < p.rings.len() {
                        p.rings[j + 1] - r
                    } else {
                        0.0
                    };
                    for k in 0..p.n_theta {
                        let i = p.node(j, k);
                        writeln!(
                            out,
                            "{i},{r:.17e},{:.17e},{:.17e},{w:.17e}",
                            p.theta(k),
                            self.dist[i]
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}
