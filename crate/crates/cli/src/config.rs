//! Run configuration: JSON schema for an experiment, plus field
//! construction from presets.

use gbu_core::geometry::{DomainSpec, Grid, Mesh};
use gbu_core::minimal::admissible_cubic;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub p: f64,
    pub mesh: MeshConfig,
    pub forcing: ForcingConfig,
    pub initial: InitialConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Output directory; falls back to $GBU_OUT_DIR, then ".".
    #[serde(default)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub cells: usize,
    pub grading: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    /// h(x) = amplitude everywhere.
    Constant { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Zero,
    /// First Dirichlet eigenfunction-like bump scaled by `amplitude`:
    /// sin(pi s) on an interval/annulus (s the normalized coordinate),
    /// cos(pi r / 2R) on a ball/disc.
    Sine { amplitude: f64 },
    /// amplitude * 64 s^3 (1-s)^3 on the normalized interval coordinate.
    AdmissibleCubic { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub t_max: f64,
    pub g_max: f64,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_sample_ratio")]
    pub sample_ratio: f64,
    #[serde(default)]
    pub keep_states: usize,
}

fn default_safety() -> f64 {
    0.4
}

fn default_sample_ratio() -> f64 {
    1.05
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Report the Bernstein boundary-layer profile of the final state.
    #[serde(default)]
    pub bernstein: bool,
    /// Fit the blow-up rate after the run and write ratefit.json.
    #[serde(default)]
    pub assert_rate: bool,
    #[serde(default = "default_rate_window")]
    pub rate_window_decades: f64,
}

fn default_rate_window() -> f64 {
    2.0
}

/// A scalar coordinate per node: x on line grids, r on polar grids.
pub fn node_positions(mesh: &Mesh) -> Vec<f64> {
    match &mesh.grid {
        Grid::Line(l) => l.coords.clone(),
        Grid::Polar(p) => {
            let mut r = Vec::with_capacity(mesh.n_nodes());
            r.push(0.0);
            for &ring in &p.rings {
                for _ in 0..p.n_theta {
                    r.push(ring);
                }
            }
            r
        }
    }
}

impl ForcingConfig {
    pub fn field(&self, mesh: &Mesh) -> Vec<f64> {
        match *self {
            ForcingConfig::Constant { amplitude } => vec![amplitude; mesh.n_nodes()],
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            ForcingConfig::Constant { amplitude } => amplitude,
        }
    }
}

impl InitialConfig {
    pub fn field(&self, mesh: &Mesh) -> Result<Vec<f64>, String> {
        let pi = std::f64::consts::PI;
        let pos = node_positions(mesh);
        match *self {
            InitialConfig::Zero => Ok(vec![0.0; mesh.n_nodes()]),
            InitialConfig::Sine { amplitude } => Ok(match mesh.spec {
                DomainSpec::Interval { a, b } => pos
                    .iter()
                    .map(|&x| amplitude * (pi * (x - a) / (b - a)).sin())
                    .collect(),
                DomainSpec::RadialAnnulus { r_in, r_out, .. } => pos
                    .iter()
                    .map(|&r| amplitude * (pi * (r - r_in) / (r_out - r_in)).sin())
                    .collect(),
                DomainSpec::RadialBall { radius, .. } | DomainSpec::Disc2D { radius } => pos
                    .iter()
                    .map(|&r| amplitude * (0.5 * pi * r / radius).cos())
                    .collect(),
            }),
            InitialConfig::AdmissibleCubic { amplitude } => match mesh.spec {
                DomainSpec::Interval { a, b } => Ok(pos
                    .iter()
                    .map(|&x| amplitude * admissible_cubic((x - a) / (b - a)))
                    .collect()),
                _ => Err("admissible_cubic initial data needs an interval domain".into()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gbu_core::geometry::build_mesh;

    fn sample_config() -> RunConfig {
        RunConfig {
            domain: DomainSpec::Interval { a: 0.0, b: 1.0 },
            p: 3.0,
            mesh: MeshConfig { cells: 64, grading: 1.5 },
            forcing: ForcingConfig::Constant { amplitude: 50.0 },
            initial: InitialConfig::Zero,
            solver: SolverConfig {
                t_max: 1.0,
                g_max: 1e6,
                safety: 0.4,
                sample_ratio: 1.05,
                keep_states: 0,
            },
            analysis: AnalysisConfig {
                bernstein: true,
                assert_rate: false,
                rate_window_decades: 2.0,
            },
            out_dir: None,
        }
    }

    #[test]
    fn json_round_trip_is_identity() {
        let cfg = sample_config();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut v: serde_json::Value =
            serde_json::to_value(sample_config()).unwrap();
        v["typo_field"] = serde_json::json!(1);
        assert!(serde_json::from_value::<RunConfig>(v).is_err());
    }

    #[test]
    fn initial_presets_vanish_on_boundary() {
        let mesh = build_mesh(DomainSpec::Interval { a: 0.0, b: 1.0 }, 32, 1.5).unwrap();
        for preset in [
            InitialConfig::Zero,
            InitialConfig::Sine { amplitude: 2.0 },
            InitialConfig::AdmissibleCubic { amplitude: 1.0 },
        ] {
            let u0 = preset.field(&mesh).unwrap();
            for &i in &mesh.boundary_nodes() {
                assert!(u0[i].abs() < 1e-12);
            }
        }
        let ball = build_mesh(DomainSpec::RadialBall { dim: 3, radius: 2.0 }, 32, 1.5).unwrap();
        let u0 = InitialConfig::Sine { amplitude: 1.0 }.field(&ball).unwrap();
        assert!(u0.last().unwrap().abs() < 1e-12);
        assert!(InitialConfig::AdmissibleCubic { amplitude: 1.0 }.field(&ball).is_err());
    }
}
