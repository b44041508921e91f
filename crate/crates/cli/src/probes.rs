//! Named initial conditions used as evaluation points.

use std::f64::consts::PI;

use dhg::oracle::grid_from_fn;
use dhg::spectral::TWO_PI;
use dhg::{Basis, HVec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const NAMES: [&str; 8] = [
    "zero",
    "sin1",
    "sin2",
    "sin3",
    "parabola",
    "one-minus-cos",
    "one-minus-cos2",
    "const-invsqrt2pi",
];

/// A probe as written in a config: a name from [`NAMES`] or an inline sparse vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbeSpec {
    Named(String),
    Inline { name: String, coeffs: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    Function(&'static str),
    Coefficients { name: String, coeffs: HVec },
}

impl Probe {
    pub fn parse(spec: &ProbeSpec, modes: usize) -> CliResult<Self> {
        match spec {
            ProbeSpec::Named(name) => Self::named(name),
            ProbeSpec::Inline { name, coeffs } => Ok(Probe::Coefficients {
                name: name.clone(),
                coeffs: HVec::parse_sparse_csv(coeffs, modes)?,
            }),
        }
    }

    pub fn named(name: &str) -> CliResult<Self> {
        NAMES
            .iter()
            .find(|n| **n == name)
            .map(|n| Probe::Function(n))
            .ok_or_else(|| CliError::config("probes", format!("unknown probe `{name}`; known: {}", NAMES.join(", "))))
    }

    pub fn name(&self) -> &str {
        match self {
            Probe::Function(n) => n,
            Probe::Coefficients { name, .. } => name,
        }
    }

    fn function(name: &str, xi: f64) -> f64 {
        match name {
            "zero" => 0.0,
            "sin1" => xi.sin() / PI.sqrt(),
            "sin2" => (2.0 * xi).sin() / PI.sqrt(),
            "sin3" => (3.0 * xi).sin() / PI.sqrt(),
            "parabola" => xi * (TWO_PI - xi) / TWO_PI,
            "one-minus-cos" => 1.0 - xi.cos(),
            "one-minus-cos2" => 1.0 - (2.0 * xi).cos(),
            "const-invsqrt2pi" => 1.0 / TWO_PI.sqrt(),
            _ => unreachable!("probe names are validated on construction"),
        }
    }

    /// The first `modes` sine coefficients.
    pub fn coefficients(&self, modes: usize) -> CliResult<HVec> {
        match self {
            Probe::Function(name) => {
                let basis = Basis::new(modes.max(1))?;
                // extra panels keep the discontinuous constant accurate at high modes
                let panels = 16 * modes.max(256);
                Ok(basis.project_function_with_panels(|xi| Self::function(name, xi), modes, panels)?)
            }
            Probe::Coefficients { coeffs, .. } => Ok(coeffs.resized(modes)),
        }
    }

    /// Nodal values on a uniform grid with the endpoints pinned to 0.
    pub fn grid(&self, points: usize) -> Vec<f64> {
        match self {
            Probe::Function(name) => grid_from_fn(|xi| Self::function(name, xi), points),
            Probe::Coefficients { coeffs, .. } => grid_from_fn(|xi| coeffs.eval_at(xi), points),
        }
    }
}
