//! Compute budgets, kept apart from the scenario file.

use std::path::Path;

use feller_core::{ClassifyPolicy, DiagnosticConfig, DiagnosticPolicy, QuadratureSpec, SimulationConfig, TestFunction};
use serde::{Deserialize, Serialize};

use crate::error::LabError;

pub const SEED_ENV: &str = "FELLER_LAB_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub simulation: SimulationConfig,
    pub diagnostics: DiagnosticPolicy,
    pub quadrature: QuadratureSpec,
    pub classify: ClassifyPolicy,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: 1,
            simulation: SimulationConfig { n_paths: 2000, master_seed: 1, ..Default::default() },
            diagnostics: DiagnosticPolicy::default(),
            quadrature: QuadratureSpec::default(),
            classify: ClassifyPolicy::default(),
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionSpec {
    Bump { center: Vec<f64>, radius: f64 },
    Plateau { center: Vec<f64>, inner: f64, outer: f64 },
    Lyapunov,
}

impl TestFunctionSpec {
    pub fn build(&self, d: usize) -> Result<TestFunction, LabError> {
        let check = |c: &Vec<f64>| {
            if c.len() != d {
                Err(LabError::Schema {
                    path: "probe.test_function.center".into(),
                    message: format!("expected length {d}"),
                })
            } else {
                Ok(())
            }
        };
        Ok(match self {
            Self::Bump { center, radius } => {
                check(center)?;
                TestFunction::bump(center.clone(), *radius)?
            }
            Self::Plateau { center, inner, outer } => {
                check(center)?;
                TestFunction::plateau(center.clone(), *inner, *outer)?
            }
            Self::Lyapunov => TestFunction::lyapunov(d),
        })
    }
}

/// Probe parameters; coordinates are along the first axis of the state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub x0: Option<Vec<f64>>,
    pub t: f64,
    pub big_r: f64,
    pub x_grid: Vec<f64>,
    pub t_list: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub dynkin_r: f64,
    pub test_function: Option<TestFunctionSpec>,
    pub fit_range: (f64, f64),
    pub pairs: Vec<(f64, f64)>,
    /// Radii of the growth table in `profile` and `report`.
    pub growth_radii: Vec<f64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            x0: None,
            t: 1.0,
            big_r: 1.0,
            x_grid: vec![10.0, 100.0, 1000.0],
            t_list: vec![1.0, 0.5, 0.25, 0.125, 0.0],
            t_grid: vec![0.25, 0.5, 0.75, 1.0],
            dynkin_r: 0.5,
            test_function: None,
            fit_range: (1.0, 1e3),
            pairs: vec![(0.5, 0.5), (1.0, 0.5), (2.0, 1.0), (5.0, 1.0), (10.0, 1.0)],
            growth_radii: vec![1.0, 10.0, 100.0, 1e3, 1e4],
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, LabError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| crate::error::io_err(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, LabError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let c: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| LabError::Schema { path: e.path().to_string(), message: e.into_inner().to_string() })?;
        if c.schema_version != 1 {
            return Err(LabError::Schema { path: "schema_version".into(), message: "expected 1".into() });
        }
        Ok(c)
    }

    /// Seed precedence: command line, then the environment, then the file.
    pub fn resolve_seed(&mut self, cli: Option<u64>) -> Result<(), LabError> {
        if let Some(s) = cli {
            self.simulation.master_seed = s;
        } else if let Ok(v) = std::env::var(SEED_ENV) {
            self.simulation.master_seed = v
                .trim()
                .parse()
                .map_err(|_| LabError::Usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'")))?;
        }
        Ok(())
    }

    pub fn diagnostic(&self) -> DiagnosticConfig {
        DiagnosticConfig { sim: self.simulation.clone(), policy: self.diagnostics.clone(), spec: self.quadrature }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let c = RunConfig::from_json(r#"{"simulation": {"n_paths": 17}}"#).unwrap();
        assert_eq!(c.simulation.n_paths, 17);
        assert_eq!(c.simulation.dt, SimulationConfig::default().dt);
        assert_eq!(c.probe, ProbeConfig::default());
    }

    #[test]
    fn unknown_key_is_rejected() {
        match RunConfig::from_json(r#"{"probe": {"bigR": 2}}"#) {
            Err(LabError::Schema { path, message }) => {
                assert!(path.starts_with("probe"), "{path}");
                assert!(message.contains("bigR"));
            }
            other => panic!("{other:?}"),
        }
    }
}
