//! Scenario files: versioned JSON, unknown fields rejected.

use std::path::Path;

use feller_core::{
    CoefficientField, CoefficientMeta, Density, DensityKind, LevyMeasure, LevyTriplet, Scenario, SigmaKind,
    StablePart, Uniqueness,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::LabError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub scenario: ScenarioSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub label: String,
    pub dims: Dims,
    pub uniqueness: Uniqueness,
    pub triplet: TripletSpec,
    pub sigma: SigmaSpec,
    /// Overrides the constants derived from `sigma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<CoefficientMeta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub d: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletSpec {
    pub drift: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    #[serde(default)]
    pub measure: MeasureSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<AtomSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stable: Option<StableSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub point: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Exponential {
        scale: f64,
        rate: f64,
    },
    TemperedStable {
        alpha: f64,
        scale: f64,
        rate: f64,
    },
    Gaussian {
        mean: Vec<f64>,
        std: Vec<f64>,
        mass: f64,
    },
}

/// `scale·|y|^{-1-α}` on the line; `normalized` picks the scale with `ψ(ξ) = |ξ|^α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StableSpec {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    Constant { matrix: Vec<Vec<f64>> },
    Linear { c: Vec<f64> },
    GeneralizedOu,
    PowerAbs { scale: f64, beta: f64 },
    ShiftedPower { scale: f64, beta: f64 },
    Polynomial { coeffs: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedVerdict {
    Feller,
    NotFeller,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub verdict: ExpectedVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol_formula_label: Option<String>,
}

impl ExpectedVerdict {
    pub fn matches(self, v: feller_core::Verdict) -> bool {
        matches!(
            (self, v),
            (Self::Feller, feller_core::Verdict::Feller) | (Self::NotFeller, feller_core::Verdict::NotFeller)
        )
    }
}

fn schema_err(path: &str, msg: impl Into<String>) -> LabError {
    LabError::Schema { path: path.into(), message: msg.into() }
}

fn matrix(rows: &[Vec<f64>], path: &str, shape: (usize, usize)) -> Result<DMatrix<f64>, LabError> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(schema_err(path, format!("expected a {}x{} matrix", shape.0, shape.1)));
    }
    Ok(DMatrix::from_fn(shape.0, shape.1, |i, j| rows[i][j]))
}

/// Command-line parameter overrides.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, LabError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            schema_err(&path, e.into_inner().to_string())
        })?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(schema_err(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", file.schema_version),
            ));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario files serialize")
    }

    pub fn apply(&mut self, o: Overrides) -> Result<(), LabError> {
        if let Some(b) = o.beta {
            match &mut self.scenario.sigma {
                SigmaSpec::PowerAbs { beta, .. } | SigmaSpec::ShiftedPower { beta, .. } => *beta = b,
                _ => return Err(schema_err("scenario.sigma", "--beta needs a power_abs or shifted_power sigma")),
            }
            // Derived constants change with the exponent.
            self.scenario.meta = None;
        }
        if let Some(a) = o.alpha {
            match &mut self.scenario.triplet.measure.stable {
                Some(s) => s.alpha = a,
                None => return Err(schema_err("scenario.triplet.measure.stable", "--alpha needs a stable part")),
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Scenario, LabError> {
        self.scenario.build()
    }
}

impl ScenarioSpec {
    pub fn build(&self) -> Result<Scenario, LabError> {
        let Dims { d, k } = self.dims;
        if d == 0 || k == 0 {
            return Err(schema_err("scenario.dims", "dimensions must be positive"));
        }
        let t = &self.triplet;
        if t.drift.len() != k {
            return Err(schema_err("scenario.triplet.drift", format!("expected length {k}")));
        }
        let cov = matrix(&t.covariance, "scenario.triplet.covariance", (k, k))?;
        let mut nu = LevyMeasure::new(k);
        for (i, a) in t.measure.atoms.iter().enumerate() {
            let path = format!("scenario.triplet.measure.atoms[{i}]");
            if a.point.len() != k {
                return Err(schema_err(&format!("{path}.point"), format!("expected length {k}")));
            }
            nu = nu.with_atom(a.point.clone(), a.mass).map_err(|e| schema_err(&path, e.to_string()))?;
        }
        if let Some(ds) = &t.measure.density {
            let path = "scenario.triplet.measure.density";
            let kind = match ds.clone() {
                DensitySpec::Exponential { scale, rate } => DensityKind::Exponential { scale, rate },
                DensitySpec::TemperedStable { alpha, scale, rate } => DensityKind::TemperedStable { alpha, scale, rate },
                DensitySpec::Gaussian { mean, std, mass } => DensityKind::Gaussian { mean, std, mass },
            };
            let density = Density::new(kind).map_err(|e| schema_err(path, e.to_string()))?;
            if density.dim() != k {
                return Err(schema_err(path, format!("density dimension {} differs from k = {k}", density.dim())));
            }
            nu = nu.with_density(density).map_err(|e| schema_err(path, e.to_string()))?;
        }
        if let Some(s) = &t.measure.stable {
            let path = "scenario.triplet.measure.stable";
            let part = match (s.scale, s.normalized) {
                (Some(scale), false) => StablePart::new(s.alpha, scale),
                (None, true) => StablePart::normalized(s.alpha),
                _ => return Err(schema_err(path, "give exactly one of 'scale' and 'normalized'")),
            }
            .map_err(|e| schema_err(path, e.to_string()))?;
            nu = nu.with_stable(part).map_err(|e| schema_err(path, e.to_string()))?;
        }
        let triplet =
            LevyTriplet::new(t.drift.clone(), cov, nu).map_err(|e| schema_err("scenario.triplet", e.to_string()))?;
        let kind = match &self.sigma {
            SigmaSpec::Constant { matrix: m } => SigmaKind::Constant(matrix(m, "scenario.sigma.matrix", (d, k))?),
            SigmaSpec::Linear { c } => SigmaKind::Linear { c: c.clone() },
            SigmaSpec::GeneralizedOu => SigmaKind::GeneralizedOu,
            SigmaSpec::PowerAbs { scale, beta } => SigmaKind::PowerAbs { scale: *scale, beta: *beta },
            SigmaSpec::ShiftedPower { scale, beta } => SigmaKind::ShiftedPower { scale: *scale, beta: *beta },
            SigmaSpec::Polynomial { coeffs } => SigmaKind::Polynomial { coeffs: coeffs.clone() },
        };
        let mut sigma = CoefficientField::new(kind).map_err(|e| schema_err("scenario.sigma", e.to_string()))?;
        if sigma.dims() != (d, k) {
            let (sd, sk) = sigma.dims();
            return Err(schema_err("scenario.dims", format!("sigma is {sd}x{sk} but dims say {d}x{k}")));
        }
        if let Some(meta) = &self.meta {
            sigma = sigma.with_meta(meta.clone()).map_err(|e| schema_err("scenario.meta", e.to_string()))?;
        }
        Scenario::new(self.label.clone(), triplet, sigma, self.uniqueness)
            .map_err(|e| schema_err("scenario", e.to_string()))
    }
}

/// A library name or a path to a scenario file.
pub fn load_scenario_file(name_or_path: &str) -> Result<ScenarioFile, LabError> {
    if let Some(f) = crate::library::get(name_or_path) {
        return Ok(f);
    }
    let path = Path::new(name_or_path);
    let text = std::fs::read_to_string(path).map_err(|e| LabError::Io {
        path: path.display().to_string(),
        message: format!("{e} (not a library scenario either; known: {})", crate::library::names().join(", ")),
    })?;
    ScenarioFile::from_json(&text)
}

pub fn load_scenario(name_or_path: &str, o: Overrides) -> Result<(ScenarioFile, Scenario), LabError> {
    let mut file = load_scenario_file(name_or_path)?;
    file.apply(o)?;
    let s = file.build()?;
    Ok((file, s))
}
