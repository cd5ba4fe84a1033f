//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use heatbridge::regression::FeatureSpec;
use heatbridge::scenarios::{lookup, ScenarioParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: String,
    pub n_modes: usize,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub horizon: f64,
    pub lambda_shift: f64,
    pub frac_alpha: f64,
    pub frac_beta: f64,
    pub delta: f64,
    pub picard_tol: f64,
    pub max_picard: usize,
    pub max_halvings: usize,
    /// 1 or 2; the scenario's recommended basis when absent.
    pub regression_degree: Option<usize>,
    /// Leading modes entering the degree-2 features.
    pub quad_modes: usize,
    pub out_dir: PathBuf,
    pub emit: Emit,
    pub certify: CertifyOptions,
    pub validate_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "neumann_heat_default".into(),
            n_modes: 16,
            n_steps: 200,
            n_paths: 10_000,
            seed: 1,
            horizon: 1.0,
            lambda_shift: 1.0,
            frac_alpha: 0.6,
            frac_beta: 0.75,
            delta: 0.1,
            picard_tol: 1e-18,
            max_picard: 60,
            max_halvings: 6,
            regression_degree: None,
            quad_modes: 4,
            out_dir: PathBuf::from("out"),
            emit: Emit::default(),
            certify: CertifyOptions::default(),
            validate_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Emit {
    /// Time series.
    pub csv: bool,
    /// Reports and certificates.
    pub json: bool,
    /// Full path ensembles.
    pub binary: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Self {
            csv: true,
            json: true,
            binary: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyOptions {
    pub directions: usize,
    pub eps: Vec<f64>,
    pub harmonics: usize,
    pub vi_samples: usize,
    pub slope_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            directions: 20,
            eps: vec![1e-3, 1e-2],
            harmonics: 4,
            vi_samples: 10_000,
            slope_tol: 2e-2,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Parse(msg) => CliError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Every range violation, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, value) in [
            ("n_modes", self.n_modes),
            ("n_steps", self.n_steps),
            ("n_paths", self.n_paths),
            ("max_picard", self.max_picard),
            ("validate_samples", self.validate_samples),
            ("certify.vi_samples", self.certify.vi_samples),
            ("certify.harmonics", self.certify.harmonics),
        ] {
            if value == 0 {
                v.push(format!("{name} must be positive"));
            }
        }
        if self.n_modes == 1 {
            v.push("n_modes must be at least 2".into());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            v.push(format!("horizon must be positive and finite (got {})", self.horizon));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            v.push(format!("delta must lie in (0, 1] (got {})", self.delta));
        }
        if !(self.picard_tol > 0.0) {
            v.push(format!("picard_tol must be positive (got {})", self.picard_tol));
        }
        if !(self.lambda_shift > 0.0) {
            v.push(format!("lambda_shift must be positive (got {})", self.lambda_shift));
        }
        if !(self.frac_alpha > 0.5 && self.frac_alpha < 1.0) {
            v.push(format!("frac_alpha must lie in (1/2, 1) (got {})", self.frac_alpha));
        }
        if !(self.frac_beta > 0.5 && self.frac_beta < 1.0) {
            v.push(format!("frac_beta must lie in (1/2, 1) (got {})", self.frac_beta));
        }
        if let Some(d) = self.regression_degree {
            if d != 1 && d != 2 {
                v.push(format!("regression_degree must be 1 or 2 (got {d})"));
            }
        }
        if self.certify.eps.iter().any(|e| !(*e > 0.0)) {
            v.push("certify.eps entries must be positive".into());
        }
        if !(self.certify.slope_tol > 0.0) {
            v.push(format!("certify.slope_tol must be positive (got {})", self.certify.slope_tol));
        }
        v
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(v))
        }
    }

    pub fn scenario_params(&self) -> ScenarioParams {
        ScenarioParams {
            n_modes: self.n_modes,
            lambda_shift: self.lambda_shift,
            frac_alpha: self.frac_alpha,
            frac_beta: self.frac_beta,
        }
    }

    pub fn features(&self) -> Result<FeatureSpec, CliError> {
        Ok(match self.regression_degree {
            None => lookup(&self.scenario)?.features,
            Some(1) => FeatureSpec::affine(),
            Some(_) => FeatureSpec::quadratic(self.quad_modes),
        })
    }
}
