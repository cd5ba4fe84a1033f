//! Built-in scenarios.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::control::{ControlCost, HomotopyBase, Scenario, Temporal};
use crate::error::{Error, Result};
use crate::regression::FeatureSpec;
use crate::spectral::{control_operator, neumann_lift, MultiplicationOperator, Profile, SpectralField, SpectralModel};

/// Discretization parameters shared by all builders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub n_modes: usize,
    pub lambda_shift: f64,
    pub frac_alpha: f64,
    pub frac_beta: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_modes: 16,
            lambda_shift: 1.0,
            frac_alpha: 0.6,
            frac_beta: 0.75,
        }
    }
}

pub struct ScenarioEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub tags: &'static [&'static str],
    /// Regression basis recommended for the backward component.
    pub features: FeatureSpec,
    pub builder: fn(&ScenarioParams) -> Result<Scenario>,
}

pub fn registry() -> Vec<ScenarioEntry> {
    vec![
        ScenarioEntry {
            name: "lq_benchmark",
            description: "distributed control everywhere (b = 1), quadratic costs; the Riccati solution is exact",
            tags: &["linear-quadratic", "riccati-oracle"],
            features: FeatureSpec::affine(),
            builder: lq_benchmark,
        },
        ScenarioEntry {
            name: "neumann_heat_default",
            description: "b = indicator of (pi/4, 3pi/4), g = 1, quadratic costs tracking a moving profile",
            tags: &["linear-quadratic", "tracking"],
            features: FeatureSpec::affine(),
            builder: neumann_heat_default,
        },
        ScenarioEntry {
            name: "nonlinear_gamma",
            description: "default model with saturating control cost g'(u) = u + 0.25 tanh(u)",
            tags: &["nonlinear", "bridge"],
            features: FeatureSpec::quadratic(4),
            builder: nonlinear_gamma,
        },
        ScenarioEntry {
            name: "boundary_only",
            description: "no distributed control (B = 0); continuation started from the E + I system",
            tags: &["linear-quadratic", "boundary-only", "e-plus-identity"],
            features: FeatureSpec::affine(),
            builder: boundary_only,
        },
    ]
}

pub fn scenario_names() -> Vec<&'static str> {
    registry().iter().map(|e| e.name).collect()
}

/// Looks up a registry entry by name.
pub fn lookup(name: &str) -> Result<ScenarioEntry> {
    registry()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownScenario {
            name: name.to_string(),
            available: scenario_names().join(", "),
        })
}

pub fn build(name: &str, params: &ScenarioParams) -> Result<Scenario> {
    (lookup(name)?.builder)(params)
}

struct Parts {
    b: Profile,
    g: Option<Profile>,
    boundary_noise: f64,
    homotopy: HomotopyBase,
    target: fn(f64) -> f64,
    temporal: Temporal,
    control_cost: ControlCost,
}

fn assemble(name: &str, params: &ScenarioParams, parts: Parts) -> Result<Scenario> {
    let model = SpectralModel::new(params.n_modes, params.lambda_shift, params.frac_alpha, params.frac_beta)?;
    let n = model.n_modes();
    let lifts = neumann_lift(&model);
    let b_op = MultiplicationOperator::assemble(&model, parts.b);
    let g_op = parts.g.map(|g| MultiplicationOperator::assemble(&model, g));
    let control_op = control_operator(&lifts, &b_op.matrix);
    let aux_control_op = match parts.homotopy {
        HomotopyBase::Standard => control_op.clone(),
        HomotopyBase::EPlusIdentity => control_operator(&lifts, &DMatrix::identity(n, n)),
    };
    // l⁰ = ½|x − x_ref|², so the offset is h0 = −x_ref
    let x_ref = SpectralField::project(&model, parts.target);
    let offset_profile = -&x_ref.coeffs;
    let g0 = &offset_profile * parts.temporal.eval(1.0);
    let x0 = SpectralField::project(&model, |xi| 1.0 + xi.cos());
    parts.control_cost.validate()?;
    Ok(Scenario {
        name: name.to_string(),
        model,
        lifts,
        b_op,
        g_op,
        boundary_noise: parts.boundary_noise,
        control_op,
        homotopy: parts.homotopy,
        aux_control_op,
        running_weight: 1.0,
        offset_profile,
        offset_temporal: parts.temporal,
        terminal_weight: 1.0,
        g0,
        control_cost: parts.control_cost,
        x0,
    })
}

fn tracking_profile(xi: f64) -> f64 {
    0.5 * xi.cos()
}

fn flat_profile(xi: f64) -> f64 {
    0.25 * (2.0 * xi).cos()
}

fn indicator() -> Profile {
    Profile::Indicator {
        lo: PI / 4.0,
        hi: 3.0 * PI / 4.0,
        value: 1.0,
    }
}

pub fn lq_benchmark(params: &ScenarioParams) -> Result<Scenario> {
    assemble(
        "lq_benchmark",
        params,
        Parts {
            b: Profile::Constant { value: 1.0 },
            g: Some(Profile::Constant { value: 1.0 }),
            boundary_noise: 1.0,
            homotopy: HomotopyBase::Standard,
            target: flat_profile,
            temporal: Temporal::Constant,
            control_cost: ControlCost::Quadratic { c: 1.0 },
        },
    )
}

pub fn neumann_heat_default(params: &ScenarioParams) -> Result<Scenario> {
    assemble(
        "neumann_heat_default",
        params,
        Parts {
            b: indicator(),
            g: Some(Profile::Constant { value: 1.0 }),
            boundary_noise: 1.0,
            homotopy: HomotopyBase::Standard,
            target: tracking_profile,
            temporal: Temporal::Cosine { omega: PI },
            control_cost: ControlCost::Quadratic { c: 1.0 },
        },
    )
}

pub fn nonlinear_gamma(params: &ScenarioParams) -> Result<Scenario> {
    assemble(
        "nonlinear_gamma",
        params,
        Parts {
            b: indicator(),
            g: Some(Profile::Constant { value: 1.0 }),
            boundary_noise: 1.0,
            homotopy: HomotopyBase::Standard,
            target: tracking_profile,
            temporal: Temporal::Cosine { omega: PI },
            control_cost: ControlCost::Saturating { kappa: 0.25 },
        },
    )
}

pub fn boundary_only(params: &ScenarioParams) -> Result<Scenario> {
    assemble(
        "boundary_only",
        params,
        Parts {
            b: Profile::Constant { value: 0.0 },
            g: Some(Profile::Constant { value: 1.0 }),
            boundary_noise: 1.0,
            homotopy: HomotopyBase::EPlusIdentity,
            target: tracking_profile,
            temporal: Temporal::Cosine { omega: PI },
            control_cost: ControlCost::Quadratic { c: 1.0 },
        },
    )
}
