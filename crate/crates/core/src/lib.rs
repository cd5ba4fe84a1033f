//! Stochastic optimal control of a heat equation with Neumann boundary noise
//! and boundary control.
//!
//! The state space is truncated to the cosine eigenbasis of the Neumann
//! Laplacian. On top of it sit a Monte Carlo forward simulator, a Riccati
//! solver for the auxiliary linear-quadratic problem, a continuation solver for
//! the nonlinear forward-backward Hamiltonian system, and the optimality
//! certificates used to check its output.
//!
//! Sign convention: the backward component is the costate `p` with
//! `p_T = h_x(X_T)` and optimal drift `−(E+B)(E+B)ᵀp` in the linear case, so
//! that `p = P X + r` with `P` positive semidefinite and `P_T = I`.

pub mod bridge;
pub mod control;
pub mod error;
pub mod forward;
pub mod io;
pub mod regression;
pub mod riccati;
pub mod scenarios;
pub mod spectral;
pub mod stats;

pub use bridge::{BridgeConfig, BridgeDiagnostics, BridgeSolver, HomotopyPoint, ResidualReport};
pub use control::{Certificate, ControlCost, Scenario, ValidationReport};
pub use error::{Error, Result};
pub use forward::{ControlProcess, Forcing, ForwardModel, NoiseEnsemble, NoiseSpec, PathEnsemble, TimeGrid};
pub use regression::FeatureSpec;
pub use riccati::{AffineTerm, FbsdeSolution, RiccatiScheme, RiccatiSolution};
pub use scenarios::{registry, ScenarioEntry, ScenarioParams};
pub use spectral::{BoundaryControlPoint, LiftCoefficients, MultiplicationOperator, Profile, SpectralField, SpectralModel};
pub use stats::Estimate;
