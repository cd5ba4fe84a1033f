//! Continuation from the auxiliary linear FBSDE (θ = 0) to the Hamiltonian
//! system (θ = 1).
//!
//! At a target θ each Picard iterate solves one linear FBSDE whose affine data
//! are built from the previous iterate `(X^j, p^j)`:
//!
//! ```text
//! b̃0 = θ[(E+B)γ̃((E+B)ᵀp^j) + M_aux p^j]
//! h̃0 = θ(l⁰_x(t, X^j) − X^j)
//! g̃0 = θ(h_x(X^j_T) − X^j_T)
//! ```
//!
//! so a fixed point solves the θ-system exactly. The Riccati solution of the
//! auxiliary system is computed once and reused by every iterate.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{HomotopyBase, Scenario};
use crate::error::{Error, Result};
use crate::forward::{axpy_scaled_columns, Forcing, ForwardModel, NoiseEnsemble, TimeGrid};
use crate::regression::{regress, FeatureSpec};
use crate::riccati::{
    assemble_linear_fbsde, assemble_without_integrands, integrand_estimates, solve_riccati, weighted_profile_ensemble, AffineOperators, AffineTerm, FbsdeSolution, RiccatiScheme, RiccatiSolution,
};
use crate::spectral::phi1;
use crate::stats::median;

/// Continuation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeConfig {
    pub delta: f64,
    /// Stopping level of `E∫|X̂|² + E∫|(E+B)ᵀp̂|²` between successive iterates.
    pub picard_tol: f64,
    pub max_picard: usize,
    pub max_halvings: usize,
    pub features: FeatureSpec,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            picard_tol: 1e-18,
            max_picard: 60,
            max_halvings: 6,
            features: FeatureSpec::affine(),
        }
    }
}

/// A point on the continuation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomotopyPoint {
    pub theta: f64,
    pub delta: f64,
    pub picard_tol: f64,
    pub max_picard: usize,
}

impl HomotopyPoint {
    pub fn new(theta: f64, delta: f64, picard_tol: f64, max_picard: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Config(format!("theta must lie in [0, 1] (got {theta})")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1] (got {delta})")));
        }
        Ok(Self {
            theta,
            delta,
            picard_tol,
            max_picard,
        })
    }
}

/// History of one accepted or rejected stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub theta: f64,
    pub delta: f64,
    pub accepted: bool,
    pub iterations: usize,
    pub increments: Vec<f64>,
    pub wall_seconds: f64,
    pub noise_fingerprint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BridgeDiagnostics {
    pub stages: Vec<StageReport>,
    pub total_iterations: usize,
    pub noise_fingerprint: String,
    /// Every stage consumed the same increments.
    pub common_random_numbers: bool,
    pub residual: Option<ResidualReport>,
}

/// Homotopy maps at a given θ, in the costate convention.
pub struct HomotopyMaps<'a> {
    pub theta: f64,
    scenario: &'a Scenario,
    aux_gain: &'a DMatrix<f64>,
}

impl HomotopyMaps<'_> {
    /// `θ(E+B)γ̃((E+B)ᵀp) − (1−θ)M_aux p`, row-wise.
    pub fn drift(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let s = self.scenario;
        let z = p * &s.control_op;
        let nonlinear = s.gamma_rows(&z) * s.control_op.transpose();
        nonlinear * self.theta - p * self.aux_gain * (1.0 - self.theta)
    }

    /// `θ l⁰_x(t, x) + (1−θ)x`.
    pub fn driver(&self, t: f64, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.scenario.running_gradient_rows(t, x) * self.theta + x * (1.0 - self.theta)
    }

    /// `θ h_x(x) + (1−θ)x`.
    pub fn terminal(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.scenario.terminal_gradient_rows(x) * self.theta + x * (1.0 - self.theta)
    }
}

/// Diagnostics of how well an ensemble solves the θ-system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualReport {
    pub theta: f64,
    /// Largest pathwise deviation after re-simulating the forward equation from `p`.
    pub forward_residual: f64,
    /// RMS of the regressed conditional bias of the backward mild identity.
    pub backward_gap: f64,
    pub backward_se: f64,
    /// RMS of `p_T − terminal(X_T)`.
    pub terminal_residual: f64,
    pub weighted_profile: Vec<f64>,
    pub profile_final_sup: f64,
    pub profile_median: f64,
}

impl ResidualReport {
    pub fn profile_ratio(&self) -> f64 {
        self.profile_final_sup / self.profile_median
    }
}

enum StageOutcome {
    Accepted(FbsdeSolution, StageReport),
    Rejected(StageReport),
}

pub struct BridgeSolver<'a> {
    pub scenario: &'a Scenario,
    pub fwd: ForwardModel,
    pub ops: AffineOperators,
    pub config: BridgeConfig,
    pub x0: nalgebra::DVector<f64>,
    aux_gain: DMatrix<f64>,
}

impl<'a> BridgeSolver<'a> {
    pub fn new(scenario: &'a Scenario, grid: TimeGrid, config: BridgeConfig) -> Result<Self> {
        if !(config.delta > 0.0 && config.delta <= 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1] (got {})", config.delta)));
        }
        scenario.control_cost.validate()?;
        let fwd = scenario.forward_model(grid)?;
        let n = scenario.n_modes();
        let aux_gain = scenario.aux_gain();
        let id = DMatrix::identity(n, n);
        let riccati = solve_riccati(&scenario.model, &aux_gain, &id, &id, grid, RiccatiScheme::MatrixFraction)?;
        let ops = AffineOperators::new(&fwd, riccati, aux_gain.clone())?;
        Ok(Self {
            scenario,
            fwd,
            ops,
            config,
            x0: scenario.x0.coeffs.clone(),
            aux_gain,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.fwd.grid
    }

    pub fn maps(&self, theta: f64) -> HomotopyMaps<'_> {
        HomotopyMaps {
            theta,
            scenario: self.scenario,
            aux_gain: &self.aux_gain,
        }
    }

    fn x0_field(&self) -> crate::spectral::SpectralField {
        crate::spectral::SpectralField {
            coeffs: self.x0.clone(),
        }
    }

    /// The θ = 0 system, solved directly.
    pub fn linear_solution(&self, noise: &NoiseEnsemble) -> Result<FbsdeSolution> {
        let n = self.scenario.n_modes();
        let steps = self.grid().n_steps();
        let zero = vec![DVector::zeros(n); steps + 1];
        let affine = self.ops.solve_direct(&zero, &zero, &DVector::zeros(n))?;
        let sol = assemble_linear_fbsde(
            &self.fwd,
            &self.ops,
            &affine,
            &Forcing::Zero,
            &self.x0_field(),
            Some(noise),
            noise.n_paths(),
        )?;
        Ok(sol)
    }

    /// One Picard iterate at `theta` from `prev`.
    pub fn picard_step(&self, theta: f64, prev: &FbsdeSolution, noise: &NoiseEnsemble) -> Result<FbsdeSolution> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Config(format!("theta must lie in [0, 1] (got {theta})")));
        }
        let s = self.scenario;
        let grid = self.grid();
        let steps = grid.n_steps();

        let b0: Vec<DMatrix<f64>> = (0..steps)
            .map(|m| {
                let p = &prev.p.states[m];
                let z = p * &s.control_op;
                let b = match s.homotopy {
                    HomotopyBase::Standard => s.gamma_plus_identity_rows(&z) * s.control_op.transpose(),
                    HomotopyBase::EPlusIdentity => s.gamma_rows(&z) * s.control_op.transpose() + p * &self.aux_gain,
                };
                b * theta
            })
            .collect();
        let g0 = s.terminal_excess_rows(&prev.x.states[steps]) * theta;
        let features = self.config.features;
        let affine: AffineTerm = self.ops.solve_stochastic(
            g0,
            |m| {
                let h0 = s.driver_excess_rows(grid.node(m), &prev.x.states[m]) * theta;
                Ok((Some(b0[m].clone()), Some(h0)))
            },
            |m| features.basis(&prev.x.states[m]),
        )?;
        let mut sol = assemble_without_integrands(
            &self.fwd,
            &self.ops,
            &affine,
            &Forcing::PerPath(&b0),
            &self.x0_field(),
            Some(noise),
            noise.n_paths(),
        )?;
        sol.theta = theta;
        Ok(sol)
    }

    /// `E∫|X^a − X^b|² dt + E∫|(E+B)ᵀ(p^a − p^b)|² dt`.
    pub fn increment(&self, a: &FbsdeSolution, b: &FbsdeSolution) -> f64 {
        let grid = self.grid();
        let n_paths = a.x.n_paths as f64;
        let vals: Vec<f64> = (0..grid.n_nodes())
            .map(|m| {
                let dx = (&a.x.states[m] - &b.x.states[m]).norm_squared();
                let dz = ((&a.p.states[m] - &b.p.states[m]) * &self.scenario.control_op).norm_squared();
                (dx + dz) / n_paths
            })
            .collect();
        crate::stats::trapezoid(&vals, grid.step())
    }

    /// `E∫|(E+B)ᵀp|² dt` as per-path samples.
    pub fn control_norm_samples(&self, sol: &FbsdeSolution) -> Vec<f64> {
        control_norm_samples(self.scenario, sol)
    }

    fn run_stage(&self, point: HomotopyPoint, warm: &FbsdeSolution, noise: &NoiseEnsemble) -> Result<StageOutcome> {
        let start = Instant::now();
        let mut increments = Vec::new();
        let mut cur = warm.clone();
        let mut growth = 0;
        let mut accepted = None;
        for iter in 1..=point.max_picard {
            let next = self.picard_step(point.theta, &cur, noise)?;
            let inc = self.increment(&next, &cur);
            if !inc.is_finite() {
                return Err(Error::PicardNaN {
                    theta: point.theta,
                    iteration: iter,
                });
            }
            if let Some(&last) = increments.last() {
                if inc > last {
                    growth += 1;
                } else {
                    growth = 0;
                }
            }
            increments.push(inc);
            cur = next;
            if inc <= point.picard_tol {
                accepted = Some(cur.clone());
                break;
            }
            if growth >= 3 {
                break;
            }
        }
        let report = StageReport {
            theta: point.theta,
            delta: point.delta,
            accepted: accepted.is_some(),
            iterations: increments.len(),
            increments,
            wall_seconds: start.elapsed().as_secs_f64(),
            noise_fingerprint: noise.fingerprint(),
        };
        Ok(match accepted {
            Some(mut sol) => {
                (sol.z, sol.z_tilde) = integrand_estimates(&sol.p, Some(noise));
                StageOutcome::Accepted(sol, report)
            }
            None => StageOutcome::Rejected(report),
        })
    }

    /// Iterates at `theta` from `warm`; on failure retries from `warm` with the step halved,
    /// moving the target to `warm.theta + delta/2`. Returns the reached θ and every attempt.
    pub fn solve_at_theta(
        &self,
        theta: f64,
        warm: &FbsdeSolution,
        noise: &NoiseEnsemble,
    ) -> Result<(FbsdeSolution, Vec<StageReport>)> {
        if theta == 0.0 {
            let sol = self.linear_solution(noise)?;
            return Ok((sol, Vec::new()));
        }
        let mut delta = (theta - warm.theta).max(0.0);
        let mut target = theta;
        let mut reports = Vec::new();
        for halvings in 0..=self.config.max_halvings {
            let point = HomotopyPoint::new(target, delta.clamp(f64::MIN_POSITIVE, 1.0), self.config.picard_tol, self.config.max_picard)?;
            match self.run_stage(point, warm, noise)? {
                StageOutcome::Accepted(sol, report) => {
                    reports.push(report);
                    return Ok((sol, reports));
                }
                StageOutcome::Rejected(report) => {
                    let last = report.increments.last().copied().unwrap_or(f64::NAN);
                    reports.push(report);
                    if halvings == self.config.max_halvings {
                        return Err(Error::BridgeStage {
                            theta: target,
                            halvings,
                            last_increment: last,
                        });
                    }
                    delta *= 0.5;
                    target = warm.theta + delta;
                }
            }
        }
        unreachable!("loop returns on the last halving")
    }

    /// Marches θ from 0 to 1.
    pub fn solve(&self, noise: &NoiseEnsemble) -> Result<(FbsdeSolution, BridgeDiagnostics)> {
        self.solve_from(self.linear_solution(noise)?, noise)
    }

    /// Marches θ from `start.theta` to 1, warm-starting the first stage at `start`.
    pub fn solve_from(&self, start: FbsdeSolution, noise: &NoiseEnsemble) -> Result<(FbsdeSolution, BridgeDiagnostics)> {
        let fingerprint = noise.fingerprint();
        let mut cur = start;
        let mut stages = Vec::new();
        let mut step = self.config.delta;
        let mut total = 0;
        while cur.theta < 1.0 {
            let target = if cur.theta + step >= 1.0 - 1e-12 { 1.0 } else { cur.theta + step };
            let (sol, reports) = self.solve_at_theta(target, &cur, noise)?;
            total += reports.iter().map(|r| r.iterations).sum::<usize>();
            let taken = sol.theta - cur.theta;
            stages.extend(reports);
            cur = sol;
            step = (2.0 * taken).min(self.config.delta);
        }
        let crn = stages.iter().all(|s| s.noise_fingerprint == fingerprint);
        Ok((
            cur,
            BridgeDiagnostics {
                stages,
                total_iterations: total,
                noise_fingerprint: fingerprint,
                common_random_numbers: crn,
                residual: None,
            },
        ))
    }

    /// Forward residual, backward mild-identity gap and weighted profile at `theta`.
    pub fn residual(&self, sol: &FbsdeSolution, theta: f64, noise: &NoiseEnsemble) -> Result<ResidualReport> {
        fbsde_residual(self.scenario, &self.fwd, &self.aux_gain, sol, theta, noise, self.config.features)
    }
}

/// Per-path `∫|(E+B)ᵀp_t|² dt`.
pub fn control_norm_samples(scenario: &Scenario, sol: &FbsdeSolution) -> Vec<f64> {
    let grid = sol.p.grid;
    let h = grid.step();
    let per_node: Vec<Vec<f64>> = sol
        .p
        .states
        .iter()
        .map(|p| (p * &scenario.control_op).row_iter().map(|r| r.norm_squared()).collect())
        .collect();
    (0..sol.p.n_paths)
        .map(|i| {
            let v: Vec<f64> = per_node.iter().map(|n| n[i]).collect();
            crate::stats::trapezoid(&v, h)
        })
        .collect()
}

/// Residual diagnostics of an ensemble pair against the θ-system.
pub fn fbsde_residual(
    scenario: &Scenario,
    fwd: &ForwardModel,
    aux_gain: &DMatrix<f64>,
    sol: &FbsdeSolution,
    theta: f64,
    noise: &NoiseEnsemble,
    features: FeatureSpec,
) -> Result<ResidualReport> {
    let maps = HomotopyMaps {
        theta,
        scenario,
        aux_gain,
    };
    let grid = sol.x.grid;
    let steps = grid.n_steps();
    let h = grid.step();
    let n = scenario.n_modes();
    let n_paths = sol.x.n_paths;

    let x0 = crate::spectral::SpectralField {
        coeffs: sol.x.states[0].row(0).transpose(),
    };
    let resim = fwd.simulate_with(&x0, n_paths, Some(noise), |m, _| Ok(Some(maps.drift(&sol.p.states[m]))))?;
    let forward_residual = resim
        .states
        .iter()
        .zip(&sol.x.states)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);

    let term = maps.terminal(&sol.x.states[steps]);
    let terminal_residual = ((&sol.p.states[steps] - &term).norm_squared() / n_paths as f64).sqrt();

    // exponential trapezoid weights: exact for drivers linear on each step
    let a = scenario.model.eigenvalues();
    let w1 = DVector::from_fn(n, |k, _| {
        if a[k] == 0.0 {
            0.5 * h
        } else {
            (h * (a[k] * h).exp() - phi1(a[k], h)) / (a[k] * h)
        }
    });
    let w0 = DVector::from_fn(n, |k, _| phi1(a[k], h) - w1[k]);

    let mut y = term;
    let mut f_next = maps.driver(grid.node(steps), &sol.x.states[steps]);
    let mut gap_sq = 0.0;
    let mut se_sq = 0.0;
    for m in (0..steps).rev() {
        let f_cur = maps.driver(grid.node(m), &sol.x.states[m]);
        crate::forward::scale_columns(&mut y, &fwd.decay);
        axpy_scaled_columns(&mut y, &f_cur, &w0);
        axpy_scaled_columns(&mut y, &f_next, &w1);
        let d = &y - &sol.p.states[m];
        let fit = regress(&features.basis(&sol.x.states[m]), &d);
        gap_sq += fit.fitted.norm_squared() / n_paths as f64;
        se_sq += fit.n_active as f64 * fit.residual_var.sum() / n_paths as f64;
        f_next = f_cur;
    }
    let backward_gap = (gap_sq / steps as f64).sqrt();
    let backward_se = (se_sq / steps as f64).sqrt();

    let exponent = 1.0 - scenario.model.frac_alpha();
    let weighted_profile = weighted_profile_ensemble(&scenario.model, &sol.p, exponent);
    let tail_start = grid.n_nodes() - (grid.n_nodes() / 10).max(1);
    let profile_final_sup = weighted_profile[tail_start..].iter().copied().fold(0.0, f64::max);
    let profile_median = median(&weighted_profile);

    Ok(ResidualReport {
        theta,
        forward_residual,
        backward_gap,
        backward_se,
        terminal_residual,
        weighted_profile,
        profile_final_sup,
        profile_median,
    })
}

/// Direct Riccati solution of a linear-quadratic scenario.
pub fn solve_direct_lq(
    scenario: &Scenario,
    grid: TimeGrid,
    noise: &NoiseEnsemble,
) -> Result<(FbsdeSolution, RiccatiSolution)> {
    let crate::control::ControlCost::Quadratic { c } = scenario.control_cost else {
        return Err(Error::Config(format!(
            "scenario `{}` is not linear-quadratic; no direct Riccati solution",
            scenario.name
        )));
    };
    let n = scenario.n_modes();
    let fwd = scenario.forward_model(grid)?;
    let gain = scenario.gain() / c;
    let q = DMatrix::identity(n, n) * scenario.running_weight;
    let terminal = DMatrix::identity(n, n) * scenario.terminal_weight;
    let riccati = solve_riccati(&scenario.model, &gain, &q, &terminal, grid, RiccatiScheme::MatrixFraction)?;
    let ops = AffineOperators::new(&fwd, riccati.clone(), gain)?;
    let h0: Vec<DVector<f64>> = scenario.h0_table(grid).into_iter().map(|v| v * scenario.running_weight).collect();
    let b0 = vec![DVector::zeros(n); grid.n_nodes()];
    let g0 = &scenario.g0 * scenario.terminal_weight;
    let affine = ops.solve_direct(&b0, &h0, &g0)?;
    let mut sol = assemble_linear_fbsde(&fwd, &ops, &affine, &Forcing::Zero, &scenario.x0, Some(noise), noise.n_paths())?;
    sol.theta = 1.0;
    Ok((sol, riccati))
}
