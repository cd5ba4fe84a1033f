//! Costs, the Hamiltonian and its stationary-point map, assumption validators
//! and the optimality certificates.
//!
//! With costate `p` the Hamiltonian is `H(t,x,u,p) = −l(t,x,u) − ⟨(E+B)ᵀp, u⟩`,
//! concave in `u`; its maximiser solves `g'(u) = −(E+B)ᵀp`, written `u = γ̃(z)`
//! with `z = (E+B)ᵀp`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{ForwardModel, NoiseSpec, PathEnsemble, TimeGrid};
use crate::riccati::FbsdeSolution;
use crate::spectral::{
    fit_loglog_slope, hs_bound_profile, hs_noise_profile, log_grid, neumann_lift, LiftCoefficients,
    MultiplicationOperator, SpectralField, SpectralModel,
};
use crate::stats::Estimate;

/// Control cost `g`, applied to every coordinate of `(u0, u1, u2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlCost {
    /// `c/2·u²`.
    Quadratic { c: f64 },
    /// `u²/2 + κ·ln cosh u`, so `g'(u) = u + κ tanh u`.
    Saturating { kappa: f64 },
}

const NEWTON_STEPS: usize = 20;

impl ControlCost {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ControlCost::Quadratic { c } if !(c > 0.0) => {
                Err(Error::Config(format!("quadratic control weight must be positive (got {c})")))
            }
            ControlCost::Saturating { kappa } if !(kappa >= 0.0) => Err(Error::Config(format!(
                "saturating control cost needs kappa >= 0 for an invertible gradient (got {kappa})"
            ))),
            _ => Ok(()),
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        match *self {
            ControlCost::Quadratic { c } => 0.5 * c * u * u,
            ControlCost::Saturating { kappa } => {
                let a = u.abs();
                // ln cosh u without overflow
                let lncosh = a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2;
                0.5 * u * u + kappa * lncosh
            }
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            ControlCost::Quadratic { c } => c * u,
            ControlCost::Saturating { kappa } => u + kappa * u.tanh(),
        }
    }

    pub fn second_derivative(&self, u: f64) -> f64 {
        match *self {
            ControlCost::Quadratic { c } => c,
            ControlCost::Saturating { kappa } => {
                let s = 1.0 / u.cosh();
                1.0 + kappa * s * s
            }
        }
    }

    /// Solves `g'(u) = −z`.
    pub fn gamma(&self, z: f64) -> f64 {
        match *self {
            ControlCost::Quadratic { c } => -z / c,
            ControlCost::Saturating { kappa } => {
                let target = -z;
                // g' is a bijection with slope in [1, 1+κ]; start from the saturated asymptote
                let mut u = target - kappa * (target / (1.0 + kappa)).tanh();
                for _ in 0..NEWTON_STEPS {
                    let th = u.tanh();
                    let f = u + kappa * th - target;
                    let step = f / (1.0 + kappa * (1.0 - th * th));
                    u -= step;
                    // the following error is below κ·step², under 1e-16
                    if step.abs() <= 1e-8 {
                        break;
                    }
                }
                u
            }
        }
    }

    /// `γ̃(z) + z`, evaluated without cancellation.
    pub fn gamma_plus_identity(&self, z: f64) -> f64 {
        match *self {
            ControlCost::Quadratic { c } => z * (1.0 - 1.0 / c),
            ControlCost::Saturating { kappa } => -kappa * self.gamma(z).tanh(),
        }
    }

    /// `c₁` in `⟨γ̃(z₁) − γ̃(z₂), z₁ − z₂⟩ ≤ −c₁|z₁ − z₂|²`.
    pub fn dissipativity(&self) -> f64 {
        match *self {
            ControlCost::Quadratic { c } => 1.0 / c,
            ControlCost::Saturating { kappa } => 1.0 / (1.0 + kappa),
        }
    }

    /// Lipschitz constant of `γ̃`.
    pub fn gamma_lipschitz(&self) -> f64 {
        match *self {
            ControlCost::Quadratic { c } => 1.0 / c,
            ControlCost::Saturating { .. } => 1.0,
        }
    }

    /// Supremum of `g''`.
    pub fn curvature_bound(&self) -> f64 {
        match *self {
            ControlCost::Quadratic { c } => c,
            ControlCost::Saturating { kappa } => 1.0 + kappa,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, ControlCost::Quadratic { .. })
    }
}

/// Time dependence of the running-cost offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Temporal {
    Constant,
    /// `cos(ω t)`.
    Cosine { omega: f64 },
}

impl Temporal {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Temporal::Constant => 1.0,
            Temporal::Cosine { omega } => (omega * t).cos(),
        }
    }
}

/// Affine model used as the starting point of the continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomotopyBase {
    /// `(E+B)(E+B)ᵀ`.
    Standard,
    /// `(E+I)(E+I)ᵀ`, for problems without distributed control.
    EPlusIdentity,
}

/// Declared structural constants of the assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    pub running_monotonicity: f64,
    pub terminal_monotonicity: f64,
    pub gamma_dissipativity: f64,
    pub gamma_lipschitz: f64,
    pub growth: f64,
}

/// A fully specified control problem on the truncated basis.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: SpectralModel,
    pub lifts: LiftCoefficients,
    pub b_op: MultiplicationOperator,
    pub g_op: Option<MultiplicationOperator>,
    /// Intensity of the boundary noise `(λ−A)D₁ dW̃`.
    pub boundary_noise: f64,
    /// `E + B`, `n × (n+2)`.
    pub control_op: DMatrix<f64>,
    pub homotopy: HomotopyBase,
    /// Operator whose Gram matrix drives the auxiliary linear system.
    pub aux_control_op: DMatrix<f64>,
    /// `l⁰(t,x) = w/2·|x + h0(t)|²`.
    pub running_weight: f64,
    pub offset_profile: DVector<f64>,
    pub offset_temporal: Temporal,
    /// `h(x) = w/2·|x + g0|²`.
    pub terminal_weight: f64,
    pub g0: DVector<f64>,
    pub control_cost: ControlCost,
    pub x0: SpectralField,
}

impl Scenario {
    pub fn n_modes(&self) -> usize {
        self.model.n_modes()
    }

    pub fn control_dim(&self) -> usize {
        self.n_modes() + 2
    }

    pub fn b_present(&self) -> bool {
        self.b_op.matrix.amax() > 0.0
    }

    pub fn gain(&self) -> DMatrix<f64> {
        &self.control_op * self.control_op.transpose()
    }

    pub fn aux_gain(&self) -> DMatrix<f64> {
        &self.aux_control_op * self.aux_control_op.transpose()
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            distributed: self.g_op.as_ref().map(|g| g.matrix.clone()),
            boundary: if self.boundary_noise != 0.0 {
                Some(&self.lifts.e1_coeffs * self.boundary_noise)
            } else {
                None
            },
        }
    }

    pub fn forward_model(&self, grid: TimeGrid) -> Result<ForwardModel> {
        ForwardModel::new(&self.model, grid, self.control_op.clone(), &self.noise_spec())
    }

    pub fn h0(&self, t: f64) -> DVector<f64> {
        &self.offset_profile * self.offset_temporal.eval(t)
    }

    pub fn h0_table(&self, grid: TimeGrid) -> Vec<DVector<f64>> {
        grid.nodes().iter().map(|&t| self.h0(t)).collect()
    }

    pub fn running_state_cost(&self, t: f64, x: &DVector<f64>) -> f64 {
        0.5 * self.running_weight * (x + self.h0(t)).norm_squared()
    }

    pub fn running_gradient(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (x + self.h0(t)) * self.running_weight
    }

    pub fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.terminal_weight * (x + &self.g0).norm_squared()
    }

    pub fn terminal_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (x + &self.g0) * self.terminal_weight
    }

    pub fn control_value(&self, u: &DVector<f64>) -> f64 {
        u.iter().map(|&v| self.control_cost.value(v)).sum()
    }

    pub fn control_gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        u.map(|v| self.control_cost.derivative(v))
    }

    /// Running cost `l = l⁰ + g`.
    pub fn running_cost(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.running_state_cost(t, x) + self.control_value(u)
    }

    /// `−l(t,x,u) − ⟨(E+B)ᵀp, u⟩`.
    pub fn hamiltonian(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>, p: &DVector<f64>) -> f64 {
        -self.running_cost(t, x, u) - (self.control_op.transpose() * p).dot(u)
    }

    /// `∂H/∂u = −g'(u) − (E+B)ᵀp`.
    pub fn hamiltonian_u(&self, u: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        -self.control_gradient(u) - self.control_op.transpose() * p
    }

    /// `γ̃(z)` on `U`.
    pub fn gamma_map(&self, z: &BoundaryInput) -> crate::spectral::BoundaryControlPoint {
        let mut flat = DVector::zeros(self.control_dim());
        let n = self.n_modes();
        flat.rows_mut(0, n).copy_from(&z.0.coeffs);
        flat[n] = z.1;
        flat[n + 1] = z.2;
        crate::spectral::BoundaryControlPoint::from_vector(&flat.map(|v| self.control_cost.gamma(v)))
    }

    pub fn gamma_vec(&self, z: &DVector<f64>) -> DVector<f64> {
        z.map(|v| self.control_cost.gamma(v))
    }

    /// Row-wise `l⁰_x(t, X)`.
    pub fn running_gradient_rows(&self, t: f64, x: &DMatrix<f64>) -> DMatrix<f64> {
        let h0 = self.h0(t);
        let w = self.running_weight;
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, k| w * (x[(i, k)] + h0[k]))
    }

    /// Row-wise `l⁰_x(t, X) − X`, grouped as `(w−1)X + w·h0` to stay exact in the quadratic case.
    pub fn driver_excess_rows(&self, t: f64, x: &DMatrix<f64>) -> DMatrix<f64> {
        let h0 = self.h0(t);
        let w = self.running_weight;
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, k| (w - 1.0) * x[(i, k)] + w * h0[k])
    }

    pub fn terminal_gradient_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.terminal_weight;
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, k| w * (x[(i, k)] + self.g0[k]))
    }

    pub fn terminal_excess_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.terminal_weight;
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, k| (w - 1.0) * x[(i, k)] + w * self.g0[k])
    }

    pub fn gamma_rows(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        z.map(|v| self.control_cost.gamma(v))
    }

    pub fn gamma_plus_identity_rows(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        z.map(|v| self.control_cost.gamma_plus_identity(v))
    }

    /// Control `γ̃((E+B)ᵀp_m)` at every step of a costate ensemble.
    pub fn optimal_controls(&self, p: &PathEnsemble) -> Vec<DMatrix<f64>> {
        (0..p.grid.n_steps())
            .map(|m| self.gamma_rows(&(&p.states[m] * &self.control_op)))
            .collect()
    }

    pub fn declared_constants(&self) -> DeclaredConstants {
        let h0_max = self.offset_profile.norm();
        DeclaredConstants {
            running_monotonicity: self.running_weight,
            terminal_monotonicity: self.terminal_weight,
            gamma_dissipativity: self.control_cost.dissipativity(),
            gamma_lipschitz: self.control_cost.gamma_lipschitz(),
            growth: self.running_weight.abs().max(self.control_cost.curvature_bound()) * (1.0 + h0_max),
        }
    }

    /// True when every cost is quadratic, so the Riccati solution is exact.
    pub fn is_linear_quadratic(&self) -> bool {
        self.control_cost.is_quadratic()
    }
}

/// Argument `z = (E+B)ᵀp` split as `(distributed, left, right)`.
#[derive(Debug, Clone)]
pub struct BoundaryInput(pub SpectralField, pub f64, pub f64);

/// Per-path cost samples of a trajectory under a control table.
pub fn cost_samples(scenario: &Scenario, x: &PathEnsemble, controls: &[DMatrix<f64>]) -> Vec<f64> {
    let grid = x.grid;
    let h = grid.step();
    let steps = grid.n_steps();
    let h0: Vec<DVector<f64>> = scenario.h0_table(grid);
    let w = scenario.running_weight;
    let mut total = vec![0.0; x.n_paths];
    let mut add_running = |m: usize, weight: f64| {
        for (k, col) in x.states[m].column_iter().enumerate() {
            let off = h0[m][k];
            for (t, v) in total.iter_mut().zip(col.iter()) {
                *t += weight * 0.5 * w * (v + off) * (v + off);
            }
        }
    };
    for m in 0..=steps {
        add_running(m, if m == 0 || m == steps { 0.5 * h } else { h });
    }
    for u in controls {
        for col in u.column_iter() {
            for (t, v) in total.iter_mut().zip(col.iter()) {
                *t += h * scenario.control_cost.value(*v);
            }
        }
    }
    let wt = scenario.terminal_weight;
    for (k, col) in x.states[steps].column_iter().enumerate() {
        let off = scenario.g0[k];
        for (t, v) in total.iter_mut().zip(col.iter()) {
            *t += 0.5 * wt * (v + off) * (v + off);
        }
    }
    total
}

/// `J(x, u)` with its Monte Carlo standard error.
pub fn cost_j(scenario: &Scenario, x: &PathEnsemble, controls: &[DMatrix<f64>]) -> Estimate {
    Estimate::from_samples(&cost_samples(scenario, x, controls))
}

/// Smooth deterministic control directions `v(t) = Σ_j c_j cos(jπt/T)` with `‖v‖_{L²(0,T;U)} = 1`.
pub fn smooth_directions(dim: usize, grid: TimeGrid, count: usize, harmonics: usize, seed: u64) -> Vec<Vec<DVector<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_end = grid.horizon();
    (0..count)
        .map(|_| {
            let coeffs: Vec<DVector<f64>> = (0..harmonics)
                .map(|_| DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let mut v: Vec<DVector<f64>> = (0..grid.n_steps())
                .map(|m| {
                    let t = grid.node(m);
                    coeffs.iter().enumerate().fold(DVector::zeros(dim), |acc, (j, c)| {
                        acc + c * (j as f64 * std::f64::consts::PI * t / t_end).cos()
                    })
                })
                .collect();
            let norm = (grid.step() * v.iter().map(|x| x.norm_squared()).sum::<f64>()).sqrt();
            for x in &mut v {
                *x /= norm;
            }
            v
        })
        .collect()
}

/// `J(u + εv)` for a deterministic direction, using that the state is affine in the control.
pub fn perturbed_cost(
    scenario: &Scenario,
    fwd: &ForwardModel,
    x: &PathEnsemble,
    controls: &[DMatrix<f64>],
    direction: &[DVector<f64>],
    eps: f64,
) -> Result<Vec<f64>> {
    let xt = fwd.perturbation_state(&crate::forward::ControlProcess::Deterministic(direction), 1)?;
    let moved_x = PathEnsemble {
        states: x
            .states
            .iter()
            .zip(&xt)
            .map(|(s, d)| {
                let mut out = s.clone();
                for (k, mut col) in out.column_iter_mut().enumerate() {
                    col.add_scalar_mut(eps * d[(0, k)]);
                }
                out
            })
            .collect(),
        ..x.clone()
    };
    let moved_u: Vec<DMatrix<f64>> = controls
        .iter()
        .zip(direction)
        .map(|(u, v)| {
            let mut out = u.clone();
            for (k, mut col) in out.column_iter_mut().enumerate() {
                col.add_scalar_mut(eps * v[k]);
            }
            out
        })
        .collect();
    Ok(cost_samples(scenario, &moved_x, &moved_u))
}

/// One row of the perturbation table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub direction: usize,
    pub eps: f64,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub central_slope: f64,
    pub worst_decrease: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Cost dominance `J(u) ≤ J(u ± εv) + 3·SE` and the central-difference slope over a set of directions.
pub fn perturbation_table(
    scenario: &Scenario,
    fwd: &ForwardModel,
    x: &PathEnsemble,
    controls: &[DMatrix<f64>],
    directions: &[Vec<DVector<f64>>],
    eps_list: &[f64],
    slope_tol: f64,
) -> Result<(Estimate, Vec<PerturbationRow>)> {
    let base = cost_samples(scenario, x, controls);
    let j = Estimate::from_samples(&base);
    let mut rows = Vec::new();
    for (d, v) in directions.iter().enumerate() {
        for &eps in eps_list {
            let plus = Estimate::from_samples(&perturbed_cost(scenario, fwd, x, controls, v, eps)?).mean;
            let minus = Estimate::from_samples(&perturbed_cost(scenario, fwd, x, controls, v, -eps)?).mean;
            let delta_plus = plus - j.mean;
            let delta_minus = minus - j.mean;
            let central_slope = (plus - minus) / (2.0 * eps);
            let worst = delta_plus.min(delta_minus);
            let tolerance = 3.0 * j.se;
            rows.push(PerturbationRow {
                direction: d,
                eps,
                delta_plus,
                delta_minus,
                central_slope,
                worst_decrease: worst,
                tolerance,
                passed: worst >= -tolerance && central_slope.abs() <= slope_tol,
            });
        }
    }
    Ok((j, rows))
}

/// Variational-inequality statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationalReport {
    pub samples: usize,
    pub max_violation: f64,
    pub mean_inner: f64,
    pub se: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Samples `(t, path)` and random `v` and evaluates `⟨H_u(t, X, ū, p), v − ū⟩`.
pub fn variational_inequality_check(
    scenario: &Scenario,
    solution: &FbsdeSolution,
    controls: &[DMatrix<f64>],
    n_samples: usize,
    seed: u64,
) -> VariationalReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = solution.x.grid.n_steps();
    let n_paths = solution.x.n_paths;
    let dim = scenario.control_dim();
    let mut inner = Vec::with_capacity(n_samples);
    let mut scale = 0.0;
    for _ in 0..n_samples {
        let m = rng.random_range(0..steps);
        let i = rng.random_range(0..n_paths);
        let u = controls[m].row(i).transpose();
        let p = solution.p.states[m].row(i).transpose();
        let hu = scenario.hamiltonian_u(&u, &p);
        let mut d = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        d /= d.norm();
        inner.push(hu.dot(&d));
        scale += (scenario.control_op.transpose() * &p).norm() + scenario.control_gradient(&u).norm();
    }
    let scale = scale / n_samples.max(1) as f64;
    let est = Estimate::from_samples(&inner);
    let max_violation = inner.iter().copied().fold(0.0f64, f64::max);
    let tolerance = (3.0 * est.se).max(1e-6 * scale);
    VariationalReport {
        samples: n_samples,
        max_violation,
        mean_inner: est.mean,
        se: est.se,
        tolerance,
        passed: max_violation <= tolerance,
    }
}

/// Duality identity `E⟨h_x(X_T), X̃_T⟩ + E∫⟨l⁰_x, X̃⟩dt = E∫⟨(E+B)(v−u), p⟩dt` for one direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualityReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub gap: f64,
    pub combined_se: f64,
    pub passed: bool,
}

pub fn duality_identity_check(
    scenario: &Scenario,
    fwd: &ForwardModel,
    solution: &FbsdeSolution,
    direction: &[DVector<f64>],
) -> Result<DualityReport> {
    let grid = solution.x.grid;
    let steps = grid.n_steps();
    let h = grid.step();
    let xt = fwd.perturbation_state(&crate::forward::ControlProcess::Deterministic(direction), 1)?;
    let xt: Vec<DVector<f64>> = xt.iter().map(|s| s.row(0).transpose()).collect();
    let forced: Vec<DVector<f64>> = direction
        .iter()
        .map(|v| fwd.phi.component_mul(&(&fwd.control_op * v)))
        .collect();
    let n_paths = solution.x.n_paths;

    let mut lhs = vec![0.0; n_paths];
    let mut rhs = vec![0.0; n_paths];
    let hx = scenario.terminal_gradient_rows(&solution.x.states[steps]);
    let term = &hx * &xt[steps];
    let mut running: Vec<DVector<f64>> = Vec::with_capacity(steps + 1);
    for m in 0..=steps {
        let lx = scenario.running_gradient_rows(grid.node(m), &solution.x.states[m]);
        let w = if m == 0 || m == steps { 0.5 * h } else { h };
        running.push(&lx * &xt[m] * w);
    }
    for i in 0..n_paths {
        lhs[i] = term[i] + running.iter().map(|r| r[i]).sum::<f64>();
    }
    for m in 0..steps {
        let pairing = &solution.p.states[m + 1] * &forced[m];
        for i in 0..n_paths {
            rhs[i] += pairing[i];
        }
    }
    let lhs = Estimate::from_samples(&lhs);
    let rhs = Estimate::from_samples(&rhs);
    let gap = (lhs.mean - rhs.mean).abs();
    let combined_se = (lhs.se * lhs.se + rhs.se * rhs.se).sqrt();
    Ok(DualityReport {
        lhs,
        rhs,
        gap,
        combined_se,
        passed: gap <= 3.0 * combined_se,
    })
}

/// Bundle of every certificate quantity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub scenario: String,
    pub j: Estimate,
    pub variational: VariationalReport,
    pub duality: Vec<DualityReport>,
    pub perturbations: Vec<PerturbationRow>,
    pub passed: bool,
}

/// Empirical constants of the structural assumptions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub samples: usize,
    pub declared: DeclaredConstants,
    pub running_monotonicity: f64,
    pub terminal_monotonicity: f64,
    pub gamma_dissipativity: f64,
    pub gamma_lipschitz: f64,
    pub growth: f64,
    pub gradient_max_rel_error: f64,
    /// Fitted log-log slope of `|e^{tA}G|_{L₂}`.
    pub noise_hs_slope: Option<f64>,
    /// Fitted log-log slope of `|e^{tA}(λ−A)D₁|_{L₂}`.
    pub boundary_hs_slope: f64,
    pub violations: Vec<String>,
    pub passed: bool,
}

const HS_MODES: usize = 1024;

/// Samples random pairs and confronts empirical constants with the declared ones.
pub fn validate_assumptions(scenario: &Scenario, n_samples: usize, seed: u64) -> Result<ValidationReport> {
    scenario.control_cost.validate()?;
    let n = scenario.n_modes();
    let dim = scenario.control_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |len: usize, s: f64| DVector::from_fn(len, |_, _| s * rng.sample::<f64, _>(StandardNormal));

    let mut run_mono = f64::INFINITY;
    let mut term_mono = f64::INFINITY;
    let mut gamma_diss = f64::INFINITY;
    let mut gamma_lip = 0.0f64;
    let mut growth = 0.0f64;
    let mut grad_err = 0.0f64;
    let t_end = 1.0;
    for s in 0..n_samples {
        let t = t_end * (s as f64 + 0.5) / n_samples as f64;
        let (x1, x2) = (normal(n, 2.0), normal(n, 2.0));
        let dx = &x1 - &x2;
        let d2 = dx.norm_squared();
        let lm = (scenario.running_gradient(t, &x1) - scenario.running_gradient(t, &x2)).dot(&dx) / d2;
        run_mono = run_mono.min(lm);
        let hm = (scenario.terminal_gradient(&x1) - scenario.terminal_gradient(&x2)).dot(&dx) / d2;
        term_mono = term_mono.min(hm);

        let (z1, z2) = (normal(dim, 3.0), normal(dim, 3.0));
        let dz = &z1 - &z2;
        let dg = scenario.gamma_vec(&z1) - scenario.gamma_vec(&z2);
        gamma_diss = gamma_diss.min(-dg.dot(&dz) / dz.norm_squared());
        gamma_lip = gamma_lip.max(dg.norm() / dz.norm());

        let u = normal(dim, 2.0);
        let lx = scenario.running_gradient(t, &x1).norm();
        let lu = scenario.control_gradient(&u).norm();
        growth = growth.max((lx + lu) / (1.0 + x1.norm() + u.norm()));

        if s < 100 {
            grad_err = grad_err.max(fd_error(|x| scenario.running_state_cost(t, x), &scenario.running_gradient(t, &x1), &x1));
            grad_err = grad_err.max(fd_error(|x| scenario.terminal_cost(x), &scenario.terminal_gradient(&x1), &x1));
            grad_err = grad_err.max(fd_error(|u| scenario.control_value(u), &scenario.control_gradient(&u), &u));
        }
    }

    let hs_model = SpectralModel::new(
        HS_MODES,
        scenario.model.lambda_shift(),
        scenario.model.frac_alpha(),
        scenario.model.frac_beta(),
    )?;
    let t_grid = log_grid(1e-4, 1e-1, 31);
    let hs_lifts = neumann_lift(&hs_model);
    let boundary_hs_slope = fit_loglog_slope(&t_grid, &hs_bound_profile(&hs_model, &hs_lifts, &t_grid)?);
    let noise_hs_slope = match &scenario.g_op {
        None => None,
        Some(g) => {
            let gm = MultiplicationOperator::assemble(&hs_model, g.profile.clone());
            Some(fit_loglog_slope(&t_grid, &hs_noise_profile(&hs_model, &gm, &t_grid)?))
        }
    };

    let declared = scenario.declared_constants();
    let mut violations = Vec::new();
    let rel = 1e-10;
    if !(run_mono > 0.0) {
        violations.push(format!("running cost gradient is not monotone (constant {run_mono:.3e})"));
    } else if run_mono < declared.running_monotonicity * (1.0 - rel) {
        violations.push(format!(
            "running monotonicity {run_mono:.6} below declared {}",
            declared.running_monotonicity
        ));
    }
    if !(term_mono > 0.0) {
        violations.push(format!("terminal cost is not convex (monotonicity constant {term_mono:.3e})"));
    }
    if gamma_diss < declared.gamma_dissipativity * (1.0 - 1e-6) {
        violations.push(format!("gamma dissipativity {gamma_diss:.6} below declared {}", declared.gamma_dissipativity));
    }
    if gamma_lip > declared.gamma_lipschitz * (1.0 + 1e-6) {
        violations.push(format!("gamma Lipschitz estimate {gamma_lip:.6} above declared {}", declared.gamma_lipschitz));
    }
    if growth > declared.growth * (1.0 + 1e-6) {
        violations.push(format!("linear growth constant {growth:.6} above declared {}", declared.growth));
    }
    if grad_err > 1e-5 {
        violations.push(format!("supplied gradients disagree with finite differences (relative error {grad_err:.3e})"));
    }
    if boundary_hs_slope < -0.5 - 0.03 {
        violations.push(format!("boundary noise smoothing exponent {boundary_hs_slope:.4} too singular"));
    }
    if let Some(s) = noise_hs_slope {
        if s <= -0.5 {
            violations.push(format!("distributed noise Hilbert-Schmidt exponent {s:.4} not below 1/2"));
        }
    }

    Ok(ValidationReport {
        scenario: scenario.name.clone(),
        samples: n_samples,
        declared,
        running_monotonicity: run_mono,
        terminal_monotonicity: term_mono,
        gamma_dissipativity: gamma_diss,
        gamma_lipschitz: gamma_lip,
        growth,
        gradient_max_rel_error: grad_err,
        noise_hs_slope,
        boundary_hs_slope,
        passed: violations.is_empty(),
        violations,
    })
}

/// Relative error of `grad` against central differences of `f` at `x`, probed along a fixed direction.
fn fd_error(f: impl Fn(&DVector<f64>) -> f64, grad: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let dir = DVector::from_fn(x.len(), |k, _| ((k as f64 + 1.0) * 0.7).sin());
    let dir = &dir / dir.norm();
    let eps = 1e-5 * (1.0 + x.norm());
    let fd = (f(&(x + &dir * eps)) - f(&(x - &dir * eps))) / (2.0 * eps);
    let exact = grad.dot(&dir);
    (fd - exact).abs() / exact.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gamma_examples() {
        let q = ControlCost::Quadratic { c: 1.0 };
        assert_eq!(q.gamma(0.0), 0.0);
        assert_eq!(q.gamma(1.7), -1.7);
        let s = ControlCost::Saturating { kappa: 0.25 };
        assert_eq!(s.gamma(0.0), 0.0);
        for z in [-5.0, -0.3, 0.01, 2.0, 40.0] {
            let u = s.gamma(z);
            assert!((s.derivative(u) + z).abs() < 1e-12, "z={z}");
            assert!((s.gamma_plus_identity(z) - (u + z)).abs() < 1e-12);
        }
    }

    #[test]
    fn saturating_value_is_stable() {
        let s = ControlCost::Saturating { kappa: 0.25 };
        assert!(s.value(800.0).is_finite());
        let u: f64 = 0.7;
        assert!((s.value(u) - (0.5 * u * u + 0.25 * u.cosh().ln())).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_costs() {
        assert!(ControlCost::Quadratic { c: 0.0 }.validate().is_err());
        assert!(ControlCost::Saturating { kappa: -0.5 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn gamma_is_dissipative(z1 in -20.0f64..20.0, z2 in -20.0f64..20.0, kappa in 0.0f64..2.0) {
            prop_assume!((z1 - z2).abs() > 1e-6);
            let g = ControlCost::Saturating { kappa };
            let lhs = (g.gamma(z1) - g.gamma(z2)) * (z1 - z2);
            prop_assert!(lhs <= -g.dissipativity() * (z1 - z2).powi(2) * (1.0 - 1e-9));
            prop_assert!((g.gamma(z1) - g.gamma(z2)).abs() <= g.gamma_lipschitz() * (z1 - z2).abs() * (1.0 + 1e-9));
        }

        #[test]
        fn argmin_ignores_additive_constants(z in -10.0f64..10.0) {
            // γ̃ only depends on g', so shifting g by a constant leaves it unchanged
            let g = ControlCost::Saturating { kappa: 0.25 };
            let u = g.gamma(z);
            let shifted = |v: f64| g.value(v) + 3.0;
            let fd = (shifted(u + 1e-6) - shifted(u - 1e-6)) / 2e-6;
            prop_assert!((fd + z).abs() < 1e-5 * (1.0 + z.abs()));
        }
    }
}
