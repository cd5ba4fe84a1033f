//! The auxiliary linear-quadratic problem: Riccati equation, affine costate
//! term and the closed-loop linear FBSDE.
//!
//! Backward time `τ = T − t` is used internally. The Riccati equation reads
//! `dP/dτ = A P + P A − P M P + Q` with `P(τ=0)` the terminal weight, and the
//! affine term solves `−dr = (A − P M) r dt + (P b0 + h0) dt`, `r_T = g0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{axpy_scaled_columns, scale_columns, Forcing, ForwardModel, NoiseEnsemble, PathEnsemble, TimeGrid};
use crate::regression::regress;
use crate::spectral::{SpectralField, SpectralModel};

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RiccatiScheme {
    /// Exponential of the Hamiltonian block matrix, exact for constant coefficients.
    MatrixFraction,
    /// Classical Runge–Kutta with a fixed number of substeps per grid step.
    Rk4 { substeps_per_step: usize },
}

/// `P` at every grid node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub p: Vec<DMatrix<f64>>,
}

/// Solves the Riccati equation backward from `P_T = terminal`.
pub fn solve_riccati(
    model: &SpectralModel,
    gain: &DMatrix<f64>,
    state_weight: &DMatrix<f64>,
    terminal: &DMatrix<f64>,
    grid: TimeGrid,
    scheme: RiccatiScheme,
) -> Result<RiccatiSolution> {
    let n = model.n_modes();
    for (m, ctx) in [(gain, "riccati gain"), (state_weight, "riccati state weight"), (terminal, "riccati terminal weight")] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Dimension {
                context: ctx,
                expected: n,
                actual: m.nrows(),
            });
        }
    }
    let a = model.generator_matrix();
    let steps = grid.n_steps();
    let h = grid.step();
    let mut p = vec![DMatrix::zeros(n, n); steps + 1];
    p[steps] = terminal.clone();
    check_node(&p[steps], steps)?;

    match scheme {
        RiccatiScheme::MatrixFraction => {
            let amax = model.eigenvalues().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let scale = amax + gain.norm() + state_weight.norm();
            let substeps = ((h * scale) / 2.0).ceil().max(1.0) as usize;
            let hs = h / substeps as f64;
            let mut ham = DMatrix::zeros(2 * n, 2 * n);
            ham.view_mut((0, 0), (n, n)).copy_from(&(-&a * hs));
            ham.view_mut((0, n), (n, n)).copy_from(&(gain * hs));
            ham.view_mut((n, 0), (n, n)).copy_from(&(state_weight * hs));
            ham.view_mut((n, n), (n, n)).copy_from(&(&a * hs));
            let phi = ham.exp();
            let (p11, p12) = (phi.view((0, 0), (n, n)).into_owned(), phi.view((0, n), (n, n)).into_owned());
            let (p21, p22) = (phi.view((n, 0), (n, n)).into_owned(), phi.view((n, n), (n, n)).into_owned());
            for m in (0..steps).rev() {
                let mut cur = p[m + 1].clone();
                for _ in 0..substeps {
                    let x = &p11 + &p12 * &cur;
                    let y = &p21 + &p22 * &cur;
                    // P = Y X⁻¹  ⇔  Xᵀ Pᵀ = Yᵀ
                    let lu = x.transpose().lu();
                    let sol = lu.solve(&y.transpose()).ok_or(Error::SingularDenominator { node: m })?;
                    if !sol.iter().all(|v| v.is_finite()) {
                        return Err(Error::SingularDenominator { node: m });
                    }
                    cur = sol.transpose();
                }
                check_node(&cur, m)?;
                p[m] = symmetrize(&cur);
            }
        }
        RiccatiScheme::Rk4 { substeps_per_step } => {
            let substeps = substeps_per_step.max(1);
            let hs = h / substeps as f64;
            let f = |p: &DMatrix<f64>| -> DMatrix<f64> { &a * p + p * &a - p * gain * p + state_weight };
            for m in (0..steps).rev() {
                let mut cur = p[m + 1].clone();
                for _ in 0..substeps {
                    let k1 = f(&cur);
                    let k2 = f(&(&cur + &k1 * (0.5 * hs)));
                    let k3 = f(&(&cur + &k2 * (0.5 * hs)));
                    let k4 = f(&(&cur + &k3 * hs));
                    cur += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (hs / 6.0);
                }
                check_node(&cur, m)?;
                p[m] = symmetrize(&cur);
            }
        }
    }
    Ok(RiccatiSolution { grid, p })
}

fn check_node(p: &DMatrix<f64>, node: usize) -> Result<()> {
    let scale = p.amax().max(1.0);
    let asym = (p - p.transpose()).amax();
    if !(asym <= SYMMETRY_TOL * scale) {
        return Err(Error::RiccatiDefect {
            property: "symmetry",
            node,
            defect: asym,
        });
    }
    let min_eig = SymmetricEigen::new(symmetrize(p)).eigenvalues.min();
    if !(min_eig >= -PSD_TOL * scale) {
        return Err(Error::RiccatiDefect {
            property: "positive semidefiniteness",
            node,
            defect: min_eig,
        });
    }
    Ok(())
}

fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

impl RiccatiSolution {
    pub fn max_asymmetry(&self) -> f64 {
        self.p.iter().map(|p| (p - p.transpose()).amax()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.p
            .iter()
            .map(|p| SymmetricEigen::new(p.clone()).eigenvalues.min())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.p.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &RiccatiSolution) -> f64 {
        self.p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }
}

/// `(T−t)^e·‖(λ−A)^e P_t‖₂` at every node.
pub fn weighted_profile_riccati(model: &SpectralModel, sol: &RiccatiSolution, exponent: f64) -> Vec<f64> {
    let w = model.fractional_weights(exponent);
    let t_end = sol.grid.horizon();
    sol.p
        .iter()
        .enumerate()
        .map(|(m, p)| {
            let weighted = DMatrix::from_diagonal(&w) * p;
            let norm = weighted.singular_values().max();
            time_weight(t_end - sol.grid.node(m), exponent) * norm
        })
        .collect()
}

/// `(T−t)^e·(E‖(λ−A)^e p_t‖²)^{1/2}` for an ensemble of costates.
pub fn weighted_profile_ensemble(model: &SpectralModel, p: &PathEnsemble, exponent: f64) -> Vec<f64> {
    let w = model.fractional_weights(exponent);
    let t_end = p.grid.horizon();
    p.states
        .iter()
        .enumerate()
        .map(|(m, s)| {
            let mut weighted = s.clone();
            scale_columns(&mut weighted, &w);
            let rms = (weighted.norm_squared() / s.nrows() as f64).sqrt();
            time_weight(t_end - p.grid.node(m), exponent) * rms
        })
        .collect()
}

fn time_weight(tau: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        1.0
    } else {
        tau.max(0.0).powf(exponent)
    }
}

/// Values of the affine term.
#[derive(Debug, Clone)]
pub enum AffineValues {
    Deterministic(Vec<DVector<f64>>),
    /// `n_paths × n_modes` per node.
    PerPath(Vec<DMatrix<f64>>),
}

/// The affine part `r` of the costate decomposition.
#[derive(Debug, Clone)]
pub struct AffineTerm {
    pub grid: TimeGrid,
    pub values: AffineValues,
    /// Length of the sub-intervals on which the fixed point was iterated (deterministic mode).
    pub block_steps: Option<usize>,
    pub sweeps: usize,
}

/// Per-step operators shared by all affine solves with a given Riccati solution.
#[derive(Debug, Clone)]
pub struct AffineOperators {
    pub grid: TimeGrid,
    pub riccati: RiccatiSolution,
    pub gain: DMatrix<f64>,
    pub decay: DVector<f64>,
    pub phi: DVector<f64>,
    /// `(I + diag(Φ) P_m M)⁻¹`, transposed for row-major application.
    k_t: Vec<DMatrix<f64>>,
}

/// Options of the sub-interval fixed-point iteration.
#[derive(Debug, Clone, Copy)]
pub struct GammaOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Initial sub-interval length in steps; `None` starts from the whole horizon.
    pub initial_block: Option<usize>,
}

impl Default for GammaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_sweeps: 200,
            initial_block: None,
        }
    }
}

impl AffineOperators {
    pub fn new(fwd: &ForwardModel, riccati: RiccatiSolution, gain: DMatrix<f64>) -> Result<Self> {
        let grid = riccati.grid;
        if grid != fwd.grid {
            return Err(Error::Config("riccati and forward grids differ".into()));
        }
        let n = fwd.n_modes();
        let mut k_t = Vec::with_capacity(grid.n_steps());
        for m in 0..grid.n_steps() {
            let mut mat = DMatrix::from_diagonal(&fwd.phi) * &riccati.p[m] * &gain;
            for i in 0..n {
                mat[(i, i)] += 1.0;
            }
            let inv = mat.try_inverse().ok_or(Error::SingularDenominator { node: m })?;
            k_t.push(inv.transpose());
        }
        Ok(Self {
            grid,
            riccati,
            gain,
            decay: fwd.decay.clone(),
            phi: fwd.phi.clone(),
            k_t,
        })
    }

    fn source(&self, m: usize, b0: &[DVector<f64>], h0: &[DVector<f64>]) -> DVector<f64> {
        &self.riccati.p[m] * &b0[m] + &h0[m]
    }

    fn check_tables(&self, b0: &[DVector<f64>], h0: &[DVector<f64>], g0: &DVector<f64>) -> Result<()> {
        let steps = self.grid.n_steps();
        if b0.len() < steps || h0.len() < steps {
            return Err(Error::Dimension {
                context: "affine data tables",
                expected: steps,
                actual: b0.len().min(h0.len()),
            });
        }
        if g0.len() != self.decay.len() {
            return Err(Error::Dimension {
                context: "terminal affine datum",
                expected: self.decay.len(),
                actual: g0.len(),
            });
        }
        Ok(())
    }

    /// Deterministic affine term by direct solution of the implicit step.
    pub fn solve_direct(&self, b0: &[DVector<f64>], h0: &[DVector<f64>], g0: &DVector<f64>) -> Result<AffineTerm> {
        self.check_tables(b0, h0, g0)?;
        let steps = self.grid.n_steps();
        let mut r = vec![DVector::zeros(g0.len()); steps + 1];
        r[steps] = g0.clone();
        for m in (0..steps).rev() {
            let rhs = self.decay.component_mul(&r[m + 1]) + self.phi.component_mul(&self.source(m, b0, h0));
            r[m] = self.k_t[m].transpose() * rhs;
        }
        Ok(AffineTerm {
            grid: self.grid,
            values: AffineValues::Deterministic(r),
            block_steps: None,
            sweeps: 0,
        })
    }

    /// Deterministic affine term through the fixed-point map on backward sub-intervals.
    ///
    /// On each sub-interval the sweep `r_m ← e^{hA} r_{m+1} + Φ∘(−P_m M r'_m + P_m b0_m + h0_m)`,
    /// with `r'` the previous sweep, is iterated to `tol`. The sub-interval is halved until
    /// the second sweep moves at most half as far as the first.
    pub fn solve_fixed_point(
        &self,
        b0: &[DVector<f64>],
        h0: &[DVector<f64>],
        g0: &DVector<f64>,
        opts: GammaOptions,
    ) -> Result<AffineTerm> {
        self.check_tables(b0, h0, g0)?;
        let steps = self.grid.n_steps();
        let n = g0.len();
        let sources: Vec<DVector<f64>> = (0..steps).map(|m| self.source(m, b0, h0)).collect();
        let mut r = vec![DVector::zeros(n); steps + 1];
        r[steps] = g0.clone();
        let mut block = opts.initial_block.unwrap_or(steps).clamp(1, steps);
        let mut end = steps;
        let mut total_sweeps = 0;

        while end > 0 {
            let start = end.saturating_sub(block);
            let outcome = self.iterate_block(&mut r, start, end, &sources, opts)?;
            match outcome {
                BlockOutcome::Converged(sweeps) => {
                    total_sweeps += sweeps;
                    end = start;
                }
                BlockOutcome::SlowStart => {
                    if block == 1 {
                        return Err(Error::NonContraction {
                            delta_steps: 1,
                            update: f64::NAN,
                        });
                    }
                    block = (block / 2).max(1);
                }
            }
        }
        Ok(AffineTerm {
            grid: self.grid,
            values: AffineValues::Deterministic(r),
            block_steps: Some(block),
            sweeps: total_sweeps,
        })
    }

    fn iterate_block(
        &self,
        r: &mut [DVector<f64>],
        start: usize,
        end: usize,
        sources: &[DVector<f64>],
        opts: GammaOptions,
    ) -> Result<BlockOutcome> {
        let h = self.grid.step();
        for m in (start..end).rev() {
            let tau = (end - m) as f64 * h;
            r[m] = DVector::from_fn(r[end].len(), |k, _| (self.decay[k].ln() / h * tau).exp() * r[end][k]);
        }
        let mut updates: Vec<f64> = Vec::new();
        let mut growth = 0;
        for sweep in 1..=opts.max_sweeps {
            let old: Vec<DVector<f64>> = r[start..end].to_vec();
            let mut update = 0.0f64;
            let mut scale = r[end].amax();
            for m in (start..end).rev() {
                let coupling = &self.riccati.p[m] * (&self.gain * &old[m - start]);
                let drive = &sources[m] - coupling;
                let new = self.decay.component_mul(&r[m + 1]) + self.phi.component_mul(&drive);
                update = update.max((&new - &old[m - start]).amax());
                scale = scale.max(new.amax());
                r[m] = new;
            }
            if !update.is_finite() {
                return Err(Error::NonContraction {
                    delta_steps: end - start,
                    update,
                });
            }
            let tol = opts.tol * scale.max(1.0);
            if update <= tol {
                return Ok(BlockOutcome::Converged(sweep));
            }
            if let Some(&last) = updates.last() {
                if sweep == 2 && update > 0.5 * last {
                    return Ok(BlockOutcome::SlowStart);
                }
                if update > last {
                    growth += 1;
                    if growth >= 3 {
                        return Err(Error::NonContraction {
                            delta_steps: end - start,
                            update,
                        });
                    }
                } else {
                    growth = 0;
                }
            }
            updates.push(update);
        }
        Err(Error::NonContraction {
            delta_steps: end - start,
            update: updates.last().copied().unwrap_or(f64::NAN),
        })
    }

    /// Per-path affine term by backward least-squares Monte Carlo.
    ///
    /// `data(m)` returns the per-path `(b0_m, h0_m)`; `basis(m)` the regression
    /// basis at node `m`, which must be measurable with respect to the path up to `t_m`.
    pub fn solve_stochastic<D, B>(&self, g0: DMatrix<f64>, mut data: D, mut basis: B) -> Result<AffineTerm>
    where
        D: FnMut(usize) -> Result<(Option<DMatrix<f64>>, Option<DMatrix<f64>>)>,
        B: FnMut(usize) -> DMatrix<f64>,
    {
        let steps = self.grid.n_steps();
        let mut r: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); steps + 1];
        r[steps] = g0;
        for m in (0..steps).rev() {
            let mut next = r[m + 1].clone();
            scale_columns(&mut next, &self.decay);
            let mut rhs = regress(&basis(m), &next).fitted;
            let (b0, h0) = data(m)?;
            let mut src = match b0 {
                Some(b) => Some(b * &self.riccati.p[m]),
                None => None,
            };
            if let Some(h) = h0 {
                match &mut src {
                    Some(s) => *s += h,
                    None => src = Some(h),
                }
            }
            if let Some(s) = src {
                axpy_scaled_columns(&mut rhs, &s, &self.phi);
            }
            r[m] = rhs * &self.k_t[m];
        }
        Ok(AffineTerm {
            grid: self.grid,
            values: AffineValues::PerPath(r),
            block_steps: None,
            sweeps: 0,
        })
    }
}

enum BlockOutcome {
    Converged(usize),
    SlowStart,
}

/// Paired forward state and costate ensembles.
#[derive(Debug, Clone)]
pub struct FbsdeSolution {
    pub theta: f64,
    pub x: PathEnsemble,
    /// Costate `p`, the backward component with reversed sign.
    pub p: PathEnsemble,
    /// Per-path forcing used on each step by the forward pass.
    pub forcing: Vec<DMatrix<f64>>,
    /// Estimates of the distributed-noise integrand, `n × n` per step.
    pub z: Vec<DMatrix<f64>>,
    /// Estimates of the boundary-noise integrand per step.
    pub z_tilde: Vec<DVector<f64>>,
    pub noise_fingerprint: Option<String>,
}

/// Closed-loop forward equation `dX = (AX − M(P X + r) + b0)dt + noise`, costate `p = P X + r`.
pub fn assemble_linear_fbsde(
    fwd: &ForwardModel,
    ops: &AffineOperators,
    affine: &AffineTerm,
    b0: &Forcing<'_>,
    x0: &SpectralField,
    noise: Option<&NoiseEnsemble>,
    n_paths: usize,
) -> Result<FbsdeSolution> {
    let mut sol = assemble_without_integrands(fwd, ops, affine, b0, x0, noise, n_paths)?;
    (sol.z, sol.z_tilde) = integrand_estimates(&sol.p, noise);
    Ok(sol)
}

/// As [`assemble_linear_fbsde`], leaving `z` and `z_tilde` empty.
pub(crate) fn assemble_without_integrands(
    fwd: &ForwardModel,
    ops: &AffineOperators,
    affine: &AffineTerm,
    b0: &Forcing<'_>,
    x0: &SpectralField,
    noise: Option<&NoiseEnsemble>,
    n_paths: usize,
) -> Result<FbsdeSolution> {
    let n = fwd.n_modes();
    let r_row = |m: usize, paths: usize| -> DMatrix<f64> {
        match &affine.values {
            AffineValues::Deterministic(r) => DMatrix::from_fn(paths, n, |_, k| r[m][k]),
            AffineValues::PerPath(r) => r[m].clone(),
        }
    };
    let mut forcing_log: Vec<DMatrix<f64>> = Vec::with_capacity(fwd.grid.n_steps());
    let x = fwd.simulate_with(x0, n_paths, noise, |m, x| {
        let p = x * &ops.riccati.p[m] + r_row(m, x.nrows());
        let mut f = -(p * &ops.gain);
        match b0 {
            Forcing::Zero => {}
            Forcing::Deterministic(t) => {
                for (k, mut col) in f.column_iter_mut().enumerate() {
                    col.add_scalar_mut(t[m][k]);
                }
            }
            Forcing::PerPath(t) => f += &t[m],
        }
        forcing_log.push(f.clone());
        Ok(Some(f))
    })?;
    let p_states: Vec<DMatrix<f64>> = x
        .states
        .iter()
        .enumerate()
        .map(|(m, s)| s * &ops.riccati.p[m] + r_row(m, s.nrows()))
        .collect();
    let p = PathEnsemble {
        grid: x.grid,
        n_paths,
        n_modes: n,
        seed: x.seed,
        states: p_states,
    };
    Ok(FbsdeSolution {
        theta: 0.0,
        x,
        p,
        forcing: forcing_log,
        z: Vec::new(),
        z_tilde: Vec::new(),
        noise_fingerprint: noise.map(|z| z.fingerprint()),
    })
}

/// `E[p_{m+1} ΔW_mᵀ]/h` and `E[p_{m+1} ΔW̃_m]/h`, the constant-basis regression of the integrands.
pub fn integrand_estimates(p: &PathEnsemble, noise: Option<&NoiseEnsemble>) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let Some(noise) = noise else {
        return (Vec::new(), Vec::new());
    };
    let h = p.grid.step();
    let scale = 1.0 / (p.n_paths as f64 * h);
    let steps = p.grid.n_steps();
    let z = (0..steps).map(|m| p.states[m + 1].tr_mul(noise.dw(m)) * scale).collect();
    let z_tilde = (0..steps).map(|m| p.states[m + 1].tr_mul(noise.dwt(m)) * scale).collect();
    (z, z_tilde)
}
