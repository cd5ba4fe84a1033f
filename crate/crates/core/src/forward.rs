//! Exponential-Euler simulation of the controlled state equation.
//!
//! Ensembles are stored time-major: one `n_paths × n_modes` matrix per grid
//! node, so every per-step operation is a dense product over all paths.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::spectral::{phi1, step_variance, SpectralField, SpectralModel};
use crate::stats::Estimate;

/// Uniform grid `t_m = m·T/n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive (got {horizon})")));
        }
        if n_steps == 0 {
            return Err(Error::Config("n_steps must be positive".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn node(&self, m: usize) -> f64 {
        if m == self.n_steps {
            self.horizon
        } else {
            m as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|m| self.node(m)).collect()
    }
}

/// Gaussian increments shared by every simulation that must use common random numbers.
#[derive(Debug, Clone)]
pub struct NoiseEnsemble {
    seed: u64,
    grid: TimeGrid,
    n_paths: usize,
    n_modes: usize,
    /// `dw[m]` is `n_paths × n_modes`, increments of the truncated cylindrical process.
    dw: Vec<DMatrix<f64>>,
    /// `dwt[m]` holds the scalar boundary increments of every path.
    dwt: Vec<DVector<f64>>,
}

const GENERATION_CHUNK: usize = 512;

/// Draws `n_steps × (n_modes + 1)` increments per path; path `i` uses ChaCha8 stream `i` of `seed`.
pub fn sample_noise(grid: TimeGrid, n_modes: usize, n_paths: usize, seed: u64) -> Result<NoiseEnsemble> {
    if n_paths == 0 {
        return Err(Error::Config("n_paths must be positive".into()));
    }
    if n_modes == 0 {
        return Err(Error::Config("n_modes must be positive".into()));
    }
    let steps = grid.n_steps();
    let sqrt_h = grid.step().sqrt();
    let mut dw = vec![DMatrix::zeros(n_paths, n_modes); steps];
    let mut dwt = vec![DVector::zeros(n_paths); steps];
    let per_path = steps * (n_modes + 1);

    for chunk_start in (0..n_paths).step_by(GENERATION_CHUNK) {
        let chunk_end = (chunk_start + GENERATION_CHUNK).min(n_paths);
        let buffers: Vec<Vec<f64>> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|path| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(path as u64);
                (0..per_path).map(|_| StandardNormal.sample(&mut rng)).collect()
            })
            .collect();
        for (offset, buf) in buffers.iter().enumerate() {
            let path = chunk_start + offset;
            for m in 0..steps {
                let row = &buf[m * (n_modes + 1)..(m + 1) * (n_modes + 1)];
                for k in 0..n_modes {
                    dw[m][(path, k)] = sqrt_h * row[k];
                }
                dwt[m][path] = sqrt_h * row[n_modes];
            }
        }
    }

    Ok(NoiseEnsemble {
        seed,
        grid,
        n_paths,
        n_modes,
        dw,
        dwt,
    })
}

impl NoiseEnsemble {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dw(&self, step: usize) -> &DMatrix<f64> {
        &self.dw[step]
    }

    pub fn dwt(&self, step: usize) -> &DVector<f64> {
        &self.dwt[step]
    }

    /// SHA-256 over the dimensions and every stored increment.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.n_paths as u64).to_le_bytes());
        hasher.update((self.grid.n_steps() as u64).to_le_bytes());
        hasher.update((self.n_modes as u64).to_le_bytes());
        for (dw, dwt) in self.dw.iter().zip(&self.dwt) {
            for v in dw.iter().chain(dwt.iter()) {
                hasher.update(v.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Noise operators of the state equation.
#[derive(Debug, Clone, Default)]
pub struct NoiseSpec {
    /// Matrix of `G` on the truncated basis.
    pub distributed: Option<DMatrix<f64>>,
    /// Coefficients of `(λ − A)D₁`, already multiplied by any scalar intensity.
    pub boundary: Option<DVector<f64>>,
}

/// A seeded ensemble of trajectories.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub n_modes: usize,
    pub seed: Option<u64>,
    /// `states[m]` is `n_paths × n_modes`.
    pub states: Vec<DMatrix<f64>>,
}

impl PathEnsemble {
    pub fn state(&self, path: usize, m: usize) -> SpectralField {
        SpectralField {
            coeffs: self.states[m].row(path).transpose(),
        }
    }

    /// Per-mode sample means at node `m`.
    pub fn mean(&self, m: usize) -> DVector<f64> {
        self.states[m].row_mean().transpose()
    }

    /// `E‖X_m‖²` per path, as samples.
    pub fn sq_norms(&self, m: usize) -> Vec<f64> {
        self.states[m].row_iter().map(|r| r.norm_squared()).collect()
    }

    /// `E‖X_m‖²` at every node.
    ///
    /// Where all paths coincide the sample error is pure rounding. Such a node
    /// takes the delta-method error `2·(x̄ᵀ Cov(X_{m+1}) x̄ / N)^{1/2}` of an average
    /// over the next node, the error of a regression estimate at a deterministic state.
    pub fn sq_norm_estimates(&self) -> Vec<Estimate> {
        let nodes = self.states.len();
        let n = self.n_paths as f64;
        (0..nodes)
            .map(|m| {
                let mut e = Estimate::from_samples(&self.sq_norms(m));
                if e.se <= 1e-12 * (1.0 + e.mean.abs()) && m + 1 < nodes && self.n_paths > 1 {
                    let xbar = self.mean(m);
                    let next = &self.states[m + 1];
                    let centred = next - DMatrix::from_fn(next.nrows(), next.ncols(), |_, k| next.column(k).mean());
                    let proj = &centred * &xbar;
                    let var = proj.norm_squared() / (n - 1.0);
                    e.se = 2.0 * (var / n).sqrt();
                }
                e
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Control entering through `E + B`, in the flattened `(u0, u1, u2)` layout.
pub enum ControlProcess<'a> {
    Zero,
    /// One control vector per step, shared by all paths.
    Deterministic(&'a [DVector<f64>]),
    /// `n_paths × (n_modes + 2)` per step.
    OpenLoop(&'a [DMatrix<f64>]),
    /// Evaluated on the current states at every step.
    Feedback(&'a (dyn Fn(usize, &DMatrix<f64>) -> DMatrix<f64> + Sync)),
}

/// Affine drift `b0` added to the forcing.
pub enum Forcing<'a> {
    Zero,
    Deterministic(&'a [DVector<f64>]),
    PerPath(&'a [DMatrix<f64>]),
}

/// Per-step operators of the exponential-Euler scheme.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    pub model: SpectralModel,
    pub grid: TimeGrid,
    /// `E + B` as an `n × (n + 2)` matrix.
    pub control_op: DMatrix<f64>,
    /// `e^{a_k h}`.
    pub decay: DVector<f64>,
    /// `(e^{a_k h} − 1)/a_k`.
    pub phi: DVector<f64>,
    dist_factor: Option<DMatrix<f64>>,
    boundary_factor: Option<DVector<f64>>,
}

impl ForwardModel {
    pub fn new(model: &SpectralModel, grid: TimeGrid, control_op: DMatrix<f64>, noise: &NoiseSpec) -> Result<Self> {
        let n = model.n_modes();
        if control_op.nrows() != n || control_op.ncols() != n + 2 {
            return Err(Error::Dimension {
                context: "control operator rows",
                expected: n,
                actual: control_op.nrows(),
            });
        }
        let h = grid.step();
        let a = model.eigenvalues();
        let decay = DVector::from_fn(n, |k, _| (a[k] * h).exp());
        let phi = DVector::from_fn(n, |k, _| phi1(a[k], h));

        // Covariance of ∫₀ʰ e^{(h−s)A} G dW_s is (GGᵀ)_ij·∫₀ʰ e^{(a_i+a_j)s} ds.
        let dist_factor = match &noise.distributed {
            None => None,
            Some(g) => {
                if g.nrows() != n || g.ncols() != n {
                    return Err(Error::Dimension {
                        context: "distributed noise operator",
                        expected: n,
                        actual: g.nrows(),
                    });
                }
                let ggt = g * g.transpose();
                let cov = DMatrix::from_fn(n, n, |i, j| ggt[(i, j)] * phi1(a[i] + a[j], h));
                let root = symmetric_sqrt(&cov);
                Some(root.transpose() / h.sqrt())
            }
        };
        let boundary_factor = match &noise.boundary {
            None => None,
            Some(col) => {
                model.check_len(col.len(), "boundary noise column")?;
                Some(DVector::from_fn(n, |k, _| col[k] * (step_variance(a[k], h) / h).sqrt()))
            }
        };
        Ok(Self {
            model: model.clone(),
            grid,
            control_op,
            decay,
            phi,
            dist_factor,
            boundary_factor,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.model.n_modes()
    }

    pub fn has_noise(&self) -> bool {
        self.dist_factor.is_some() || self.boundary_factor.is_some()
    }

    /// Runs the scheme with an arbitrary forcing `F_m(X_m)`, which replaces `(E+B)u_m + b0_m`.
    pub fn simulate_with<F>(
        &self,
        x0: &SpectralField,
        n_paths: usize,
        noise: Option<&NoiseEnsemble>,
        mut forcing: F,
    ) -> Result<PathEnsemble>
    where
        F: FnMut(usize, &DMatrix<f64>) -> Result<Option<DMatrix<f64>>>,
    {
        let n = self.n_modes();
        self.model.check_len(x0.len(), "initial state")?;
        if n_paths == 0 {
            return Err(Error::Config("n_paths must be positive".into()));
        }
        if let Some(noise) = noise {
            if noise.n_paths() != n_paths || noise.grid() != self.grid || noise.n_modes() != n {
                return Err(Error::Config(format!(
                    "noise ensemble ({} paths, {} steps, {} modes) does not match the simulation ({} paths, {} steps, {} modes)",
                    noise.n_paths(),
                    noise.grid().n_steps(),
                    noise.n_modes(),
                    n_paths,
                    self.grid.n_steps(),
                    n
                )));
            }
        }
        let mut states = Vec::with_capacity(self.grid.n_nodes());
        let mut x = DMatrix::from_fn(n_paths, n, |_, k| x0.coeffs[k]);
        states.push(x.clone());

        for m in 0..self.grid.n_steps() {
            let f = forcing(m, &x)?;
            let mut next = x;
            scale_columns(&mut next, &self.decay);
            if let Some(f) = f {
                if f.nrows() != n_paths || f.ncols() != n {
                    return Err(Error::Dimension {
                        context: "forcing",
                        expected: n_paths * n,
                        actual: f.nrows() * f.ncols(),
                    });
                }
                axpy_scaled_columns(&mut next, &f, &self.phi);
            }
            if let Some(noise) = noise {
                if let Some(factor) = &self.dist_factor {
                    next.gemm(1.0, noise.dw(m), factor, 1.0);
                }
                if let Some(b) = &self.boundary_factor {
                    let dwt = noise.dwt(m);
                    for k in 0..n {
                        let bk = b[k];
                        for (v, w) in next.column_mut(k).iter_mut().zip(dwt.iter()) {
                            *v += bk * w;
                        }
                    }
                }
            }
            check_finite(&next, m + 1)?;
            states.push(next.clone());
            x = next;
        }

        Ok(PathEnsemble {
            grid: self.grid,
            n_paths,
            n_modes: n,
            seed: noise.map(|z| z.seed()),
            states,
        })
    }

    /// Mild state equation driven by a control process and an affine drift.
    pub fn simulate(
        &self,
        x0: &SpectralField,
        control: &ControlProcess<'_>,
        b0: &Forcing<'_>,
        noise: Option<&NoiseEnsemble>,
        n_paths: usize,
    ) -> Result<PathEnsemble> {
        let c_t = self.control_op.transpose();
        self.simulate_with(x0, n_paths, noise, |m, x| {
            let mut f = self.control_forcing(control, m, x, &c_t)?;
            match b0 {
                Forcing::Zero => {}
                Forcing::Deterministic(table) => {
                    let b = &table[m];
                    let target = f.get_or_insert_with(|| DMatrix::zeros(x.nrows(), x.ncols()));
                    for (k, mut col) in target.column_iter_mut().enumerate() {
                        col.add_scalar_mut(b[k]);
                    }
                }
                Forcing::PerPath(table) => match &mut f {
                    Some(f) => *f += &table[m],
                    None => f = Some(table[m].clone()),
                },
            }
            Ok(f)
        })
    }

    fn control_forcing(
        &self,
        control: &ControlProcess<'_>,
        m: usize,
        x: &DMatrix<f64>,
        c_t: &DMatrix<f64>,
    ) -> Result<Option<DMatrix<f64>>> {
        let n_paths = x.nrows();
        let dim = self.n_modes() + 2;
        Ok(match control {
            ControlProcess::Zero => None,
            ControlProcess::Deterministic(table) => {
                let drift = &self.control_op * &table[m];
                Some(DMatrix::from_fn(n_paths, self.n_modes(), |_, k| drift[k]))
            }
            ControlProcess::OpenLoop(table) => {
                let u = &table[m];
                if u.nrows() != n_paths || u.ncols() != dim {
                    return Err(Error::Dimension {
                        context: "open-loop control",
                        expected: n_paths * dim,
                        actual: u.nrows() * u.ncols(),
                    });
                }
                Some(u * c_t)
            }
            ControlProcess::Feedback(map) => {
                let u = map(m, x);
                if u.nrows() != n_paths || u.ncols() != dim {
                    return Err(Error::Dimension {
                        context: "feedback control",
                        expected: n_paths * dim,
                        actual: u.nrows() * u.ncols(),
                    });
                }
                Some(u * c_t)
            }
        })
    }

    /// First variation `X̃` of the state in the control direction `dv`, zero initial condition.
    pub fn perturbation_state(&self, dv: &ControlProcess<'_>, n_paths: usize) -> Result<Vec<DMatrix<f64>>> {
        let zero = SpectralField::zeros(self.n_modes());
        let ens = self.simulate(&zero, dv, &Forcing::Zero, None, n_paths)?;
        Ok(ens.states)
    }
}

/// Symmetric PSD square root via the eigendecomposition, negative round-off clipped.
pub fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

pub(crate) fn scale_columns(x: &mut DMatrix<f64>, s: &DVector<f64>) {
    for (k, mut col) in x.column_iter_mut().enumerate() {
        col *= s[k];
    }
}

pub(crate) fn axpy_scaled_columns(x: &mut DMatrix<f64>, f: &DMatrix<f64>, s: &DVector<f64>) {
    for k in 0..x.ncols() {
        let sk = s[k];
        for (v, w) in x.column_mut(k).iter_mut().zip(f.column(k).iter()) {
            *v += sk * w;
        }
    }
}

fn check_finite(x: &DMatrix<f64>, step: usize) -> Result<()> {
    for k in 0..x.ncols() {
        if let Some(path) = x.column(k).iter().position(|v| !v.is_finite()) {
            return Err(Error::ForwardBlowUp { step, path, mode: k });
        }
    }
    Ok(())
}
