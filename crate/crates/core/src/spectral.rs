//! Neumann Laplacian on (0, π) in its cosine eigenbasis.
//!
//! Everything here is diagonal or explicitly assembled on the truncated basis
//! `e_0 = 1/√π`, `e_k(ξ) = √(2/π)·cos(kξ)`, with eigenvalues `a_k = −k²`.
//! The boundary operators are represented through their action on the basis:
//! `E = (λ − A)D` maps the two Neumann data to the coefficient vectors
//! `−e_k(0)` and `e_k(π)`, obtained by integrating by parts against `e_k`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncated spectral description of the state space `H = L²(0, π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralModel {
    n_modes: usize,
    lambda_shift: f64,
    frac_alpha: f64,
    frac_beta: f64,
    eigenvalues: Vec<f64>,
}

impl SpectralModel {
    pub fn new(n_modes: usize, lambda_shift: f64, frac_alpha: f64, frac_beta: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if n_modes < 2 {
            problems.push(format!("n_modes must be at least 2 (got {n_modes})"));
        }
        if !(lambda_shift > 0.0 && lambda_shift.is_finite()) {
            problems.push(format!("lambda_shift must be positive (got {lambda_shift})"));
        }
        if !(frac_alpha > 0.5 && frac_alpha < 0.75) {
            problems.push(format!("frac_alpha must lie in (1/2, 3/4) (got {frac_alpha})"));
        }
        if !(frac_beta > 0.5 && frac_beta < 1.0) {
            problems.push(format!("frac_beta must lie in (1/2, 1) (got {frac_beta})"));
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        let eigenvalues = (0..n_modes).map(|k| -((k * k) as f64)).collect();
        Ok(Self {
            n_modes,
            lambda_shift,
            frac_alpha,
            frac_beta,
            eigenvalues,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn lambda_shift(&self) -> f64 {
        self.lambda_shift
    }

    pub fn frac_alpha(&self) -> f64 {
        self.frac_alpha
    }

    pub fn frac_beta(&self) -> f64 {
        self.frac_beta
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k]
    }

    /// `A` as a dense diagonal matrix.
    pub fn generator_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues))
    }

    /// Value of the k-th basis function at ξ.
    pub fn basis(&self, k: usize, xi: f64) -> f64 {
        if k == 0 {
            1.0 / PI.sqrt()
        } else {
            (2.0 / PI).sqrt() * (k as f64 * xi).cos()
        }
    }

    /// `e_k(0)`.
    pub fn basis_at_left(&self, k: usize) -> f64 {
        self.basis(k, 0.0)
    }

    /// `e_k(π)`, written with the exact sign `(−1)^k`.
    pub fn basis_at_right(&self, k: usize) -> f64 {
        let left = self.basis_at_left(k);
        if k % 2 == 0 {
            left
        } else {
            -left
        }
    }

    /// `e^{tA}` applied to `v`.
    pub fn apply_semigroup(&self, t: f64, v: &SpectralField) -> Result<SpectralField> {
        if !(t >= 0.0) {
            return Err(Error::Config(format!("semigroup time must be nonnegative (got {t})")));
        }
        self.check_len(v.len(), "apply_semigroup")?;
        Ok(SpectralField::from_fn(self.n_modes, |k| {
            (self.eigenvalues[k] * t).exp() * v.coeffs[k]
        }))
    }

    /// `(λ − A)^exponent` applied to `v`, for exponents in [−1, 1].
    pub fn apply_fractional_power(&self, exponent: f64, v: &SpectralField) -> Result<SpectralField> {
        if !(-1.0..=1.0).contains(&exponent) {
            return Err(Error::Config(format!(
                "fractional exponent must lie in [-1, 1] (got {exponent})"
            )));
        }
        self.check_len(v.len(), "apply_fractional_power")?;
        Ok(SpectralField::from_fn(self.n_modes, |k| {
            self.shifted_eigenvalue(k).powf(exponent) * v.coeffs[k]
        }))
    }

    /// `λ − a_k = λ + k²`.
    pub fn shifted_eigenvalue(&self, k: usize) -> f64 {
        self.lambda_shift - self.eigenvalues[k]
    }

    /// Per-mode weights `(λ + k²)^exponent` as a vector.
    pub fn fractional_weights(&self, exponent: f64) -> DVector<f64> {
        DVector::from_fn(self.n_modes, |k, _| self.shifted_eigenvalue(k).powf(exponent))
    }

    /// `Σ_k e^{2 a_k t} w_k²`, the squared Hilbert–Schmidt norm of `e^{tA}` composed with
    /// a rank-one map onto the coefficient vector `w`.
    fn decayed_sq_norm(&self, t: f64, w: &DVector<f64>) -> f64 {
        self.eigenvalues
            .iter()
            .zip(w.iter())
            .map(|(a, wk)| (2.0 * a * t).exp() * wk * wk)
            .sum()
    }

    pub(crate) fn check_len(&self, len: usize, context: &'static str) -> Result<()> {
        if len != self.n_modes {
            return Err(Error::Dimension {
                context,
                expected: self.n_modes,
                actual: len,
            });
        }
        Ok(())
    }
}

/// `(e^{a h} − 1)/a`, equal to `h` at `a = 0`.
pub fn phi1(a: f64, h: f64) -> f64 {
    if a == 0.0 {
        h
    } else {
        (a * h).exp_m1() / a
    }
}

/// `∫₀ʰ e^{2 a s} ds`, the Itô variance of one mode over a step.
pub fn step_variance(a: f64, h: f64) -> f64 {
    phi1(2.0 * a, h)
}

/// Element of `H` in the truncated cosine basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    pub coeffs: DVector<f64>,
}

impl SpectralField {
    pub fn zeros(n: usize) -> Self {
        Self {
            coeffs: DVector::zeros(n),
        }
    }

    pub fn unit(n: usize, k: usize) -> Self {
        let mut f = Self::zeros(n);
        f.coeffs[k] = 1.0;
        f
    }

    pub fn from_vec(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs: DVector::from_vec(coeffs),
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> f64) -> Self {
        Self {
            coeffs: DVector::from_fn(n, |k, _| f(k)),
        }
    }

    /// L² projection of a function of ξ onto the first `model.n_modes()` basis functions.
    pub fn project(model: &SpectralModel, f: impl Fn(f64) -> f64) -> Self {
        let quad = CompositeGaussLegendre::new(0.0, PI, 8 * model.n_modes(), &[]);
        let values: Vec<f64> = quad.nodes.iter().map(|&x| f(x)).collect();
        Self::from_fn(model.n_modes(), |k| {
            quad.nodes
                .iter()
                .zip(&quad.weights)
                .zip(&values)
                .map(|((&x, &w), &v)| w * v * model.basis(k, x))
                .sum()
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Parseval norm.
    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn dot(&self, other: &SpectralField) -> f64 {
        self.coeffs.dot(&other.coeffs)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Point evaluation of the truncated expansion.
    pub fn evaluate(&self, model: &SpectralModel, xi: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * model.basis(k, xi))
            .sum()
    }
}

/// A point of the control space `U = L²(0, π) × ℝ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryControlPoint {
    pub u0: SpectralField,
    pub u1: f64,
    pub u2: f64,
}

impl BoundaryControlPoint {
    pub fn zeros(n_modes: usize) -> Self {
        Self {
            u0: SpectralField::zeros(n_modes),
            u1: 0.0,
            u2: 0.0,
        }
    }

    /// Flattened layout `[u0_0, …, u0_{n−1}, u1, u2]` used by all matrix code.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.u0.len();
        let mut v = DVector::zeros(n + 2);
        v.rows_mut(0, n).copy_from(&self.u0.coeffs);
        v[n] = self.u1;
        v[n + 1] = self.u2;
        v
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        let n = v.len() - 2;
        Self {
            u0: SpectralField {
                coeffs: v.rows(0, n).into_owned(),
            },
            u1: v[n],
            u2: v[n + 1],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u0.is_finite() && self.u1.is_finite() && self.u2.is_finite()
    }
}

/// Spectral coefficients of the Neumann lifts `b¹`, `b²` and of `(λ − A)b^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftCoefficients {
    pub b1_coeffs: DVector<f64>,
    pub b2_coeffs: DVector<f64>,
    /// `(λ − A)b¹`: column of `E` for the left datum, also the boundary-noise column.
    pub e1_coeffs: DVector<f64>,
    /// `(λ − A)b²`: column of `E` for the right datum.
    pub e2_coeffs: DVector<f64>,
}

/// Lifts of unit Neumann data, `b'' = λb` with `b¹'(0) = 1` / `b²'(π) = 1`.
pub fn neumann_lift(model: &SpectralModel) -> LiftCoefficients {
    let n = model.n_modes();
    let e1 = DVector::from_fn(n, |k, _| -model.basis_at_left(k));
    let e2 = DVector::from_fn(n, |k, _| model.basis_at_right(k));
    let b1 = DVector::from_fn(n, |k, _| e1[k] / model.shifted_eigenvalue(k));
    let b2 = DVector::from_fn(n, |k, _| e2[k] / model.shifted_eigenvalue(k));
    LiftCoefficients {
        b1_coeffs: b1,
        b2_coeffs: b2,
        e1_coeffs: e1,
        e2_coeffs: e2,
    }
}

impl LiftCoefficients {
    /// Closed form of `b¹`: `−cosh(√λ(π − ξ)) / (√λ sinh(√λ π))`.
    pub fn b1_closed_form(lambda: f64, xi: f64) -> f64 {
        let s = lambda.sqrt();
        -(s * (PI - xi)).cosh() / (s * (s * PI).sinh())
    }

    /// Closed form of `b²`: `cosh(√λ ξ) / (√λ sinh(√λ π))`.
    pub fn b2_closed_form(lambda: f64, xi: f64) -> f64 {
        let s = lambda.sqrt();
        (s * xi).cosh() / (s * (s * PI).sinh())
    }

    /// `E(u1, u2) = u1·(λ−A)b¹ + u2·(λ−A)b²`.
    pub fn apply_e(&self, u1: f64, u2: f64) -> SpectralField {
        SpectralField {
            coeffs: &self.e1_coeffs * u1 + &self.e2_coeffs * u2,
        }
    }

    /// `E* v`, the two dual pairings.
    pub fn apply_e_adjoint(&self, v: &SpectralField) -> (f64, f64) {
        (self.e1_coeffs.dot(&v.coeffs), self.e2_coeffs.dot(&v.coeffs))
    }

    /// `E` as an `n × 2` matrix.
    pub fn e_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&[self.e1_coeffs.clone(), self.e2_coeffs.clone()])
    }
}

/// Spatial profile of a multiplication operator `h ↦ b(·)h(·)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// `value` on `(lo, hi)`, zero elsewhere.
    Indicator { lo: f64, hi: f64, value: f64 },
    /// `c0 + c1 cos(ξ)`.
    Cosine { c0: f64, c1: f64 },
}

impl Profile {
    pub fn eval(&self, xi: f64) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Indicator { lo, hi, value } => {
                if xi > lo && xi < hi {
                    value
                } else {
                    0.0
                }
            }
            Profile::Cosine { c0, c1 } => c0 + c1 * xi.cos(),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Profile::Indicator { lo, hi, .. } => vec![lo, hi],
            _ => Vec::new(),
        }
    }

    /// Returns `Some(c)` when the profile is the constant `c`.
    pub fn as_constant(&self) -> Option<f64> {
        match *self {
            Profile::Constant { value } => Some(value),
            _ => None,
        }
    }
}

/// Composite Gauss–Legendre rule, panels split at the supplied breakpoints.
#[derive(Debug, Clone)]
pub struct CompositeGaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

impl CompositeGaussLegendre {
    /// At least `min_points` nodes on `[a, b]`.
    pub fn new(a: f64, b: f64, min_points: usize, breakpoints: &[f64]) -> Self {
        let panels = min_points.div_ceil(GL5_NODES.len()).max(1);
        let width = (b - a) / panels as f64;
        let mut edges: Vec<f64> = (0..=panels).map(|i| a + i as f64 * width).collect();
        edges.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
        edges.sort_by(|x, y| x.total_cmp(y));
        edges.dedup_by(|x, y| (*x - *y).abs() < 1e-14);

        let mut nodes = Vec::with_capacity(edges.len() * 5);
        let mut weights = Vec::with_capacity(edges.len() * 5);
        for pair in edges.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Multiplication operator assembled on the truncated basis, `M_jk = ∫ b e_j e_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicationOperator {
    pub profile: Profile,
    pub matrix: DMatrix<f64>,
}

impl MultiplicationOperator {
    pub fn assemble(model: &SpectralModel, profile: Profile) -> Self {
        let n = model.n_modes();
        if let Some(c) = profile.as_constant() {
            // orthonormal basis: the Gram matrix is exactly c·I
            return Self {
                profile,
                matrix: DMatrix::identity(n, n) * c,
            };
        }
        let quad = CompositeGaussLegendre::new(0.0, PI, 8 * n, &profile.breakpoints());
        let basis: Vec<Vec<f64>> = quad
            .nodes
            .iter()
            .map(|&x| (0..n).map(|k| model.basis(k, x)).collect())
            .collect();
        let weighted: Vec<f64> = quad
            .nodes
            .iter()
            .zip(&quad.weights)
            .map(|(&x, &w)| w * profile.eval(x))
            .collect();
        let mut matrix = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in j..n {
                let s: f64 = basis
                    .iter()
                    .zip(&weighted)
                    .map(|(b, w)| w * b[j] * b[k])
                    .sum();
                matrix[(j, k)] = s;
                matrix[(k, j)] = s;
            }
        }
        Self { profile, matrix }
    }

    pub fn zero(model: &SpectralModel) -> Self {
        let n = model.n_modes();
        Self {
            profile: Profile::Constant { value: 0.0 },
            matrix: DMatrix::zeros(n, n),
        }
    }

    pub fn apply(&self, v: &SpectralField) -> Result<SpectralField> {
        if v.len() != self.matrix.ncols() {
            return Err(Error::Dimension {
                context: "multiplication operator",
                expected: self.matrix.ncols(),
                actual: v.len(),
            });
        }
        Ok(SpectralField {
            coeffs: &self.matrix * &v.coeffs,
        })
    }

    pub fn apply_adjoint(&self, v: &SpectralField) -> Result<SpectralField> {
        if v.len() != self.matrix.nrows() {
            return Err(Error::Dimension {
                context: "multiplication operator adjoint",
                expected: self.matrix.nrows(),
                actual: v.len(),
            });
        }
        Ok(SpectralField {
            coeffs: self.matrix.transpose() * &v.coeffs,
        })
    }
}

/// `E + B : U → H` as an `n × (n+2)` matrix, columns `[B | (λ−A)b¹ | (λ−A)b²]`.
pub fn control_operator(lifts: &LiftCoefficients, distributed: &DMatrix<f64>) -> DMatrix<f64> {
    let n = lifts.e1_coeffs.len();
    let mut op = DMatrix::zeros(n, n + 2);
    op.view_mut((0, 0), (n, n)).copy_from(distributed);
    op.set_column(n, &lifts.e1_coeffs);
    op.set_column(n + 1, &lifts.e2_coeffs);
    op
}

/// `h(t) = |e^{tA}(λ − A)D₁|_{L₂}` on the given positive times.
pub fn hs_bound_profile(model: &SpectralModel, lifts: &LiftCoefficients, t_grid: &[f64]) -> Result<Vec<f64>> {
    check_positive_times(t_grid)?;
    Ok(t_grid
        .iter()
        .map(|&t| model.decayed_sq_norm(t, &lifts.e1_coeffs).sqrt())
        .collect())
}

/// `|e^{tA} G|_{L₂}` for a multiplication operator `G`.
pub fn hs_noise_profile(model: &SpectralModel, g: &MultiplicationOperator, t_grid: &[f64]) -> Result<Vec<f64>> {
    check_positive_times(t_grid)?;
    let row_sq: Vec<f64> = g.matrix.row_iter().map(|r| r.norm_squared()).collect();
    Ok(t_grid
        .iter()
        .map(|&t| {
            model
                .eigenvalues()
                .iter()
                .zip(&row_sq)
                .map(|(a, s)| (2.0 * a * t).exp() * s)
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

fn check_positive_times(t_grid: &[f64]) -> Result<()> {
    if let Some(t) = t_grid.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::Config(format!(
            "Hilbert-Schmidt profile requires t > 0 (got {t}); the bound diverges at 0"
        )));
    }
    Ok(())
}

/// Least-squares slope of `log y` against `log t`.
pub fn fit_loglog_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let lx: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Logarithmically spaced times on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_model(n: usize) -> SpectralModel {
        SpectralModel::new(n, 1.0, 0.6, 0.75).unwrap()
    }

    #[test]
    fn eigenvalues_are_negative_squares() {
        let m = default_model(4);
        assert_eq!(m.eigenvalues(), &[0.0, -1.0, -4.0, -9.0]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(SpectralModel::new(2, 1.0, 0.49, 0.75), Err(Error::Config(_))));
        assert!(SpectralModel::new(2, 0.0, 0.6, 0.75).is_err());
        assert!(SpectralModel::new(1, 1.0, 0.6, 0.75).is_err());
        assert!(SpectralModel::new(4, 1.0, 0.6, 1.0).is_err());
    }

    #[test]
    fn basis_is_normalised() {
        let m = default_model(4);
        let quad = CompositeGaussLegendre::new(0.0, PI, 400, &[]);
        for k in 0..4 {
            let s = quad.integrate(|x| m.basis(k, x).powi(2));
            assert!((s - 1.0).abs() < 1e-10, "k={k}: {s}");
        }
    }

    #[test]
    fn semigroup_examples() {
        let m = default_model(4);
        let v = SpectralField::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        assert_eq!(m.apply_semigroup(0.0, &v).unwrap(), v);
        let w = m.apply_semigroup(1.0, &SpectralField::unit(4, 2)).unwrap();
        assert!((w.coeffs[2] - 0.018_315_638_888_734_18).abs() < 1e-15);
        assert_eq!(w.coeffs[0], 0.0);
        assert!(m.apply_semigroup(-0.1, &v).is_err());
    }

    #[test]
    fn fractional_power_examples() {
        let m = default_model(4);
        let w = m.apply_fractional_power(1.0, &SpectralField::unit(4, 2)).unwrap();
        assert!((w.coeffs[2] - 5.0).abs() < 1e-14);
        assert!(m.apply_fractional_power(1.5, &w).is_err());
        let v = SpectralField::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.apply_fractional_power(0.0, &v).unwrap(), v);
    }

    #[test]
    fn lift_matches_closed_form_and_identity() {
        let m = default_model(64);
        let lifts = neumann_lift(&m);
        let lambda = m.lambda_shift();
        for k in 0..64 {
            assert!((m.shifted_eigenvalue(k) * lifts.b1_coeffs[k] + m.basis_at_left(k)).abs() < 1e-12);
            assert!((m.shifted_eigenvalue(k) * lifts.b2_coeffs[k] - m.basis_at_right(k)).abs() < 1e-12);
        }
        // independent check: project the closed forms by quadrature
        let b1 = SpectralField::project(&m, |x| LiftCoefficients::b1_closed_form(lambda, x));
        let b2 = SpectralField::project(&m, |x| LiftCoefficients::b2_closed_form(lambda, x));
        assert!((&b1.coeffs - &lifts.b1_coeffs).amax() < 1e-10);
        assert!((&b2.coeffs - &lifts.b2_coeffs).amax() < 1e-10);
        let expected_b1_3 = -(2.0 / PI).sqrt() / (lambda + 9.0);
        assert!((lifts.b1_coeffs[3] - expected_b1_3).abs() < 1e-15);
        for k in 1..10 {
            let s = lifts.b2_coeffs[k] * m.shifted_eigenvalue(k);
            assert_eq!(s > 0.0, k % 2 == 0);
        }
    }

    #[test]
    fn reconstructed_lift_has_unit_flux_at_left() {
        let m = default_model(256);
        let lifts = neumann_lift(&m);
        let b1 = SpectralField {
            coeffs: lifts.b1_coeffs.clone(),
        };
        // one-sided difference away from the Gibbs layer of the cosine series
        let h = 0.05;
        let d = (b1.evaluate(&m, 2.0 * h) - b1.evaluate(&m, h)) / h;
        let exact = (LiftCoefficients::b1_closed_form(1.0, 2.0 * h)
            - LiftCoefficients::b1_closed_form(1.0, h))
            / h;
        assert!((d - exact).abs() < 1e-2, "{d} vs {exact}");
        assert!((d - 1.0).abs() < 1e-1, "{d}");
        let closed_derivative = (LiftCoefficients::b1_closed_form(1.0, 1e-6)
            - LiftCoefficients::b1_closed_form(1.0, 0.0))
            / 1e-6;
        assert!((closed_derivative - 1.0).abs() < 1e-2);
    }

    #[test]
    fn e_operator_examples() {
        let m = default_model(8);
        let lifts = neumann_lift(&m);
        let f = lifts.apply_e(1.0, 0.0);
        assert!((f.coeffs[0] + 1.0 / PI.sqrt()).abs() < 1e-15);
        for k in 1..8 {
            assert!((f.coeffs[k] + (2.0 / PI).sqrt()).abs() < 1e-15);
        }
        assert_eq!(lifts.apply_e(0.0, 0.0), SpectralField::zeros(8));
    }

    #[test]
    fn multiplication_operator_examples() {
        let m = default_model(12);
        let id = MultiplicationOperator::assemble(&m, Profile::Constant { value: 1.0 });
        assert!((&id.matrix - DMatrix::identity(12, 12)).amax() < 1e-13);
        let ind = MultiplicationOperator::assemble(
            &m,
            Profile::Indicator {
                lo: PI / 4.0,
                hi: 3.0 * PI / 4.0,
                value: 1.0,
            },
        );
        assert!((ind.matrix[(0, 0)] - 0.5).abs() < 1e-13);
        assert_eq!((&ind.matrix - ind.matrix.transpose()).amax(), 0.0);
        assert!(ind.apply(&SpectralField::zeros(3)).is_err());
    }

    #[test]
    fn hs_profiles_decay_with_quarter_slope() {
        let m = default_model(1024);
        let lifts = neumann_lift(&m);
        let t = log_grid(1e-4, 1e-1, 31);
        let h = hs_bound_profile(&m, &lifts, &t).unwrap();
        assert!(h.windows(2).all(|w| w[1] < w[0]));
        assert!((fit_loglog_slope(&t, &h) + 0.25).abs() < 0.03);
        let g_model = default_model(512);
        let g = MultiplicationOperator {
            profile: Profile::Constant { value: 1.0 },
            matrix: DMatrix::identity(512, 512),
        };
        let hg = hs_noise_profile(&g_model, &g, &t).unwrap();
        assert!((fit_loglog_slope(&t, &hg) + 0.25).abs() < 0.03);
        assert!(hs_bound_profile(&m, &lifts, &[0.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn semigroup_law(s in 0.0f64..2.0, t in 0.0f64..2.0, c in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let m = default_model(6);
            let v = SpectralField::from_vec(c);
            let lhs = m.apply_semigroup(s, &m.apply_semigroup(t, &v).unwrap()).unwrap();
            let rhs = m.apply_semigroup(s + t, &v).unwrap();
            let scale = v.norm().max(1e-300);
            prop_assert!((&lhs.coeffs - &rhs.coeffs).norm() <= 1e-13 * scale);
        }

        #[test]
        fn fractional_powers_compose(p in -0.5f64..0.5, q in -0.5f64..0.5, c in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let m = default_model(6);
            let v = SpectralField::from_vec(c);
            let lhs = m.apply_fractional_power(p, &m.apply_fractional_power(q, &v).unwrap()).unwrap();
            let rhs = m.apply_fractional_power(p + q, &v).unwrap();
            prop_assert!((&lhs.coeffs - &rhs.coeffs).norm() <= 1e-12 * rhs.norm().max(1e-300));
        }

        #[test]
        fn e_adjoint_duality(u1 in -3.0f64..3.0, u2 in -3.0f64..3.0, c in proptest::collection::vec(-5.0f64..5.0, 10)) {
            let m = default_model(10);
            let lifts = neumann_lift(&m);
            let v = SpectralField::from_vec(c);
            let (z1, z2) = lifts.apply_e_adjoint(&v);
            let lhs = lifts.apply_e(u1, u2).dot(&v);
            let scale = v.norm() * (u1 * u1 + u2 * u2).sqrt();
            prop_assert!((lhs - (u1 * z1 + u2 * z2)).abs() <= 1e-12 * scale.max(1e-300));
        }
    }
}
