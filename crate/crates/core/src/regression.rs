//! Least-squares Monte Carlo regression of conditional expectations.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Polynomial features of the state `X_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// 1 for `(1, X)`, 2 adds squares and cross products of the leading modes.
    pub degree: usize,
    /// Number of leading modes entering the quadratic terms.
    pub quad_modes: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self::affine()
    }
}

impl FeatureSpec {
    pub fn affine() -> Self {
        Self {
            degree: 1,
            quad_modes: 0,
        }
    }

    pub fn quadratic(quad_modes: usize) -> Self {
        Self {
            degree: 2,
            quad_modes,
        }
    }

    fn quad_count(&self, n_modes: usize) -> usize {
        if self.degree < 2 {
            return 0;
        }
        let q = self.quad_modes.min(n_modes);
        q * (q + 1) / 2
    }

    /// Number of basis functions including the constant.
    pub fn dim(&self, n_modes: usize) -> usize {
        1 + n_modes + self.quad_count(n_modes)
    }

    /// Non-constant basis functions evaluated on every row of `x`.
    pub fn basis(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (rows, n) = x.shape();
        let extra = self.quad_count(n);
        let mut out = DMatrix::zeros(rows, n + extra);
        out.view_mut((0, 0), (rows, n)).copy_from(x);
        if extra > 0 {
            let q = self.quad_modes.min(n);
            let mut col = n;
            for i in 0..q {
                for j in i..q {
                    let (ci, cj) = (x.column(i), x.column(j));
                    for ((o, a), b) in out.column_mut(col).iter_mut().zip(ci.iter()).zip(cj.iter()) {
                        *o = a * b;
                    }
                    col += 1;
                }
            }
        }
        out
    }
}

/// Result of regressing several targets on a common basis.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub fitted: DMatrix<f64>,
    /// Residual variance per target column.
    pub residual_var: DVector<f64>,
    /// Basis functions actually used, constant included.
    pub n_active: usize,
    pub ridge: f64,
    /// Coefficients on the standardized active columns.
    pub coefficients: DMatrix<f64>,
}

/// Regresses each column of `targets` on `(1, basis)`.
///
/// Columns are centred and scaled; constant basis columns are dropped and
/// constant targets are reproduced exactly. If the Gram matrix is not positive
/// definite a ridge of `1e-10·mean(diag)` is added.
pub fn regress(basis: &DMatrix<f64>, targets: &DMatrix<f64>) -> LeastSquaresFit {
    let (n, p) = basis.shape();
    let q = targets.ncols();
    let nf = n as f64;

    let mut active = Vec::new();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for j in 0..p {
        let col = basis.column(j);
        let mean = col.sum() / nf;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        let sd = var.sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) {
            active.push(j);
            means.push(mean);
            scales.push(sd);
        }
    }
    let a = active.len();
    let mut z = DMatrix::zeros(n, a);
    for (c, &j) in active.iter().enumerate() {
        let (mean, sd) = (means[c], scales[c]);
        for (o, v) in z.column_mut(c).iter_mut().zip(basis.column(j).iter()) {
            *o = (v - mean) / sd;
        }
    }

    let target_means: Vec<f64> = (0..q).map(|k| targets.column(k).sum() / nf).collect();
    let constant: Vec<bool> = (0..q)
        .map(|k| {
            let col = targets.column(k);
            let first = col[0];
            col.iter().all(|v| *v == first)
        })
        .collect();
    let mut centred = targets.clone();
    for k in 0..q {
        centred.column_mut(k).add_scalar_mut(-target_means[k]);
    }

    let mut ridge = 0.0;
    let coefficients = if a == 0 {
        DMatrix::zeros(0, q)
    } else {
        let gram = z.tr_mul(&z);
        let rhs = z.tr_mul(&centred);
        match Cholesky::new(gram.clone()).filter(well_conditioned) {
            Some(ch) => ch.solve(&rhs),
            None => {
                ridge = 1e-10 * gram.trace() / a as f64;
                let mut g = gram;
                for i in 0..a {
                    g[(i, i)] += ridge;
                }
                match Cholesky::new(g.clone()) {
                    Some(ch) => ch.solve(&rhs),
                    None => g.svd(true, true).solve(&rhs, 1e-14).unwrap_or_else(|_| DMatrix::zeros(a, q)),
                }
            }
        }
    };

    let mut fitted = if a == 0 {
        DMatrix::zeros(n, q)
    } else {
        &z * &coefficients
    };
    let mut residual_var = DVector::zeros(q);
    for k in 0..q {
        if constant[k] {
            fitted.column_mut(k).fill(targets[(0, k)]);
            continue;
        }
        fitted.column_mut(k).add_scalar_mut(target_means[k]);
        let ss: f64 = targets
            .column(k)
            .iter()
            .zip(fitted.column(k).iter())
            .map(|(y, f)| (y - f) * (y - f))
            .sum();
        let dof = n.saturating_sub(a + 1).max(1) as f64;
        residual_var[k] = ss / dof;
    }

    LeastSquaresFit {
        fitted,
        residual_var,
        n_active: a + 1,
        ridge,
        coefficients,
    }
}

/// Rejects factors whose pivots reveal numerical rank loss.
fn well_conditioned(ch: &Cholesky<f64, nalgebra::Dyn>) -> bool {
    let l = ch.l_dirty();
    let d = l.diagonal();
    let (lo, hi) = (d.min(), d.max());
    lo * lo > 1e-12 * hi * hi
}
