//! Sample covariance, a coordinate-descent Lasso, and node-wise precision
//! matrix estimation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, MtaError, Result};

/// Default KKT tolerance for the Lasso solver.
pub const DEFAULT_TOL: f64 = 1e-7;
/// Default sweep budget for the Lasso solver.
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Residual variances below this value mark a column as degenerate.
pub const MIN_RESIDUAL_VARIANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub n_samples: usize,
    pub centered: bool,
}

#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub matrix: DMatrix<f64>,
    /// Penalty used for each node-wise regression (empty for exact inversion).
    pub lambda_grid_used: Vec<f64>,
    pub symmetrized: bool,
}

impl PrecisionEstimate {
    /// Wrap a user-supplied precision matrix, e.g. the true inverse covariance.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(MtaError::Shape(format!(
                "precision matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        ensure_finite(matrix.as_slice(), "precision matrix")?;
        let symmetrized = matrix == matrix.transpose();
        Ok(Self {
            matrix,
            lambda_grid_used: Vec::new(),
            symmetrized,
        })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            matrix: DMatrix::identity(p, p),
            lambda_grid_used: Vec::new(),
            symmetrized: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `s_j = #{k : Omega_jk != 0}` for every row.
    pub fn support_sizes(&self) -> Vec<usize> {
        self.matrix
            .row_iter()
            .map(|row| row.iter().filter(|v| **v != 0.0).count())
            .collect()
    }
}

/// How the node-wise Lasso penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum LambdaRule {
    /// `lambda = kappa * sqrt(ln p / n)`.
    Scaled { kappa: f64 },
    /// The same fixed penalty for every column.
    Fixed { lambda: f64 },
    /// Invert the centered sample covariance directly (requires `p < n`).
    ExactInverse,
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Scaled { kappa: 0.5 }
    }
}

impl LambdaRule {
    pub fn penalty(&self, n: usize, p: usize) -> Option<f64> {
        match *self {
            LambdaRule::Scaled { kappa } => Some(kappa * ((p as f64).ln() / n as f64).sqrt()),
            LambdaRule::Fixed { lambda } => Some(lambda),
            LambdaRule::ExactInverse => None,
        }
    }
}

fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter().map(|c| c.sum() / n).collect()
}

fn centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    let mut xc = x.clone();
    for (mut col, m) in xc.column_iter_mut().zip(means) {
        col.add_scalar_mut(-m);
    }
    xc
}

/// Copy the upper triangle onto the lower one.
fn mirror_upper(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// `(X_c^T X_c) / n`, with `X_c` column-centered when `center` is set.
pub fn sample_covariance(x: &DMatrix<f64>, center: bool) -> Result<CovarianceEstimate> {
    let n = x.nrows();
    if n < 2 {
        return Err(MtaError::InsufficientSamples { needed: 2, got: n });
    }
    if x.ncols() == 0 {
        return Err(MtaError::Shape("design has no columns".into()));
    }
    ensure_finite(x.as_slice(), "design matrix")?;
    let mut matrix = if center {
        let xc = centered(x);
        xc.tr_mul(&xc)
    } else {
        x.tr_mul(x)
    };
    matrix /= n as f64;
    mirror_upper(&mut matrix);
    Ok(CovarianceEstimate {
        matrix,
        n_samples: n,
        centered: center,
    })
}

/// Result of a Lasso fit on original (unstandardized) columns.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub coef: DVector<f64>,
    pub intercept: f64,
    /// Coefficients on the internally standardized columns.
    pub standardized_coef: DVector<f64>,
    pub sweeps: usize,
    /// Max KKT violation of the standardized problem at exit.
    pub kkt_residual: f64,
    /// Objective value after every sweep.
    pub objective_trace: Vec<f64>,
}

/// Solution of a Lasso problem given in Gram form.
#[derive(Debug, Clone)]
pub(crate) struct GramSolution {
    pub coef: Vec<f64>,
    /// `c - G b` at exit.
    pub residual_corr: Vec<f64>,
    pub sweeps: usize,
    pub kkt_residual: f64,
    pub objective_trace: Vec<f64>,
}

#[inline]
fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Coordinate descent on `0.5*yty - b'c + 0.5*b'Gb + lambda*|b|_1`.
///
/// `gram` is `Z'Z/n`, `xty` is `Z'y/n` and `yty` is `y'y/n`. Coordinate `skip`
/// is held at zero, which lets node-wise regressions reuse one Gram matrix.
pub(crate) struct GramLasso<'a> {
    pub gram: &'a DMatrix<f64>,
    pub xty: &'a [f64],
    pub yty: f64,
    pub skip: Option<usize>,
}

impl GramLasso<'_> {
    fn usable(&self, k: usize) -> bool {
        Some(k) != self.skip && self.gram[(k, k)] > 0.0
    }

    fn objective(&self, b: &[f64], r: &[f64], lambda: f64) -> f64 {
        let mut quad = 0.0;
        let mut l1 = 0.0;
        for k in 0..b.len() {
            quad += b[k] * (self.xty[k] + r[k]);
            l1 += b[k].abs();
        }
        0.5 * self.yty - 0.5 * quad + lambda * l1
    }

    fn kkt(&self, b: &[f64], r: &[f64], lambda: f64, active_only: bool) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..b.len() {
            if !self.usable(k) {
                continue;
            }
            let v = if b[k] != 0.0 {
                (r[k] - lambda * b[k].signum()).abs()
            } else if active_only {
                continue;
            } else {
                (r[k].abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }

    fn update(&self, k: usize, b: &mut [f64], r: &mut [f64], lambda: f64) {
        let g_kk = self.gram[(k, k)];
        let old = b[k];
        let new = soft_threshold(r[k] + g_kk * old, lambda) / g_kk;
        if new != old {
            let delta = new - old;
            for (rl, g) in r.iter_mut().zip(self.gram.column(k).iter()) {
                *rl -= delta * g;
            }
            b[k] = new;
        }
    }

    pub fn solve(&self, lambda: f64, tol: f64, max_iter: usize) -> Result<GramSolution> {
        let q = self.xty.len();
        let mut b = vec![0.0; q];
        let mut r = self.xty.to_vec();
        let mut trace = vec![self.objective(&b, &r, lambda)];
        let mut sweeps = 0;
        loop {
            for k in 0..q {
                if self.usable(k) {
                    self.update(k, &mut b, &mut r, lambda);
                }
            }
            sweeps += 1;
            trace.push(self.objective(&b, &r, lambda));
            let kkt = self.kkt(&b, &r, lambda, false);
            if kkt <= tol {
                return Ok(GramSolution {
                    coef: b,
                    residual_corr: r,
                    sweeps,
                    kkt_residual: kkt,
                    objective_trace: trace,
                });
            }
            if sweeps >= max_iter {
                return Err(MtaError::Convergence {
                    sweeps,
                    kkt_residual: kkt,
                    last_iterate: b,
                });
            }
            // cycle on the active set before the next full sweep
            let active: Vec<usize> = (0..q).filter(|&k| b[k] != 0.0).collect();
            while sweeps < max_iter {
                for &k in &active {
                    self.update(k, &mut b, &mut r, lambda);
                }
                sweeps += 1;
                trace.push(self.objective(&b, &r, lambda));
                if self.kkt(&b, &r, lambda, true) <= tol {
                    break;
                }
            }
        }
    }
}

/// Minimize `(1/2n)|y - X b|^2 + lambda |b|_1` by cyclic coordinate descent.
///
/// Columns are centered and scaled to unit n-normalized norm internally, and
/// the response is centered; the returned coefficients are back-transformed
/// to the original column scale. Zero-variance columns get coefficient 0. The
/// KKT residual refers to the standardized problem.
pub fn lasso_coordinate_descent(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LassoFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(MtaError::Shape(format!(
            "design has {n} rows but response has {} entries",
            y.len()
        )));
    }
    if n < 2 {
        return Err(MtaError::InsufficientSamples { needed: 2, got: n });
    }
    if !(lambda >= 0.0) {
        return Err(MtaError::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    ensure_finite(x.as_slice(), "design matrix")?;
    ensure_finite(y.as_slice(), "response")?;

    let nf = n as f64;
    let means = column_means(x);
    let mut z = centered(x);
    let scales: Vec<f64> = z
        .column_iter()
        .map(|c| (c.norm_squared() / nf).sqrt())
        .collect();
    for (mut col, &s) in z.column_iter_mut().zip(&scales) {
        if s > 0.0 {
            col /= s;
        }
    }
    let y_mean = y.mean();
    let yc = y.add_scalar(-y_mean);
    let mut gram = z.tr_mul(&z) / nf;
    mirror_upper(&mut gram);
    let xty: Vec<f64> = (z.tr_mul(&yc) / nf).iter().copied().collect();
    let yty = yc.norm_squared() / nf;

    let problem = GramLasso {
        gram: &gram,
        xty: &xty,
        yty,
        skip: None,
    };
    let sol = match problem.solve(lambda, tol, max_iter) {
        Ok(sol) => sol,
        Err(MtaError::Convergence {
            sweeps,
            kkt_residual,
            last_iterate,
        }) => {
            let last = last_iterate
                .iter()
                .zip(&scales)
                .map(|(b, &s)| if s > 0.0 { b / s } else { 0.0 })
                .collect();
            return Err(MtaError::Convergence {
                sweeps,
                kkt_residual,
                last_iterate: last,
            });
        }
        Err(e) => return Err(e),
    };
    let coef = DVector::from_iterator(
        sol.coef.len(),
        sol.coef
            .iter()
            .zip(&scales)
            .map(|(b, &s)| if s > 0.0 { b / s } else { 0.0 }),
    );
    let intercept = y_mean - coef.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LassoFit {
        coef,
        intercept,
        standardized_coef: DVector::from_vec(sol.coef),
        sweeps: sol.sweeps,
        kkt_residual: sol.kkt_residual,
        objective_trace: sol.objective_trace,
    })
}

fn exact_inverse(x: &DMatrix<f64>) -> Result<PrecisionEstimate> {
    let (n, p) = x.shape();
    if p >= n {
        return Err(MtaError::Config(format!(
            "exact-inverse precision needs p < n (p = {p}, n = {n})"
        )));
    }
    let cov = sample_covariance(x, true)?;
    let chol = cov.matrix.cholesky().ok_or_else(|| {
        MtaError::InvalidData("sample covariance is not positive definite".into())
    })?;
    let mut matrix = chol.inverse();
    let t = matrix.transpose();
    matrix = (&matrix + &t) * 0.5;
    Ok(PrecisionEstimate {
        matrix,
        lambda_grid_used: Vec::new(),
        symmetrized: true,
    })
}

/// Node-wise Lasso estimate of the inverse covariance.
///
/// Each standardized column `j` is regressed on the others with penalty
/// `lambda_j`, giving `Omega_jj = 1/tau_j^2` and `Omega_jk = -gamma_jk/tau_j^2`
/// with `tau_j^2 = |z_j - Z gamma_j|^2/n + lambda_j |gamma_j|_1`. The result is
/// averaged with its transpose and mapped back to the original column scale.
pub fn nodewise_precision(x: &DMatrix<f64>, rule: LambdaRule) -> Result<PrecisionEstimate> {
    let (n, p) = x.shape();
    if n < 10 {
        return Err(MtaError::InsufficientSamples { needed: 10, got: n });
    }
    if p == 0 {
        return Err(MtaError::Shape("design has no columns".into()));
    }
    ensure_finite(x.as_slice(), "design matrix")?;
    let nf = n as f64;

    if p == 1 {
        let var = sample_covariance(x, true)?.matrix[(0, 0)];
        if var < MIN_RESIDUAL_VARIANCE {
            return Err(MtaError::DegenerateColumn {
                column: 0,
                tau_sq: var,
            });
        }
        return Ok(PrecisionEstimate {
            matrix: DMatrix::from_element(1, 1, 1.0 / var),
            lambda_grid_used: Vec::new(),
            symmetrized: true,
        });
    }

    let lambda = match rule.penalty(n, p) {
        None => return exact_inverse(x),
        Some(l) if l >= 0.0 && l.is_finite() => l,
        Some(l) => return Err(MtaError::Domain(format!("invalid lambda {l}"))),
    };

    let mut z = centered(x);
    let mut scales = Vec::with_capacity(p);
    for (j, mut col) in z.column_iter_mut().enumerate() {
        let s = (col.norm_squared() / nf).sqrt();
        if s * s < MIN_RESIDUAL_VARIANCE {
            return Err(MtaError::DegenerateColumn {
                column: j,
                tau_sq: s * s,
            });
        }
        col /= s;
        scales.push(s);
    }
    let mut gram = z.tr_mul(&z) / nf;
    mirror_upper(&mut gram);

    let rows: Vec<(f64, Vec<f64>)> = (0..p)
        .into_par_iter()
        .map(|j| {
            let target: Vec<f64> = gram.column(j).iter().copied().collect();
            let problem = GramLasso {
                gram: &gram,
                xty: &target,
                yty: gram[(j, j)],
                skip: Some(j),
            };
            let sol = problem.solve(lambda, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            let mut fit_term = 0.0;
            let mut l1 = 0.0;
            for k in 0..p {
                fit_term += sol.coef[k] * (target[k] + sol.residual_corr[k]);
                l1 += sol.coef[k].abs();
            }
            let tau_sq = gram[(j, j)] - fit_term + lambda * l1;
            if !(tau_sq >= MIN_RESIDUAL_VARIANCE) {
                return Err(MtaError::DegenerateColumn { column: j, tau_sq });
            }
            Ok((tau_sq, sol.coef))
        })
        .collect::<Result<_>>()?;

    let mut omega = DMatrix::zeros(p, p);
    for (j, (tau_sq, gamma)) in rows.iter().enumerate() {
        for k in 0..p {
            omega[(j, k)] = if k == j { 1.0 / tau_sq } else { -gamma[k] / tau_sq };
        }
    }
    let mut matrix = DMatrix::zeros(p, p);
    for j in 0..p {
        for k in j..p {
            let v = 0.5 * (omega[(j, k)] + omega[(k, j)]) / (scales[j] * scales[k]);
            matrix[(j, k)] = v;
            matrix[(k, j)] = v;
        }
    }
    Ok(PrecisionEstimate {
        matrix,
        lambda_grid_used: vec![lambda; p],
        symmetrized: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    /// Columns centered and orthogonal with `X'X/n = I` (Gram-Schmidt).
    pub(crate) fn orthonormal_design(n: usize, q: usize, seed: u64) -> DMatrix<f64> {
        let mut x = centered(&normal_matrix(n, q, seed));
        for j in 0..q {
            for k in 0..j {
                let proj = x.column(j).dot(&x.column(k)) / x.column(k).norm_squared();
                let ck = x.column(k).clone_owned();
                x.column_mut(j).axpy(-proj, &ck, 1.0);
            }
            let s = (x.column(j).norm_squared() / n as f64).sqrt();
            x.column_mut(j).scale_mut(1.0 / s);
        }
        x
    }

    #[test]
    fn covariance_trivial_cases() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let c = sample_covariance(&x, true).unwrap();
        assert_eq!(c.matrix[(0, 0)], 1.0);

        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let c = sample_covariance(&x, false).unwrap();
        assert_eq!(c.matrix, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
    }

    #[test]
    fn covariance_errors() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(
            sample_covariance(&x, true),
            Err(MtaError::InsufficientSamples { .. })
        ));
        let x = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(matches!(
            sample_covariance(&x, true),
            Err(MtaError::InvalidData(_))
        ));
    }

    #[test]
    fn covariance_of_ar1_draws() {
        let x = crate::simgen::gen_design(500, 3, 0.4, 11).unwrap();
        let c = sample_covariance(&x, true).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let target = 0.4f64.powi((i as i32 - j as i32).abs());
                assert!((c.matrix[(i, j)] - target).abs() <= 0.15);
            }
        }
        assert_eq!(c.matrix, c.matrix.transpose());
    }

    #[test]
    fn covariance_shift_invariant() {
        let x = normal_matrix(40, 4, 3);
        let mut shifted = x.clone();
        shifted.column_mut(2).add_scalar_mut(17.5);
        let a = sample_covariance(&x, true).unwrap().matrix;
        let b = sample_covariance(&shifted, true).unwrap().matrix;
        assert!((a - b).amax() <= 1e-10);
    }

    #[test]
    fn lasso_ols_under_orthonormal_design() {
        let n = 30;
        let x = orthonormal_design(n, 4, 5);
        let mut rng = rng_from_seed(9);
        let y = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let fit = lasso_coordinate_descent(&x, &y, 0.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let ols = x.tr_mul(&y) / n as f64;
        assert!((fit.coef - ols).amax() <= 1e-9);
    }

    #[test]
    fn lasso_large_lambda_gives_zero() {
        let n = 25;
        let x = normal_matrix(n, 5, 2);
        let mut y = x.column(0) * 2.0 - x.column(3);
        y.add_scalar_mut(1.0);
        // standardized lambda_max
        let fit0 = lasso_coordinate_descent(&x, &y, 0.0, 1e-9, DEFAULT_MAX_ITER).unwrap();
        assert!(fit0.coef.amax() > 0.5);
        let z = {
            let mut z = centered(&x);
            for mut c in z.column_iter_mut() {
                let s = (c.norm_squared() / n as f64).sqrt();
                c /= s;
            }
            z
        };
        let yc = y.add_scalar(-y.mean());
        let lambda_max = (z.tr_mul(&yc) / n as f64).amax();
        let fit = lasso_coordinate_descent(&x, &y, lambda_max, DEFAULT_TOL, DEFAULT_MAX_ITER)
            .unwrap();
        assert!(fit.coef.iter().all(|&b| b == 0.0));
        assert!((fit.intercept - y.mean()).abs() < 1e-12);
    }

    #[test]
    fn lasso_matches_grid_search() {
        // Brute force over the grid {-2, -1.99, ..., 2}^3 of the
        // standardized objective.
        let n = 20;
        let x = normal_matrix(n, 3, 21);
        let mut rng = rng_from_seed(22);
        let noise: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let y = x.column(0) * 1.2 - x.column(1) * 0.7 + noise * 0.5;
        let lambda = 0.1;
        let fit = lasso_coordinate_descent(&x, &y, lambda, 1e-10, DEFAULT_MAX_ITER).unwrap();

        let mut z = centered(&x);
        for mut c in z.column_iter_mut() {
            let s = (c.norm_squared() / n as f64).sqrt();
            c /= s;
        }
        let yc = y.add_scalar(-y.mean());
        let grid: Vec<f64> = (0..=400).map(|i| -2.0 + 0.01 * i as f64).collect();
        let mut best = (f64::INFINITY, [0.0; 3]);
        for &b0 in &grid {
            let r0 = &yc - z.column(0) * b0;
            for &b1 in &grid {
                let r1 = &r0 - z.column(1) * b1;
                for &b2 in &grid {
                    let r = &r1 - z.column(2) * b2;
                    let obj = r.norm_squared() / (2.0 * n as f64)
                        + lambda * (b0.abs() + b1.abs() + b2.abs());
                    if obj < best.0 {
                        best = (obj, [b0, b1, b2]);
                    }
                }
            }
        }
        for k in 0..3 {
            assert!(
                (fit.standardized_coef[k] - best.1[k]).abs() <= 0.02,
                "coordinate {k}: {} vs {}",
                fit.standardized_coef[k],
                best.1[k]
            );
        }
    }

    #[test]
    fn lasso_objective_non_increasing() {
        let x = normal_matrix(40, 12, 8);
        let y = x.column(0) * 3.0 + x.column(5) - x.column(9) * 2.0;
        let fit = lasso_coordinate_descent(&x, &y, 0.05, 1e-9, DEFAULT_MAX_ITER).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn lasso_reports_non_convergence() {
        let x = normal_matrix(30, 20, 4);
        let y = x.column(0) * 1.0 + x.column(1) * 0.5;
        match lasso_coordinate_descent(&x, &y, 1e-4, 1e-14, 1) {
            Err(MtaError::Convergence {
                sweeps,
                last_iterate,
                ..
            }) => {
                assert_eq!(sweeps, 1);
                assert_eq!(last_iterate.len(), 20);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn nodewise_diagonal_for_orthogonal_columns() {
        let n = 60;
        let x = orthonormal_design(n, 5, 13) * 2.0;
        let est = nodewise_precision(&x, LambdaRule::Fixed { lambda: 0.5 }).unwrap();
        for j in 0..5 {
            for k in 0..5 {
                let want = if j == k { 0.25 } else { 0.0 };
                assert!((est.matrix[(j, k)] - want).abs() < 1e-10);
            }
        }
        assert_eq!(est.support_sizes(), vec![1; 5]);
    }

    #[test]
    fn nodewise_single_column() {
        let x = normal_matrix(50, 1, 1) * 3.0;
        let var = sample_covariance(&x, true).unwrap().matrix[(0, 0)];
        let est = nodewise_precision(&x, LambdaRule::default()).unwrap();
        assert!((est.matrix[(0, 0)] - 1.0 / var).abs() < 1e-12);
    }

    #[test]
    fn nodewise_identity_recovery() {
        let x = normal_matrix(2000, 50, 77);
        let est = nodewise_precision(&x, LambdaRule::default()).unwrap();
        let err = (&est.matrix - DMatrix::<f64>::identity(50, 50)).amax();
        assert!(err <= 0.2, "max error {err}");
        assert!(est.symmetrized);
        assert_eq!(est.matrix, est.matrix.transpose());
        assert!((0..50).all(|j| est.matrix[(j, j)] > 0.0));
    }

    #[test]
    fn nodewise_degenerate_column() {
        let mut x = normal_matrix(30, 4, 6);
        x.column_mut(2).fill(3.0);
        assert!(matches!(
            nodewise_precision(&x, LambdaRule::default()),
            Err(MtaError::DegenerateColumn { column: 2, .. })
        ));
        let mut x = normal_matrix(30, 3, 6);
        let c0 = x.column(0).clone_owned();
        x.set_column(1, &(c0 * 2.0));
        assert!(matches!(
            nodewise_precision(&x, LambdaRule::Fixed { lambda: 0.0 }),
            Err(MtaError::DegenerateColumn { .. }) | Err(MtaError::Convergence { .. })
        ));
    }

    #[test]
    fn exact_inverse_rule() {
        let x = crate::simgen::gen_design(100, 8, 0.5, 3).unwrap();
        let est = nodewise_precision(&x, LambdaRule::ExactInverse).unwrap();
        let cov = sample_covariance(&x, true).unwrap().matrix;
        let err = (cov * &est.matrix - DMatrix::<f64>::identity(8, 8)).amax();
        assert!(err <= 1e-8);
        assert_eq!(est.matrix, est.matrix.transpose());

        let wide = normal_matrix(10, 12, 1);
        assert!(matches!(
            nodewise_precision(&wide, LambdaRule::ExactInverse),
            Err(MtaError::Config(_))
        ));
    }
}
