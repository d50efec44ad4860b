//! Marginal HSIC permutation tests combined with Benjamini-Hochberg.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::decision::DecisionSet;
use crate::error::{ensure_finite, MtaError, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Permutations used for HSIC p-values unless configured otherwise.
pub const DEFAULT_PERMUTATIONS: usize = 199;

#[derive(Debug, Clone, PartialEq)]
pub struct PValueVector {
    pub p: Vec<f64>,
    pub method_tag: String,
}

impl PValueVector {
    pub fn new(p: Vec<f64>, method_tag: impl Into<String>) -> Result<Self> {
        if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MtaError::Domain(format!("p-value {bad} outside [0,1]")));
        }
        Ok(Self {
            p,
            method_tag: method_tag.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BandwidthRule {
    /// Median pairwise distance, falling back to 1.0 when it is zero.
    #[default]
    MedianHeuristic,
    Fixed(f64),
}

impl BandwidthRule {
    fn bandwidth(&self, v: &[f64]) -> f64 {
        match *self {
            BandwidthRule::Fixed(s) => s,
            BandwidthRule::MedianHeuristic => {
                let n = v.len();
                let mut d = Vec::with_capacity(n * (n - 1) / 2);
                for i in 0..n {
                    for j in (i + 1)..n {
                        d.push((v[i] - v[j]).abs());
                    }
                }
                if d.is_empty() {
                    return 1.0;
                }
                let mid = d.len() / 2;
                let (_, med, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
                if *med > 0.0 {
                    *med
                } else {
                    1.0
                }
            }
        }
    }
}

/// Gaussian kernel matrix (row-major `n x n`).
fn gaussian_kernel(v: &[f64], rule: BandwidthRule) -> Vec<f64> {
    let n = v.len();
    let s = rule.bandwidth(v);
    let scale = -0.5 / (s * s);
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let d = v[i] - v[j];
            let e = (scale * d * d).exp();
            k[i * n + j] = e;
            k[j * n + i] = e;
        }
    }
    k
}

/// `H K H` with `H = I - 11'/n`.
fn double_center(k: &mut [f64], n: usize) {
    let nf = n as f64;
    let row_means: Vec<f64> = k.chunks(n).map(|r| r.iter().sum::<f64>() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    for i in 0..n {
        for j in 0..n {
            // K is symmetric, so column means equal row means
            k[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
}

fn centered_kernel(v: &[f64], rule: BandwidthRule) -> Vec<f64> {
    let mut k = gaussian_kernel(v, rule);
    double_center(&mut k, v.len());
    k
}

/// Residual trace per sample at which the pivoted Cholesky factorization stops.
const FACTOR_TOL: f64 = 1e-12;

/// Column-centered `G` with `H K H ~= G G'`, from a pivoted Cholesky
/// factorization of the Gaussian kernel stopped once the residual trace is
/// below `FACTOR_TOL * n`. One-dimensional Gaussian kernels have rapidly
/// decaying spectra, so the rank stays far below `n`.
fn centered_factor(v: &[f64], rule: BandwidthRule) -> DMatrix<f64> {
    let n = v.len();
    let s = rule.bandwidth(v);
    let scale = -0.5 / (s * s);
    let mut diag = vec![1.0f64; n];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let stop = FACTOR_TOL * n as f64;
    while cols.len() < n {
        let (piv, &dmax) = diag
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("n >= 1");
        if diag.iter().sum::<f64>() <= stop || dmax <= 0.0 {
            break;
        }
        let root = dmax.sqrt();
        let mut g: Vec<f64> = v
            .iter()
            .map(|&vi| {
                let d = vi - v[piv];
                (scale * d * d).exp()
            })
            .collect();
        for c in &cols {
            let cp = c[piv];
            for (gi, ci) in g.iter_mut().zip(c) {
                *gi -= ci * cp;
            }
        }
        for (i, gi) in g.iter_mut().enumerate() {
            *gi /= root;
            diag[i] = (diag[i] - *gi * *gi).max(0.0);
        }
        diag[piv] = 0.0;
        cols.push(g);
    }
    let mut f = DMatrix::from_fn(n, cols.len(), |i, c| cols[c][i]);
    for mut c in f.column_iter_mut() {
        let mean = c.sum() / n as f64;
        c.add_scalar_mut(-mean);
    }
    f
}

/// Permutation test of one `(x, y)` pair on centered kernel factors.
///
/// The statistic under permutation `pi` is `||G' F[pi, :]||_F^2 / n^2`, the
/// HSIC value of the factored kernels with `y` permuted.
struct HsicKernels {
    n: usize,
    /// Transposed so that the cross product is a plain blocked GEMM.
    x_factor_t: DMatrix<f64>,
    y_factor: Arc<DMatrix<f64>>,
}

impl HsicKernels {
    fn new(x: &[f64], y_factor: Arc<DMatrix<f64>>, rule: BandwidthRule) -> Self {
        Self {
            n: x.len(),
            x_factor_t: centered_factor(x, rule).transpose(),
            y_factor,
        }
    }

    fn statistic(&self, perm: &[usize], permuted: &mut DMatrix<f64>, cross: &mut DMatrix<f64>) -> f64 {
        for (c, mut col) in permuted.column_iter_mut().enumerate() {
            let src = self.y_factor.column(c);
            for (dst, &pi) in col.iter_mut().zip(perm) {
                *dst = src[pi];
            }
        }
        cross.gemm(1.0, &self.x_factor_t, permuted, 0.0);
        cross.norm_squared() / (self.n * self.n) as f64
    }

    fn pvalue(&self, n_perm: usize, seed: u64) -> f64 {
        let (rx, ry) = (self.x_factor_t.nrows(), self.y_factor.ncols());
        let mut permuted = DMatrix::zeros(self.n, ry);
        let mut cross = DMatrix::zeros(rx, ry);
        let mut perm: Vec<usize> = (0..self.n).collect();
        let observed = self.statistic(&perm, &mut permuted, &mut cross);
        let mut rng = rng_from_seed(seed);
        let mut exceed = 0usize;
        for _ in 0..n_perm {
            perm.shuffle(&mut rng);
            if self.statistic(&perm, &mut permuted, &mut cross) >= observed {
                exceed += 1;
            }
        }
        (1 + exceed) as f64 / (n_perm + 1) as f64
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(MtaError::Shape(format!(
            "x has {} entries but y has {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 5 {
        return Err(MtaError::InsufficientSamples {
            needed: 5,
            got: x.len(),
        });
    }
    ensure_finite(x, "x")?;
    ensure_finite(y, "y")
}

/// Biased HSIC estimate `trace(K H L H) / n^2` with Gaussian kernels.
pub fn hsic_statistic(x: &[f64], y: &[f64], rule: BandwidthRule) -> Result<f64> {
    check_pair(x, y)?;
    let k = centered_kernel(x, rule);
    let l = centered_kernel(y, rule);
    let total: f64 = k.iter().zip(&l).map(|(a, b)| a * b).sum();
    Ok((total / (x.len() * x.len()) as f64).max(0.0))
}

/// Permutation p-value `(1 + #{perm >= observed}) / (n_perm + 1)`.
pub fn hsic_pvalue(x: &[f64], y: &[f64], n_perm: usize, seed: u64) -> Result<f64> {
    check_pair(x, y)?;
    check_permutations(n_perm)?;
    let rule = BandwidthRule::MedianHeuristic;
    let f = Arc::new(centered_factor(y, rule));
    Ok(HsicKernels::new(x, f, rule).pvalue(n_perm, seed))
}

fn check_permutations(n_perm: usize) -> Result<()> {
    if n_perm < 99 {
        return Err(MtaError::Config(format!(
            "need at least 99 permutations, got {n_perm}"
        )));
    }
    Ok(())
}

/// HSIC p-value of every column of `x` against `y`.
///
/// Feature `j` uses the permutation stream `derive_seed(seed, [j])`.
pub fn marginal_hsic_pvalues(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    n_perm: usize,
    seed: u64,
) -> Result<PValueVector> {
    if x.nrows() != y.len() {
        return Err(MtaError::Shape(format!(
            "design has {} rows but response has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    check_permutations(n_perm)?;
    if x.nrows() < 5 {
        return Err(MtaError::InsufficientSamples {
            needed: 5,
            got: x.nrows(),
        });
    }
    ensure_finite(x.as_slice(), "design matrix")?;
    ensure_finite(y.as_slice(), "response")?;
    let rule = BandwidthRule::MedianHeuristic;
    let f = Arc::new(centered_factor(y.as_slice(), rule));
    let p = (0..x.ncols())
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            HsicKernels::new(&col, f.clone(), rule).pvalue(n_perm, derive_seed(seed, &[j as u64]))
        })
        .collect();
    PValueVector::new(p, "hsic")
}

/// Benjamini-Hochberg step-up: reject every `p <= p_(k*)` with
/// `k* = max{k : p_(k) <= k q / m}`.
pub fn bh_procedure(pvalues: &PValueVector, q: f64) -> Result<DecisionSet> {
    if !(q > 0.0 && q < 1.0) {
        return Err(MtaError::Domain(format!("q must be in (0,1), got {q}")));
    }
    let p = &pvalues.p;
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(MtaError::Domain(format!("p-value {bad} outside [0,1]")));
    }
    let m = p.len();
    let mut sorted = p.clone();
    sorted.sort_by(f64::total_cmp);
    let cutoff = (1..=m)
        .rev()
        .find(|&k| sorted[k - 1] <= k as f64 * q / m as f64)
        .map(|k| sorted[k - 1]);
    Ok(match cutoff {
        Some(c) => DecisionSet::from_indices(
            m,
            p.iter().enumerate().filter(|(_, &v)| v <= c).map(|(j, _)| j),
        ),
        None => DecisionSet::empty(m),
    })
}
