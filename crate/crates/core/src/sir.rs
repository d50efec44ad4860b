//! Slicing the response and estimating the per-slice coefficient matrix.
//!
//! With slice indicators `f_h(y) = 1(y in P_h)` the SIR coefficient matrix is
//! `B = Omega X_c' F_c / n`, one column per slice, where `X_c` and `F_c` are the
//! column-centered design and indicator matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, MtaError, Result};
use crate::precision::PrecisionEstimate;

/// Number of slices used unless configured otherwise.
pub const DEFAULT_SLICES: usize = 20;

/// An ordered partition of the observations into `n_slices` slices.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicePartition {
    /// Right-closed upper edge of slices `0..H-1`; the last slice is open to `+inf`.
    pub boundaries: Vec<f64>,
    pub slice_of: Vec<usize>,
    pub counts: Vec<usize>,
    pub n_slices: usize,
}

impl SlicePartition {
    pub fn n(&self) -> usize {
        self.slice_of.len()
    }

    /// Estimated slice probabilities `counts / n`.
    pub fn proportions(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Slice sizes: `ceil(n/H)` for every slice but the last.
///
/// When that rule would leave trailing slices empty (e.g. `n = 12, H = 5`),
/// falls back to sizes that differ by at most one.
fn slice_sizes(n: usize, h: usize) -> Vec<usize> {
    let width = n.div_ceil(h);
    if width * (h - 1) < n {
        let mut sizes = vec![width; h - 1];
        sizes.push(n - width * (h - 1));
        sizes
    } else {
        (0..h).map(|k| n / h + usize::from(k < n % h)).collect()
    }
}

/// Partition observations into `h` slices by the order statistics of `y`.
///
/// Ties are broken by observation index (stable sort), so membership is
/// decided by sorted position rather than by value.
pub fn make_partition(y: &[f64], h: usize) -> Result<SlicePartition> {
    let n = y.len();
    if h < 2 {
        return Err(MtaError::Config(format!("need at least 2 slices, got {h}")));
    }
    if n < 2 * h {
        return Err(MtaError::InsufficientSamples {
            needed: 2 * h,
            got: n,
        });
    }
    ensure_finite(y, "response")?;
    if y.iter().all(|&v| v == y[0]) {
        return Err(MtaError::DegenerateResponse);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));

    let counts = slice_sizes(n, h);
    let mut slice_of = vec![0; n];
    let mut boundaries = Vec::with_capacity(h - 1);
    let mut start = 0;
    for (slice, &count) in counts.iter().enumerate() {
        for &i in &order[start..start + count] {
            slice_of[i] = slice;
        }
        start += count;
        if slice + 1 < h {
            boundaries.push(y[order[start - 1]]);
        }
    }
    Ok(SlicePartition {
        boundaries,
        slice_of,
        counts,
        n_slices: h,
    })
}

/// The `n x H` matrix of slice indicators.
pub fn slice_indicator_matrix(partition: &SlicePartition) -> DMatrix<f64> {
    let mut f = DMatrix::zeros(partition.n(), partition.n_slices);
    for (i, &h) in partition.slice_of.iter().enumerate() {
        f[(i, h)] = 1.0;
    }
    f
}

/// The `p x H` SIR coefficient matrix for one sample.
#[derive(Debug, Clone)]
pub struct CoefficientMatrix {
    pub b: DMatrix<f64>,
    pub n_slices: usize,
    pub n_used: usize,
    pub partition: SlicePartition,
}

impl CoefficientMatrix {
    pub fn p(&self) -> usize {
        self.b.nrows()
    }
}

/// `X_c' F_c / n`: slice-weighted deviations of the slice means from the grand mean.
fn centered_cross_moment(x: &DMatrix<f64>, partition: &SlicePartition) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let h = partition.n_slices;
    let mut slice_sums = DMatrix::zeros(p, h);
    for j in 0..p {
        let col = x.column(j);
        for (i, &s) in partition.slice_of.iter().enumerate() {
            slice_sums[(j, s)] += col[i];
        }
    }
    let nf = n as f64;
    let grand: DVector<f64> = DVector::from_iterator(p, x.column_iter().map(|c| c.sum() / nf));
    let mut out = slice_sums;
    for (s, &count) in partition.counts.iter().enumerate() {
        let mut col = out.column_mut(s);
        col.axpy(-(count as f64), &grand, 1.0);
        col /= nf;
    }
    out
}

fn check_partition(x: &DMatrix<f64>, partition: &SlicePartition) -> Result<()> {
    if partition.n() != x.nrows() {
        return Err(MtaError::Shape(format!(
            "partition covers {} observations but design has {} rows",
            partition.n(),
            x.nrows()
        )));
    }
    Ok(())
}

/// `B = Omega X_c' F_c / n`.
pub fn estimate_coefficients(
    x: &DMatrix<f64>,
    partition: &SlicePartition,
    omega: &PrecisionEstimate,
) -> Result<CoefficientMatrix> {
    check_partition(x, partition)?;
    if omega.dim() != x.ncols() {
        return Err(MtaError::Shape(format!(
            "precision matrix is {}x{} but design has {} columns",
            omega.dim(),
            omega.dim(),
            x.ncols()
        )));
    }
    let b = &omega.matrix * centered_cross_moment(x, partition);
    ensure_finite(b.as_slice(), "coefficient matrix")?;
    Ok(CoefficientMatrix {
        b,
        n_slices: partition.n_slices,
        n_used: x.nrows(),
        partition: partition.clone(),
    })
}

/// Diagnostic between-slice covariance of slice means.
#[derive(Debug, Clone)]
pub struct LambdaEstimate {
    pub matrix: DMatrix<f64>,
    pub n_slices: usize,
}

impl LambdaEstimate {
    /// Eigenvalues in decreasing order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }
}

/// `(1/H) sum_h (xbar_h - xbar)(xbar_h - xbar)'`.
pub fn lambda_hat(x: &DMatrix<f64>, partition: &SlicePartition) -> Result<LambdaEstimate> {
    check_partition(x, partition)?;
    let p = x.ncols();
    let h = partition.n_slices;
    let nf = x.nrows() as f64;
    // column s of the cross moment is (count_s / n)(xbar_s - xbar)
    let mut dev = centered_cross_moment(x, partition);
    for (s, &count) in partition.counts.iter().enumerate() {
        dev.column_mut(s).scale_mut(nf / count as f64);
    }
    let mut matrix = &dev * dev.transpose() / h as f64;
    for j in 0..p {
        for i in (j + 1)..p {
            matrix[(i, j)] = matrix[(j, i)];
        }
    }
    Ok(LambdaEstimate {
        matrix,
        n_slices: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::{nodewise_precision, LambdaRule};
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn partition_sizes() {
        let y: Vec<f64> = (1..=10).map(f64::from).collect();
        let part = make_partition(&y, 2).unwrap();
        assert_eq!(part.counts, vec![5, 5]);
        assert_eq!(part.boundaries, vec![5.0]);

        let part = make_partition(&y, 3).unwrap();
        assert_eq!(part.counts, vec![4, 4, 2]);
        assert_eq!(part.boundaries, vec![4.0, 8.0]);
        assert_eq!(part.slice_of, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2]);
    }

    #[test]
    fn partition_ties_by_position() {
        // sorted order (by value, then index): 0,1,2 | 3,4,5
        let y = [1.0, 2.0, 2.0, 2.0, 3.0, 4.0];
        let part = make_partition(&y, 2).unwrap();
        assert_eq!(part.counts, vec![3, 3]);
        assert_eq!(part.slice_of, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(part.boundaries, vec![2.0]);

        let y = [2.0, 4.0, 2.0, 3.0, 2.0, 1.0];
        let part = make_partition(&y, 2).unwrap();
        assert_eq!(part.slice_of, vec![0, 1, 0, 1, 1, 0]);
    }

    #[test]
    fn partition_fallback_when_trailing_slice_empty() {
        let y: Vec<f64> = (0..12).map(f64::from).collect();
        let part = make_partition(&y, 5).unwrap();
        assert_eq!(part.counts, vec![3, 3, 2, 2, 2]);
        assert!(part.counts.iter().all(|&c| c >= 1));
    }

    #[test]
    fn partition_errors() {
        let y = [1.0, 2.0, 3.0];
        assert!(matches!(
            make_partition(&y, 2),
            Err(MtaError::InsufficientSamples { .. })
        ));
        let y = [1.0; 8];
        assert_eq!(make_partition(&y, 2), Err(MtaError::DegenerateResponse));
        assert!(make_partition(&[1.0, 2.0, f64::NAN, 3.0], 2).is_err());
    }

    #[test]
    fn indicator_matrix() {
        let part = make_partition(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let f = slice_indicator_matrix(&part);
        assert_eq!(f.column(0).as_slice(), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(f.column(1).as_slice(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn identity_precision_gives_cross_moment() {
        let n = 50;
        let x = normal_matrix(n, 3, 4);
        let mut rng = rng_from_seed(5);
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let part = make_partition(&y, 5).unwrap();
        let b = estimate_coefficients(&x, &part, &PrecisionEstimate::identity(3)).unwrap();
        let mut xc = x.clone();
        for mut c in xc.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        let mut f = slice_indicator_matrix(&part);
        for mut c in f.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        let direct = xc.tr_mul(&f) / n as f64;
        assert!((b.b - direct).amax() < 1e-12);
    }

    #[test]
    fn pure_noise_coefficients_are_small() {
        let n = 2000;
        let x = normal_matrix(n, 10, 31);
        let mut rng = rng_from_seed(32);
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let part = make_partition(&y, 10).unwrap();
        let omega = nodewise_precision(&x, LambdaRule::default()).unwrap();
        let b = estimate_coefficients(&x, &part, &omega).unwrap();
        assert!(b.b.amax() <= 0.1);
    }

    #[test]
    fn shift_and_permutation_invariance() {
        let n = 120;
        let x = normal_matrix(n, 4, 40);
        let mut rng = rng_from_seed(41);
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let part = make_partition(&y, 6).unwrap();
        let omega = nodewise_precision(&x, LambdaRule::ExactInverse).unwrap();
        let b = estimate_coefficients(&x, &part, &omega).unwrap();

        let mut shifted = x.clone();
        for (j, mut c) in shifted.column_iter_mut().enumerate() {
            c.add_scalar_mut(3.0 + j as f64);
        }
        let b_shift = estimate_coefficients(&shifted, &part, &omega).unwrap();
        assert!((&b.b - &b_shift.b).amax() <= 1e-10);

        let perm: Vec<usize> = (0..n).rev().collect();
        let xp = x.select_rows(&perm);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let part_p = make_partition(&yp, 6).unwrap();
        let omega_p = nodewise_precision(&xp, LambdaRule::ExactInverse).unwrap();
        let bp = estimate_coefficients(&xp, &part_p, &omega_p).unwrap();
        assert!((&b.b - &bp.b).amax() <= 1e-10);
    }

    #[test]
    fn shape_errors() {
        let x = normal_matrix(20, 3, 1);
        let part = make_partition(&(0..20).map(f64::from).collect::<Vec<_>>(), 4).unwrap();
        assert!(matches!(
            estimate_coefficients(&x, &part, &PrecisionEstimate::identity(4)),
            Err(MtaError::Shape(_))
        ));
        let short = make_partition(&(0..10).map(f64::from).collect::<Vec<_>>(), 2).unwrap();
        assert!(matches!(
            estimate_coefficients(&x, &short, &PrecisionEstimate::identity(3)),
            Err(MtaError::Shape(_))
        ));
    }

    #[test]
    fn lambda_hat_trivial_cases() {
        // equal slice means
        let x = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let part = make_partition(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let lam = lambda_hat(&x, &part).unwrap();
        assert!(lam.matrix.amax() < 1e-15);

        // slice means +-m around the grand mean
        let m = 1.5;
        let x = DMatrix::from_row_slice(4, 1, &[1.0 - m, 1.0 - m, 1.0 + m, 1.0 + m]);
        let lam = lambda_hat(&x, &part).unwrap();
        assert!((lam.matrix[(0, 0)] - m * m).abs() < 1e-12);
    }
}
