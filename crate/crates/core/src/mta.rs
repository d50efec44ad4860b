//! Data splitting, mirror statistics and the data-driven FDR threshold.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::decision::DecisionSet;
use crate::error::{MtaError, Result};
use crate::precision::{nodewise_precision, LambdaRule};
use crate::rng::rng_from_seed;
use crate::sir::{estimate_coefficients, make_partition, CoefficientMatrix, DEFAULT_SLICES};

/// A random split of `0..n` into two halves of sizes `floor(n/2)` and `ceil(n/2)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub indices_half1: Vec<usize>,
    pub indices_half2: Vec<usize>,
    pub seed: u64,
}

pub fn split_data(n: usize, seed: u64) -> Result<SplitPlan> {
    if n < 4 {
        return Err(MtaError::InsufficientSamples { needed: 4, got: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let (a, b) = order.split_at(n / 2);
    let mut indices_half1 = a.to_vec();
    let mut indices_half2 = b.to_vec();
    indices_half1.sort_unstable();
    indices_half2.sort_unstable();
    Ok(SplitPlan {
        indices_half1,
        indices_half2,
        seed,
    })
}

/// `M_j = sum_h B1_jh * B2_jh`.
pub fn mirror_statistics(b1: &CoefficientMatrix, b2: &CoefficientMatrix) -> Result<Vec<f64>> {
    if b1.b.shape() != b2.b.shape() {
        return Err(MtaError::Shape(format!(
            "coefficient matrices differ in shape: {:?} vs {:?}",
            b1.b.shape(),
            b2.b.shape()
        )));
    }
    Ok((0..b1.b.nrows())
        .map(|j| b1.b.row(j).dot(&b2.b.row(j)))
        .collect())
}

/// Sorted copy of the statistics, for counting tails with binary search.
struct SortedStats(Vec<f64>);

impl SortedStats {
    fn new(m: &[f64]) -> Self {
        let mut v = m.to_vec();
        v.sort_by(f64::total_cmp);
        Self(v)
    }

    /// `#{j : M_j <= -t}`
    fn lower(&self, t: f64) -> usize {
        self.0.partition_point(|&v| v <= -t)
    }

    /// `#{j : M_j > t}`
    fn upper(&self, t: f64) -> usize {
        self.0.len() - self.0.partition_point(|&v| v <= t)
    }

    fn fdp(&self, t: f64, offset: f64) -> f64 {
        let denom = self.upper(t);
        if denom == 0 {
            f64::INFINITY
        } else {
            (self.lower(t) as f64 + offset) / denom as f64
        }
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 {
        Ok(())
    } else {
        Err(MtaError::Domain(format!("threshold must be > 0, got {t}")))
    }
}

/// `#{M_j <= -t} / #{M_j > t}`; `f64::INFINITY` when nothing exceeds `t`.
pub fn fdp_hat(m: &[f64], t: f64) -> Result<f64> {
    fdp_hat_with_offset(m, t, 0.0)
}

/// [`fdp_hat`] with `offset` added to the numerator.
pub fn fdp_hat_with_offset(m: &[f64], t: f64, offset: f64) -> Result<f64> {
    check_threshold(t)?;
    Ok(SortedStats::new(m).fdp(t, offset))
}

/// Threshold search output: the chosen `tau_q` plus every evaluated point.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSelection {
    pub tau_q: Option<f64>,
    pub fdp_curve: Vec<(f64, f64)>,
}

/// Scan the candidates `{|M_j| : M_j != 0}` in increasing order and return the
/// first one with estimated FDP at most `q`.
pub fn select_threshold_with_offset(m: &[f64], q: f64, offset: f64) -> ThresholdSelection {
    let sorted = SortedStats::new(m);
    let mut candidates: Vec<f64> = m.iter().filter(|v| **v != 0.0).map(|v| v.abs()).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut fdp_curve = Vec::with_capacity(candidates.len());
    let mut tau_q = None;
    for t in candidates {
        let fdp = sorted.fdp(t, offset);
        fdp_curve.push((t, fdp));
        if tau_q.is_none() && fdp <= q {
            tau_q = Some(t);
        }
    }
    ThresholdSelection { tau_q, fdp_curve }
}

pub fn select_threshold(m: &[f64], q: f64) -> Option<f64> {
    select_threshold_with_offset(m, q, 0.0).tau_q
}

/// Reject `j` iff `M_j > tau`; nothing when there is no threshold.
pub fn decide(m: &[f64], tau_q: Option<f64>) -> DecisionSet {
    match tau_q {
        Some(tau) => DecisionSet::from_indices(
            m.len(),
            m.iter()
                .enumerate()
                .filter(|(_, &v)| v > tau)
                .map(|(j, _)| j),
        ),
        None => DecisionSet::empty(m.len()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorStatistics {
    pub m: Vec<f64>,
    pub tau_q: Option<f64>,
    pub q: f64,
    pub fdp_curve: Vec<(f64, f64)>,
}

/// Settings for one run of the full procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtaConfig {
    pub n_slices: usize,
    pub q: f64,
    pub seed: u64,
    pub lambda_rule: LambdaRule,
    /// Added to the FDP numerator; 0 by default, 1 for the conservative variant.
    pub fdp_offset: f64,
}

impl MtaConfig {
    pub fn new(q: f64, seed: u64) -> Self {
        Self {
            n_slices: DEFAULT_SLICES,
            q,
            seed,
            lambda_rule: LambdaRule::default(),
            fdp_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MtaOutcome {
    pub decisions: DecisionSet,
    pub mirror: MirrorStatistics,
    pub split: SplitPlan,
}

/// SIR coefficient matrix of one sample, with its own slicing and precision estimate.
pub fn half_coefficients(
    data: &Dataset,
    n_slices: usize,
    lambda_rule: LambdaRule,
) -> Result<CoefficientMatrix> {
    let partition = make_partition(data.y.as_slice(), n_slices)?;
    let omega = nodewise_precision(&data.x, lambda_rule)?;
    estimate_coefficients(&data.x, &partition, &omega)
}

/// Split, estimate `B` on each half, form mirror statistics and threshold them.
pub fn mta_procedure(data: &Dataset, config: &MtaConfig) -> Result<MtaOutcome> {
    let n = data.n();
    if !(config.q > 0.0 && config.q < 1.0) {
        return Err(MtaError::Domain(format!("q must be in (0,1), got {}", config.q)));
    }
    if config.n_slices < 2 {
        return Err(MtaError::Config(format!(
            "need at least 2 slices, got {}",
            config.n_slices
        )));
    }
    if n < 4 * config.n_slices {
        return Err(MtaError::InsufficientSamples {
            needed: 4 * config.n_slices,
            got: n,
        });
    }
    let split = split_data(n, config.seed)?;
    let d1 = data.subset(&split.indices_half1);
    let d2 = data.subset(&split.indices_half2);
    let (b1, b2) = rayon::join(
        || half_coefficients(&d1, config.n_slices, config.lambda_rule),
        || half_coefficients(&d2, config.n_slices, config.lambda_rule),
    );
    let m = mirror_statistics(&b1?, &b2?)?;
    let selection = select_threshold_with_offset(&m, config.q, config.fdp_offset);
    let decisions = decide(&m, selection.tau_q);
    Ok(MtaOutcome {
        decisions,
        mirror: MirrorStatistics {
            m,
            tau_q: selection.tau_q,
            q: config.q,
            fdp_curve: selection.fdp_curve,
        },
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn coef(rows: &[&[f64]]) -> CoefficientMatrix {
        let h = rows[0].len();
        let b = DMatrix::from_fn(rows.len(), h, |i, j| rows[i][j]);
        let y: Vec<f64> = (0..2 * h).map(|v| v as f64).collect();
        CoefficientMatrix {
            b,
            n_slices: h,
            n_used: 2 * h,
            partition: make_partition(&y, h).unwrap(),
        }
    }

    #[test]
    fn split_basics() {
        let plan = split_data(4, 3).unwrap();
        assert_eq!(plan.indices_half1.len(), 2);
        assert_eq!(plan.indices_half2.len(), 2);
        let mut all = [plan.indices_half1.clone(), plan.indices_half2.clone()].concat();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert_eq!(plan, split_data(4, 3).unwrap());

        let plan = split_data(1001, 9).unwrap();
        assert_eq!(plan.indices_half1.len(), 500);
        assert_eq!(plan.indices_half2.len(), 501);
        assert!(split_data(3, 1).is_err());
        assert_ne!(split_data(100, 1).unwrap(), split_data(100, 2).unwrap());
    }

    #[test]
    fn mirror_basics() {
        let b1 = coef(&[&[1.0, 2.0], &[0.5, -1.0]]);
        let b2 = coef(&[&[3.0, 4.0], &[2.0, 1.0]]);
        assert_eq!(mirror_statistics(&b1, &b2).unwrap(), vec![11.0, 0.0]);
        let selfm = mirror_statistics(&b1, &b1).unwrap();
        assert_eq!(selfm, vec![5.0, 1.25]);
        let b3 = coef(&[&[1.0, 2.0, 3.0]]);
        assert!(mirror_statistics(&b1, &b3).is_err());
    }

    #[test]
    fn fdp_examples() {
        let m = [3.0, -2.0, 1.0, -4.0];
        assert_eq!(fdp_hat(&m, 1.5).unwrap(), 2.0);
        assert_eq!(fdp_hat(&m, 0.5).unwrap(), 1.0);
        assert_eq!(fdp_hat(&[1.0, 2.0, 3.0], 0.5).unwrap(), 0.0);
        assert_eq!(fdp_hat(&[1.0, 2.0], 5.0).unwrap(), f64::INFINITY);
        assert!(fdp_hat(&m, 0.0).is_err());
        assert!(fdp_hat(&m, -1.0).is_err());
        // numerator boundary is inclusive
        assert_eq!(fdp_hat(&[-2.0, 3.0], 2.0).unwrap(), 1.0);
        assert_eq!(fdp_hat_with_offset(&m, 0.5, 1.0).unwrap(), 1.5);
    }

    #[test]
    fn threshold_examples() {
        let m = [5.0, 4.0, 3.0, -0.5];
        let sel = select_threshold_with_offset(&m, 0.5, 0.0);
        assert_eq!(sel.tau_q, Some(0.5));
        assert_eq!(sel.fdp_curve[0], (0.5, 1.0 / 3.0));
        assert_eq!(decide(&m, sel.tau_q).rejected, vec![0, 1, 2]);

        assert_eq!(select_threshold(&[-1.0, -2.0, -3.0], 0.3), None);
        assert!(decide(&[-1.0, -2.0], None).is_empty());
        assert_eq!(select_threshold(&[0.0, 0.0], 0.1), None);
    }

    proptest! {
        #[test]
        fn negating_one_half_negates_statistics(
            vals in proptest::collection::vec(-5.0f64..5.0, 12)
        ) {
            let b1 = coef(&[&vals[0..3], &vals[3..6]]);
            let b2 = coef(&[&vals[6..9], &vals[9..12]]);
            let mut neg = b2.clone();
            neg.b.neg_mut();
            let m = mirror_statistics(&b1, &b2).unwrap();
            let mn = mirror_statistics(&b1, &neg).unwrap();
            for (a, b) in m.iter().zip(&mn) {
                prop_assert_eq!(*a, -*b);
            }
        }

        #[test]
        fn threshold_is_self_consistent_and_nested(
            m in proptest::collection::vec(-3.0f64..3.0, 1..80),
            q1 in 0.01f64..0.5,
            dq in 0.0f64..0.4,
        ) {
            let q2 = q1 + dq;
            let t1 = select_threshold(&m, q1);
            if let Some(t) = t1 {
                prop_assert!(fdp_hat(&m, t).unwrap() <= q1);
            }
            let d1 = decide(&m, t1);
            let d2 = decide(&m, select_threshold(&m, q2));
            prop_assert!(d1.is_subset_of(&d2));
            for j in 0..m.len() {
                prop_assert_eq!(d1.contains(j), t1.is_some_and(|t| m[j] > t));
            }
        }
    }
}
