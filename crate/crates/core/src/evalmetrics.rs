//! Aggregate checks over Monte Carlo replications.

use serde::Serialize;

use crate::error::{MtaError, Result};
use crate::simgen::harness::{Method, ReplicationRecord};

/// Tail frequencies of pooled null statistics at each threshold.
///
/// Pooling over null features approximates the per-feature symmetry
/// statement; reports built on it are labelled as pooled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub t_grid: Vec<f64>,
    /// Fraction of pooled samples with `M < -t`.
    pub left_frac: Vec<f64>,
    /// Fraction of pooled samples with `M > t`.
    pub right_frac: Vec<f64>,
    pub max_gap: f64,
    pub n_samples: usize,
}

/// Compare `P(M < -t)` with `P(M > t)` over rows of null mirror statistics.
///
/// Rows are replications and may have different lengths (the null set can
/// change between replications).
pub fn symmetry_check(null_samples: &[Vec<f64>], t_grid: &[f64]) -> Result<SymmetryReport> {
    let pooled: Vec<f64> = null_samples.iter().flatten().copied().collect();
    if pooled.is_empty() {
        return Err(MtaError::InvalidData("no null statistics supplied".into()));
    }
    if t_grid.is_empty() {
        return Err(MtaError::InvalidData("empty threshold grid".into()));
    }
    let n = pooled.len() as f64;
    let mut left_frac = Vec::with_capacity(t_grid.len());
    let mut right_frac = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        left_frac.push(pooled.iter().filter(|&&m| m < -t).count() as f64 / n);
        right_frac.push(pooled.iter().filter(|&&m| m > t).count() as f64 / n);
    }
    let max_gap = left_frac
        .iter()
        .zip(&right_frac)
        .map(|(l, r)| (l - r).abs())
        .fold(0.0, f64::max);
    Ok(SymmetryReport {
        t_grid: t_grid.to_vec(),
        left_frac,
        right_frac,
        max_gap,
        n_samples: pooled.len(),
    })
}

/// Linear-interpolation quantiles of the pooled `|M|`.
pub fn abs_quantiles(samples: &[Vec<f64>], probs: &[f64]) -> Result<Vec<f64>> {
    let mut abs: Vec<f64> = samples.iter().flatten().map(|v| v.abs()).collect();
    if abs.is_empty() {
        return Err(MtaError::InvalidData("no statistics supplied".into()));
    }
    abs.sort_by(f64::total_cmp);
    let last = (abs.len() - 1) as f64;
    probs
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(MtaError::Domain(format!("quantile level {p} outside [0,1]")));
            }
            let pos = p * last;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            Ok(abs[lo] + (pos - lo as f64) * (abs[hi] - abs[lo]))
        })
        .collect()
}

/// Grouping key of a simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellKey {
    pub setting: u8,
    pub rho: Option<f64>,
    pub psi: Option<f64>,
    pub method: Method,
    pub q: f64,
}

impl CellKey {
    fn of(r: &ReplicationRecord) -> Self {
        Self {
            setting: r.setting,
            rho: r.rho,
            psi: r.psi,
            method: r.method,
            q: r.q,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub key: CellKey,
    /// Successful replications.
    pub n_reps: usize,
    pub n_errors: usize,
    pub mean_fdp: f64,
    pub sd_fdp: f64,
    pub se_fdp: f64,
    pub mean_power: f64,
    pub sd_power: f64,
    pub se_power: f64,
}

/// Mean and sample standard deviation; the sd of fewer than two values is 0.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Per-cell mean, sd and standard error of FDP and power.
///
/// Cells appear in order of first occurrence; errored records are counted
/// but excluded from the averages.
pub fn empirical_fdr(records: &[ReplicationRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<CellKey> = Vec::new();
    let mut groups: Vec<Vec<&ReplicationRecord>> = Vec::new();
    for r in records {
        let key = CellKey::of(r);
        match keys.iter().position(|k| *k == key) {
            Some(i) => groups[i].push(r),
            None => {
                keys.push(key);
                groups.push(vec![r]);
            }
        }
    }
    keys.into_iter()
        .zip(groups)
        .map(|(key, group)| {
            let ok: Vec<&ReplicationRecord> = group.iter().copied().filter(|r| !r.is_error()).collect();
            let fdp: Vec<f64> = ok.iter().map(|r| r.fdp).collect();
            let power: Vec<f64> = ok.iter().map(|r| r.power).collect();
            let (mean_fdp, sd_fdp) = mean_sd(&fdp);
            let (mean_power, sd_power) = mean_sd(&power);
            let root = (ok.len().max(1) as f64).sqrt();
            CellSummary {
                key,
                n_reps: ok.len(),
                n_errors: group.len() - ok.len(),
                mean_fdp,
                sd_fdp,
                se_fdp: sd_fdp / root,
                mean_power,
                sd_power,
                se_power: sd_power / root,
            }
        })
        .collect()
}
