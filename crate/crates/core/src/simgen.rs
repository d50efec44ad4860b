//! Simulation designs: AR(1) Gaussian covariates, sparse multi-index
//! coefficients and the four nonlinear response models.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::decision::DecisionSet;
use crate::error::{ensure_finite, MtaError, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};

pub mod harness;

/// Monte Carlo draws used to estimate `var(f(x))` for noise calibration.
pub const DEFAULT_CALIBRATION_DRAWS: usize = 100_000;
const CALIBRATION_SEED: u64 = 0x51A1_CA1B;

/// One of the four response models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Setting {
    /// `sin(a1'x) + (a2'x)^3 + sigma*eps`
    One,
    /// `3 a1'x / (0.5 + (1.5 + a2'x)^2) + sigma*eps`
    Two,
    /// `(a1'x)^3 + (a2'x) * sigma*eps`
    Three,
    /// `1 / (1 + exp(sum_l relu(a_l'x))) + sigma*eps` with five indices
    Four,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::One, Setting::Two, Setting::Three, Setting::Four];

    pub fn n_indices(self) -> usize {
        match self {
            Setting::Four => 5,
            _ => 2,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Setting::One => 1,
            Setting::Two => 2,
            Setting::Three => 3,
            Setting::Four => 4,
        }
    }

    /// Noise-free part of the response given the index projections `u_l = a_l'x`.
    pub fn signal(self, u: &[f64]) -> f64 {
        match self {
            Setting::One => u[0].sin() + u[1].powi(3),
            Setting::Two => 3.0 * u[0] / (0.5 + (1.5 + u[1]).powi(2)),
            Setting::Three => u[0].powi(3),
            Setting::Four => {
                let s: f64 = u.iter().map(|v| v.max(0.0)).sum();
                1.0 / (1.0 + s.exp())
            }
        }
    }

    /// Full response for noise draw `eps` at noise level `sigma`.
    pub fn response(self, u: &[f64], sigma: f64, eps: f64) -> f64 {
        match self {
            Setting::Three => self.signal(u) + u[1] * sigma * eps,
            _ => self.signal(u) + sigma * eps,
        }
    }
}

impl TryFrom<u8> for Setting {
    type Error = MtaError;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Setting::One),
            2 => Ok(Setting::Two),
            3 => Ok(Setting::Three),
            4 => Ok(Setting::Four),
            _ => Err(MtaError::Config(format!("setting must be 1-4, got {v}"))),
        }
    }
}

impl From<Setting> for u8 {
    fn from(s: Setting) -> u8 {
        s.number()
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// How the SNR-matching rule compares signal variance with the noise level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrScale {
    /// `var(f_j)/sigma_j` held constant.
    #[default]
    Linear,
    /// `var(f_j)/sigma_j^2` held constant.
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum SigmaRule {
    /// `sigma_1` for setting 1; other settings keep the setting-1 signal-to-noise ratio.
    SnrMatched {
        sigma1: f64,
        draws: usize,
        scale: SnrScale,
    },
    /// `sigma = psi / sqrt(n)`.
    Psi { psi: f64 },
    Fixed { sigma: f64 },
}

impl Default for SigmaRule {
    fn default() -> Self {
        SigmaRule::SnrMatched {
            sigma1: 0.5,
            draws: DEFAULT_CALIBRATION_DRAWS,
            scale: SnrScale::Linear,
        }
    }
}

impl SigmaRule {
    pub fn psi(&self) -> Option<f64> {
        match *self {
            SigmaRule::Psi { psi } => Some(psi),
            _ => None,
        }
    }
}

/// Distribution that covariate rows are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignSource {
    /// Rows i.i.d. `N(0, Sigma)` with `Sigma_ij = rho^|i-j|`.
    Ar1 { rho: f64 },
    /// Rows resampled from a fixed matrix.
    Rows(Arc<DMatrix<f64>>),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub setting: Setting,
    pub n_indices: usize,
    pub sparsity_per_index: usize,
    /// Standard deviation of nonzero coefficients; `None` means `20/sqrt(n)`.
    pub coef_sd: Option<f64>,
    pub sigma_rule: SigmaRule,
    pub design: DesignSource,
    pub seed: u64,
}

impl SimConfig {
    /// `n = 1000`, `p = 200`, 20 nonzeros per index, SNR-matched noise.
    pub fn paper_default(setting: Setting, rho: f64) -> Self {
        Self {
            n: 1000,
            p: 200,
            setting,
            n_indices: setting.n_indices(),
            sparsity_per_index: 20,
            coef_sd: None,
            sigma_rule: SigmaRule::default(),
            design: DesignSource::Ar1 { rho },
            seed: 0,
        }
    }

    pub fn rho(&self) -> Option<f64> {
        match self.design {
            DesignSource::Ar1 { rho } => Some(rho),
            DesignSource::Rows(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let DesignSource::Ar1 { rho } = self.design {
            check_rho(rho)?;
        }
        if self.n_indices != self.setting.n_indices() {
            return Err(MtaError::Config(format!(
                "setting {} uses {} indices, got {}",
                self.setting,
                self.setting.n_indices(),
                self.n_indices
            )));
        }
        if self.sparsity_per_index > self.p {
            return Err(MtaError::Config(format!(
                "sparsity {} exceeds p = {}",
                self.sparsity_per_index, self.p
            )));
        }
        if self.n < 2 || self.p < 1 {
            return Err(MtaError::Config(format!(
                "need n >= 2 and p >= 1, got n = {}, p = {}",
                self.n, self.p
            )));
        }
        Ok(())
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(MtaError::Domain(format!("rho must be in [0,1), got {rho}")))
    }
}

/// `n x p` design with AR(1) rows: `x_j = rho x_{j-1} + sqrt(1 - rho^2) e_j`.
pub fn gen_design(n: usize, p: usize, rho: f64, seed: u64) -> Result<DMatrix<f64>> {
    check_rho(rho)?;
    let mut rng = rng_from_seed(seed);
    let innov = (1.0 - rho * rho).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev: f64 = StandardNormal.sample(&mut rng);
        if p > 0 {
            x[(i, 0)] = prev;
        }
        for j in 1..p {
            let e: f64 = StandardNormal.sample(&mut rng);
            prev = rho * prev + innov * e;
            x[(i, j)] = prev;
        }
    }
    Ok(x)
}

/// Index coefficients and the resulting Markov blanket.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `n_indices x p`, row `l` holds `a_l`.
    pub a: DMatrix<f64>,
    /// Sorted indices `j` with some `a_lj != 0`.
    pub markov_blanket: Vec<usize>,
}

impl GroundTruth {
    pub fn from_coefficients(a: DMatrix<f64>) -> Self {
        let markov_blanket = (0..a.ncols())
            .filter(|&j| a.column(j).iter().any(|v| *v != 0.0))
            .collect();
        Self { a, markov_blanket }
    }

    pub fn n_indices(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_signal(&self, j: usize) -> bool {
        self.markov_blanket.binary_search(&j).is_ok()
    }
}

/// Random supports of size `sparsity_per_index` with `N(0, (20/sqrt(n))^2)` entries.
pub fn gen_coefficients(
    p: usize,
    n_indices: usize,
    sparsity_per_index: usize,
    n: usize,
    seed: u64,
) -> Result<GroundTruth> {
    gen_coefficients_with_sd(p, n_indices, sparsity_per_index, 20.0 / (n as f64).sqrt(), seed)
}

pub fn gen_coefficients_with_sd(
    p: usize,
    n_indices: usize,
    sparsity_per_index: usize,
    coef_sd: f64,
    seed: u64,
) -> Result<GroundTruth> {
    if sparsity_per_index > p {
        return Err(MtaError::Config(format!(
            "sparsity {sparsity_per_index} exceeds p = {p}"
        )));
    }
    let normal = Normal::new(0.0, coef_sd)
        .map_err(|e| MtaError::Domain(format!("coefficient sd {coef_sd}: {e}")))?;
    let mut rng = rng_from_seed(seed);
    let mut a = DMatrix::zeros(n_indices, p);
    for l in 0..n_indices {
        let mut support = sample(&mut rng, p, sparsity_per_index).into_vec();
        support.sort_unstable();
        for j in support {
            let mut v = normal.sample(&mut rng);
            // a continuous draw is nonzero almost surely; keep the support size exact
            while v == 0.0 {
                v = normal.sample(&mut rng);
            }
            a[(l, j)] = v;
        }
    }
    Ok(GroundTruth::from_coefficients(a))
}

/// Index projections `A x_i` for every row, as an `n x L` matrix.
fn projections(x: &DMatrix<f64>, truth: &GroundTruth) -> DMatrix<f64> {
    x * truth.a.transpose()
}

/// Monte Carlo draws of the index projections under the design distribution.
fn projection_draws(
    truth: &GroundTruth,
    reference: &DesignSource,
    draws: usize,
) -> Result<DMatrix<f64>> {
    let l = truth.n_indices();
    let mut rng = rng_from_seed(CALIBRATION_SEED);
    match reference {
        DesignSource::Ar1 { rho } => {
            check_rho(*rho)?;
            let p = truth.a.ncols();
            let sigma = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
            let cov = &truth.a * sigma * truth.a.transpose();
            let eig = cov.symmetric_eigen();
            let root_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            let root = &eig.eigenvectors * DMatrix::from_diagonal(&root_vals);
            let z: DMatrix<f64> = DMatrix::from_fn(draws, l, |_, _| StandardNormal.sample(&mut rng));
            Ok(z * root.transpose())
        }
        DesignSource::Rows(rows) => {
            if rows.ncols() != truth.a.ncols() || rows.nrows() == 0 {
                return Err(MtaError::Shape(format!(
                    "reference design is {}x{}, coefficients have {} columns",
                    rows.nrows(),
                    rows.ncols(),
                    truth.a.ncols()
                )));
            }
            let idx: Vec<usize> = (0..draws)
                .map(|_| rng.random_range(0..rows.nrows()))
                .collect();
            Ok(projections(&rows.select_rows(&idx), truth))
        }
    }
}

fn sample_variance(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    v.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Monte Carlo estimate of `var(f(x))` for `setting` (noise-free part).
pub fn signal_variance(
    setting: Setting,
    truth: &GroundTruth,
    reference: &DesignSource,
    draws: usize,
) -> Result<f64> {
    let u = projection_draws(truth, reference, draws)?;
    let values: Vec<f64> = u
        .row_iter()
        .map(|r| setting.signal(&r.iter().copied().collect::<Vec<_>>()))
        .collect();
    Ok(sample_variance(values.iter().copied()))
}

/// Noise level implied by `rule` for a sample of size `n`.
pub fn calibrate_sigma(
    setting: Setting,
    truth: &GroundTruth,
    rule: SigmaRule,
    reference: &DesignSource,
    n: usize,
) -> Result<f64> {
    match rule {
        SigmaRule::Fixed { sigma } => Ok(sigma),
        SigmaRule::Psi { psi } => Ok(psi / (n as f64).sqrt()),
        SigmaRule::SnrMatched { sigma1, .. } if setting == Setting::One => Ok(sigma1),
        SigmaRule::SnrMatched {
            sigma1,
            draws,
            scale,
        } => {
            let u = projection_draws(truth, reference, draws)?;
            let rows: Vec<Vec<f64>> = u
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect();
            let var_ref = sample_variance(rows.iter().map(|u| Setting::One.signal(u)));
            let var_this = sample_variance(rows.iter().map(|u| setting.signal(u)));
            if !(var_ref > 0.0) {
                return Err(MtaError::Config(
                    "setting-1 signal has zero variance; cannot match its SNR".into(),
                ));
            }
            let ratio = var_this / var_ref;
            Ok(match scale {
                SnrScale::Linear => sigma1 * ratio,
                SnrScale::Squared => sigma1 * ratio.sqrt(),
            })
        }
    }
}

/// Response vector for design `x`; returns the noise level used as well.
pub fn gen_response(
    x: &DMatrix<f64>,
    truth: &GroundTruth,
    setting: Setting,
    sigma_rule: SigmaRule,
    reference: &DesignSource,
    seed: u64,
) -> Result<(DVector<f64>, f64)> {
    if truth.n_indices() != setting.n_indices() {
        return Err(MtaError::Config(format!(
            "setting {setting} needs {} indices, truth has {}",
            setting.n_indices(),
            truth.n_indices()
        )));
    }
    if truth.a.ncols() != x.ncols() {
        return Err(MtaError::Shape(format!(
            "coefficients have {} columns, design has {}",
            truth.a.ncols(),
            x.ncols()
        )));
    }
    let sigma = calibrate_sigma(setting, truth, sigma_rule, reference, x.nrows())?;
    let u = projections(x, truth);
    let mut rng = rng_from_seed(seed);
    let y = DVector::from_iterator(
        x.nrows(),
        u.row_iter().map(|r| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            setting.response(&r.iter().copied().collect::<Vec<_>>(), sigma, eps)
        }),
    );
    ensure_finite(y.as_slice(), "simulated response")?;
    Ok((y, sigma))
}

/// One simulated replication.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: Dataset,
    pub truth: GroundTruth,
    pub sigma: f64,
}

/// Random `n x p` block of a file design, columns scaled to mean 0 and variance 1.
fn subsample_rows_design(
    rows: &DMatrix<f64>,
    n: usize,
    p: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if rows.nrows() < n || rows.ncols() < p {
        return Err(MtaError::Config(format!(
            "design file is {}x{}, need at least {n}x{p}",
            rows.nrows(),
            rows.ncols()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut cols = sample(&mut rng, rows.ncols(), p).into_vec();
    cols.sort_unstable();
    let mut row_idx = sample(&mut rng, rows.nrows(), n).into_vec();
    row_idx.sort_unstable();
    let mut x = rows.select_columns(&cols).select_rows(&row_idx);
    let nf = n as f64;
    for (j, mut c) in x.column_iter_mut().enumerate() {
        let mean = c.sum() / nf;
        c.add_scalar_mut(-mean);
        let sd = (c.norm_squared() / nf).sqrt();
        if sd == 0.0 {
            return Err(MtaError::DegenerateColumn {
                column: cols[j],
                tau_sq: 0.0,
            });
        }
        c /= sd;
    }
    Ok(x)
}

/// Draw design, coefficients and response for `config.seed`.
pub fn simulate(config: &SimConfig) -> Result<Simulated> {
    config.validate()?;
    let seed = config.seed;
    let (x, reference) = match &config.design {
        DesignSource::Ar1 { rho } => (
            gen_design(config.n, config.p, *rho, derive_seed(seed, &[stream::DESIGN]))?,
            config.design.clone(),
        ),
        DesignSource::Rows(rows) => {
            let x = subsample_rows_design(
                rows,
                config.n,
                config.p,
                derive_seed(seed, &[stream::COLUMNS]),
            )?;
            let reference = DesignSource::Rows(Arc::new(x.clone()));
            (x, reference)
        }
    };
    let coef_seed = derive_seed(seed, &[stream::COEFFICIENTS]);
    let truth = match config.coef_sd {
        Some(sd) => gen_coefficients_with_sd(
            config.p,
            config.n_indices,
            config.sparsity_per_index,
            sd,
            coef_seed,
        )?,
        None => gen_coefficients(
            config.p,
            config.n_indices,
            config.sparsity_per_index,
            config.n,
            coef_seed,
        )?,
    };
    let (y, sigma) = gen_response(
        &x,
        &truth,
        config.setting,
        config.sigma_rule,
        &reference,
        derive_seed(seed, &[stream::RESPONSE]),
    )?;
    Ok(Simulated {
        data: Dataset::new(x, y)?,
        truth,
        sigma,
    })
}

/// Selection quality against the known Markov blanket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub power: f64,
    pub fdp: f64,
    pub n_rejected: usize,
}

pub fn evaluate(decisions: &DecisionSet, truth: &GroundTruth) -> Metrics {
    let n_rejected = decisions.len();
    let tp = decisions
        .rejected
        .iter()
        .filter(|&&j| truth.is_signal(j))
        .count();
    let fp = n_rejected - tp;
    let mb = truth.markov_blanket.len();
    Metrics {
        tp,
        fp,
        power: if mb == 0 { 0.0 } else { tp as f64 / mb as f64 },
        fdp: fp as f64 / n_rejected.max(1) as f64,
        n_rejected,
    }
}
