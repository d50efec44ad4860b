//! Monte Carlo replication driver.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, simulate, SimConfig, Simulated};
use crate::baselines::{bh_procedure, marginal_hsic_pvalues, DEFAULT_PERMUTATIONS};
use crate::error::{MtaError, Result};
use crate::mta::{mta_procedure, MtaConfig};
use crate::precision::LambdaRule;
use crate::rng::{derive_seed, stream};
use crate::sir::DEFAULT_SLICES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mta,
    HsicBh,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mta => "mta",
            Method::HsicBh => "hsic_bh",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = MtaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '+'], "_").as_str() {
            "mta" => Ok(Method::Mta),
            "hsic_bh" | "hsic" => Ok(Method::HsicBh),
            other => Err(MtaError::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Method tuning shared by every replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub n_slices: usize,
    pub lambda_rule: LambdaRule,
    pub n_perm: usize,
    pub fdp_offset: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            n_slices: DEFAULT_SLICES,
            lambda_rule: LambdaRule::default(),
            n_perm: DEFAULT_PERMUTATIONS,
            fdp_offset: 0.0,
        }
    }
}

/// Outcome of one method on one simulated replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub setting: u8,
    pub rho: Option<f64>,
    pub psi: Option<f64>,
    pub method: Method,
    pub rep: usize,
    pub seed: u64,
    pub q: f64,
    pub tp: usize,
    pub fp: usize,
    pub power: f64,
    pub fdp: f64,
    pub n_rejected: usize,
    pub tau_q: Option<f64>,
    pub sigma: f64,
    pub wall_ms: f64,
    pub error: Option<String>,
}

impl ReplicationRecord {
    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

/// Seed of replication `rep` under `base_seed`.
pub fn replication_seed(base_seed: u64, rep: usize) -> u64 {
    derive_seed(base_seed, &[rep as u64])
}

fn run_method(
    sim: &Simulated,
    method: Method,
    q: f64,
    seed: u64,
    options: &RunOptions,
) -> Result<(crate::decision::DecisionSet, Option<f64>)> {
    match method {
        Method::Mta => {
            let config = MtaConfig {
                n_slices: options.n_slices,
                q,
                seed: derive_seed(seed, &[stream::SPLIT]),
                lambda_rule: options.lambda_rule,
                fdp_offset: options.fdp_offset,
            };
            let out = mta_procedure(&sim.data, &config)?;
            Ok((out.decisions, out.mirror.tau_q))
        }
        Method::HsicBh => {
            let pv = marginal_hsic_pvalues(
                &sim.data.x,
                &sim.data.y,
                options.n_perm,
                derive_seed(seed, &[stream::HSIC]),
            )?;
            Ok((bh_procedure(&pv, q)?, None))
        }
    }
}

fn replicate(
    config: &SimConfig,
    methods: &[Method],
    rep: usize,
    q: f64,
    base_seed: u64,
    options: &RunOptions,
) -> Vec<ReplicationRecord> {
    let seed = replication_seed(base_seed, rep);
    let blank = |method: Method| ReplicationRecord {
        setting: config.setting.number(),
        rho: config.rho(),
        psi: config.sigma_rule.psi(),
        method,
        rep,
        seed,
        q,
        tp: 0,
        fp: 0,
        power: 0.0,
        fdp: 0.0,
        n_rejected: 0,
        tau_q: None,
        sigma: f64::NAN,
        wall_ms: 0.0,
        error: None,
    };
    let start = Instant::now();
    let mut cfg = config.clone();
    cfg.seed = seed;
    let sim = match simulate(&cfg) {
        Ok(sim) => sim,
        Err(e) => {
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            return methods
                .iter()
                .map(|&m| ReplicationRecord {
                    wall_ms,
                    error: Some(e.to_string()),
                    ..blank(m)
                })
                .collect();
        }
    };
    let sim_ms = start.elapsed().as_secs_f64() * 1e3;
    methods
        .iter()
        .map(|&method| {
            let t0 = Instant::now();
            let result = run_method(&sim, method, q, seed, options);
            let wall_ms = sim_ms + t0.elapsed().as_secs_f64() * 1e3;
            let mut rec = ReplicationRecord {
                sigma: sim.sigma,
                wall_ms,
                ..blank(method)
            };
            match result {
                Ok((decisions, tau_q)) => {
                    let m = evaluate(&decisions, &sim.truth);
                    rec.tp = m.tp;
                    rec.fp = m.fp;
                    rec.power = m.power;
                    rec.fdp = m.fdp;
                    rec.n_rejected = m.n_rejected;
                    rec.tau_q = tau_q;
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect()
}

/// Run every method on `n_reps` freshly simulated replications.
///
/// Records come back ordered by replication, then by the order of `methods`,
/// regardless of how many worker threads are used. Failures inside a
/// replication produce records with `error` set instead of aborting the run.
pub fn run_replications(
    config: &SimConfig,
    methods: &[Method],
    n_reps: usize,
    q: f64,
    base_seed: u64,
    options: &RunOptions,
) -> Result<Vec<ReplicationRecord>> {
    if n_reps == 0 {
        return Err(MtaError::Config("need at least one replication".into()));
    }
    if methods.is_empty() {
        return Err(MtaError::Config("no methods requested".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(MtaError::Domain(format!("q must be in (0,1), got {q}")));
    }
    config.validate()?;
    let nested: Vec<Vec<ReplicationRecord>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| replicate(config, methods, rep, q, base_seed, options))
        .collect();
    Ok(nested.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::Setting;

    fn small_config() -> SimConfig {
        let mut cfg = SimConfig::paper_default(Setting::One, 0.2);
        cfg.n = 200;
        cfg.p = 20;
        cfg.sparsity_per_index = 3;
        cfg
    }

    fn small_options() -> RunOptions {
        RunOptions {
            n_slices: 5,
            n_perm: 99,
            ..RunOptions::default()
        }
    }

    #[test]
    fn one_record_per_method_and_rep() {
        let recs = run_replications(
            &small_config(),
            &[Method::Mta, Method::HsicBh],
            1,
            0.1,
            5,
            &small_options(),
        )
        .unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].method, Method::Mta);
        assert_eq!(recs[1].method, Method::HsicBh);
        assert!(recs.iter().all(|r| !r.is_error()));
        assert_eq!(recs[0].seed, recs[1].seed);
    }

    #[test]
    fn deterministic_modulo_timing() {
        let run = || {
            run_replications(&small_config(), &[Method::Mta], 3, 0.2, 11, &small_options())
                .unwrap()
                .into_iter()
                .map(|r| ReplicationRecord { wall_ms: 0.0, ..r })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn failures_become_error_records() {
        let mut opts = small_options();
        opts.n_slices = 60; // needs n >= 240
        let recs =
            run_replications(&small_config(), &[Method::Mta], 2, 0.1, 1, &opts).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.is_error()));
    }

    #[test]
    fn argument_checks() {
        let cfg = small_config();
        let o = small_options();
        assert!(run_replications(&cfg, &[Method::Mta], 0, 0.1, 1, &o).is_err());
        assert!(run_replications(&cfg, &[], 1, 0.1, 1, &o).is_err());
        assert!(run_replications(&cfg, &[Method::Mta], 1, 1.5, 1, &o).is_err());
        assert_eq!("HSIC+BH".parse::<Method>().unwrap(), Method::HsicBh);
        assert!("knockoff".parse::<Method>().is_err());
    }
}
