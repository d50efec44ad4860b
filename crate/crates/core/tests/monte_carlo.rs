use mta_core::evalmetrics::{empirical_fdr, mean_sd};
use mta_core::mta::{fdp_hat, select_threshold};
use mta_core::nalgebra::DVector;
use mta_core::rng::{derive_seed, rng_from_seed, stream};
use mta_core::simgen::harness::replication_seed;
use mta_core::simgen::{gen_design, simulate};
use mta_core::sir::{lambda_hat, make_partition};
use mta_core::{mta_procedure, run_replications, Dataset, Method, MtaConfig, RunOptions, Setting, SimConfig};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

fn setting_one(rho: f64, seed: u64) -> mta_core::simgen::Simulated {
    let mut cfg = SimConfig::paper_default(Setting::One, rho);
    cfg.seed = seed;
    simulate(&cfg).unwrap()
}

#[test]
fn slice_mean_covariance_has_two_dominant_directions() {
    // setting-1 link on the first two coordinates, so both indices have unit scale
    let (n, p) = (5000, 10);
    for seed in 9..17 {
        let x = gen_design(n, p, 0.0, derive_seed(seed, &[stream::DESIGN])).unwrap();
        let mut rng = rng_from_seed(derive_seed(seed, &[stream::RESPONSE]));
        let y = DVector::from_fn(n, |i, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            Setting::One.signal(&[x[(i, 0)], x[(i, 1)]]) + 0.5 * e
        });
        let part = make_partition(y.as_slice(), 20).unwrap();
        let ev = lambda_hat(&x, &part).unwrap().eigenvalues();
        assert!(ev[1] / ev[2] >= 5.0, "seed {seed}: eigenvalues {:?}", &ev[..4]);
    }
}

#[test]
fn null_mirror_signs_are_balanced() {
    let (positive, total): (usize, usize) = (0..500)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(31, rep);
            let sim = setting_one(0.0, seed);
            let out = mta_procedure(&sim.data, &MtaConfig::new(0.1, derive_seed(seed, &[stream::SPLIT]))).unwrap();
            // first null feature of this replication
            let j = (0..sim.data.p()).find(|&j| !sim.truth.is_signal(j)).unwrap();
            (usize::from(out.mirror.m[j] > 0.0), 1)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let frac = positive as f64 / total as f64;
    assert!((0.45..=0.55).contains(&frac), "positive fraction {frac}");
}

/// Rejection count of each replication with pure-noise y.
fn global_null_counts(fdp_offset: f64) -> Vec<usize> {
    let (n, p) = (500, 100);
    (0..200)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(41, rep);
            let x = gen_design(n, p, 0.4, derive_seed(seed, &[stream::DESIGN])).unwrap();
            let mut rng = rng_from_seed(derive_seed(seed, &[stream::RESPONSE]));
            let y = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let data = Dataset::new(x, y).unwrap();
            let mut cfg = MtaConfig::new(0.1, derive_seed(seed, &[stream::SPLIT]));
            cfg.n_slices = 10;
            cfg.fdp_offset = fdp_offset;
            mta_procedure(&data, &cfg).unwrap().decisions.len()
        })
        .collect()
}

fn null_fdp_and_median(counts: &[usize]) -> (f64, usize) {
    // every rejection is false
    let fdp: Vec<f64> = counts.iter().map(|&k| if k > 0 { 1.0 } else { 0.0 }).collect();
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    (mean_sd(&fdp).0, sorted[sorted.len() / 2])
}

#[test]
fn global_null_rarely_rejects() {
    let (mean_fdp, median) = null_fdp_and_median(&global_null_counts(0.0));
    assert_eq!(median, 0);
    // With no offset the procedure rejects one feature whenever the two largest
    // |M_j| are both positive, which under sign symmetry happens a quarter of the time.
    assert!((0.2..=0.35).contains(&mean_fdp), "mean FDP {mean_fdp}");

    let (mean_fdp, median) = null_fdp_and_median(&global_null_counts(1.0));
    assert_eq!(median, 0);
    assert!(mean_fdp <= 0.12, "offset 1: mean FDP {mean_fdp}");
}

#[test]
fn setting_one_fdr_is_controlled() {
    for (rho, seed) in [(0.0, 51), (0.4, 52)] {
        let cfg = SimConfig::paper_default(Setting::One, rho);
        let recs = run_replications(&cfg, &[Method::Mta], 50, 0.1, seed, &RunOptions::default()).unwrap();
        let cell = &empirical_fdr(&recs)[0];
        assert_eq!(cell.n_errors, 0);
        assert!(cell.mean_fdp <= 0.14, "rho {rho}: mean FDP {}", cell.mean_fdp);
        assert!(cell.mean_power > 0.0);
    }
}

#[test]
fn threshold_reevaluates_within_level() {
    let sim = setting_one(0.4, 61);
    let out = mta_procedure(&sim.data, &MtaConfig::new(0.1, 62)).unwrap();
    let tau = out.mirror.tau_q.expect("setting 1 has signal");
    assert_eq!(select_threshold(&out.mirror.m, 0.1), Some(tau));
    assert!(fdp_hat(&out.mirror.m, tau).unwrap() <= 0.1);
    let expected: Vec<usize> = (0..sim.data.p()).filter(|&j| out.mirror.m[j] > tau).collect();
    assert_eq!(out.decisions.rejected, expected);
}

#[test]
fn procedure_is_deterministic() {
    let sim = setting_one(0.4, 71);
    let cfg = MtaConfig::new(0.1, 72);
    let a = mta_procedure(&sim.data, &cfg).unwrap();
    let b = mta_procedure(&sim.data, &cfg).unwrap();
    assert_eq!(a.decisions.rejected, b.decisions.rejected);
    assert_eq!(a.mirror.m, b.mirror.m);
    assert_eq!(a.split.indices_half1, b.split.indices_half1);
}
