//! Fixtures shared by the criterion benches.

use mta_core::simgen::{simulate, SimConfig};
use mta_core::{Dataset, Setting};

/// One setting-1 replication at the given size.
pub fn setting_one(n: usize, p: usize, rho: f64, seed: u64) -> Dataset {
    let mut cfg = SimConfig::paper_default(Setting::One, rho);
    cfg.n = n;
    cfg.p = p;
    cfg.sparsity_per_index = cfg.sparsity_per_index.min(p);
    cfg.seed = seed;
    simulate(&cfg).expect("fixture simulation").data
}
