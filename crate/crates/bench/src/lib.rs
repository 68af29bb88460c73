//! Shared fixtures for the criterion benches.

use nfloc_core::blockage::MaskHypothesis;
use nfloc_core::channel::Mask;
use nfloc_core::harness::{realize, Realization};
use nfloc_core::signal::CombinerKind;
use nfloc_core::Scenario;

/// Default scenario at `power_dbm`, first sub-array blocked on elements
/// `first..=last` (1-based), noise drawn from `seed`.
pub fn fixture(power_dbm: f64, first: usize, last: usize, seed: u64) -> Realization {
    let sc = Scenario::reference();
    let cfg = sc.config.with_power_dbm(power_dbm);
    let paths = sc.path_set();
    let n = cfg.num_antennas;
    let ns = n / cfg.num_subarrays;
    let mut masks = vec![MaskHypothesis::run(ns, first, last).to_mask(n, 0)];
    masks.resize(paths.num_sps() + 1, Mask::ones(n));
    let sigma2 = cfg.noise_variance();
    realize(&cfg, &paths, CombinerKind::RandomPhase, cfg.rng_seed, masks, sigma2, seed).expect("default scenario is valid")
}
