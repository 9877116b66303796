//! Shared fixtures for the benchmarks in `benches/`.

use mabnet_core::montecarlo::McConfig;
use mabnet_core::{CacheConfig, Network, SystemConfig};

/// The reference deployment with 4-Mbit files, where the whole cache range
/// up to the power budget is interesting.
pub fn four_megabit_network() -> Network {
    Network::new(
        SystemConfig::default()
            .validate()
            .expect("default system is valid"),
        CacheConfig::four_megabit().validate().expect("profile is valid"),
    )
    .expect("profile is feasible")
}

/// A short simulation run.
pub fn small_mc(realizations: usize) -> McConfig {
    McConfig {
        realizations,
        batches: 4,
        ..McConfig::default()
    }
}
