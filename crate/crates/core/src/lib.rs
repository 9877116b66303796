//! Analytical and Monte Carlo throughput model for a two-tier mmWave
//! heterogeneous network in which small cells cache popular content and
//! share one band between user access and wireless backhaul.
//!
//! The analytical pipeline runs
//! [`params`] → [`caching`] → [`propagation`] → [`association`] →
//! [`coverage`] → [`apt`]; [`montecarlo`] estimates the same quantities by
//! sampling Poisson networks directly.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apt;
pub mod association;
pub mod caching;
pub mod coverage;
pub mod error;
pub mod montecarlo;
pub mod params;
pub mod propagation;
pub mod quadrature;

pub use apt::{AptBreakdown, Binding, CaseCoupling};
pub use association::{AssociationMasses, ExclusionSet, Serving};
pub use caching::{cache_hit_ratio, zipf_popularity, PopularityProfile};
pub use coverage::CoverageResult;
pub use error::{Error, Result};
pub use montecarlo::{McEstimate, PppRealization, RealizationOutcome};
pub use params::{
    CacheConfig, CacheParams, LinkClass, Network, NoiseModel, Path, SpectrumPartition, SystemConfig,
    SystemParams, Tier,
};
pub use propagation::{DistanceMode, PathSample};
