//! Configuration types, validation and the cache-aware power model.
//!
//! Raw configuration lives in the serde-friendly [`SystemConfig`] and
//! [`CacheConfig`] structs. They only become usable by the analysis once
//! validated into [`SystemParams`] / [`CacheParams`], and a pair of those is
//! combined into a [`Network`] which also carries the derived transmit
//! powers, the noise power and the cache hit ratio.
//!
//! Everything is in SI units internally: watts, hertz, meters and BSs/m².

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::caching;
use crate::error::{Error, Result};

/// Boltzmann thermal noise density at 290 K, dBm/Hz.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

/// 4 MB expressed in bits (4e6 bytes).
pub const DEFAULT_FILE_SIZE_BITS: f64 = 3.2e7;

/// Alternate file size reading: 4 Mbit.
pub const FOUR_MEGABIT_FILE_SIZE_BITS: f64 = 4.0e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Sbs,
    Mbs,
}

impl Tier {
    pub const ALL: [Tier; 2] = [Tier::Sbs, Tier::Mbs];

    pub fn name(self) -> &'static str {
        match self {
            Tier::Sbs => "sbs",
            Tier::Mbs => "mbs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    Los,
    Nlos,
}

impl Path {
    pub const ALL: [Path; 2] = [Path::Los, Path::Nlos];

    pub fn index(self) -> usize {
        match self {
            Path::Los => 0,
            Path::Nlos => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Path::Los => "los",
            Path::Nlos => "nlos",
        }
    }
}

/// A (tier, path) pair: the four kinds of link a receiver can see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkClass {
    pub tier: Tier,
    pub path: Path,
}

impl LinkClass {
    pub const SBS_LOS: LinkClass = LinkClass::new(Tier::Sbs, Path::Los);
    pub const SBS_NLOS: LinkClass = LinkClass::new(Tier::Sbs, Path::Nlos);
    pub const MBS_LOS: LinkClass = LinkClass::new(Tier::Mbs, Path::Los);
    pub const MBS_NLOS: LinkClass = LinkClass::new(Tier::Mbs, Path::Nlos);

    /// All four classes, in the order used by [`LinkClass::index`].
    pub const ALL: [LinkClass; 4] = [
        LinkClass::SBS_LOS,
        LinkClass::SBS_NLOS,
        LinkClass::MBS_LOS,
        LinkClass::MBS_NLOS,
    ];

    pub const fn new(tier: Tier, path: Path) -> Self {
        LinkClass { tier, path }
    }

    pub fn index(self) -> usize {
        match (self.tier, self.path) {
            (Tier::Sbs, Path::Los) => 0,
            (Tier::Sbs, Path::Nlos) => 1,
            (Tier::Mbs, Path::Los) => 2,
            (Tier::Mbs, Path::Nlos) => 3,
        }
    }
}

impl fmt::Display for LinkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.tier.name(), self.path.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// A fixed noise power in watts.
    ConstantWatts { watts: f64 },
    /// kTB thermal noise over the full band plus a receiver noise figure.
    ThermalPlusNoiseFigure { noise_figure_db: f64 },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::ThermalPlusNoiseFigure { noise_figure_db: 5.0 }
    }
}

impl NoiseModel {
    pub fn watts(&self, bandwidth_hz: f64) -> f64 {
        match *self {
            NoiseModel::ConstantWatts { watts } => watts,
            NoiseModel::ThermalPlusNoiseFigure { noise_figure_db } => {
                let dbm = THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db;
                dbm_to_watts(dbm)
            }
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Unvalidated system configuration. `Default` is the reference deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// MBS density, BSs/m².
    pub lambda_m: f64,
    /// SBS density, BSs/m². Zero removes the SBS tier.
    pub lambda_s: f64,
    /// User density, users/m². Only used to state the full-load assumption.
    pub lambda_u: f64,
    pub total_bandwidth_hz: f64,
    pub a_los: f64,
    pub a_nlos: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    /// Blockage rate, 1/m.
    pub beta: f64,
    pub p_tot_s: f64,
    pub p_tot_m: f64,
    pub p_fc_s: f64,
    pub p_fc_m: f64,
    pub rho_s: f64,
    pub rho_m: f64,
    pub bias_s: f64,
    pub bias_m: f64,
    pub noise: NoiseModel,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            lambda_m: 1e-5,
            lambda_s: 1e-4,
            lambda_u: 3e-4,
            total_bandwidth_hz: 400e6,
            a_los: 10f64.powf(-10.38),
            a_nlos: 10f64.powf(-14.54),
            alpha_los: 2.09,
            alpha_nlos: 3.75,
            beta: 2.7e-2,
            p_tot_s: 9.1,
            p_tot_m: 610.0,
            p_fc_s: 0.1,
            p_fc_m: 10.16,
            rho_s: 4.0,
            rho_m: 15.13,
            bias_s: 10.0,
            bias_m: 1.0,
            noise: NoiseModel::default(),
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and >= 0, got {v}")))
    }
}

impl SystemConfig {
    pub fn validate(self) -> Result<SystemParams> {
        positive("lambda_m", self.lambda_m)?;
        non_negative("lambda_s", self.lambda_s)?;
        positive("lambda_u", self.lambda_u)?;
        positive("total_bandwidth_hz", self.total_bandwidth_hz)?;
        positive("a_los", self.a_los)?;
        positive("a_nlos", self.a_nlos)?;
        positive("alpha_los", self.alpha_los)?;
        positive("alpha_nlos", self.alpha_nlos)?;
        non_negative("beta", self.beta)?;
        positive("p_tot_s", self.p_tot_s)?;
        positive("p_tot_m", self.p_tot_m)?;
        non_negative("p_fc_s", self.p_fc_s)?;
        non_negative("p_fc_m", self.p_fc_m)?;
        positive("rho_s", self.rho_s)?;
        positive("rho_m", self.rho_m)?;
        positive("bias_s", self.bias_s)?;
        positive("bias_m", self.bias_m)?;
        if self.p_fc_s >= self.p_tot_s {
            return Err(Error::invalid(
                "p_fc_s",
                "fixed circuit power must be below p_tot_s",
            ));
        }
        if self.p_fc_m >= self.p_tot_m {
            return Err(Error::invalid(
                "p_fc_m",
                "fixed circuit power must be below p_tot_m",
            ));
        }
        match self.noise {
            NoiseModel::ConstantWatts { watts } => positive("noise.watts", watts)?,
            NoiseModel::ThermalPlusNoiseFigure { noise_figure_db } => {
                if !noise_figure_db.is_finite() {
                    return Err(Error::invalid("noise.noise_figure_db", "must be finite"));
                }
            }
        }
        Ok(SystemParams(self))
    }
}

/// Validated system parameters. Read fields through `Deref`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SystemParams(SystemConfig);

impl Deref for SystemParams {
    type Target = SystemConfig;
    fn deref(&self) -> &SystemConfig {
        &self.0
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemConfig::default()
            .validate()
            .expect("reference system parameters are valid")
    }
}

impl SystemParams {
    pub fn config(&self) -> &SystemConfig {
        &self.0
    }

    pub fn density(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Sbs => self.lambda_s,
            Tier::Mbs => self.lambda_m,
        }
    }

    pub fn bias(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Sbs => self.bias_s,
            Tier::Mbs => self.bias_m,
        }
    }

    pub fn intercept(&self, path: Path) -> f64 {
        match path {
            Path::Los => self.a_los,
            Path::Nlos => self.a_nlos,
        }
    }

    pub fn exponent(&self, path: Path) -> f64 {
        match path {
            Path::Los => self.alpha_los,
            Path::Nlos => self.alpha_nlos,
        }
    }
}

/// Unvalidated cache configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    /// Number of files in the library, F.
    pub library_size: u64,
    /// Files cached per SBS, C.
    pub cache_size: u64,
    pub zipf_exponent: f64,
    /// Caching power coefficient, W/bit.
    pub w_ca: f64,
    pub file_size_bits: f64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            library_size: 1000,
            cache_size: 100,
            zipf_exponent: 0.6,
            w_ca: 2.5e-9,
            file_size_bits: DEFAULT_FILE_SIZE_BITS,
        }
    }
}

impl CacheConfig {
    /// The reference cache with 4-Mbit files instead of 4-MB files.
    pub fn four_megabit() -> Self {
        CacheConfig {
            file_size_bits: FOUR_MEGABIT_FILE_SIZE_BITS,
            ..CacheConfig::default()
        }
    }

    pub fn validate(self) -> Result<CacheParams> {
        if self.library_size < 1 {
            return Err(Error::invalid("library_size", "must be >= 1"));
        }
        if self.cache_size > self.library_size {
            return Err(Error::invalid(
                "cache_size",
                format!("{} exceeds library_size {}", self.cache_size, self.library_size),
            ));
        }
        positive("zipf_exponent", self.zipf_exponent)?;
        non_negative("w_ca", self.w_ca)?;
        positive("file_size_bits", self.file_size_bits)?;
        Ok(CacheParams(self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct CacheParams(CacheConfig);

impl Deref for CacheParams {
    type Target = CacheConfig;
    fn deref(&self) -> &CacheConfig {
        &self.0
    }
}

impl Default for CacheParams {
    fn default() -> Self {
        CacheConfig::default()
            .validate()
            .expect("reference cache parameters are valid")
    }
}

impl CacheParams {
    pub fn config(&self) -> &CacheConfig {
        &self.0
    }

    /// Same parameters with a different cache size.
    pub fn with_cache_size(&self, cache_size: u64) -> Result<CacheParams> {
        CacheConfig {
            cache_size,
            ..self.0.clone()
        }
        .validate()
    }

    /// Power drawn by an SBS cache holding `files` files, W.
    pub fn cache_power(&self, files: u64) -> f64 {
        files as f64 * self.file_size_bits * self.w_ca
    }
}

/// Fraction of the band given to access links.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct SpectrumPartition(f64);

impl SpectrumPartition {
    pub fn new(eta: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&eta) {
            Ok(SpectrumPartition(eta))
        } else {
            Err(Error::invalid("eta", format!("must lie in [0, 1], got {eta}")))
        }
    }

    pub fn eta(self) -> f64 {
        self.0
    }

    pub fn access_bandwidth(self, total_hz: f64) -> f64 {
        self.0 * total_hz
    }

    pub fn backhaul_bandwidth(self, total_hz: f64) -> f64 {
        total_hz - self.access_bandwidth(total_hz)
    }
}

/// SBS transmit power: what is left of the total budget after fixed circuit
/// and cache power, divided by the amplifier/cooling coefficient.
pub fn sbs_tx_power(sys: &SystemParams, cache: &CacheParams) -> Result<f64> {
    let watts = sbs_tx_power_unchecked(sys, cache, cache.cache_size);
    if watts > 0.0 {
        Ok(watts)
    } else {
        Err(Error::NonPositiveTxPower { tier: "SBS", watts })
    }
}

/// MBS transmit power. MBSs cache the whole library, so this does not depend
/// on the SBS cache size.
pub fn mbs_tx_power(sys: &SystemParams, cache: &CacheParams) -> Result<f64> {
    let watts = (sys.p_tot_m - sys.p_fc_m - cache.cache_power(cache.library_size)) / sys.rho_m;
    if watts > 0.0 {
        Ok(watts)
    } else {
        Err(Error::NonPositiveTxPower { tier: "MBS", watts })
    }
}

fn sbs_tx_power_unchecked(sys: &SystemParams, cache: &CacheParams, files: u64) -> f64 {
    (sys.p_tot_s - sys.p_fc_s - cache.cache_power(files)) / sys.rho_s
}

pub fn noise_power(sys: &SystemParams) -> f64 {
    sys.noise.watts(sys.total_bandwidth_hz)
}

/// Largest SBS cache size with strictly positive transmit power, capped at
/// the library size.
pub fn max_feasible_cache_size(sys: &SystemParams, cache: &CacheParams) -> Option<u64> {
    let per_file = cache.file_size_bits * cache.w_ca;
    let budget = sys.p_tot_s - sys.p_fc_s;
    if per_file <= 0.0 {
        return Some(cache.library_size);
    }
    let mut c = ((budget / per_file).ceil() as u64).min(cache.library_size);
    // Walk down to the first size the power model accepts.
    loop {
        if sbs_tx_power_unchecked(sys, cache, c) > 0.0 {
            return Some(c);
        }
        if c == 0 {
            return None;
        }
        c -= 1;
    }
}

/// A validated deployment: system and cache parameters plus everything
/// derived from them that the analysis needs repeatedly.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    sys: SystemParams,
    cache: CacheParams,
    p_s_tr: f64,
    p_m_tr: f64,
    noise_w: f64,
    hit_ratio: f64,
}

impl Network {
    pub fn new(sys: SystemParams, cache: CacheParams) -> Result<Self> {
        let p_s_tr = sbs_tx_power(&sys, &cache)?;
        let p_m_tr = mbs_tx_power(&sys, &cache)?;
        let noise_w = noise_power(&sys);
        let hit_ratio = caching::cache_hit_ratio(&cache);
        Ok(Network {
            sys,
            cache,
            p_s_tr,
            p_m_tr,
            noise_w,
            hit_ratio,
        })
    }

    /// The reference deployment with the default cache.
    pub fn reference() -> Self {
        Network::new(SystemParams::default(), CacheParams::default())
            .expect("reference deployment is feasible")
    }

    pub fn sys(&self) -> &SystemParams {
        &self.sys
    }

    pub fn cache(&self) -> &CacheParams {
        &self.cache
    }

    pub fn tx_power(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Sbs => self.p_s_tr,
            Tier::Mbs => self.p_m_tr,
        }
    }

    pub fn noise_w(&self) -> f64 {
        self.noise_w
    }

    pub fn hit_ratio(&self) -> f64 {
        self.hit_ratio
    }

    /// Biased received-power coefficient P·B·A of a link class: the received
    /// power at distance t is this times t^-alpha (times the fading gain).
    pub fn biased_gain(&self, class: LinkClass) -> f64 {
        self.tx_power(class.tier) * self.sys.bias(class.tier) * self.sys.intercept(class.path)
    }

    /// Same deployment with a different SBS cache size.
    pub fn with_cache_size(&self, cache_size: u64) -> Result<Network> {
        Network::new(self.sys.clone(), self.cache.with_cache_size(cache_size)?)
    }
}
