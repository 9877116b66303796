//! Average potential throughput (APT): coverage composed with the spectrum
//! partition and the cache hit ratio, and the optimizers over η and C.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{self, CoverageResult};
use crate::error::{Error, Result};
use crate::params::{self, LinkClass, Network, Path, SpectrumPartition, Tier};
use crate::propagation::DistanceMode;

/// Hit ratios at or above this leave the backhaul unconstrained.
pub const UNCONSTRAINED_HIT_RATIO: f64 = 1.0 - 1e-12;

/// Which side of an SBS case's min() is the smaller one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    AccessLimited,
    BackhaulLimited,
}

/// How the access path of an SBS case pairs with its backhaul path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseCoupling {
    /// Case (x, y) uses access path x and backhaul path y.
    #[default]
    Matched,
    /// Every case uses the LoS access and LoS backhaul coverage.
    AllLos,
}

/// The four SBS cases in (access path, backhaul path) order: ll, ln, nl, nn.
pub const CASES: [(Path, Path); 4] = [
    (Path::Los, Path::Los),
    (Path::Los, Path::Nlos),
    (Path::Nlos, Path::Los),
    (Path::Nlos, Path::Nlos),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AptBreakdown {
    pub eta: f64,
    /// Linear SINR threshold.
    pub gamma0: f64,
    /// bits/s/m².
    pub r_total: f64,
    pub r_sbs: f64,
    pub r_mbs: f64,
    /// SBS case rates in [`CASES`] order.
    pub cases: [f64; 4],
    pub access_terms: [f64; 4],
    /// `f64::INFINITY` when the cache absorbs every request.
    pub backhaul_terms: [f64; 4],
    pub binding: [Binding; 4],
}

impl AptBreakdown {
    /// Combine precomputed coverage at `gamma0` with a partition. Cheap, so
    /// η sweeps reuse one coverage evaluation.
    pub fn compose(
        net: &Network,
        cov: &CoverageResult,
        eta: f64,
        gamma0: f64,
        coupling: CaseCoupling,
    ) -> Result<Self> {
        Self::compose_with_miss(net, cov, 1.0 - net.hit_ratio(), eta, gamma0, coupling)
    }

    /// As [`compose`](Self::compose) with an explicit cache-miss ratio
    /// 1 - p_h, e.g. one estimated from sampled requests.
    pub fn compose_with_miss(
        net: &Network,
        cov: &CoverageResult,
        miss_ratio: f64,
        eta: f64,
        gamma0: f64,
        coupling: CaseCoupling,
    ) -> Result<Self> {
        let partition = SpectrumPartition::new(eta)?;
        if !(gamma0 >= 0.0) || !gamma0.is_finite() {
            return Err(Error::invalid(
                "gamma0",
                format!("must be finite and >= 0, got {gamma0}"),
            ));
        }
        let sys = net.sys();
        let spectral = (1.0 + gamma0).log2();
        let access_rate = sys.lambda_s * partition.access_bandwidth(sys.total_bandwidth_hz) * spectral;
        let backhaul_rate = sys.lambda_m * partition.backhaul_bandwidth(sys.total_bandwidth_hz) * spectral;

        let mut cases = [0.0; 4];
        let mut access_terms = [0.0; 4];
        let mut backhaul_terms = [0.0; 4];
        let mut binding = [Binding::AccessLimited; 4];
        for (i, &(x, y)) in CASES.iter().enumerate() {
            let (x, y) = match coupling {
                CaseCoupling::Matched => (x, y),
                CaseCoupling::AllLos => (Path::Los, Path::Los),
            };
            let access = access_rate * cov.access(LinkClass::new(Tier::Sbs, x));
            let backhaul = if miss_ratio <= 1.0 - UNCONSTRAINED_HIT_RATIO {
                f64::INFINITY
            } else {
                backhaul_rate * cov.backhaul(y) / miss_ratio
            };
            access_terms[i] = access;
            backhaul_terms[i] = backhaul;
            if access <= backhaul {
                cases[i] = access;
                binding[i] = Binding::AccessLimited;
            } else {
                cases[i] = backhaul;
                binding[i] = Binding::BackhaulLimited;
            }
        }
        let r_sbs = cases.iter().sum();
        let r_mbs = sys.lambda_m
            * partition.access_bandwidth(sys.total_bandwidth_hz)
            * spectral
            * cov.tier_total(Tier::Mbs);
        Ok(AptBreakdown {
            eta,
            gamma0,
            r_total: r_sbs + r_mbs,
            r_sbs,
            r_mbs,
            cases,
            access_terms,
            backhaul_terms,
            binding,
        })
    }

    pub fn case_name(i: usize) -> &'static str {
        ["ll", "ln", "nl", "nn"][i]
    }
}

/// Full APT at partition `eta` and linear threshold `gamma0`.
pub fn apt_total(
    net: &Network,
    eta: f64,
    gamma0: f64,
    mode: DistanceMode,
    coupling: CaseCoupling,
) -> Result<AptBreakdown> {
    SpectrumPartition::new(eta)?;
    let cov = coverage::coverage(net, gamma0, mode)?;
    AptBreakdown::compose(net, &cov, eta, gamma0, coupling)
}

/// MBS-tier APT, λ_m ηW log2(1+γ0)(P_cov_m,L + P_cov_m,NL).
pub fn apt_mbs(net: &Network, eta: f64, gamma0: f64, mode: DistanceMode) -> Result<f64> {
    let partition = SpectrumPartition::new(eta)?;
    let (l, nl) = coverage::coverage_access(net, Tier::Mbs, gamma0, mode)?;
    let sys = net.sys();
    Ok(sys.lambda_m * partition.access_bandwidth(sys.total_bandwidth_hz) * (1.0 + gamma0).log2() * (l + nl))
}

/// SBS-tier APT with its four cases.
pub fn apt_sbs(
    net: &Network,
    eta: f64,
    gamma0: f64,
    mode: DistanceMode,
    coupling: CaseCoupling,
) -> Result<AptBreakdown> {
    apt_total(net, eta, gamma0, mode, coupling)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaOptimum {
    pub eta: f64,
    pub apt: f64,
    /// More than one grid point attains the maximum; `eta` is the leftmost.
    pub tie: bool,
    pub breakdown: AptBreakdown,
}

/// Uniform grid of `points` values on [0, 1].
pub fn eta_grid(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::EmptyGrid("eta"));
    }
    Ok((0..points).map(|i| i as f64 / (points - 1) as f64).collect())
}

/// Argmax of APT over η given precomputed coverage: grid search, then
/// golden-section refinement inside the bracket around the best grid point.
pub fn optimize_eta_with(
    net: &Network,
    cov: &CoverageResult,
    gamma0: f64,
    points: usize,
    coupling: CaseCoupling,
) -> Result<EtaOptimum> {
    if points < 3 {
        return Err(Error::EmptyGrid("eta"));
    }
    let grid = eta_grid(points)?;
    let apt = |eta: f64| AptBreakdown::compose(net, cov, eta, gamma0, coupling).map(|b| b.r_total);
    let values = grid.iter().map(|&e| apt(e)).collect::<Result<Vec<_>>>()?;
    let (mut best, mut best_val) = (0, values[0]);
    for (i, &v) in values.iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    let tie = values.iter().filter(|&&v| v == best_val).count() > 1;
    let mut eta = grid[best];
    let mut value = best_val;
    if !tie {
        let lo = grid[best.saturating_sub(1)];
        let hi = grid[(best + 1).min(points - 1)];
        let (e, v) = golden_section_max(|e| apt(e).unwrap_or(f64::NEG_INFINITY), lo, hi, 1e-10);
        if v > value {
            eta = e;
            value = v;
        }
    }
    Ok(EtaOptimum {
        eta,
        apt: value,
        tie,
        breakdown: AptBreakdown::compose(net, cov, eta, gamma0, coupling)?,
    })
}

pub fn optimize_eta(
    net: &Network,
    gamma0: f64,
    points: usize,
    mode: DistanceMode,
    coupling: CaseCoupling,
) -> Result<EtaOptimum> {
    let cov = coverage::coverage(net, gamma0, mode)?;
    optimize_eta_with(net, &cov, gamma0, points, coupling)
}

fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheSweep {
    /// (cache size, APT breakdown) in increasing cache size.
    pub curve: Vec<(u64, AptBreakdown)>,
    pub best_cache_size: u64,
    pub best_apt: f64,
    /// Largest cache size the SBS power budget allows.
    pub max_feasible: u64,
}

/// Cache sizes 0, step, 2·step, … plus the feasibility boundary.
pub fn cache_grid(net: &Network, step: u64) -> Result<(Vec<u64>, u64)> {
    if step == 0 {
        return Err(Error::EmptyGrid("cache_size"));
    }
    let c_max = params::max_feasible_cache_size(net.sys(), net.cache()).ok_or(Error::NonPositiveTxPower {
        tier: "SBS",
        watts: 0.0,
    })?;
    let mut grid: Vec<u64> = (0..=c_max).step_by(step as usize).collect();
    if grid.last() != Some(&c_max) {
        grid.push(c_max);
    }
    Ok((grid, c_max))
}

/// Exhaustive search over feasible cache sizes. Ties go to the larger cache.
pub fn optimize_cache(
    net: &Network,
    eta: f64,
    gamma0: f64,
    step: u64,
    mode: DistanceMode,
    coupling: CaseCoupling,
) -> Result<CacheSweep> {
    SpectrumPartition::new(eta)?;
    let (grid, max_feasible) = cache_grid(net, step)?;
    let curve = grid
        .par_iter()
        .map(|&c| {
            let n = net.with_cache_size(c)?;
            Ok((c, apt_total(&n, eta, gamma0, mode, coupling)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (best_cache_size, best_apt) = curve.iter().fold((0, f64::NEG_INFINITY), |(bc, bv), (c, b)| {
        if b.r_total >= bv {
            (*c, b.r_total)
        } else {
            (bc, bv)
        }
    });
    Ok(CacheSweep {
        curve,
        best_cache_size,
        best_apt,
        max_feasible,
    })
}
