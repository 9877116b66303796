//! Monte Carlo oracle: sample Poisson networks around a receiver at the
//! origin and evaluate association, SINR and throughput directly.
//!
//! The typical user and the typical SBS both sit at the origin of each
//! realization. Every BS carries an independent blockage state and fading
//! draw per receiver: SBSs towards the user, MBSs towards the user and
//! towards the SBS. Only distances to the origin matter, so sites are
//! stored by distance.
//!
//! BSs beyond the simulation disc are not dropped outright. The LoS part of
//! the tiers decays like 18/t, and with a path-loss exponent near 2 the
//! aggregate LoS interference from outside a few km is not negligible, so
//! LoS BSs out to a far-field radius are sampled as well (NLoS ones there
//! contribute nothing measurable).
//!
//! Realizations are drawn from ChaCha8 streams keyed by (seed, index) and
//! reduced in fixed-size blocks in index order, so results do not depend
//! on the thread count.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, Zipf};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apt::{AptBreakdown, CaseCoupling};
use crate::association::Serving;
use crate::coverage::CoverageResult;
use crate::error::{Error, Result};
use crate::params::{LinkClass, Network, Path, SystemParams, Tier};
use crate::propagation::{self, LOS_BALL_RADIUS};

/// Mixed into the seed for the file-request stream.
const REQUEST_KEY: u64 = 0x5bd1_e995_9e37_79b9;

/// Realizations per reduction block.
const BLOCK: usize = 256;

/// One receiver-to-BS link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub path: Path,
    /// Unit-mean exponential fading power.
    pub fading: f64,
    /// A·t^-α.
    pub path_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    /// Distance to the origin, m.
    pub distance: f64,
    /// Link to the typical user.
    pub access: Link,
    /// Link to the typical SBS (MBSs only).
    pub backhaul: Option<Link>,
}

/// One sampled network.
#[derive(Debug, Clone, PartialEq)]
pub struct PppRealization {
    pub seed: u64,
    pub substream: u64,
    pub r_sim: f64,
    /// Sites inside the simulation disc, all path states.
    pub sbs: Vec<Site>,
    pub mbs: Vec<Site>,
    /// LoS links beyond the disc, up to the far-field radius.
    pub far_sbs: Vec<Link>,
    pub far_mbs_access: Vec<Link>,
    pub far_mbs_backhaul: Vec<Link>,
}

impl PppRealization {
    /// Keep only what a smaller simulation disc of radius `r` would have
    /// sampled (no far field).
    pub fn restricted_to(&self, r: f64) -> PppRealization {
        PppRealization {
            seed: self.seed,
            substream: self.substream,
            r_sim: r,
            sbs: self.sbs.iter().copied().filter(|s| s.distance <= r).collect(),
            mbs: self.mbs.iter().copied().filter(|s| s.distance <= r).collect(),
            far_sbs: Vec::new(),
            far_mbs_access: Vec::new(),
            far_mbs_backhaul: Vec::new(),
        }
    }
}

/// How the per-realization coverage value is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// 1{SINR ≥ γ} with the sampled fading.
    #[default]
    Indicator,
    /// P(SINR ≥ γ | geometry, blockage): the fading averaged out exactly,
    /// exp(-s N0) Π 1/(1 + s p_i). Same mean, lower variance.
    AveragedFading,
}

/// Simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub realizations: usize,
    /// Simulation disc radius, m.
    pub r_sim_m: f64,
    /// LoS BSs are sampled out to this radius; no far field if <= r_sim_m.
    pub far_field_radius_m: f64,
    pub seed: u64,
    /// Batches used for the standard error of nonlinear estimates (APT).
    pub batches: usize,
    /// Stratify on "some BS lies within this radius of the origin". Coverage
    /// at small SINR margins comes almost only from that event, so sampling
    /// it more often cuts the variance of rare-event estimates.
    pub inner_radius_m: Option<f64>,
    /// Share of realizations spent on the occupied stratum.
    pub inner_fraction: f64,
    pub estimator: Estimator,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            realizations: 20_000,
            r_sim_m: 3000.0,
            far_field_radius_m: 30_000.0,
            seed: 1,
            batches: 20,
            inner_radius_m: None,
            inner_fraction: 0.9,
            estimator: Estimator::Indicator,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::invalid("mc.realizations", "must be >= 1"));
        }
        if !(self.r_sim_m.is_finite() && self.r_sim_m > 0.0) {
            return Err(Error::invalid(
                "mc.r_sim_m",
                format!("must be finite and > 0, got {}", self.r_sim_m),
            ));
        }
        if !self.far_field_radius_m.is_finite() {
            return Err(Error::invalid("mc.far_field_radius_m", "must be finite"));
        }
        if self.far_field_radius_m > self.r_sim_m && self.r_sim_m < LOS_BALL_RADIUS {
            return Err(Error::invalid(
                "mc.r_sim_m",
                "must be >= 18 m when a far field is sampled",
            ));
        }
        if self.batches == 0 {
            return Err(Error::invalid("mc.batches", "must be >= 1"));
        }
        if let Some(rho) = self.inner_radius_m {
            if !(rho.is_finite() && rho > 0.0 && rho < self.r_sim_m) {
                return Err(Error::invalid("mc.inner_radius_m", "must lie in (0, r_sim_m)"));
            }
            if !(self.inner_fraction > 0.0 && self.inner_fraction < 1.0) {
                return Err(Error::invalid("mc.inner_fraction", "must lie in (0, 1)"));
            }
            if self.realizations < 2 * self.batches {
                return Err(Error::invalid(
                    "mc.realizations",
                    "stratified sampling needs at least two realizations per batch",
                ));
            }
        }
        Ok(())
    }
}

/// Point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// `None` when it cannot be formed (a single realization or batch).
    pub stderr: Option<f64>,
    pub n: usize,
    pub seed: u64,
}

impl McEstimate {
    /// |estimate - value| in standard errors (infinite if no stderr and the
    /// values differ).
    pub fn z_score(&self, value: f64) -> f64 {
        let diff = (self.estimate - value).abs();
        match self.stderr {
            Some(se) if se > 0.0 => diff / se,
            _ if diff == 0.0 => 0.0,
            _ => f64::INFINITY,
        }
    }
}

/// What the inner disc of radius ρ holds in a stratified draw.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Inner {
    /// No conditioning.
    Free,
    /// No BS of either tier within ρ.
    Empty(f64),
    /// At least one BS within ρ.
    Occupied(f64),
}

fn stream(seed: u64, substream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(substream);
    rng
}

/// Uniform in (0, 1].
fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

fn poisson_count<R: Rng>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as usize
}

fn draw_link<R: Rng>(rng: &mut R, sys: &SystemParams, t: f64) -> Link {
    let los = rng.random::<f64>() < propagation::los_prob(sys.beta, t);
    let path = if los { Path::Los } else { Path::Nlos };
    let fading: f64 = Exp1.sample(rng);
    Link {
        path,
        fading,
        path_gain: (sys.intercept(path).ln() - sys.exponent(path) * t.ln()).exp(),
    }
}

fn draw_site<R: Rng>(rng: &mut R, sys: &SystemParams, tier: Tier, t: f64) -> Site {
    let access = draw_link(rng, sys, t);
    let backhaul = match tier {
        Tier::Sbs => None,
        Tier::Mbs => Some(draw_link(rng, sys, t)),
    };
    Site {
        distance: t,
        access,
        backhaul,
    }
}

/// Radius uniform in area over the annulus [a, b].
fn annulus_radius<R: Rng>(rng: &mut R, a: f64, b: f64) -> f64 {
    (a * a + open_unit(rng) * (b * b - a * a)).sqrt()
}

/// LoS links of a tier in the annulus [a, b], a >= 18, by thinning a
/// dominating process on the radius axis: the LoS intensity is
/// 2πλ t P_L(t) and t P_L(t) = 18 + (t - 18) e^{-βt} <= bound.
fn far_field_los<R: Rng>(rng: &mut R, sys: &SystemParams, lambda: f64, a: f64, b: f64) -> Vec<Link> {
    if b <= a || lambda <= 0.0 {
        return Vec::new();
    }
    let beta = sys.beta;
    let peak = if beta == 0.0 {
        b - LOS_BALL_RADIUS
    } else {
        let t_star = LOS_BALL_RADIUS + 1.0 / beta;
        let t = t_star.clamp(a, b);
        (t - LOS_BALL_RADIUS) * (-beta * t).exp()
    };
    let bound = LOS_BALL_RADIUS + peak;
    let candidates = poisson_count(rng, 2.0 * PI * lambda * bound * (b - a));
    let mut links = Vec::new();
    let alpha = sys.alpha_los;
    let ln_a = sys.a_los.ln();
    for _ in 0..candidates {
        let t = a + rng.random::<f64>() * (b - a);
        let keep = rng.random::<f64>() * bound < t * propagation::los_prob(beta, t);
        let fading: f64 = Exp1.sample(rng);
        if keep {
            links.push(Link {
                path: Path::Los,
                fading,
                path_gain: (ln_a - alpha * t.ln()).exp(),
            });
        }
    }
    links
}

fn sample_with(
    sys: &SystemParams,
    cfg: &McConfig,
    inner: Inner,
    seed: u64,
    substream: u64,
) -> PppRealization {
    let mut rng = stream(seed, substream);
    let r_sim = cfg.r_sim_m;
    let mut sbs = Vec::new();
    let mut mbs = Vec::new();

    let rho = match inner {
        Inner::Free => 0.0,
        Inner::Empty(rho) | Inner::Occupied(rho) => rho,
    };
    if let Inner::Occupied(rho) = inner {
        // Zero-truncated Poisson total over both tiers by inversion, then a
        // tier label per point.
        let lambda_total = sys.lambda_s + sys.lambda_m;
        let mean = PI * rho * rho * lambda_total;
        let u = open_unit(&mut rng);
        let target = u * -(-mean).exp_m1();
        let mut k = 1usize;
        let mut pmf = mean * (-mean).exp();
        let mut cdf = pmf;
        while cdf < target && k < 10_000 {
            k += 1;
            pmf *= mean / k as f64;
            cdf += pmf;
        }
        for _ in 0..k {
            let is_sbs = rng.random::<f64>() * lambda_total < sys.lambda_s;
            let t = annulus_radius(&mut rng, 0.0, rho);
            if is_sbs {
                sbs.push(draw_site(&mut rng, sys, Tier::Sbs, t));
            } else {
                mbs.push(draw_site(&mut rng, sys, Tier::Mbs, t));
            }
        }
    }
    for tier in Tier::ALL {
        let lambda = sys.density(tier);
        let count = poisson_count(&mut rng, lambda * PI * (r_sim * r_sim - rho * rho));
        let out = match tier {
            Tier::Sbs => &mut sbs,
            Tier::Mbs => &mut mbs,
        };
        out.reserve(count);
        for _ in 0..count {
            let t = annulus_radius(&mut rng, rho, r_sim);
            out.push(draw_site(&mut rng, sys, tier, t));
        }
    }
    let far = cfg.far_field_radius_m;
    let far_sbs = far_field_los(&mut rng, sys, sys.lambda_s, r_sim, far);
    let far_mbs_access = far_field_los(&mut rng, sys, sys.lambda_m, r_sim, far);
    let far_mbs_backhaul = far_field_los(&mut rng, sys, sys.lambda_m, r_sim, far);
    PppRealization {
        seed,
        substream,
        r_sim,
        sbs,
        mbs,
        far_sbs,
        far_mbs_access,
        far_mbs_backhaul,
    }
}

/// Sample one network. Regenerating from the same (seed, substream) gives a
/// bit-identical realization.
pub fn sample_realization(sys: &SystemParams, cfg: &McConfig, seed: u64, substream: u64) -> PppRealization {
    sample_with(sys, cfg, Inner::Free, seed, substream)
}

/// A candidate serving link as seen by the receiver: mean biased received
/// power (no fading), its fading draw and class.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    power: f64,
    fading: f64,
    class: LinkClass,
}

fn user_candidates(net: &Network, real: &PppRealization, out: &mut Vec<Candidate>) {
    out.clear();
    let sys = net.sys();
    for tier in Tier::ALL {
        let k = net.tx_power(tier) * sys.bias(tier);
        let (sites, far) = match tier {
            Tier::Sbs => (&real.sbs, &real.far_sbs),
            Tier::Mbs => (&real.mbs, &real.far_mbs_access),
        };
        let links = sites.iter().map(|s| &s.access).chain(far.iter());
        for l in links {
            out.push(Candidate {
                power: k * l.path_gain,
                fading: l.fading,
                class: LinkClass::new(tier, l.path),
            });
        }
    }
}

fn backhaul_candidates(net: &Network, real: &PppRealization, out: &mut Vec<Candidate>) {
    out.clear();
    let k = net.tx_power(Tier::Mbs) * net.sys().bias_m;
    let links = real
        .mbs
        .iter()
        .filter_map(|s| s.backhaul.as_ref())
        .chain(real.far_mbs_backhaul.iter());
    for l in links {
        out.push(Candidate {
            power: k * l.path_gain,
            fading: l.fading,
            class: LinkClass::new(Tier::Mbs, l.path),
        });
    }
}

/// Index of the strongest candidate. SBSs come first in the list, so the
/// strict comparison breaks exact ties towards the SBS tier.
fn strongest(cands: &[Candidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cands.iter().enumerate() {
        if best.is_none_or(|b| c.power > cands[b].power) {
            best = Some(i);
        }
    }
    best
}

/// Coverage values for each threshold given the serving candidate.
fn coverage_values(
    cands: &[Candidate],
    serving: usize,
    noise: f64,
    gammas: &[f64],
    estimator: Estimator,
    out: &mut [f64],
) {
    let srv = cands[serving];
    match estimator {
        Estimator::Indicator => {
            let mut interference = 0.0;
            for (i, c) in cands.iter().enumerate() {
                if i != serving {
                    interference += c.power * c.fading;
                }
            }
            let signal = srv.power * srv.fading;
            for (o, &g) in out.iter_mut().zip(gammas) {
                *o = if signal >= g * (interference + noise) {
                    1.0
                } else {
                    0.0
                };
            }
        }
        Estimator::AveragedFading => {
            for (o, &g) in out.iter_mut().zip(gammas) {
                let s = g / srv.power;
                let mut log_sum = s * noise;
                for (i, c) in cands.iter().enumerate() {
                    if i != serving {
                        log_sum += (s * c.power).ln_1p();
                    }
                }
                *o = (-log_sum).exp();
            }
        }
    }
}

/// Per-network layout of one realization's record.
#[derive(Debug, Clone, Copy)]
struct Layout {
    gammas: usize,
}

impl Layout {
    fn width(self) -> usize {
        6 + 6 * self.gammas + 1 + 1
    }
    fn association(self, serving: Serving) -> usize {
        serving_slot(serving)
    }
    fn coverage(self, serving: Serving, g: usize) -> usize {
        6 + serving_slot(serving) * self.gammas + g
    }
    fn miss(self) -> usize {
        6 + 6 * self.gammas
    }
    fn empty(self) -> usize {
        6 + 6 * self.gammas + 1
    }
}

fn serving_slot(serving: Serving) -> usize {
    match serving {
        Serving::Access(c) => c.index(),
        Serving::Backhaul(p) => 4 + p.index(),
    }
}

struct Evaluator<'a> {
    nets: &'a [Network],
    gammas: &'a [f64],
    estimator: Estimator,
    layout: Layout,
    zipf: Vec<Option<Zipf<f64>>>,
}

impl<'a> Evaluator<'a> {
    fn new(nets: &'a [Network], gammas: &'a [f64], estimator: Estimator) -> Result<Self> {
        let zipf = nets
            .iter()
            .map(|n| {
                let c = n.cache();
                if c.cache_size == 0 {
                    Ok(None)
                } else {
                    Zipf::new(c.library_size as f64, c.zipf_exponent)
                        .map(Some)
                        .map_err(|e| Error::invalid("cache.zipf_exponent", e.to_string()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Evaluator {
            nets,
            gammas,
            estimator,
            layout: Layout { gammas: gammas.len() },
            zipf,
        })
    }

    fn width(&self) -> usize {
        self.layout.width() * self.nets.len()
    }

    /// Fill `record` for one realization. The file request uses its own
    /// stream so it does not shift the geometry draws.
    fn evaluate(&self, real: &PppRealization, record: &mut [f64], scratch: &mut Vec<Candidate>) {
        record.iter_mut().for_each(|x| *x = 0.0);
        let lay = self.layout;
        let mut covered = vec![0.0; self.gammas.len()];
        for (j, net) in self.nets.iter().enumerate() {
            let rec = &mut record[j * lay.width()..(j + 1) * lay.width()];
            let mut empty = false;
            for backhaul in [false, true] {
                if backhaul {
                    backhaul_candidates(net, real, scratch);
                } else {
                    user_candidates(net, real, scratch);
                }
                let Some(srv) = strongest(scratch) else {
                    empty = true;
                    continue;
                };
                let class = scratch[srv].class;
                let serving = if backhaul {
                    Serving::Backhaul(class.path)
                } else {
                    Serving::Access(class)
                };
                rec[lay.association(serving)] = 1.0;
                coverage_values(
                    scratch,
                    srv,
                    net.noise_w(),
                    self.gammas,
                    self.estimator,
                    &mut covered,
                );
                for (g, &v) in covered.iter().enumerate() {
                    rec[lay.coverage(serving, g)] = v;
                }
            }
            if empty {
                rec.iter_mut().for_each(|x| *x = 0.0);
                rec[lay.empty()] = 1.0;
                continue;
            }
            // Requested file rank against the cache; common across networks.
            rec[lay.miss()] = match &self.zipf[j] {
                None => 1.0,
                Some(z) => {
                    let mut r = stream(real.seed ^ REQUEST_KEY, real.substream);
                    let rank = z.sample(&mut r);
                    if rank > net.cache().cache_size as f64 {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
        }
    }
}

/// Outcome of one realization for one network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationOutcome {
    /// 1 for the serving class of the user and of the backhaul link, in
    /// [`Serving::ALL`] order.
    pub association: [f64; 6],
    /// coverage[g][k], indicator or fading-averaged value.
    pub coverage: Vec<[f64; 6]>,
    pub cache_miss: f64,
    /// No BS at all; every other field is zero.
    pub empty: bool,
}

/// Apply the association and SINR rules to a single realization.
pub fn evaluate_realization(
    net: &Network,
    real: &PppRealization,
    gammas: &[f64],
    estimator: Estimator,
) -> Result<RealizationOutcome> {
    let nets = std::slice::from_ref(net);
    let ev = Evaluator::new(nets, gammas, estimator)?;
    let lay = ev.layout;
    let mut record = vec![0.0; ev.width()];
    ev.evaluate(real, &mut record, &mut Vec::new());
    Ok(RealizationOutcome {
        association: std::array::from_fn(|k| record[lay.association(Serving::ALL[k])]),
        coverage: (0..gammas.len())
            .map(|g| std::array::from_fn(|k| record[lay.coverage(Serving::ALL[k], g)]))
            .collect(),
        cache_miss: record[lay.miss()],
        empty: record[lay.empty()] == 1.0,
    })
}

/// Running sums of one stratum.
#[derive(Debug, Clone, Default)]
struct Moments {
    n: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn new(width: usize) -> Self {
        Moments {
            n: 0,
            sum: vec![0.0; width],
            sum_sq: vec![0.0; width],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        for ((s, q), &v) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(x) {
            *s += v;
            *q += v * v;
        }
    }

    fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
    }

    fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.n as f64
    }

    /// Unbiased sample variance.
    fn variance(&self, i: usize) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let n = self.n as f64;
        let m = self.sum[i] / n;
        Some(((self.sum_sq[i] - n * m * m) / (n - 1.0)).max(0.0))
    }
}

/// Moments per stratum with the stratum weights.
#[derive(Debug, Clone)]
struct Strata {
    weights: Vec<f64>,
    moments: Vec<Moments>,
}

impl Strata {
    fn mean(&self, i: usize) -> f64 {
        self.weights
            .iter()
            .zip(&self.moments)
            .map(|(w, m)| if m.n == 0 { 0.0 } else { w * m.mean(i) })
            .sum()
    }

    fn stderr(&self, i: usize) -> Option<f64> {
        let mut var = 0.0;
        for (w, m) in self.weights.iter().zip(&self.moments) {
            var += w * w * m.variance(i)? / m.n as f64;
        }
        Some(var.sqrt())
    }

    fn n(&self) -> usize {
        self.moments.iter().map(|m| m.n).sum()
    }

    fn merge(&mut self, other: &Strata) {
        for (a, b) in self.moments.iter_mut().zip(&other.moments) {
            a.merge(b);
        }
    }
}

/// Stratum plan: which inner-disc condition realization `i` uses.
struct Plan {
    inner: Option<(f64, f64)>,
    batch_size: usize,
    occupied_per_batch: usize,
    weights: Vec<f64>,
}

impl Plan {
    fn new(sys: &SystemParams, cfg: &McConfig) -> Plan {
        let batches = cfg.batches.min(cfg.realizations).max(1);
        let batch_size = cfg.realizations.div_ceil(batches);
        match cfg.inner_radius_m {
            None => Plan {
                inner: None,
                batch_size,
                occupied_per_batch: 0,
                weights: vec![1.0],
            },
            Some(rho) => {
                let mean = PI * rho * rho * (sys.lambda_s + sys.lambda_m);
                let p_occupied = -(-mean).exp_m1();
                let occupied =
                    ((cfg.inner_fraction * batch_size as f64).round() as usize).clamp(1, batch_size - 1);
                Plan {
                    inner: Some((rho, p_occupied)),
                    batch_size,
                    occupied_per_batch: occupied,
                    weights: vec![p_occupied, 1.0 - p_occupied],
                }
            }
        }
    }

    /// (stratum index, inner condition) of realization `i`.
    fn stratum(&self, i: usize) -> (usize, Inner) {
        match self.inner {
            None => (0, Inner::Free),
            Some((rho, _)) => {
                if i % self.batch_size < self.occupied_per_batch {
                    (0, Inner::Occupied(rho))
                } else {
                    (1, Inner::Empty(rho))
                }
            }
        }
    }
}

/// Raw output of a simulation: pooled strata plus one set per batch.
struct SimOutput {
    pooled: Strata,
    batches: Vec<Strata>,
}

fn simulate(nets: &[Network], gammas: &[f64], cfg: &McConfig) -> Result<SimOutput> {
    cfg.validate()?;
    if nets.is_empty() {
        return Err(Error::EmptyGrid("networks"));
    }
    let sys = nets[0].sys();
    if nets.iter().any(|n| n.sys().config() != sys.config()) {
        return Err(Error::invalid(
            "networks",
            "networks simulated together must share the system parameters",
        ));
    }
    let evaluator = Evaluator::new(nets, gammas, cfg.estimator)?;
    let width = evaluator.width();
    let plan = Plan::new(sys, cfg);
    let n = cfg.realizations;
    let batch_count = n.div_ceil(plan.batch_size);
    let empty_strata = || Strata {
        weights: plan.weights.clone(),
        moments: vec![Moments::new(width); plan.weights.len()],
    };

    // Blocks never straddle a batch boundary, so each block belongs to
    // exactly one batch.
    let blocks: Vec<(usize, usize, usize)> = (0..batch_count)
        .flat_map(|b| {
            let start = b * plan.batch_size;
            let end = ((b + 1) * plan.batch_size).min(n);
            (start..end)
                .step_by(BLOCK)
                .map(move |s| (b, s, (s + BLOCK).min(end)))
        })
        .collect();
    let partials: Vec<(usize, Strata)> = blocks
        .par_iter()
        .map(|&(b, start, end)| {
            let mut strata = empty_strata();
            let mut record = vec![0.0; width];
            let mut scratch = Vec::new();
            for i in start..end {
                let (h, inner) = plan.stratum(i);
                let real = sample_with(sys, cfg, inner, cfg.seed, i as u64);
                evaluator.evaluate(&real, &mut record, &mut scratch);
                strata.moments[h].push(&record);
            }
            (b, strata)
        })
        .collect();

    let mut batches: Vec<Strata> = (0..batch_count).map(|_| empty_strata()).collect();
    for (b, s) in &partials {
        batches[*b].merge(s);
    }
    let mut pooled = empty_strata();
    for b in &batches {
        pooled.merge(b);
    }
    Ok(SimOutput { pooled, batches })
}

/// Empirical association fractions and joint coverage of one network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McNetworkEstimates {
    /// In [`Serving::ALL`] order.
    pub association: [McEstimate; 6],
    /// coverage[g][k]: P(served over Serving::ALL[k], SINR ≥ gammas[g]).
    pub coverage: Vec<[McEstimate; 6]>,
    /// Fraction of requests that miss the SBS cache.
    pub miss: McEstimate,
    /// Realizations with no BS at all (counted in n, contribute zeros).
    pub empty: f64,
}

impl McNetworkEstimates {
    pub fn association_of(&self, serving: Serving) -> McEstimate {
        self.association[serving_slot(serving)]
    }

    pub fn coverage_of(&self, g: usize, serving: Serving) -> McEstimate {
        self.coverage[g][serving_slot(serving)]
    }

    /// Point estimates at threshold index `g` as a [`CoverageResult`].
    pub fn coverage_result(&self, g: usize, gamma: f64) -> CoverageResult {
        let mut values = [0.0; 6];
        let mut abs_errors = [0.0; 6];
        for k in 0..6 {
            values[k] = self.coverage[g][k].estimate;
            abs_errors[k] = self.coverage[g][k].stderr.unwrap_or(f64::NAN);
        }
        CoverageResult {
            gamma,
            values,
            abs_errors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCoverage {
    /// Linear thresholds.
    pub gammas: Vec<f64>,
    pub networks: Vec<McNetworkEstimates>,
    pub seed: u64,
    pub realizations: usize,
}

fn estimates_from(strata: &Strata, lay: Layout, offset: usize, seed: u64) -> McNetworkEstimates {
    let est = |i: usize| McEstimate {
        estimate: strata.mean(offset + i),
        stderr: strata.stderr(offset + i),
        n: strata.n(),
        seed,
    };
    let association = std::array::from_fn(|k| est(lay.association(Serving::ALL[k])));
    let coverage = (0..lay.gammas)
        .map(|g| std::array::from_fn(|k| est(lay.coverage(Serving::ALL[k], g))))
        .collect();
    McNetworkEstimates {
        association,
        coverage,
        miss: est(lay.miss()),
        empty: strata.mean(offset + lay.empty()) * strata.n() as f64,
    }
}

/// Association fractions and coverage of several networks that share the
/// system parameters, on common realizations.
pub fn mc_coverage_multi(nets: &[Network], gammas: &[f64], cfg: &McConfig) -> Result<McCoverage> {
    if gammas.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::invalid("gamma", "thresholds must be >= 0"));
    }
    let out = simulate(nets, gammas, cfg)?;
    let lay = Layout { gammas: gammas.len() };
    let networks = (0..nets.len())
        .map(|j| estimates_from(&out.pooled, lay, j * lay.width(), cfg.seed))
        .collect();
    Ok(McCoverage {
        gammas: gammas.to_vec(),
        networks,
        seed: cfg.seed,
        realizations: cfg.realizations,
    })
}

pub fn mc_coverage(net: &Network, gammas: &[f64], cfg: &McConfig) -> Result<McNetworkEstimates> {
    let mut run = mc_coverage_multi(std::slice::from_ref(net), gammas, cfg)?;
    Ok(run.networks.remove(0))
}

/// Simulated APT and its parts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McApt {
    pub eta: f64,
    pub gamma0: f64,
    pub r_total: McEstimate,
    pub r_sbs: McEstimate,
    pub r_mbs: McEstimate,
    pub cases: [McEstimate; 4],
}

/// Flow-level APT estimate: coverage of the access and backhaul links and
/// the cache-miss fraction are estimated on common realizations, then
/// combined through the min-coupled rates. Standard errors come from batch
/// means. Returns one entry per (network, η), network-major.
pub fn mc_apt_multi(
    nets: &[Network],
    etas: &[f64],
    gamma0: f64,
    cfg: &McConfig,
    coupling: CaseCoupling,
) -> Result<Vec<Vec<McApt>>> {
    let out = simulate(nets, &[gamma0], cfg)?;
    let lay = Layout { gammas: 1 };
    let compose = |strata: &Strata, j: usize, eta: f64| -> Result<AptBreakdown> {
        let e = estimates_from(strata, lay, j * lay.width(), cfg.seed);
        let cov = e.coverage_result(0, gamma0);
        AptBreakdown::compose_with_miss(&nets[j], &cov, e.miss.estimate, eta, gamma0, coupling)
    };
    let mut result = Vec::with_capacity(nets.len());
    for j in 0..nets.len() {
        let mut per_eta = Vec::with_capacity(etas.len());
        for &eta in etas {
            let point = compose(&out.pooled, j, eta)?;
            let batch_values = out
                .batches
                .iter()
                .map(|b| compose(b, j, eta))
                .collect::<Result<Vec<_>>>()?;
            let summarize = |f: &dyn Fn(&AptBreakdown) -> f64| -> McEstimate {
                let b = batch_values.len();
                let stderr = (b >= 2).then(|| {
                    let m = batch_values.iter().map(f).sum::<f64>() / b as f64;
                    let var = batch_values.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>() / (b - 1) as f64;
                    (var / b as f64).sqrt()
                });
                McEstimate {
                    estimate: f(&point),
                    stderr,
                    n: cfg.realizations,
                    seed: cfg.seed,
                }
            };
            per_eta.push(McApt {
                eta,
                gamma0,
                r_total: summarize(&|x| x.r_total),
                r_sbs: summarize(&|x| x.r_sbs),
                r_mbs: summarize(&|x| x.r_mbs),
                cases: std::array::from_fn(|i| summarize(&|x| x.cases[i])),
            });
        }
        result.push(per_eta);
    }
    Ok(result)
}

pub fn mc_apt(net: &Network, eta: f64, gamma0: f64, cfg: &McConfig, coupling: CaseCoupling) -> Result<McApt> {
    let mut r = mc_apt_multi(std::slice::from_ref(net), &[eta], gamma0, cfg, coupling)?;
    Ok(r.remove(0).remove(0))
}

/// Attempts per parallel round of rejection sampling.
const LAPLACE_ROUND: usize = 1024;
const STARVATION_MIN_ATTEMPTS: u64 = 10_000;
const STARVATION_RATE: f64 = 1e-4;

/// E[e^{-sI}] for a receiver served over `serving` at distance r: a BS of
/// the serving class is placed at r, the rest of the network is sampled,
/// and draws where that BS does not win the association are rejected.
/// `cfg.realizations` accepted draws are averaged.
pub fn mc_laplace(net: &Network, serving: Serving, r: f64, s: f64, cfg: &McConfig) -> Result<McEstimate> {
    cfg.validate()?;
    if !(r > 0.0) {
        return Err(Error::invalid("r", format!("must be > 0, got {r}")));
    }
    if !(s >= 0.0) {
        return Err(Error::invalid("s", format!("must be >= 0, got {s}")));
    }
    let sys = net.sys();
    let own = serving.class();
    if own.path == Path::Nlos && r <= LOS_BALL_RADIUS {
        return Err(Error::invalid("r", "an NLoS serving link needs r > 18 m"));
    }
    let sim = McConfig {
        inner_radius_m: None,
        ..cfg.clone()
    };
    let own_power = net.tx_power(own.tier)
        * sys.bias(own.tier)
        * (sys.intercept(own.path).ln() - sys.exponent(own.path) * r.ln()).exp();

    let attempt = |i: u64| -> Option<f64> {
        let real = sample_with(sys, &sim, Inner::Free, cfg.seed, i);
        let mut cands = Vec::new();
        match serving {
            Serving::Access(_) => user_candidates(net, &real, &mut cands),
            Serving::Backhaul(_) => backhaul_candidates(net, &real, &mut cands),
        }
        // The planted BS sits first among its tier; a tie with an SBS goes
        // to the SBS, a tie with another MBS to the planted BS.
        let wins = cands.iter().all(|c| {
            if own.tier == Tier::Mbs && c.class.tier == Tier::Sbs {
                c.power < own_power
            } else {
                c.power <= own_power
            }
        });
        if !wins {
            return None;
        }
        let interference: f64 = cands.iter().map(|c| c.power * c.fading).sum();
        Some((-s * interference).exp())
    };

    let mut moments = Moments::new(1);
    let mut attempts: u64 = 0;
    while moments.n < cfg.realizations {
        let round: Vec<Option<f64>> = (attempts..attempts + LAPLACE_ROUND as u64)
            .into_par_iter()
            .map(attempt)
            .collect();
        for v in round {
            attempts += 1;
            if let Some(v) = v {
                moments.push(&[v]);
                if moments.n == cfg.realizations {
                    break;
                }
            }
        }
        if attempts >= STARVATION_MIN_ATTEMPTS && (moments.n as f64) < STARVATION_RATE * attempts as f64 {
            return Err(Error::RejectionStarvation {
                accepted: moments.n as u64,
                attempts,
            });
        }
    }
    Ok(McEstimate {
        estimate: moments.mean(0),
        stderr: moments.variance(0).map(|v| (v / moments.n as f64).sqrt()),
        n: moments.n,
        seed: cfg.seed,
    })
}

/// One row of the golden-file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenRow {
    pub quantity: String,
    pub class: String,
    pub gamma_db: Option<f64>,
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub n: usize,
    pub seed: u64,
}

/// Flatten one network's estimates into golden rows. `gammas_db` must match
/// the thresholds the run used.
pub fn golden_rows(est: &McNetworkEstimates, gammas_db: &[f64]) -> Vec<GoldenRow> {
    let mut rows = Vec::new();
    let row = |quantity: &str, class: String, gamma_db: Option<f64>, e: &McEstimate| GoldenRow {
        quantity: quantity.to_string(),
        class,
        gamma_db,
        estimate: e.estimate,
        stderr: e.stderr,
        n: e.n,
        seed: e.seed,
    };
    for (k, s) in Serving::ALL.iter().enumerate() {
        rows.push(row("association", s.name(), None, &est.association[k]));
    }
    for (g, &db) in gammas_db.iter().enumerate() {
        for (k, s) in Serving::ALL.iter().enumerate() {
            rows.push(row("coverage", s.name(), Some(db), &est.coverage[g][k]));
        }
    }
    rows.push(row("cache_miss", "sbs".to_string(), None, &est.miss));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{CacheConfig, SystemConfig};

    fn small_cfg(n: usize) -> McConfig {
        McConfig {
            realizations: n,
            r_sim_m: 1000.0,
            far_field_radius_m: 5000.0,
            batches: 4,
            ..McConfig::default()
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let sys = SystemParams::default();
        let cfg = McConfig::default();
        let a = sample_realization(&sys, &cfg, 7, 3);
        let b = sample_realization(&sys, &cfg, 7, 3);
        assert_eq!(a, b);
        let c = sample_realization(&sys, &cfg, 7, 4);
        assert_ne!(a, c);
    }

    #[test]
    fn sites_lie_in_the_disc_with_positive_fading() {
        let sys = SystemParams::default();
        let cfg = McConfig::default();
        let real = sample_realization(&sys, &cfg, 11, 0);
        for s in real.sbs.iter().chain(&real.mbs) {
            assert!(s.distance > 0.0 && s.distance <= cfg.r_sim_m);
            assert!(s.access.fading > 0.0);
            if s.distance <= LOS_BALL_RADIUS {
                assert_eq!(s.access.path, Path::Los);
            }
        }
        assert!(real.mbs.iter().all(|s| s.backhaul.is_some()));
        assert!(real.sbs.iter().all(|s| s.backhaul.is_none()));
        assert!(real.far_sbs.iter().all(|l| l.path == Path::Los));
    }

    #[test]
    fn vanishing_tier_is_empty() {
        let sys = SystemConfig {
            lambda_s: 1e-15,
            ..SystemConfig::default()
        }
        .validate()
        .unwrap();
        let cfg = McConfig::default();
        for i in 0..20 {
            let real = sample_realization(&sys, &cfg, 1, i);
            assert!(real.sbs.is_empty() && real.far_sbs.is_empty());
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let net = Network::reference();
        let cfg = small_cfg(600);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| mc_coverage(&net, &[1.0, 10.0], &cfg).unwrap());
        let b = three.install(|| mc_coverage(&net, &[1.0, 10.0], &cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn association_fractions_sum_to_one() {
        let net = Network::reference();
        let est = mc_coverage(&net, &[1.0], &small_cfg(500)).unwrap();
        let user: f64 = est.association[..4].iter().map(|e| e.estimate).sum();
        let bh: f64 = est.association[4..].iter().map(|e| e.estimate).sum();
        assert!((user - 1.0).abs() < 1e-12);
        assert!((bh - 1.0).abs() < 1e-12);
        assert_eq!(est.empty, 0.0);
    }

    #[test]
    fn negligible_threshold_covers_every_association() {
        let net = Network::reference();
        let est = mc_coverage(&net, &[1e-20], &small_cfg(300)).unwrap();
        for k in 0..6 {
            assert_eq!(est.coverage[0][k].estimate, est.association[k].estimate);
        }
    }

    #[test]
    fn single_realization_has_no_stderr() {
        let net = Network::reference();
        let est = mc_coverage(&net, &[1.0], &small_cfg(1)).unwrap();
        assert_eq!(est.association[0].n, 1);
        assert!(est.association[0].stderr.is_none());
        assert!((0.0..=1.0).contains(&est.association[0].estimate));
    }

    #[test]
    fn averaged_fading_is_a_probability_and_orders_thresholds() {
        let net = Network::reference();
        let cfg = McConfig {
            estimator: Estimator::AveragedFading,
            ..small_cfg(200)
        };
        let est = mc_coverage(&net, &[0.1, 1.0, 10.0], &cfg).unwrap();
        for k in 0..6 {
            let v: Vec<f64> = est.coverage.iter().map(|c| c[k].estimate).collect();
            assert!(v.windows(2).all(|w| w[1] <= w[0]));
            assert!(v[0] <= est.association[k].estimate + 1e-15);
        }
    }

    #[test]
    fn cache_miss_matches_hit_ratio_roughly() {
        let net = Network::reference();
        let est = mc_coverage(&net, &[1.0], &small_cfg(2000)).unwrap();
        let miss = est.miss;
        assert!(miss.z_score(1.0 - net.hit_ratio()) < 4.0, "{miss:?}");
        let none = mc_coverage(&net.with_cache_size(0).unwrap(), &[1.0], &small_cfg(50)).unwrap();
        assert_eq!(none.miss.estimate, 1.0);
    }

    #[test]
    fn full_cache_never_misses() {
        let cache = CacheConfig {
            library_size: 50,
            cache_size: 50,
            ..CacheConfig::four_megabit()
        }
        .validate()
        .unwrap();
        let net = Network::new(SystemParams::default(), cache).unwrap();
        let est = mc_coverage(&net, &[1.0], &small_cfg(300)).unwrap();
        assert_eq!(est.miss.estimate, 0.0);
    }

    #[test]
    fn zero_partition_gives_zero_access_apt() {
        let net = Network::reference();
        let apt = mc_apt(&net, 0.0, 10.0, &small_cfg(200), CaseCoupling::Matched).unwrap();
        assert_eq!(apt.r_sbs.estimate, 0.0);
        assert_eq!(apt.r_mbs.estimate, 0.0);
    }

    #[test]
    fn laplace_at_zero_is_exactly_one() {
        let net = Network::reference();
        let e = mc_laplace(
            &net,
            Serving::Access(LinkClass::SBS_LOS),
            50.0,
            0.0,
            &small_cfg(100),
        )
        .unwrap();
        assert_eq!(e.estimate, 1.0);
    }

    #[test]
    fn laplace_starves_on_impossible_conditioning() {
        let net = Network::reference();
        let err = mc_laplace(
            &net,
            Serving::Access(LinkClass::SBS_NLOS),
            400.0,
            1.0,
            &small_cfg(10),
        )
        .unwrap_err();
        assert!(matches!(err, Error::RejectionStarvation { .. }));
    }

    #[test]
    fn stratified_sampling_weights_sum_to_one() {
        let sys = SystemParams::default();
        let cfg = McConfig {
            inner_radius_m: Some(20.0),
            ..small_cfg(100)
        };
        let plan = Plan::new(&sys, &cfg);
        assert!((plan.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let (h0, _) = plan.stratum(0);
        let (h1, _) = plan.stratum(plan.batch_size - 1);
        assert_eq!((h0, h1), (0, 1));
        for i in 0..40 {
            let occ = sample_with(&sys, &cfg, Inner::Occupied(20.0), 3, i);
            let inside = occ
                .sbs
                .iter()
                .chain(&occ.mbs)
                .filter(|s| s.distance <= 20.0)
                .count();
            assert!(inside >= 1);
            let empty = sample_with(&sys, &cfg, Inner::Empty(20.0), 3, i);
            assert!(empty.sbs.iter().chain(&empty.mbs).all(|s| s.distance >= 20.0));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad = [
            McConfig {
                realizations: 0,
                ..McConfig::default()
            },
            McConfig {
                r_sim_m: -1.0,
                ..McConfig::default()
            },
            McConfig {
                inner_radius_m: Some(5000.0),
                ..McConfig::default()
            },
            McConfig {
                r_sim_m: 10.0,
                ..McConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
