//! Interference Laplace transforms and SINR coverage probabilities.
//!
//! With Rayleigh fading the coverage of a link at distance r is
//! E[exp(-s(I + N0))] with s = γ r^α / (P B A). The interference of each
//! competing class is a PPP outside its exclusion radius, so its Laplace
//! transform is the usual probability generating functional. The SINR keeps
//! the association bias on signal and interference alike.

use std::f64::consts::PI;

use crate::association::{self, Serving};
use crate::error::{Error, Result};
use crate::params::{LinkClass, Network, Path, Tier};
use crate::propagation::{self, DistanceMode, LOS_BALL_RADIUS};
use crate::quadrature::{self, Tolerance};

const INNER_TOLERANCE: Tolerance = Tolerance::new(1e-14, 1e-10);
const OUTER_TOLERANCE: Tolerance = Tolerance::new(1e-10, 1e-8);

/// Far end of the geometric grid of breakpoints placed in the
/// interference tail.
const TAIL_GRID_END: f64 = 1e9;

/// Coverage of all six serving links at one SINR threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageResult {
    /// Linear SINR threshold.
    pub gamma: f64,
    /// Joint probability of being served by the link and reaching `gamma`,
    /// indexed in [`Serving::ALL`] order.
    pub values: [f64; 6],
    pub abs_errors: [f64; 6],
}

fn serving_index(serving: Serving) -> usize {
    match serving {
        Serving::Access(c) => c.index(),
        Serving::Backhaul(p) => 4 + p.index(),
    }
}

impl CoverageResult {
    pub fn get(&self, serving: Serving) -> f64 {
        self.values[serving_index(serving)]
    }

    pub fn abs_error(&self, serving: Serving) -> f64 {
        self.abs_errors[serving_index(serving)]
    }

    pub fn access(&self, class: LinkClass) -> f64 {
        self.get(Serving::Access(class))
    }

    pub fn backhaul(&self, path: Path) -> f64 {
        self.get(Serving::Backhaul(path))
    }

    /// P_k^cov = LoS + NLoS part for a tier.
    pub fn tier_total(&self, tier: Tier) -> f64 {
        Path::ALL
            .iter()
            .map(|&p| self.access(LinkClass::new(tier, p)))
            .sum()
    }

    pub fn backhaul_total(&self) -> f64 {
        Path::ALL.iter().map(|&p| self.backhaul(p)).sum()
    }
}

/// Laplace argument that turns the coverage condition into E[e^{-sI}]:
/// s = γ r^α / (P B A) of the serving link.
pub fn laplace_argument(net: &Network, serving: Serving, r: f64, gamma: f64) -> f64 {
    let own = serving.class();
    gamma * r.powf(net.sys().exponent(own.path)) / net.biased_gain(own)
}

/// ∫_d^∞ P_Y(t) t · x/(1+x) dt with x = s K t^-α: the mean interference
/// "mass" of one competing class, before the 2πλ factor.
fn interference_integral(net: &Network, class: LinkClass, d: f64, s: f64) -> Result<f64> {
    let sys = net.sys();
    let alpha = sys.exponent(class.path);
    let log_sk = (s * net.biased_gain(class)).ln();
    let beta = sys.beta;
    let path = class.path;
    let g = |t: f64| -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        // x/(1+x) = 1/(1 + 1/x)
        let inv_x = (alpha * t.ln() - log_sk).exp();
        propagation::path_prob(beta, t, path) * t / (1.0 + inv_x)
    };

    let mut total = 0.0;
    let a = d.max(LOS_BALL_RADIUS);
    if d < a {
        let near = quadrature::integrate(g, &[d, a], INNER_TOLERANCE, "interference (near field)")?;
        total += near.value;
    }

    // Tail decay: t^-α_L for LoS when blockage thins it, t^{1-α} otherwise.
    let decay = match path {
        Path::Los if beta > 0.0 => alpha,
        _ => alpha - 1.0,
    };
    if decay <= 1.0 {
        return Err(Error::QuadratureFailure {
            what: "interference tail (diverges for this exponent)",
            error: f64::INFINITY,
            tolerance: 0.0,
        });
    }
    // t = a u^-k, u in (0, 1], with k chosen so the integrand is bounded at u = 0.
    let k = 1.0 / (decay - 1.0);
    let h = |u: f64| -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let t = a * u.powf(-k);
        if !t.is_finite() {
            return 0.0;
        }
        g(t) * a * k * u.powf(-k - 1.0)
    };
    let mut pts = vec![0.0, 1.0];
    let mut t = 2.0 * a;
    while t < TAIL_GRID_END {
        pts.push((a / t).powf(1.0 / k));
        t *= 2.0;
    }
    if beta > 0.0 && 1.0 / beta > a {
        pts.push((a * beta).powf(1.0 / k));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let far = quadrature::integrate(h, &pts, INNER_TOLERANCE, "interference (tail)")?;
    total += far.value;
    Ok(total)
}

/// E[e^{-sI}] of the interference seen by a receiver served over `serving`
/// at distance r: every competing class contributes from beyond its
/// exclusion radius.
pub fn laplace_interference(net: &Network, serving: Serving, r: f64, s: f64) -> Result<f64> {
    if r <= 0.0 || r.is_nan() {
        return Err(Error::invalid("r", format!("must be > 0, got {r}")));
    }
    if s.is_nan() || s < 0.0 {
        return Err(Error::invalid("s", format!("must be >= 0, got {s}")));
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    let own = serving.class();
    let mut exponent = 0.0;
    for &c in serving.candidates() {
        let lambda = net.sys().density(c.tier);
        if lambda == 0.0 {
            continue;
        }
        let d = association::exclusion_radius(net, own, c, r);
        exponent += lambda * interference_integral(net, c, d, s)?;
    }
    Ok((-2.0 * PI * exponent).exp())
}

/// P(served over `serving`, SINR ≥ γ) for linear γ.
pub fn coverage_component(
    net: &Network,
    serving: Serving,
    gamma: f64,
    mode: DistanceMode,
) -> Result<(f64, f64)> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::invalid("gamma", format!("must be >= 0, got {gamma}")));
    }
    let own = serving.class();
    if net.sys().density(own.tier) == 0.0 {
        return Ok((0.0, 0.0));
    }
    let r_max = association::outer_radius(net, serving, mode);
    let pts = association::radial_breakpoints(net, serving, r_max);
    let noise = net.noise_w();
    let mut failure = None;
    let integrand = |r: f64| -> f64 {
        if r <= 0.0 || failure.is_some() {
            return 0.0;
        }
        let f = association::association_density(net, serving, mode, r);
        if f == 0.0 {
            return 0.0;
        }
        let s = laplace_argument(net, serving, r, gamma);
        let noise_term = (-s * noise).exp();
        if noise_term == 0.0 {
            return 0.0;
        }
        match laplace_interference(net, serving, r, s) {
            Ok(l) => noise_term * l * f,
            Err(e) => {
                failure = Some(e);
                0.0
            }
        }
    };
    let result = quadrature::integrate(integrand, &pts, OUTER_TOLERANCE, "coverage");
    if let Some(e) = failure {
        return Err(e);
    }
    let q = result?;
    Ok((q.value.max(0.0), q.abs_error))
}

/// (LoS, NLoS) coverage of users served by `tier`.
pub fn coverage_access(net: &Network, tier: Tier, gamma: f64, mode: DistanceMode) -> Result<(f64, f64)> {
    let los = coverage_component(net, Serving::Access(LinkClass::new(tier, Path::Los)), gamma, mode)?;
    let nlos = coverage_component(
        net,
        Serving::Access(LinkClass::new(tier, Path::Nlos)),
        gamma,
        mode,
    )?;
    Ok((los.0, nlos.0))
}

/// (LoS, NLoS) coverage of the typical SBS by its serving MBS.
pub fn coverage_backhaul(net: &Network, gamma: f64, mode: DistanceMode) -> Result<(f64, f64)> {
    let los = coverage_component(net, Serving::Backhaul(Path::Los), gamma, mode)?;
    let nlos = coverage_component(net, Serving::Backhaul(Path::Nlos), gamma, mode)?;
    Ok((los.0, nlos.0))
}

/// All six coverage components at one threshold.
pub fn coverage(net: &Network, gamma: f64, mode: DistanceMode) -> Result<CoverageResult> {
    let mut out = CoverageResult {
        gamma,
        values: [0.0; 6],
        abs_errors: [0.0; 6],
    };
    for serving in Serving::ALL {
        let (v, e) = coverage_component(net, serving, gamma, mode)?;
        let i = serving_index(serving);
        out.values[i] = v;
        out.abs_errors[i] = e;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{db_to_linear, CacheParams, NoiseModel, SystemConfig};

    fn net_with(cfg: SystemConfig) -> Network {
        Network::new(cfg.validate().unwrap(), CacheParams::default()).unwrap()
    }

    /// Direct quadrature of the interference integral on a long finite range
    /// with a power-law tail correction, independent of the substitution.
    fn brute_interference(net: &Network, class: LinkClass, d: f64, s: f64) -> f64 {
        let sys = net.sys();
        let alpha = sys.exponent(class.path);
        let k = s * net.biased_gain(class);
        let g = |t: f64| {
            let x = k * t.powf(-alpha);
            propagation::path_prob(sys.beta, t, class.path) * t * x / (1.0 + x)
        };
        let end = 1e7;
        let mut pts = vec![d];
        let mut t = d.max(1.0);
        while t < end {
            t *= 1.5;
            if t > d {
                pts.push(t.min(end));
            }
        }
        if d < LOS_BALL_RADIUS {
            pts.push(LOS_BALL_RADIUS);
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let body = quadrature::integrate(g, &pts, Tolerance::new(1e-14, 1e-11), "brute")
            .unwrap()
            .value;
        // Beyond `end`: P_L ≈ 18/t, P_NL ≈ 1, x ≪ 1.
        let tail = match class.path {
            Path::Los => 18.0 * k * end.powf(1.0 - alpha) / (alpha - 1.0),
            Path::Nlos => k * end.powf(2.0 - alpha) / (alpha - 2.0),
        };
        body + tail
    }

    #[test]
    fn tail_substitution_matches_direct_quadrature() {
        let net = Network::reference();
        for class in LinkClass::ALL {
            for (d, s) in [(3.0, 1e6), (40.0, 1e9), (250.0, 1e3), (10.0, 1e12)] {
                let a = interference_integral(&net, class, d, s).unwrap();
                let b = brute_interference(&net, class, d, s);
                assert!(
                    (a - b).abs() <= 1e-7 * b.abs().max(1e-30),
                    "{class} d={d} s={s}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn laplace_at_zero_is_one() {
        let net = Network::reference();
        for serving in Serving::ALL {
            assert_eq!(laplace_interference(&net, serving, 30.0, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn laplace_without_interferers_is_one() {
        let net = net_with(SystemConfig {
            lambda_s: 0.0,
            lambda_m: 1e-300,
            ..SystemConfig::default()
        });
        let l = laplace_interference(&net, Serving::Access(LinkClass::SBS_LOS), 50.0, 1e12).unwrap();
        assert!((l - 1.0).abs() < 1e-250);
    }

    #[test]
    fn laplace_is_a_decreasing_probability() {
        let net = Network::reference();
        for serving in Serving::ALL {
            let mut prev = 1.0;
            for e in 0..12 {
                let s = 10f64.powi(e) * 1e4;
                let l = laplace_interference(&net, serving, 60.0, s).unwrap();
                assert!(l > 0.0 && l <= prev, "{serving:?} s={s} {l} {prev}");
                prev = l;
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let net = Network::reference();
        let serving = Serving::Access(LinkClass::SBS_LOS);
        assert!(laplace_interference(&net, serving, 0.0, 1.0).is_err());
        assert!(laplace_interference(&net, serving, 10.0, -1.0).is_err());
        assert!(coverage_component(&net, serving, -1.0, DistanceMode::Thinned).is_err());
    }

    #[test]
    fn divergent_interference_is_reported() {
        let net = net_with(SystemConfig {
            beta: 0.0,
            alpha_los: 1.9,
            ..SystemConfig::default()
        });
        let err = laplace_interference(&net, Serving::Access(LinkClass::SBS_LOS), 10.0, 1.0).unwrap_err();
        assert!(err.is_numerical());
    }

    #[test]
    fn vanishing_threshold_recovers_association_masses() {
        let net = Network::reference();
        let masses = association::association_masses(&net, DistanceMode::Thinned).unwrap();
        let cov = coverage(&net, 1e-20, DistanceMode::Thinned).unwrap();
        for serving in Serving::ALL {
            assert!(
                (cov.get(serving) - masses.get(serving)).abs() < 1e-6,
                "{serving:?}"
            );
        }
        assert!((cov.backhaul_total() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn huge_threshold_gives_no_coverage() {
        let net = Network::reference();
        let cov = coverage(&net, db_to_linear(200.0), DistanceMode::Thinned).unwrap();
        assert!(cov.values.iter().all(|&v| v < 1e-12), "{:?}", cov.values);
    }

    #[test]
    fn rayleigh_noise_only_closed_form() {
        // No blockage beyond the ball (β = 0: all LoS), single MBS tier,
        // interference-free: P_cov = ∫ 2πλr e^{-πλr²} e^{-γ N0 r^2/(P B A)} dr
        // with α = 2 → πλ / (πλ + γ N0 / (P B A)).
        let cfg = SystemConfig {
            lambda_s: 0.0,
            beta: 0.0,
            alpha_los: 2.0,
            ..SystemConfig::default()
        };
        let net = net_with(cfg);
        // Interference diverges for α = 2, so check only the noise/density
        // algebra through the integrand with the Laplace factor removed.
        let gamma = 10.0;
        let k = net.biased_gain(LinkClass::MBS_LOS);
        let lambda = net.sys().lambda_m;
        let c = gamma * net.noise_w() / k;
        let q = quadrature::integrate(
            |r| {
                association::association_density(
                    &net,
                    Serving::Access(LinkClass::MBS_LOS),
                    DistanceMode::Thinned,
                    r,
                ) * (-c * r * r).exp()
            },
            &[0.0, 100.0, 1000.0, 3000.0],
            Tolerance::new(1e-13, 1e-12),
            "closed form",
        )
        .unwrap();
        let expected = PI * lambda / (PI * lambda + c);
        assert!((q.value - expected).abs() < 1e-9, "{} {}", q.value, expected);
    }

    #[test]
    fn power_scaling_never_hurts_coverage() {
        let base = SystemConfig::default();
        let gamma = db_to_linear(5.0);
        let mut prev: Option<CoverageResult> = None;
        for k in [1.0, 10.0, 100.0] {
            let cfg = SystemConfig {
                p_tot_s: base.p_tot_s * k,
                p_fc_s: base.p_fc_s * k,
                p_tot_m: base.p_tot_m * k,
                p_fc_m: base.p_fc_m * k,
                noise: NoiseModel::ConstantWatts { watts: 1e-12 },
                ..base.clone()
            };
            let cache = crate::params::CacheConfig {
                w_ca: 2.5e-9 * k,
                ..Default::default()
            }
            .validate()
            .unwrap();
            let net = Network::new(cfg.validate().unwrap(), cache).unwrap();
            let cov = coverage(&net, gamma, DistanceMode::Thinned).unwrap();
            if let Some(p) = prev {
                for i in 0..6 {
                    assert!(cov.values[i] >= p.values[i] - 1e-9, "component {i}");
                }
            }
            prev = Some(cov);
        }
    }

    #[test]
    fn coverage_is_monotone_in_threshold() {
        let net = Network::reference();
        let mut prev = coverage(&net, db_to_linear(-10.0), DistanceMode::Thinned).unwrap();
        for db in [-5.0, 0.0, 5.0, 10.0, 20.0] {
            let cur = coverage(&net, db_to_linear(db), DistanceMode::Thinned).unwrap();
            for i in 0..6 {
                assert!(cur.values[i] <= prev.values[i] + 1e-12, "{db} dB component {i}");
            }
            prev = cur;
        }
    }
}
