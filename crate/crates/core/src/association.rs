//! Maximum biased received power association.
//!
//! A receiver attaches to the BS with the largest P·B·A·t^-α over all four
//! link classes (users) or over the two MBS classes (SBS backhaul). Seen
//! from the receiver, each (tier, path) class is an independent PPP thinned
//! by the LoS/NLoS probability, so "served by class (k, X) at distance r"
//! factors into the nearest-distance density of that class times the void
//! probability of every competing class inside its exclusion radius.

use std::f64::consts::PI;

use crate::error::Result;
use crate::params::{LinkClass, Network, Path, Tier};
use crate::propagation::{self, DistanceMode, LOS_BALL_RADIUS};
use crate::quadrature::{self, QuadResult, Tolerance};

/// The serving link whose statistics are being computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Serving {
    /// A typical user served over the access link of the given class.
    Access(LinkClass),
    /// A typical SBS served by an MBS over a backhaul link.
    Backhaul(Path),
}

impl Serving {
    pub const ALL: [Serving; 6] = [
        Serving::Access(LinkClass::SBS_LOS),
        Serving::Access(LinkClass::SBS_NLOS),
        Serving::Access(LinkClass::MBS_LOS),
        Serving::Access(LinkClass::MBS_NLOS),
        Serving::Backhaul(Path::Los),
        Serving::Backhaul(Path::Nlos),
    ];

    /// Link class of the serving BS.
    pub fn class(self) -> LinkClass {
        match self {
            Serving::Access(c) => c,
            Serving::Backhaul(p) => LinkClass::new(Tier::Mbs, p),
        }
    }

    /// Classes that take part in the association comparison (and that
    /// interfere once it is decided).
    pub fn candidates(self) -> &'static [LinkClass] {
        match self {
            Serving::Access(_) => &LinkClass::ALL,
            Serving::Backhaul(_) => &[LinkClass::MBS_LOS, LinkClass::MBS_NLOS],
        }
    }

    pub fn name(self) -> String {
        match self {
            Serving::Access(c) => c.to_string(),
            Serving::Backhaul(p) => format!("bh_{}", p.name()),
        }
    }
}

/// Minimum distance each class must keep from the receiver for the serving
/// BS at distance r to win the comparison. `None` for classes that do not
/// compete (SBSs on a backhaul link).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExclusionSet {
    radii: [Option<f64>; 4],
}

impl ExclusionSet {
    pub fn radius(&self, class: LinkClass) -> Option<f64> {
        self.radii[class.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (LinkClass, f64)> + '_ {
        LinkClass::ALL
            .into_iter()
            .filter_map(|c| self.radius(c).map(|d| (c, d)))
    }
}

/// Radius at which a `competitor` BS delivers the same biased power as the
/// serving BS at distance r: K_c d^-α_c = K_s r^-α_s.
pub(crate) fn exclusion_radius(net: &Network, serving: LinkClass, competitor: LinkClass, r: f64) -> f64 {
    if competitor == serving {
        return r;
    }
    if r <= 0.0 {
        return 0.0;
    }
    let sys = net.sys();
    let alpha_s = sys.exponent(serving.path);
    let alpha_c = sys.exponent(competitor.path);
    let log_ratio = net.biased_gain(competitor).ln() - net.biased_gain(serving).ln();
    ((log_ratio + alpha_s * r.ln()) / alpha_c).exp()
}

pub fn exclusion_distances(net: &Network, serving: Serving, r: f64) -> ExclusionSet {
    let mut radii = [None; 4];
    for &c in serving.candidates() {
        radii[c.index()] = Some(exclusion_radius(net, serving.class(), c, r));
    }
    ExclusionSet { radii }
}

/// Probability that no BS of `competitor` lies inside its exclusion radius.
fn void_factor(net: &Network, serving: LinkClass, competitor: LinkClass, r: f64) -> f64 {
    let d = exclusion_radius(net, serving, competitor, r);
    propagation::thinned_void_probability(net.sys(), competitor.tier, competitor.path, d)
}

/// Joint density of "served by `serving`" and "serving distance = r".
pub fn association_density(net: &Network, serving: Serving, mode: DistanceMode, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let own = serving.class();
    let mut density = propagation::nearest_distance_pdf(net.sys(), own.tier, own.path, mode, r);
    if density == 0.0 {
        return 0.0;
    }
    // The serving class's own void inside r is already in the nearest-distance
    // density; collect the competing classes in one exponent.
    let mut exponent = 0.0;
    for &c in serving.candidates() {
        if c != own {
            let d = exclusion_radius(net, own, c, r);
            exponent += net.sys().density(c.tier) * propagation::radial_path_integral(net.sys(), c.path, d);
        }
    }
    density *= (-2.0 * PI * exponent).exp();
    density
}

/// The product of competing-class void probabilities alone (the p-factors).
pub fn competition_factor(net: &Network, serving: Serving, r: f64) -> f64 {
    let own = serving.class();
    serving
        .candidates()
        .iter()
        .filter(|&&c| c != own)
        .map(|&c| void_factor(net, own, c, r))
        .product()
}

/// Tail mass neglected beyond the outer integration radius.
pub(crate) const TAIL_MASS: f64 = 1e-10;
const RADIUS_CAP: f64 = 1e7;

/// Upper limit for radial integrals over the association density.
pub(crate) fn outer_radius(net: &Network, serving: Serving, mode: DistanceMode) -> f64 {
    let c = serving.class();
    let thinned = propagation::tail_radius(
        net.sys(),
        c.tier,
        c.path,
        DistanceMode::Thinned,
        TAIL_MASS,
        RADIUS_CAP,
    );
    match mode {
        DistanceMode::Thinned => thinned,
        DistanceMode::Unthinned => {
            let literal = propagation::tail_radius(
                net.sys(),
                c.tier,
                c.path,
                DistanceMode::Unthinned,
                TAIL_MASS,
                RADIUS_CAP,
            );
            literal.min(thinned)
        }
    }
}

/// Kinks of the association density in r: the LoS ball edge for the serving
/// link and for every exclusion radius, plus a geometric grid to r_max.
pub(crate) fn radial_breakpoints(net: &Network, serving: Serving, r_max: f64) -> Vec<f64> {
    let own = serving.class();
    let sys = net.sys();
    let mut pts = vec![0.0, r_max];
    let mut push = |x: f64| {
        if x.is_finite() && x > 0.0 && x < r_max {
            pts.push(x);
        }
    };
    push(LOS_BALL_RADIUS);
    for &c in serving.candidates() {
        if c != own {
            // Invert d_c(r) = 18.
            let alpha_s = sys.exponent(own.path);
            let alpha_c = sys.exponent(c.path);
            let log_ratio = net.biased_gain(c).ln() - net.biased_gain(own).ln();
            push(((alpha_c * LOS_BALL_RADIUS.ln() - log_ratio) / alpha_s).exp());
        }
    }
    let mut x = 4.0;
    while x < r_max {
        push(x);
        x *= 2.0;
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

pub(crate) const MASS_TOLERANCE: Tolerance = Tolerance::new(1e-11, 1e-9);

/// Probability of being served by `serving`: ∫ association_density dr.
pub fn association_mass(net: &Network, serving: Serving, mode: DistanceMode) -> Result<QuadResult> {
    let r_max = outer_radius(net, serving, mode);
    let pts = radial_breakpoints(net, serving, r_max);
    quadrature::integrate(
        |r| association_density(net, serving, mode, r),
        &pts,
        MASS_TOLERANCE,
        "association mass",
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationMasses {
    /// Indexed by [`LinkClass::index`].
    pub user: [f64; 4],
    /// Indexed by [`Path::index`].
    pub backhaul: [f64; 2],
    /// Summed quadrature error estimate.
    pub abs_error: f64,
}

impl AssociationMasses {
    pub fn user_total(&self) -> f64 {
        self.user.iter().sum()
    }

    pub fn backhaul_total(&self) -> f64 {
        self.backhaul.iter().sum()
    }

    pub fn tier_mass(&self, tier: Tier) -> f64 {
        Path::ALL
            .iter()
            .map(|&p| self.user[LinkClass::new(tier, p).index()])
            .sum()
    }

    pub fn get(&self, serving: Serving) -> f64 {
        match serving {
            Serving::Access(c) => self.user[c.index()],
            Serving::Backhaul(p) => self.backhaul[p.index()],
        }
    }
}

pub fn association_masses(net: &Network, mode: DistanceMode) -> Result<AssociationMasses> {
    let mut out = AssociationMasses {
        user: [0.0; 4],
        backhaul: [0.0; 2],
        abs_error: 0.0,
    };
    for serving in Serving::ALL {
        let m = association_mass(net, serving, mode)?;
        out.abs_error += m.abs_error;
        match serving {
            Serving::Access(c) => out.user[c.index()] = m.value,
            Serving::Backhaul(p) => out.backhaul[p.index()] = m.value,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{CacheParams, SystemConfig};

    fn net_with(cfg: SystemConfig) -> Network {
        Network::new(cfg.validate().unwrap(), CacheParams::default()).unwrap()
    }

    #[test]
    fn own_class_radius_is_r() {
        let net = Network::reference();
        for serving in Serving::ALL {
            let set = exclusion_distances(&net, serving, 73.5);
            assert_eq!(set.radius(serving.class()), Some(73.5));
        }
        let bh = exclusion_distances(&net, Serving::Backhaul(Path::Los), 10.0);
        assert_eq!(bh.radius(LinkClass::SBS_LOS), None);
        assert_eq!(bh.iter().count(), 2);
    }

    #[test]
    fn same_tier_other_path_cancels_power_and_bias() {
        let net = Network::reference();
        let s = net.sys();
        for r in [1.0, 20.0, 150.0] {
            let d = exclusion_distances(&net, Serving::Access(LinkClass::SBS_LOS), r)
                .radius(LinkClass::SBS_NLOS)
                .unwrap();
            let expected = (s.a_nlos / s.a_los).powf(1.0 / s.alpha_nlos) * r.powf(s.alpha_los / s.alpha_nlos);
            assert!((d / expected - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn cross_tier_radius_reference_value() {
        // MBS-LoS serving at 100 m; SBS-LoS must be farther than
        // 100 · (P_s B_s / P_m B_m)^(1/α_L) = 100 · (2.5 / 34.3582...)^(1/2.09).
        let net = Network::reference();
        let d = exclusion_distances(&net, Serving::Access(LinkClass::MBS_LOS), 100.0)
            .radius(LinkClass::SBS_LOS)
            .unwrap();
        let ratio = 0.25 * 10.0 / ((610.0 - 10.16 - 80.0) / 15.13);
        let expected = 100.0 * f64::powf(ratio, 1.0 / 2.09);
        assert!((d - expected).abs() < 1e-10);
        // mpmath: 28.54032851623059...
        assert!((d - 28.540_328_516_230_59).abs() < 1e-11, "{d}");
    }

    #[test]
    fn radii_increase_with_r() {
        let net = Network::reference();
        for serving in Serving::ALL {
            let mut prev = exclusion_distances(&net, serving, 1.0);
            for i in 2..200 {
                let cur = exclusion_distances(&net, serving, i as f64 * 3.0);
                for (c, d) in cur.iter() {
                    assert!(d > prev.radius(c).unwrap());
                }
                prev = cur;
            }
        }
    }

    #[test]
    fn no_competition_limit() {
        // Competing tiers vanish: the density reduces to the nearest-distance pdf.
        let net = net_with(SystemConfig {
            lambda_s: 1e-30,
            ..SystemConfig::default()
        });
        let s = net.sys();
        for r in [5.0, 40.0, 300.0] {
            let f = association_density(&net, Serving::Backhaul(Path::Los), DistanceMode::Thinned, r);
            let pdf = propagation::nearest_distance_pdf(s, Tier::Mbs, Path::Los, DistanceMode::Thinned, r);
            // Only the MBS-NLoS void remains; it is ~1 at these radii.
            let nlos_void = competition_factor(&net, Serving::Backhaul(Path::Los), r);
            assert!((f - pdf * nlos_void).abs() <= 1e-15 * pdf);
            let user = association_density(
                &net,
                Serving::Access(LinkClass::MBS_LOS),
                DistanceMode::Thinned,
                r,
            );
            assert!((user - f).abs() <= 1e-12 * f);
        }
    }

    #[test]
    fn thinned_masses_are_normalized() {
        let net = Network::reference();
        let m = association_masses(&net, DistanceMode::Thinned).unwrap();
        assert!((m.user_total() - 1.0).abs() < 1e-6, "{:?}", m);
        assert!((m.backhaul_total() - 1.0).abs() < 1e-6, "{:?}", m);
        assert!(m.user.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn dense_equal_power_sbs_tier_wins_more_users() {
        let net = Network::new(
            SystemConfig {
                p_tot_s: 610.0,
                p_fc_s: 10.16,
                rho_s: 15.13,
                bias_s: 1.0,
                ..SystemConfig::default()
            }
            .validate()
            .unwrap(),
            crate::params::CacheConfig {
                w_ca: 0.0,
                ..Default::default()
            }
            .validate()
            .unwrap(),
        )
        .unwrap();
        assert_eq!(net.tx_power(Tier::Sbs), net.tx_power(Tier::Mbs));
        let m = association_masses(&net, DistanceMode::Thinned).unwrap();
        assert!(m.tier_mass(Tier::Sbs) > m.tier_mass(Tier::Mbs));
        // Equal power and bias: tier shares follow the densities, 10 : 1.
        assert!((m.tier_mass(Tier::Sbs) - 10.0 / 11.0).abs() < 1e-6);
    }

    #[test]
    fn huge_sbs_bias_captures_every_user() {
        let net = net_with(SystemConfig {
            bias_s: 1e9,
            ..SystemConfig::default()
        });
        let m = association_masses(&net, DistanceMode::Thinned).unwrap();
        assert!(m.tier_mass(Tier::Sbs) > 0.999, "{:?}", m);
    }

    #[test]
    fn scale_invariance_of_association() {
        let base = Network::reference();
        let k = 37.0;
        let scaled_cfg = SystemConfig {
            p_tot_s: base.sys().p_tot_s * k,
            p_fc_s: base.sys().p_fc_s * k,
            p_tot_m: base.sys().p_tot_m * k,
            p_fc_m: base.sys().p_fc_m * k,
            noise: crate::params::NoiseModel::ConstantWatts {
                watts: base.noise_w() * k,
            },
            ..base.sys().config().clone()
        };
        let scaled_cache = crate::params::CacheConfig {
            w_ca: base.cache().w_ca * k,
            ..base.cache().config().clone()
        };
        let scaled = Network::new(scaled_cfg.validate().unwrap(), scaled_cache.validate().unwrap()).unwrap();
        for serving in Serving::ALL {
            for r in [3.0, 30.0, 300.0] {
                let a = exclusion_distances(&base, serving, r);
                let b = exclusion_distances(&scaled, serving, r);
                for (c, d) in a.iter() {
                    assert!((d / b.radius(c).unwrap() - 1.0).abs() < 1e-12);
                }
                let fa = association_density(&base, serving, DistanceMode::Thinned, r);
                let fb = association_density(&scaled, serving, DistanceMode::Thinned, r);
                assert!((fa - fb).abs() <= 1e-12 * fa.max(1e-300));
            }
        }
    }

    #[test]
    fn density_vanishes_far_out() {
        let net = Network::reference();
        for serving in Serving::ALL {
            // LoS voids decay like e^{-c r}, NLoS voids like e^{-c r²}.
            let far = association_density(&net, serving, DistanceMode::Thinned, 2e5);
            assert!(far * 2e5f64.powi(10) < 1e-30, "{serving:?} {far}");
        }
    }
}
