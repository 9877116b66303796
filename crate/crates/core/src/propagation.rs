//! Blockage-dependent LoS probability, dual-slope path loss and the
//! nearest-BS distance densities built on them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Path, SystemParams, Tier};

/// Radius inside which every link is LoS.
pub const LOS_BALL_RADIUS: f64 = 18.0;

/// Which void factor the nearest-distance densities use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// Void probability of the blockage-thinned process of the same path
    /// class: the law of the distance to the nearest path-X BS.
    #[default]
    Thinned,
    /// Unthinned void factor exp(-πλr²): the joint law of the distance to
    /// the nearest BS and its path class. Kept for comparison; combined with
    /// the association void factors it does not give normalized masses.
    Unthinned,
}

/// One link at a given distance with its path class and linear gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub distance: f64,
    pub path: Path,
    pub loss: f64,
}

impl PathSample {
    pub fn new(sys: &SystemParams, distance: f64, path: Path) -> Result<Self> {
        Ok(PathSample {
            distance,
            path,
            loss: path_loss(sys, distance, path)?,
        })
    }
}

fn check_distance(r: f64) -> Result<()> {
    if r < 0.0 || r.is_nan() {
        Err(Error::NegativeDistance(r))
    } else {
        Ok(())
    }
}

/// P_L(r) for r >= 0 without the sign check.
pub(crate) fn los_prob(beta: f64, r: f64) -> f64 {
    if r <= LOS_BALL_RADIUS {
        return 1.0;
    }
    let e = (-beta * r).exp();
    (LOS_BALL_RADIUS / r) * (1.0 - e) + e
}

pub(crate) fn path_prob(beta: f64, r: f64, path: Path) -> f64 {
    let los = los_prob(beta, r);
    match path {
        Path::Los => los,
        Path::Nlos => 1.0 - los,
    }
}

/// P_L(r) = min(18/r, 1)(1 - e^{-βr}) + e^{-βr}.
pub fn los_probability(sys: &SystemParams, r: f64) -> Result<f64> {
    check_distance(r)?;
    Ok(los_prob(sys.beta, r))
}

pub fn nlos_probability(sys: &SystemParams, r: f64) -> Result<f64> {
    Ok(1.0 - los_probability(sys, r)?)
}

pub fn path_probability(sys: &SystemParams, r: f64, path: Path) -> Result<f64> {
    check_distance(r)?;
    Ok(path_prob(sys.beta, r, path))
}

/// Linear path gain A·r^-α of the given path class.
pub fn path_loss(sys: &SystemParams, r: f64, path: Path) -> Result<f64> {
    check_distance(r)?;
    if r == 0.0 {
        return Err(Error::ZeroDistance);
    }
    Ok(sys.intercept(path) * r.powf(-sys.exponent(path)))
}

/// Distance beyond which the LoS gain exceeds the NLoS gain:
/// r_c = (A_NL / A_L)^{1 / (α_NL - α_L)}. `None` if the exponents coincide.
pub fn crossover_distance(sys: &SystemParams) -> Option<f64> {
    let d_alpha = sys.alpha_nlos - sys.alpha_los;
    if d_alpha == 0.0 {
        return None;
    }
    Some((sys.a_nlos / sys.a_los).powf(1.0 / d_alpha))
}

/// 1 - e^{-u}(1 + u), accurate for small u.
fn one_minus_exp_linear(u: f64) -> f64 {
    if u < 0.5 {
        // Σ_{n>=2} (-1)^n (n-1) u^n / n!
        let mut term = u; // u^n / n! at n = 1
        let mut sum = 0.0;
        for n in 2..30 {
            term *= u / n as f64;
            let c = (n - 1) as f64 * term;
            sum += if n % 2 == 0 { c } else { -c };
            if c < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        1.0 - (-u).exp() * (1.0 + u)
    }
}

/// u²/2 - (1 - e^{-u}(1 + u)), accurate for small u.
fn cubic_remainder(u: f64) -> f64 {
    if u < 1.0 {
        // Σ_{n>=3} (-1)^{n+1} (n-1) u^n / n!
        let mut term = u * u / 2.0;
        let mut sum = 0.0;
        for n in 3..40 {
            term *= u / n as f64;
            let c = (n - 1) as f64 * term;
            sum += if n % 2 == 1 { c } else { -c };
            if c < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        0.5 * u * u - one_minus_exp_linear(u)
    }
}

/// ∫_0^d P_X(t) t dt in closed form. 2πλ times this is the mean number of
/// path-class-X BSs of a density-λ tier within distance d of a receiver.
pub fn radial_path_integral(sys: &SystemParams, path: Path, d: f64) -> f64 {
    let d = d.max(0.0);
    match path {
        Path::Los => los_radial_integral(sys.beta, d),
        Path::Nlos => nlos_radial_integral(sys.beta, d),
    }
}

/// 162 + ∫_18^d 18 + (t - 18) e^{-βt} dt. Evaluated directly rather than as
/// d²/2 minus the NLoS part, which cancels badly once blockage is heavy.
fn los_radial_integral(beta: f64, d: f64) -> f64 {
    if d <= LOS_BALL_RADIUS {
        return 0.5 * d * d;
    }
    let span = d - LOS_BALL_RADIUS;
    let u = beta * span;
    // ∫_0^D v e^{-βv} dv = D² · (1 - e^{-u}(1 + u)) / u²
    let ramp = if u < 1e-100 {
        0.5 * span * span
    } else {
        span * span * (one_minus_exp_linear(u) / (u * u))
    };
    0.5 * LOS_BALL_RADIUS * LOS_BALL_RADIUS + LOS_BALL_RADIUS * span + (-beta * LOS_BALL_RADIUS).exp() * ramp
}

/// ∫_18^d (t - 18)(1 - e^{-βt}) dt, split so that both parts are positive.
fn nlos_radial_integral(beta: f64, d: f64) -> f64 {
    if d <= LOS_BALL_RADIUS || beta == 0.0 {
        return 0.0;
    }
    let span = d - LOS_BALL_RADIUS;
    let u = beta * span;
    let decay = (-beta * LOS_BALL_RADIUS).exp();
    0.5 * span * span * -(-beta * LOS_BALL_RADIUS).exp_m1() + decay * cubic_remainder(u) / (beta * beta)
}

/// Void probability of a path-class-X thinned tier inside radius d.
pub fn thinned_void_probability(sys: &SystemParams, tier: Tier, path: Path, d: f64) -> f64 {
    (-2.0 * PI * sys.density(tier) * radial_path_integral(sys, path, d)).exp()
}

/// Density of the distance to the nearest path-class-X BS of a tier.
pub fn nearest_distance_pdf(sys: &SystemParams, tier: Tier, path: Path, mode: DistanceMode, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let lambda = sys.density(tier);
    let void = match mode {
        DistanceMode::Thinned => thinned_void_probability(sys, tier, path, r),
        DistanceMode::Unthinned => (-PI * lambda * r * r).exp(),
    };
    2.0 * PI * lambda * r * path_prob(sys.beta, r, path) * void
}

/// Radius beyond which the nearest-distance density of (tier, path) has
/// less than `tail` probability mass. Capped at `cap`.
pub fn tail_radius(
    sys: &SystemParams,
    tier: Tier,
    path: Path,
    mode: DistanceMode,
    tail: f64,
    cap: f64,
) -> f64 {
    let lambda = sys.density(tier);
    if lambda <= 0.0 {
        return LOS_BALL_RADIUS;
    }
    let needed = -tail.ln();
    let literal = (needed / (PI * lambda)).sqrt();
    match mode {
        DistanceMode::Unthinned => literal.min(cap),
        DistanceMode::Thinned => {
            // Find G_X(R) >= needed / (2πλ) by bracketing and bisection.
            let target = needed / (2.0 * PI * lambda);
            let g = |d: f64| radial_path_integral(sys, path, d);
            let mut hi = literal.max(2.0 * LOS_BALL_RADIUS);
            while g(hi) < target {
                hi *= 2.0;
                if hi >= cap {
                    return cap;
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-9 * hi {
                    break;
                }
            }
            hi.min(cap)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SystemConfig;
    use crate::quadrature::{integrate, Tolerance};
    use proptest::prelude::*;

    fn sys() -> SystemParams {
        SystemParams::default()
    }

    #[test]
    fn los_probability_values() {
        let s = sys();
        assert_eq!(los_probability(&s, 0.0).unwrap(), 1.0);
        assert_eq!(los_probability(&s, 5.0).unwrap(), 1.0);
        assert_eq!(los_probability(&s, 18.0).unwrap(), 1.0);
        // 0.18(1 - e^-2.7) + e^-2.7, mpmath: 0.2351085204465948...
        let p = los_probability(&s, 100.0).unwrap();
        assert!((p - 0.235_108_520_446_594_8).abs() < 1e-15, "{p}");
        assert!(matches!(
            los_probability(&s, -1.0),
            Err(Error::NegativeDistance(_))
        ));
    }

    #[test]
    fn los_probability_non_increasing_beyond_ball() {
        let s = sys();
        let mut prev = 1.0;
        for i in 0..5000 {
            let p = los_probability(&s, 18.0 + i as f64 * 0.7).unwrap();
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn path_loss_values() {
        let s = sys();
        assert_eq!(path_loss(&s, 1.0, Path::Los).unwrap(), 10f64.powf(-10.38));
        assert_eq!(path_loss(&s, 1.0, Path::Nlos).unwrap(), 10f64.powf(-14.54));
        let at10 = path_loss(&s, 10.0, Path::Los).unwrap();
        assert!((at10 / (10f64.powf(-10.38) * 10f64.powf(-2.09)) - 1.0).abs() < 1e-14);
        assert!(matches!(path_loss(&s, 0.0, Path::Los), Err(Error::ZeroDistance)));
        assert!(matches!(
            path_loss(&s, -3.0, Path::Los),
            Err(Error::NegativeDistance(_))
        ));
        let sample = PathSample::new(&s, 10.0, Path::Los).unwrap();
        assert_eq!(sample.loss, at10);
    }

    #[test]
    fn los_beats_nlos_beyond_crossover() {
        let s = sys();
        // (10^-14.54 / 10^-10.38)^(1/1.66) = 10^(-4.16/1.66)
        let rc = crossover_distance(&s).unwrap();
        assert!((rc - 10f64.powf(-4.16 / 1.66)).abs() < 1e-12);
        for r in [rc * 1.001, 1.0, 18.0, 100.0, 1e4] {
            assert!(path_loss(&s, r, Path::Los).unwrap() > path_loss(&s, r, Path::Nlos).unwrap());
        }
        let below = rc * 0.5;
        assert!(path_loss(&s, below, Path::Los).unwrap() < path_loss(&s, below, Path::Nlos).unwrap());
    }

    #[test]
    fn radial_integral_matches_quadrature() {
        let tol = Tolerance::new(1e-12, 1e-13);
        for beta in [0.0, 1e-7, 2.7e-2, 0.5] {
            let s = SystemConfig {
                beta,
                ..SystemConfig::default()
            }
            .validate()
            .unwrap();
            for d in [0.5, 17.9, 18.0, 18.01, 25.0, 100.0, 3000.0, 2e4] {
                for path in Path::ALL {
                    let mut pts = vec![0.0];
                    let mut t = 18.0;
                    while t < d {
                        pts.push(t);
                        t *= 1.5;
                    }
                    pts.push(d);
                    let oracle = integrate(|t| path_prob(beta, t, path) * t, &pts, tol, "G").unwrap();
                    let closed = radial_path_integral(&s, path, d);
                    let err = (closed - oracle.value).abs();
                    assert!(
                        err <= 1e-10 * oracle.value.abs().max(1.0),
                        "beta={beta} d={d} {path:?}: {closed} vs {}",
                        oracle.value
                    );
                }
            }
        }
    }

    #[test]
    fn nearest_distance_pdf_at_origin() {
        let s = sys();
        for mode in [DistanceMode::Thinned, DistanceMode::Unthinned] {
            assert_eq!(nearest_distance_pdf(&s, Tier::Sbs, Path::Los, mode, 0.0), 0.0);
        }
    }

    #[test]
    fn unthinned_pdf_reference_value() {
        // P_L(50) e^{-π·2500·1e-4} 2π·50·1e-4, evaluated in mpmath:
        // 7.53304087039259082597634e-3
        let s = sys();
        let pl = 0.36 + 0.64 * (-1.35f64).exp();
        let expected = pl * (-PI * 0.25).exp() * 2.0 * PI * 50.0 * 1e-4;
        let v = nearest_distance_pdf(&s, Tier::Sbs, Path::Los, DistanceMode::Unthinned, 50.0);
        assert!((v - expected).abs() < 1e-16);
        assert!((v - 7.533_040_870_392_591e-3).abs() < 1e-17, "{v}");
    }

    #[test]
    fn all_los_degenerates_to_rayleigh() {
        let s = SystemConfig {
            beta: 0.0,
            ..SystemConfig::default()
        }
        .validate()
        .unwrap();
        let lambda = s.lambda_s;
        for r in [1.0, 30.0, 80.0, 200.0] {
            let v = nearest_distance_pdf(&s, Tier::Sbs, Path::Los, DistanceMode::Thinned, r);
            let rayleigh = 2.0 * PI * lambda * r * (-PI * lambda * r * r).exp();
            assert!((v - rayleigh).abs() < 1e-15);
            assert_eq!(
                nearest_distance_pdf(&s, Tier::Sbs, Path::Nlos, DistanceMode::Thinned, r),
                0.0
            );
        }
    }

    #[test]
    fn thinned_pdfs_are_normalized() {
        let s = sys();
        let tol = Tolerance::new(1e-12, 1e-10);
        for tier in Tier::ALL {
            for path in Path::ALL {
                let rmax = tail_radius(&s, tier, path, DistanceMode::Thinned, 1e-12, 1e7);
                let mut pts = vec![0.0, 18.0];
                let mut x = 36.0;
                while x < rmax {
                    pts.push(x);
                    x *= 2.0;
                }
                pts.push(rmax);
                let mass = integrate(
                    |r| nearest_distance_pdf(&s, tier, path, DistanceMode::Thinned, r),
                    &pts,
                    tol,
                    "pdf",
                )
                .unwrap();
                // LoS and NLoS points both exist somewhere in the plane, so
                // each nearest-distance density carries unit mass.
                assert!(
                    (mass.value - 1.0).abs() < 1e-6,
                    "{tier:?} {path:?} {}",
                    mass.value
                );
            }
        }
    }

    #[test]
    fn unthinned_pdfs_split_unit_mass() {
        // Literal densities are the joint law of (nearest distance, path of
        // that nearest BS), so LoS + NLoS integrates to one.
        let s = sys();
        let tol = Tolerance::new(1e-12, 1e-10);
        for tier in Tier::ALL {
            let rmax = tail_radius(&s, tier, Path::Los, DistanceMode::Unthinned, 1e-14, 1e7);
            let total = integrate(
                |r| {
                    Path::ALL
                        .iter()
                        .map(|&p| nearest_distance_pdf(&s, tier, p, DistanceMode::Unthinned, r))
                        .sum()
                },
                &[0.0, 18.0, rmax / 4.0, rmax],
                tol,
                "literal",
            )
            .unwrap();
            assert!((total.value - 1.0).abs() < 1e-8, "{}", total.value);
        }
    }

    proptest! {
        #[test]
        fn los_and_nlos_probabilities_sum_to_one(r in 0.0f64..1e6, beta in 0.0f64..1.0) {
            let s = SystemConfig { beta, ..SystemConfig::default() }.validate().unwrap();
            let l = los_probability(&s, r).unwrap();
            let n = nlos_probability(&s, r).unwrap();
            prop_assert!((0.0..=1.0).contains(&l));
            prop_assert_eq!(l + n, 1.0);
        }

        #[test]
        fn path_loss_strictly_decreasing(r in 0.01f64..1e5, dr in 1e-3f64..100.0) {
            let s = sys();
            for path in Path::ALL {
                prop_assert!(path_loss(&s, r + dr, path).unwrap() < path_loss(&s, r, path).unwrap());
            }
        }
    }
}
