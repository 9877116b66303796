use mabnet_core::apt::{apt_total, AptBreakdown};
use mabnet_core::association::association_masses;
use mabnet_core::caching::PopularityProfile;
use mabnet_core::coverage::{coverage, laplace_interference};
use mabnet_core::params::{max_feasible_cache_size, mbs_tx_power, sbs_tx_power};
use mabnet_core::{
    Binding, CacheConfig, CaseCoupling, CoverageResult, DistanceMode, Network, NoiseModel, Serving,
    SystemConfig,
};
use proptest::prelude::*;

const MODE: DistanceMode = DistanceMode::Thinned;

fn four_megabit(cache_size: u64) -> CacheConfig {
    CacheConfig {
        cache_size,
        ..CacheConfig::four_megabit()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sbs_power_is_affine_and_decreasing(c in 0u64..899) {
        let sys = SystemConfig::default().validate().unwrap();
        let p = |c| sbs_tx_power(&sys, &four_megabit(c).validate().unwrap()).unwrap();
        let cfg = CacheConfig::four_megabit();
        let slope = -cfg.w_ca * cfg.file_size_bits / sys.rho_s;
        let step = p(c + 1) - p(c);
        prop_assert!(step < 0.0);
        prop_assert!((step - slope).abs() <= 1e-12 * slope.abs().max(p(c)));
    }

    #[test]
    fn mbs_power_ignores_cache(c in 0u64..900) {
        let sys = SystemConfig::default().validate().unwrap();
        let base = mbs_tx_power(&sys, &four_megabit(0).validate().unwrap()).unwrap();
        prop_assert_eq!(mbs_tx_power(&sys, &four_megabit(c).validate().unwrap()).unwrap(), base);
    }

    #[test]
    fn infeasible_cache_is_rejected(extra in 0u64..10_000) {
        let sys = SystemConfig::default().validate().unwrap();
        let c_max = max_feasible_cache_size(&sys, &four_megabit(0).validate().unwrap()).unwrap();
        let cache = CacheConfig { library_size: 20_000, ..four_megabit(c_max + 1 + extra) };
        prop_assert!(Network::new(sys, cache.validate().unwrap()).is_err());
    }

    #[test]
    fn invalid_system_fields_fail(field in 0usize..6, v in prop_oneof![Just(f64::NAN), -1e3f64..0.0]) {
        let mut cfg = SystemConfig::default();
        match field {
            0 => cfg.lambda_m = v,
            1 => cfg.total_bandwidth_hz = v,
            2 => cfg.alpha_los = v,
            3 => cfg.p_tot_s = v,
            4 => cfg.rho_m = v,
            _ => cfg.bias_s = v,
        }
        prop_assert!(cfg.validate().is_err());
    }

    #[test]
    fn hit_ratio_is_concave(library in 2u64..600, exponent in 0.05f64..2.0) {
        let cache = CacheConfig { library_size: library, cache_size: 1, zipf_exponent: exponent, ..CacheConfig::default() };
        let profile = PopularityProfile::new(&cache.validate().unwrap());
        let h: Vec<f64> = (0..=library).map(|c| profile.hit_ratio(c).unwrap()).collect();
        prop_assert_eq!(h[0], 0.0);
        prop_assert_eq!(h[library as usize], 1.0);
        prop_assert!(h.windows(3).all(|w| w[2] - w[1] <= w[1] - w[0] + 1e-15));
    }

    #[test]
    fn min_composition_and_binding(
        access in proptest::array::uniform4(0.0f64..1.0),
        backhaul in proptest::array::uniform2(0.0f64..1.0),
        eta in 0.0f64..=1.0,
        c in 0u64..1000,
    ) {
        let net = Network::new(
            SystemConfig::default().validate().unwrap(),
            four_megabit(c.min(899)).validate().unwrap(),
        ).unwrap();
        let cov = CoverageResult {
            gamma: 10.0,
            values: [access[0], access[1], access[2], access[3], backhaul[0], backhaul[1]],
            abs_errors: [0.0; 6],
        };
        let b = AptBreakdown::compose(&net, &cov, eta, 10.0, CaseCoupling::Matched).unwrap();
        for i in 0..4 {
            prop_assert_eq!(b.cases[i], b.access_terms[i].min(b.backhaul_terms[i]));
            let expected = if b.access_terms[i] <= b.backhaul_terms[i] { Binding::AccessLimited } else { Binding::BackhaulLimited };
            prop_assert_eq!(b.binding[i], expected);
        }
        prop_assert!((b.r_total - b.r_sbs - b.r_mbs).abs() <= 1e-12 * b.r_total.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn association_masses_are_scale_invariant(k in 1e-3f64..1e3) {
        let base = SystemConfig { noise: NoiseModel::ConstantWatts { watts: 1e-12 }, ..SystemConfig::default() };
        let scaled = SystemConfig {
            p_tot_s: base.p_tot_s * k,
            p_fc_s: base.p_fc_s * k,
            p_tot_m: base.p_tot_m * k,
            p_fc_m: base.p_fc_m * k,
            noise: NoiseModel::ConstantWatts { watts: 1e-12 * k },
            ..base.clone()
        };
        let cache = CacheConfig::default();
        let scaled_cache = CacheConfig { w_ca: cache.w_ca * k, ..cache.clone() };
        let a = association_masses(&Network::new(base.validate().unwrap(), cache.validate().unwrap()).unwrap(), MODE).unwrap();
        let b = association_masses(&Network::new(scaled.validate().unwrap(), scaled_cache.validate().unwrap()).unwrap(), MODE).unwrap();
        for s in Serving::ALL {
            prop_assert!((a.get(s) - b.get(s)).abs() < 1e-9, "{} {} {}", s.name(), a.get(s), b.get(s));
        }
    }

    #[test]
    fn coverage_is_monotone_in_threshold(lo_db in -20.0f64..30.0, step_db in 0.1f64..20.0) {
        let net = Network::reference();
        let lo = coverage(&net, 10f64.powf(lo_db / 10.0), MODE).unwrap();
        let hi = coverage(&net, 10f64.powf((lo_db + step_db) / 10.0), MODE).unwrap();
        for k in 0..6 {
            prop_assert!(hi.values[k] <= lo.values[k] + 1e-12);
        }
    }

    #[test]
    fn laplace_is_a_decreasing_probability(r in 1.0f64..500.0, s1 in 0.0f64..1e14, f in 1.0f64..100.0) {
        let net = Network::reference();
        for serving in Serving::ALL {
            if serving.class().path == mabnet_core::Path::Nlos && r <= 18.0 {
                continue;
            }
            let a = laplace_interference(&net, serving, r, s1).unwrap();
            let b = laplace_interference(&net, serving, r, s1 * f).unwrap();
            prop_assert!(a > 0.0 && a <= 1.0);
            prop_assert!(b <= a + 1e-12);
        }
    }

    #[test]
    fn rate_per_spectral_efficiency_is_non_increasing(g_db in -10.0f64..25.0, d_db in 0.5f64..10.0, eta in 0.05f64..0.95) {
        let net = Network::reference();
        let f = |db: f64| {
            let g = 10f64.powf(db / 10.0);
            apt_total(&net, eta, g, MODE, CaseCoupling::Matched).unwrap().r_total / (1.0 + g).log2()
        };
        prop_assert!(f(g_db + d_db) <= f(g_db) * (1.0 + 1e-9));
    }
}

#[test]
fn cache_gain_at_each_optimum() {
    let g = 10.0;
    let cached = Network::reference();
    let plain = cached.with_cache_size(0).unwrap();
    let opt = |n: &Network| mabnet_core::apt::optimize_eta(n, g, 41, MODE, CaseCoupling::Matched).unwrap();
    assert!(opt(&cached).apt > opt(&plain).apt);
}
