use std::path::Path;

use mabnet_core::apt::{cache_grid, eta_grid, optimize_eta_with, AptBreakdown};
use mabnet_core::coverage::{coverage, CoverageResult};
use mabnet_core::params::{db_to_linear, max_feasible_cache_size, FOUR_MEGABIT_FILE_SIZE_BITS};
use mabnet_core::{CacheConfig, CaseCoupling, DistanceMode, Network, SystemConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{write_csv, CliError, Column, FileEntry, Manifest};

const MODE: DistanceMode = DistanceMode::Thinned;
const COUPLING: CaseCoupling = CaseCoupling::Matched;
const GAMMA0_DB: f64 = 10.0;
const ETA_POINTS: usize = 41;

#[derive(Debug, Clone, Copy)]
pub struct FigureOptions {
    /// Coarser cache and threshold grids.
    pub quick: bool,
}

fn network(lambda_m: f64, cache: CacheConfig) -> Result<Network, CliError> {
    let sys = SystemConfig {
        lambda_m,
        ..SystemConfig::default()
    }
    .validate()
    .map_err(numerical)?;
    Network::new(sys, cache.validate().map_err(numerical)?).map_err(numerical)
}

fn numerical(e: mabnet_core::Error) -> CliError {
    CliError::Numerical(e)
}

fn cov(net: &Network, gamma: f64) -> Result<CoverageResult, CliError> {
    coverage(net, gamma, MODE).map_err(numerical)
}

fn compose(net: &Network, c: &CoverageResult, eta: f64) -> Result<AptBreakdown, CliError> {
    AptBreakdown::compose(net, c, eta, c.gamma, COUPLING).map_err(numerical)
}

#[derive(Debug, Serialize)]
struct Fig2Row {
    lambda_m: f64,
    file_size_bits: f64,
    cache_size: u64,
    hit_ratio: f64,
    eta_opt: f64,
    r_total_opt: f64,
    tie: bool,
}

fn fig2() -> Result<Vec<Fig2Row>, CliError> {
    let g = db_to_linear(GAMMA0_DB);
    let mut jobs = Vec::new();
    for lambda_m in [1e-5, 2e-5, 5e-5] {
        for cache_size in [100, 200, 300, 400] {
            jobs.push((lambda_m, cache_size));
        }
    }
    jobs.par_iter()
        .map(|&(lambda_m, cache_size)| {
            let net = network(
                lambda_m,
                CacheConfig {
                    cache_size,
                    ..CacheConfig::four_megabit()
                },
            )?;
            let opt = optimize_eta_with(&net, &cov(&net, g)?, g, ETA_POINTS, COUPLING).map_err(numerical)?;
            Ok(Fig2Row {
                lambda_m,
                file_size_bits: FOUR_MEGABIT_FILE_SIZE_BITS,
                cache_size,
                hit_ratio: net.hit_ratio(),
                eta_opt: opt.eta,
                r_total_opt: opt.apt,
                tie: opt.tie,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct Fig3Row {
    cache_size: u64,
    file_size_bits: f64,
    point: &'static str,
    eta: f64,
    r_total: f64,
    r_sbs: f64,
    r_mbs: f64,
}

fn fig3() -> Result<Vec<Fig3Row>, CliError> {
    let g = db_to_linear(GAMMA0_DB);
    let mut rows = Vec::new();
    for cache_size in [0, 100] {
        let net = network(
            1e-5,
            CacheConfig {
                cache_size,
                ..CacheConfig::default()
            },
        )?;
        let c = cov(&net, g)?;
        let row = |point, b: AptBreakdown| Fig3Row {
            cache_size,
            file_size_bits: net.cache().file_size_bits,
            point,
            eta: b.eta,
            r_total: b.r_total,
            r_sbs: b.r_sbs,
            r_mbs: b.r_mbs,
        };
        for eta in eta_grid(ETA_POINTS).map_err(numerical)? {
            rows.push(row("grid", compose(&net, &c, eta)?));
        }
        let opt = optimize_eta_with(&net, &c, g, ETA_POINTS, COUPLING).map_err(numerical)?;
        rows.push(row("optimum", opt.breakdown));
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct Fig4Row {
    file_size_bits: f64,
    eta: f64,
    cache_size: u64,
    max_feasible_cache_size: u64,
    sbs_tx_power_w: f64,
    hit_ratio: f64,
    r_total: f64,
    r_sbs: f64,
    r_mbs: f64,
}

fn fig4(opts: FigureOptions) -> Result<Vec<Fig4Row>, CliError> {
    let g = db_to_linear(GAMMA0_DB);
    let etas = [0.3, 0.5, 0.8];
    let mut rows = Vec::new();
    for profile in [CacheConfig::four_megabit(), CacheConfig::default()] {
        let base = network(1e-5, profile)?;
        let points = if opts.quick { 10 } else { 100 };
        let c_max = max_feasible_cache_size(base.sys(), base.cache()).unwrap_or(0);
        let (grid, c_max) = cache_grid(&base, (c_max / points).max(1)).map_err(numerical)?;
        let per_cache = grid
            .par_iter()
            .map(|&c| {
                let net = base.with_cache_size(c).map_err(numerical)?;
                let cv = cov(&net, g)?;
                Ok((net, cv))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        for &eta in &etas {
            for (net, cv) in &per_cache {
                let b = compose(net, cv, eta)?;
                rows.push(Fig4Row {
                    file_size_bits: net.cache().file_size_bits,
                    eta,
                    cache_size: net.cache().cache_size,
                    max_feasible_cache_size: c_max,
                    sbs_tx_power_w: net.tx_power(mabnet_core::Tier::Sbs),
                    hit_ratio: net.hit_ratio(),
                    r_total: b.r_total,
                    r_sbs: b.r_sbs,
                    r_mbs: b.r_mbs,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct Fig5Row {
    series: String,
    eta: f64,
    cache_size: u64,
    gamma0_db: f64,
    gamma0_linear: f64,
    r_total: f64,
    r_sbs: f64,
    r_mbs: f64,
}

fn fig5(opts: FigureOptions) -> Result<Vec<Fig5Row>, CliError> {
    let step = if opts.quick { 5 } else { 1 };
    let thresholds: Vec<f64> = (0..=25).step_by(step).map(f64::from).collect();
    let g10 = db_to_linear(GAMMA0_DB);
    let nets = [
        network(
            1e-5,
            CacheConfig {
                cache_size: 0,
                ..CacheConfig::default()
            },
        )?,
        network(1e-5, CacheConfig::default())?,
    ];
    // Series: each cache size at its own optimum for 10 dB, and at η = 0.5.
    let mut series = Vec::new();
    for net in &nets {
        let opt = optimize_eta_with(net, &cov(net, g10)?, g10, ETA_POINTS, COUPLING).map_err(numerical)?;
        series.push((net, opt.eta, "opt"));
    }
    for net in &nets {
        series.push((net, 0.5, "fixed"));
    }
    let covs = nets
        .par_iter()
        .map(|net| {
            thresholds
                .iter()
                .map(|&db| cov(net, db_to_linear(db)))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut rows = Vec::new();
    for (net, eta, kind) in series {
        let k = nets.iter().position(|n| n == net).unwrap();
        let c = net.cache().cache_size;
        for (t, &db) in thresholds.iter().enumerate() {
            let b = compose(net, &covs[k][t], eta)?;
            rows.push(Fig5Row {
                series: format!("c{c}_{kind}"),
                eta,
                cache_size: c,
                gamma0_db: db,
                gamma0_linear: covs[k][t].gamma,
                r_total: b.r_total,
                r_sbs: b.r_sbs,
                r_mbs: b.r_mbs,
            });
        }
    }
    Ok(rows)
}

fn schema(fig: u8) -> Vec<Column> {
    let c = Column::new;
    match fig {
        2 => vec![
            c("lambda_m", "MBS density, 1/m^2 (series)"),
            c("file_size_bits", "file size of the cache profile, bit"),
            c("cache_size", "files cached per SBS"),
            c("hit_ratio", "SBS cache hit ratio"),
            c("eta_opt", "APT-maximizing access share of the band"),
            c("r_total_opt", "APT at eta_opt, bit/s/m^2"),
            c("tie", "several grid points share the maximum"),
        ],
        3 => vec![
            c("cache_size", "files cached per SBS (series; 0 = no cache)"),
            c("file_size_bits", "file size of the cache profile, bit"),
            c("point", "`grid`, or `optimum` for the refined maximizer"),
            c("eta", "access share of the band"),
            c("r_total", "APT, bit/s/m^2"),
            c("r_sbs", "SBS-tier APT, bit/s/m^2"),
            c("r_mbs", "MBS-tier APT, bit/s/m^2"),
        ],
        4 => vec![
            c("file_size_bits", "file size of the cache profile, bit (panel)"),
            c("eta", "access share of the band (series)"),
            c("cache_size", "files cached per SBS"),
            c(
                "max_feasible_cache_size",
                "largest cache size the SBS power budget allows",
            ),
            c("sbs_tx_power_w", "SBS transmit power, W"),
            c("hit_ratio", "SBS cache hit ratio"),
            c("r_total", "APT, bit/s/m^2"),
            c("r_sbs", "SBS-tier APT, bit/s/m^2"),
            c("r_mbs", "MBS-tier APT, bit/s/m^2"),
        ],
        _ => vec![
            c(
                "series",
                "c<cache size>_opt (eta optimal at 10 dB) or c<cache size>_fixed (eta 0.5)",
            ),
            c("eta", "access share of the band"),
            c("cache_size", "files cached per SBS"),
            c("gamma0_db", "SINR threshold, dB"),
            c("gamma0_linear", "SINR threshold, linear"),
            c("r_total", "APT, bit/s/m^2"),
            c("r_sbs", "SBS-tier APT, bit/s/m^2"),
            c("r_mbs", "MBS-tier APT, bit/s/m^2"),
        ],
    }
}

pub fn figures(out_dir: &Path, opts: FigureOptions) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let mut manifest = Manifest {
        command: if opts.quick { "figures --quick" } else { "figures" }.to_string(),
        ..Manifest::new()
    };
    let mut emit = |fig: u8, n: usize| {
        let name = format!("fig{fig}.csv");
        println!("wrote {n} rows to {}", out_dir.join(&name).display());
        manifest.files.push(FileEntry::csv(&name, n, schema(fig)));
    };
    let r2 = fig2()?;
    write_csv(&out_dir.join("fig2.csv"), &r2)?;
    emit(2, r2.len());
    let r3 = fig3()?;
    write_csv(&out_dir.join("fig3.csv"), &r3)?;
    emit(3, r3.len());
    let r4 = fig4(opts)?;
    write_csv(&out_dir.join("fig4.csv"), &r4)?;
    emit(4, r4.len());
    let r5 = fig5(opts)?;
    write_csv(&out_dir.join("fig5.csv"), &r5)?;
    emit(5, r5.len());
    manifest.write(out_dir)
}
