use std::path::Path;

use mabnet_core::apt::apt_total;
use mabnet_core::association::association_masses;
use mabnet_core::coverage::coverage;
use mabnet_core::montecarlo::{golden_rows, mc_apt, mc_coverage, McEstimate};
use mabnet_core::params::db_to_linear;
use mabnet_core::Serving;
use serde::Serialize;

use crate::config::{self, Axis};
use crate::output::{write_csv, CliError, Column, FileEntry, Manifest};

const DEFAULT_THRESHOLDS_DB: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];

#[derive(Debug, Serialize)]
struct CompareRow {
    quantity: &'static str,
    class: String,
    gamma_db: Option<f64>,
    gamma_linear: Option<f64>,
    analytical: f64,
    analytical_abs_error: Option<f64>,
    montecarlo: f64,
    mc_stderr: Option<f64>,
    abs_diff: f64,
    z: Option<f64>,
    n: usize,
    seed: u64,
}

fn row(
    quantity: &'static str,
    class: String,
    gamma_db: Option<f64>,
    analytical: f64,
    analytical_abs_error: Option<f64>,
    mc: &McEstimate,
) -> CompareRow {
    let z = mc.z_score(analytical);
    CompareRow {
        quantity,
        class,
        gamma_db,
        gamma_linear: gamma_db.map(db_to_linear),
        analytical,
        analytical_abs_error,
        montecarlo: mc.estimate,
        mc_stderr: mc.stderr,
        abs_diff: (analytical - mc.estimate).abs(),
        z: z.is_finite().then_some(z),
        n: mc.n,
        seed: mc.seed,
    }
}

fn columns() -> Vec<Column> {
    let c = Column::new;
    vec![
        c("quantity", "`association`, `coverage` or `apt`"),
        c("class", "serving link class, or the APT part (total, sbs, mbs)"),
        c("gamma_db", "SINR threshold, dB (empty for association)"),
        c("gamma_linear", "SINR threshold, linear"),
        c("analytical", "analytical value"),
        c("analytical_abs_error", "quadrature error estimate"),
        c("montecarlo", "Monte Carlo estimate"),
        c("mc_stderr", "Monte Carlo standard error"),
        c("abs_diff", "|analytical - montecarlo|"),
        c("z", "abs_diff in standard errors"),
        c("n", "Monte Carlo realizations"),
        c("seed", "Monte Carlo seed"),
    ]
}

pub fn mc_compare(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let resolved = config::load(config_path).map_err(CliError::Config)?;
    let cfg = &resolved.config;
    let net = &resolved.points[0].net;
    let sweep = &cfg.sweep;
    let thresholds_db: Vec<f64> = if sweep.axis == Some(Axis::Gamma0Db) {
        resolved.points.iter().map(|p| p.gamma0_db).collect()
    } else {
        DEFAULT_THRESHOLDS_DB.to_vec()
    };
    let gammas: Vec<f64> = thresholds_db.iter().map(|&d| db_to_linear(d)).collect();
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;

    let num = CliError::Numerical;
    let est = mc_coverage(net, &gammas, &cfg.mc).map_err(num)?;
    let masses = association_masses(net, sweep.distance_mode).map_err(num)?;
    let mut rows = Vec::new();
    for (k, s) in Serving::ALL.iter().enumerate() {
        rows.push(row(
            "association",
            s.name(),
            None,
            masses.get(*s),
            Some(masses.abs_error),
            &est.association[k],
        ));
    }
    let mut worst: f64 = 0.0;
    for (g, &db) in thresholds_db.iter().enumerate() {
        let an = coverage(net, gammas[g], sweep.distance_mode).map_err(num)?;
        for (k, s) in Serving::ALL.iter().enumerate() {
            let r = row(
                "coverage",
                s.name(),
                Some(db),
                an.get(*s),
                Some(an.abs_error(*s)),
                &est.coverage[g][k],
            );
            worst = worst.max(r.abs_diff);
            rows.push(r);
        }
    }
    let g0 = db_to_linear(sweep.gamma0_db);
    let eta = cfg.partition.eta;
    let an = apt_total(net, eta, g0, sweep.distance_mode, sweep.coupling).map_err(num)?;
    let mc = mc_apt(net, eta, g0, &cfg.mc, sweep.coupling).map_err(num)?;
    for (class, a, m) in [
        ("total", an.r_total, &mc.r_total),
        ("sbs", an.r_sbs, &mc.r_sbs),
        ("mbs", an.r_mbs, &mc.r_mbs),
    ] {
        rows.push(row("apt", class.to_string(), Some(sweep.gamma0_db), a, None, m));
    }

    write_csv(&out_dir.join("mc_compare.csv"), &rows)?;
    let golden = golden_rows(&est, &thresholds_db);
    write_csv(&out_dir.join("mc_golden.csv"), &golden)?;
    let manifest = Manifest {
        command: "mc-compare".to_string(),
        config: Some(config_path.display().to_string()),
        seed: Some(cfg.mc.seed),
        files: vec![
            FileEntry::csv("mc_compare.csv", rows.len(), columns()),
            FileEntry::csv(
                "mc_golden.csv",
                golden.len(),
                vec![
                    Column::new("quantity", "`association`, `coverage` or `cache_miss`"),
                    Column::new("class", "serving link class"),
                    Column::new("gamma_db", "SINR threshold, dB"),
                    Column::new("estimate", "Monte Carlo estimate"),
                    Column::new("stderr", "standard error"),
                    Column::new("n", "realizations"),
                    Column::new("seed", "seed"),
                ],
            ),
        ],
        ..Manifest::new()
    };
    manifest.write(out_dir)?;
    let apt_rel = (an.r_total - mc.r_total.estimate) / mc.r_total.estimate;
    println!(
        "max |coverage difference| {worst:.3e}; APT analytical {:.4} vs Monte Carlo {:.4} ({:+.2}%)",
        an.r_total,
        mc.r_total.estimate,
        100.0 * apt_rel
    );
    Ok(())
}
