use std::path::{Path, PathBuf};

use mabnet_core::apt::AptBreakdown;
use mabnet_core::coverage::coverage;
use mabnet_core::montecarlo::{mc_apt_multi, McApt};
use mabnet_core::{Error as CoreError, Network, Serving};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, Axis, Point, Resolved};
use crate::output::{self, CliError, Column, Manifest};

/// One record of the results CSV: one grid point evaluated by one engine.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Row {
    pub axis: String,
    pub axis_value: Option<f64>,
    pub axis_linear: Option<f64>,
    pub engine: String,
    pub eta: Option<f64>,
    pub cache_size: Option<u64>,
    pub gamma0_db: Option<f64>,
    pub gamma0_linear: Option<f64>,
    pub hit_ratio: Option<f64>,
    pub r_total: Option<f64>,
    pub r_total_stderr: Option<f64>,
    pub r_sbs: Option<f64>,
    pub r_sbs_stderr: Option<f64>,
    pub r_mbs: Option<f64>,
    pub r_mbs_stderr: Option<f64>,
    pub case_ll: Option<f64>,
    pub case_ln: Option<f64>,
    pub case_nl: Option<f64>,
    pub case_nn: Option<f64>,
    pub binding_ll: Option<String>,
    pub binding_ln: Option<String>,
    pub binding_nl: Option<String>,
    pub binding_nn: Option<String>,
    pub cov_sbs_los: Option<f64>,
    pub cov_sbs_nlos: Option<f64>,
    pub cov_mbs_los: Option<f64>,
    pub cov_mbs_nlos: Option<f64>,
    pub cov_bh_los: Option<f64>,
    pub cov_bh_nlos: Option<f64>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub status: String,
    pub message: Option<String>,
}

pub fn columns() -> Vec<Column> {
    let c = Column::new;
    vec![
        c("axis", "swept parameter, or `none`"),
        c("axis_value", "grid value as written in the config"),
        c("axis_linear", "grid value in linear units (dB axes converted)"),
        c("engine", "`analytical` or `montecarlo`"),
        c("eta", "access share of the band"),
        c("cache_size", "files cached per SBS"),
        c("gamma0_db", "SINR threshold, dB"),
        c("gamma0_linear", "SINR threshold, linear"),
        c("hit_ratio", "SBS cache hit ratio"),
        c("r_total", "APT, bit/s/m^2"),
        c("r_total_stderr", "Monte Carlo standard error of r_total"),
        c("r_sbs", "SBS-tier APT, bit/s/m^2"),
        c("r_sbs_stderr", "Monte Carlo standard error of r_sbs"),
        c("r_mbs", "MBS-tier APT, bit/s/m^2"),
        c("r_mbs_stderr", "Monte Carlo standard error of r_mbs"),
        c("case_ll", "SBS rate with LoS access and LoS backhaul, bit/s/m^2"),
        c("case_ln", "SBS rate with LoS access and NLoS backhaul, bit/s/m^2"),
        c("case_nl", "SBS rate with NLoS access and LoS backhaul, bit/s/m^2"),
        c(
            "case_nn",
            "SBS rate with NLoS access and NLoS backhaul, bit/s/m^2",
        ),
        c("binding_ll", "side of the min that binds in case ll"),
        c("binding_ln", "side of the min that binds in case ln"),
        c("binding_nl", "side of the min that binds in case nl"),
        c("binding_nn", "side of the min that binds in case nn"),
        c("cov_sbs_los", "P(served by a LoS SBS and SINR >= gamma0)"),
        c("cov_sbs_nlos", "P(served by an NLoS SBS and SINR >= gamma0)"),
        c("cov_mbs_los", "P(served by a LoS MBS and SINR >= gamma0)"),
        c("cov_mbs_nlos", "P(served by an NLoS MBS and SINR >= gamma0)"),
        c("cov_bh_los", "P(LoS backhaul and SINR >= gamma0)"),
        c("cov_bh_nlos", "P(NLoS backhaul and SINR >= gamma0)"),
        c("n", "Monte Carlo realizations"),
        c("seed", "Monte Carlo seed"),
        c(
            "status",
            "`ok`, or `failed` on the marker row after a numerical failure",
        ),
        c("message", "error text on a failure marker row"),
    ]
}

fn base_row(axis: Option<Axis>, p: &Point, engine: &str) -> Row {
    Row {
        axis: axis.map_or("none", Axis::name).to_string(),
        axis_value: p.axis_value,
        axis_linear: p.axis_linear,
        engine: engine.to_string(),
        eta: Some(p.eta),
        cache_size: Some(p.net.cache().cache_size),
        gamma0_db: Some(p.gamma0_db),
        gamma0_linear: Some(p.gamma0),
        hit_ratio: Some(p.net.hit_ratio()),
        status: "ok".to_string(),
        ..Row::default()
    }
}

fn binding_name(b: mabnet_core::Binding) -> String {
    match b {
        mabnet_core::Binding::AccessLimited => "access",
        mabnet_core::Binding::BackhaulLimited => "backhaul",
    }
    .to_string()
}

fn analytical_row(resolved: &Resolved, p: &Point) -> Result<Row, CoreError> {
    let sweep = &resolved.config.sweep;
    let cov = coverage(&p.net, p.gamma0, sweep.distance_mode)?;
    let b = AptBreakdown::compose(&p.net, &cov, p.eta, p.gamma0, sweep.coupling)?;
    let mut row = base_row(sweep.axis, p, "analytical");
    row.r_total = Some(b.r_total);
    row.r_sbs = Some(b.r_sbs);
    row.r_mbs = Some(b.r_mbs);
    [row.case_ll, row.case_ln, row.case_nl, row.case_nn] = b.cases.map(Some);
    [row.binding_ll, row.binding_ln, row.binding_nl, row.binding_nn] =
        b.binding.map(|x| Some(binding_name(x)));
    let c = |s| Some(cov.get(s));
    row.cov_sbs_los = c(Serving::ALL[0]);
    row.cov_sbs_nlos = c(Serving::ALL[1]);
    row.cov_mbs_los = c(Serving::ALL[2]);
    row.cov_mbs_nlos = c(Serving::ALL[3]);
    row.cov_bh_los = c(Serving::ALL[4]);
    row.cov_bh_nlos = c(Serving::ALL[5]);
    Ok(row)
}

fn mc_row(resolved: &Resolved, p: &Point, est: &McApt) -> Row {
    let mut row = base_row(resolved.config.sweep.axis, p, "montecarlo");
    row.r_total = Some(est.r_total.estimate);
    row.r_total_stderr = est.r_total.stderr;
    row.r_sbs = Some(est.r_sbs.estimate);
    row.r_sbs_stderr = est.r_sbs.stderr;
    row.r_mbs = Some(est.r_mbs.estimate);
    row.r_mbs_stderr = est.r_mbs.stderr;
    [row.case_ll, row.case_ln, row.case_nl, row.case_nn] = est.cases.map(|e| Some(e.estimate));
    row.n = Some(est.r_total.n);
    row.seed = Some(est.r_total.seed);
    row
}

/// Monte Carlo rows in grid order. Points that share the system parameters
/// and threshold are simulated together on common realizations.
fn mc_rows(resolved: &Resolved) -> Vec<Result<Row, CoreError>> {
    let cfg = &resolved.config.mc;
    let coupling = resolved.config.sweep.coupling;
    let points = &resolved.points;
    let mut rows: Vec<Option<Result<Row, CoreError>>> = vec![None; points.len()];
    let mut done = vec![false; points.len()];
    for i in 0..points.len() {
        if done[i] {
            continue;
        }
        // Group every later point with the same system and threshold.
        let group: Vec<usize> = (i..points.len())
            .filter(|&j| {
                !done[j] && points[j].net.sys() == points[i].net.sys() && points[j].gamma0 == points[i].gamma0
            })
            .collect();
        let mut nets: Vec<Network> = Vec::new();
        let mut etas: Vec<f64> = Vec::new();
        for &j in &group {
            if !nets.contains(&points[j].net) {
                nets.push(points[j].net.clone());
            }
            if !etas.contains(&points[j].eta) {
                etas.push(points[j].eta);
            }
        }
        let result = mc_apt_multi(&nets, &etas, points[i].gamma0, cfg, coupling);
        for &j in &group {
            done[j] = true;
            rows[j] = Some(match &result {
                Ok(est) => {
                    let n = nets.iter().position(|x| *x == points[j].net).unwrap();
                    let e = etas.iter().position(|&x| x == points[j].eta).unwrap();
                    Ok(mc_row(resolved, &points[j], &est[n][e]))
                }
                Err(err) => Err(err.clone()),
            });
        }
    }
    rows.into_iter()
        .map(|r| r.expect("every point simulated"))
        .collect()
}

/// Evaluate every engine over the grid. Records are in grid order with the
/// analytical row first; evaluation stops at the first failure.
pub fn evaluate(resolved: &Resolved) -> Vec<Result<Row, CoreError>> {
    let engines = resolved.config.sweep.engines;
    let analytical: Vec<Result<Row, CoreError>> = if engines.analytical() {
        resolved
            .points
            .par_iter()
            .map(|p| analytical_row(resolved, p))
            .collect()
    } else {
        Vec::new()
    };
    let mc = if engines.montecarlo() {
        mc_rows(resolved)
    } else {
        Vec::new()
    };
    let mut out = Vec::new();
    let mut a = analytical.into_iter();
    let mut m = mc.into_iter();
    for _ in &resolved.points {
        for r in [a.next(), m.next()].into_iter().flatten() {
            let failed = r.is_err();
            out.push(r);
            if failed {
                return out;
            }
        }
    }
    out
}

pub fn failure_row(err: &CoreError) -> Row {
    Row {
        axis: String::new(),
        engine: String::new(),
        status: "failed".to_string(),
        message: Some(err.to_string()),
        ..Row::default()
    }
}

/// Write rows, replacing the first error by a failure marker row. Returns the
/// error, if any, after the file is complete.
pub fn write_rows(
    path: &Path,
    rows: Vec<Result<Row, CoreError>>,
) -> Result<(usize, Option<CoreError>), CliError> {
    let mut writer = output::csv_writer(path)?;
    let mut written = 0;
    let mut failure = None;
    for r in rows {
        match r {
            Ok(row) => writer.serialize(&row).map_err(CliError::csv(path))?,
            Err(e) => {
                writer.serialize(failure_row(&e)).map_err(CliError::csv(path))?;
                failure = Some(e);
            }
        }
        written += 1;
    }
    writer.flush().map_err(CliError::io(path))?;
    Ok((written, failure))
}

pub fn run(config_path: &Path, out_dir: &Path) -> Result<(), CliError> {
    let resolved = config::load(config_path).map_err(CliError::Config)?;
    std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
    let results: PathBuf = out_dir.join(&resolved.config.sweep.output);
    let resolved_path = out_dir.join("resolved_config.toml");
    std::fs::write(&resolved_path, config::to_toml(&resolved.config))
        .map_err(CliError::io(&resolved_path))?;

    let (rows, failure) = write_rows(&results, evaluate(&resolved))?;
    let manifest = Manifest {
        command: "run".to_string(),
        config: Some(config_path.display().to_string()),
        seed: Some(resolved.config.mc.seed),
        status: if failure.is_some() { "failed" } else { "ok" }.to_string(),
        files: vec![
            output::FileEntry::csv(&resolved.config.sweep.output, rows, columns()),
            output::FileEntry::plain(
                "resolved_config.toml",
                "every setting of the run, defaults included",
            ),
        ],
        ..Manifest::new()
    };
    manifest.write(out_dir)?;
    match failure {
        Some(e) => Err(CliError::Numerical(e)),
        None => {
            println!("wrote {} rows to {}", rows, results.display());
            Ok(())
        }
    }
}
