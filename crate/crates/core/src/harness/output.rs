//! Versioned CSV schemas and the per-run manifest.
//!
//! Data files contain no timing information, so identical configurations
//! and seeds produce byte-identical CSVs; wall time goes to the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{BalanceLedger, BoundResult, LipschitzReport, WaveSpeed3d, WaveSpeedPoint};
use crate::error::{Error, Result};

use super::bench::BenchRow;
use super::config::Config;
use super::convergence::ConvergenceTable;
use super::diagnostics::ProfilePoint;

/// Version of the CSV column layouts below.
pub const SCHEMA_VERSION: u32 = 1;

/// Identifier of the source tree this binary was built from.
pub const BUILD_ID: &str = env!("TWOMOMENT_BUILD_ID");

#[derive(Serialize)]
struct BalanceRecord {
    t: f64,
    #[serde(rename = "dN_int")]
    dn_int: f64,
    #[serde(rename = "dN_ext")]
    dn_ext: f64,
    #[serde(rename = "dN_sum")]
    dn_sum: f64,
    #[serde(rename = "dE_int")]
    de_int: f64,
    #[serde(rename = "dE_ext")]
    de_ext: f64,
    #[serde(rename = "dE_sum")]
    de_sum: f64,
}

#[derive(Serialize)]
struct SpectrumRecord {
    x_probe: f64,
    eps: f64,
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "D_analytic")]
    d_analytic: f64,
}

#[derive(Serialize)]
struct ConvRecord {
    #[serde(rename = "N")]
    n: usize,
    k: usize,
    #[serde(rename = "error_L2")]
    error_l2: f64,
    fitted_order: f64,
}

#[derive(Serialize)]
struct ProfileRecord {
    x: f64,
    v: f64,
    comoving_number: f64,
    eulerian_number: f64,
    eps_rms: f64,
    eps_rms_analytic: f64,
}

#[derive(Serialize)]
struct FluxRecord {
    x2: f64,
    flux_inner: f64,
    flux_outer: f64,
    relative_difference: f64,
}

#[derive(Serialize)]
struct Scan1dRecord {
    v: f64,
    h: f64,
    lambda_max: f64,
    singular: bool,
}

#[derive(Serialize)]
struct Scan3dRecord {
    v: f64,
    lambda_max: f64,
}

#[derive(Serialize)]
struct BoundRecord<'a> {
    bound: &'a str,
    pass: bool,
    worst_margin: f64,
    worst_h: f64,
}

#[derive(Serialize)]
struct LipschitzRecord<'a> {
    closure: &'a str,
    samples: usize,
    h_max: f64,
    max_d_ratio: f64,
    max_i_ratio: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<PathBuf> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

/// `balance.csv`: `t, dN_int, dN_ext, dN_sum, dE_int, dE_ext, dE_sum`.
pub fn write_balance(dir: &Path, history: &[BalanceLedger]) -> Result<PathBuf> {
    write_rows(
        &dir.join("balance.csv"),
        history.iter().map(|l| BalanceRecord {
            t: l.t,
            dn_int: l.dn_int,
            dn_ext: l.dn_ext,
            dn_sum: l.dn_sum(),
            de_int: l.de_int,
            de_ext: l.de_ext,
            de_sum: l.de_sum(),
        }),
    )
}

/// `spectra.csv`: `x_probe, eps, D, D_analytic`.
pub fn write_spectra(dir: &Path, rows: &[(f64, f64, f64, f64)]) -> Result<PathBuf> {
    write_rows(
        &dir.join("spectra.csv"),
        rows.iter().map(|&(x_probe, eps, d, d_analytic)| SpectrumRecord {
            x_probe,
            eps,
            d,
            d_analytic,
        }),
    )
}

/// `conv.csv`: `N, k, error_L2, fitted_order` (the order fitted over all
/// `N` of that `k`, repeated on each row).
pub fn write_conv(dir: &Path, table: &ConvergenceTable) -> Result<PathBuf> {
    let order = |k: usize| table.fitted.iter().find(|f| f.0 == k).map_or(f64::NAN, |f| f.1);
    write_rows(
        &dir.join("conv.csv"),
        table.rows.iter().map(|r| ConvRecord {
            n: r.n,
            k: r.k,
            error_l2: r.error_l2,
            fitted_order: order(r.k),
        }),
    )
}

/// `profile.csv`: `x, v, comoving_number, eulerian_number, eps_rms,
/// eps_rms_analytic` at every spatial node of a 1D run.
pub fn write_profile(dir: &Path, rows: &[ProfilePoint]) -> Result<PathBuf> {
    write_rows(
        &dir.join("profile.csv"),
        rows.iter().map(|p| ProfileRecord {
            x: p.x,
            v: p.v,
            comoving_number: p.comoving_number,
            eulerian_number: p.eulerian_number,
            eps_rms: p.eps_rms,
            eps_rms_analytic: p.eps_rms_analytic,
        }),
    )
}

/// `fluxes.csv`: `x2, flux_inner, flux_outer, relative_difference` at the
/// `x¹` boundaries of a 2D run.
pub fn write_fluxes(dir: &Path, rows: &[(f64, f64, f64)]) -> Result<PathBuf> {
    write_rows(
        &dir.join("fluxes.csv"),
        rows.iter().map(|&(x2, lo, hi)| FluxRecord {
            x2,
            flux_inner: lo,
            flux_outer: hi,
            relative_difference: (hi - lo).abs() / lo.abs(),
        }),
    )
}

/// `solver_bench.csv`: `v, h, engine, lambda, guess, mean_iterations,
/// failures, all_realizable`.
pub fn write_solver_bench(dir: &Path, rows: &[BenchRow]) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Record<'a> {
        v: f64,
        h: f64,
        engine: &'a str,
        lambda: &'a str,
        guess: &'a str,
        mean_iterations: f64,
        failures: usize,
        all_realizable: bool,
    }
    write_rows(
        &dir.join("solver_bench.csv"),
        rows.iter().map(|r| Record {
            v: r.v,
            h: r.h,
            engine: &r.engine,
            lambda: &r.lambda,
            guess: &r.guess,
            mean_iterations: r.mean_iterations,
            failures: r.failures,
            all_realizable: r.all_realizable,
        }),
    )
}

/// `wavespeed_1d.csv`: `v, h, lambda_max, singular`.
pub fn write_wavespeed_1d(dir: &Path, rows: &[WaveSpeedPoint]) -> Result<PathBuf> {
    write_rows(
        &dir.join("wavespeed_1d.csv"),
        rows.iter().map(|p| Scan1dRecord {
            v: p.v,
            h: p.h,
            lambda_max: p.lambda_max,
            singular: p.singular,
        }),
    )
}

/// `wavespeed_3d.csv`: `v, lambda_max` (maximum over the random samples).
pub fn write_wavespeed_3d(dir: &Path, rows: &[WaveSpeed3d]) -> Result<PathBuf> {
    write_rows(
        &dir.join("wavespeed_3d.csv"),
        rows.iter().map(|p| Scan3dRecord {
            v: p.v,
            lambda_max: p.lambda_max,
        }),
    )
}

/// `bounds_<closure>.csv`: `bound, pass, worst_margin, worst_h`.
pub fn write_bounds(dir: &Path, closure: &str, rows: &[BoundResult]) -> Result<PathBuf> {
    write_rows(
        &dir.join(format!("bounds_{closure}.csv")),
        rows.iter().map(|b| BoundRecord {
            bound: b.label,
            pass: b.pass,
            worst_margin: b.worst_margin,
            worst_h: b.worst_h,
        }),
    )
}

/// `lipschitz.csv`: `closure, samples, h_max, max_d_ratio, max_i_ratio`.
pub fn write_lipschitz(dir: &Path, rows: &[(&str, f64, LipschitzReport)]) -> Result<PathBuf> {
    write_rows(
        &dir.join("lipschitz.csv"),
        rows.iter().map(|(closure, h_max, r)| LipschitzRecord {
            closure,
            samples: r.samples,
            h_max: *h_max,
            max_d_ratio: r.max_d_ratio,
            max_i_ratio: r.max_i_ratio,
        }),
    )
}

/// Record written next to the data of every invocation.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub build_id: String,
    pub command: String,
    pub wall_seconds: f64,
    /// Names of the data files written.
    pub files: Vec<String>,
    /// Internal assertions and whether they held.
    pub checks: Vec<Check>,
    /// Echo of the input configuration (absent for the scan commands).
    pub config: Option<Config>,
}

/// A named internal assertion.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            pass,
            detail,
        }
    }
}

impl Manifest {
    pub fn new(command: &str, config: Option<Config>) -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION,
            build_id: BUILD_ID.into(),
            command: command.into(),
            wall_seconds: 0.0,
            files: vec![],
            checks: vec![],
            config,
        }
    }

    pub fn add_file(&mut self, path: &Path) {
        if let Some(name) = path.file_name() {
            self.files.push(name.to_string_lossy().into_owned());
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Write `manifest.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let text = toml::to_string(self).map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        let path = dir.join("manifest.toml");
        fs::write(&path, text)?;
        Ok(path)
    }
}
