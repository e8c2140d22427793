//! Benchmark harness: problem setups, the simulation driver, convergence
//! and solver studies, diagnostics, and CSV emission.
//!
//! Every command writes its data files plus a `manifest.toml` into an
//! output directory resolved as: the `TWOMOMENT_OUTPUT_DIR` environment
//! variable, else the `output_dir` config key, else `out/<command>`.

pub mod bench;
pub mod config;
pub mod convergence;
pub mod diagnostics;
pub mod output;
pub mod problems;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{bound_scan, linspace, lipschitz_scan, phi_terms, wavespeed_scan_1d, wavespeed_scan_3d, ScanGrid};
use crate::closure::ClosureSpec;
use crate::limiters::{count_negative_averages, count_nonrealizable_points};
use crate::error::{Error, Result};

pub use bench::{solver_bench, BenchConfig, BenchRow};
pub use config::Config;
pub use convergence::{convergence_study, ConvergencePlan, ConvergenceTable};
pub use output::{Check, Manifest};
pub use problems::{CflMode, ProblemName, ProblemSpec, Simulation};

/// Environment variable overriding every output directory.
pub const OUTPUT_DIR_ENV: &str = "TWOMOMENT_OUTPUT_DIR";

/// Relative tolerance of the internal number-balance assertion.
pub const NUMBER_BALANCE_TOL: f64 = 1e-12;

/// Points of the bound scan grid on `[1e-6, 1]`.
pub const BOUND_SCAN_POINTS: usize = 10_000;
/// Random samples of the Lipschitz scan.
pub const LIPSCHITZ_SAMPLES: usize = 10_000;
/// Slack of the finite-difference Lipschitz ratios.
pub const LIPSCHITZ_FD_SLACK: f64 = 1e-6;
/// Largest flux factor of the Lipschitz samples; the finite-difference
/// stencil must stay inside the realizable set.
pub const LIPSCHITZ_H_MAX: f64 = 1.0 - 1e-4;
/// Resolution of the 1D wave-speed grid (per axis).
pub const WAVESPEED_GRID: usize = 101;
/// Slack of the 1D wave-speed bound.
pub const WAVESPEED_SLACK: f64 = 1e-12;
/// Random samples per velocity magnitude of the 3D wave-speed scan.
pub const WAVESPEED_3D_SAMPLES: usize = 10_000;
/// Largest `|v|` with a unit wave-speed bound in the 3D scan.
pub const WAVESPEED_3D_VMAX_BOUNDED: f64 = 0.25;

/// Resolve the output directory and create it.
pub fn resolve_output_dir(configured: Option<&Path>, default_name: &str) -> Result<PathBuf> {
    let dir = match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => configured.map_or_else(|| PathBuf::from("out").join(default_name), Path::to_path_buf),
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn finish(mut manifest: Manifest, dir: &Path, start: Instant) -> Result<Manifest> {
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    manifest.write(dir)?;
    Ok(manifest)
}

/// Internal assertions of a finished simulation.
pub fn simulation_checks(sim: &Simulation) -> Vec<Check> {
    let t = &sim.totals;
    let bad = count_nonrealizable_points(sim.mesh(), &sim.field);
    let negative = count_negative_averages(sim.mesh(), &sim.field);
    let scale = sim.ledger.dn_int.abs().max(sim.ledger.n_initial.abs());
    let balance = if scale > 0.0 { t.max_abs_number_balance / scale } else { t.max_abs_number_balance };
    let finite = sim.field.u.iter().all(|u| u.iter().all(|x| x.is_finite()));
    vec![
        Check::new("finite_field", finite, String::new()),
        Check::new("realizable_points", bad == 0, format!("{bad} non-realizable points")),
        Check::new("positive_cell_averages", negative == 0, format!("{negative} negative cell averages")),
        Check::new(
            "safeguard_never_fired",
            t.safeguard_elements == 0,
            format!("{} safeguard activations", t.safeguard_elements),
        ),
        Check::new(
            "conversions_converged",
            t.conversion_failures == 0,
            format!("{} failures, max {} iterations", t.conversion_failures, t.max_conversion_iterations),
        ),
        Check::new(
            "collisions_converged",
            t.collision_failures == 0,
            format!("{} failures", t.collision_failures),
        ),
        Check::new(
            "number_balance",
            balance <= NUMBER_BALANCE_TOL,
            format!("max |dN_int + dN_ext| / scale = {balance:.3e}"),
        ),
    ]
}

/// Write the data files of a finished simulation into `dir`.
pub fn write_simulation(sim: &Simulation, dir: &Path, manifest: &mut Manifest) -> Result<()> {
    manifest.add_file(&output::write_balance(dir, &sim.history)?);
    if sim.spec.is_spectral() {
        let mut rows = Vec::new();
        for &x in &sim.spec.probes {
            rows.extend(diagnostics::probe_spectrum(sim, x)?);
        }
        manifest.add_file(&output::write_spectra(dir, &rows)?);
    }
    if sim.mesh().dims == 1 {
        manifest.add_file(&output::write_profile(dir, &diagnostics::profile_1d(sim))?);
    } else {
        manifest.add_file(&output::write_fluxes(dir, &diagnostics::x1_boundary_fluxes(sim))?);
    }
    Ok(())
}

/// `run <config>`: one benchmark simulation.
pub fn run(cfg: &Config) -> Result<Manifest> {
    let start = Instant::now();
    let spec = ProblemSpec::from_config(cfg)?;
    if spec.name == ProblemName::SolverBench {
        return run_solver_bench(cfg);
    }
    let dir = resolve_output_dir(spec.output_dir.as_deref(), &spec.name.to_string())?;
    let mut manifest = Manifest::new("run", Some(cfg.clone()));
    let mut sim = Simulation::new(spec)?;
    sim.run()?;
    write_simulation(&sim, &dir, &mut manifest)?;
    manifest.checks = simulation_checks(&sim);
    finish(manifest, &dir, start)
}

/// Resolve the convergence plan of a configuration.
pub fn convergence_plan(cfg: &Config) -> Result<ConvergencePlan> {
    let base = ProblemSpec::from_config(cfg)?;
    let (n_list, degrees, t_error) = match base.name {
        ProblemName::SineWaveStreaming => (vec![16, 32, 64, 128], vec![1, 2], base.t_end),
        ProblemName::GaussianDiffusion => (vec![16, 32, 64, 128], vec![2], 5.0),
        other => return Err(Error::Config(format!("convergence study is not defined for {other}"))),
    };
    Ok(ConvergencePlan {
        n_list: cfg.n_list.clone().unwrap_or(n_list),
        degrees: cfg.degrees.clone().unwrap_or(degrees),
        reference_n: cfg.reference_n.unwrap_or(2048),
        t_error: cfg.t_error.unwrap_or(t_error),
        base,
    })
}

/// `convergence <config>`: spatial convergence study.
pub fn run_convergence(cfg: &Config) -> Result<Manifest> {
    let start = Instant::now();
    let plan = convergence_plan(cfg)?;
    let dir = resolve_output_dir(plan.base.output_dir.as_deref(), &format!("convergence_{}", plan.base.name))?;
    let mut manifest = Manifest::new("convergence", Some(cfg.clone()));
    let table = convergence_study(&plan)?;
    manifest.add_file(&output::write_conv(&dir, &table)?);
    let finite = table.rows.iter().all(|r| r.error_l2.is_finite() && r.error_l2 > 0.0);
    manifest.checks.push(Check::new("finite_errors", finite, String::new()));
    for &(k, order) in &table.fitted {
        manifest.checks.push(Check::new(
            &format!("order_k{k}_positive"),
            order > 0.0,
            format!("fitted order {order:.3}"),
        ));
    }
    finish(manifest, &dir, start)
}

/// Resolve the solver-study settings of a configuration.
pub fn bench_config(cfg: &Config) -> Result<BenchConfig> {
    let mut b = BenchConfig::default();
    if let Some(v) = &cfg.bench_v {
        b.v = v.clone();
    }
    if let Some(h) = &cfg.bench_h {
        b.h = h.clone();
    }
    if let Some(t) = cfg.trials {
        b.trials = t;
    }
    if let Some(s) = cfg.seed {
        b.seed = s;
    }
    if let Some(t) = cfg.solver_tol {
        b.tol = t;
    }
    if let Some(m) = cfg.solver_max_iter {
        b.max_iter = m;
    }
    if let Some(c) = &cfg.closure {
        b.closure = match c.as_str() {
            "approximate" => ClosureSpec::approximate(),
            "exact" => ClosureSpec::exact(),
            other => return Err(Error::Config(format!("unknown closure '{other}'"))),
        };
    }
    if b.v.iter().any(|v| !(0.0..1.0).contains(v)) || b.h.iter().any(|h| !(0.0..1.0).contains(h)) {
        return Err(Error::Config("bench grids require 0 <= v, h < 1".into()));
    }
    if b.trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    Ok(b)
}

/// `solver-bench <config>`: conversion-solver iteration study.
pub fn run_solver_bench(cfg: &Config) -> Result<Manifest> {
    let start = Instant::now();
    let b = bench_config(cfg)?;
    let dir = resolve_output_dir(cfg.output_dir.as_deref().map(Path::new), "solver_bench")?;
    let mut manifest = Manifest::new("solver-bench", Some(cfg.clone()));
    let rows = solver_bench(&b);
    manifest.add_file(&output::write_solver_bench(&dir, &rows)?);
    let static_iters = rows
        .iter()
        .filter(|r| r.v == 0.0 && r.lambda == "inv1pv")
        .map(|r| r.mean_iterations)
        .fold(0.0, f64::max);
    manifest.checks.push(Check::new(
        "static_fluid_at_most_two_iterations",
        static_iters <= 2.0,
        format!("max mean iterations at v = 0 with lambda = 1/(1+v): {static_iters}"),
    ));
    finish(manifest, &dir, start)
}

/// `scan-wavespeed`: 1D closed-form and 3D random-direction scans.
pub fn run_scan_wavespeed(output_dir: Option<&Path>) -> Result<Manifest> {
    let start = Instant::now();
    let dir = resolve_output_dir(output_dir, "scan_wavespeed")?;
    let mut manifest = Manifest::new("scan-wavespeed", None);
    let spec = ClosureSpec::default();
    let grid = ScanGrid::uniform(WAVESPEED_GRID, WAVESPEED_GRID);
    let scan = wavespeed_scan_1d(&grid, &spec)?;
    manifest.add_file(&output::write_wavespeed_1d(&dir, &scan)?);
    let lmax = scan
        .iter()
        .filter(|p| !p.singular)
        .map(|p| p.lambda_max)
        .fold(0.0, f64::max);
    manifest.checks.push(Check::new(
        "lambda_max_1d",
        lmax <= 1.0 + WAVESPEED_SLACK,
        format!("max lambda_max = {lmax:.15}"),
    ));
    let speeds = linspace(0.0, 0.95, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scan3 = wavespeed_scan_3d(&speeds, WAVESPEED_3D_SAMPLES, &mut rng, &spec)?;
    manifest.add_file(&output::write_wavespeed_3d(&dir, &scan3)?);
    let l3 = scan3
        .iter()
        .filter(|p| p.v <= WAVESPEED_3D_VMAX_BOUNDED)
        .map(|p| p.lambda_max)
        .fold(0.0, f64::max);
    manifest.checks.push(Check::new(
        "lambda_max_3d_small_v",
        l3 <= 1.0 + WAVESPEED_SLACK,
        format!("max lambda_max for v <= {WAVESPEED_3D_VMAX_BOUNDED}: {l3:.15}"),
    ));
    finish(manifest, &dir, start)
}

/// `scan-bounds`: the Eddington-factor bounds for both closures.
pub fn run_scan_bounds(output_dir: Option<&Path>) -> Result<Manifest> {
    let start = Instant::now();
    let dir = resolve_output_dir(output_dir, "scan_bounds")?;
    let mut manifest = Manifest::new("scan-bounds", None);
    let grid = linspace(1e-6, 1.0, BOUND_SCAN_POINTS);
    for (name, spec) in [("approximate", ClosureSpec::approximate()), ("exact", ClosureSpec::exact())] {
        let res = bound_scan(&grid, &spec);
        manifest.add_file(&output::write_bounds(&dir, name, &res)?);
        for b in &res {
            manifest.checks.push(Check::new(
                &format!("{name} {}", b.label),
                b.pass,
                format!("worst margin {:.3e} at h = {}", b.worst_margin, b.worst_h),
            ));
        }
    }
    let t = phi_terms(1.0, &ClosureSpec::exact());
    let q = t.phi2 * t.phi2 - t.psi_prime * t.phi2 + t.psi_prime * t.psi_prime;
    manifest.checks.push(Check::new(
        "exact h=1 identity",
        (q - 4.0).abs() <= 1e-10,
        format!("value {q:.15}"),
    ));
    finish(manifest, &dir, start)
}

/// `lipschitz-scan`: finite-difference Lipschitz ratios for both closures.
pub fn run_lipschitz_scan(output_dir: Option<&Path>) -> Result<Manifest> {
    let start = Instant::now();
    let dir = resolve_output_dir(output_dir, "lipschitz_scan")?;
    let mut manifest = Manifest::new("lipschitz-scan", None);
    let mut rows = Vec::new();
    for (name, spec) in [("approximate", ClosureSpec::approximate()), ("exact", ClosureSpec::exact())] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rep = lipschitz_scan(LIPSCHITZ_SAMPLES, LIPSCHITZ_H_MAX, &mut rng, &spec);
        manifest.checks.push(Check::new(
            &format!("{name} lipschitz"),
            rep.max_d_ratio <= 1.0 + LIPSCHITZ_FD_SLACK && rep.max_i_ratio <= 1.0 + LIPSCHITZ_FD_SLACK,
            format!("max D ratio {:.9}, max I ratio {:.9}", rep.max_d_ratio, rep.max_i_ratio),
        ));
        rows.push((name, LIPSCHITZ_H_MAX, rep));
    }
    manifest.add_file(&output::write_lipschitz(&dir, &rows)?);
    finish(manifest, &dir, start)
}
