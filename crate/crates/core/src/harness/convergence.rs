//! Spatial convergence studies for the sine-wave and Gaussian problems.

use crate::analysis::{loglog_slope, spectrum_at};
use crate::error::{Error, Result};
use crate::mesh::{gauss_legendre, lagrange_values};
use crate::timestep::{ExplicitScheme, Integrator};

use super::problems::{gaussian_analytic, sine_profile, ProblemName, ProblemSpec, Simulation};

/// One row of the convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub k: usize,
    pub error_l2: f64,
    /// Order relative to the previous row of the same `k` (`NaN` first).
    pub local_order: f64,
}

/// Convergence results with the least-squares order per degree.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// `(k, fitted order)`.
    pub fitted: Vec<(usize, f64)>,
    pub wall_seconds: f64,
}

/// Settings of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePlan {
    pub base: ProblemSpec,
    pub n_list: Vec<usize>,
    pub degrees: Vec<usize>,
    /// Reference resolution (Gaussian only).
    pub reference_n: usize,
    /// Time at which errors are measured.
    pub t_error: f64,
}

/// Quadrature points per element used to measure `L²` errors.
fn error_points(k: usize) -> usize {
    k + 3
}

/// `L²` error of the comoving density of a monochromatic 1D run against a
/// reference function, on an over-integrated Gauss rule.
pub fn l2_error(sim: &Simulation, reference: &dyn Fn(f64) -> f64) -> f64 {
    let mesh = sim.mesh();
    let q = gauss_legendre(error_points(mesh.degree));
    let npe = mesh.nodes_per_element();
    let nodes = &mesh.tables.space.lg.points;
    let mut sum = 0.0;
    for i in 0..mesh.n_space(0) {
        let e = mesh.element_index(0, i, 0);
        let h = mesh.dx(0, i);
        for (xi, w) in q.points.iter().zip(&q.weights) {
            let l = lagrange_values(nodes, *xi);
            let dh: f64 = (0..npe).map(|b| l[b] * sim.field.m[e * npe + b][0]).sum();
            let x = mesh.space_edges[0][i] + xi * h;
            let diff = dh - reference(x);
            sum += w * h * diff * diff;
        }
    }
    sum.sqrt()
}

fn sine_scheme(k: usize) -> Integrator {
    Integrator::Explicit(if k >= 2 { ExplicitScheme::Ssprk3 } else { ExplicitScheme::Ssprk2 })
}

/// Run the study. Sine-wave errors are measured against the exact
/// translation; Gaussian errors against a `reference_n` run.
///
/// The Gaussian reference uses the time step of the finest study run,
/// capped by its own standard step, so its temporal error does not exceed
/// that of the runs it is compared with.
pub fn convergence_study(plan: &ConvergencePlan) -> Result<ConvergenceTable> {
    let start = std::time::Instant::now();
    let name = plan.base.name;
    if !matches!(name, ProblemName::SineWaveStreaming | ProblemName::GaussianDiffusion) {
        return Err(Error::Config(format!("convergence study is not defined for {name}")));
    }
    let mut rows = Vec::new();
    let mut fitted = Vec::new();
    for &k in &plan.degrees {
        let spec_for = |n: usize| -> ProblemSpec {
            let mut s = plan.base.clone();
            s.degree = k;
            s.nx = n;
            s.t_end = plan.t_error;
            if name == ProblemName::SineWaveStreaming {
                s.integrator = sine_scheme(k);
            }
            s
        };
        let reference = if name == ProblemName::GaussianDiffusion {
            let n_max = *plan.n_list.iter().max().unwrap_or(&1);
            let finest = Simulation::new(spec_for(n_max))?;
            let mut rs = spec_for(plan.reference_n);
            rs.cfl_factor = 1.0;
            let mut sim = Simulation::new(rs)?;
            sim.dt = sim.dt.min(finest.dt);
            sim.run()?;
            Some(sim)
        } else {
            None
        };
        let mut errs = Vec::new();
        let mut prev: Option<(usize, f64)> = None;
        for &n in &plan.n_list {
            let mut sim = Simulation::new(spec_for(n))?;
            sim.run()?;
            let t = sim.t;
            let err = match &reference {
                None => l2_error(&sim, &|x| sine_profile(x - t)),
                Some(r) => {
                    let eval = |x: f64| -> f64 {
                        spectrum_at(r.mesh(), &r.field, [x, 0.0]).map(|s| s[0].1).unwrap_or(f64::NAN)
                    };
                    l2_error(&sim, &eval)
                }
            };
            let local_order = match prev {
                Some((pn, pe)) => (pe / err).ln() / (n as f64 / pn as f64).ln(),
                None => f64::NAN,
            };
            rows.push(ConvergenceRow {
                n,
                k,
                error_l2: err,
                local_order,
            });
            errs.push(err);
            prev = Some((n, err));
        }
        let ns: Vec<f64> = plan.n_list.iter().map(|&n| n as f64).collect();
        fitted.push((k, -loglog_slope(&ns, &errs)));
    }
    Ok(ConvergenceTable {
        rows,
        fitted,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Peak of the comoving density (sampled at 16 points per element; the
/// initial peak is 1) and the largest deviation from the
/// advection-diffusion solution at those points.
pub fn gaussian_peak_ratio(sim: &Simulation) -> (f64, f64) {
    let mesh = sim.mesh();
    let npe = mesh.nodes_per_element();
    let nodes = &mesh.tables.space.lg.points;
    let mut peak = f64::MIN;
    let mut dev: f64 = 0.0;
    for i in 0..mesh.n_space(0) {
        let e = mesh.element_index(0, i, 0);
        for j in 0..16 {
            let xi = (j as f64 + 0.5) / 16.0;
            let l = lagrange_values(nodes, xi);
            let d: f64 = (0..npe).map(|b| l[b] * sim.field.m[e * npe + b][0]).sum();
            let x = mesh.space_edges[0][i] + xi * mesh.dx(0, i);
            peak = peak.max(d);
            dev = dev.max((d - gaussian_analytic(x, sim.t, sim.spec.v_max)).abs());
        }
    }
    (peak, dev)
}
