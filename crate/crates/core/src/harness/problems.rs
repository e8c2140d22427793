//! Benchmark problem definitions and the simulation driver.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use crate::analysis::BalanceLedger;
use crate::closure::{ClosureKind, ClosureSpec};
use crate::dg::{project_velocity, DgOperator, MomentField, RhsDiagnostics};
use crate::error::{Error, Result};
use crate::limiters::LimiterConfig;
use crate::mesh::{uniform_edges, Boundary, EnergyGrid, InflowProfile, MeshConfig, PhaseSpaceMesh};
use crate::moments::{OpacitySpec, PrimitiveMoments};
use crate::solvers::{Engine, SolverConfig};
use crate::timestep::{benchmark_dt, compute_dt, CflSpec, ExplicitScheme, Integrator, StepReport, TimeStepper};

use super::config::Config;

/// The benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemName {
    SineWaveStreaming,
    GaussianDiffusion,
    StreamingDopplerShift,
    TransparentShock,
    TransparentVortex,
    SolverBench,
}

impl FromStr for ProblemName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sine_wave_streaming" => ProblemName::SineWaveStreaming,
            "gaussian_diffusion" => ProblemName::GaussianDiffusion,
            "streaming_doppler_shift" => ProblemName::StreamingDopplerShift,
            "transparent_shock" => ProblemName::TransparentShock,
            "transparent_vortex" => ProblemName::TransparentVortex,
            "solver_bench" => ProblemName::SolverBench,
            other => return Err(Error::Config(format!("unknown problem '{other}'"))),
        })
    }
}

impl fmt::Display for ProblemName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProblemName::SineWaveStreaming => "sine_wave_streaming",
            ProblemName::GaussianDiffusion => "gaussian_diffusion",
            ProblemName::StreamingDopplerShift => "streaming_doppler_shift",
            ProblemName::TransparentShock => "transparent_shock",
            ProblemName::TransparentVortex => "transparent_vortex",
            ProblemName::SolverBench => "solver_bench",
        };
        f.write_str(s)
    }
}

/// Time-step selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CflMode {
    /// The realizability time step.
    Theorem1,
    /// `Δt = 0.3 |K_x¹| / (k + 1)`.
    Benchmark03,
}

impl FromStr for CflMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem1" => Ok(CflMode::Theorem1),
            "benchmark03" => Ok(CflMode::Benchmark03),
            other => Err(Error::Config(format!("unknown cfl_mode '{other}'"))),
        }
    }
}

/// Gaussian diffusion constants.
pub const GAUSSIAN_SIGMA: f64 = 3.2e3;
pub const GAUSSIAN_X0: f64 = 1.0;
pub const GAUSSIAN_T0: f64 = 5.0;
/// Floor of the initial Gaussian, whose tails underflow.
pub const GAUSSIAN_FLOOR: f64 = 1e-40;
/// Energy domain upper end of the spectral problems.
pub const EPS_MAX: f64 = 50.0;
/// Inflow flux factor of the Doppler and shock problems.
pub const BEAM_FLUX_FACTOR: f64 = 0.999;
/// Inflow flux factor and amplitude of the vortex problem.
pub const VORTEX_FLUX_FACTOR: f64 = 0.95;
pub const VORTEX_AMPLITUDE: f64 = 0.05;

/// Fully resolved problem parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: ProblemName,
    pub degree: usize,
    pub nx: usize,
    pub ny: usize,
    pub ne: usize,
    pub v_max: f64,
    pub shock_width: f64,
    pub closure: ClosureSpec,
    pub energy_limiter: bool,
    pub t_end: f64,
    pub cfl_mode: CflMode,
    pub cfl_factor: f64,
    pub cfl_safety: f64,
    pub integrator: Integrator,
    pub solver: SolverConfig,
    pub output_interval: usize,
    pub max_steps: Option<usize>,
    pub probes: Vec<f64>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

fn parse_scheme(s: &str) -> Result<Integrator> {
    Ok(match s {
        "fe" => Integrator::Explicit(ExplicitScheme::ForwardEuler),
        "ssprk2" => Integrator::Explicit(ExplicitScheme::Ssprk2),
        "ssprk3" => Integrator::Explicit(ExplicitScheme::Ssprk3),
        "fbe" => Integrator::ForwardBackwardEuler,
        other => return Err(Error::Config(format!("unknown scheme '{other}'"))),
    })
}

impl ProblemSpec {
    /// Benchmark defaults at desk-scale resolution.
    pub fn defaults(name: ProblemName) -> Self {
        let base = ProblemSpec {
            name,
            degree: 2,
            nx: 64,
            ny: 1,
            ne: 16,
            v_max: 0.1,
            shock_width: 1e-3,
            closure: ClosureSpec::default(),
            energy_limiter: true,
            t_end: 20.0,
            cfl_mode: CflMode::Theorem1,
            cfl_factor: 1.0,
            cfl_safety: 0.9,
            integrator: Integrator::Explicit(ExplicitScheme::Ssprk3),
            solver: SolverConfig::default(),
            output_interval: 10,
            max_steps: None,
            probes: vec![],
            output_dir: None,
            seed: 1,
        };
        match name {
            ProblemName::SineWaveStreaming => ProblemSpec {
                degree: 1,
                nx: 32,
                ne: 1,
                energy_limiter: false,
                t_end: 1.0,
                cfl_mode: CflMode::Benchmark03,
                integrator: Integrator::Explicit(ExplicitScheme::Ssprk2),
                ..base
            },
            ProblemName::GaussianDiffusion => ProblemSpec {
                nx: 96,
                ne: 1,
                energy_limiter: false,
                t_end: 30.0,
                cfl_mode: CflMode::Benchmark03,
                integrator: Integrator::ForwardBackwardEuler,
                ..base
            },
            ProblemName::StreamingDopplerShift => ProblemSpec {
                probes: vec![5.0],
                ..base
            },
            ProblemName::TransparentShock => ProblemSpec {
                nx: 40,
                v_max: -0.1,
                t_end: 3.0,
                probes: vec![1.5, 2.0],
                ..base
            },
            ProblemName::TransparentVortex => ProblemSpec {
                nx: 24,
                ny: 24,
                ne: 8,
                probes: vec![0.0],
                ..base
            },
            ProblemName::SolverBench => base,
        }
    }

    /// Resolve a configuration against the problem defaults.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let name: ProblemName = cfg.problem.parse()?;
        let mut s = ProblemSpec::defaults(name);
        if let Some(k) = cfg.degree {
            s.degree = k;
            if name == ProblemName::SineWaveStreaming && cfg.scheme.is_none() {
                s.integrator = Integrator::Explicit(if k >= 2 { ExplicitScheme::Ssprk3 } else { ExplicitScheme::Ssprk2 });
            }
        }
        if let Some(v) = cfg.nx {
            s.nx = v;
        }
        if let Some(v) = cfg.ny {
            s.ny = v;
        }
        if let Some(v) = cfg.ne {
            s.ne = v;
        }
        if let Some(v) = cfg.v_max {
            s.v_max = v;
        }
        if let Some(v) = cfg.shock_width {
            s.shock_width = v;
        }
        if let Some(c) = &cfg.closure {
            s.closure = match c.as_str() {
                "approximate" => ClosureSpec::approximate(),
                "exact" => ClosureSpec::exact(),
                other => return Err(Error::Config(format!("unknown closure '{other}'"))),
            };
        }
        if let Some(v) = cfg.energy_limiter {
            s.energy_limiter = v;
        }
        if let Some(v) = cfg.t_end {
            s.t_end = v;
        }
        if let Some(m) = &cfg.cfl_mode {
            s.cfl_mode = m.parse()?;
        }
        if let Some(v) = cfg.cfl_factor {
            s.cfl_factor = v;
        }
        if let Some(v) = cfg.cfl_safety {
            s.cfl_safety = v;
        }
        if let Some(sch) = &cfg.scheme {
            s.integrator = parse_scheme(sch)?;
        }
        if let Some(e) = &cfg.solver_engine {
            s.solver.engine = match e.as_str() {
                "picard" => Engine::Picard,
                "anderson" => Engine::Anderson {
                    m: cfg.anderson_depth.unwrap_or(1),
                },
                other => return Err(Error::Config(format!("unknown solver_engine '{other}'"))),
            };
        } else if let Some(m) = cfg.anderson_depth {
            s.solver.engine = Engine::Anderson { m };
        }
        if let Some(v) = cfg.solver_tol {
            s.solver.tol = v;
        }
        if let Some(v) = cfg.solver_max_iter {
            s.solver.max_iter = v;
        }
        if let Some(v) = cfg.output_interval {
            s.output_interval = v.max(1);
        }
        s.max_steps = cfg.max_steps;
        if let Some(p) = &cfg.probes {
            s.probes = p.clone();
        }
        s.output_dir = cfg.output_dir.as_ref().map(PathBuf::from);
        if let Some(v) = cfg.seed {
            s.seed = v;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.degree) {
            return Err(Error::Config(format!("degree must be 1 or 2, got {}", self.degree)));
        }
        if self.nx == 0 || self.ny == 0 || self.ne == 0 {
            return Err(Error::Config("element counts must be positive".into()));
        }
        if !(self.v_max.abs() < 1.0) {
            return Err(Error::Config(format!("|v_max| must be < 1, got {}", self.v_max)));
        }
        if self.name == ProblemName::TransparentShock && !(self.shock_width > 0.0) {
            return Err(Error::Config("shock_width must be positive".into()));
        }
        if !(self.t_end > 0.0) || !(self.cfl_factor > 0.0) {
            return Err(Error::Config("t_end and cfl_factor must be positive".into()));
        }
        self.closure.validate()?;
        self.solver.validate()?;
        Ok(())
    }

    pub fn is_spectral(&self) -> bool {
        matches!(
            self.name,
            ProblemName::StreamingDopplerShift | ProblemName::TransparentShock | ProblemName::TransparentVortex
        )
    }

    /// Background velocity field `v(x)`.
    pub fn velocity(&self) -> impl Fn([f64; 3]) -> [f64; 3] + '_ {
        move |x: [f64; 3]| match self.name {
            ProblemName::SineWaveStreaming | ProblemName::GaussianDiffusion => [self.v_max, 0.0, 0.0],
            ProblemName::StreamingDopplerShift => [doppler_velocity(x[0], self.v_max), 0.0, 0.0],
            ProblemName::TransparentShock => [shock_velocity(x[0], self.v_max, self.shock_width), 0.0, 0.0],
            ProblemName::TransparentVortex => vortex_velocity(x[0], x[1], self.v_max),
            ProblemName::SolverBench => [0.0; 3],
        }
    }

    pub fn opacity(&self) -> OpacitySpec {
        match self.name {
            ProblemName::GaussianDiffusion => OpacitySpec {
                chi: 0.0,
                sigma: GAUSSIAN_SIGMA,
                d0: 0.0,
            },
            _ => OpacitySpec {
                chi: 0.0,
                sigma: 0.0,
                d0: 0.0,
            },
        }
    }

    pub fn mesh_config(&self) -> Result<MeshConfig> {
        let energy = if self.is_spectral() {
            EnergyGrid::Elements(uniform_edges(0.0, EPS_MAX, self.ne))
        } else {
            EnergyGrid::Monochromatic
        };
        let periodic = (Boundary::Periodic, Boundary::Periodic);
        let (space_edges, bc) = match self.name {
            ProblemName::SineWaveStreaming => (vec![uniform_edges(0.0, 1.0, self.nx)], vec![periodic]),
            ProblemName::GaussianDiffusion => (vec![uniform_edges(0.0, 3.0, self.nx)], vec![periodic]),
            ProblemName::StreamingDopplerShift => (
                vec![uniform_edges(0.0, 10.0, self.nx)],
                vec![(Boundary::Inflow(beam_inflow(1.0, BEAM_FLUX_FACTOR)), Boundary::Outflow)],
            ),
            ProblemName::TransparentShock => (
                vec![uniform_edges(0.0, 2.0, self.nx)],
                vec![(Boundary::Inflow(beam_inflow(1.0, BEAM_FLUX_FACTOR)), Boundary::Outflow)],
            ),
            ProblemName::TransparentVortex => (
                vec![uniform_edges(-5.0, 5.0, self.nx), uniform_edges(-5.0, 5.0, self.ny)],
                vec![
                    (
                        Boundary::Inflow(beam_inflow(VORTEX_AMPLITUDE, VORTEX_FLUX_FACTOR)),
                        Boundary::Outflow,
                    ),
                    (Boundary::Outflow, Boundary::Outflow),
                ],
            ),
            ProblemName::SolverBench => {
                return Err(Error::Config("solver_bench has no mesh; use the solver-bench command".into()))
            }
        };
        Ok(MeshConfig {
            degree: self.degree,
            energy,
            space_edges,
            bc,
        })
    }

    /// Initial primitive moments `M(ε, x)`.
    pub fn initial_state(&self, eps: f64, x: [f64; 3]) -> PrimitiveMoments {
        match self.name {
            ProblemName::SineWaveStreaming => {
                let d = sine_profile(x[0]);
                PrimitiveMoments::new(d, [d, 0.0, 0.0])
            }
            ProblemName::GaussianDiffusion => {
                let kd = 1.0 / (3.0 * GAUSSIAN_SIGMA);
                let d = (-(x[0] - GAUSSIAN_X0).powi(2) / (4.0 * GAUSSIAN_T0 * kd)).exp().max(GAUSSIAN_FLOOR);
                PrimitiveMoments::new(d, [(x[0] - GAUSSIAN_X0) / (2.0 * GAUSSIAN_T0) * d, 0.0, 0.0])
            }
            ProblemName::StreamingDopplerShift => PrimitiveMoments::isotropic(1e-40),
            _ => {
                let _ = eps;
                PrimitiveMoments::isotropic(1e-8)
            }
        }
    }

    /// Time step for a built operator.
    pub fn time_step(&self, op: &DgOperator) -> Result<f64> {
        let dt = match self.cfl_mode {
            CflMode::Benchmark03 => benchmark_dt(op),
            CflMode::Theorem1 => {
                let cfl = CflSpec {
                    cfl_safety: self.cfl_safety,
                    ..CflSpec::default()
                };
                compute_dt(op, &cfl)?.0
            }
        };
        Ok(dt * self.cfl_factor)
    }

    pub fn closure_kind(&self) -> ClosureKind {
        self.closure.kind
    }
}

/// `D₀(x) = 0.5 + 0.49 sin(2πx)`.
pub fn sine_profile(x: f64) -> f64 {
    0.5 + 0.49 * (2.0 * std::f64::consts::PI * x).sin()
}

/// Advection-diffusion solution of the Gaussian problem on the periodic
/// domain `[0, 3]`.
pub fn gaussian_analytic(x: f64, t: f64, v: f64) -> f64 {
    let kd = 1.0 / (3.0 * GAUSSIAN_SIGMA);
    let mut xi = (x - v * t - GAUSSIAN_X0).rem_euclid(3.0);
    if xi > 1.5 {
        xi -= 3.0;
    }
    (GAUSSIAN_T0 / (GAUSSIAN_T0 + t)).sqrt() * (-(xi * xi) / (4.0 * (GAUSSIAN_T0 + t) * kd)).exp()
}

/// Piecewise Doppler-problem velocity profile.
pub fn doppler_velocity(x: f64, v_max: f64) -> f64 {
    let ramp = |x: f64| v_max * (2.0 * std::f64::consts::PI * (x - 2.0) / 6.0).sin().powi(2);
    if x < 2.0 {
        0.0
    } else if x < 3.5 {
        ramp(x)
    } else if x < 6.5 {
        v_max
    } else if x < 8.0 {
        ramp(x)
    } else {
        0.0
    }
}

/// `v(x) = ½ v_max [1 + tanh((x − 1)/H)]`: at rest at the inflow
/// boundary, `v_max` beyond the shock at `x = 1`.
pub fn shock_velocity(x: f64, v_max: f64, h: f64) -> f64 {
    0.5 * v_max * (1.0 + ((x - 1.0) / h).tanh())
}

/// Rotational vortex velocity field.
pub fn vortex_velocity(x1: f64, x2: f64, v_max: f64) -> [f64; 3] {
    let g = ((1.0 - (x1 * x1 + x2 * x2)) / 2.0).exp();
    [-v_max * x2 * g, v_max * x1 * g, 0.0]
}

/// Fermi–Dirac spectrum `1/(exp(ε/3 − 3) + 1)`.
pub fn fermi_dirac(eps: f64) -> f64 {
    1.0 / ((eps / 3.0 - 3.0).exp() + 1.0)
}

/// Forward-peaked Fermi–Dirac inflow along `+x¹`.
pub fn beam_inflow(amplitude: f64, flux_factor: f64) -> InflowProfile {
    Arc::new(move |eps: f64, _x: [f64; 3]| {
        let d = amplitude * fermi_dirac(eps);
        PrimitiveMoments::new(d, [flux_factor * d, 0.0, 0.0])
    })
}

/// Ratio `s = ε_src / ε_obs` for radiation streaming along `+x¹`, emitted in
/// a frame moving with `v_src` and observed in a frame moving with `v_obs`.
pub fn doppler_factor(v_obs: [f64; 3], v_src: [f64; 3]) -> f64 {
    let gamma = |v: [f64; 3]| 1.0 / (1.0 - (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).sqrt();
    gamma(v_src) * (1.0 - v_src[0]) / (gamma(v_obs) * (1.0 - v_obs[0]))
}

/// Special-relativistic spectrum `s²·A/(exp(sε/3 − 3) + 1)`.
pub fn doppler_spectrum(eps: f64, s: f64, amplitude: f64) -> f64 {
    amplitude * s * s * fermi_dirac(s * eps)
}

/// Aggregate statistics of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunTotals {
    pub limited_elements: usize,
    pub shrink_flux_elements: usize,
    pub safeguard_elements: usize,
    pub conversion_failures: usize,
    pub collision_failures: usize,
    pub max_conversion_iterations: usize,
    pub max_energy_limiter_residual: f64,
    /// Largest `|ΔN_int + ΔN_ext|` over all steps.
    pub max_abs_number_balance: f64,
}

impl RunTotals {
    fn add(&mut self, r: &StepReport, ledger: &BalanceLedger) {
        self.limited_elements += r.limiter.limited_elements;
        self.shrink_flux_elements += r.limiter.shrink_flux_elements;
        self.safeguard_elements += r.limiter.safeguard_elements;
        self.conversion_failures += r.conversion_failures;
        self.collision_failures += r.collision_failures;
        self.max_conversion_iterations = self.max_conversion_iterations.max(r.max_conversion_iterations);
        self.max_energy_limiter_residual = self.max_energy_limiter_residual.max(r.energy_limiter_max_residual);
        self.max_abs_number_balance = self.max_abs_number_balance.max(ledger.dn_sum().abs());
    }
}

/// A built benchmark: operator, stepper, current field and ledger.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub spec: ProblemSpec,
    pub stepper: TimeStepper,
    pub field: MomentField,
    pub t: f64,
    pub steps: usize,
    pub dt: f64,
    pub ledger: BalanceLedger,
    pub history: Vec<BalanceLedger>,
    pub totals: RunTotals,
    pub wall_seconds: f64,
}

impl Simulation {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let mesh = PhaseSpaceMesh::new(spec.mesh_config()?)?;
        let velocity = project_velocity(&mesh, &spec.velocity())?;
        let op = DgOperator::new(mesh, spec.closure, spec.solver, velocity)?;
        let field = op.initialize(&|eps, x| spec.initial_state(eps, x))?;
        let dt = spec.time_step(&op)?;
        let limiter = LimiterConfig {
            energy_limiter_enabled: spec.energy_limiter,
            ..LimiterConfig::default()
        };
        let stepper = TimeStepper::new(op, limiter, spec.opacity())?;
        let ledger = BalanceLedger::new(&stepper.op.mesh, &stepper.op.velocity, &field);
        Ok(Simulation {
            spec,
            stepper,
            field,
            t: 0.0,
            steps: 0,
            dt,
            ledger,
            history: vec![ledger],
            totals: RunTotals::default(),
            wall_seconds: 0.0,
        })
    }

    pub fn mesh(&self) -> &PhaseSpaceMesh {
        &self.stepper.op.mesh
    }

    /// One step of length `dt`, updating the ledger.
    pub fn step(&mut self, dt: f64) -> Result<StepReport> {
        let integrator = self.spec.integrator.clone();
        let report = self.stepper.step(&mut self.field, dt, &integrator).map_err(|e| {
            Error::Numerical(format!("step {} at t = {:.6e} failed: {e}", self.steps + 1, self.t))
        })?;
        self.t += dt;
        self.steps += 1;
        let op = &self.stepper.op;
        self.ledger
            .record(&op.mesh, &op.velocity, &self.field, dt, report.number_outflow, report.energy_outflow);
        self.totals.add(&report, &self.ledger);
        Ok(report)
    }

    /// Advance to `t_end` (the last step is shortened to land on it) or
    /// until `max_steps`.
    pub fn run(&mut self) -> Result<()> {
        let start = Instant::now();
        let t_end = self.spec.t_end;
        while self.t < t_end * (1.0 - 1e-14) {
            if self.spec.max_steps.is_some_and(|m| self.steps >= m) {
                break;
            }
            let dt = self.dt.min(t_end - self.t);
            self.step(dt)?;
            if self.steps % self.spec.output_interval == 0 {
                self.history.push(self.ledger);
            }
        }
        if self.history.last().map(|l| l.t) != Some(self.ledger.t) {
            self.history.push(self.ledger);
        }
        self.refresh_primitives();
        self.wall_seconds += start.elapsed().as_secs_f64();
        Ok(())
    }

    /// Re-derive the cached primitives from the current conserved field
    /// (after the limiters of the last step they are one stage behind).
    /// Returns the number of conversions that did not converge.
    pub fn refresh_primitives(&mut self) -> usize {
        let mut diag = RhsDiagnostics::default();
        self.stepper.op.convert_nodes(&mut self.field, &mut diag);
        diag.conversion_failures
    }

    /// Run exactly `n` steps of the configured time step.
    pub fn run_steps(&mut self, n: usize) -> Result<()> {
        let start = Instant::now();
        for _ in 0..n {
            self.step(self.dt)?;
        }
        self.refresh_primitives();
        self.wall_seconds += start.elapsed().as_secs_f64();
        Ok(())
    }
}
