//! Time-step control and time integrators.
//!
//! The realizability time step bounds the explicit advection update so that
//! cell averages stay realizable:
//!
//! * spatial: `(1 − v_h) γ_x β_i ŵ |K_x^i|`,
//! * energy: `(1 − v_h) γ_ε (ŵ / α^ε) |K_ε| / ε_H` (inactive when `α^ε = 0`),
//! * source (planar 1D only): `½ γ_S (1 − v_h) / |(∂v/∂x)_h|`,
//!
//! with `ŵ` the smallest normalized LGL weight. The convex weights `γ` are
//! split equally among the mechanisms active in each element unless given.
//!
//! Integrators: forward Euler and the optimal SSPRK2/SSPRK3 schemes in
//! Shu–Osher form, the forward–backward Euler IMEX scheme, and a generic
//! diagonally implicit IMEX tableau. The realizability limiter (followed by
//! the optional energy limiter) is applied after every stage.

use crate::dg::{DgOperator, MomentField, RhsDiagnostics};
use crate::error::{Error, Result};
use crate::limiters::{
    apply_realizability_limiter, element_energies, energy_limiter, LimiterConfig, LimiterStats,
};
use crate::moments::{OpacitySpec, Vec4};
use crate::solvers::{collision_solve, SolverConfig};

/// Weights of the realizability time step.
#[derive(Debug, Clone, PartialEq)]
pub struct CflSpec {
    /// `(γ_x, γ_ε, γ_S)`; `None` splits equally among active mechanisms.
    pub gammas: Option<[f64; 3]>,
    /// Per-direction `β_i`; `None` gives `1/d_x` each.
    pub betas: Option<Vec<f64>>,
    pub cfl_safety: f64,
}

impl Default for CflSpec {
    fn default() -> Self {
        CflSpec {
            gammas: None,
            betas: None,
            cfl_safety: 0.9,
        }
    }
}

impl CflSpec {
    pub fn validate(&self, dims: usize) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if let Some(g) = self.gammas {
            if g.iter().any(|&x| !(x > 0.0)) || (g.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "CFL gammas must be positive and sum to 1, got {g:?}"
                )));
            }
        }
        if let Some(b) = &self.betas {
            if b.len() != dims
                || b.iter().any(|&x| !(x > 0.0))
                || (b.iter().sum::<f64>() - 1.0).abs() > 1e-12
            {
                return Err(Error::Config(format!(
                    "CFL betas must be {dims} positive weights summing to 1, got {b:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Which bound limited the time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtLimiter {
    Spatial,
    Energy,
    Source,
}

/// Velocity gradients below this magnitude are rounding residue of the
/// derivative projection (e.g. of a uniform field) and do not activate the
/// energy or source bounds.
pub const GRADIENT_ROUNDING: f64 = 1e-12;

/// Realizability time step `Δt = cfl_safety · min over elements of the bounds`.
pub fn compute_dt(op: &DgOperator, cfl: &CflSpec) -> Result<(f64, DtLimiter)> {
    let mesh = &op.mesh;
    cfl.validate(mesh.dims)?;
    let nsn = mesh.spatial_nodes_per_element();
    let w_hat = mesh.tables.space.lgl_min_weight();
    let w_hat_e = mesh.tables.energy.lgl_min_weight();
    let betas = cfl
        .betas
        .clone()
        .unwrap_or_else(|| vec![1.0 / mesh.dims as f64; mesh.dims]);
    // Smallest |K_ε|/ε_H over energy elements.
    let energy_ratio = (0..mesh.n_energy())
        .map(|ie| mesh.deps(ie) / mesh.eps_hi(ie))
        .fold(f64::INFINITY, f64::min);
    let mut best = (f64::INFINITY, DtLimiter::Spatial);
    for i2 in 0..mesh.n_space(1) {
        for i1 in 0..mesh.n_space(0) {
            let s = mesh.spatial_index(i1, i2);
            let v_h = op.velocity.max_speed(s, nsn);
            if !(v_h < 1.0) {
                return Err(Error::Domain(format!("|v_h| = {v_h} >= 1 in spatial element {s}")));
            }
            let nodes = s * nsn..(s + 1) * nsn;
            let alpha = op.velocity.alpha_eps[nodes.clone()]
                .iter()
                .cloned()
                .fold(0.0, f64::max);
            let dvdx = op.velocity.dv[nodes]
                .iter()
                .map(|m| m[0][0].abs())
                .fold(0.0, f64::max);
            let energy_active = op.energy_advection && alpha > GRADIENT_ROUNDING;
            let source_active = mesh.dims == 1 && dvdx > GRADIENT_ROUNDING;
            let [gx, ge, gs] = match cfl.gammas {
                Some(g) => g,
                None => {
                    let n_active = 1 + energy_active as usize + source_active as usize;
                    let g = 1.0 / n_active as f64;
                    [g, g, g]
                }
            };
            for (d, beta) in betas.iter().enumerate() {
                let len = mesh.dx(d, if d == 0 { i1 } else { i2 });
                let dt = (1.0 - v_h) * gx * beta * w_hat * len;
                if dt < best.0 {
                    best = (dt, DtLimiter::Spatial);
                }
            }
            if energy_active {
                let dt = (1.0 - v_h) * ge * w_hat_e / alpha * energy_ratio;
                if dt < best.0 {
                    best = (dt, DtLimiter::Energy);
                }
            }
            if source_active {
                let dt = 0.5 * gs * (1.0 - v_h) / dvdx;
                if dt < best.0 {
                    best = (dt, DtLimiter::Source);
                }
            }
        }
    }
    Ok((cfl.cfl_safety * best.0, best.1))
}

/// Fixed benchmark time step `Δt = 0.3 |K_x¹| / (k + 1)` (smallest element).
pub fn benchmark_dt(op: &DgOperator) -> f64 {
    let mesh = &op.mesh;
    let hmin = (0..mesh.n_space(0))
        .map(|i| mesh.dx(0, i))
        .fold(f64::INFINITY, f64::min);
    0.3 * hmin / (mesh.degree as f64 + 1.0)
}

/// Explicit strong-stability-preserving schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplicitScheme {
    ForwardEuler,
    Ssprk2,
    Ssprk3,
}

impl ExplicitScheme {
    /// Shu–Osher coefficients: stage `i` is
    /// `a_i U⁰ + (1 − a_i)(U^{(i−1)} + Δt B(U^{(i−1)}))`.
    pub fn shu_osher(&self) -> &'static [f64] {
        match self {
            ExplicitScheme::ForwardEuler => &[0.0],
            ExplicitScheme::Ssprk2 => &[0.0, 0.5],
            ExplicitScheme::Ssprk3 => &[0.0, 0.75, 1.0 / 3.0],
        }
    }

    /// Butcher weights `b_i` of the stage derivatives (used to time-integrate
    /// boundary fluxes consistently with the update).
    pub fn butcher_weights(&self) -> &'static [f64] {
        match self {
            ExplicitScheme::ForwardEuler => &[1.0],
            ExplicitScheme::Ssprk2 => &[0.5, 0.5],
            ExplicitScheme::Ssprk3 => &[1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        }
    }
}

/// A diagonally implicit IMEX tableau: explicit part `(α̃, w̃)` strictly
/// lower triangular, implicit part `(α, w)` lower triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct ImexTableau {
    pub stages: usize,
    pub alpha_ex: Vec<Vec<f64>>,
    pub w_ex: Vec<f64>,
    pub alpha_im: Vec<Vec<f64>>,
    pub w_im: Vec<f64>,
}

impl ImexTableau {
    /// The forward–backward Euler pair written as a two-stage tableau
    /// (stiffly accurate: the update equals the last stage).
    pub fn forward_backward_euler() -> Self {
        ImexTableau {
            stages: 2,
            alpha_ex: vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            w_ex: vec![1.0, 0.0],
            alpha_im: vec![vec![0.0, 0.0], vec![0.0, 1.0]],
            w_im: vec![0.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.stages;
        let shape_ok = self.alpha_ex.len() == s
            && self.alpha_im.len() == s
            && self.w_ex.len() == s
            && self.w_im.len() == s
            && self.alpha_ex.iter().all(|r| r.len() == s)
            && self.alpha_im.iter().all(|r| r.len() == s);
        if !shape_ok || s == 0 {
            return Err(Error::Config("IMEX tableau has inconsistent shape".into()));
        }
        for i in 0..s {
            if (i..s).any(|j| self.alpha_ex[i][j] != 0.0) {
                return Err(Error::Config(
                    "explicit IMEX part must be strictly lower triangular".into(),
                ));
            }
            if (i + 1..s).any(|j| self.alpha_im[i][j] != 0.0) {
                return Err(Error::Config("implicit IMEX part must be lower triangular".into()));
            }
        }
        Ok(())
    }
}

/// Integrator selection.
#[derive(Debug, Clone, PartialEq)]
pub enum Integrator {
    Explicit(ExplicitScheme),
    /// Forward–backward Euler with limiter interleaving.
    ForwardBackwardEuler,
    Imex(ImexTableau),
}

/// Diagnostics gathered over one time step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    /// Time-integrated number leaving the spatial domain over the step.
    pub number_outflow: f64,
    /// Time-integrated Eulerian energy leaving the spatial domain.
    pub energy_outflow: f64,
    pub conversions: usize,
    pub conversion_failures: usize,
    pub max_conversion_iterations: usize,
    pub collision_failures: usize,
    pub max_collision_iterations: usize,
    pub limiter: LimiterStats,
    pub energy_limiter_max_residual: f64,
}

impl StepReport {
    fn add_rhs(&mut self, diag: &RhsDiagnostics, weight: f64, dt: f64) {
        self.number_outflow += weight * dt * diag.number_outflow;
        self.energy_outflow += weight * dt * diag.energy_outflow;
        self.conversions += diag.conversions;
        self.conversion_failures += diag.conversion_failures;
        self.max_conversion_iterations = self.max_conversion_iterations.max(diag.max_iterations);
    }

    fn add_limiter(&mut self, s: &LimiterStats) {
        self.limiter.limited_elements += s.limited_elements;
        self.limiter.shrink_flux_elements += s.shrink_flux_elements;
        self.limiter.safeguard_elements += s.safeguard_elements;
    }
}

/// Time stepper owning the DG operator, the limiter settings, opacities and
/// the stage buffers.
#[derive(Debug, Clone)]
pub struct TimeStepper {
    pub op: DgOperator,
    pub limiter: LimiterConfig,
    pub opacity: OpacitySpec,
    pub collision_solver: SolverConfig,
    u0: Vec<Vec4>,
    rhs: Vec<Vec4>,
}

impl TimeStepper {
    pub fn new(op: DgOperator, limiter: LimiterConfig, opacity: OpacitySpec) -> Result<Self> {
        limiter.validate()?;
        opacity.validate()?;
        let n = op.n_dofs();
        let collision_solver = op.solver;
        Ok(TimeStepper {
            op,
            limiter,
            opacity,
            collision_solver,
            u0: vec![[0.0; 4]; n],
            rhs: vec![[0.0; 4]; n],
        })
    }

    /// Realizability limiter followed (optionally) by the energy limiter.
    pub fn apply_limiters(&self, field: &mut MomentField, report: &mut StepReport) {
        let mesh = &self.op.mesh;
        let e_hat = if self.limiter.energy_limiter_enabled && !mesh.monochromatic {
            Some(element_energies(mesh, &self.op.velocity, field))
        } else {
            None
        };
        let stats = apply_realizability_limiter(mesh, field, &self.limiter);
        report.add_limiter(&stats);
        if let Some(e_hat) = e_hat {
            if stats.limited_elements > 0 {
                let r = energy_limiter(mesh, &self.op.velocity, field, &e_hat, &self.limiter);
                report.energy_limiter_max_residual =
                    report.energy_limiter_max_residual.max(r.max_relative_residual);
            }
        }
    }

    /// One explicit SSP step with limiters after every stage.
    pub fn explicit_step(&mut self, field: &mut MomentField, dt: f64, scheme: ExplicitScheme) -> StepReport {
        let mut report = StepReport::default();
        self.u0.copy_from_slice(&field.u);
        let a = scheme.shu_osher();
        let b = scheme.butcher_weights();
        for (stage, &ai) in a.iter().enumerate() {
            let diag = self.op.assemble_rhs(field, &mut self.rhs);
            report.add_rhs(&diag, b[stage], dt);
            for ((u, r), u0) in field.u.iter_mut().zip(&self.rhs).zip(&self.u0) {
                for c in 0..4 {
                    u[c] = ai * u0[c] + (1.0 - ai) * (u[c] + dt * r[c]);
                }
            }
            self.apply_limiters(field, &mut report);
        }
        report
    }

    /// Node-local implicit collision update `U = U* + Δt·C(U)` in place.
    fn collision_update(&self, field: &mut MomentField, dt: f64, report: &mut StepReport) {
        let op = &self.opacity;
        if op.chi == 0.0 && op.sigma == 0.0 {
            return;
        }
        let npe = self.op.mesh.nodes_per_element();
        let kappa = op.kappa();
        for e in 0..self.op.mesh.n_elements() {
            for k in 0..npe {
                let idx = e * npe + k;
                let v = self.op.node_velocity(e, k);
                let us = field.u[idx];
                let (m, rep) = collision_solve(&us, &v, dt, op, &us, &self.collision_solver, &self.op.closure);
                if !rep.converged {
                    report.collision_failures += 1;
                }
                report.max_collision_iterations = report.max_collision_iterations.max(rep.iterations);
                field.u[idx] = [
                    us[0] + dt * op.chi * (op.d0 - m[0]),
                    us[1] - dt * kappa * m[1],
                    us[2] - dt * kappa * m[2],
                    us[3] - dt * kappa * m[3],
                ];
                field.m[idx] = m;
            }
        }
    }

    /// Forward–backward Euler IMEX step: explicit advection, limiter,
    /// implicit collisions, limiter.
    pub fn imex_step(&mut self, field: &mut MomentField, dt: f64) -> Result<StepReport> {
        let mut report = StepReport::default();
        let diag = self.op.assemble_rhs(field, &mut self.rhs);
        report.add_rhs(&diag, 1.0, dt);
        for (u, r) in field.u.iter_mut().zip(&self.rhs) {
            for c in 0..4 {
                u[c] += dt * r[c];
            }
        }
        self.apply_limiters(field, &mut report);
        self.collision_update(field, dt, &mut report);
        if report.collision_failures > 0 {
            return Err(Error::Numerical(format!(
                "collision solver failed to converge at {} nodes",
                report.collision_failures
            )));
        }
        if self.opacity.chi != 0.0 || self.opacity.sigma != 0.0 {
            self.apply_limiters(field, &mut report);
        }
        Ok(report)
    }

    /// Generic diagonally implicit IMEX step.
    pub fn imex_tableau_step(&mut self, field: &mut MomentField, dt: f64, tab: &ImexTableau) -> Result<StepReport> {
        tab.validate()?;
        let s = tab.stages;
        let n = field.u.len();
        let mut report = StepReport::default();
        self.u0.copy_from_slice(&field.u);
        let mut b_stages: Vec<Vec<Vec4>> = Vec::with_capacity(s);
        let mut c_stages: Vec<Vec<Vec4>> = Vec::with_capacity(s);
        let mut b_diag: Vec<RhsDiagnostics> = Vec::with_capacity(s);
        for i in 0..s {
            let mut stage = self.u0.clone();
            for j in 0..i {
                for idx in 0..n {
                    for c in 0..4 {
                        stage[idx][c] += dt * (tab.alpha_ex[i][j] * b_stages[j][idx][c]
                            + tab.alpha_im[i][j] * c_stages[j][idx][c]);
                    }
                }
            }
            field.u.copy_from_slice(&stage);
            self.apply_limiters(field, &mut report);
            let aii = tab.alpha_im[i][i];
            if aii != 0.0 {
                self.collision_update(field, aii * dt, &mut report);
                self.apply_limiters(field, &mut report);
            }
            // Stage operators; the assembly refreshes the primitive moments.
            let d = self.op.assemble_rhs(field, &mut self.rhs);
            let op = self.opacity;
            let kappa = op.kappa();
            let cst: Vec<Vec4> = field
                .m
                .iter()
                .map(|m| [op.chi * (op.d0 - m[0]), -kappa * m[1], -kappa * m[2], -kappa * m[3]])
                .collect();
            b_stages.push(self.rhs.clone());
            b_diag.push(d);
            c_stages.push(cst);
        }
        if report.collision_failures > 0 {
            return Err(Error::Numerical(format!(
                "collision solver failed to converge at {} nodes",
                report.collision_failures
            )));
        }
        let mut out = self.u0.clone();
        for i in 0..s {
            report.add_rhs(&b_diag[i], tab.w_ex[i], dt);
            for idx in 0..n {
                for c in 0..4 {
                    out[idx][c] += dt * (tab.w_ex[i] * b_stages[i][idx][c] + tab.w_im[i] * c_stages[i][idx][c]);
                }
            }
        }
        field.u.copy_from_slice(&out);
        self.apply_limiters(field, &mut report);
        Ok(report)
    }

    /// Advance by one step of the given integrator.
    pub fn step(&mut self, field: &mut MomentField, dt: f64, integrator: &Integrator) -> Result<StepReport> {
        match integrator {
            Integrator::Explicit(s) => Ok(self.explicit_step(field, dt, *s)),
            Integrator::ForwardBackwardEuler => self.imex_step(field, dt),
            Integrator::Imex(tab) => self.imex_tableau_step(field, dt, tab),
        }
    }
}
