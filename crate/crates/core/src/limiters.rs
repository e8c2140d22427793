//! Realizability-enforcing limiter and the Eulerian-frame energy limiter.
//!
//! The realizability limiter blends the nodal moments of an element toward
//! the (realizable) cell average so that the DG polynomial is realizable on
//! the whole point set `S̃⊗` — the LG nodes plus the LGL-augmented auxiliary
//! sets, which include the element faces. It first fixes the number density
//! (`θ^N`), then the full moment (`θ^U`, bisection on the feasibility of the
//! blend). Both steps preserve the element-integrated number `𝖭_K`.
//!
//! The realizability limiter changes the Eulerian energy. The energy limiter
//! sweeps each spatial column of energy elements and redistributes particles
//! between neighbouring energy elements by number-neutral scalings
//! `U ← (1+θ)U` that restore the pre-limiter column energy.

use crate::dg::{cell_average_slice, MomentField, VelocityField};
use crate::error::{Error, Result};
use crate::mesh::PhaseSpaceMesh;
use crate::moments::{dot3, gamma_of, Vec4};

/// Number of bisection iterations for `θ^U`.
pub const THETA_BISECTION_ITERS: usize = 12;
/// Number density assigned by the negative-average safeguard.
pub const SAFEGUARD_DENSITY: f64 = 1e-100;
/// Relative rounding allowance `γ ≥ −c·N` of the realizability diagnostics:
/// exact beam states (`|G| = N`) sit on the boundary of the realizable
/// cone, where re-evaluating the blended polynomial can miss by an ulp.
pub const REALIZABILITY_ROUNDING: f64 = 8.0 * f64::EPSILON;
/// Floor on the energy-limiter scalings: `(1+θ) ≥ POSITIVITY_FLOOR`.
pub const POSITIVITY_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimiterConfig {
    /// `δ` of the flux-shrinking fallback for non-realizable averages.
    pub delta_small: f64,
    /// Damping floor of the pairwise energy correction.
    pub theta_min: f64,
    /// Relative energy tolerance: `|δE| ≤ energy_tol · Σ|Ê|` per column.
    pub energy_tol: f64,
    pub energy_limiter_enabled: bool,
}

impl Default for LimiterConfig {
    fn default() -> Self {
        LimiterConfig {
            delta_small: 1e-10,
            theta_min: -0.5,
            energy_tol: 1e-14,
            energy_limiter_enabled: true,
        }
    }
}

impl LimiterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_min > -1.0 && self.theta_min < 0.0) {
            return Err(Error::Config(format!(
                "theta_min must lie in (-1, 0), got {}",
                self.theta_min
            )));
        }
        if !(self.delta_small > 0.0 && self.delta_small < 1.0) {
            return Err(Error::Config(format!(
                "delta_small must lie in (0, 1), got {}",
                self.delta_small
            )));
        }
        if !(self.energy_tol >= 0.0) {
            return Err(Error::Config("energy_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// What the realizability limiter did to one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimiterAction {
    /// Cell average realizable; blend factors applied (1 = untouched).
    Blend { theta_n: f64, theta_u: f64 },
    /// Cell average not realizable: flux shrunk onto the realizable set.
    ShrinkFlux,
    /// Cell-averaged number density was not positive: isotropic reset.
    Safeguard,
}

/// Aggregate counts over a field.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LimiterStats {
    pub limited_elements: usize,
    pub shrink_flux_elements: usize,
    pub safeguard_elements: usize,
}

/// Evaluate the DG polynomial of one element at every point of `S̃⊗`
/// (the nodes first, in node order).
pub fn point_values(mesh: &PhaseSpaceMesh, u: &[Vec4], out: &mut Vec<Vec4>) {
    out.clear();
    out.extend_from_slice(u);
    let [nqe, n1, n2] = mesh.nodes_per_dim;
    let t = &mesh.tables;
    // Ŝ_ε: LGL in energy at every spatial node.
    if !mesh.monochromatic {
        let nl = t.energy.n_lgl();
        for c in 0..n2 {
            for b in 0..n1 {
                for p in 0..nl {
                    let mut acc = [0.0; 4];
                    for a in 0..nqe {
                        let w = t.energy.to_lgl[p * nqe + a];
                        let val = &u[mesh.node_index(a, b, c)];
                        for comp in 0..4 {
                            acc[comp] += w * val[comp];
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    // Ŝ_i: LGL along each active spatial direction.
    let n = t.space.n;
    let nl = t.space.n_lgl();
    for d in 0..mesh.dims {
        let nt = if d == 0 { n2 } else { n1 };
        for tt in 0..nt {
            for a in 0..nqe {
                for p in 0..nl {
                    let mut acc = [0.0; 4];
                    for q in 0..n {
                        let w = t.space.to_lgl[p * n + q];
                        let k = if d == 0 {
                            mesh.node_index(a, q, tt)
                        } else {
                            mesh.node_index(a, tt, q)
                        };
                        let val = &u[k];
                        for comp in 0..4 {
                            acc[comp] += w * val[comp];
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
}

#[inline]
fn blend(p: &Vec4, avg: &Vec4, theta: f64) -> Vec4 {
    [
        theta * p[0] + (1.0 - theta) * avg[0],
        theta * p[1] + (1.0 - theta) * avg[1],
        theta * p[2] + (1.0 - theta) * avg[2],
        theta * p[3] + (1.0 - theta) * avg[3],
    ]
}

/// Apply the realizability limiter to the nodal values `u` of element `e`.
pub fn realizability_limiter(
    mesh: &PhaseSpaceMesh,
    u: &mut [Vec4],
    e: usize,
    cfg: &LimiterConfig,
    scratch: &mut Vec<Vec4>,
) -> LimiterAction {
    let avg = cell_average_slice(mesh, u, e);
    if !(avg[0] > 0.0) {
        for x in u.iter_mut() {
            *x = [SAFEGUARD_DENSITY, 0.0, 0.0, 0.0];
        }
        return LimiterAction::Safeguard;
    }
    if !gamma_of(&avg).realizable {
        let g = (avg[1] * avg[1] + avg[2] * avg[2] + avg[3] * avg[3]).sqrt();
        let s = (1.0 - cfg.delta_small) * avg[0] / g;
        for x in u.iter_mut() {
            *x = [avg[0], s * avg[1], s * avg[2], s * avg[3]];
        }
        return LimiterAction::ShrinkFlux;
    }
    point_values(mesh, u, scratch);
    // θ^N: number density nonnegative on S̃⊗.
    let min_n = scratch.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let theta_n = if min_n < 0.0 {
        (avg[0] / (avg[0] - min_n)).min(1.0)
    } else {
        1.0
    };
    if theta_n < 1.0 {
        for x in u.iter_mut() {
            x[0] = theta_n * x[0] + (1.0 - theta_n) * avg[0];
        }
        for p in scratch.iter_mut() {
            p[0] = theta_n * p[0] + (1.0 - theta_n) * avg[0];
        }
    }
    // θ^U: bisection on feasibility of the blend; since γ is concave only the
    // currently infeasible points can constrain θ.
    scratch.retain(|p| !gamma_of(p).realizable);
    let theta_u = if scratch.is_empty() {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..THETA_BISECTION_ITERS {
            let mid = 0.5 * (lo + hi);
            if scratch.iter().all(|p| gamma_of(&blend(p, &avg, mid)).realizable) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    if theta_u < 1.0 {
        for x in u.iter_mut() {
            *x = blend(x, &avg, theta_u);
        }
    }
    LimiterAction::Blend { theta_n, theta_u }
}

/// Apply the realizability limiter to every element of the field.
pub fn apply_realizability_limiter(
    mesh: &PhaseSpaceMesh,
    field: &mut MomentField,
    cfg: &LimiterConfig,
) -> LimiterStats {
    let npe = mesh.nodes_per_element();
    let mut stats = LimiterStats::default();
    let mut scratch = Vec::new();
    for e in 0..mesh.n_elements() {
        let u = &mut field.u[e * npe..(e + 1) * npe];
        match realizability_limiter(mesh, u, e, cfg, &mut scratch) {
            LimiterAction::Blend { theta_n, theta_u } => {
                if theta_n < 1.0 || theta_u < 1.0 {
                    stats.limited_elements += 1;
                }
            }
            LimiterAction::ShrinkFlux => {
                stats.limited_elements += 1;
                stats.shrink_flux_elements += 1;
            }
            LimiterAction::Safeguard => {
                stats.limited_elements += 1;
                stats.safeguard_elements += 1;
            }
        }
    }
    stats
}

/// Number of points of `S̃⊗` (over all elements) where the DG polynomial is
/// not realizable beyond rounding ([`REALIZABILITY_ROUNDING`]).
pub fn count_nonrealizable_points(mesh: &PhaseSpaceMesh, field: &MomentField) -> usize {
    let npe = mesh.nodes_per_element();
    let mut scratch = Vec::new();
    let mut count = 0;
    for e in 0..mesh.n_elements() {
        point_values(mesh, &field.u[e * npe..(e + 1) * npe], &mut scratch);
        count += scratch
            .iter()
            .filter(|p| !(p[0] > 0.0 && gamma_of(p).gamma >= -REALIZABILITY_ROUNDING * p[0]))
            .count();
    }
    count
}

/// Number of elements whose cell-averaged number density is not positive.
pub fn count_negative_averages(mesh: &PhaseSpaceMesh, field: &MomentField) -> usize {
    let npe = mesh.nodes_per_element();
    (0..mesh.n_elements())
        .filter(|&e| !(cell_average_slice(mesh, &field.u[e * npe..(e + 1) * npe], e)[0] > 0.0))
        .count()
}

/// Element-integrated Eulerian number and energy `(𝖭_K, 𝖤_K)`:
/// `𝖭 = Σ w⁽²⁾ N`, `𝖤 = Σ w⁽³⁾ (N + v·G)` with absolute node weights.
pub fn element_number_energy(
    mesh: &PhaseSpaceMesh,
    velocity: &VelocityField,
    u: &[Vec4],
    e: usize,
) -> (f64, f64) {
    let (w2, w3) = mesh.energy_weights(e);
    let (_, i1, i2) = mesh.element_coords(e);
    let s = mesh.spatial_index(i1, i2);
    let nsn = mesh.spatial_nodes_per_element();
    let nqe = mesh.nodes_per_dim[0];
    let mut n_int = 0.0;
    let mut e_int = 0.0;
    for (k, x) in u.iter().enumerate() {
        let v = &velocity.v[s * nsn + k / nqe];
        n_int += w2[k] * x[0];
        e_int += w3[k] * (x[0] + dot3(v, &[x[1], x[2], x[3]]));
    }
    (n_int, e_int)
}

/// Element energies `𝖤_K` of the whole field (the energy-limiter snapshot).
pub fn element_energies(mesh: &PhaseSpaceMesh, velocity: &VelocityField, field: &MomentField) -> Vec<f64> {
    let npe = mesh.nodes_per_element();
    (0..mesh.n_elements())
        .map(|e| element_number_energy(mesh, velocity, &field.u[e * npe..(e + 1) * npe], e).1)
        .collect()
}

/// Pairwise number-neutral correction: solve
/// `θ₁N₁ + θ₂N₂ = 0`, `θ₁E₁ + θ₂E₂ = −δE`; `(0, 0)` for a singular system;
/// damped by `θ_min / min(θ₁, θ₂)` when `min(θ₁, θ₂) < θ_min`.
pub fn compute_correction(n1: f64, e1: f64, n2: f64, e2: f64, delta_e: f64, theta_min: f64) -> (f64, f64) {
    let det = n1 * e2 - n2 * e1;
    let scale = (n1 * e2).abs() + (n2 * e1).abs();
    if !(det.abs() > 1e-14 * scale) || !det.is_finite() {
        return (0.0, 0.0);
    }
    let mut t1 = n2 * delta_e / det;
    let mut t2 = -n1 * delta_e / det;
    let tmin = t1.min(t2);
    if tmin < theta_min {
        let g = theta_min / tmin;
        t1 *= g;
        t2 *= g;
    }
    // Keep every scaled density strictly positive.
    let floor = POSITIVITY_FLOOR - 1.0;
    (t1.max(floor), t2.max(floor))
}

/// Outcome of the energy limiter.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyLimiterReport {
    /// Columns in which at least one correction was applied.
    pub corrected_columns: usize,
    /// Largest remaining `|δE|` relative to the column energy scale.
    pub max_relative_residual: f64,
}

/// Energy limiter: restore each spatial column's Eulerian energy to the
/// snapshot `e_hat` (per element, taken before the realizability limiter)
/// with a forward sweep over ascending energy followed by the full backward
/// sweep.
pub fn energy_limiter(
    mesh: &PhaseSpaceMesh,
    velocity: &VelocityField,
    field: &mut MomentField,
    e_hat: &[f64],
    cfg: &LimiterConfig,
) -> EnergyLimiterReport {
    let npe = mesh.nodes_per_element();
    let ne = mesh.n_energy();
    let mut report = EnergyLimiterReport::default();
    if ne < 2 {
        return report;
    }
    let mut nn = vec![0.0; ne];
    let mut ee = vec![0.0; ne];
    for s in 0..mesh.n_spatial_elements() {
        let elem = |ie: usize| ie + ne * s;
        for ie in 0..ne {
            let e = elem(ie);
            let (a, b) = element_number_energy(mesh, velocity, &field.u[e * npe..(e + 1) * npe], e);
            nn[ie] = a;
            ee[ie] = b;
        }
        let scale: f64 = (0..ne).map(|ie| e_hat[elem(ie)].abs()).sum();
        let tol = cfg.energy_tol * scale;
        let mut corrected = false;
        let mut apply = |i: usize, j: usize, delta_e: &mut f64, nn: &mut [f64], ee: &mut [f64]| {
            let (ti, tj) = compute_correction(nn[i], ee[i], nn[j], ee[j], *delta_e, cfg.theta_min);
            if ti == 0.0 && tj == 0.0 {
                return;
            }
            *delta_e += ti * ee[i] + tj * ee[j];
            for (idx, th) in [(i, ti), (j, tj)] {
                let e = elem(idx);
                let f = 1.0 + th;
                for x in field.u[e * npe..(e + 1) * npe].iter_mut() {
                    for c in x.iter_mut() {
                        *c *= f;
                    }
                }
                nn[idx] *= f;
                ee[idx] *= f;
            }
            corrected = true;
        };
        let mut delta_e = ee[0] - e_hat[elem(0)];
        for n in 0..ne - 1 {
            delta_e += ee[n + 1] - e_hat[elem(n + 1)];
            if delta_e.abs() > tol {
                apply(n, n + 1, &mut delta_e, &mut nn, &mut ee);
            }
        }
        // Full backward sweep over the pairs (n, n−1), n = N−1, …, 2 (1-based).
        for n in (1..ne - 1).rev() {
            if delta_e.abs() > tol {
                apply(n, n - 1, &mut delta_e, &mut nn, &mut ee);
            }
        }
        if corrected {
            report.corrected_columns += 1;
        }
        if scale > 0.0 {
            report.max_relative_residual = report.max_relative_residual.max(delta_e.abs() / scale);
        }
    }
    report
}
