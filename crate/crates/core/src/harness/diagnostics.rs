//! Post-processing of benchmark runs: integrated profiles, spectra with
//! their special-relativistic references, boundary fluxes and the scalar
//! metrics quoted for each problem.

use crate::analysis::{rms_energy, rms_energy_of, spectrum_at};
use crate::dg::MomentField;
use crate::error::{Error, Result};
use crate::mesh::{lagrange_values, PhaseSpaceMesh};

use super::problems::{doppler_factor, doppler_spectrum, ProblemName, Simulation, VORTEX_AMPLITUDE};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Which nodal quantity to integrate over energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// Comoving number density `D`.
    ComovingNumber,
    /// Comoving `x¹` number flux `I¹`.
    ComovingFlux,
    /// Eulerian number density `𝒩`.
    EulerianNumber,
}

/// Energy weight `w_a |K_ε| ε_a²` (1 on monochromatic grids).
fn number_weight(mesh: &PhaseSpaceMesh, ie: usize, a: usize) -> f64 {
    if mesh.monochromatic {
        1.0
    } else {
        let eps = mesh.eps_node(ie, a);
        mesh.tables.energy.lg.weights[a] * mesh.deps(ie) * eps * eps
    }
}

fn pick(field: &MomentField, idx: usize, q: Quantity) -> f64 {
    match q {
        Quantity::ComovingNumber => field.m[idx][0],
        Quantity::ComovingFlux => field.m[idx][1],
        Quantity::EulerianNumber => field.u[idx][0],
    }
}

/// `4π ∫ q ε² dε` at spatial position `x`, interpolated within the
/// containing spatial element.
pub fn integrated_at(mesh: &PhaseSpaceMesh, field: &MomentField, x: [f64; 2], q: Quantity) -> Result<f64> {
    let mut weights = Vec::with_capacity(2);
    let mut index = [0usize; 2];
    for d in 0..2 {
        if d >= mesh.dims {
            weights.push(vec![1.0]);
            continue;
        }
        let edges = &mesh.space_edges[d];
        let (lo, hi) = (edges[0], *edges.last().unwrap());
        if !(x[d] >= lo && x[d] <= hi) {
            return Err(Error::Domain(format!("position x{} = {} outside [{lo}, {hi}]", d + 1, x[d])));
        }
        let i = edges.partition_point(|&e| e <= x[d]).saturating_sub(1).min(edges.len() - 2);
        index[d] = i;
        let xi = (x[d] - edges[i]) / (edges[i + 1] - edges[i]);
        weights.push(lagrange_values(&mesh.tables.space.lg.points, xi));
    }
    let npe = mesh.nodes_per_element();
    let nqe = mesh.nodes_per_dim[0];
    let mut total = 0.0;
    for ie in 0..mesh.n_energy() {
        let e = mesh.element_index(ie, index[0], index[1]);
        for a in 0..nqe {
            let mut val = 0.0;
            for (c, w2) in weights[1].iter().enumerate() {
                for (b, w1) in weights[0].iter().enumerate() {
                    val += w1 * w2 * pick(field, e * npe + mesh.node_index(a, b, c), q);
                }
            }
            total += number_weight(mesh, ie, a) * val;
        }
    }
    Ok(FOUR_PI * total)
}

/// One spatial node of a 1D profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub x: f64,
    pub v: f64,
    /// `4π ∫ D ε² dε`.
    pub comoving_number: f64,
    /// `4π ∫ 𝒩 ε² dε`.
    pub eulerian_number: f64,
    pub eps_rms: f64,
    pub eps_rms_analytic: f64,
}

/// Velocity of the frame in which the inflow spectrum is prescribed.
fn source_velocity(sim: &Simulation, x2: f64) -> [f64; 3] {
    let mesh = sim.mesh();
    let x1 = mesh.space_edges[0][0];
    (sim.spec.velocity())([x1, x2, 0.0])
}

fn inflow_amplitude(name: ProblemName) -> f64 {
    if name == ProblemName::TransparentVortex {
        VORTEX_AMPLITUDE
    } else {
        1.0
    }
}

/// Analytic comoving spectrum at `x` for the spectral problems.
pub fn analytic_spectrum(sim: &Simulation, x: [f64; 2]) -> impl Fn(f64) -> f64 {
    let v_obs = (sim.spec.velocity())([x[0], x[1], 0.0]);
    let s = doppler_factor(v_obs, source_velocity(sim, x[1]));
    let amp = inflow_amplitude(sim.spec.name);
    move |eps| doppler_spectrum(eps, s, amp)
}

/// Profile along `x¹` at every spatial node (1D problems).
pub fn profile_1d(sim: &Simulation) -> Vec<ProfilePoint> {
    let mesh = sim.mesh();
    let npe = mesh.nodes_per_element();
    let nqe = mesh.nodes_per_dim[0];
    let n1 = mesh.nodes_per_dim[1];
    let nsn = mesh.spatial_nodes_per_element();
    let mut out = Vec::with_capacity(mesh.n_space(0) * n1);
    for i1 in 0..mesh.n_space(0) {
        for b in 0..n1 {
            let x = mesh.x_node(0, i1, b);
            let s = mesh.spatial_index(i1, 0);
            let v = sim.stepper.op.velocity.v[s * nsn + mesh.spatial_node_index(b, 0)][0];
            let (mut dn, mut nn, mut m5, mut m3) = (0.0, 0.0, 0.0, 0.0);
            for ie in 0..mesh.n_energy() {
                let e = mesh.element_index(ie, i1, 0);
                for a in 0..nqe {
                    let idx = e * npe + mesh.node_index(a, b, 0);
                    let w = number_weight(mesh, ie, a);
                    let eps = mesh.eps_node(ie, a);
                    dn += w * sim.field.m[idx][0];
                    nn += w * sim.field.u[idx][0];
                    m5 += w * eps.powi(3) * sim.field.m[idx][0];
                    m3 += w * eps * sim.field.m[idx][0];
                }
            }
            let (eps_rms, eps_rms_analytic) = if mesh.monochromatic {
                (f64::NAN, f64::NAN)
            } else {
                let an = analytic_spectrum(sim, [x, 0.0]);
                ((m5 / m3).sqrt(), rms_energy_of(mesh, &an))
            };
            out.push(ProfilePoint {
                x,
                v,
                comoving_number: FOUR_PI * dn,
                eulerian_number: FOUR_PI * nn,
                eps_rms,
                eps_rms_analytic,
            });
        }
    }
    out
}

/// Spectrum rows `(x_probe, ε, D, D_analytic)` at a probe (vortex probes
/// lie on `x² = 0`).
pub fn probe_spectrum(sim: &Simulation, x_probe: f64) -> Result<Vec<(f64, f64, f64, f64)>> {
    let x = [x_probe, 0.0];
    let an = analytic_spectrum(sim, x);
    Ok(spectrum_at(sim.mesh(), &sim.field, x)?
        .into_iter()
        .map(|(eps, d)| (x_probe, eps, d, an(eps)))
        .collect())
}

/// Relative RMS-energy error `|ε_RMS − ε_RMS,A| / ε_RMS,A` at a probe.
pub fn rms_relative_error(sim: &Simulation, x: [f64; 2]) -> Result<f64> {
    let num = rms_energy(sim.mesh(), &sim.field, x)?;
    let an = rms_energy_of(sim.mesh(), &analytic_spectrum(sim, x));
    Ok((num - an).abs() / an)
}

/// `4π ∫ D_A ε² dε` of the analytic spectrum at `x` on the nodal quadrature.
pub fn analytic_number_at(sim: &Simulation, x: [f64; 2]) -> f64 {
    let mesh = sim.mesh();
    let an = analytic_spectrum(sim, x);
    let nqe = mesh.nodes_per_dim[0];
    let mut total = 0.0;
    for ie in 0..mesh.n_energy() {
        for a in 0..nqe {
            total += number_weight(mesh, ie, a) * an(mesh.eps_node(ie, a));
        }
    }
    FOUR_PI * total
}

/// Relative energy violation `(ΔE_int + ΔE_ext) / ΔE_int` at the current time.
pub fn relative_energy_violation(sim: &Simulation) -> f64 {
    sim.ledger.de_sum() / sim.ledger.de_int
}

/// Largest `|ΔN_int + ΔN_ext|` over the run relative to `|ΔN_int|` now.
pub fn relative_number_violation(sim: &Simulation) -> f64 {
    sim.totals.max_abs_number_balance / sim.ledger.dn_int.abs()
}

/// Energy-integrated `x¹` comoving flux traces at the inner and outer `x¹`
/// boundaries, one pair per transverse node: `(x², I¹(lo), I¹(hi))`.
pub fn x1_boundary_fluxes(sim: &Simulation) -> Vec<(f64, f64, f64)> {
    let mesh = sim.mesh();
    let npe = mesh.nodes_per_element();
    let nqe = mesh.nodes_per_dim[0];
    let [_, n1, n2] = mesh.nodes_per_dim;
    let last = mesh.n_space(0) - 1;
    let tables = &mesh.tables.space;
    let mut out = Vec::new();
    for i2 in 0..mesh.n_space(1) {
        for c in 0..n2 {
            let x2 = if mesh.dims == 2 { mesh.x_node(1, i2, c) } else { 0.0 };
            let (mut lo, mut hi) = (0.0, 0.0);
            for ie in 0..mesh.n_energy() {
                let e_lo = mesh.element_index(ie, 0, i2);
                let e_hi = mesh.element_index(ie, last, i2);
                for a in 0..nqe {
                    let w = number_weight(mesh, ie, a);
                    for b in 0..n1 {
                        lo += w * tables.at_lo[b] * sim.field.m[e_lo * npe + mesh.node_index(a, b, c)][1];
                        hi += w * tables.at_hi[b] * sim.field.m[e_hi * npe + mesh.node_index(a, b, c)][1];
                    }
                }
            }
            out.push((x2, FOUR_PI * lo, FOUR_PI * hi));
        }
    }
    out
}

/// `max over x² of |I¹(hi) − I¹(lo)| / I¹(lo)`.
pub fn max_relative_flux_difference(sim: &Simulation) -> f64 {
    x1_boundary_fluxes(sim)
        .iter()
        .map(|&(_, lo, hi)| (hi - lo).abs() / lo.abs())
        .fold(0.0, f64::max)
}
