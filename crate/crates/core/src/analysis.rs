//! Verification and diagnostic tools.
//!
//! * Wave-speed analysis: the closed-form 1D flux Jacobian and scans of its
//!   spectral radius, plus full 4×4 Jacobians of `F^i(U)` built from the
//!   analytic derivatives of `k D` with respect to the primitive moments.
//! * Scans of the Eddington-factor bounds used by the contraction proofs,
//!   and finite-difference estimates of the two Lipschitz bounds on
//!   `v^i k_ij D`.
//! * Runtime diagnostics: the Eulerian number/energy balance ledger and the
//!   RMS energy of the comoving spectrum at a probe point.

use nalgebra::Matrix4;
use rand::Rng;

use crate::closure::{ClosureSpec, FluxFactor};
use crate::dg::{symmetric_eigenvalues, MomentField, VelocityField};
use crate::error::{Error, Result};
use crate::limiters::element_number_energy;
use crate::mesh::{lagrange_values, PhaseSpaceMesh};
use crate::moments::{ClosureState, Vec4};
use crate::solvers::{conversion_solve, random_realizable, random_unit_vector, SolverConfig};

/// Below this flux factor the closure derivatives use their isotropic limit.
const H_ISOTROPIC: f64 = 1e-14;
/// Denominators of the 1D Jacobian prefactor below this are singular.
const SINGULAR_DENOMINATOR: f64 = 1e-14;
/// Relative step of the central finite differences.
pub const FD_STEP: f64 = 1e-6;

/// Uniform `(v, h)` grid on `[0, 1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrid {
    pub v: Vec<f64>,
    pub h: Vec<f64>,
}

impl ScanGrid {
    pub fn uniform(nv: usize, nh: usize) -> Self {
        let lin = |n: usize| -> Vec<f64> {
            if n <= 1 {
                vec![0.0]
            } else {
                (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
            }
        };
        ScanGrid { v: lin(nv), h: lin(nh) }
    }
}

/// Closed-form 1D flux Jacobian at one `(v, h)` point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian1d {
    pub matrix: [[f64; 2]; 2],
    /// Largest eigenvalue magnitude (`NaN` when `singular`).
    pub lambda_max: f64,
    /// The prefactor denominator vanished at this point.
    pub singular: bool,
}

/// Closed-form Jacobian `∂F¹/∂U` for `v = (v,0,0)`, `I = (hD,0,0)`.
pub fn flux_jacobian_1d(v: f64, h: f64, spec: &ClosureSpec) -> Result<Jacobian1d> {
    if !(v.abs() <= 1.0) || !(0.0..=1.0).contains(&h) {
        return Err(Error::Domain(format!(
            "1D Jacobian requires |v| <= 1 and h in [0, 1], got v = {v}, h = {h}"
        )));
    }
    let c = spec.eval(FluxFactor::new(h));
    let (psi, dpsi) = (c.psi, c.psi_prime);
    let denom = 1.0 - v * v * psi + v * (1.0 + v * h) * dpsi;
    let diag0 = v - v * psi + v * (v + h) * dpsi;
    let diag1 = v - v * psi + (1.0 + v * h) * dpsi;
    let w = 1.0 - v * v;
    if denom.abs() < SINGULAR_DENOMINATOR {
        return Ok(Jacobian1d {
            matrix: [[f64::NAN; 2]; 2],
            lambda_max: f64::NAN,
            singular: true,
        });
    }
    let m = [[diag0 / denom, w / denom], [w * (psi - h * dpsi) / denom, diag1 / denom]];
    // Since diag0 − diag1 = −(1 − v²)ψ′, the characteristic discriminant
    // factors as (1 − v²)² q / denom² with q = ψ′²/4 + ψ − hψ′. Using q avoids
    // the cancellation in the generic formula, which costs √ε accuracy at
    // the double root h = 1.
    let q = 0.25 * dpsi * dpsi + psi - h * dpsi;
    let half_tr = 0.5 * (diag0 + diag1);
    let lambda_max = if q >= 0.0 {
        (half_tr.abs() + w * q.sqrt()) / denom.abs()
    } else {
        (half_tr * half_tr - w * w * q).sqrt() / denom.abs()
    };
    Ok(Jacobian1d {
        matrix: m,
        lambda_max,
        singular: false,
    })
}

/// Largest eigenvalue magnitude of a real 2×2 matrix.
pub fn spectral_radius_2x2(m: &[[f64; 2]; 2]) -> f64 {
    let half_tr = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    let disc = half_diff * half_diff + m[0][1] * m[1][0];
    if disc >= 0.0 {
        let r = disc.sqrt();
        (half_tr + r).abs().max((half_tr - r).abs())
    } else {
        // Complex pair: |λ|² = det.
        (m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs().sqrt()
    }
}

/// One point of a wave-speed scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSpeedPoint {
    pub v: f64,
    pub h: f64,
    pub lambda_max: f64,
    pub singular: bool,
}

/// `λ_max` of the closed-form 1D Jacobian over a `(v, h)` grid.
pub fn wavespeed_scan_1d(grid: &ScanGrid, spec: &ClosureSpec) -> Result<Vec<WaveSpeedPoint>> {
    let mut out = Vec::with_capacity(grid.v.len() * grid.h.len());
    for &v in &grid.v {
        for &h in &grid.h {
            let j = flux_jacobian_1d(v, h, spec)?;
            out.push(WaveSpeedPoint {
                v,
                h,
                lambda_max: j.lambda_max,
                singular: j.singular,
            });
        }
    }
    Ok(out)
}

/// Derivatives of the closure product `P_ij = k_ij D`:
/// `(∂P_ij/∂D, ∂P_ij/∂I_k)`.
pub fn kd_derivatives(m: &Vec4, spec: &ClosureSpec) -> ([[f64; 3]; 3], [[[f64; 3]; 3]; 3]) {
    let d = m[0];
    let i = [m[1], m[2], m[3]];
    let inorm = (i[0] * i[0] + i[1] * i[1] + i[2] * i[2]).sqrt();
    let h = if d > 0.0 { inorm / d } else { 0.0 };
    let mut dd = [[0.0; 3]; 3];
    let mut di = [[[0.0; 3]; 3]; 3];
    if h < H_ISOTROPIC {
        for (a, row) in dd.iter_mut().enumerate() {
            row[a] = 1.0 / 3.0;
        }
        return (dd, di);
    }
    let n = [i[0] / inorm, i[1] / inorm, i[2] / inorm];
    let c = spec.eval(FluxFactor::new(h));
    let (psi, dpsi) = (c.psi, c.psi_prime);
    let phi2_half = 0.5 * (3.0 * psi - 1.0) / h;
    for a in 0..3 {
        for b in 0..3 {
            let delta = if a == b { 1.0 } else { 0.0 };
            let t = 3.0 * n[a] * n[b] - delta;
            let k_ab = 0.5 * ((1.0 - psi) * delta + (3.0 * psi - 1.0) * n[a] * n[b]);
            dd[a][b] = -0.5 * t * dpsi * h + k_ab;
            for k in 0..3 {
                let dak = if a == k { 1.0 } else { 0.0 };
                let dbk = if b == k { 1.0 } else { 0.0 };
                di[a][b][k] = 0.5 * dpsi * t * n[k]
                    + phi2_half * (dak * n[b] + dbk * n[a] - 2.0 * n[a] * n[b] * n[k]);
            }
        }
    }
    (dd, di)
}

/// Analytic Jacobian `∂F^dir/∂U` at primitive state `m` and velocity `v`,
/// obtained as `(∂F/∂M)(∂U/∂M)⁻¹`.
pub fn flux_jacobian(m: &Vec4, v: &[f64; 3], dir: usize, spec: &ClosureSpec) -> Result<Matrix4<f64>> {
    let (dd, di) = kd_derivatives(m, spec);
    let mut du = Matrix4::<f64>::zeros();
    let mut df = Matrix4::<f64>::zeros();
    du[(0, 0)] = 1.0;
    for k in 0..3 {
        du[(0, k + 1)] = v[k];
    }
    df[(0, 0)] = v[dir];
    df[(0, dir + 1)] = 1.0;
    for j in 0..3 {
        du[(j + 1, 0)] = (0..3).map(|a| v[a] * dd[a][j]).sum();
        df[(j + 1, 0)] = dd[dir][j];
        for k in 0..3 {
            let delta = if j == k { 1.0 } else { 0.0 };
            du[(j + 1, k + 1)] = delta + (0..3).map(|a| v[a] * di[a][j][k]).sum::<f64>();
            df[(j + 1, k + 1)] = v[dir] * delta + di[dir][j][k];
        }
    }
    let inv = du
        .try_inverse()
        .ok_or_else(|| Error::Numerical("primitive-to-conserved Jacobian is singular".into()))?;
    Ok(df * inv)
}

/// Largest eigenvalue magnitude of a 4×4 matrix.
pub fn spectral_radius(a: &Matrix4<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Finite-difference Jacobian of `U ↦ F^dir(U)` through the conversion
/// solver (central differences with step `FD_STEP · N`).
pub fn flux_jacobian_fd(
    u: &Vec4,
    v: &[f64; 3],
    dir: usize,
    spec: &ClosureSpec,
    solver: &SolverConfig,
) -> Matrix4<f64> {
    let delta = FD_STEP * u[0];
    let flux_of = |uu: &Vec4| -> Vec4 {
        let (m, _) = conversion_solve(uu, v, uu, solver, spec);
        ClosureState::new(&m, spec).flux(dir, v)
    };
    let mut jac = Matrix4::<f64>::zeros();
    for k in 0..4 {
        let mut up = *u;
        let mut um = *u;
        up[k] += delta;
        um[k] -= delta;
        let (fp, fm) = (flux_of(&up), flux_of(&um));
        for r in 0..4 {
            jac[(r, k)] = (fp[r] - fm[r]) / (2.0 * delta);
        }
    }
    jac
}

/// Maximum wave speed for one velocity magnitude of the 3D scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSpeed3d {
    pub v: f64,
    pub lambda_max: f64,
}

/// 3D scan: for each `|v|`, the largest `λ_max` over `samples` random
/// velocity directions and realizable states (`h ∈ [0, 1]`), over all three
/// flux directions.
pub fn wavespeed_scan_3d<R: Rng + ?Sized>(
    speeds: &[f64],
    samples: usize,
    rng: &mut R,
    spec: &ClosureSpec,
) -> Result<Vec<WaveSpeed3d>> {
    let mut out = Vec::with_capacity(speeds.len());
    for &speed in speeds {
        if !(0.0..1.0).contains(&speed) {
            return Err(Error::Domain(format!("3D scan requires 0 <= v < 1, got {speed}")));
        }
        let mut lmax: f64 = 0.0;
        for _ in 0..samples {
            let n = random_unit_vector(rng);
            let v = [speed * n[0], speed * n[1], speed * n[2]];
            let m = random_realizable(rng, 1.0, (1.0, 1.0)).to_array();
            for dir in 0..3 {
                lmax = lmax.max(spectral_radius(&flux_jacobian(&m, &v, dir, spec)?));
            }
        }
        out.push(WaveSpeed3d { v: speed, lambda_max: lmax });
    }
    Ok(out)
}

/// Eddington-factor quantities entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiTerms {
    pub psi: f64,
    pub psi_prime: f64,
    pub psi_second: f64,
    /// `φ₁ = 3ψ − 1 − 3ψ′h`.
    pub phi1: f64,
    /// `φ₂ = (3ψ − 1)/h` (analytic limit 0 at `h = 0`).
    pub phi2: f64,
    /// `dφ₂/dh = −φ₁/h²` (analytic limit `3ψ″(0)/2` at `h = 0`).
    pub phi2_prime: f64,
}

pub fn phi_terms(h: f64, spec: &ClosureSpec) -> PhiTerms {
    let p = spec.eval_psi_derivatives(FluxFactor::new(h));
    let phi1 = 3.0 * p.psi - 1.0 - 3.0 * p.psi_prime * h;
    let (phi2, phi2_prime) = if h < H_ISOTROPIC {
        (0.0, 1.5 * p.psi_second)
    } else {
        ((3.0 * p.psi - 1.0) / h, -phi1 / (h * h))
    };
    PhiTerms {
        psi: p.psi,
        psi_prime: p.psi_prime,
        psi_second: p.psi_second,
        phi1,
        phi2,
        phi2_prime,
    }
}

/// `φ₂² − ψ′φ₂ + (ψ′)²`, the quantity bounded by 4 in the `∇_I` Lipschitz
/// estimate.
pub fn gradient_bound_quantity(t: &PhiTerms) -> f64 {
    t.phi2 * t.phi2 - t.psi_prime * t.phi2 + t.psi_prime * t.psi_prime
}

/// Outcome of one bound over a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    pub label: &'static str,
    pub pass: bool,
    /// Smallest margin over the grid (negative means violated).
    pub worst_margin: f64,
    /// Flux factor at which the smallest margin occurs.
    pub worst_h: f64,
}

/// Absolute slack for the non-strict bounds, absorbing rounding where a
/// bound is attained (e.g. `h² ≤ ψ` at `h = 1`).
pub const BOUND_ROUNDING_SLACK: f64 = 1e-13;

/// Check the bounds (a)–(f) on the given flux-factor grid. Bounds (e)–(f)
/// use only the points with `h < 1`.
pub fn bound_scan(h_grid: &[f64], spec: &ClosureSpec) -> Vec<BoundResult> {
    type Margin = fn(f64, &PhiTerms) -> f64;
    let bounds: [(&'static str, Margin, bool); 7] = [
        ("(a) phi1 >= -4", |_, t| t.phi1 + 4.0, false),
        ("(a) phi1 <= 0", |_, t| -t.phi1, false),
        ("(b) phi2^2 - psi' phi2 >= 0", |_, t| t.phi2 * t.phi2 - t.psi_prime * t.phi2, false),
        (
            "(c) 3psi'^2 - 3psi' phi2 + phi2^2 >= 0",
            |_, t| 3.0 * t.psi_prime * t.psi_prime - 3.0 * t.psi_prime * t.phi2 + t.phi2 * t.phi2,
            false,
        ),
        (
            "(d) d/dh(phi2^2 - psi' phi2 + psi'^2) > 0",
            |_, t| {
                2.0 * t.phi2 * t.phi2_prime - t.psi_second * t.phi2 - t.psi_prime * t.phi2_prime
                    + 2.0 * t.psi_prime * t.psi_second
            },
            false,
        ),
        (
            "(e) psi - h^2 - (1 - psi)^2/4 >= 0",
            |h, t| t.psi - h * h - 0.25 * (1.0 - t.psi) * (1.0 - t.psi),
            true,
        ),
        ("(f) h^2 <= psi <= 1", |h, t| (t.psi - h * h).min(1.0 - t.psi), true),
    ];
    let terms: Vec<(f64, PhiTerms)> = h_grid.iter().map(|&h| (h, phi_terms(h, spec))).collect();
    bounds
        .iter()
        .map(|&(label, margin, open_interval)| {
            let mut worst = (f64::INFINITY, f64::NAN);
            for (h, t) in &terms {
                if open_interval && *h >= 1.0 {
                    continue;
                }
                let mg = margin(*h, t);
                if mg < worst.0 {
                    worst = (mg, *h);
                }
            }
            let strict = label.starts_with("(d)");
            let pass = if strict { worst.0 > 0.0 } else { worst.0 >= -BOUND_ROUNDING_SLACK };
            BoundResult {
                label,
                pass,
                worst_margin: worst.0,
                worst_h: worst.1,
            }
        })
        .collect()
}

/// Uniform grid of `n` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// `g(M) = v^i k_ij D`.
fn vkd_of(m: &Vec4, v: &[f64; 3], spec: &ClosureSpec) -> [f64; 3] {
    ClosureState::new(m, spec).vkd(v)
}

/// Finite-difference Lipschitz ratios at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzSample {
    /// `‖∂_D(v^i k_ij D)‖ / v`.
    pub d_ratio: f64,
    /// `‖∇_I(v^i k_ij D)‖₂ / (2v)`.
    pub i_ratio: f64,
}

/// Central-difference estimate of both Lipschitz ratios at `(m, v)`.
pub fn lipschitz_ratios(m: &Vec4, v: &[f64; 3], spec: &ClosureSpec) -> LipschitzSample {
    let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let delta = FD_STEP * m[0];
    let column = |k: usize| -> [f64; 3] {
        let mut mp = *m;
        let mut mm = *m;
        mp[k] += delta;
        mm[k] -= delta;
        let (gp, gm) = (vkd_of(&mp, v, spec), vkd_of(&mm, v, spec));
        [
            (gp[0] - gm[0]) / (2.0 * delta),
            (gp[1] - gm[1]) / (2.0 * delta),
            (gp[2] - gm[2]) / (2.0 * delta),
        ]
    };
    let gd = column(0);
    let d_norm = (gd[0] * gd[0] + gd[1] * gd[1] + gd[2] * gd[2]).sqrt();
    let cols = [column(1), column(2), column(3)];
    // JᵀJ with J[j][k] = cols[k][j].
    let mut jtj = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            jtj[a][b] = (0..3).map(|j| cols[a][j] * cols[b][j]).sum();
        }
    }
    let sigma_max = symmetric_eigenvalues(&jtj)
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .sqrt();
    LipschitzSample {
        d_ratio: d_norm / speed,
        i_ratio: sigma_max / (2.0 * speed),
    }
}

/// Closed-form `‖∂_D(v^i k_ij D)‖ / v` given `φ₁` and `cos ∠(v, n̂)`.
pub fn d_ratio_closed_form(phi1: f64, cos_angle: f64) -> f64 {
    let c2 = cos_angle * cos_angle;
    ((phi1 * phi1 / 12.0 + phi1 / 3.0) * c2 + (phi1 * phi1 / 36.0 - phi1 / 9.0 + 1.0 / 9.0)).sqrt()
}

/// Largest Lipschitz ratios over a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzReport {
    pub samples: usize,
    pub max_d_ratio: f64,
    pub max_i_ratio: f64,
}

/// Lipschitz scan over random realizable states (`h ≤ h_max`) and random
/// velocities with `0 < |v| < 1`.
pub fn lipschitz_scan<R: Rng + ?Sized>(
    samples: usize,
    h_max: f64,
    rng: &mut R,
    spec: &ClosureSpec,
) -> LipschitzReport {
    let mut rep = LipschitzReport {
        samples,
        max_d_ratio: 0.0,
        max_i_ratio: 0.0,
    };
    for _ in 0..samples {
        let m = random_realizable(rng, h_max, (0.1, 10.0)).to_array();
        let speed: f64 = rng.gen_range(1e-3..1.0);
        let n = random_unit_vector(rng);
        let v = [speed * n[0], speed * n[1], speed * n[2]];
        let s = lipschitz_ratios(&m, &v, spec);
        rep.max_d_ratio = rep.max_d_ratio.max(s.d_ratio);
        rep.max_i_ratio = rep.max_i_ratio.max(s.i_ratio);
    }
    rep
}

/// Phase-space-integrated Eulerian number and energy, `4π ∫∫ {N, E} ε² dε dx`.
pub fn domain_totals(mesh: &PhaseSpaceMesh, velocity: &VelocityField, field: &MomentField) -> (f64, f64) {
    let npe = mesh.nodes_per_element();
    let mut tot = (0.0, 0.0);
    for e in 0..mesh.n_elements() {
        let (n, en) = element_number_energy(mesh, velocity, &field.u[e * npe..(e + 1) * npe], e);
        tot.0 += n;
        tot.1 += en;
    }
    (FOUR_PI * tot.0, FOUR_PI * tot.1)
}

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Eulerian number and energy balance: interior changes relative to the
/// initial state and time-integrated boundary outflow (both with the 4π
/// angular factor).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceLedger {
    pub t: f64,
    pub n_initial: f64,
    pub e_initial: f64,
    pub dn_int: f64,
    pub dn_ext: f64,
    pub de_int: f64,
    pub de_ext: f64,
}

impl BalanceLedger {
    pub fn new(mesh: &PhaseSpaceMesh, velocity: &VelocityField, field: &MomentField) -> Self {
        let (n, e) = domain_totals(mesh, velocity, field);
        BalanceLedger {
            t: 0.0,
            n_initial: n,
            e_initial: e,
            dn_int: 0.0,
            dn_ext: 0.0,
            de_int: 0.0,
            de_ext: 0.0,
        }
    }

    /// Record one accepted step of length `dt` with its time-integrated
    /// outflow (without the 4π factor, as reported by the time stepper).
    pub fn record(
        &mut self,
        mesh: &PhaseSpaceMesh,
        velocity: &VelocityField,
        field: &MomentField,
        dt: f64,
        number_outflow: f64,
        energy_outflow: f64,
    ) {
        let (n, e) = domain_totals(mesh, velocity, field);
        self.t += dt;
        self.dn_int = n - self.n_initial;
        self.de_int = e - self.e_initial;
        self.dn_ext += FOUR_PI * number_outflow;
        self.de_ext += FOUR_PI * energy_outflow;
    }

    pub fn dn_sum(&self) -> f64 {
        self.dn_int + self.dn_ext
    }

    pub fn de_sum(&self) -> f64 {
        self.de_int + self.de_ext
    }
}

/// Comoving spectrum `(ε, D)` at a spatial probe point, interpolated from
/// the nodal values of the containing spatial element.
pub fn spectrum_at(mesh: &PhaseSpaceMesh, field: &MomentField, x: [f64; 2]) -> Result<Vec<(f64, f64)>> {
    let locate = |d: usize| -> Result<(usize, Vec<f64>)> {
        if d >= mesh.dims {
            return Ok((0, vec![1.0]));
        }
        let edges = &mesh.space_edges[d];
        let (lo, hi) = (edges[0], *edges.last().unwrap());
        if !(x[d] >= lo && x[d] <= hi) {
            return Err(Error::Domain(format!("probe x{} = {} outside [{lo}, {hi}]", d + 1, x[d])));
        }
        let i = edges.partition_point(|&e| e <= x[d]).saturating_sub(1).min(edges.len() - 2);
        let xi = (x[d] - edges[i]) / (edges[i + 1] - edges[i]);
        Ok((i, lagrange_values(&mesh.tables.space.lg.points, xi)))
    };
    let (i1, l1) = locate(0)?;
    let (i2, l2) = locate(1)?;
    let npe = mesh.nodes_per_element();
    let nqe = mesh.nodes_per_dim[0];
    let mut out = Vec::with_capacity(mesh.n_energy() * nqe);
    for ie in 0..mesh.n_energy() {
        let e = mesh.element_index(ie, i1, i2);
        for a in 0..nqe {
            let mut d = 0.0;
            for (c, w2) in l2.iter().enumerate() {
                for (b, w1) in l1.iter().enumerate() {
                    d += w1 * w2 * field.m[e * npe + mesh.node_index(a, b, c)][0];
                }
            }
            out.push((mesh.eps_node(ie, a), d));
        }
    }
    Ok(out)
}

/// RMS energy `sqrt(∫ D ε⁵ dε / ∫ D ε³ dε)` of the comoving spectrum at `x`,
/// using the nodal energy quadrature.
pub fn rms_energy(mesh: &PhaseSpaceMesh, field: &MomentField, x: [f64; 2]) -> Result<f64> {
    let spec = spectrum_at(mesh, field, x)?;
    let nqe = mesh.nodes_per_dim[0];
    let w = &mesh.tables.energy.lg.weights;
    let (mut num, mut den) = (0.0, 0.0);
    for (idx, (eps, d)) in spec.iter().enumerate() {
        let (ie, a) = (idx / nqe, idx % nqe);
        let wq = if mesh.monochromatic { 1.0 } else { w[a] * mesh.deps(ie) };
        num += wq * d * eps.powi(5);
        den += wq * d * eps.powi(3);
    }
    if !(den > 0.0) {
        return Err(Error::Numerical("nonpositive spectrum normalization".into()));
    }
    Ok((num / den).sqrt())
}

/// RMS energy of an analytic spectrum on the same nodal energy quadrature.
pub fn rms_energy_of(mesh: &PhaseSpaceMesh, spectrum: &dyn Fn(f64) -> f64) -> f64 {
    let nqe = mesh.nodes_per_dim[0];
    let w = &mesh.tables.energy.lg.weights;
    let (mut num, mut den) = (0.0, 0.0);
    for ie in 0..mesh.n_energy() {
        for a in 0..nqe {
            let eps = mesh.eps_node(ie, a);
            let wq = if mesh.monochromatic { 1.0 } else { w[a] * mesh.deps(ie) };
            let d = spectrum(eps);
            num += wq * d * eps.powi(5);
            den += wq * d * eps.powi(3);
        }
    }
    (num / den).sqrt()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
