//! Nodal discontinuous Galerkin phase-space operator.
//!
//! Collocation DG on the tensor-product LG nodes: every inner product is
//! evaluated with the `(k+1)`-point LG rule at the interpolation nodes, so
//! the mass matrix is diagonal and the semi-discrete system is a set of
//! nodal ODEs `dU/dt = B_h(U)`.
//!
//! Position-space fluxes use the Lax–Friedrichs flux with unit wave-speed
//! bound, evaluated with the face velocity `v̂` (average of the two velocity
//! traces) and the direction-restricted dissipation state `U[v̂^i]`.
//! Energy-space fluxes use an LF flux with dissipation on the primitive
//! moments and the wave-speed estimate `α^ε`, the spectral radius of
//! `−½(∂v + ∂vᵀ)`. The energy flux vanishes on both energy boundaries.

use crate::closure::ClosureSpec;
use crate::error::{Error, Result};
use crate::mesh::{Boundary, PhaseSpaceMesh};
use crate::moments::{dot3, gamma_of, norm3, ClosureState, ConservedMoments, Vec4};
use crate::solvers::{conversion_solve, SolverConfig};

/// Nodal velocity field, its projected derivatives and face velocities.
#[derive(Debug, Clone)]
pub struct VelocityField {
    /// `v[s * nsn + sn]` at spatial node `sn` of spatial element `s`.
    pub v: Vec<[f64; 3]>,
    /// `dv[s * nsn + sn][i][j] = (∂v^j/∂x^i)_h`.
    pub dv: Vec<[[f64; 3]; 3]>,
    /// Face velocities `v̂`: `face_v[d][face * nt + t]`, where faces in
    /// direction `d` are indexed `j + (n_d + 1)·i_other` and `t` is the
    /// transverse node.
    pub face_v: [Vec<[f64; 3]>; 2],
    /// `α^ε` at each spatial node.
    pub alpha_eps: Vec<f64>,
    /// Whether `dv` vanishes at each spatial node.
    pub dv_zero: Vec<bool>,
}

impl VelocityField {
    /// Largest `|v_h|` over the nodes of spatial element `s`.
    pub fn max_speed(&self, s: usize, nsn: usize) -> f64 {
        self.v[s * nsn..(s + 1) * nsn]
            .iter()
            .map(norm3)
            .fold(0.0, f64::max)
    }
}

/// Number of transverse nodes on a face normal to direction `d`.
fn transverse_nodes(mesh: &PhaseSpaceMesh, d: usize) -> usize {
    if d == 0 {
        mesh.nodes_per_dim[2]
    } else {
        mesh.nodes_per_dim[1]
    }
}

/// Spatial node index of position `p` along direction `d` with transverse node `t`.
#[inline]
fn line_spatial_node(mesh: &PhaseSpaceMesh, d: usize, p: usize, t: usize) -> usize {
    if d == 0 {
        mesh.spatial_node_index(p, t)
    } else {
        mesh.spatial_node_index(t, p)
    }
}

/// Spatial element adjacent across face `j` of direction `d` with transverse
/// element index `o` (the neighbor on the lower side is `j − 1`).
#[inline]
fn spatial_elem_dir(mesh: &PhaseSpaceMesh, d: usize, j: usize, o: usize) -> usize {
    if d == 0 {
        mesh.spatial_index(j, o)
    } else {
        mesh.spatial_index(o, j)
    }
}

/// Interpolate nodal velocities of an analytic field and compute the weak
/// derivative projection and the face averages.
pub fn project_velocity(
    mesh: &PhaseSpaceMesh,
    vfun: &dyn Fn([f64; 3]) -> [f64; 3],
) -> Result<VelocityField> {
    let nsn = mesh.spatial_nodes_per_element();
    let n_s = mesh.n_spatial_elements();
    let [_, n1, n2] = mesh.nodes_per_dim;
    let mut v = vec![[0.0; 3]; n_s * nsn];
    for i2 in 0..mesh.n_space(1) {
        for i1 in 0..mesh.n_space(0) {
            let s = mesh.spatial_index(i1, i2);
            for c in 0..n2 {
                for b in 0..n1 {
                    let x = [
                        mesh.x_node(0, i1, b),
                        if mesh.dims == 2 { mesh.x_node(1, i2, c) } else { 0.0 },
                        0.0,
                    ];
                    let mut val = vfun(x);
                    if mesh.dims == 1 {
                        val[1] = 0.0;
                    }
                    val[2] = 0.0;
                    if !(norm3(&val) < 1.0) {
                        return Err(Error::Config(format!(
                            "|v| must be < 1 at every node, got {} at x = {x:?}",
                            norm3(&val)
                        )));
                    }
                    v[s * nsn + mesh.spatial_node_index(b, c)] = val;
                }
            }
        }
    }
    from_nodal_velocity(mesh, v)
}

/// Build the face velocities and derivative projection from nodal values.
pub fn from_nodal_velocity(mesh: &PhaseSpaceMesh, v: Vec<[f64; 3]>) -> Result<VelocityField> {
    let nsn = mesh.spatial_nodes_per_element();
    let n_s = mesh.n_spatial_elements();
    let tab = &mesh.tables.space;
    let n = tab.n;
    let mut face_v: [Vec<[f64; 3]>; 2] = [vec![], vec![]];
    let mut dv = vec![[[0.0; 3]; 3]; n_s * nsn];
    for d in 0..mesh.dims {
        let nd = mesh.n_space(d);
        let no = mesh.n_space(1 - d);
        let nt = transverse_nodes(mesh, d);
        let periodic = mesh.bc[d].0.is_periodic();
        let trace = |s: usize, t: usize, hi: bool| -> [f64; 3] {
            let w = if hi { &tab.at_hi } else { &tab.at_lo };
            let mut out = [0.0; 3];
            for p in 0..n {
                let val = v[s * nsn + line_spatial_node(mesh, d, p, t)];
                for j in 0..3 {
                    out[j] += w[p] * val[j];
                }
            }
            out
        };
        let mut fv = vec![[0.0; 3]; (nd + 1) * no * nt];
        for o in 0..no {
            for j in 0..=nd {
                for t in 0..nt {
                    let left = if j > 0 {
                        Some(spatial_elem_dir(mesh, d, j - 1, o))
                    } else if periodic {
                        Some(spatial_elem_dir(mesh, d, nd - 1, o))
                    } else {
                        None
                    };
                    let right = if j < nd {
                        Some(spatial_elem_dir(mesh, d, j, o))
                    } else if periodic {
                        Some(spatial_elem_dir(mesh, d, 0, o))
                    } else {
                        None
                    };
                    let val = match (left, right) {
                        (Some(l), Some(r)) => {
                            let a = trace(l, t, true);
                            let b = trace(r, t, false);
                            [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
                        }
                        (Some(l), None) => trace(l, t, true),
                        (None, Some(r)) => trace(r, t, false),
                        (None, None) => unreachable!("a face has at least one element"),
                    };
                    fv[(j + (nd + 1) * o) * nt + t] = val;
                }
            }
        }
        // Weak derivative along direction d.
        for o in 0..no {
            for j in 0..nd {
                let s = spatial_elem_dir(mesh, d, j, o);
                let len = mesh.dx(d, j);
                for t in 0..nt {
                    let v_lo = fv[(j + (nd + 1) * o) * nt + t];
                    let v_hi = fv[(j + 1 + (nd + 1) * o) * nt + t];
                    for l in 0..n {
                        let mut acc = [0.0; 3];
                        for comp in 0..3 {
                            acc[comp] = v_hi[comp] * tab.at_hi[l] - v_lo[comp] * tab.at_lo[l];
                        }
                        for q in 0..n {
                            let vq = v[s * nsn + line_spatial_node(mesh, d, q, t)];
                            let wd = tab.lg.weights[q] * tab.deriv[q * n + l];
                            for comp in 0..3 {
                                acc[comp] -= wd * vq[comp];
                            }
                        }
                        let scale = 1.0 / (tab.lg.weights[l] * len);
                        let k = s * nsn + line_spatial_node(mesh, d, l, t);
                        for comp in 0..3 {
                            dv[k][d][comp] = acc[comp] * scale;
                        }
                    }
                }
            }
        }
        face_v[d] = fv;
    }
    let alpha_eps: Vec<f64> = dv.iter().map(alpha_energy).collect();
    let dv_zero = dv
        .iter()
        .map(|m| m.iter().all(|row| row.iter().all(|&x| x == 0.0)))
        .collect();
    Ok(VelocityField {
        v,
        dv,
        face_v,
        alpha_eps,
        dv_zero,
    })
}

/// Spectral radius of `A = −½(∂v + ∂vᵀ)`.
pub fn alpha_energy(dv: &[[f64; 3]; 3]) -> f64 {
    let mut a = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = -0.5 * (dv[i][j] + dv[j][i]);
        }
    }
    let ev = symmetric_eigenvalues(&a);
    ev.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Eigenvalues of a symmetric 3×3 matrix (trigonometric closed form).
pub fn symmetric_eigenvalues(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    if p1 == 0.0 {
        return [a[0][0], a[1][1], a[2][2]];
    }
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    [e1, e2, e3]
}

/// Conserved moments at every node, plus the cached primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentField {
    /// `u[e * npe + node]`.
    pub u: Vec<Vec4>,
    /// Primitive moments from the last conversion (same layout).
    pub m: Vec<Vec4>,
}

impl MomentField {
    pub fn zeros(mesh: &PhaseSpaceMesh) -> Self {
        let len = mesh.n_elements() * mesh.nodes_per_element();
        MomentField {
            u: vec![[0.0; 4]; len],
            m: vec![[0.0; 4]; len],
        }
    }

    pub fn element(&self, e: usize, npe: usize) -> &[Vec4] {
        &self.u[e * npe..(e + 1) * npe]
    }
}

/// Global LF flux in direction `dir` between two trace states given by
/// their closure states, with face velocity `v̂`.
#[inline]
pub fn lf_flux_spatial_states(a: &ClosureState, b: &ClosureState, vhat: &[f64; 3], dir: usize) -> Vec4 {
    let fa = a.flux(dir, vhat);
    let fb = b.flux(dir, vhat);
    let ua = a.conserved_directional(dir, vhat[dir]);
    let ub = b.conserved_directional(dir, vhat[dir]);
    [
        0.5 * (fa[0] + fb[0] - (ub[0] - ua[0])),
        0.5 * (fa[1] + fb[1] - (ub[1] - ua[1])),
        0.5 * (fa[2] + fb[2] - (ub[2] - ua[2])),
        0.5 * (fa[3] + fb[3] - (ub[3] - ua[3])),
    ]
}

/// Global LF flux in direction `dir` from conserved trace states: both
/// traces are converted to primitives with the face velocity `v̂`.
pub fn lf_flux_spatial(
    u_a: &ConservedMoments,
    u_b: &ConservedMoments,
    vhat: &[f64; 3],
    dir: usize,
    spec: &ClosureSpec,
    solver: &SolverConfig,
) -> Vec4 {
    let ua = u_a.to_array();
    let ub = u_b.to_array();
    let (ma, _) = conversion_solve(&ua, vhat, &ua, solver, spec);
    let (mb, _) = conversion_solve(&ub, vhat, &ub, solver, spec);
    lf_flux_spatial_states(
        &ClosureState::new(&ma, spec),
        &ClosureState::new(&mb, spec),
        vhat,
        dir,
    )
}

/// Energy-space LF flux and `α^ε` from primitive trace states at a spatial
/// node with velocity gradient `dv`.
pub fn lf_flux_energy(
    m_a: &Vec4,
    m_b: &Vec4,
    dv: &[[f64; 3]; 3],
    spec: &ClosureSpec,
) -> (Vec4, f64) {
    let alpha = alpha_energy(dv);
    let fa = ClosureState::new(m_a, spec).energy_flux(dv);
    let fb = ClosureState::new(m_b, spec).energy_flux(dv);
    (lf_energy_combine(&fa, &fb, m_a, m_b, alpha), alpha)
}

#[inline]
fn lf_energy_combine(fa: &Vec4, fb: &Vec4, m_a: &Vec4, m_b: &Vec4, alpha: f64) -> Vec4 {
    [
        0.5 * (fa[0] + fb[0] - alpha * (m_b[0] - m_a[0])),
        0.5 * (fa[1] + fb[1] - alpha * (m_b[1] - m_a[1])),
        0.5 * (fa[2] + fb[2] - alpha * (m_b[2] - m_a[2])),
        0.5 * (fa[3] + fb[3] - alpha * (m_b[3] - m_a[3])),
    ]
}

/// Cell average `U_K = (1/|K|) ∫_K U τ dε dx` by the collocation rule.
pub fn cell_average(mesh: &PhaseSpaceMesh, field: &MomentField, e: usize) -> ConservedMoments {
    ConservedMoments::from_array(cell_average_slice(mesh, field.element(e, mesh.nodes_per_element()), e))
}

/// Node weights of element `e` against `τ dε dx` (sum = `|K|`).
pub fn node_weights(mesh: &PhaseSpaceMesh, e: usize) -> Vec<f64> {
    mesh.energy_weights(e).0
}

pub(crate) fn cell_average_slice(mesh: &PhaseSpaceMesh, u: &[Vec4], e: usize) -> Vec4 {
    let w = node_weights(mesh, e);
    let mut acc = [0.0; 4];
    let mut wsum = 0.0;
    for (x, wk) in u.iter().zip(&w) {
        for c in 0..4 {
            acc[c] += wk * x[c];
        }
        wsum += wk;
    }
    [acc[0] / wsum, acc[1] / wsum, acc[2] / wsum, acc[3] / wsum]
}

/// Initial guess for a trace conversion: the trace of the nodal primitives
/// when it is realizable, else the conserved trace itself.
fn warm_start(m_trace: Vec4, u: &Vec4) -> Vec4 {
    if m_trace[0] > 0.0 && gamma_of(&m_trace).realizable {
        m_trace
    } else {
        *u
    }
}

/// Per-evaluation diagnostics of [`DgOperator::assemble_rhs`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RhsDiagnostics {
    /// Conversion solves performed.
    pub conversions: usize,
    /// Conversion solves that hit `max_iter`.
    pub conversion_failures: usize,
    /// Largest iteration count of any conversion.
    pub max_iterations: usize,
    /// Number flux leaving through the spatial boundary (per unit time,
    /// `∫ · ε² dε dA`, without the `4π`).
    pub number_outflow: f64,
    /// Eulerian energy flux `ε(F̂_N + v̂·F̂_G)` leaving the domain.
    pub energy_outflow: f64,
}

impl RhsDiagnostics {
    fn record(&mut self, iterations: usize, converged: bool) {
        self.conversions += 1;
        self.max_iterations = self.max_iterations.max(iterations);
        if !converged {
            self.conversion_failures += 1;
        }
    }
}

/// The semi-discrete DG operator on a fixed mesh and velocity field.
#[derive(Debug, Clone)]
pub struct DgOperator {
    pub mesh: PhaseSpaceMesh,
    pub closure: ClosureSpec,
    pub solver: SolverConfig,
    pub velocity: VelocityField,
    /// Prescribed primitive ghost states on inflow boundaries:
    /// `inflow[d][side][(ie * n_e + a) + NE * (o * nt + t)]`.
    inflow: [[Option<Vec<Vec4>>; 2]; 2],
    /// Whether energy-space advection is active (false on monochromatic grids).
    pub energy_advection: bool,
}

impl DgOperator {
    pub fn new(
        mesh: PhaseSpaceMesh,
        closure: ClosureSpec,
        solver: SolverConfig,
        velocity: VelocityField,
    ) -> Result<Self> {
        closure.validate()?;
        solver.validate()?;
        let nsn = mesh.spatial_nodes_per_element();
        if velocity.v.len() != mesh.n_spatial_elements() * nsn {
            return Err(Error::Config("velocity field does not match the mesh".into()));
        }
        let mut inflow: [[Option<Vec<Vec4>>; 2]; 2] = [[None, None], [None, None]];
        let ne = mesh.n_energy();
        let nqe = mesh.nodes_per_dim[0];
        for d in 0..mesh.dims {
            let nt = transverse_nodes(&mesh, d);
            let no = mesh.n_space(1 - d);
            for side in 0..2 {
                let bc = if side == 0 { &mesh.bc[d].0 } else { &mesh.bc[d].1 };
                if let Boundary::Inflow(profile) = bc {
                    let x_face = if side == 0 {
                        mesh.space_edges[d][0]
                    } else {
                        *mesh.space_edges[d].last().unwrap()
                    };
                    let mut data = vec![[0.0; 4]; ne * nqe * no * nt];
                    for o in 0..no {
                        for t in 0..nt {
                            let xt = if mesh.dims == 2 { mesh.x_node(1 - d, o, t) } else { 0.0 };
                            let mut x = [0.0; 3];
                            x[d] = x_face;
                            if mesh.dims == 2 {
                                x[1 - d] = xt;
                            }
                            for ie in 0..ne {
                                for a in 0..nqe {
                                    let m = profile(mesh.eps_node(ie, a), x);
                                    if !m.realizability().realizable {
                                        return Err(Error::Config(format!(
                                            "inflow state is not realizable: {m:?}"
                                        )));
                                    }
                                    data[(ie * nqe + a) + ne * nqe * (o * nt + t)] = m.to_array();
                                }
                            }
                        }
                    }
                    inflow[d][side] = Some(data);
                }
            }
        }
        let energy_advection = !mesh.monochromatic;
        Ok(DgOperator {
            mesh,
            closure,
            solver,
            velocity,
            inflow,
            energy_advection,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_elements() * self.mesh.nodes_per_element()
    }

    /// Velocity at node `k` of element `e`.
    #[inline]
    pub fn node_velocity(&self, e: usize, k: usize) -> [f64; 3] {
        let (_, i1, i2) = self.mesh.element_coords(e);
        let nqe = self.mesh.nodes_per_dim[0];
        let s = self.mesh.spatial_index(i1, i2);
        self.velocity.v[s * self.mesh.spatial_nodes_per_element() + k / nqe]
    }

    /// Initialize conserved nodal values from a primitive profile
    /// `M(ε, x)`; the cached primitives are set to the profile values.
    pub fn initialize(&self, profile: &dyn Fn(f64, [f64; 3]) -> crate::moments::PrimitiveMoments) -> Result<MomentField> {
        let mesh = &self.mesh;
        let mut field = MomentField::zeros(mesh);
        let npe = mesh.nodes_per_element();
        let [nqe, n1, n2] = mesh.nodes_per_dim;
        let nsn = mesh.spatial_nodes_per_element();
        for e in 0..mesh.n_elements() {
            let (ie, i1, i2) = mesh.element_coords(e);
            let s = mesh.spatial_index(i1, i2);
            for c in 0..n2 {
                for b in 0..n1 {
                    let x = [
                        mesh.x_node(0, i1, b),
                        if mesh.dims == 2 { mesh.x_node(1, i2, c) } else { 0.0 },
                        0.0,
                    ];
                    let v = self.velocity.v[s * nsn + mesh.spatial_node_index(b, c)];
                    for a in 0..nqe {
                        let m = profile(mesh.eps_node(ie, a), x);
                        if !m.realizability().realizable {
                            return Err(Error::Domain(format!(
                                "initial state is not realizable at eps = {}, x = {x:?}: {m:?}",
                                mesh.eps_node(ie, a)
                            )));
                        }
                        let k = e * npe + mesh.node_index(a, b, c);
                        let st = ClosureState::new(&m.to_array(), &self.closure);
                        field.u[k] = st.conserved(&v);
                        field.m[k] = m.to_array();
                    }
                }
            }
        }
        Ok(field)
    }

    /// Convert all nodal conserved moments to primitives (cached in `field.m`).
    pub fn convert_nodes(&self, field: &mut MomentField, diag: &mut RhsDiagnostics) {
        let npe = self.mesh.nodes_per_element();
        for e in 0..self.mesh.n_elements() {
            for k in 0..npe {
                let idx = e * npe + k;
                let v = self.node_velocity(e, k);
                let u = field.u[idx];
                // Warm start from the cached primitive when it is usable.
                let cached = field.m[idx];
                let m0 = if cached[0] > 0.0 && gamma_of(&cached).realizable { cached } else { u };
                let (m, rep) = conversion_solve(&u, &v, &m0, &self.solver, &self.closure);
                diag.record(rep.iterations, rep.converged);
                field.m[idx] = m;
            }
        }
    }

    /// Evaluate the nodal right-hand side `dU/dt = B_h(U)` (collisionless).
    ///
    /// Converts all nodes (refreshing `field.m`) and all face traces, then
    /// accumulates volume, surface and source contributions divided by the
    /// diagonal collocation mass.
    pub fn assemble_rhs(&self, field: &mut MomentField, rhs: &mut [Vec4]) -> RhsDiagnostics {
        let mut diag = RhsDiagnostics::default();
        self.convert_nodes(field, &mut diag);
        rhs.iter_mut().for_each(|r| *r = [0.0; 4]);
        self.volume_and_sources(field, rhs);
        for d in 0..self.mesh.dims {
            self.spatial_faces(field, rhs, d, &mut diag);
        }
        if self.energy_advection {
            self.energy_faces(field, rhs, &mut diag);
        }
        diag
    }

    fn volume_and_sources(&self, field: &MomentField, rhs: &mut [Vec4]) {
        let mesh = &self.mesh;
        let npe = mesh.nodes_per_element();
        let nsn = mesh.spatial_nodes_per_element();
        let [nqe, n1, n2] = mesh.nodes_per_dim;
        let st_tab = &mesh.tables.space;
        let en_tab = &mesh.tables.energy;
        let mut fx = [vec![[0.0; 4]; npe], vec![[0.0; 4]; npe]];
        let mut fe = vec![[0.0; 4]; npe];
        for e in 0..mesh.n_elements() {
            let (ie, i1, i2) = mesh.element_coords(e);
            let s = mesh.spatial_index(i1, i2);
            let base = e * npe;
            let mut any_dv = false;
            for c in 0..n2 {
                for b in 0..n1 {
                    let sn = mesh.spatial_node_index(b, c);
                    let v = &self.velocity.v[s * nsn + sn];
                    let dv = &self.velocity.dv[s * nsn + sn];
                    let dv_zero = self.velocity.dv_zero[s * nsn + sn];
                    any_dv |= !dv_zero;
                    for a in 0..nqe {
                        let k = mesh.node_index(a, b, c);
                        let st = ClosureState::new(&field.m[base + k], &self.closure);
                        for d in 0..mesh.dims {
                            fx[d][k] = st.flux(d, v);
                        }
                        if !dv_zero {
                            let src = st.source(dv);
                            for comp in 1..4 {
                                rhs[base + k][comp] += src[comp];
                            }
                            fe[k] = if self.energy_advection {
                                st.energy_flux(dv)
                            } else {
                                [0.0; 4]
                            };
                        } else {
                            fe[k] = [0.0; 4];
                        }
                    }
                }
            }
            // Spatial volume terms: Σ_q w_q F(ξ_q) ℓ_l′(ξ_q) / (w_l |K_d|).
            let n = st_tab.n;
            for d in 0..mesh.dims {
                let len = mesh.dx(d, if d == 0 { i1 } else { i2 });
                let nt = if d == 0 { n2 } else { n1 };
                for t in 0..nt {
                    for a in 0..nqe {
                        for l in 0..n {
                            let kl = mesh.node_index(a, if d == 0 { l } else { t }, if d == 0 { t } else { l });
                            let mut acc = [0.0; 4];
                            for q in 0..n {
                                let kq = mesh.node_index(a, if d == 0 { q } else { t }, if d == 0 { t } else { q });
                                let wd = st_tab.lg.weights[q] * st_tab.deriv[q * n + l];
                                for comp in 0..4 {
                                    acc[comp] += wd * fx[d][kq][comp];
                                }
                            }
                            let scale = 1.0 / (st_tab.lg.weights[l] * len);
                            for comp in 0..4 {
                                rhs[base + kl][comp] += acc[comp] * scale;
                            }
                        }
                    }
                }
            }
            // Energy volume terms: Σ_q w_q ε_q³ F^ε_q ℓ_a′(η_q) / (w_a ε_a² |K_ε|).
            if self.energy_advection && any_dv {
                let deps = mesh.deps(ie);
                for c in 0..n2 {
                    for b in 0..n1 {
                        for a in 0..nqe {
                            let mut acc = [0.0; 4];
                            for q in 0..nqe {
                                let eq = mesh.eps_node(ie, q);
                                let wd = en_tab.lg.weights[q] * eq * eq * eq * en_tab.deriv[q * nqe + a];
                                let kq = mesh.node_index(q, b, c);
                                for comp in 0..4 {
                                    acc[comp] += wd * fe[kq][comp];
                                }
                            }
                            let ea = mesh.eps_node(ie, a);
                            let scale = 1.0 / (en_tab.lg.weights[a] * ea * ea * deps);
                            let ka = mesh.node_index(a, b, c);
                            for comp in 0..4 {
                                rhs[base + ka][comp] += acc[comp] * scale;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Interpolated trace of element `e` on its lower/upper face in
    /// direction `d`, at energy node `a` and transverse node `t`.
    #[inline]
    fn spatial_trace(&self, u: &[Vec4], e: usize, d: usize, a: usize, t: usize, hi: bool) -> Vec4 {
        let mesh = &self.mesh;
        let tab = &mesh.tables.space;
        let w = if hi { &tab.at_hi } else { &tab.at_lo };
        let npe = mesh.nodes_per_element();
        let mut out = [0.0; 4];
        for p in 0..tab.n {
            let k = if d == 0 {
                mesh.node_index(a, p, t)
            } else {
                mesh.node_index(a, t, p)
            };
            let val = &u[e * npe + k];
            for comp in 0..4 {
                out[comp] += w[p] * val[comp];
            }
        }
        out
    }

    fn spatial_faces(&self, field: &MomentField, rhs: &mut [Vec4], d: usize, diag: &mut RhsDiagnostics) {
        let mesh = &self.mesh;
        let tab = &mesh.tables.space;
        let n = tab.n;
        let npe = mesh.nodes_per_element();
        let nd = mesh.n_space(d);
        let no = mesh.n_space(1 - d);
        let nt = transverse_nodes(mesh, d);
        let ne = mesh.n_energy();
        let nqe = mesh.nodes_per_dim[0];
        let periodic = mesh.bc[d].0.is_periodic();
        let faces = if periodic { nd } else { nd + 1 };
        for o in 0..no {
            let (len_t, w_t): (f64, &[f64]) = if mesh.dims == 2 {
                (mesh.dx(1 - d, o), &tab.lg.weights)
            } else {
                (1.0, &[1.0])
            };
            for j in 0..faces {
                let left_s = if j > 0 {
                    Some(spatial_elem_dir(mesh, d, j - 1, o))
                } else if periodic {
                    Some(spatial_elem_dir(mesh, d, nd - 1, o))
                } else {
                    None
                };
                let right_s = if j < nd {
                    Some(spatial_elem_dir(mesh, d, j, o))
                } else {
                    None
                };
                let len_l = left_s.map(|_| mesh.dx(d, if j > 0 { j - 1 } else { nd - 1 }));
                let len_r = right_s.map(|_| mesh.dx(d, j));
                for t in 0..nt {
                    let vhat = self.velocity.face_v[d][(j + (nd + 1) * o) * nt + t];
                    for ie in 0..ne {
                        let el = left_s.map(|s| ie + ne * s);
                        let er = right_s.map(|s| ie + ne * s);
                        for a in 0..nqe {
                            let st_l = el.map(|e| {
                                let u = self.spatial_trace(&field.u, e, d, a, t, true);
                                let m0 = warm_start(self.spatial_trace(&field.m, e, d, a, t, true), &u);
                                let (m, rep) = conversion_solve(&u, &vhat, &m0, &self.solver, &self.closure);
                                diag.record(rep.iterations, rep.converged);
                                ClosureState::new(&m, &self.closure)
                            });
                            let st_r = er.map(|e| {
                                let u = self.spatial_trace(&field.u, e, d, a, t, false);
                                let m0 = warm_start(self.spatial_trace(&field.m, e, d, a, t, false), &u);
                                let (m, rep) = conversion_solve(&u, &vhat, &m0, &self.solver, &self.closure);
                                diag.record(rep.iterations, rep.converged);
                                ClosureState::new(&m, &self.closure)
                            });
                            let ghost = |side: usize, interior: &ClosureState| -> ClosureState {
                                match &self.inflow[d][side] {
                                    Some(data) => ClosureState::new(
                                        &data[(ie * nqe + a) + ne * nqe * (o * nt + t)],
                                        &self.closure,
                                    ),
                                    None => *interior,
                                }
                            };
                            let (sl, sr) = match (st_l, st_r) {
                                (Some(l), Some(r)) => (l, r),
                                (None, Some(r)) => (ghost(0, &r), r),
                                (Some(l), None) => {
                                    let g = ghost(1, &l);
                                    (l, g)
                                }
                                (None, None) => unreachable!(),
                            };
                            let fhat = lf_flux_spatial_states(&sl, &sr, &vhat, d);
                            let ea = mesh.eps_node(ie, a);
                            let boundary = el.is_none() || er.is_none();
                            if boundary {
                                let sign = if el.is_none() { -1.0 } else { 1.0 };
                                let area = mesh.energy_weight_tau(ie, a) * w_t[t] * len_t;
                                let g_flux = [fhat[1], fhat[2], fhat[3]];
                                diag.number_outflow += sign * area * fhat[0];
                                let eps = if mesh.monochromatic { 1.0 } else { ea };
                                diag.energy_outflow += sign * area * eps * (fhat[0] + dot3(&vhat, &g_flux));
                            }
                            if let (Some(e), Some(len)) = (el, len_l) {
                                for p in 0..n {
                                    let k = if d == 0 { mesh.node_index(a, p, t) } else { mesh.node_index(a, t, p) };
                                    let scale = tab.at_hi[p] / (tab.lg.weights[p] * len);
                                    for comp in 0..4 {
                                        rhs[e * npe + k][comp] -= fhat[comp] * scale;
                                    }
                                }
                            }
                            if let (Some(e), Some(len)) = (er, len_r) {
                                for p in 0..n {
                                    let k = if d == 0 { mesh.node_index(a, p, t) } else { mesh.node_index(a, t, p) };
                                    let scale = tab.at_lo[p] / (tab.lg.weights[p] * len);
                                    for comp in 0..4 {
                                        rhs[e * npe + k][comp] += fhat[comp] * scale;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn energy_faces(&self, field: &MomentField, rhs: &mut [Vec4], diag: &mut RhsDiagnostics) {
        let mesh = &self.mesh;
        let tab = &mesh.tables.energy;
        let nqe = tab.n;
        let npe = mesh.nodes_per_element();
        let nsn = mesh.spatial_nodes_per_element();
        let ne = mesh.n_energy();
        let [_, n1, n2] = mesh.nodes_per_dim;
        let trace = |src: &[Vec4], e: usize, b: usize, c: usize, hi: bool| -> Vec4 {
            let w = if hi { &tab.at_hi } else { &tab.at_lo };
            let mut out = [0.0; 4];
            for a in 0..nqe {
                let val = &src[e * npe + mesh.node_index(a, b, c)];
                for comp in 0..4 {
                    out[comp] += w[a] * val[comp];
                }
            }
            out
        };
        for i2 in 0..mesh.n_space(1) {
            for i1 in 0..mesh.n_space(0) {
                let s = mesh.spatial_index(i1, i2);
                for c in 0..n2 {
                    for b in 0..n1 {
                        let sn = mesh.spatial_node_index(b, c);
                        if self.velocity.dv_zero[s * nsn + sn] {
                            continue;
                        }
                        let v = self.velocity.v[s * nsn + sn];
                        let dv = &self.velocity.dv[s * nsn + sn];
                        let alpha = self.velocity.alpha_eps[s * nsn + sn];
                        for ie in 0..ne.saturating_sub(1) {
                            let el = ie + ne * s;
                            let er = el + 1;
                            let ul = trace(&field.u, el, b, c, true);
                            let ur = trace(&field.u, er, b, c, false);
                            let ml0 = warm_start(trace(&field.m, el, b, c, true), &ul);
                            let mr0 = warm_start(trace(&field.m, er, b, c, false), &ur);
                            let (ml, rl) = conversion_solve(&ul, &v, &ml0, &self.solver, &self.closure);
                            let (mr, rr) = conversion_solve(&ur, &v, &mr0, &self.solver, &self.closure);
                            diag.record(rl.iterations, rl.converged);
                            diag.record(rr.iterations, rr.converged);
                            let fl = ClosureState::new(&ml, &self.closure).energy_flux(dv);
                            let fr = ClosureState::new(&mr, &self.closure).energy_flux(dv);
                            let fhat = lf_energy_combine(&fl, &fr, &ml, &mr, alpha);
                            let ef = mesh.energy_edges[ie + 1];
                            let ef3 = ef * ef * ef;
                            let (dl, dr) = (mesh.deps(ie), mesh.deps(ie + 1));
                            for a in 0..nqe {
                                let k = mesh.node_index(a, b, c);
                                let eal = mesh.eps_node(ie, a);
                                let ear = mesh.eps_node(ie + 1, a);
                                let sl = ef3 * tab.at_hi[a] / (tab.lg.weights[a] * eal * eal * dl);
                                let sr = ef3 * tab.at_lo[a] / (tab.lg.weights[a] * ear * ear * dr);
                                for comp in 0..4 {
                                    rhs[el * npe + k][comp] -= fhat[comp] * sl;
                                    rhs[er * npe + k][comp] += fhat[comp] * sr;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Count nodes whose conserved moments are not realizable.
pub fn count_nonrealizable_nodes(field: &MomentField) -> usize {
    field.u.iter().filter(|u| !gamma_of(u).realizable).count()
}
