//! Moment types, realizability geometry and the pointwise model terms.
//!
//! Primitive (comoving-frame) moments `M = (D, I)` are the closure inputs;
//! conserved moments `U = (N, G)` with `N = D + v·I`, `G_j = I_j + v^i k_ij D`
//! are evolved. All vectors carry three components; the unused spatial
//! components are identically zero for one- and two-dimensional problems.
//!
//! Velocity derivatives are stored as `dv[i][j] = ∂v^j/∂x^i`.

use crate::closure::{closure_tensors, ClosureSpec, FluxFactor};
use crate::error::{Error, Result};

/// A moment 4-vector `(scalar; vector)` in array form, used by the DG kernels.
pub type Vec4 = [f64; 4];

#[inline]
pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub fn norm4(a: &Vec4) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3]).sqrt()
}

/// Comoving spectral number density `D` and flux `I`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PrimitiveMoments {
    pub d: f64,
    pub i: [f64; 3],
}

/// Evolved pair `N`, `G`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConservedMoments {
    pub n: f64,
    pub g: [f64; 3],
}

/// Outcome of a realizability test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realizability {
    /// `γ = D − |I|` (or `N − |G|`).
    pub gamma: f64,
    pub realizable: bool,
}

impl PrimitiveMoments {
    pub fn new(d: f64, i: [f64; 3]) -> Self {
        PrimitiveMoments { d, i }
    }

    pub fn isotropic(d: f64) -> Self {
        PrimitiveMoments { d, i: [0.0; 3] }
    }

    pub fn from_array(a: Vec4) -> Self {
        PrimitiveMoments {
            d: a[0],
            i: [a[1], a[2], a[3]],
        }
    }

    pub fn to_array(self) -> Vec4 {
        [self.d, self.i[0], self.i[1], self.i[2]]
    }

    pub fn i_norm(&self) -> f64 {
        norm3(&self.i)
    }

    /// Unit direction `I/|I|`, zero for `I = 0`.
    pub fn direction(&self) -> [f64; 3] {
        let s = self.i_norm();
        if s > 0.0 {
            [self.i[0] / s, self.i[1] / s, self.i[2] / s]
        } else {
            [0.0; 3]
        }
    }

    pub fn realizability(&self) -> Realizability {
        realizability_check(self)
    }
}

impl ConservedMoments {
    pub fn new(n: f64, g: [f64; 3]) -> Self {
        ConservedMoments { n, g }
    }

    pub fn from_array(a: Vec4) -> Self {
        ConservedMoments {
            n: a[0],
            g: [a[1], a[2], a[3]],
        }
    }

    pub fn to_array(self) -> Vec4 {
        [self.n, self.g[0], self.g[1], self.g[2]]
    }

    /// `γ(U) = N − |G|`; `U` is realizable iff `N > 0` and `γ ≥ 0`.
    pub fn realizability(&self) -> Realizability {
        gamma_of(&self.to_array())
    }
}

/// `γ = a₀ − |a₁..₃|` and the realizability flag for a 4-vector.
#[inline]
pub fn gamma_of(a: &Vec4) -> Realizability {
    let gamma = a[0] - (a[1] * a[1] + a[2] * a[2] + a[3] * a[3]).sqrt();
    Realizability {
        gamma,
        realizable: a[0] > 0.0 && gamma >= 0.0,
    }
}

/// `γ(M) = D − |I|`, realizable iff `D > 0` and `γ ≥ 0`.
pub fn realizability_check(m: &PrimitiveMoments) -> Realizability {
    gamma_of(&m.to_array())
}

/// Fluid three-velocity in units of the speed of light; `|v| < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Velocity(pub [f64; 3]);

impl Velocity {
    pub fn new(v: [f64; 3]) -> Result<Self> {
        let s = norm3(&v);
        if !(s < 1.0) {
            return Err(Error::Domain(format!("|v| must be < 1, got {s}")));
        }
        Ok(Velocity(v))
    }

    pub fn zero() -> Self {
        Velocity([0.0; 3])
    }

    pub fn speed(&self) -> f64 {
        norm3(&self.0)
    }
}

/// Spatial velocity gradient, `dv[i][j] = ∂v^j/∂x^i`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VelocityDerivatives(pub [[f64; 3]; 3]);

/// Absorption/scattering opacities and the equilibrium density.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OpacitySpec {
    pub chi: f64,
    pub sigma: f64,
    pub d0: f64,
}

impl OpacitySpec {
    /// Total opacity `κ = χ + σ`.
    pub fn kappa(&self) -> f64 {
        self.chi + self.sigma
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chi >= 0.0 && self.sigma >= 0.0 && self.d0 >= 0.0) {
            return Err(Error::Config(format!(
                "opacities and D0 must be nonnegative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Closure functions evaluated once for a primitive moment; all model terms
/// are contractions of `k` and `q` with other vectors and are computed from
/// this without forming the tensors.
#[derive(Debug, Clone, Copy)]
pub struct ClosureState {
    pub d: f64,
    pub i: [f64; 3],
    pub h: f64,
    pub n: [f64; 3],
    pub psi: f64,
    pub zeta: f64,
}

impl ClosureState {
    #[inline]
    pub fn new(m: &Vec4, spec: &ClosureSpec) -> Self {
        let d = m[0];
        let i = [m[1], m[2], m[3]];
        let s = norm3(&i);
        let h = if d > 0.0 { (s / d).min(1.0) } else { 0.0 };
        if h < spec.h_iso_threshold || !(h > 0.0) {
            return ClosureState {
                d,
                i,
                h: 0.0,
                n: [0.0; 3],
                psi: 1.0 / 3.0,
                zeta: 0.0,
            };
        }
        let n = [i[0] / s, i[1] / s, i[2] / s];
        let c = spec.eval(FluxFactor::new(h));
        ClosureState {
            d,
            i,
            h,
            n,
            psi: c.psi,
            zeta: c.zeta,
        }
    }

    /// `(v^i k_ij D)_j`.
    #[inline]
    pub fn vkd(&self, v: &[f64; 3]) -> [f64; 3] {
        let a = 0.5 * (1.0 - self.psi) * self.d;
        let b = 0.5 * (3.0 * self.psi - 1.0) * self.d * dot3(v, &self.n);
        [
            a * v[0] + b * self.n[0],
            a * v[1] + b * self.n[1],
            a * v[2] + b * self.n[2],
        ]
    }

    /// Conserved moments `(D + v·I; I + v·kD)`.
    #[inline]
    pub fn conserved(&self, v: &[f64; 3]) -> Vec4 {
        let vk = self.vkd(v);
        [
            self.d + dot3(v, &self.i),
            self.i[0] + vk[0],
            self.i[1] + vk[1],
            self.i[2] + vk[2],
        ]
    }

    /// Conserved moments built with the single velocity component `v_dir`
    /// along direction `dir` (the dissipation state of the spatial LF flux).
    #[inline]
    pub fn conserved_directional(&self, dir: usize, v_dir: f64) -> Vec4 {
        let mut v = [0.0; 3];
        v[dir] = v_dir;
        self.conserved(&v)
    }

    /// Spatial flux in direction `dir`: `(I^i + v^i D; k^i_j D + v^i I_j)`.
    #[inline]
    pub fn flux(&self, dir: usize, v: &[f64; 3]) -> Vec4 {
        let a = 0.5 * (1.0 - self.psi) * self.d;
        let b = 0.5 * (3.0 * self.psi - 1.0) * self.d * self.n[dir];
        let vi = v[dir];
        let mut f = [
            self.i[dir] + vi * self.d,
            b * self.n[0] + vi * self.i[0],
            b * self.n[1] + vi * self.i[1],
            b * self.n[2] + vi * self.i[2],
        ];
        f[1 + dir] += a;
        f
    }

    /// `k_ik dv[i][k]` (scalar contraction).
    #[inline]
    pub fn k_contract(&self, dv: &[[f64; 3]; 3]) -> f64 {
        let tr = dv[0][0] + dv[1][1] + dv[2][2];
        let ndvn = ndvn(&self.n, dv);
        0.5 * ((1.0 - self.psi) * tr + (3.0 * self.psi - 1.0) * ndvn)
    }

    /// `(q_ikj dv[i][k])_j`.
    #[inline]
    pub fn q_contract(&self, dv: &[[f64; 3]; 3]) -> [f64; 3] {
        if self.h == 0.0 {
            return [0.0; 3];
        }
        let n = &self.n;
        let tr = dv[0][0] + dv[1][1] + dv[2][2];
        let ndvn = ndvn(n, dv);
        let a = 0.5 * (self.h - self.zeta);
        let b = 0.5 * (5.0 * self.zeta - 3.0 * self.h) * ndvn;
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            let row: f64 = (0..3).map(|i| n[i] * dv[i][j]).sum();
            let col: f64 = (0..3).map(|k| n[k] * dv[j][k]).sum();
            *o = a * (row + col + n[j] * tr) + b * n[j];
        }
        out
    }

    /// Energy-space flux `F^ε = −(D k_ik dv_ik; D q_ikj dv_ik)`.
    #[inline]
    pub fn energy_flux(&self, dv: &[[f64; 3]; 3]) -> Vec4 {
        let q = self.q_contract(dv);
        [
            -self.d * self.k_contract(dv),
            -self.d * q[0],
            -self.d * q[1],
            -self.d * q[2],
        ]
    }

    /// Velocity-gradient source `S = (0; D q_ikj dv_ik − I^i dv_ij)`.
    #[inline]
    pub fn source(&self, dv: &[[f64; 3]; 3]) -> Vec4 {
        let q = self.q_contract(dv);
        let mut s = [0.0; 4];
        for j in 0..3 {
            let idv: f64 = (0..3).map(|i| self.i[i] * dv[i][j]).sum();
            s[j + 1] = self.d * q[j] - idv;
        }
        s
    }
}

#[inline]
fn ndvn(n: &[f64; 3], dv: &[[f64; 3]; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for k in 0..3 {
            s += n[i] * dv[i][k] * n[k];
        }
    }
    s
}

/// Map primitive to conserved moments: `N = D + v·I`, `G_j = I_j + v^i k_ij D`.
pub fn primitive_to_conserved(
    m: &PrimitiveMoments,
    v: &Velocity,
    spec: &ClosureSpec,
) -> Result<ConservedMoments> {
    let (k, _) = closure_tensors(m, spec)?;
    let v = &v.0;
    let mut g = m.i;
    for j in 0..3 {
        for i in 0..3 {
            g[j] += v[i] * k[i][j] * m.d;
        }
    }
    Ok(ConservedMoments {
        n: m.d + dot3(v, &m.i),
        g,
    })
}

/// Phase-space fluxes at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFluxes {
    /// `fx[i]` is the flux in spatial direction `i`.
    pub fx: [Vec4; 3],
    /// Energy-space flux `F^ε`.
    pub fe: Vec4,
}

/// Phase-space fluxes `F^i` and `F^ε` from the explicit tensors.
///
/// `U` is accepted for interface symmetry with the conserved-variable
/// formulation; the fluxes depend on `U` only through `M`.
pub fn model_fluxes(
    _u: &ConservedMoments,
    m: &PrimitiveMoments,
    v: &Velocity,
    dv: &VelocityDerivatives,
    spec: &ClosureSpec,
) -> Result<ModelFluxes> {
    let (k, q) = closure_tensors(m, spec)?;
    let (v, dv) = (&v.0, &dv.0);
    let mut fx = [[0.0; 4]; 3];
    for i in 0..3 {
        fx[i][0] = m.i[i] + v[i] * m.d;
        for j in 0..3 {
            fx[i][j + 1] = k[i][j] * m.d + v[i] * m.i[j];
        }
    }
    let mut fe = [0.0; 4];
    for i in 0..3 {
        for kk in 0..3 {
            fe[0] -= m.d * k[i][kk] * dv[i][kk];
            for j in 0..3 {
                fe[j + 1] -= m.d * q[i][kk][j] * dv[i][kk];
            }
        }
    }
    Ok(ModelFluxes { fx, fe })
}

/// Velocity-gradient source `S` and collision term `C` at a point.
pub fn model_sources(
    _u: &ConservedMoments,
    m: &PrimitiveMoments,
    _v: &Velocity,
    dv: &VelocityDerivatives,
    op: &OpacitySpec,
    spec: &ClosureSpec,
) -> Result<(Vec4, Vec4)> {
    let (_, q) = closure_tensors(m, spec)?;
    let dv = &dv.0;
    let mut s = [0.0; 4];
    for j in 0..3 {
        let mut acc = 0.0;
        for i in 0..3 {
            for k in 0..3 {
                acc += m.d * q[i][k][j] * dv[i][k];
            }
            acc -= m.i[i] * dv[i][j];
        }
        s[j + 1] = acc;
    }
    let kappa = op.kappa();
    let c = [
        op.chi * (op.d0 - m.d),
        -kappa * m.i[0],
        -kappa * m.i[1],
        -kappa * m.i[2],
    ];
    Ok((s, c))
}

/// Eulerian-frame energy and momentum densities
/// `E = ε(N + v·G)`, `P_j = ε(G_j + v_j N)`.
pub fn eulerian_observables(
    u: &ConservedMoments,
    _m: &PrimitiveMoments,
    v: &Velocity,
    eps: f64,
) -> (f64, [f64; 3]) {
    let v = &v.0;
    let e = eps * (u.n + dot3(v, &u.g));
    let p = [
        eps * (u.g[0] + v[0] * u.n),
        eps * (u.g[1] + v[1] * u.n),
        eps * (u.g[2] + v[2] * u.n),
    ];
    (e, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn closure_state_kernels_match_tensor_forms() {
        let spec = ClosureSpec::approximate();
        let m = PrimitiveMoments::new(1.3, [0.4, -0.3, 0.2]);
        let v = Velocity::new([0.1, 0.2, -0.05]).unwrap();
        let dv = VelocityDerivatives([[0.3, -0.1, 0.2], [0.05, 0.7, -0.4], [0.2, 0.1, -0.6]]);
        let u = primitive_to_conserved(&m, &v, &spec).unwrap();
        let st = ClosureState::new(&m.to_array(), &spec);
        let uc = st.conserved(&v.0);
        for (a, b) in uc.iter().zip(u.to_array().iter()) {
            assert!(close(*a, *b, 1e-14));
        }
        let f = model_fluxes(&u, &m, &v, &dv, &spec).unwrap();
        for dir in 0..3 {
            let fk = st.flux(dir, &v.0);
            for c in 0..4 {
                assert!(close(fk[c], f.fx[dir][c], 1e-14));
            }
        }
        let fe = st.energy_flux(&dv.0);
        for c in 0..4 {
            assert!(close(fe[c], f.fe[c], 1e-14), "{fe:?} {:?}", f.fe);
        }
        let (s, _) = model_sources(&u, &m, &v, &dv, &OpacitySpec::default(), &spec).unwrap();
        let sk = st.source(&dv.0);
        for c in 0..4 {
            assert!(close(sk[c], s[c], 1e-14));
        }
    }
}
