//! Realizability-preserving fixed-point solvers.
//!
//! Both nonlinear node-local problems — recovering the primitive moments
//! from the conserved ones, and the implicit collision update — are written
//! as Richardson-type fixed-point problems `M = T(M)`:
//!
//! * conversion: `H_U(M) = M − λ(D + v·I − N; I + v·kD − G)`,
//! * collision: `Q(M) = Λ[(1−λ)M + λ(−v·I + N* + Δtχ D₀; −v·kD + G*)]`
//!   with `Λ = diag(μ_χ, μ_κ, μ_κ, μ_κ)`, `μ = 1/(1 + λΔt·opacity)`.
//!
//! With `λ = 1/(1+|v|)` every Picard iterate is realizable whenever the
//! current one is. The Anderson engine extrapolates on the residual and falls
//! back to the plain Picard update whenever the extrapolated iterate is not
//! realizable, so the realizability guarantee is kept.

use rand::Rng;

use crate::closure::ClosureSpec;
use crate::error::{Error, Result};
use crate::moments::{
    gamma_of, norm3, norm4, ClosureState, ConservedMoments, OpacitySpec, PrimitiveMoments,
    Velocity, Vec4,
};

/// Fixed-point iteration engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Picard,
    /// Anderson acceleration with memory depth `m`.
    Anderson { m: usize },
}

/// Choice of the Richardson relaxation parameter `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// `λ = 1/(1 + |v|)`.
    InverseOnePlusV,
    Fixed(f64),
}

impl LambdaRule {
    #[inline]
    pub fn lambda(&self, speed: f64) -> f64 {
        match *self {
            LambdaRule::InverseOnePlusV => 1.0 / (1.0 + speed),
            LambdaRule::Fixed(l) => l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub engine: Engine,
    /// Relative tolerance: stop when `‖M^k − M^{k−1}‖ ≤ tol·‖U‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub lambda_rule: LambdaRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            engine: Engine::Anderson { m: 1 },
            tol: 1e-8,
            max_iter: 200,
            lambda_rule: LambdaRule::InverseOnePlusV,
        }
    }
}

impl SolverConfig {
    pub fn picard() -> Self {
        SolverConfig {
            engine: Engine::Picard,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("solver tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("solver max_iter must be >= 1".into()));
        }
        if let LambdaRule::Fixed(l) = self.lambda_rule {
            if !(l > 0.0 && l <= 1.0) {
                return Err(Error::Config(format!("fixed lambda must lie in (0,1], got {l}")));
            }
        }
        if let Engine::Anderson { m } = self.engine {
            if m == 0 || m > MAX_ANDERSON_DEPTH {
                return Err(Error::Config(format!(
                    "Anderson depth must lie in 1..={MAX_ANDERSON_DEPTH}, got {m}"
                )));
            }
        }
        Ok(())
    }
}

/// Largest supported Anderson memory depth.
pub const MAX_ANDERSON_DEPTH: usize = 4;

/// Outcome of one fixed-point solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// Last update norm `‖M^k − M^{k−1}‖`.
    pub residual: f64,
    pub realizable_every_iterate: bool,
}

/// The conversion operator `H_U(M)`.
pub fn conversion_operator(
    m: &PrimitiveMoments,
    u: &ConservedMoments,
    v: &Velocity,
    lambda: f64,
    spec: &ClosureSpec,
) -> PrimitiveMoments {
    PrimitiveMoments::from_array(conversion_map(&m.to_array(), &u.to_array(), &v.0, lambda, spec))
}

#[inline]
fn conversion_map(m: &Vec4, u: &Vec4, v: &[f64; 3], lambda: f64, spec: &ClosureSpec) -> Vec4 {
    let st = ClosureState::new(m, spec);
    let c = st.conserved(v);
    [
        m[0] - lambda * (c[0] - u[0]),
        m[1] - lambda * (c[1] - u[1]),
        m[2] - lambda * (c[2] - u[2]),
        m[3] - lambda * (c[3] - u[3]),
    ]
}

/// The collision operator `Q(M)` for the implicit update
/// `U = U* + Δt·C(M)`.
pub fn collision_operator(
    m: &PrimitiveMoments,
    u_star: &ConservedMoments,
    v: &Velocity,
    dt: f64,
    op: &OpacitySpec,
    lambda: f64,
    spec: &ClosureSpec,
) -> Result<PrimitiveMoments> {
    if op.kappa() < op.chi {
        return Err(Error::Config(format!(
            "total opacity must not be smaller than the absorption opacity: {op:?}"
        )));
    }
    let params = CollisionParams::new(dt, op, lambda);
    Ok(PrimitiveMoments::from_array(collision_map(
        &m.to_array(),
        &u_star.to_array(),
        &v.0,
        &params,
        spec,
    )))
}

#[derive(Debug, Clone, Copy)]
struct CollisionParams {
    lambda: f64,
    mu_chi: f64,
    mu_kappa: f64,
    dt_chi_d0: f64,
}

impl CollisionParams {
    fn new(dt: f64, op: &OpacitySpec, lambda: f64) -> Self {
        CollisionParams {
            lambda,
            mu_chi: 1.0 / (1.0 + lambda * dt * op.chi),
            mu_kappa: 1.0 / (1.0 + lambda * dt * op.kappa()),
            dt_chi_d0: dt * op.chi * op.d0,
        }
    }
}

#[inline]
fn collision_map(
    m: &Vec4,
    u_star: &Vec4,
    v: &[f64; 3],
    p: &CollisionParams,
    spec: &ClosureSpec,
) -> Vec4 {
    let st = ClosureState::new(m, spec);
    let vk = st.vkd(v);
    let vi = v[0] * m[1] + v[1] * m[2] + v[2] * m[3];
    let l = p.lambda;
    let mut out = [0.0; 4];
    out[0] = p.mu_chi * ((1.0 - l) * m[0] + l * (-vi + u_star[0] + p.dt_chi_d0));
    for j in 0..3 {
        out[j + 1] = p.mu_kappa * ((1.0 - l) * m[j + 1] + l * (-vk[j] + u_star[j + 1]));
    }
    out
}

/// The node-local problem to solve.
#[derive(Debug, Clone, Copy)]
pub enum FixedPointProblem {
    /// Recover `M` from `U` at velocity `v`.
    Conversion { u: ConservedMoments, v: Velocity },
    /// Implicit collision update from the explicit state `U*`.
    Collision {
        u_star: ConservedMoments,
        v: Velocity,
        dt: f64,
        op: OpacitySpec,
    },
}

/// Solve a node-local fixed-point problem.
///
/// The initial guess defaults to `M⁰ = U` (resp. `U*`). Returns the last
/// iterate together with a report; non-convergence is reported, not raised.
pub fn fixed_point_solve(
    problem: &FixedPointProblem,
    initial: Option<PrimitiveMoments>,
    cfg: &SolverConfig,
    spec: &ClosureSpec,
) -> Result<(PrimitiveMoments, SolveReport)> {
    match *problem {
        FixedPointProblem::Conversion { u, v } => {
            let u = u.to_array();
            let m0 = initial.map(|m| m.to_array()).unwrap_or(u);
            let (m, rep) = conversion_solve(&u, &v.0, &m0, cfg, spec);
            Ok((PrimitiveMoments::from_array(m), rep))
        }
        FixedPointProblem::Collision { u_star, v, dt, op } => {
            if op.kappa() < op.chi {
                return Err(Error::Config(format!(
                    "total opacity must not be smaller than the absorption opacity: {op:?}"
                )));
            }
            let u = u_star.to_array();
            let m0 = initial.map(|m| m.to_array()).unwrap_or(u);
            let (m, rep) = collision_solve(&u, &v.0, dt, &op, &m0, cfg, spec);
            Ok((PrimitiveMoments::from_array(m), rep))
        }
    }
}

/// Array form of the conversion solve used by the DG kernels.
#[inline]
pub fn conversion_solve(
    u: &Vec4,
    v: &[f64; 3],
    m0: &Vec4,
    cfg: &SolverConfig,
    spec: &ClosureSpec,
) -> (Vec4, SolveReport) {
    let lambda = cfg.lambda_rule.lambda(norm3(v));
    iterate(
        |m| conversion_map(m, u, v, lambda, spec),
        m0,
        norm4(u),
        cfg,
    )
}

/// Array form of the collision solve used by the time integrators.
#[inline]
pub fn collision_solve(
    u_star: &Vec4,
    v: &[f64; 3],
    dt: f64,
    op: &OpacitySpec,
    m0: &Vec4,
    cfg: &SolverConfig,
    spec: &ClosureSpec,
) -> (Vec4, SolveReport) {
    let lambda = cfg.lambda_rule.lambda(norm3(v));
    let params = CollisionParams::new(dt, op, lambda);
    iterate(
        |m| collision_map(m, u_star, v, &params, spec),
        m0,
        norm4(u_star),
        cfg,
    )
}

#[inline]
fn sub(a: &Vec4, b: &Vec4) -> Vec4 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

#[inline]
fn dot4(a: &Vec4, b: &Vec4) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Generic Picard / Anderson driver on 4-vectors.
fn iterate(map: impl Fn(&Vec4) -> Vec4, m0: &Vec4, scale: f64, cfg: &SolverConfig) -> (Vec4, SolveReport) {
    let threshold = cfg.tol * scale;
    let depth = match cfg.engine {
        Engine::Picard => 0,
        Engine::Anderson { m } => m.min(MAX_ANDERSON_DEPTH),
    };
    let mut x = *m0;
    let mut realizable_all = gamma_of(&x).realizable;
    // History of (g_k, f_k) for Anderson, newest last.
    let mut hist_g = [[0.0; 4]; MAX_ANDERSON_DEPTH + 1];
    let mut hist_f = [[0.0; 4]; MAX_ANDERSON_DEPTH + 1];
    let mut n_hist = 0usize;
    let mut residual = f64::INFINITY;
    for k in 1..=cfg.max_iter {
        let g = map(&x);
        let f = sub(&g, &x);
        let mut next = g;
        if depth > 0 {
            // Push (g, f) into the sliding history.
            if n_hist == depth + 1 {
                hist_g.copy_within(1..=depth, 0);
                hist_f.copy_within(1..=depth, 0);
                n_hist -= 1;
            }
            hist_g[n_hist] = g;
            hist_f[n_hist] = f;
            n_hist += 1;
            if n_hist >= 2 {
                if let Some(cand) = anderson_update(&hist_g[..n_hist], &hist_f[..n_hist]) {
                    if gamma_of(&cand).realizable {
                        next = cand;
                    }
                }
            }
        }
        residual = norm4(&sub(&next, &x));
        x = next;
        realizable_all &= gamma_of(&x).realizable;
        if residual <= threshold {
            return (
                x,
                SolveReport {
                    iterations: k,
                    converged: true,
                    residual,
                    realizable_every_iterate: realizable_all,
                },
            );
        }
    }
    (
        x,
        SolveReport {
            iterations: cfg.max_iter,
            converged: false,
            residual,
            realizable_every_iterate: realizable_all,
        },
    )
}

/// Anderson (type II, Walker–Ni form) extrapolation from the history:
/// `x⁺ = g_k − Σ γ_j (g_{j+1} − g_j)` with `γ` minimizing
/// `‖f_k − Σ γ_j (f_{j+1} − f_j)‖`.
fn anderson_update(g: &[Vec4], f: &[Vec4]) -> Option<Vec4> {
    let m = g.len() - 1;
    let last = m;
    let mut df = [[0.0; 4]; MAX_ANDERSON_DEPTH];
    let mut dg = [[0.0; 4]; MAX_ANDERSON_DEPTH];
    for j in 0..m {
        df[j] = sub(&f[j + 1], &f[j]);
        dg[j] = sub(&g[j + 1], &g[j]);
    }
    // Normal equations (m ≤ 4).
    let mut a = [[0.0; MAX_ANDERSON_DEPTH]; MAX_ANDERSON_DEPTH];
    let mut b = [0.0; MAX_ANDERSON_DEPTH];
    for i in 0..m {
        for j in 0..m {
            a[i][j] = dot4(&df[i], &df[j]);
        }
        b[i] = dot4(&df[i], &f[last]);
    }
    let gamma = solve_small(&mut a, &mut b, m)?;
    let mut out = g[last];
    for j in 0..m {
        for c in 0..4 {
            out[c] -= gamma[j] * dg[j][c];
        }
    }
    if out.iter().all(|x| x.is_finite()) {
        Some(out)
    } else {
        None
    }
}

/// Gaussian elimination with partial pivoting for an `m×m` system;
/// `None` when (numerically) singular.
fn solve_small(
    a: &mut [[f64; MAX_ANDERSON_DEPTH]; MAX_ANDERSON_DEPTH],
    b: &mut [f64; MAX_ANDERSON_DEPTH],
    m: usize,
) -> Option<[f64; MAX_ANDERSON_DEPTH]> {
    let scale = (0..m).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..m {
            let factor = a[r][col] / a[col][col];
            for c in col..m {
                a[r][c] -= factor * a[col][c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = [0.0; MAX_ANDERSON_DEPTH];
    for r in (0..m).rev() {
        let mut s = b[r];
        for c in r + 1..m {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Some(x)
}

/// A random realizable primitive moment: `D` uniform in `d_range`, `h`
/// uniform in `[0, h_max]`, flux direction uniform on the unit sphere.
pub fn random_realizable<R: Rng + ?Sized>(
    rng: &mut R,
    h_max: f64,
    d_range: (f64, f64),
) -> PrimitiveMoments {
    let d = if d_range.1 > d_range.0 {
        rng.gen_range(d_range.0..d_range.1)
    } else {
        d_range.0
    };
    let h = if h_max > 0.0 {
        rng.gen_range(0.0..=h_max.min(1.0))
    } else {
        0.0
    };
    let n = random_unit_vector(rng);
    PrimitiveMoments::new(d, [h * d * n[0], h * d * n[1], h * d * n[2]])
}

/// A direction uniformly distributed on the unit sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_solver_matches_direct_inverse() {
        let mut a = [[0.0; MAX_ANDERSON_DEPTH]; MAX_ANDERSON_DEPTH];
        a[0][0] = 2.0;
        a[0][1] = 1.0;
        a[1][0] = 1.0;
        a[1][1] = 3.0;
        let mut b = [3.0, 5.0, 0.0, 0.0];
        let x = solve_small(&mut a, &mut b, 2).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn anderson_depth_two_converges() {
        let spec = ClosureSpec::approximate();
        let m = PrimitiveMoments::new(1.0, [0.7, 0.1, 0.0]);
        let v = [0.4, -0.1, 0.0];
        let u = ClosureState::new(&m.to_array(), &spec).conserved(&v);
        let cfg = SolverConfig {
            engine: Engine::Anderson { m: 2 },
            ..Default::default()
        };
        let (x, rep) = conversion_solve(&u, &v, &u, &cfg, &spec);
        assert!(rep.converged);
        assert!(norm4(&sub(&x, &m.to_array())) < 1e-7);
    }
}
