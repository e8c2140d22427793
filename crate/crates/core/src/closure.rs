//! Minerbo maximum-entropy closure.
//!
//! The closure maps the flux factor `h = |I|/D` to the Eddington factor `ψ`
//! and the heat-flux factor `ζ`, from which the rank-2 tensor `k` and the
//! rank-3 tensor `q` are built. Two evaluations are provided:
//!
//! * [`ClosureKind::Exact`]: through the inverse Langevin function
//!   `β = L⁻¹(h)`, `L(β) = coth β − 1/β`, with `ψ = 1 − 2h/β` and
//!   `ζ = coth β − 3ψ/β`.
//! * [`ClosureKind::Approximate`]: the polynomial fits `ψ_a`, `ζ_a`, which
//!   are the default for all simulations.
//!
//! For small `β` every exact quantity is evaluated from the Taylor series of
//! `L(β)/β`, which removes the `1/β` cancellations that otherwise destroy
//! accuracy near the isotropic state. For `β > 20` the identity
//! `coth β = 1` holds to machine precision and the closed forms collapse to
//! polynomials in `1 − h`.

use crate::error::{Error, Result};
use crate::moments::PrimitiveMoments;

/// Below this `β` the exact closure is evaluated from the series of `L(β)/β`.
const SERIES_BETA: f64 = 0.1;
/// Above this `β`, `coth β − 1 < 1e-17` and `β = 1/(1 − h)` exactly.
const ASYMPTOTIC_BETA: f64 = 20.0;
/// Upper end of the bracket used by the Langevin inversion.
const BETA_MAX: f64 = 700.0;

/// Taylor coefficients `c_n` of `L(β)/β = Σ c_n β^{2n}`
/// (`c_n = 2^{2n+2} B_{2n+2} / (2n+2)!`).
const LANGEVIN_SERIES: [f64; 7] = [
    1.0 / 3.0,
    -1.0 / 45.0,
    2.0 / 945.0,
    -1.0 / 4725.0,
    2.0 / 93555.0,
    -1382.0 / 638_512_875.0,
    4.0 / 18_243_225.0,
];

/// A flux factor `h ∈ [0, 1]`, clamped on construction.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FluxFactor(f64);

impl FluxFactor {
    /// Clamp `h` into `[0, 1]`. NaN maps to 0.
    pub fn new(h: f64) -> Self {
        if h.is_nan() {
            FluxFactor(0.0)
        } else {
            FluxFactor(h.clamp(0.0, 1.0))
        }
    }

    /// Flux factor `|I|/D` of a primitive moment (0 when `D ≤ 0`).
    pub fn from_moments(m: &PrimitiveMoments) -> Self {
        if m.d > 0.0 {
            FluxFactor::new(m.i_norm() / m.d)
        } else {
            FluxFactor(0.0)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Which closure evaluation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureKind {
    Exact,
    Approximate,
}

/// Closure selection plus the numerical parameters of its evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureSpec {
    pub kind: ClosureKind,
    /// Residual tolerance on `|L(β) − h|` for the Langevin inversion.
    pub langevin_tol: f64,
    /// Below this flux factor the moments are treated as isotropic
    /// (`k = δ/3`, `q = 0`); the direction `I/|I|` is undefined there.
    pub h_iso_threshold: f64,
}

impl Default for ClosureSpec {
    fn default() -> Self {
        ClosureSpec {
            kind: ClosureKind::Approximate,
            langevin_tol: 1e-12,
            h_iso_threshold: 1e-14,
        }
    }
}

impl ClosureSpec {
    pub fn exact() -> Self {
        ClosureSpec {
            kind: ClosureKind::Exact,
            ..Default::default()
        }
    }

    pub fn approximate() -> Self {
        ClosureSpec::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.langevin_tol > 0.0) {
            return Err(Error::Config(format!(
                "langevin_tol must be positive, got {}",
                self.langevin_tol
            )));
        }
        if !(self.h_iso_threshold >= 0.0) {
            return Err(Error::Config(format!(
                "h_iso_threshold must be nonnegative, got {}",
                self.h_iso_threshold
            )));
        }
        Ok(())
    }

    /// Evaluate `ψ`, `ζ`, `ψ′` at `h` with the selected closure.
    #[inline]
    pub fn eval(&self, h: FluxFactor) -> ClosureEval {
        match self.kind {
            ClosureKind::Approximate => closure_approx(h),
            ClosureKind::Exact => closure_exact_with_tol(h, self.langevin_tol),
        }
    }

    /// Evaluate `ψ`, `ψ′`, `ψ″` (used by the analysis scans).
    pub fn eval_psi_derivatives(&self, h: FluxFactor) -> PsiDerivatives {
        match self.kind {
            ClosureKind::Approximate => psi_derivatives_approx(h),
            ClosureKind::Exact => psi_derivatives_exact(h, self.langevin_tol),
        }
    }
}

/// Closure functions at one flux factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureEval {
    /// Eddington factor `ψ`.
    pub psi: f64,
    /// Heat-flux factor `ζ`.
    pub zeta: f64,
    /// `dψ/dh`.
    pub psi_prime: f64,
}

/// `ψ` and its first two derivatives with respect to `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiDerivatives {
    pub psi: f64,
    pub psi_prime: f64,
    pub psi_second: f64,
}

/// The Langevin function `L(β) = coth β − 1/β`.
pub fn langevin(beta: f64) -> f64 {
    let b = beta.abs();
    let value = if b < SERIES_BETA {
        b * series_even(b * b, &LANGEVIN_SERIES, 0)
    } else if b > ASYMPTOTIC_BETA {
        1.0 - 1.0 / b
    } else {
        1.0 / b.tanh() - 1.0 / b
    };
    value.copysign(beta)
}

/// `L′(β) = 1/β² − 1/sinh²β`.
pub fn langevin_prime(beta: f64) -> f64 {
    let b = beta.abs();
    if b < SERIES_BETA {
        // d/dβ Σ c_n β^{2n+1} = Σ (2n+1) c_n β^{2n}
        series_weighted(b * b, |n| (2 * n + 1) as f64)
    } else {
        1.0 / (b * b) - csch_squared(b)
    }
}

/// `L″(β) = −2/β³ + 2 cosh β / sinh³ β`.
fn langevin_second(beta: f64) -> f64 {
    let b = beta;
    if b < SERIES_BETA {
        // Σ (2n+1)(2n) c_n β^{2n−1}
        let mut acc = 0.0;
        let mut pow = b; // β^{2n-1} for n = 1
        for (n, c) in LANGEVIN_SERIES.iter().enumerate().skip(1) {
            acc += ((2 * n + 1) * (2 * n)) as f64 * c * pow;
            pow *= b * b;
        }
        acc
    } else {
        let coth = 1.0 / b.tanh();
        -2.0 / (b * b * b) + 2.0 * coth * csch_squared(b)
    }
}

/// `1/sinh²β`, overflow-safe for large β.
fn csch_squared(b: f64) -> f64 {
    if b > 20.0 {
        let e = (-2.0 * b).exp();
        4.0 * e / ((1.0 - e) * (1.0 - e))
    } else {
        let s = b.sinh();
        1.0 / (s * s)
    }
}

/// `Σ_{n ≥ start} c_n x^{n − start}` for the Langevin series.
fn series_even(x: f64, coeffs: &[f64], start: usize) -> f64 {
    coeffs[start..].iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// `Σ w(n) c_n x^n` for the Langevin series.
fn series_weighted(x: f64, w: impl Fn(usize) -> f64) -> f64 {
    LANGEVIN_SERIES
        .iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (n, c)| acc * x + w(n) * c)
}

/// Inverse Langevin function `β = L⁻¹(h)` for `0 ≤ h < 1`.
///
/// Safeguarded Newton iteration inside a shrinking bisection bracket. The
/// returned `β` satisfies `|L(β) − h| ≤ tol`; `β = 0` at `h = 0`. For
/// `h ≥ L(20)` the identity `coth β = 1` (to machine precision) gives
/// `β = 1/(1 − h)` directly, which covers the (unbracketed) range
/// `β > 700` as well.
pub fn langevin_inverse(h: f64, tol: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&h) {
        return Err(Error::Domain(format!(
            "inverse Langevin function requires 0 <= h < 1, got {h}"
        )));
    }
    if h == 0.0 {
        return Ok(0.0);
    }
    if h >= langevin(ASYMPTOTIC_BETA) {
        return Ok(1.0 / (1.0 - h));
    }
    let (mut lo, mut hi) = (0.0_f64, ASYMPTOTIC_BETA.min(BETA_MAX));
    // Cohen's rational approximation as the starting point.
    let mut beta = (h * (3.0 - h * h) / (1.0 - h * h)).clamp(lo, hi);
    for _ in 0..200 {
        let f = langevin(beta) - h;
        if f.abs() <= tol * 1e-3 {
            return Ok(beta);
        }
        if f > 0.0 {
            hi = beta;
        } else {
            lo = beta;
        }
        let step = f / langevin_prime(beta);
        let mut next = beta - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - beta).abs() <= 4.0 * f64::EPSILON * beta {
            beta = next;
            break;
        }
        beta = next;
    }
    let residual = (langevin(beta) - h).abs();
    if residual <= tol {
        Ok(beta)
    } else {
        Err(Error::Numerical(format!(
            "inverse Langevin did not reach tolerance {tol} at h = {h} (residual {residual:e})"
        )))
    }
}

/// Exact Minerbo closure with the default Langevin tolerance.
pub fn closure_exact(h: FluxFactor) -> ClosureEval {
    closure_exact_with_tol(h, ClosureSpec::default().langevin_tol)
}

/// Exact Minerbo closure; `ψ′` by implicit differentiation through `β(h)`.
pub fn closure_exact_with_tol(h: FluxFactor, tol: f64) -> ClosureEval {
    let h = h.value();
    if h >= 1.0 {
        return ClosureEval {
            psi: 1.0,
            zeta: 1.0,
            psi_prime: 2.0,
        };
    }
    let beta = langevin_inverse(h, tol).unwrap_or(1.0 / (1.0 - h));
    exact_from_beta(h, beta)
}

fn exact_from_beta(h: f64, beta: f64) -> ClosureEval {
    if beta > ASYMPTOTIC_BETA {
        // coth β = 1 and β = 1/(1−h) to machine precision.
        let g = 1.0 - h;
        let psi = 1.0 - 2.0 * h * g;
        return ClosureEval {
            psi,
            zeta: 1.0 - 3.0 * g * psi,
            psi_prime: 4.0 * h - 2.0,
        };
    }
    if beta < SERIES_BETA {
        let b2 = beta * beta;
        // L/β and its β-derivative P(β)/(−2) from the series.
        let l_over_b = series_even(b2, &LANGEVIN_SERIES, 0);
        let psi = 1.0 - 2.0 * l_over_b;
        // ζ = L − 2(1 − 3L/β)/β = Σ c_n β^{2n+1} + 6 Σ_{n≥1} c_n β^{2n−1}
        let zeta = beta * l_over_b + 6.0 * beta * series_even(b2, &LANGEVIN_SERIES, 1);
        let dpsi_dbeta = -2.0 * d_l_over_b(beta);
        return ClosureEval {
            psi,
            zeta,
            psi_prime: dpsi_dbeta / langevin_prime(beta),
        };
    }
    let coth = 1.0 / beta.tanh();
    let psi = 1.0 - 2.0 * h / beta;
    let zeta = coth - 3.0 * psi / beta;
    // dψ/dh = (2h/β²)(dβ/dh) − 2/β, dβ/dh = 1/L′(β)
    let psi_prime = 2.0 * h / (beta * beta) / langevin_prime(beta) - 2.0 / beta;
    ClosureEval {
        psi,
        zeta,
        psi_prime,
    }
}

/// `d(L/β)/dβ = Σ 2n c_n β^{2n−1}`.
fn d_l_over_b(beta: f64) -> f64 {
    let mut acc = 0.0;
    let mut pow = beta;
    for (n, c) in LANGEVIN_SERIES.iter().enumerate().skip(1) {
        acc += (2 * n) as f64 * c * pow;
        pow *= beta * beta;
    }
    acc
}

/// `d²(L/β)/dβ² = Σ 2n(2n−1) c_n β^{2n−2}`.
fn d2_l_over_b(beta: f64) -> f64 {
    let mut acc = 0.0;
    let mut pow = 1.0;
    for (n, c) in LANGEVIN_SERIES.iter().enumerate().skip(1) {
        acc += ((2 * n) * (2 * n - 1)) as f64 * c * pow;
        pow *= beta * beta;
    }
    acc
}

/// Second derivative data for the exact closure.
fn psi_derivatives_exact(h: FluxFactor, tol: f64) -> PsiDerivatives {
    let h = h.value();
    if h >= 1.0 {
        return PsiDerivatives {
            psi: 1.0,
            psi_prime: 2.0,
            psi_second: 4.0,
        };
    }
    let beta = langevin_inverse(h, tol).unwrap_or(1.0 / (1.0 - h));
    let first = exact_from_beta(h, beta);
    if beta > ASYMPTOTIC_BETA {
        return PsiDerivatives {
            psi: first.psi,
            psi_prime: first.psi_prime,
            psi_second: 4.0,
        };
    }
    // ψ as a function of β: ψ_β, ψ_ββ; then chain rule with h = L(β).
    let (psi_b, psi_bb) = if beta < SERIES_BETA {
        (-2.0 * d_l_over_b(beta), -2.0 * d2_l_over_b(beta))
    } else {
        // ψ = 1 − 2L/β
        let l = langevin(beta);
        let lp = langevin_prime(beta);
        let lpp = langevin_second(beta);
        let b = beta;
        let d1 = (lp * b - l) / (b * b);
        let d2 = lpp / b - 2.0 * lp / (b * b) + 2.0 * l / (b * b * b);
        (-2.0 * d1, -2.0 * d2)
    };
    let lp = langevin_prime(beta);
    let lpp = langevin_second(beta);
    // dψ/dh = ψ_β / L′ ; d²ψ/dh² = (ψ_ββ L′ − ψ_β L″) / L′³
    PsiDerivatives {
        psi: first.psi,
        psi_prime: psi_b / lp,
        psi_second: (psi_bb * lp - psi_b * lpp) / (lp * lp * lp),
    }
}

/// Polynomial approximation of the Minerbo closure.
#[inline]
pub fn closure_approx(h: FluxFactor) -> ClosureEval {
    let h = h.value();
    let h2 = h * h;
    let psi = 1.0 / 3.0 + (2.0 / 15.0) * h2 * (3.0 - h + 3.0 * h2);
    let psi_prime = (2.0 / 15.0) * h * (6.0 - 3.0 * h + 12.0 * h2);
    let poly = 45.0 + h * (10.0 + h * (-12.0 + h * (-12.0 + h * (38.0 + h * (-12.0 + h * 18.0)))));
    ClosureEval {
        psi,
        zeta: h * poly / 75.0,
        psi_prime,
    }
}

fn psi_derivatives_approx(h: FluxFactor) -> PsiDerivatives {
    let e = closure_approx(h);
    let h = h.value();
    PsiDerivatives {
        psi: e.psi,
        psi_prime: e.psi_prime,
        psi_second: (2.0 / 15.0) * (6.0 - 6.0 * h + 36.0 * h * h),
    }
}

/// Symmetric rank-2 Eddington tensor `k`.
pub type Tensor2 = [[f64; 3]; 3];
/// Symmetric rank-3 heat-flux tensor `q`.
pub type Tensor3 = [[[f64; 3]; 3]; 3];

/// Build `k` and `q` from a realizable primitive moment.
///
/// `k = ½[(1−ψ)δ + (3ψ−1) n n]`,
/// `q = ½[(h−ζ)(n_i δ_jk + n_j δ_ik + n_k δ_ij) + (5ζ−3h) n n n]`,
/// with `n = I/|I|`. Isotropic below `spec.h_iso_threshold`.
pub fn closure_tensors(m: &PrimitiveMoments, spec: &ClosureSpec) -> Result<(Tensor2, Tensor3)> {
    let check = m.realizability();
    if !check.realizable {
        return Err(Error::Domain(format!(
            "closure tensors require realizable moments, got D = {}, gamma = {}",
            m.d, check.gamma
        )));
    }
    let mut k = [[0.0; 3]; 3];
    let mut q = [[[0.0; 3]; 3]; 3];
    let h = FluxFactor::from_moments(m);
    if h.value() < spec.h_iso_threshold {
        for (i, row) in k.iter_mut().enumerate() {
            row[i] = 1.0 / 3.0;
        }
        return Ok((k, q));
    }
    let n = m.direction();
    let c = spec.eval(h);
    let hv = h.value();
    for i in 0..3 {
        for j in 0..3 {
            let delta = if i == j { 1.0 } else { 0.0 };
            k[i][j] = 0.5 * ((1.0 - c.psi) * delta + (3.0 * c.psi - 1.0) * n[i] * n[j]);
            for l in 0..3 {
                let d_jl = if j == l { 1.0 } else { 0.0 };
                let d_il = if i == l { 1.0 } else { 0.0 };
                q[i][j][l] = 0.5
                    * ((hv - c.zeta) * (n[i] * d_jl + n[j] * d_il + n[l] * delta)
                        + (5.0 * c.zeta - 3.0 * hv) * n[i] * n[j] * n[l]);
            }
        }
    }
    Ok((k, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn langevin_series_matches_closed_form_at_switch() {
        let b = SERIES_BETA;
        let closed = 1.0 / b.tanh() - 1.0 / b;
        let series = b * series_even(b * b, &LANGEVIN_SERIES, 0);
        assert!((closed - series).abs() < 1e-15);
        let closed_p = 1.0 / (b * b) - csch_squared(b);
        assert!((closed_p - langevin_prime(b * 0.999_999_9)).abs() < 1e-9);
    }

    #[test]
    fn langevin_inverse_rejects_h_one() {
        assert!(langevin_inverse(1.0, 1e-12).is_err());
        assert!(langevin_inverse(-0.1, 1e-12).is_err());
    }

    #[test]
    fn exact_branches_are_continuous() {
        // Around the series switch (β = 0.1) and the asymptotic switch (β = 20).
        for &beta in &[SERIES_BETA, ASYMPTOTIC_BETA] {
            let h = langevin(beta);
            let a = closure_exact(FluxFactor::new(h * (1.0 - 1e-9)));
            let b = closure_exact(FluxFactor::new(h * (1.0 + 1e-9)));
            assert!((a.psi - b.psi).abs() < 1e-8, "{a:?} {b:?}");
            assert!((a.zeta - b.zeta).abs() < 1e-8, "{a:?} {b:?}");
            assert!((a.psi_prime - b.psi_prime).abs() < 1e-6, "{a:?} {b:?}");
        }
    }

    #[test]
    fn exact_second_derivative_matches_finite_difference() {
        for &h in &[0.01, 0.2, 0.5, 0.8, 0.97] {
            let step = 1e-5;
            let p = |x: f64| closure_exact(FluxFactor::new(x)).psi_prime;
            let fd = (p(h + step) - p(h - step)) / (2.0 * step);
            let an = psi_derivatives_exact(FluxFactor::new(h), 1e-12).psi_second;
            assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "h={h}: {fd} vs {an}");
        }
    }
}
