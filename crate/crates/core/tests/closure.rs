//! Minerbo closure: independent oracles, limits and invariants.

use proptest::prelude::*;

use twomoment::closure::{
    closure_approx, closure_exact, closure_tensors, langevin, langevin_inverse, ClosureSpec, FluxFactor,
};
use twomoment::moments::PrimitiveMoments;

/// `L⁻¹(h)` by plain bisection on the closed form, independent of the
/// library's series/Newton machinery.
fn bisect_inverse_langevin(h: f64) -> f64 {
    let l = |b: f64| 1.0 / b.tanh() - 1.0 / b;
    let (mut lo, mut hi) = (1e-8, 1.0 / (1.0 - h) + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if l(mid) < h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn exact_closure_matches_bisection_oracle() {
    for &h in &[0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99] {
        let beta = bisect_inverse_langevin(h);
        let psi = 1.0 - 2.0 * h / beta;
        let zeta = 1.0 / beta.tanh() - 3.0 * psi / beta;
        let e = closure_exact(FluxFactor::new(h));
        assert!((e.psi - psi).abs() < 1e-10, "h={h}: psi {} vs {psi}", e.psi);
        assert!((e.zeta - zeta).abs() < 1e-9, "h={h}: zeta {} vs {zeta}", e.zeta);
        let lib_beta = langevin_inverse(h, 1e-13).unwrap();
        assert!((lib_beta - beta).abs() < 1e-8 * beta.max(1.0), "h={h}: {lib_beta} vs {beta}");
    }
}

#[test]
fn closures_attain_isotropic_and_beam_limits() {
    for eval in [closure_exact, closure_approx] {
        let iso = eval(FluxFactor::new(0.0));
        assert!((iso.psi - 1.0 / 3.0).abs() < 1e-14);
        assert!(iso.zeta.abs() < 1e-14);
        let beam = eval(FluxFactor::new(1.0));
        assert!((beam.psi - 1.0).abs() < 1e-12);
        assert!((beam.zeta - 1.0).abs() < 1e-12);
    }
}

#[test]
fn approximate_closure_tracks_exact_closure() {
    // The polynomial fit is accurate to the percent level over the range.
    for i in 0..=100 {
        let h = FluxFactor::new(i as f64 / 100.0);
        let (a, e) = (closure_approx(h), closure_exact(h));
        assert!((a.psi - e.psi).abs() < 0.01, "h={}: {} vs {}", h.value(), a.psi, e.psi);
    }
}

#[test]
fn langevin_inverse_round_trips() {
    for &h in &[1e-6, 1e-3, 0.2, 0.6, 0.98, 0.999_999] {
        let b = langevin_inverse(h, 1e-13).unwrap();
        assert!((langevin(b) - h).abs() <= 1e-12, "h={h}");
    }
    assert_eq!(langevin_inverse(0.0, 1e-12).unwrap(), 0.0);
}

#[test]
fn tensors_have_unit_trace_and_beam_structure() {
    let spec = ClosureSpec::default();
    let m = PrimitiveMoments::new(2.0, [0.6, -0.8, 0.0]);
    let (k, q) = closure_tensors(&m, &spec).unwrap();
    let trace = k[0][0] + k[1][1] + k[2][2];
    assert!((trace - 1.0).abs() < 1e-14);
    // k_ij n_j along the flux direction is ψ n_i.
    let n = [0.3, -0.4, 0.0];
    let psi = closure_approx(FluxFactor::new(0.5)).psi;
    for i in 0..3 {
        let kn: f64 = (0..3).map(|j| k[i][j] * n[j] / 0.5).sum();
        assert!((kn - psi * n[i] / 0.5).abs() < 1e-14);
    }
    // q_iik = h n_k (trace identity of the heat-flux tensor).
    for kk in 0..3 {
        let tr: f64 = (0..3).map(|i| q[i][i][kk]).sum();
        assert!((tr - n[kk]).abs() < 1e-14, "component {kk}: {tr}");
    }
}

#[test]
fn isotropic_state_gives_isotropic_tensors() {
    let m = PrimitiveMoments::isotropic(1.0);
    let (k, q) = closure_tensors(&m, &ClosureSpec::exact()).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { 1.0 / 3.0 } else { 0.0 };
            assert!((k[i][j] - want).abs() < 1e-15);
            for l in 0..3 {
                assert_eq!(q[i][j][l], 0.0);
            }
        }
    }
}

proptest! {
    #[test]
    fn eddington_factor_lies_between_h_squared_and_one(h in 0.0f64..=1.0) {
        for spec in [ClosureSpec::exact(), ClosureSpec::approximate()] {
            let e = spec.eval(FluxFactor::new(h));
            prop_assert!(e.psi >= h * h - 1e-13, "psi={} h={h}", e.psi);
            prop_assert!(e.psi <= 1.0 + 1e-13);
            prop_assert!(e.psi >= 1.0 / 3.0 - 1e-14);
        }
    }

    #[test]
    fn psi_prime_matches_finite_difference(h in 0.01f64..0.99) {
        let step = 1e-6;
        for spec in [ClosureSpec::exact(), ClosureSpec::approximate()] {
            let p = |x: f64| spec.eval(FluxFactor::new(x)).psi;
            let fd = (p(h + step) - p(h - step)) / (2.0 * step);
            let an = spec.eval(FluxFactor::new(h)).psi_prime;
            prop_assert!((fd - an).abs() < 1e-6, "{:?} h={h}: {fd} vs {an}", spec.kind);
        }
    }
}
