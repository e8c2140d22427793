//! Flux Jacobians, wave speeds, closure bounds and Lipschitz ratios.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use twomoment::analysis::{
    bound_scan, d_ratio_closed_form, flux_jacobian, flux_jacobian_1d, flux_jacobian_fd, gradient_bound_quantity,
    linspace, lipschitz_ratios, lipschitz_scan, loglog_slope, phi_terms, spectral_radius, spectral_radius_2x2,
    wavespeed_scan_1d, ScanGrid,
};
use twomoment::closure::ClosureSpec;
use twomoment::moments::{dot3, norm3, ClosureState};
use twomoment::solvers::SolverConfig;

const CLOSURES: [fn() -> ClosureSpec; 2] = [ClosureSpec::exact, ClosureSpec::approximate];

#[test]
fn isotropic_state_at_rest_has_diffusive_wave_speed() {
    for spec in CLOSURES.map(|f| f()) {
        let j = flux_jacobian_1d(0.0, 0.0, &spec).unwrap();
        let want = [[0.0, 1.0], [1.0 / 3.0, 0.0]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((j.matrix[r][c] - want[r][c]).abs() < 1e-14, "{:?}", j.matrix);
            }
        }
        assert!((j.lambda_max - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        assert!((spectral_radius_2x2(&j.matrix) - j.lambda_max).abs() < 1e-14);
    }
}

#[test]
fn free_streaming_beam_at_rest_moves_at_light_speed() {
    for spec in CLOSURES.map(|f| f()) {
        let j = flux_jacobian_1d(0.0, 1.0, &spec).unwrap();
        assert!((j.lambda_max - 1.0).abs() < 1e-14, "{}", j.lambda_max);
    }
}

#[test]
fn closed_form_lambda_matches_matrix_spectral_radius() {
    let spec = ClosureSpec::approximate();
    for v in linspace(0.0, 0.9, 10) {
        for h in linspace(0.0, 0.99, 12) {
            let j = flux_jacobian_1d(v, h, &spec).unwrap();
            let r = spectral_radius_2x2(&j.matrix);
            assert!((j.lambda_max - r).abs() < 1e-10 * r.max(1.0), "v={v} h={h}: {} vs {r}", j.lambda_max);
        }
    }
}

#[test]
fn closed_form_1d_matches_the_general_jacobian_block() {
    for spec in CLOSURES.map(|f| f()) {
        for &(v, h) in &[(0.1, 0.3), (0.3, 0.7), (-0.2, 0.5), (0.5, 0.95)] {
            let j1 = flux_jacobian_1d(v, h, &spec).unwrap();
            let j4 = flux_jacobian(&[1.0, h, 0.0, 0.0], &[v, 0.0, 0.0], 0, &spec).unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    assert!(
                        (j1.matrix[r][c] - j4[(r, c)]).abs() < 1e-10,
                        "{:?} v={v} h={h} ({r},{c}): {} vs {}",
                        spec.kind,
                        j1.matrix[r][c],
                        j4[(r, c)]
                    );
                }
            }
        }
    }
}

#[test]
fn analytic_jacobian_matches_finite_differences() {
    let solver = SolverConfig {
        tol: 1e-14,
        max_iter: 500,
        ..SolverConfig::default()
    };
    for spec in CLOSURES.map(|f| f()) {
        let m = [1.0, 0.3, -0.2, 0.25];
        let v = [0.1, 0.15, -0.05];
        let u = ClosureState::new(&m, &spec).conserved(&v);
        for dir in 0..3 {
            let an = flux_jacobian(&m, &v, dir, &spec).unwrap();
            let fd = flux_jacobian_fd(&u, &v, dir, &spec, &solver);
            let err = (an - fd).abs().max();
            assert!(err < 1e-6, "{:?} dir {dir}: {err}", spec.kind);
        }
    }
}

#[test]
fn one_dimensional_scan_never_exceeds_light_speed() {
    for spec in CLOSURES.map(|f| f()) {
        let grid = ScanGrid::uniform(41, 41);
        let pts = wavespeed_scan_1d(&grid, &spec).unwrap();
        let worst = pts.iter().filter(|p| !p.singular).map(|p| p.lambda_max).fold(0.0, f64::max);
        assert!(worst <= 1.0 + 1e-12, "{worst}");
    }
    assert!(flux_jacobian_1d(1.5, 0.5, &ClosureSpec::default()).is_err());
    assert!(flux_jacobian_1d(0.5, 1.5, &ClosureSpec::default()).is_err());
}

#[test]
fn three_dimensional_wave_speed_is_near_one_at_small_v() {
    let spec = ClosureSpec::approximate();
    let m = [1.0, 0.5, 0.2, -0.1];
    let a = spectral_radius(&flux_jacobian(&m, &[0.0; 3], 0, &spec).unwrap());
    assert!(a <= 1.0 + 1e-12, "{a}");
}

#[test]
fn eddington_bounds_hold_for_both_closures() {
    // Bound (d) is strict and degenerates at h = 0 (its limit is 0 there).
    let grid = linspace(1e-6, 1.0, 2001);
    for spec in CLOSURES.map(|f| f()) {
        for b in bound_scan(&grid, &spec) {
            assert!(b.pass, "{:?} {}: margin {} at h = {}", spec.kind, b.label, b.worst_margin, b.worst_h);
        }
        let q = gradient_bound_quantity(&phi_terms(1.0, &spec));
        assert!((q - 4.0).abs() < 1e-10, "{:?}: {q}", spec.kind);
    }
}

#[test]
fn d_ratio_limits() {
    // Isotropic: φ₁ = 0 gives 1/3 for any angle; beam: φ₁ = −4 gives 1 along the flux.
    for c in [0.0, 0.5, 1.0] {
        assert!((d_ratio_closed_form(0.0, c) - 1.0 / 3.0).abs() < 1e-15);
    }
    assert!((d_ratio_closed_form(-4.0, 1.0) - 1.0).abs() < 1e-15);
    let spec = ClosureSpec::approximate();
    assert!((phi_terms(1.0, &spec).phi1 + 4.0).abs() < 1e-14);
    let s = lipschitz_ratios(&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.3, 0.0], &spec);
    assert!((s.d_ratio - 1.0 / 3.0).abs() < 1e-8, "{}", s.d_ratio);
}

#[test]
fn lipschitz_scan_stays_below_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for spec in CLOSURES.map(|f| f()) {
        let rep = lipschitz_scan(2000, 1.0 - 1e-4, &mut rng, &spec);
        assert_eq!(rep.samples, 2000);
        assert!(rep.max_d_ratio <= 1.0 + 1e-6, "{:?}: {}", spec.kind, rep.max_d_ratio);
        assert!(rep.max_i_ratio <= 1.0 + 1e-6, "{:?}: {}", spec.kind, rep.max_i_ratio);
    }
}

#[test]
fn loglog_slope_recovers_power_laws() {
    let x = [0.05, 0.1, 0.2, 0.4];
    let y: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
    assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    let y3: Vec<f64> = x.iter().map(|v: &f64| v.powi(3)).collect();
    assert!((loglog_slope(&x, &y3) - 3.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn d_ratio_closed_form_matches_finite_difference(
        h in 0.0f64..0.999,
        theta in 0.0f64..std::f64::consts::PI,
        speed in 0.01f64..0.9,
    ) {
        let spec = ClosureSpec::approximate();
        let m = [1.0, h, 0.0, 0.0];
        let v = [speed * theta.cos(), speed * theta.sin(), 0.0];
        let s = lipschitz_ratios(&m, &v, &spec);
        let cos = if h > 0.0 { dot3(&[1.0, 0.0, 0.0], &v) / norm3(&v) } else { 0.0 };
        let want = d_ratio_closed_form(phi_terms(h, &spec).phi1, cos);
        prop_assert!((s.d_ratio - want).abs() < 1e-6, "{} vs {}", s.d_ratio, want);
    }
}
