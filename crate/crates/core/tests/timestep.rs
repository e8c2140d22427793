//! Time-step bounds and integrators.

use twomoment::closure::ClosureSpec;
use twomoment::dg::{project_velocity, DgOperator};
use twomoment::limiters::LimiterConfig;
use twomoment::mesh::{uniform_edges, Boundary, EnergyGrid, MeshConfig, PhaseSpaceMesh};
use twomoment::moments::{OpacitySpec, PrimitiveMoments};
use twomoment::solvers::SolverConfig;
use twomoment::timestep::{
    benchmark_dt, compute_dt, CflSpec, DtLimiter, ExplicitScheme, ImexTableau, Integrator, TimeStepper,
};

fn operator(energy: EnergyGrid, v: f64, degree: usize) -> DgOperator {
    let mesh = PhaseSpaceMesh::new(MeshConfig {
        degree,
        energy,
        space_edges: vec![uniform_edges(0.0, 1.0, 8)],
        bc: vec![(Boundary::Periodic, Boundary::Periodic)],
    })
    .unwrap();
    let velocity = project_velocity(&mesh, &|_| [v, 0.0, 0.0]).unwrap();
    let solver = SolverConfig {
        tol: 1e-13,
        ..SolverConfig::default()
    };
    DgOperator::new(mesh, ClosureSpec::default(), solver, velocity).unwrap()
}

#[test]
fn explicit_schemes_are_consistent() {
    for s in [ExplicitScheme::ForwardEuler, ExplicitScheme::Ssprk2, ExplicitScheme::Ssprk3] {
        let b = s.butcher_weights();
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-15, "{s:?}");
        assert_eq!(b.len(), s.shu_osher().len());
        assert_eq!(s.shu_osher()[0], 0.0);
    }
}

#[test]
fn spatial_bound_matches_hand_computation() {
    // k = 2: k̂ = 4 LGL points, smallest normalized weight 1/12; |K| = 1/8.
    let op = operator(EnergyGrid::Monochromatic, 0.0, 2);
    let (dt, which) = compute_dt(&op, &CflSpec::default()).unwrap();
    assert_eq!(which, DtLimiter::Spatial);
    assert!((dt - 0.9 / 12.0 / 8.0).abs() < 1e-15, "{dt}");
    // A uniform velocity scales the bound by (1 − |v|).
    let op = operator(EnergyGrid::Monochromatic, 0.25, 2);
    let (dt_v, _) = compute_dt(&op, &CflSpec::default()).unwrap();
    assert!((dt_v - 0.75 * dt).abs() < 1e-15, "{dt_v} vs {dt}");
    // k = 1: k̂ = 3 LGL points, smallest weight 1/6.
    let op = operator(EnergyGrid::Monochromatic, 0.0, 1);
    let (dt1, _) = compute_dt(&op, &CflSpec::default()).unwrap();
    assert!((dt1 - 0.9 / 6.0 / 8.0).abs() < 1e-15, "{dt1}");
    assert!((benchmark_dt(&op) - 0.3 / 8.0 / 2.0).abs() < 1e-15);
}

#[test]
fn invalid_cfl_weights_are_rejected() {
    let op = operator(EnergyGrid::Monochromatic, 0.0, 1);
    let bad = CflSpec {
        gammas: Some([0.5, 0.4, 0.2]),
        ..CflSpec::default()
    };
    assert!(compute_dt(&op, &bad).is_err());
    let bad_safety = CflSpec {
        cfl_safety: 1.5,
        ..CflSpec::default()
    };
    assert!(compute_dt(&op, &bad_safety).is_err());
    let mut tab = ImexTableau::forward_backward_euler();
    assert!(tab.validate().is_ok());
    tab.alpha_ex[0][1] = 0.5;
    assert!(tab.validate().is_err());
}

#[test]
fn uniform_state_is_unchanged_by_every_explicit_scheme() {
    let op = operator(EnergyGrid::Elements(uniform_edges(0.0, 5.0, 3)), 0.2, 2);
    let field0 = op.initialize(&|eps, _| PrimitiveMoments::new((-eps).exp(), [0.2 * (-eps).exp(), 0.0, 0.0])).unwrap();
    let mut stepper = TimeStepper::new(op, LimiterConfig::default(), OpacitySpec::default()).unwrap();
    for s in [ExplicitScheme::ForwardEuler, ExplicitScheme::Ssprk2, ExplicitScheme::Ssprk3] {
        let mut field = field0.clone();
        let rep = stepper.explicit_step(&mut field, 0.01, s);
        assert_eq!(rep.conversion_failures, 0);
        for (a, b) in field.u.iter().zip(&field0.u) {
            for k in 0..4 {
                assert!((a[k] - b[k]).abs() < 1e-12 * b[0].max(1e-3), "{s:?}: {a:?} vs {b:?}");
            }
        }
    }
}

#[test]
fn forward_backward_euler_relaxes_uniform_state_exactly() {
    // Without spatial gradients only the implicit collision update acts:
    // D¹ = (D⁰ + Δt χ D₀)/(1 + Δt χ), I¹ = I⁰/(1 + Δt κ).
    let op = operator(EnergyGrid::Monochromatic, 0.0, 1);
    let opacity = OpacitySpec {
        chi: 2.0,
        sigma: 3.0,
        d0: 0.5,
    };
    let field0 = op.initialize(&|_, _| PrimitiveMoments::new(1.0, [0.6, 0.0, 0.0])).unwrap();
    let mut stepper = TimeStepper::new(op, LimiterConfig::default(), opacity).unwrap();
    let dt = 0.2;
    let want_d = (1.0 + dt * 2.0 * 0.5) / (1.0 + dt * 2.0);
    let want_i = 0.6 / (1.0 + dt * 5.0);
    for integrator in [Integrator::ForwardBackwardEuler, Integrator::Imex(ImexTableau::forward_backward_euler())] {
        let mut field = field0.clone();
        let rep = stepper.step(&mut field, dt, &integrator).unwrap();
        assert_eq!(rep.collision_failures, 0);
        for u in &field.u {
            assert!((u[0] - want_d).abs() < 1e-10, "{integrator:?}: {u:?}");
            assert!((u[1] - want_i).abs() < 1e-10, "{integrator:?}: {u:?}");
        }
    }
}
