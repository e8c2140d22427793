//! Semi-discrete DG operator: steady states, conservation and fluxes.

use twomoment::closure::ClosureSpec;
use twomoment::dg::{lf_flux_spatial_states, node_weights, project_velocity, DgOperator, MomentField};
use twomoment::mesh::{uniform_edges, Boundary, EnergyGrid, MeshConfig, PhaseSpaceMesh};
use twomoment::moments::{ClosureState, PrimitiveMoments, Vec4};
use twomoment::solvers::SolverConfig;

fn periodic_operator(energy: EnergyGrid, v: &dyn Fn([f64; 3]) -> [f64; 3]) -> DgOperator {
    let mesh = PhaseSpaceMesh::new(MeshConfig {
        degree: 2,
        energy,
        space_edges: vec![uniform_edges(0.0, 1.0, 8)],
        bc: vec![(Boundary::Periodic, Boundary::Periodic)],
    })
    .unwrap();
    let velocity = project_velocity(&mesh, v).unwrap();
    let solver = SolverConfig {
        tol: 1e-13,
        ..SolverConfig::default()
    };
    DgOperator::new(mesh, ClosureSpec::default(), solver, velocity).unwrap()
}

fn rhs_of(op: &DgOperator, field: &mut MomentField) -> Vec<Vec4> {
    let mut rhs = vec![[0.0; 4]; op.n_dofs()];
    let diag = op.assemble_rhs(field, &mut rhs);
    assert_eq!(diag.conversion_failures, 0);
    rhs
}

#[test]
fn uniform_state_is_steady_at_constant_velocity() {
    let op = periodic_operator(EnergyGrid::Monochromatic, &|_| [0.2, 0.0, 0.0]);
    let mut field = op.initialize(&|_, _| PrimitiveMoments::new(1.0, [0.3, 0.0, 0.0])).unwrap();
    let rhs = rhs_of(&op, &mut field);
    for r in &rhs {
        for c in r {
            assert!(c.abs() < 1e-10, "{r:?}");
        }
    }
}

#[test]
fn periodic_streaming_conserves_number() {
    let op = periodic_operator(EnergyGrid::Monochromatic, &|_| [0.0; 3]);
    let tau = std::f64::consts::TAU;
    let mut field = op
        .initialize(&|_, x| {
            let d = 0.5 + 0.49 * (tau * x[0]).sin();
            PrimitiveMoments::new(d, [0.9 * d, 0.0, 0.0])
        })
        .unwrap();
    let rhs = rhs_of(&op, &mut field);
    let mesh = &op.mesh;
    let npe = mesh.nodes_per_element();
    let (mut total, mut scale) = (0.0, 0.0);
    for e in 0..mesh.n_elements() {
        for (k, w) in node_weights(mesh, e).iter().enumerate() {
            total += w * rhs[e * npe + k][0];
            scale += w * rhs[e * npe + k][0].abs();
        }
    }
    assert!(scale > 1e-3, "the test state must not be steady");
    assert!(total.abs() < 1e-13 * scale, "{total} vs {scale}");
}

#[test]
fn spectral_operator_conserves_number_with_velocity_gradient() {
    // Periodic velocity field with energy-space advection: the Eulerian
    // number is conserved by the combined spatial and energy fluxes.
    let tau = std::f64::consts::TAU;
    let op = periodic_operator(EnergyGrid::Elements(uniform_edges(0.0, 10.0, 6)), &|x| {
        [0.1 * (tau * x[0]).sin(), 0.0, 0.0]
    });
    let mut field = op
        .initialize(&|eps, x| {
            let d = 0.5 / ((eps / 3.0 - 1.0).exp() + 1.0) * (1.0 + 0.3 * (tau * x[0]).cos());
            PrimitiveMoments::new(d, [0.2 * d, 0.0, 0.0])
        })
        .unwrap();
    let rhs = rhs_of(&op, &mut field);
    let mesh = &op.mesh;
    let npe = mesh.nodes_per_element();
    let (mut total, mut scale) = (0.0, 0.0);
    for e in 0..mesh.n_elements() {
        for (k, w) in node_weights(mesh, e).iter().enumerate() {
            total += w * rhs[e * npe + k][0];
            scale += w * rhs[e * npe + k][0].abs();
        }
    }
    assert!(total.abs() < 1e-12 * scale, "{total} vs {scale}");
}

#[test]
fn lax_friedrichs_flux_is_consistent_and_conservative() {
    let spec = ClosureSpec::default();
    let v = [0.1, 0.0, 0.0];
    let a = ClosureState::new(&[1.0, 0.4, 0.1, 0.0], &spec);
    let b = ClosureState::new(&[0.5, -0.1, 0.0, 0.2], &spec);
    // Consistency: equal states give the physical flux.
    let f_aa = lf_flux_spatial_states(&a, &a, &v, 0);
    let phys = a.flux(0, &v);
    for k in 0..4 {
        assert!((f_aa[k] - phys[k]).abs() < 1e-15);
    }
    // Global LF with unit wave speed on the directional conserved moments.
    let f_ab = lf_flux_spatial_states(&a, &b, &v, 0);
    let fa = a.flux(0, &v);
    let fb = b.flux(0, &v);
    let ua = a.conserved_directional(0, v[0]);
    let ub = b.conserved_directional(0, v[0]);
    for k in 0..4 {
        let want = 0.5 * (fa[k] + fb[k]) - 0.5 * (ub[k] - ua[k]);
        assert!((f_ab[k] - want).abs() < 1e-15, "component {k}");
    }
}
