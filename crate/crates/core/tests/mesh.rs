//! Quadrature rules, Lagrange bases and phase-space mesh bookkeeping.

use proptest::prelude::*;

use twomoment::mesh::{
    gauss_legendre, gauss_lobatto, lagrange_derivatives, lagrange_values, uniform_edges, Boundary, EnergyGrid,
    MeshConfig, PhaseSpaceMesh, Quadrature,
};

fn integrate(q: &Quadrature, f: impl Fn(f64) -> f64) -> f64 {
    q.points.iter().zip(&q.weights).map(|(&x, &w)| w * f(x)).sum()
}

#[test]
fn gauss_legendre_is_exact_to_degree_2n_minus_1() {
    for n in 1..=8 {
        let q = gauss_legendre(n);
        assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for p in 0..2 * n {
            let exact = 1.0 / (p as f64 + 1.0);
            let got = integrate(&q, |x| x.powi(p as i32));
            assert!((got - exact).abs() < 1e-13, "n={n} p={p}: {got} vs {exact}");
        }
        // Degree 2n is not integrated exactly.
        let miss = integrate(&q, |x| x.powi(2 * n as i32)) - 1.0 / (2 * n + 1) as f64;
        assert!(miss.abs() > 1e-10, "n={n}");
    }
}

#[test]
fn gauss_lobatto_is_exact_to_degree_2n_minus_3_and_hits_endpoints() {
    for n in 2..=8 {
        let q = gauss_lobatto(n);
        assert_eq!(q.points[0], 0.0);
        assert_eq!(q.points[n - 1], 1.0);
        assert!(q.weights.iter().all(|&w| w > 0.0));
        for p in 0..=(2 * n - 3) {
            let exact = 1.0 / (p as f64 + 1.0);
            let got = integrate(&q, |x| x.powi(p as i32));
            assert!((got - exact).abs() < 1e-13, "n={n} p={p}: {got} vs {exact}");
        }
    }
}

#[test]
fn three_point_gauss_legendre_matches_closed_form() {
    let q = gauss_legendre(3);
    let r = 0.5 * (3.0f64 / 5.0).sqrt();
    let want = [0.5 - r, 0.5, 0.5 + r];
    let want_w = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    for i in 0..3 {
        assert!((q.points[i] - want[i]).abs() < 1e-15);
        assert!((q.weights[i] - want_w[i]).abs() < 1e-15);
    }
}

fn mesh_1d(degree: usize, energy: EnergyGrid) -> PhaseSpaceMesh {
    PhaseSpaceMesh::new(MeshConfig {
        degree,
        energy,
        space_edges: vec![uniform_edges(0.0, 2.0, 5)],
        bc: vec![(Boundary::Outflow, Boundary::Outflow)],
    })
    .unwrap()
}

#[test]
fn energy_weights_integrate_polynomial_moments_exactly() {
    let mesh = mesh_1d(2, EnergyGrid::Elements(uniform_edges(0.0, 3.0, 4)));
    // Σ w² over the whole mesh = |x| ∫ ε² dε; Σ w³ = |x| ∫ ε³ dε.
    let (mut s2, mut s3) = (0.0, 0.0);
    for e in 0..mesh.n_elements() {
        let (w2, w3) = mesh.energy_weights(e);
        s2 += w2.iter().sum::<f64>();
        s3 += w3.iter().sum::<f64>();
    }
    assert!((s2 - 2.0 * 9.0).abs() < 1e-12, "{s2}");
    assert!((s3 - 2.0 * 81.0 / 4.0).abs() < 1e-12, "{s3}");
    let vol: f64 = (0..mesh.n_elements()).map(|e| mesh.element_volume(e)).sum();
    assert!((vol - 18.0).abs() < 1e-12);
}

#[test]
fn element_and_node_indices_round_trip() {
    let mesh = PhaseSpaceMesh::new(MeshConfig {
        degree: 1,
        energy: EnergyGrid::Elements(uniform_edges(0.0, 1.0, 3)),
        space_edges: vec![uniform_edges(0.0, 1.0, 4), uniform_edges(-1.0, 1.0, 2)],
        bc: vec![
            (Boundary::Outflow, Boundary::Outflow),
            (Boundary::Periodic, Boundary::Periodic),
        ],
    })
    .unwrap();
    assert_eq!(mesh.n_elements(), 3 * 4 * 2);
    assert_eq!(mesh.nodes_per_element(), 8);
    for e in 0..mesh.n_elements() {
        let (ie, i1, i2) = mesh.element_coords(e);
        assert_eq!(mesh.element_index(ie, i1, i2), e);
    }
}

#[test]
fn monochromatic_grid_has_unit_energy_weight() {
    let mesh = mesh_1d(1, EnergyGrid::Monochromatic);
    assert_eq!(mesh.n_energy(), 1);
    assert_eq!(mesh.eps_node(0, 0), 1.0);
    assert_eq!(mesh.energy_weight_tau(0, 0), 1.0);
}

#[test]
fn invalid_meshes_are_rejected() {
    let bad_edges = MeshConfig {
        degree: 1,
        energy: EnergyGrid::Monochromatic,
        space_edges: vec![vec![0.0, 1.0, 0.5]],
        bc: vec![(Boundary::Outflow, Boundary::Outflow)],
    };
    assert!(PhaseSpaceMesh::new(bad_edges).is_err());
    let mixed_periodic = MeshConfig {
        degree: 1,
        energy: EnergyGrid::Monochromatic,
        space_edges: vec![uniform_edges(0.0, 1.0, 2)],
        bc: vec![(Boundary::Periodic, Boundary::Outflow)],
    };
    assert!(PhaseSpaceMesh::new(mixed_periodic).is_err());
    let negative_energy = MeshConfig {
        degree: 1,
        energy: EnergyGrid::Elements(vec![-1.0, 1.0]),
        space_edges: vec![uniform_edges(0.0, 1.0, 2)],
        bc: vec![(Boundary::Outflow, Boundary::Outflow)],
    };
    assert!(PhaseSpaceMesh::new(negative_energy).is_err());
}

proptest! {
    #[test]
    fn lagrange_basis_is_a_partition_of_unity(n in 1usize..7, x in 0.0f64..=1.0) {
        let nodes = gauss_legendre(n).points;
        let vals = lagrange_values(&nodes, x);
        prop_assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ders = lagrange_derivatives(&nodes, x);
        prop_assert!(ders.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn lagrange_interpolation_reproduces_polynomials(n in 2usize..7, x in 0.0f64..=1.0) {
        let nodes = gauss_lobatto(n).points;
        let p = |t: f64| (0..n).map(|j| (j as f64 + 1.0) * t.powi(j as i32)).sum::<f64>();
        let dp = |t: f64| (1..n).map(|j| (j as f64 + 1.0) * j as f64 * t.powi(j as i32 - 1)).sum::<f64>();
        let vals = lagrange_values(&nodes, x);
        let ders = lagrange_derivatives(&nodes, x);
        let interp: f64 = nodes.iter().zip(&vals).map(|(&xn, &l)| p(xn) * l).sum();
        let dinterp: f64 = nodes.iter().zip(&ders).map(|(&xn, &l)| p(xn) * l).sum();
        prop_assert!((interp - p(x)).abs() < 1e-10 * p(1.0));
        prop_assert!((dinterp - dp(x)).abs() < 1e-8 * dp(1.0));
    }
}
