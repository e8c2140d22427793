//! Realizability and energy limiters.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twomoment::dg::{cell_average, project_velocity, MomentField, VelocityField};
use twomoment::limiters::{
    apply_realizability_limiter, compute_correction, count_negative_averages, count_nonrealizable_points,
    element_energies, element_number_energy, energy_limiter, LimiterConfig,
};
use twomoment::mesh::{uniform_edges, Boundary, EnergyGrid, MeshConfig, PhaseSpaceMesh};

fn small_mesh(degree: usize) -> PhaseSpaceMesh {
    PhaseSpaceMesh::new(MeshConfig {
        degree,
        energy: EnergyGrid::Elements(uniform_edges(0.0, 4.0, 4)),
        space_edges: vec![uniform_edges(0.0, 1.0, 3)],
        bc: vec![(Boundary::Outflow, Boundary::Outflow)],
    })
    .unwrap()
}

/// Nodal data with realizable cell averages but (typically) some
/// non-realizable nodes: each element is an isotropic average plus
/// oscillatory perturbations.
fn rough_field(mesh: &PhaseSpaceMesh, rng: &mut ChaCha8Rng) -> MomentField {
    let mut field = MomentField::zeros(mesh);
    for x in field.u.iter_mut() {
        let d = rng.gen_range(-0.3..2.0);
        let i = rng.gen_range(-1.5..1.5);
        *x = [d, i, rng.gen_range(-0.2..0.2), 0.0];
    }
    // Make every element average comfortably realizable.
    let npe = mesh.nodes_per_element();
    for e in 0..mesh.n_elements() {
        let avg = cell_average(mesh, &field, e).to_array();
        let g = (avg[1] * avg[1] + avg[2] * avg[2]).sqrt();
        let shift = (g / 0.8 - avg[0]).max(0.0) + 0.05;
        for x in &mut field.u[e * npe..(e + 1) * npe] {
            x[0] += shift;
        }
    }
    field
}

fn velocity(mesh: &PhaseSpaceMesh) -> VelocityField {
    project_velocity(mesh, &|x| [0.3 * (1.0 - x[0]), 0.0, 0.0]).unwrap()
}

#[test]
fn correction_is_number_neutral_and_restores_energy() {
    let (n1, e1, n2, e2) = (2.0, 3.0, 1.0, 4.0);
    let de = 0.1;
    let (t1, t2) = compute_correction(n1, e1, n2, e2, de, -0.5);
    assert!((t1 * n1 + t2 * n2).abs() < 1e-15);
    assert!((t1 * e1 + t2 * e2 + de).abs() < 1e-15);
    // Singular systems are left alone.
    assert_eq!(compute_correction(1.0, 2.0, 2.0, 4.0, 0.3, -0.5), (0.0, 0.0));
    // Large corrections are damped to θ_min.
    let (a, b) = compute_correction(1.0, 1.0, 1.0, 2.0, 10.0, -0.5);
    assert!((a.min(b) + 0.5).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn limited_field_is_realizable_and_keeps_cell_averages(seed in 0u64..u64::MAX, degree in 1usize..=2) {
        let mesh = small_mesh(degree);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = rough_field(&mesh, &mut rng);
        let before: Vec<_> = (0..mesh.n_elements()).map(|e| cell_average(&mesh, &field, e).to_array()).collect();
        let stats = apply_realizability_limiter(&mesh, &mut field, &LimiterConfig::default());
        prop_assert_eq!(stats.safeguard_elements, 0);
        prop_assert_eq!(stats.shrink_flux_elements, 0);
        prop_assert_eq!(count_nonrealizable_points(&mesh, &field), 0);
        prop_assert_eq!(count_negative_averages(&mesh, &field), 0);
        for (e, b) in before.iter().enumerate() {
            let a = cell_average(&mesh, &field, e).to_array();
            for k in 0..4 {
                prop_assert!((a[k] - b[k]).abs() <= 1e-13 * b[0].abs().max(1.0), "element {} component {}", e, k);
            }
        }
    }

    #[test]
    fn energy_limiter_restores_column_energy_at_fixed_number(seed in 0u64..u64::MAX) {
        let mesh = small_mesh(2);
        let vel = velocity(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = rough_field(&mesh, &mut rng);
        let e_hat = element_energies(&mesh, &vel, &field);
        apply_realizability_limiter(&mesh, &mut field, &LimiterConfig::default());
        let npe = mesh.nodes_per_element();
        let column_totals = |f: &MomentField| -> Vec<(f64, f64)> {
            (0..mesh.n_spatial_elements())
                .map(|s| {
                    (0..mesh.n_energy()).fold((0.0, 0.0), |acc, ie| {
                        let e = ie + mesh.n_energy() * s;
                        let (n, en) = element_number_energy(&mesh, &vel, &f.u[e * npe..(e + 1) * npe], e);
                        (acc.0 + n, acc.1 + en)
                    })
                })
                .collect()
        };
        let limited = column_totals(&field);
        let report = energy_limiter(&mesh, &vel, &mut field, &e_hat, &LimiterConfig::default());
        let after = column_totals(&field);
        for s in 0..mesh.n_spatial_elements() {
            let target: f64 = (0..mesh.n_energy()).map(|ie| e_hat[ie + mesh.n_energy() * s]).sum();
            let scale: f64 = (0..mesh.n_energy()).map(|ie| e_hat[ie + mesh.n_energy() * s].abs()).sum();
            prop_assert!((after[s].0 - limited[s].0).abs() <= 1e-13 * limited[s].0.abs());
            // Either the energy is restored or the residual is reported.
            let residual = (after[s].1 - target).abs() / scale;
            prop_assert!(residual <= report.max_relative_residual.max(1e-13) * (1.0 + 1e-6), "column {} residual {}", s, residual);
        }
        // Positive scalings keep the limited field realizable.
        prop_assert_eq!(count_nonrealizable_points(&mesh, &field), 0);
    }
}
