mod common;

use mfg_core::assembly::{
    assemble_convection, assemble_diffusion, default_weights, l2_norm, lumped_inner, lumped_norm, lumped_riesz,
    FeSpace, StabilizationTensor,
};
use mfg_core::linsolve::solve_general;
use mfg_core::mesh::{generate_uniform_unit_square, Mesh};
use mfg_core::timestepping::{kfp_step_matrix, TimeGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn stabilisation_off_diagonals_match_closed_form_on_every_level() {
    for level in 1..=5 {
        let mesh = generate_uniform_unit_square(1 << level).unwrap();
        let fes = FeSpace::new(&mesh, 1).unwrap();
        let w = default_weights(&mesh, 1.0, 1.0).unwrap();
        let d = assemble_diffusion(&fes, &StabilizationTensor::build(&mesh, &w), 0.0);
        let mut checked = 0;
        for (e, edge) in mesh.edges().iter().enumerate() {
            let [a, b] = edge.vertices;
            let (Some(i), Some(j)) = (fes.dof(a), fes.dof(b)) else { continue };
            let support: f64 = edge.triangles().iter().map(|&t| mesh.area(t)).sum();
            let expected = -w.0[e] / (edge.length * edge.length) * support;
            assert!((d.get(i, j) - expected).abs() <= 1e-12, "level {level} edge {e}");
            assert!((d.get(j, i) - expected).abs() <= 1e-12);
            checked += 1;
        }
        let m = (1usize << level) - 1;
        // horizontal, vertical and diagonal edges between interior vertices
        assert_eq!(checked, 2 * m * (m - 1) + (m - 1) * (m - 1));
    }
}

#[test]
fn kfp_matrix_off_diagonals_are_negative_for_bounded_drift() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for n in [2, 4, 8] {
        let mesh = generate_uniform_unit_square(n).unwrap();
        let disc = common::disc(&mesh);
        for _ in 0..10 {
            let b: Vec<_> = (0..mesh.n_triangles()).map(|_| common::drift(&mut rng)).collect();
            // stabilisation plus convection alone, without the Laplacian
            let mut a = assemble_diffusion(&disc.fes, &disc.stab, 0.0);
            a.add_scaled(1.0, &assemble_convection(&disc.fes, &b));
            for (i, j, v) in a.triplets() {
                if i != j {
                    assert!(v < 0.0, "entry ({i},{j}) = {v}");
                }
            }
            let grid = TimeGrid::new(1.0, 3).unwrap();
            for (i, j, v) in kfp_step_matrix(&disc, &grid, &b).triplets() {
                if i != j {
                    assert!(v < 0.0);
                }
            }
        }
    }
}

#[test]
fn kfp_step_inverse_is_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mesh = generate_uniform_unit_square(8).unwrap();
    let disc = common::disc(&mesh);
    let grid = TimeGrid::new(1.0, 9).unwrap();
    let b: Vec<_> = (0..mesh.n_triangles()).map(|_| common::drift(&mut rng)).collect();
    let a = kfp_step_matrix(&disc, &grid, &b);
    for _ in 0..50 {
        let rhs = common::nonnegative(&mut rng, disc.n_dofs());
        let (x, _) = solve_general(&a, &rhs, 1e-12).unwrap();
        let min = x.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-12, "{min}");
    }
}

#[test]
fn riesz_map_of_linear_function_matches_closed_form() {
    // for affine w, int_K xi_i w = |K| (w_i + w_1 + w_2 + w_3) / 12
    let mesh = generate_uniform_unit_square(6).unwrap();
    let fes = FeSpace::new(&mesh, 6).unwrap();
    let w = |x: [f64; 2]| 0.3 + 2.0 * x[0] - 1.5 * x[1];
    let r = lumped_riesz(&fes, w);
    let mut num = vec![0.0; fes.n_dofs()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let vals = tri.map(|v| w(mesh.vertices()[v]));
        let sum: f64 = vals.iter().sum();
        for (local, &v) in tri.iter().enumerate() {
            if let Some(d) = fes.dof(v) {
                num[d] += mesh.area(t) * (vals[local] + sum) / 12.0;
            }
        }
    }
    for d in 0..fes.n_dofs() {
        assert!((r[d] - num[d] / fes.lumped_mass()[d]).abs() < 1e-13);
    }
}

#[test]
fn assembly_does_not_depend_on_element_order() {
    let mesh = generate_uniform_unit_square(5).unwrap();
    let mut tris = mesh.triangles().to_vec();
    tris.reverse();
    tris.rotate_left(7);
    let shuffled = Mesh::new(mesh.vertices().to_vec(), tris, None).unwrap();
    let (a, b) = (common::disc(&mesh), common::disc(&shuffled));
    for (i, j, v) in a.stiffness.triplets() {
        assert!((b.stiffness.get(i, j) - v).abs() <= 1e-14);
    }
    for (i, j, v) in a.mass.triplets() {
        assert!((b.mass.get(i, j) - v).abs() <= 1e-14);
    }
}

#[test]
fn stabilisation_scales_with_h() {
    let mut ratios = Vec::new();
    for level in 1..=5 {
        let mesh = generate_uniform_unit_square(1 << level).unwrap();
        let w = default_weights(&mesh, 1.0, 1.0).unwrap();
        let stab = StabilizationTensor::build(&mesh, &w);
        let worst = stab
            .tensors
            .iter()
            .map(|d| {
                // largest eigenvalue of a symmetric 2x2 matrix
                let tr = d[0][0] + d[1][1];
                let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
                tr / 2.0 + (tr * tr / 4.0 - det).max(0.0).sqrt()
            })
            .fold(0.0, f64::max);
        ratios.push(worst / mesh.max_h());
    }
    // level 1 has elements with a boundary-only edge, which carries no weight
    let full = ratios[4];
    assert!(ratios[0] <= full);
    for r in &ratios[1..] {
        assert!((r - full).abs() < 1e-12, "{ratios:?}");
    }
}

#[test]
fn lumped_norm_equivalence_constant_is_level_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for level in 1..=5 {
        let mesh = generate_uniform_unit_square(1 << level).unwrap();
        let fes = FeSpace::new(&mesh, 1).unwrap();
        for _ in 0..20 {
            let v = common::vector(&mut rng, fes.n_dofs());
            worst = worst.max(lumped_norm(&fes, &v) / l2_norm(&fes, &v));
        }
    }
    // for P1 on triangles the sharp constant is 2
    assert!(worst <= 2.0, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lumped_norm_dominates_l2(seed in any::<u64>(), n in 2usize..9) {
        let mesh = generate_uniform_unit_square(n).unwrap();
        let fes = FeSpace::new(&mesh, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..fes.n_dofs()).map(|_| rng.gen_range(-10.0..10.0)).collect();
        prop_assert!(l2_norm(&fes, &v) <= lumped_norm(&fes, &v) * (1.0 + 1e-14));
    }

    #[test]
    fn lumped_inner_is_symmetric_and_bilinear(seed in any::<u64>()) {
        let mesh = generate_uniform_unit_square(4).unwrap();
        let fes = FeSpace::new(&mesh, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = (common::vector(&mut rng, 9), common::vector(&mut rng, 9));
        let s = rng.gen_range(-3.0..3.0);
        let su: Vec<f64> = u.iter().map(|x| s * x).collect();
        prop_assert!((lumped_inner(&fes, &u, &v) - lumped_inner(&fes, &v, &u)).abs() < 1e-14);
        prop_assert!((lumped_inner(&fes, &su, &v) - s * lumped_inner(&fes, &u, &v)).abs() < 1e-13);
    }
}
