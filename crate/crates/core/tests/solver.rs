mod common;

use mfg_core::analysis::{discrete_norm_vk, level_grid, max_l2_in_time};
use mfg_core::assembly::default_weights;
use mfg_core::mesh::generate_uniform_unit_square;
use mfg_core::problem::manufactured;
use mfg_core::solver::{MfgSolution, MfgSolver, SolverOptions};
use mfg_core::timestepping::{Continuity, SpaceTimeField};
use mfg_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn relative_gap(a: &SpaceTimeField, b: &SpaceTimeField, op: &mfg_core::sparse::CsrMatrix) -> f64 {
    let d = a.difference(b);
    let num: f64 = d.slabs().iter().map(|s| op.bilinear(s, s)).sum();
    let den: f64 = a.slabs().iter().map(|s| op.bilinear(s, s)).sum();
    (num / den).sqrt()
}

fn with_solver<R>(level: u32, opts: SolverOptions, f: impl FnOnce(&MfgSolver<'_, '_>) -> R) -> R {
    let (n, grid) = level_grid(level).unwrap();
    let mesh = generate_uniform_unit_square(n).unwrap();
    let (problem, _) = manufactured();
    let w = default_weights(&mesh, 1.0, 1.0).unwrap();
    let solver = MfgSolver::new(&problem, &mesh, grid, &w, opts).unwrap();
    f(&solver)
}

#[test]
fn manufactured_level_two_passes_the_audit() {
    with_solver(2, SolverOptions::default(), |s| {
        let sol = s.run(None).unwrap();
        assert!(sol.converged && sol.outer_iterations < 100);
        assert!(*sol.residual_history.last().unwrap() <= 1e-9);
        let audit = s.residual_audit(&sol);
        assert!(audit.hjb <= 1e-8 && audit.kfp <= 1e-8, "{audit:?}");
        assert_eq!(audit.terminal, 0.0);
        assert!(audit.min_density >= -1e-12);
        assert!(audit.certificate_slack >= -1e-10);
        assert!(sol.b.max_norm() <= 1.0 + 1e-14);
        let disc = s.discretization();
        assert!(max_l2_in_time(&sol.m, disc) <= discrete_norm_vk(&sol.m, disc, s.grid()).unwrap());
    });
}

#[test]
fn tampering_is_detected() {
    with_solver(2, SolverOptions::default(), |s| {
        let mut sol: MfgSolution = s.run(None).unwrap();
        let mut slabs = sol.m.slabs().to_vec();
        slabs[2][4] += 1e-3;
        sol.m = SpaceTimeField::new(slabs, sol.m.endpoint().to_vec(), Continuity::Forward).unwrap();
        assert!(s.residual_audit(&sol).kfp > 1e-4);
    });
}

#[test]
fn picard_contracts_at_level_three() {
    with_solver(3, SolverOptions::default(), |s| {
        let sol = s.run(None).unwrap();
        let gamma = s.grid().contraction_constant(1.0, 1.0);
        assert!((gamma - ((1.0 + 1.0 / 9.0) / 2.0f64).sqrt()).abs() < 1e-15);
        assert!(sol.picard.iter().any(|p| !p.ratios.is_empty()));
        assert!(sol.max_picard_ratio() <= gamma + 0.05, "{} > {gamma}", sol.max_picard_ratio());
    });
}

#[test]
fn start_drift_does_not_change_the_solution() {
    with_solver(3, SolverOptions::default(), |s| {
        let a = s.run(None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let b0 = common::transport(&mut rng, s.grid().n_steps(), s.discretization().fes.mesh().n_triangles());
        let b = s.run(Some(&b0)).unwrap();
        let disc = s.discretization();
        assert!(relative_gap(&a.u, &b.u, &disc.laplacian) <= 1e-6);
        assert!(relative_gap(&a.m, &b.m, &disc.mass) <= 1e-6);
    });
}

#[test]
fn relaxation_reaches_the_same_fixed_point() {
    let plain = with_solver(2, SolverOptions::default(), |s| s.run(None).unwrap());
    let damped = with_solver(2, SolverOptions { relaxation: 0.6, ..SolverOptions::default() }, |s| {
        let sol = s.run(None).unwrap();
        let disc = s.discretization();
        assert!(relative_gap(&plain.u, &sol.u, &disc.laplacian) <= 1e-6);
        assert!(relative_gap(&plain.m, &sol.m, &disc.mass) <= 1e-6);
        sol
    });
    assert!(damped.outer_iterations >= plain.outer_iterations);
}

#[test]
fn converged_drift_is_a_selection_against_perturbed_values() {
    with_solver(2, SolverOptions::default(), |s| {
        let sol = s.run(None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let noise = common::field(&mut rng, sol.u.n_steps(), sol.u.n_dofs(), Continuity::Backward);
            let other = SpaceTimeField::new(
                sol.u.slabs().iter().zip(noise.slabs()).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + 0.1 * y).collect()).collect(),
                sol.u.endpoint().to_vec(),
                Continuity::Backward,
            )
            .unwrap();
            assert!(s.cross_lambda(&sol, &other) <= 1e-12);
        }
    });
}

#[test]
fn runs_are_deterministic() {
    let a = with_solver(2, SolverOptions::default(), |s| s.run(None).unwrap());
    let b = with_solver(2, SolverOptions::default(), |s| s.run(None).unwrap());
    assert_eq!(a, b);
}

#[test]
fn nonconvergence_carries_the_history() {
    let r = with_solver(2, SolverOptions { max_outer: 2, ..SolverOptions::default() }, |s| s.run(None));
    match r {
        Err(Error::NonConvergence { residual_history }) => {
            assert_eq!(residual_history.len(), 2);
            assert_eq!(residual_history[0], 1.0);
        }
        other => panic!("unexpected {other:?}"),
    }
    let sol = with_solver(2, SolverOptions { max_outer: 2, accept_unconverged: true, ..SolverOptions::default() }, |s| {
        s.run(None).unwrap()
    });
    assert!(!sol.converged);
}
