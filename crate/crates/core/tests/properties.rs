use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robin_fem::assembly::{assemble_jacobian, assemble_residual_with};
use robin_fem::diagnostics::{absorption_estimate_check, boundary_l1_balance, entropy_residual_max, truncation_energy_check, default_k_grid};
use robin_fem::functions::{DataField, EvalPoint, HSpec, SigmaSpec};
use robin_fem::mesh::{generate_unit_disk, generate_unit_square, DiscreteField, Mesh2D};
use robin_fem::problem::{regularize, FluxSpec, ProblemSpec, Regularization, DEFAULT_BOUNDARY_ORDER};
use robin_fem::solver::{geometric_schedule, ladder_decrease, solve_barrier, solve_ladder, SolverConfig};
use robin_fem::{instances, Exec};

fn edge_count(mesh: &Mesh2D) -> usize {
    let mut edges = HashSet::new();
    for t in mesh.triangles() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            edges.insert((a.min(b), a.max(b)));
        }
    }
    edges.len()
}

fn mesh_invariants(mesh: &Mesh2D) -> std::result::Result<(), TestCaseError> {
    let (v, e, f) = (mesh.num_vertices() as i64, edge_count(mesh) as i64, mesh.num_triangles() as i64);
    prop_assert_eq!(v - e + f, 1);
    for edge in mesh.boundary_edges() {
        let [a, b] = edge.vertices.map(|i| mesh.vertices()[i]);
        let tangent = [b[0] - a[0], b[1] - a[1]];
        let dot = edge.normal[0] * tangent[0] + edge.normal[1] * tangent[1];
        prop_assert!(dot.abs() <= 1e-12 * edge.length.max(1.0));
    }
    Ok(())
}

fn general(mesh: std::sync::Arc<Mesh2D>, p: f64, f: f64, lambda: f64, g: f64, eta: f64) -> ProblemSpec {
    ProblemSpec {
        mesh,
        flux: FluxSpec::p_laplacian(p).unwrap(),
        f: DataField::Constant(f),
        lambda: DataField::Constant(lambda),
        g: DataField::Constant(g),
        sigma: SigmaSpec::power(p - 1.0, 1.0).unwrap(),
        h: HSpec::power_singular(1.0, eta).unwrap(),
        dimension: 3,
        regularization: Regularization::General,
        boundary_order: DEFAULT_BOUNDARY_ORDER,
        sign_changing: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sigma_power_family_dominates_growth(p in 1.05..2.0f64, scale in 1.0..5.0f64) {
        let sigma = SigmaSpec::power(p - 1.0, scale).unwrap();
        prop_assert!(sigma.lower_bound_violations(p).is_empty());
        prop_assert!(sigma.monotonicity_violations().is_empty());
    }

    #[test]
    fn square_meshes_are_consistent(m in 1usize..40, levels in 0usize..3) {
        let mut mesh = generate_unit_square(m).unwrap();
        for _ in 0..levels {
            let next = mesh.refine_uniform().unwrap();
            prop_assert!((next.total_area() - mesh.total_area()).abs() <= 1e-12);
            mesh = next;
        }
        mesh_invariants(&mesh)?;
        prop_assert!((mesh.total_area() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn disk_meshes_are_consistent(m in 4usize..64, levels in 0usize..2) {
        let mut mesh = generate_unit_disk(m).unwrap();
        for _ in 0..levels {
            mesh = mesh.refine_uniform().unwrap();
        }
        mesh_invariants(&mesh)?;
        prop_assert!(mesh.delaunay_excess() <= 1e-9);
    }

    #[test]
    fn regularization_is_monotone_in_the_level(n in 1u64..400, x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let spec = instances::singular_demo(generate_unit_square(2).unwrap().into_shared(), 1.0).unwrap();
        let (a, b) = (regularize(&spec, n).unwrap(), regularize(&spec, n + 1).unwrap());
        let inner = EvalPoint::interior(x, y);
        let edge = EvalPoint::boundary(x, 0.0, [0.0, -1.0]);
        prop_assert!(a.f_n(&inner) <= b.f_n(&inner));
        prop_assert!(a.lambda_n(&edge) <= b.lambda_n(&edge));
        prop_assert!(a.g_n(&edge) <= b.g_n(&edge));
    }

    #[test]
    fn residual_sum_is_the_discrete_mass_balance(seed in any::<u64>(), p in 1.5..3.0f64) {
        let mesh = generate_unit_disk(12).unwrap().into_shared();
        let spec = general(mesh.clone(), p, 1.3, 0.7, 2.0, 1.0);
        let rp = regularize(&spec, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.random_range(0.1..3.0)).collect();
        let r = assemble_residual_with(&rp, &u, Exec::Sequential).unwrap();
        let field = DiscreteField::new(mesh, u).unwrap();
        let balance = boundary_l1_balance(&field, &rp).unwrap();
        let total: f64 = r.iter().sum();
        prop_assert!((total - balance.defect).abs() <= 1e-12 * (balance.absorption + balance.load + balance.source));
    }

    #[test]
    fn linear_tangent_is_positive_definite(seed in any::<u64>(), lambda in 0.1..5.0f64) {
        let mesh = generate_unit_square(6).unwrap().into_shared();
        let mut spec = general(mesh.clone(), 2.0, 1.0, lambda, 1.0, 0.0);
        spec.h = HSpec::bounded(1.0).unwrap();
        let rp = regularize(&spec, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = DiscreteField::new(mesh.clone(), (0..mesh.num_vertices()).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap();
        let j = assemble_jacobian(&rp, &u).unwrap();
        prop_assert!(j.asymmetry() <= 1e-14);
        let x: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jx = j.apply(&x);
        prop_assert!(x.iter().zip(&jx).map(|(a, b)| a * b).sum::<f64>() > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn ladder_invariants_on_constant_data(f in 0.1..2.0f64, lambda in 0.2..=1.0f64, g in 0.1..2.0f64, eta in 0.0..2.0f64, m in 3usize..8) {
        let mesh = generate_unit_square(m).unwrap().into_shared();
        let spec = ProblemSpec::model(mesh, DataField::Constant(f), DataField::Constant(lambda), DataField::Constant(g), eta).unwrap();
        let config = SolverConfig { schedule: geometric_schedule(256), ..SolverConfig::default() };
        let (_, reports) = solve_ladder(&spec, &config).unwrap();
        let (_, c_bar) = solve_barrier(&spec, &config).unwrap();
        prop_assert!(ladder_decrease(&reports) <= 1e-8);
        for r in &reports {
            prop_assert!(r.min_node >= -1e-8);
            prop_assert!(r.min_boundary >= c_bar - 1e-8);
            prop_assert!(r.mass_balance_defect <= 1e3 * config.tol_res * (1.0 + spec.data_scale(r.level)));
        }
    }

    #[test]
    fn absorption_estimate_at_small_threshold_is_the_balance(f in 0.1..2.0f64, g in 0.1..2.0f64, eta in 0.0..2.0f64) {
        let mesh = generate_unit_square(5).unwrap().into_shared();
        let spec = general(mesh, 1.6, f, 1.0, g, eta);
        let config = SolverConfig { schedule: vec![1, 4, 16], ..SolverConfig::default() };
        let (u, _) = solve_ladder(&spec, &config).unwrap();
        let rp = regularize(&spec, 16).unwrap();
        let t = 0.5 * u.min();
        prop_assume!(t > 0.0);
        let check = absorption_estimate_check(&u, &rp, &[t], 1e-8).unwrap();
        let balance = boundary_l1_balance(&u, &rp).unwrap();
        let row = &check.rows[0];
        prop_assert!((row.measured - balance.absorption).abs() <= 1e-12 * balance.absorption.abs());
        prop_assert!((row.bound - balance.load - balance.source).abs() <= 1e-12 * row.bound.abs());
    }
}

#[test]
fn truncated_absorption_can_lower_the_first_levels() {
    // λ ≡ 1.5 is cut to 1 at n = 1, so level 1 absorbs less than level 2
    let spec = ProblemSpec::model(
        generate_unit_square(3).unwrap().into_shared(),
        DataField::Constant(0.1),
        DataField::Constant(1.5),
        DataField::Constant(0.1),
        0.0,
    )
    .unwrap();
    let config = SolverConfig { schedule: vec![1, 2, 4], ..SolverConfig::default() };
    let (_, reports) = solve_ladder(&spec, &config).unwrap();
    assert!(ladder_decrease(&reports[..2]) > 1e-3);
    assert!(ladder_decrease(&reports[1..]) <= 1e-12);
}

#[test]
fn diagnostics_are_deterministic() {
    let spec = instances::singular_demo(generate_unit_square(8).unwrap().into_shared(), 1.0).unwrap();
    let config = SolverConfig { schedule: geometric_schedule(32), ..SolverConfig::default() };
    let (u, _) = solve_ladder(&spec, &config).unwrap();
    let (first, _) = truncation_energy_check(&u, &spec, &default_k_grid()).unwrap();
    let (second, _) = truncation_energy_check(&u, &spec, &default_k_grid()).unwrap();
    assert_eq!(first.energies, second.energies);
    assert_eq!(first.constant.to_bits(), second.constant.to_bits());
    let ks = [0.5, 1.0];
    assert_eq!(entropy_residual_max(&u, &spec, &ks).unwrap().to_bits(), entropy_residual_max(&u, &spec, &ks).unwrap().to_bits());
}

#[test]
fn sequential_and_parallel_ladders_agree_bitwise() {
    let spec = instances::singular_demo(generate_unit_square(8).unwrap().into_shared(), 1.0).unwrap();
    let run = |exec| {
        let config = SolverConfig { schedule: geometric_schedule(64), exec, ..SolverConfig::default() };
        solve_ladder(&spec, &config).unwrap().0
    };
    let a = run(Exec::Sequential);
    let b = run(Exec::default());
    assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
}
