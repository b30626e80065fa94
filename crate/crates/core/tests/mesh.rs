use mfg_core::mesh::{generate_uniform_unit_square, Mesh};

fn sorted_vertices(m: &Mesh) -> Vec<[u64; 2]> {
    let mut v: Vec<_> = m.vertices().iter().map(|p| [p[0].to_bits(), p[1].to_bits()]).collect();
    v.sort_unstable();
    v
}

#[test]
fn refinement_chain_reproduces_the_uniform_family() {
    let mut mesh = generate_uniform_unit_square(1).unwrap();
    let delta = mesh.audit().shape_regularity_delta;
    for level in 1..=5 {
        let finer = mesh.refine_uniform();
        assert_eq!(finer.n_triangles(), 4 * mesh.n_triangles());
        assert_eq!(finer.max_h(), mesh.max_h() / 2.0);
        let audit = finer.audit();
        assert!(audit.xz_pass);
        assert!((audit.shape_regularity_delta - delta).abs() < 1e-9);
        let direct = generate_uniform_unit_square(1 << level).unwrap();
        assert_eq!(sorted_vertices(&finer), sorted_vertices(&direct));
        assert_eq!(finer.n_interior_vertices(), direct.n_interior_vertices());
        mesh = finer;
    }
}

#[test]
fn uniform_family_edge_classification() {
    for n in [2usize, 3, 8] {
        let mesh = generate_uniform_unit_square(n).unwrap();
        let boundary = mesh.edges().iter().filter(|e| e.on_boundary()).count();
        assert_eq!(boundary, 4 * n);
        // the diagonals of the lower-right and upper-left corner squares join two
        // boundary vertices; every other non-boundary edge touches an interior vertex
        let bridging = mesh.edges().iter().filter(|e| !e.on_boundary() && !e.internal).count();
        assert_eq!(bridging, 2);
        for e in mesh.edges() {
            assert!((e.tangent[0].hypot(e.tangent[1]) - 1.0).abs() < 1e-15);
        }
        assert_eq!(mesh.edges().len(), 3 * n * n + 2 * n);
    }
}

#[test]
fn sheared_grid_fails_the_audit() {
    // shear the interior vertex of the 2x2 grid far enough to create obtuse pairs
    let mesh = generate_uniform_unit_square(2).unwrap();
    let mut v = mesh.vertices().to_vec();
    v[4] = [0.9, 0.85];
    let bent = Mesh::new(v, mesh.triangles().to_vec(), None).unwrap();
    let audit = bent.audit();
    assert!(!audit.xz_pass);
    assert!(audit.worst_edge_cot_sum < 0.0);
}
