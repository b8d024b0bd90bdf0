use std::collections::HashSet;

use bsch::mesh::{generate_unit_square, load_mesh, mesh_to_string, parse_mesh, save_mesh, Mesh, MeshError};

#[test]
fn unit_square_counts_and_area() {
    let m: Mesh<f64> = generate_unit_square(2).unwrap();
    assert_eq!((m.n_bulk(), m.triangles.len(), m.n_surface()), (9, 8, 8));
    assert_eq!(m.perimeter(), 4.0);
    let area: f64 = (0..m.triangles.len()).map(|t| m.triangle_area(t)).sum();
    assert!((area - 1.0).abs() < 1e-15);
}

#[test]
fn arc_length_matches_summed_edges() {
    let m: Mesh<f64> = generate_unit_square(4).unwrap();
    assert_eq!(m.n_surface(), 16);
    // Independent oracle: walk the loop and sum Euclidean edge lengths.
    let total: f64 = (0..16)
        .map(|i| {
            let a = m.bulk_nodes[m.surface_nodes[i]];
            let b = m.bulk_nodes[m.surface_nodes[(i + 1) % 16]];
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        })
        .sum();
    assert!((total - 4.0).abs() < 1e-14);
    assert!((m.arc_lengths.last().unwrap() - 4.0).abs() < 1e-14);
    assert!(m.arc_lengths.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn invariants_on_several_resolutions() {
    for n in [2, 3, 5, 8] {
        let m: Mesh<f64> = generate_unit_square(n).unwrap();
        assert_eq!(m.n_bulk(), (n + 1) * (n + 1));
        assert_eq!(m.triangles.len(), 2 * n * n);
        assert_eq!(m.n_surface(), 4 * n);
        assert!((m.area() - m.shoelace_area()).abs() <= 1e-12 * m.area());
        let image: HashSet<usize> = m.surface_nodes.iter().copied().collect();
        assert_eq!(image.len(), m.n_surface());
        let boundary: HashSet<usize> = (0..m.n_bulk()).filter(|&b| m.is_boundary_node(b)).collect();
        assert_eq!(image, boundary);
        // Each boundary edge lies in exactly one triangle.
        for e in 0..m.n_surface() {
            let [a, b] = m.surface_edge(e).map(|s| m.trace_map(s));
            let owners = m.triangles.iter().filter(|t| t.contains(&a) && t.contains(&b)).count();
            assert_eq!(owners, 1);
        }
    }
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sq.bsmesh");
    let m: Mesh<f64> = generate_unit_square(2).unwrap();
    save_mesh(&m, &path).unwrap();
    let back: Mesh<f64> = load_mesh(&path).unwrap();
    assert_eq!(back, m);
}

#[test]
fn saved_file_line_counts() {
    let text = mesh_to_string(&generate_unit_square::<f64>(3).unwrap());
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines[0], "bsmesh 1");
    assert_eq!(lines[1], "16 18");
    assert_eq!(lines.len(), 2 + 16 + 18);
}

#[test]
fn empty_path_is_io_error() {
    let m: Mesh<f64> = generate_unit_square(2).unwrap();
    assert!(matches!(save_mesh(&m, std::path::Path::new("")), Err(MeshError::Io(_))));
}

#[test]
fn clockwise_triangle_in_file_is_rejected() {
    let text = "bsmesh 1\n3 1\n0 0\n1 0\n0 1\n0 2 1\n";
    assert!(matches!(parse_mesh::<f64>(text), Err(MeshError::InvertedTriangle(0))));
}

#[test]
fn square_with_hole_is_rejected() {
    // 4x4 grid of nodes, all 9 cells except the center one.
    let mut nodes = Vec::new();
    for j in 0..4 {
        for i in 0..4 {
            nodes.push([i as f64, j as f64]);
        }
    }
    let mut tris = Vec::new();
    for j in 0..3 {
        for i in 0..3 {
            if (i, j) == (1, 1) {
                continue;
            }
            let a = 4 * j + i;
            tris.push([a, a + 1, a + 5]);
            tris.push([a, a + 5, a + 4]);
        }
    }
    let err = Mesh::new(nodes, tris).unwrap_err();
    assert!(matches!(err, MeshError::MultipleLoops(2) | MeshError::NonManifoldBoundary(_)), "{err}");
}

#[test]
fn comments_are_skipped() {
    let text = "bsmesh 1\n# a comment\n3 1\n0 0\n1 0\n# another\n0 1\n0 1 2\n";
    let m: Mesh<f64> = parse_mesh(text).unwrap();
    assert_eq!(m.n_surface(), 3);
}
