use alloc::vec;
use alloc::vec::Vec;

use super::sparse::SparseMatrix;
use super::TriMesh;

/// Uniform graph Laplacian `L = D - A` of the edge graph.
pub fn graph_laplacian(mesh: &TriMesh) -> SparseMatrix {
    let n = mesh.vertex_count();
    let edges = mesh.edges();
    let mut t = Vec::with_capacity(n + 2 * edges.len());
    let mut degree = vec![0.0; n];
    for &(a, b) in &edges {
        t.push((a, b, -1.0));
        t.push((b, a, -1.0));
        degree[a] += 1.0;
        degree[b] += 1.0;
    }
    t.extend(degree.iter().enumerate().map(|(i, &d)| (i, i, d)));
    SparseMatrix::from_triplets(n, n, &t).expect("edge indices in range")
}

/// Cotangent of the angle between `u` and `v`.
#[inline]
pub(crate) fn cot(u: crate::Vec3, v: crate::Vec3) -> f64 {
    let cross = u.cross(v).norm();
    if cross <= 1e-300 {
        0.0
    } else {
        u.dot(v) / cross
    }
}

/// Positive semidefinite cotangent Laplacian:
/// `L_ij = -(cot a_ij + cot b_ij) / 2`, `L_ii = -sum_j L_ij`.
pub fn cotangent_laplacian(mesh: &TriMesh) -> SparseMatrix {
    let n = mesh.vertex_count();
    let mut t = Vec::with_capacity(12 * mesh.face_count());
    for f in &mesh.faces {
        for k in 0..3 {
            let (i, j, o) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            let po = mesh.vertices[o];
            let w = 0.5 * cot(mesh.vertices[i] - po, mesh.vertices[j] - po);
            t.push((i, j, -w));
            t.push((j, i, -w));
            t.push((i, i, w));
            t.push((j, j, w));
        }
    }
    SparseMatrix::from_triplets(n, n, &t).expect("face indices in range")
}

/// Lumped (barycentric) vertex areas: one third of each incident face.
pub fn lumped_mass(mesh: &TriMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.vertex_count()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let a = mesh.face_area(fi) / 3.0;
        for &v in f {
            m[v] += a;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use crate::Vec3;

    #[test]
    fn single_triangle_graph_laplacian() {
        let m = TriMesh::new(vec![Vec3::ZERO, Vec3::X, Vec3::Y], vec![[0, 1, 2]]).unwrap();
        let l = graph_laplacian(&m).to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l[i][j], if i == j { 2.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn icosahedron_degree_five() {
        let l = graph_laplacian(&primitives::icosphere(0, 1.0));
        assert!(l.diagonal().iter().all(|&d| d == 5.0));
    }

    #[test]
    fn rows_sum_to_zero_and_symmetric() {
        let m = primitives::icosphere(2, 1.0);
        for l in [graph_laplacian(&m), cotangent_laplacian(&m)] {
            assert!(l.is_symmetric(0.0));
            let ones = vec![1.0; m.vertex_count()];
            for s in l.mul_vec(&ones) {
                assert!(s.abs() < 1e-12);
            }
        }
        let g = graph_laplacian(&m);
        for s in g.mul_vec(&vec![1.0; m.vertex_count()]) {
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn cotangent_laplacian_reproduces_linear_functions_on_flat_interior() {
        let g = primitives::grid(6, 6, 1.0, 1.0);
        let l = cotangent_laplacian(&g);
        let f: Vec<f64> = g.vertices.iter().map(|p| 2.0 * p.x - 3.0 * p.y).collect();
        let lf = l.mul_vec(&f);
        let boundary: alloc::collections::BTreeSet<usize> = g.boundary_loops().into_iter().flatten().collect();
        for (i, v) in lf.iter().enumerate() {
            if !boundary.contains(&i) {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_sums_to_area() {
        let s = primitives::icosphere(3, 1.0);
        let total: f64 = lumped_mass(&s).iter().sum();
        let area: f64 = (0..s.face_count()).map(|f| s.face_area(f)).sum();
        assert!((total - area).abs() < 1e-12);
    }
}
