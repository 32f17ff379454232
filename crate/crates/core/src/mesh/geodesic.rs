//! Geodesic distance by the heat method: one backward-Euler heat step from
//! the sources, normalize the negated heat gradient, then recover distance
//! from a Poisson solve against its divergence.

use alloc::vec;
use alloc::vec::Vec;

use super::laplacian::{cot, cotangent_laplacian, lumped_mass};
use super::solve::Cholesky;
use super::sparse::SparseMatrix;
use super::TriMesh;
use crate::error::{Error, Result};
use crate::math::Vec3;

/// Prefactored heat-method operators for one mesh.
#[derive(Clone, Debug)]
pub struct HeatGeodesics {
    mesh: TriMesh,
    time_step: f64,
    heat: Cholesky,
    poisson: Cholesky,
    component: Vec<usize>,
    component_count: usize,
    pinned: Vec<bool>,
}

impl HeatGeodesics {
    /// Time step `t = h^2`, `h` the mean edge length.
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        if mesh.faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        mesh.validate_indices()?;
        let n = mesh.vertex_count();
        let h = mesh.mean_edge_length();
        let time_step = h * h;
        let lap = cotangent_laplacian(mesh);
        let mass = lumped_mass(mesh);
        let (component, component_count) = mesh.connected_components();

        // unreferenced vertices get an identity row so both systems stay definite
        let isolated: Vec<bool> = mass.iter().map(|&m| m == 0.0).collect();
        let mut heat_diag = mass.clone();
        for (d, &iso) in heat_diag.iter_mut().zip(&isolated) {
            if iso {
                *d = 1.0;
            }
        }
        let heat = SparseMatrix::diagonal_matrix(&heat_diag).add_scaled(&lap, time_step);

        let mut pinned = vec![false; n];
        let mut seen = vec![false; component_count];
        for v in 0..n {
            if !seen[component[v]] {
                seen[component[v]] = true;
                pinned[v] = true;
            }
        }
        let mut trip: Vec<(usize, usize, f64)> = lap
            .triplets()
            .into_iter()
            .filter(|&(r, c, _)| !pinned[r] && !pinned[c])
            .collect();
        trip.extend((0..n).filter(|&v| pinned[v]).map(|v| (v, v, 1.0)));
        let poisson = SparseMatrix::from_triplets(n, n, &trip)?;

        Ok(HeatGeodesics {
            mesh: mesh.clone(),
            time_step,
            heat: Cholesky::factor(&heat)?,
            poisson: Cholesky::factor(&poisson)?,
            component,
            component_count,
            pinned,
        })
    }

    pub fn time_step(&self) -> f64 {
        self.time_step
    }

    /// Distance from the source set to every vertex. Exactly zero on sources;
    /// `f64::INFINITY` on components that contain no source.
    pub fn distance(&self, sources: &[usize]) -> Result<Vec<f64>> {
        let mesh = &self.mesh;
        let n = mesh.vertex_count();
        if sources.is_empty() {
            return Err(Error::InvalidInput("geodesic source set is empty".into()));
        }
        let mut is_source = vec![false; n];
        for &s in sources {
            if s >= n {
                return Err(Error::InvalidInput(alloc::format!(
                    "source vertex {s} out of range ({n} vertices)"
                )));
            }
            is_source[s] = true;
        }
        let u0: Vec<f64> = is_source.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
        let u = self.heat.solve(&u0);
        Ok(self.integrate(&u, &is_source))
    }

    /// Distance whose gradient follows the normalized negated gradient of `u`.
    fn integrate(&self, u: &[f64], is_source: &[bool]) -> Vec<f64> {
        let mesh = &self.mesh;
        let n = mesh.vertex_count();
        let field: Vec<Vec3> = (0..mesh.face_count())
            .map(|fi| {
                let g = face_gradient(mesh, fi, u);
                let norm = g.norm();
                if norm == 0.0 || !norm.is_finite() {
                    Vec3::ZERO
                } else {
                    -g / norm
                }
            })
            .collect();
        let div = divergence(mesh, &field);
        // the positive semidefinite Laplacian is the negated Laplace-Beltrami operator
        let rhs: Vec<f64> = div
            .iter()
            .zip(&self.pinned)
            .map(|(d, &pin)| if pin { 0.0 } else { -d })
            .collect();
        let mut phi = self.poisson.solve(&rhs);

        let mut shift = vec![f64::INFINITY; self.component_count];
        for v in 0..n {
            if is_source[v] {
                let c = self.component[v];
                shift[c] = shift[c].min(phi[v]);
            }
        }
        for v in 0..n {
            let s = shift[self.component[v]];
            phi[v] = if !s.is_finite() {
                f64::INFINITY
            } else if is_source[v] {
                0.0
            } else {
                (phi[v] - s).max(0.0)
            };
        }
        phi
    }
}

/// Gradient of the piecewise-linear interpolant of `u` on one face.
pub(crate) fn face_gradient(mesh: &TriMesh, fi: usize, u: &[f64]) -> Vec3 {
    let f = mesh.faces[fi];
    let p = mesh.face_points(fi);
    let normal = (p[1] - p[0]).cross(p[2] - p[0]);
    let double_area = normal.norm();
    if double_area == 0.0 {
        return Vec3::ZERO;
    }
    let nrm = normal / double_area;
    let mut grad = Vec3::ZERO;
    for k in 0..3 {
        let opposite = p[(k + 2) % 3] - p[(k + 1) % 3];
        grad += nrm.cross(opposite) * u[f[k]];
    }
    grad / double_area
}

/// Integrated divergence of a per-face vector field at each vertex.
pub(crate) fn divergence(mesh: &TriMesh, field: &[Vec3]) -> Vec<f64> {
    let mut div = vec![0.0; mesh.vertex_count()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        let p = mesh.face_points(fi);
        let x = field[fi];
        for k in 0..3 {
            let (i, j, l) = (k, (k + 1) % 3, (k + 2) % 3);
            let e1 = p[j] - p[i];
            let e2 = p[l] - p[i];
            let cot_l = cot(p[i] - p[l], p[j] - p[l]);
            let cot_j = cot(p[i] - p[j], p[l] - p[j]);
            div[f[i]] += 0.5 * (cot_l * e1.dot(x) + cot_j * e2.dot(x));
        }
    }
    div
}

/// One-shot heat-method geodesic distance from `sources`.
pub fn geodesic_distance(mesh: &TriMesh, sources: &[usize]) -> Result<Vec<f64>> {
    HeatGeodesics::new(mesh)?.distance(sources)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use alloc::collections::BinaryHeap;
    use core::cmp::Reverse;

    /// Shortest paths along mesh edges: an upper bound on true geodesics.
    fn dijkstra(mesh: &TriMesh, source: usize) -> Vec<f64> {
        let adj = mesh.vertex_adjacency();
        let mut dist = vec![f64::INFINITY; mesh.vertex_count()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Reverse((0u64, source)));
        while let Some(Reverse((dbits, v))) = heap.pop() {
            let d = f64::from_bits(dbits);
            if d > dist[v] {
                continue;
            }
            for &w in &adj[v] {
                let nd = d + mesh.vertices[v].distance(mesh.vertices[w]);
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(Reverse((nd.to_bits(), w)));
                }
            }
        }
        dist
    }

    #[test]
    fn all_sources_give_zero() {
        let s = primitives::icosphere(1, 1.0);
        let all: Vec<usize> = (0..s.vertex_count()).collect();
        assert!(geodesic_distance(&s, &all).unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn pole_to_antipode_is_pi() {
        let s = primitives::icosphere(4, 1.0);
        let d = geodesic_distance(&s, &[0]).unwrap();
        // vertex 3 is the antipode of vertex 0 on the base icosahedron
        assert!((s.vertices[0] + s.vertices[3]).norm() < 1e-12);
        let rel = (d[3] - core::f64::consts::PI).abs() / core::f64::consts::PI;
        assert!(rel < 0.05, "antipode distance {} (rel err {rel})", d[3]);
        assert_eq!(d[0], 0.0);
        assert!(d.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn bounded_by_edge_graph_distance() {
        let fixtures = [primitives::icosphere(3, 1.0), primitives::grid(12, 8, 1.2, 0.8)];
        for m in &fixtures {
            let (lo, hi) = m.bounding_box().unwrap();
            let diameter = lo.distance(hi);
            for src in [0, m.vertex_count() / 2] {
                let heat = geodesic_distance(m, &[src]).unwrap();
                let graph = dijkstra(m, src);
                for (h, g) in heat.iter().zip(&graph) {
                    assert!(*h <= g + 0.1 * diameter, "{h} vs {g}");
                }
            }
        }
    }

    #[test]
    fn near_symmetric_and_triangle_inequality_on_sphere() {
        let s = primitives::icosphere(3, 1.0);
        let solver = HeatGeodesics::new(&s).unwrap();
        let picks = [0usize, 17, 101, 400, 600];
        let rows: Vec<Vec<f64>> = picks.iter().map(|&p| solver.distance(&[p]).unwrap()).collect();
        for (i, &a) in picks.iter().enumerate() {
            for (j, &b) in picks.iter().enumerate() {
                let (ab, ba) = (rows[i][b], rows[j][a]);
                assert!((ab - ba).abs() <= 0.02 * ab.max(ba) + 1e-12, "{ab} vs {ba}");
                for (k, &c) in picks.iter().enumerate() {
                    let _ = k;
                    assert!(rows[i][c] <= (rows[i][b] + rows[j][c]) * 1.02 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn component_without_source_is_infinite() {
        let a = primitives::icosphere(1, 1.0);
        let mut b = primitives::icosphere(1, 1.0);
        for v in b.vertices.iter_mut() {
            *v += Vec3::new(5.0, 0.0, 0.0);
        }
        let both = TriMesh::stack(&[&a, &b]);
        let d = geodesic_distance(&both, &[0]).unwrap();
        assert!(d[..a.vertex_count()].iter().all(|x| x.is_finite()));
        assert!(d[a.vertex_count()..].iter().all(|x| x.is_infinite()));
    }
}
