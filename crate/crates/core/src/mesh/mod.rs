//! Indexed triangle meshes and the geometry substrate built on them.

pub mod bvh;
pub mod geodesic;
pub mod laplacian;
pub mod primitives;
pub mod solve;
pub mod sparse;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{acos, Vec3};

pub use bvh::{ClosestPoint, SurfaceBvh};
pub use geodesic::{geodesic_distance, HeatGeodesics};
pub use laplacian::{cotangent_laplacian, graph_laplacian, lumped_mass};
pub use sparse::SparseMatrix;

/// Indexed triangle mesh with optional per-vertex texture coordinates.
///
/// Faces are counter-clockwise when seen from outside. Meshes built through
/// [`TriMesh::new`] are validated: indices in range, no repeated vertex in a
/// face, each directed edge used once (edge-manifold and consistently
/// oriented) and a single face fan around every vertex.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub uvs: Option<Vec<[f64; 2]>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriMesh {
            vertices,
            faces,
            uvs: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_uvs(mut self, uvs: Vec<[f64; 2]>) -> Result<Self> {
        if uvs.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch {
                what: "uv count",
                expected: self.vertices.len(),
                found: uvs.len(),
            });
        }
        self.uvs = Some(uvs);
        Ok(self)
    }

    /// Same connectivity and UVs, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch {
                what: "vertex count",
                expected: self.vertices.len(),
                found: vertices.len(),
            });
        }
        Ok(TriMesh {
            vertices,
            faces: self.faces.clone(),
            uvs: self.uvs.clone(),
        })
    }

    #[inline]
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_indices()?;
        self.validate_manifold()
    }

    pub fn validate_indices(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::IndexOutOfRange {
                        face: fi,
                        index: v as i64,
                        len: n,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateFace { face: fi });
            }
        }
        if !self.vertices.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("vertex positions"));
        }
        Ok(())
    }

    /// Checks edge-manifoldness, orientation consistency and vertex fans.
    pub fn validate_manifold(&self) -> Result<()> {
        let mut directed = BTreeSet::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let e = (f[k], f[(k + 1) % 3]);
                if !directed.insert(e) {
                    return Err(Error::NonManifold(format!(
                        "directed edge {}->{} used twice (face {fi}): edge shared by more than two faces or inconsistent orientation",
                        e.0, e.1
                    )));
                }
            }
        }
        for (v, fan) in self.vertex_faces().iter().enumerate() {
            if fan.len() > 1 && fan_components(&self.faces, v, fan) != 1 {
                return Err(Error::NonManifold(format!(
                    "vertex {v} joins several separate face fans"
                )));
            }
        }
        Ok(())
    }

    /// Faces incident to each vertex, in ascending face order.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                out[v].push(fi);
            }
        }
        out
    }

    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }

    /// Sorted neighbor lists.
    pub fn vertex_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in adj.iter_mut() {
            list.sort_unstable();
        }
        adj
    }

    /// Boundary loops as ordered vertex rings following face orientation.
    /// Each loop starts at its smallest vertex; loops are sorted by that vertex.
    pub fn boundary_loops(&self) -> Vec<Vec<usize>> {
        let mut directed = BTreeSet::new();
        for f in &self.faces {
            for k in 0..3 {
                directed.insert((f[k], f[(k + 1) % 3]));
            }
        }
        let mut next: BTreeMap<usize, usize> = BTreeMap::new();
        for &(a, b) in &directed {
            if !directed.contains(&(b, a)) {
                next.insert(a, b);
            }
        }
        let mut visited = BTreeSet::new();
        let mut loops = Vec::new();
        for &start in next.keys() {
            if visited.contains(&start) {
                continue;
            }
            let mut ring = vec![start];
            visited.insert(start);
            let mut cur = next[&start];
            while cur != start {
                if !visited.insert(cur) {
                    break;
                }
                ring.push(cur);
                match next.get(&cur) {
                    Some(&n) => cur = n,
                    None => break,
                }
            }
            loops.push(ring);
        }
        loops
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.face_points(f);
        (b - a).cross(c - a).normalized()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.face_points(f);
        0.5 * (b - a).cross(c - a).norm()
    }

    #[inline]
    pub fn face_points(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Angle-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut out = vec![Vec3::ZERO; self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let n = self.face_normal(fi);
            for k in 0..3 {
                let p = self.vertices[f[k]];
                let e1 = (self.vertices[f[(k + 1) % 3]] - p).normalized();
                let e2 = (self.vertices[f[(k + 2) % 3]] - p).normalized();
                out[f[k]] += n * acos(e1.dot(e2));
            }
        }
        out.into_iter().map(Vec3::normalized).collect()
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edges();
        if edges.is_empty() {
            return 0.0;
        }
        let total: f64 = edges
            .iter()
            .map(|&(a, b)| self.vertices[a].distance(self.vertices[b]))
            .sum();
        total / edges.len() as f64
    }

    /// V - E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let used: BTreeSet<usize> = self.faces.iter().flatten().copied().collect();
        used.len() as i64 - self.edges().len() as i64 + self.faces.len() as i64
    }

    /// Connected component id per vertex (edge connectivity), numbered in
    /// order of first vertex. Isolated vertices get their own component.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let adj = self.vertex_adjacency();
        let mut comp = vec![usize::MAX; self.vertices.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..self.vertices.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = count;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        )
    }

    /// Submesh of the selected faces. Returns the mesh and, for each new
    /// vertex, its index in `self` (ascending).
    pub fn submesh(&self, face_mask: &[bool]) -> (TriMesh, Vec<usize>) {
        let mut used = BTreeSet::new();
        for (f, &keep) in self.faces.iter().zip(face_mask) {
            if keep {
                used.extend(f.iter().copied());
            }
        }
        let old_of_new: Vec<usize> = used.into_iter().collect();
        let mut new_of_old = vec![usize::MAX; self.vertices.len()];
        for (new, &old) in old_of_new.iter().enumerate() {
            new_of_old[old] = new;
        }
        let faces = self
            .faces
            .iter()
            .zip(face_mask)
            .filter(|(_, &k)| k)
            .map(|(f, _)| [new_of_old[f[0]], new_of_old[f[1]], new_of_old[f[2]]])
            .collect();
        let mesh = TriMesh {
            vertices: old_of_new.iter().map(|&i| self.vertices[i]).collect(),
            faces,
            uvs: self.uvs.as_ref().map(|uv| old_of_new.iter().map(|&i| uv[i]).collect()),
        };
        (mesh, old_of_new)
    }

    /// Concatenates meshes, offsetting face indices. UVs are dropped unless
    /// every part has them.
    pub fn stack(parts: &[&TriMesh]) -> TriMesh {
        let mut out = TriMesh::default();
        let all_uv = !parts.is_empty() && parts.iter().all(|p| p.uvs.is_some());
        let mut uvs = Vec::new();
        for p in parts {
            let off = out.vertices.len();
            out.vertices.extend_from_slice(&p.vertices);
            out.faces
                .extend(p.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
            if let (true, Some(uv)) = (all_uv, &p.uvs) {
                uvs.extend_from_slice(uv);
            }
        }
        if all_uv {
            out.uvs = Some(uvs);
        }
        out
    }
}

/// Number of edge-connected fans among the faces around `v`.
fn fan_components(faces: &[[usize; 3]], v: usize, fan: &[usize]) -> usize {
    // (out, in) neighbors of v in each face, following orientation
    let links: Vec<(usize, usize)> = fan
        .iter()
        .map(|&fi| {
            let f = faces[fi];
            let k = f.iter().position(|&x| x == v).unwrap_or(0);
            (f[(k + 1) % 3], f[(k + 2) % 3])
        })
        .collect();
    let mut parent: Vec<usize> = (0..fan.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..links.len() {
        for j in 0..links.len() {
            if i != j && links[i].0 == links[j].1 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    (0..links.len()).filter(|&i| find(&mut parent, i) == i).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn rejects_out_of_range_and_degenerate_faces() {
        let v = vec![Vec3::ZERO, Vec3::X, Vec3::Y];
        assert!(matches!(
            TriMesh::new(v.clone(), vec![[0, 1, 3]]),
            Err(Error::IndexOutOfRange { index: 3, .. })
        ));
        assert!(matches!(
            TriMesh::new(v, vec![[0, 1, 1]]),
            Err(Error::DegenerateFace { face: 0 })
        ));
    }

    #[test]
    fn rejects_edge_shared_by_three_faces() {
        let v = vec![Vec3::ZERO, Vec3::X, Vec3::Y, Vec3::Z, Vec3::new(1.0, 1.0, 1.0)];
        let r = TriMesh::new(v, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]]);
        assert!(matches!(r, Err(Error::NonManifold(_))));
    }

    #[test]
    fn rejects_bowtie_vertex() {
        let v = vec![
            Vec3::ZERO,
            Vec3::X,
            Vec3::Y,
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
        ];
        let r = TriMesh::new(v, vec![[0, 1, 2], [0, 3, 4]]);
        assert!(matches!(r, Err(Error::NonManifold(_))));
    }

    #[test]
    fn closed_meshes_have_no_boundary_and_euler_two() {
        for m in [primitives::cube(1.0), primitives::icosphere(2, 1.0)] {
            assert!(m.boundary_loops().is_empty());
            assert_eq!(m.euler_characteristic(), 2);
        }
    }

    #[test]
    fn grid_boundary_is_one_ordered_loop() {
        let g = primitives::grid(4, 3, 1.0, 1.0);
        let loops = g.boundary_loops();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].len(), 2 * (4 + 3));
        let ring = &loops[0];
        let edges: BTreeSet<_> = g.edges().into_iter().collect();
        for k in 0..ring.len() {
            let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
            assert!(edges.contains(&(a.min(b), a.max(b))));
        }
    }

    #[test]
    fn submesh_keeps_selected_faces() {
        let g = primitives::grid(2, 2, 1.0, 1.0);
        let mask: Vec<bool> = (0..g.face_count()).map(|f| f < 2).collect();
        let (sub, map) = g.submesh(&mask);
        assert_eq!(sub.face_count(), 2);
        assert_eq!(sub.vertex_count(), map.len());
        sub.validate().unwrap();
    }
}
