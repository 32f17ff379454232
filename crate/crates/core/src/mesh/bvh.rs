//! Bounding volume hierarchy over mesh faces for exact closest-point queries
//! with inside/outside classification by angle-weighted pseudonormals.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::math::{acos, sqrt, Vec3};

const LEAF_SIZE: usize = 4;

/// Part of a triangle the closest point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feature {
    /// Local vertex 0, 1 or 2.
    Vertex(u8),
    /// Local edge k joins local vertices k and k + 1.
    Edge(u8),
    Face,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec3,
    pub face: usize,
    pub distance: f64,
    /// Strictly inside the surface; points on the surface are outside.
    pub inside: bool,
    pub feature: Feature,
}

impl ClosestPoint {
    /// Distance, negative when inside.
    pub fn signed_distance(&self) -> f64 {
        if self.inside {
            -self.distance
        } else {
            self.distance
        }
    }
}

/// Closest point on triangle `abc` to `p` and the feature it lies on.
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> (Vec3, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

#[derive(Clone, Debug)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: range `start..start + count` into `order`.
    /// Interior: `start` and `count` are the left and right child indices.
    start: usize,
    count: usize,
    leaf: bool,
}

#[derive(Clone, Debug)]
pub struct SurfaceBvh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    nodes: Vec<Node>,
    order: Vec<usize>,
    face_normals: Vec<Vec3>,
    vertex_normals: Vec<Vec3>,
    edge_normals: Vec<[Vec3; 3]>,
}

impl SurfaceBvh {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        if mesh.faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        mesh.validate_indices()?;
        let face_normals: Vec<Vec3> = (0..mesh.face_count()).map(|f| mesh.face_normal(f)).collect();

        let mut vertex_normals = vec![Vec3::ZERO; mesh.vertex_count()];
        let mut edge_sum: BTreeMap<(usize, usize), Vec3> = BTreeMap::new();
        for (fi, f) in mesh.faces.iter().enumerate() {
            let n = face_normals[fi];
            for k in 0..3 {
                let p = mesh.vertices[f[k]];
                let e1 = (mesh.vertices[f[(k + 1) % 3]] - p).normalized();
                let e2 = (mesh.vertices[f[(k + 2) % 3]] - p).normalized();
                vertex_normals[f[k]] += n * acos(e1.dot(e2));
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *edge_sum.entry((a.min(b), a.max(b))).or_insert(Vec3::ZERO) += n;
            }
        }
        for n in vertex_normals.iter_mut() {
            *n = n.normalized();
        }
        let edge_normals = mesh
            .faces
            .iter()
            .map(|f| {
                core::array::from_fn(|k| {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    edge_sum[&(a.min(b), a.max(b))].normalized()
                })
            })
            .collect();

        let centroids: Vec<Vec3> = (0..mesh.face_count())
            .map(|f| {
                let [a, b, c] = mesh.face_points(f);
                (a + b + c) / 3.0
            })
            .collect();
        let mut bvh = SurfaceBvh {
            vertices: mesh.vertices.clone(),
            faces: mesh.faces.clone(),
            nodes: Vec::new(),
            order: (0..mesh.face_count()).collect(),
            face_normals,
            vertex_normals,
            edge_normals,
        };
        let n = bvh.order.len();
        bvh.build(0, n, &centroids);
        Ok(bvh)
    }

    fn face_bounds(&self, f: usize) -> (Vec3, Vec3) {
        let [a, b, c] = self.faces[f];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (pa.min(pb).min(pc), pa.max(pb).max(pc))
    }

    fn build(&mut self, start: usize, end: usize, centroids: &[Vec3]) -> usize {
        let (mut lo, mut hi) = self.face_bounds(self.order[start]);
        let (mut clo, mut chi) = (centroids[self.order[start]], centroids[self.order[start]]);
        for &f in &self.order[start..end] {
            let (l, h) = self.face_bounds(f);
            lo = lo.min(l);
            hi = hi.max(h);
            clo = clo.min(centroids[f]);
            chi = chi.max(centroids[f]);
        }
        let idx = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            start,
            count: end - start,
            leaf: true,
        });
        if end - start <= LEAF_SIZE {
            return idx;
        }
        let ext = chi - clo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        self.order[start..end].sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        let mid = start + (end - start) / 2;
        let left = self.build(start, mid, centroids);
        let right = self.build(mid, end, centroids);
        let node = &mut self.nodes[idx];
        node.leaf = false;
        node.start = left;
        node.count = right;
        idx
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    fn box_distance_squared(node: &Node, p: Vec3) -> f64 {
        let d = (node.lo - p).max(p - node.hi).max(Vec3::ZERO);
        d.norm_squared()
    }

    /// Exact closest point on the surface. Ties in distance resolve to the
    /// lowest face index.
    pub fn closest_point(&self, p: Vec3) -> ClosestPoint {
        let mut best_d2 = f64::INFINITY;
        let mut best_face = usize::MAX;
        let mut best = (Vec3::ZERO, Feature::Face);
        let mut stack = [0usize; 128];
        let mut top = 1;
        while top > 0 {
            top -= 1;
            let ni = stack[top];
            let node = &self.nodes[ni];
            if Self::box_distance_squared(node, p) > best_d2 {
                continue;
            }
            if node.leaf {
                for &f in &self.order[node.start..node.start + node.count] {
                    let [a, b, c] = self.faces[f];
                    let (q, feat) = closest_point_on_triangle(p, self.vertices[a], self.vertices[b], self.vertices[c]);
                    let d2 = p.distance_squared(q);
                    if d2 < best_d2 || (d2 == best_d2 && f < best_face) {
                        best_d2 = d2;
                        best_face = f;
                        best = (q, feat);
                    }
                }
            } else {
                let (l, r) = (node.start, node.count);
                let dl = Self::box_distance_squared(&self.nodes[l], p);
                let dr = Self::box_distance_squared(&self.nodes[r], p);
                let (far, near) = if dl <= dr { (r, l) } else { (l, r) };
                stack[top] = far;
                stack[top + 1] = near;
                top += 2;
            }
        }
        let (point, feature) = best;
        let normal = self.pseudonormal(best_face, feature);
        ClosestPoint {
            point,
            face: best_face,
            distance: sqrt(best_d2),
            inside: (p - point).dot(normal) < 0.0,
            feature,
        }
    }

    /// Unsigned point-to-surface distance.
    pub fn distance(&self, p: Vec3) -> f64 {
        self.closest_point(p).distance
    }

    pub fn pseudonormal(&self, face: usize, feature: Feature) -> Vec3 {
        match feature {
            Feature::Face => self.face_normals[face],
            Feature::Edge(k) => self.edge_normals[face][k as usize],
            Feature::Vertex(k) => self.vertex_normals[self.faces[face][k as usize]],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    /// Independent closest point: project onto the plane, accept if the
    /// projection is inside, otherwise the best of the three segments.
    fn oracle_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
        let n = (b - a).cross(c - a);
        let proj = p - n * ((p - a).dot(n) / n.norm_squared());
        let inside = [(a, b), (b, c), (c, a)]
            .iter()
            .all(|&(u, v)| (v - u).cross(proj - u).dot(n) >= 0.0);
        if inside {
            return proj;
        }
        let seg = |u: Vec3, v: Vec3| {
            let t = ((p - u).dot(v - u) / (v - u).norm_squared()).clamp(0.0, 1.0);
            u + (v - u) * t
        };
        [seg(a, b), seg(b, c), seg(c, a)]
            .into_iter()
            .min_by(|x, y| p.distance_squared(*x).total_cmp(&p.distance_squared(*y)))
            .unwrap()
    }

    fn oracle_nearest(mesh: &TriMesh, p: Vec3) -> (Vec3, f64) {
        (0..mesh.face_count())
            .map(|f| {
                let [a, b, c] = mesh.face_points(f);
                let q = oracle_triangle(p, a, b, c);
                (q, p.distance(q))
            })
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap()
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn cube_centroid_is_inside_at_half() {
        let bvh = SurfaceBvh::new(&primitives::cube(1.0)).unwrap();
        let cp = bvh.closest_point(Vec3::ZERO);
        assert!(cp.inside);
        assert!((cp.distance - 0.5).abs() < 1e-15);
    }

    #[test]
    fn point_on_vertex_is_outside_at_zero() {
        let cube = primitives::cube(1.0);
        let bvh = SurfaceBvh::new(&cube).unwrap();
        for &v in &cube.vertices {
            let cp = bvh.closest_point(v);
            assert_eq!(cp.distance, 0.0);
            assert!(!cp.inside);
        }
    }

    #[test]
    fn empty_mesh_is_an_error() {
        assert_eq!(SurfaceBvh::new(&TriMesh::default()).unwrap_err(), Error::EmptyMesh);
    }

    #[test]
    fn agrees_with_brute_force_on_random_queries() {
        let mut seed = 11;
        let fixtures = [
            primitives::cube(1.0),
            primitives::icosphere(2, 0.7),
            primitives::tube(10, 5, 0.3, 1.0),
        ];
        for mesh in &fixtures {
            let bvh = SurfaceBvh::new(mesh).unwrap();
            for _ in 0..1000 {
                let p = Vec3::new(lcg(&mut seed), lcg(&mut seed), lcg(&mut seed)) * 3.0 - Vec3::splat(1.5);
                let cp = bvh.closest_point(p);
                let (q, d) = oracle_nearest(mesh, p);
                assert!((cp.distance - d).abs() < 1e-9);
                assert!(cp.point.distance(q) < 1e-9, "{p:?}: {:?} vs {q:?}", cp.point);
            }
        }
    }

    #[test]
    fn sign_matches_sphere_radius() {
        let sphere = primitives::icosphere(3, 1.0);
        let bvh = SurfaceBvh::new(&sphere).unwrap();
        let mut seed = 5;
        for _ in 0..500 {
            let dir = Vec3::new(lcg(&mut seed) - 0.5, lcg(&mut seed) - 0.5, lcg(&mut seed) - 0.5).normalized();
            let r = 0.5 + lcg(&mut seed);
            let cp = bvh.closest_point(dir * r);
            if (r - 1.0).abs() > 0.01 {
                assert_eq!(cp.inside, r < 1.0, "r = {r}");
            }
        }
    }
}
