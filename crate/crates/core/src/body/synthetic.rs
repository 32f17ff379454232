//! Procedural body models: a box-modelled humanoid smoothed by two rounds of
//! Catmull-Clark subdivision, and a single-joint sphere.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::BodyModel;
use crate::math::{exp, Vec3};
use crate::mesh::{primitives, SparseMatrix, TriMesh};
use crate::rng::Rng;

/// Canonical joint order of the 16-joint skeleton.
pub const JOINT_NAMES: [&str; 16] = [
    "pelvis",
    "spine",
    "chest",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_hip",
    "right_knee",
    "right_ankle",
];

const PARENTS: [Option<usize>; 16] = [
    None,
    Some(0),
    Some(1),
    Some(2),
    Some(2),
    Some(4),
    Some(5),
    Some(2),
    Some(7),
    Some(8),
    Some(0),
    Some(10),
    Some(11),
    Some(0),
    Some(13),
    Some(14),
];

/// Child whose location ends the bone of each joint.
const BONE_CHILD: [Option<usize>; 16] = [
    Some(1),
    Some(2),
    Some(3),
    None,
    Some(5),
    Some(6),
    None,
    Some(8),
    Some(9),
    None,
    Some(11),
    Some(12),
    None,
    Some(14),
    Some(15),
    None,
];

/// Capsule radius per joint bone, meters.
const BONE_RADIUS: [f64; 16] = [
    0.13, 0.13, 0.13, 0.07, 0.05, 0.045, 0.035, 0.05, 0.045, 0.035, 0.06, 0.05, 0.04, 0.06, 0.05, 0.04,
];

fn design_joints() -> [Vec3; 16] {
    let v = Vec3::new;
    [
        v(0.0, 0.92, 0.0),
        v(0.0, 1.08, 0.0),
        v(0.0, 1.28, 0.0),
        v(0.0, 1.55, 0.0),
        v(0.2, 1.36, 0.0),
        v(0.5, 1.36, 0.0),
        v(0.73, 1.36, 0.0),
        v(-0.2, 1.36, 0.0),
        v(-0.5, 1.36, 0.0),
        v(-0.73, 1.36, 0.0),
        v(0.115, 0.82, 0.0),
        v(0.115, 0.45, 0.0),
        v(0.115, 0.09, 0.0),
        v(-0.115, 0.82, 0.0),
        v(-0.115, 0.45, 0.0),
        v(-0.115, 0.09, 0.0),
    ]
}

struct QuadMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 4]>,
}

impl QuadMesh {
    /// Closed box over the lattice of split coordinates, outward quads.
    fn lattice_box(xs: &[f64], ys: &[f64], zs: &[f64]) -> Self {
        let (nx, ny, nz) = (xs.len() - 1, ys.len() - 1, zs.len() - 1);
        let mut index: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
        let mut q = QuadMesh {
            vertices: Vec::new(),
            faces: Vec::new(),
        };
        let mut vid = |q: &mut QuadMesh, key: (usize, usize, usize)| -> usize {
            *index.entry(key).or_insert_with(|| {
                q.vertices.push(Vec3::new(xs[key.0], ys[key.1], zs[key.2]));
                q.vertices.len() - 1
            })
        };
        // (axis, extreme index, outward sign)
        let sides = [
            (0, 0, -1.0),
            (0, nx, 1.0),
            (1, 0, -1.0),
            (1, ny, 1.0),
            (2, 0, -1.0),
            (2, nz, 1.0),
        ];
        let dims = [nx, ny, nz];
        for (axis, fixed, sign) in sides {
            let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
            for i in 0..dims[a1] {
                for j in 0..dims[a2] {
                    let corner = |di: usize, dj: usize| {
                        let mut k = [0usize; 3];
                        k[axis] = fixed;
                        k[a1] = i + di;
                        k[a2] = j + dj;
                        (k[0], k[1], k[2])
                    };
                    let mut f = [
                        vid(&mut q, corner(0, 0)),
                        vid(&mut q, corner(1, 0)),
                        vid(&mut q, corner(1, 1)),
                        vid(&mut q, corner(0, 1)),
                    ];
                    let n = q.normal(&f);
                    if n[axis] * sign < 0.0 {
                        f.reverse();
                    }
                    q.faces.push(f);
                }
            }
        }
        q
    }

    fn normal(&self, f: &[usize; 4]) -> Vec3 {
        let p = f.map(|i| self.vertices[i]);
        (p[2] - p[0]).cross(p[3] - p[1])
    }

    fn center(&self, f: usize) -> Vec3 {
        self.faces[f].iter().fold(Vec3::ZERO, |a, &i| a + self.vertices[i]) * 0.25
    }

    fn find_face(&self, pred: impl Fn(Vec3, Vec3) -> bool) -> usize {
        (0..self.faces.len())
            .find(|&f| pred(self.center(f), self.normal(&self.faces[f]).normalized()))
            .expect("box model face")
    }

    /// Extrudes face `f` so its cap is centered at `to`, the cap scaled
    /// componentwise about its center. The cap keeps index `f`.
    fn extrude(&mut self, f: usize, to: Vec3, scale: Vec3) {
        let old = self.faces[f];
        let c = self.center(f);
        let base = self.vertices.len();
        for &i in &old {
            let d = self.vertices[i] - c;
            self.vertices
                .push(to + Vec3::new(d.x * scale.x, d.y * scale.y, d.z * scale.z));
        }
        let new = [base, base + 1, base + 2, base + 3];
        self.faces[f] = new;
        for k in 0..4 {
            let k1 = (k + 1) % 4;
            self.faces.push([old[k], old[k1], new[k1], new[k]]);
        }
    }

    fn catmull_clark(&self) -> QuadMesh {
        let nv = self.vertices.len();
        let nf = self.faces.len();
        let mut edge_id: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut edge_faces: Vec<Vec<usize>> = Vec::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..4 {
                let (a, b) = (f[k], f[(k + 1) % 4]);
                let key = (a.min(b), a.max(b));
                let id = *edge_id.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_faces.push(Vec::new());
                    edges.len() - 1
                });
                edge_faces[id].push(fi);
            }
        }
        let face_pts: Vec<Vec3> = (0..nf).map(|f| self.center(f)).collect();
        let edge_pts: Vec<Vec3> = edges
            .iter()
            .zip(&edge_faces)
            .map(|(&(a, b), fs)| {
                let mid = self.vertices[a] + self.vertices[b];
                let fsum = fs.iter().fold(Vec3::ZERO, |s, &f| s + face_pts[f]);
                (mid + fsum) / (2.0 + fs.len() as f64)
            })
            .collect();
        let mut fsum = vec![Vec3::ZERO; nv];
        let mut fcount = vec![0usize; nv];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                fsum[v] += face_pts[fi];
                fcount[v] += 1;
            }
        }
        let mut rsum = vec![Vec3::ZERO; nv];
        let mut valence = vec![0usize; nv];
        for &(a, b) in &edges {
            let mid = (self.vertices[a] + self.vertices[b]) * 0.5;
            for v in [a, b] {
                rsum[v] += mid;
                valence[v] += 1;
            }
        }
        let mut vertices: Vec<Vec3> = (0..nv)
            .map(|v| {
                let n = valence[v] as f64;
                let f = fsum[v] / fcount[v] as f64;
                let r = rsum[v] / n;
                (f + r * 2.0 + self.vertices[v] * (n - 3.0)) / n
            })
            .collect();
        vertices.extend_from_slice(&face_pts);
        vertices.extend_from_slice(&edge_pts);
        let e = |a: usize, b: usize| nv + nf + edge_id[&(a.min(b), a.max(b))];
        let mut faces = Vec::with_capacity(4 * nf);
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..4 {
                let (prev, cur, next) = (f[(k + 3) % 4], f[k], f[(k + 1) % 4]);
                faces.push([cur, e(cur, next), nv + fi, e(prev, cur)]);
            }
        }
        QuadMesh { vertices, faces }
    }

    fn triangulate(&self) -> TriMesh {
        let faces = self
            .faces
            .iter()
            .flat_map(|&[a, b, c, d]| [[a, b, c], [a, c, d]])
            .collect();
        TriMesh {
            vertices: self.vertices.clone(),
            faces,
            uvs: None,
        }
    }
}

/// The smoothed box-model humanoid in T-pose, feet near y = 0, facing +z.
pub(crate) fn humanoid_mesh() -> TriMesh {
    let v = Vec3::new;
    let mut q = QuadMesh::lattice_box(&[-0.17, -0.06, 0.06, 0.17], &[0.86, 1.02, 1.2, 1.46], &[-0.1, 0.1]);
    for side in [1.0, -1.0] {
        let leg = q.find_face(|c, n| n.y < -0.9 && c.x * side > 0.07);
        let x = 0.115 * side;
        q.extrude(leg, v(x, 0.74, 0.0), v(1.2, 1.0, 0.75));
        q.extrude(leg, v(x, 0.5, 0.0), v(0.8, 1.0, 0.8));
        q.extrude(leg, v(x, 0.4, 0.0), v(1.0, 1.0, 1.0));
        q.extrude(leg, v(x, 0.1, 0.0), v(0.7, 1.0, 0.7));
        q.extrude(leg, v(x, 0.03, 0.02), v(1.0, 1.0, 1.0));

        let arm = q.find_face(|c, n| n.x * side > 0.9 && c.y > 1.25);
        q.extrude(arm, v(0.24 * side, 1.36, 0.0), v(1.0, 0.5, 0.55));
        q.extrude(arm, v(0.47 * side, 1.36, 0.0), v(1.0, 0.85, 0.85));
        q.extrude(arm, v(0.53 * side, 1.36, 0.0), v(1.0, 1.0, 1.0));
        q.extrude(arm, v(0.73 * side, 1.36, 0.0), v(1.0, 0.7, 0.7));
        q.extrude(arm, v(0.85 * side, 1.36, 0.0), v(1.0, 1.1, 0.5));
    }
    let head = q.find_face(|c, n| n.y > 0.9 && c.x.abs() < 0.05);
    q.extrude(head, v(0.0, 1.52, 0.0), v(0.9, 1.0, 0.55));
    q.extrude(head, v(0.0, 1.58, 0.0), v(1.0, 1.0, 1.0));
    q.extrude(head, v(0.0, 1.62, 0.01), v(1.6, 1.0, 1.7));
    q.extrude(head, v(0.0, 1.8, 0.01), v(1.0, 1.0, 1.0));
    q.extrude(head, v(0.0, 1.84, 0.01), v(0.6, 1.0, 0.6));
    q.catmull_clark().catmull_clark().triangulate()
}

fn segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(a + ab * t)
}

/// Repeated neighbor averaging of a per-vertex field.
fn smooth(field: &mut Vec<Vec3>, adjacency: &[Vec<usize>], rounds: usize) {
    for _ in 0..rounds {
        let next: Vec<Vec3> = field
            .iter()
            .zip(adjacency)
            .map(|(&x, nbrs)| {
                if nbrs.is_empty() {
                    return x;
                }
                let avg = nbrs.iter().fold(Vec3::ZERO, |s, &j| s + field[j]) / nbrs.len() as f64;
                (x + avg) * 0.5
            })
            .collect();
        *field = next;
    }
}

fn dot_fields(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(*y)).sum()
}

fn scale_to_max(field: &mut [Vec3], max_norm: f64) {
    let m = field.iter().map(|d| d.norm()).fold(0.0, f64::max);
    if m > 0.0 {
        field.iter_mut().for_each(|d| *d = *d * (max_norm / m));
    }
}

/// Deterministic synthetic humanoid with `n_betas` shape coefficients and
/// `n_joints` joints (16 is the full skeleton; fewer keeps a prefix of the
/// canonical order, more adds leaf joints at bone midpoints).
///
/// Shape fields are mutually orthogonal with at most 5 cm displacement per
/// unit coefficient; the first is a uniform scaling about the floor origin.
/// Pose corrective fields are localized around their joint, at most 1 cm.
pub fn make_synthetic_body(seed: u64, n_betas: usize, n_joints: usize) -> BodyModel {
    let n_betas = n_betas.max(1);
    let k = n_joints.max(2);
    let template = humanoid_mesh();
    let n = template.vertex_count();
    let adjacency = template.vertex_adjacency();
    let mut rng = Rng::new(seed);

    let design = design_joints();
    let mut joints: Vec<Vec3> = Vec::with_capacity(k);
    let mut parents: Vec<Option<usize>> = Vec::with_capacity(k);
    let mut bones: Vec<(Vec3, Vec3, f64)> = Vec::with_capacity(k);
    for j in 0..k.min(16) {
        joints.push(design[j]);
        parents.push(PARENTS[j]);
    }
    for j in 0..k.min(16) {
        let end = match BONE_CHILD[j] {
            Some(c) if c < k => design[c],
            _ => {
                let dir = match PARENTS[j] {
                    Some(p) => (design[j] - design[p]).normalized(),
                    None => Vec3::Y,
                };
                design[j] + dir * 0.1
            }
        };
        bones.push((design[j], end, BONE_RADIUS[j]));
    }
    for extra in 0..k.saturating_sub(16) {
        let b = extra % 15 + 1;
        let p = PARENTS[b].unwrap_or(0);
        let mid = (design[b] + design[p]) * 0.5;
        joints.push(mid);
        parents.push(Some(p));
        bones.push((mid, design[b], BONE_RADIUS[p]));
    }

    // capsule-distance falloff skinning
    let sigma2 = 2.0 * 0.025 * 0.025;
    let weights: Vec<Vec<f64>> = template
        .vertices
        .iter()
        .map(|&p| {
            let d: Vec<f64> = bones
                .iter()
                .map(|&(a, b, r)| (segment_distance(p, a, b) - r).max(0.0))
                .collect();
            let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
            let raw: Vec<f64> = d.iter().map(|&x| exp(-(x * x - dmin * dmin) / sigma2)).collect();
            let sum: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|&w| w / sum).collect();
            // make the row sum exact up to rounding of the last entry
            let head: f64 = row[..k - 1].iter().sum();
            row[k - 1] = (1.0 - head).max(0.0);
            row
        })
        .collect();

    // regressor: Gaussian-weighted vertices around each design joint
    let mut trip = Vec::new();
    for (j, &c) in joints.iter().enumerate() {
        let s2 = 2.0 * 0.04 * 0.04;
        let d2: Vec<f64> = template.vertices.iter().map(|v| v.distance_squared(c)).collect();
        let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = d2.iter().map(|&x| exp(-(x - dmin) / s2)).collect();
        let keep: Vec<usize> = (0..n).filter(|&i| w[i] > 1e-3).collect();
        let sum: f64 = keep.iter().map(|&i| w[i]).sum();
        trip.extend(keep.iter().map(|&i| (j, i, w[i] / sum)));
    }
    let joint_regressor = SparseMatrix::from_triplets(k, n, &trip).expect("regressor indices");

    let mut shape_basis: Vec<Vec<Vec3>> = Vec::with_capacity(n_betas);
    for c in 0..n_betas {
        let mut field: Vec<Vec3> = if c == 0 {
            template.vertices.clone()
        } else {
            let mut f: Vec<Vec3> = (0..n).map(|_| rng.vec3_in_cube(1.0)).collect();
            smooth(&mut f, &adjacency, 40);
            f
        };
        for prev in &shape_basis {
            let s = dot_fields(&field, prev) / dot_fields(prev, prev);
            field.iter_mut().zip(prev).for_each(|(x, &p)| *x -= p * s);
        }
        scale_to_max(&mut field, 0.05);
        shape_basis.push(field);
    }

    let mut pose_basis = Vec::with_capacity(9 * (k - 1));
    for j in 1..k {
        let p = parents[j].unwrap_or(0);
        for _ in 0..9 {
            let mut f: Vec<Vec3> = (0..n).map(|_| rng.vec3_in_cube(1.0)).collect();
            smooth(&mut f, &adjacency, 20);
            for (x, w) in f.iter_mut().zip(&weights) {
                *x = *x * (w[j] + w[p]);
            }
            scale_to_max(&mut f, 0.01);
            pose_basis.push(f);
        }
    }

    BodyModel::new(template, shape_basis, pose_basis, joint_regressor, weights, parents)
        .expect("synthetic body is valid")
}

/// Single-joint sphere body whose one shape field is radial: coefficient
/// `b` scales the sphere by `1 + b`.
pub fn make_sphere_body(subdivisions: u32, radius: f64) -> BodyModel {
    let template = primitives::icosphere(subdivisions, radius);
    let n = template.vertex_count();
    let inv = 1.0 / n as f64;
    let trip: Vec<(usize, usize, f64)> = (0..n).map(|i| (0, i, inv)).collect();
    let reg = SparseMatrix::from_triplets(1, n, &trip).expect("regressor indices");
    let radial = template.vertices.clone();
    BodyModel::new(template, vec![radial], vec![], reg, vec![vec![1.0]; n], vec![None]).expect("sphere body is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn humanoid_is_closed_genus_zero() {
        let m = humanoid_mesh();
        m.validate().unwrap();
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.boundary_loops().is_empty());
        assert!((1500..3000).contains(&m.vertex_count()), "{}", m.vertex_count());
        assert_eq!(m.connected_components().1, 1);
    }

    #[test]
    fn humanoid_is_outward_oriented() {
        let m = humanoid_mesh();
        // divergence theorem: signed volume is positive for outward faces
        let vol: f64 = m
            .faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| m.vertices[i]);
                a.dot(b.cross(c)) / 6.0
            })
            .sum();
        assert!(vol > 0.02, "volume {vol}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = make_synthetic_body(0, 4, 16);
        let b = make_synthetic_body(0, 4, 16);
        assert_eq!(a, b);
        let c = make_synthetic_body(1, 4, 16);
        assert_ne!(a.shape_basis, c.shape_basis);
    }

    #[test]
    fn weights_and_bases_respect_bounds() {
        for k in [2, 9, 16, 20] {
            let m = make_synthetic_body(3, 6, k);
            assert_eq!(m.n_joints(), k);
            for row in &m.weights {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() <= 1e-9);
                assert!(row.iter().all(|&w| w >= 0.0));
            }
            for f in &m.shape_basis {
                assert!(f.iter().all(|d| d.norm() <= 0.05 + 1e-12));
            }
            for f in &m.pose_basis {
                assert!(f.iter().all(|d| d.norm() <= 0.01 + 1e-12));
            }
        }
    }

    #[test]
    fn shape_fields_are_orthogonal() {
        let m = make_synthetic_body(4, 5, 16);
        for i in 0..5 {
            for j in 0..i {
                let a = &m.shape_basis[i];
                let b = &m.shape_basis[j];
                let c = dot_fields(a, b) / (dot_fields(a, a) * dot_fields(b, b)).sqrt();
                assert!(c.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn regressed_joints_are_inside_the_body() {
        let m = make_synthetic_body(0, 2, 16);
        let bvh = crate::mesh::SurfaceBvh::new(&m.template).unwrap();
        let joints = m.joints(&[0.0, 0.0]).unwrap();
        for (j, p) in joints.iter().enumerate() {
            assert!(bvh.closest_point(*p).inside, "joint {} at {p:?}", JOINT_NAMES[j]);
        }
    }

    #[test]
    fn sphere_body_inflates_radially() {
        let m = make_sphere_body(2, 1.0);
        let v = m.shaped_template(&[0.1], &[Vec3::ZERO], None).unwrap();
        for p in v {
            assert!((p.norm() - 1.1).abs() < 1e-12);
        }
    }
}
