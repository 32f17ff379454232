//! Procedural meshes used by fixtures and the synthetic body.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::TriMesh;
use crate::math::{cos, sin, sqrt, Vec3};

/// Axis-aligned closed cube centered at the origin, outward orientation.
pub fn cube(side: f64) -> TriMesh {
    let h = side * 0.5;
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 != 0 { h } else { -h },
                if i & 2 != 0 { h } else { -h },
                if i & 4 != 0 { h } else { -h },
            )
        })
        .collect();
    let faces = alloc::vec![
        [0, 2, 1],
        [1, 2, 3], // z-
        [4, 5, 6],
        [5, 7, 6], // z+
        [0, 1, 4],
        [1, 5, 4], // y-
        [2, 6, 3],
        [3, 6, 7], // y+
        [0, 4, 2],
        [2, 4, 6], // x-
        [1, 3, 5],
        [3, 7, 5], // x+
    ];
    TriMesh {
        vertices,
        faces,
        uvs: None,
    }
}

/// Icosphere: icosahedron with `subdivisions` rounds of midpoint splitting,
/// projected to a sphere of the given radius.
pub fn icosphere(subdivisions: u32, radius: f64) -> TriMesh {
    let t = (1.0 + sqrt(5.0)) * 0.5;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
    .collect();
    let mut faces: Vec<[usize; 3]> = alloc::vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut midpoint = |a: usize, b: usize, vs: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                vs.push(((vs[a] + vs[b]) * 0.5).normalized());
                vs.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in vertices.iter_mut() {
        *v = *v * radius;
    }
    TriMesh {
        vertices,
        faces,
        uvs: None,
    }
}

/// Planar grid in z = 0 spanning `[0, sx] x [0, sy]`, `nx * ny` quads split
/// into triangles, normals along +z, UVs from normalized position.
pub fn grid(nx: usize, ny: usize, sx: f64, sy: f64) -> TriMesh {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut uvs = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let (u, v) = (i as f64 / nx as f64, j as f64 / ny as f64);
            vertices.push(Vec3::new(u * sx, v * sy, 0.0));
            uvs.push([u, v]);
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriMesh {
        vertices,
        faces,
        uvs: Some(uvs),
    }
}

/// Open cylindrical tube along +z: `segments` around, `rings` + 1 vertex
/// rings from z = 0 to z = height, outward normals.
pub fn tube(segments: usize, rings: usize, radius: f64, height: f64) -> TriMesh {
    let mut vertices = Vec::with_capacity(segments * (rings + 1));
    let mut uvs = Vec::with_capacity(segments * (rings + 1));
    for r in 0..=rings {
        let z = height * r as f64 / rings as f64;
        for s in 0..segments {
            let a = core::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push(Vec3::new(radius * cos(a), radius * sin(a), z));
            uvs.push([s as f64 / segments as f64, r as f64 / rings as f64]);
        }
    }
    let idx = |s: usize, r: usize| r * segments + (s % segments);
    let mut faces = Vec::with_capacity(2 * segments * rings);
    for r in 0..rings {
        for s in 0..segments {
            faces.push([idx(s, r), idx(s + 1, r), idx(s + 1, r + 1)]);
            faces.push([idx(s, r), idx(s + 1, r + 1), idx(s, r + 1)]);
        }
    }
    TriMesh {
        vertices,
        faces,
        uvs: Some(uvs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_are_valid() {
        cube(1.0).validate().unwrap();
        icosphere(3, 1.0).validate().unwrap();
        grid(3, 5, 1.0, 2.0).validate().unwrap();
        tube(12, 4, 0.1, 0.5).validate().unwrap();
    }

    #[test]
    fn icosphere_counts() {
        let s = icosphere(2, 1.0);
        assert_eq!(s.vertex_count(), 162);
        assert_eq!(s.face_count(), 320);
    }

    #[test]
    fn closed_primitives_face_outward() {
        for m in [cube(2.0), icosphere(1, 1.0)] {
            for f in 0..m.face_count() {
                let [a, b, c] = m.face_points(f);
                let centroid = (a + b + c) / 3.0;
                assert!(m.face_normal(f).dot(centroid) > 0.0);
            }
        }
    }

    #[test]
    fn tube_has_two_boundary_loops() {
        let t = tube(8, 3, 1.0, 1.0);
        assert_eq!(t.boundary_loops().len(), 2);
    }
}
