//! Synthetic digital wardrobe: garment templates carved from the body
//! surface and dressed subjects with known ground-truth displacements.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::body::{BodyModel, BodyParams};
use crate::error::{Error, Result};
use crate::garment::{garment_displacements, DressedFigure, DressedGarment, Garment, GARMENT_CLASSES};
use crate::math::{atan2, Vec3};
use crate::mesh::TriMesh;
use crate::rng::Rng;

/// Template offset from the skin along vertex normals.
pub const TEMPLATE_OFFSET: f64 = 0.003;

/// Axis-aligned carving region in T-pose template coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassRegion {
    pub y_min: f64,
    pub y_max: f64,
    pub max_abs_x: f64,
    /// Typical extra distance of the garment from the skin.
    pub looseness: f64,
}

pub fn class_region(class: &str) -> Option<ClassRegion> {
    let r = |y_min, y_max, max_abs_x, looseness| ClassRegion {
        y_min,
        y_max,
        max_abs_x,
        looseness,
    };
    Some(match class {
        "shirt" => r(0.90, 1.49, 0.68, 0.006),
        "t-shirt" => r(0.93, 1.49, 0.36, 0.005),
        "coat" => r(0.62, 1.49, 0.66, 0.016),
        "short-pants" => r(0.55, 1.02, 1.0, 0.006),
        "long-pants" => r(0.14, 1.02, 1.0, 0.007),
        _ => return None,
    })
}

/// Removes spike faces and faces around pinched vertices until the selection
/// is a manifold surface, then keeps its largest edge-connected piece.
fn clean_selection(mesh: &TriMesh, mask: &mut [bool]) {
    loop {
        let mut edge_use: alloc::collections::BTreeMap<(usize, usize), usize> = Default::default();
        for (f, keep) in mesh.faces.iter().zip(mask.iter()) {
            if *keep {
                for k in 0..3 {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    *edge_use.entry((a.min(b), a.max(b))).or_default() += 1;
                }
            }
        }
        let is_boundary = |a: usize, b: usize| edge_use.get(&(a.min(b), a.max(b))) == Some(&1);
        let mut boundary_degree = vec![0usize; mesh.vertex_count()];
        for (&(a, b), &n) in &edge_use {
            if n == 1 {
                boundary_degree[a] += 1;
                boundary_degree[b] += 1;
            }
        }
        let mut changed = false;
        for (fi, f) in mesh.faces.iter().enumerate() {
            if !mask[fi] {
                continue;
            }
            let open = (0..3).filter(|&k| is_boundary(f[k], f[(k + 1) % 3])).count();
            let pinched = f.iter().any(|&v| boundary_degree[v] > 2);
            if open >= 2 || pinched {
                mask[fi] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // largest connected piece by face count
    let (sub, old) = mesh.submesh(mask);
    let (comp, count) = sub.connected_components();
    if count <= 1 {
        return;
    }
    let mut sizes = vec![0usize; count];
    for f in &sub.faces {
        sizes[comp[f[0]]] += 1;
    }
    let best = (0..count)
        .max_by_key(|&c| (sizes[c], core::cmp::Reverse(c)))
        .unwrap_or(0);
    let keep: BTreeSet<usize> = (0..sub.vertex_count())
        .filter(|&v| comp[v] == best)
        .map(|v| old[v])
        .collect();
    for (fi, f) in mesh.faces.iter().enumerate() {
        if mask[fi] && !keep.contains(&f[0]) {
            mask[fi] = false;
        }
    }
}

/// Nearest body vertex per point by exhaustive search; ties go to the
/// lowest index.
pub fn nearest_vertices(points: &[Vec3], body: &[Vec3]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = (f64::INFINITY, 0usize);
            for (i, b) in body.iter().enumerate() {
                let d = p.distance_squared(*b);
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        })
        .collect()
}

/// Cylindrical UV projection about the vertical axis through the centroid.
fn cylindrical_uvs(vertices: &[Vec3]) -> Vec<[f64; 2]> {
    let n = vertices.len().max(1) as f64;
    let c = vertices.iter().fold(Vec3::ZERO, |a, &v| a + v) / n;
    let (lo, hi) = vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v.y), hi.max(v.y))
    });
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    vertices
        .iter()
        .map(|v| {
            let u = atan2(v.x - c.x, v.z - c.z) / core::f64::consts::TAU + 0.5;
            [u.clamp(0.0, 1.0), ((v.y - lo) / span).clamp(0.0, 1.0)]
        })
        .collect()
}

/// Garment template from the body faces whose vertices are all selected,
/// offset along the body normals.
pub fn carve_garment(model: &BodyModel, class: &str, vertex_mask: &[bool], offset: f64) -> Result<Garment> {
    let body = &model.template;
    if vertex_mask.len() != body.vertex_count() {
        return Err(Error::DimensionMismatch {
            what: "vertex mask",
            expected: body.vertex_count(),
            found: vertex_mask.len(),
        });
    }
    let mut face_mask: Vec<bool> = body.faces.iter().map(|f| f.iter().all(|&v| vertex_mask[v])).collect();
    clean_selection(body, &mut face_mask);
    let (sub, old) = body.submesh(&face_mask);
    if sub.faces.is_empty() {
        return Err(Error::InvalidRegion(format!(
            "garment region for {class} selects no faces"
        )));
    }
    let normals = body.vertex_normals();
    let vertices: Vec<Vec3> = old.iter().map(|&i| body.vertices[i] + normals[i] * offset).collect();
    let indicator = nearest_vertices(&vertices, &body.vertices);
    let uvs = cylindrical_uvs(&vertices);
    let mesh = TriMesh::new(vertices, sub.faces)?.with_uvs(uvs)?;
    Garment::new(class, mesh, indicator)
}

/// Template of one of the built-in classes.
pub fn garment_template(model: &BodyModel, class: &str) -> Result<Garment> {
    let r = class_region(class).ok_or_else(|| Error::InvalidInput(format!("unknown garment class {class}")))?;
    let mask: Vec<bool> = model
        .template
        .vertices
        .iter()
        .map(|p| p.y >= r.y_min && p.y <= r.y_max && p.x.abs() <= r.max_abs_x)
        .collect();
    carve_garment(model, class, &mask, TEMPLATE_OFFSET)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub figure: DressedFigure,
    /// Class name of each worn garment, in layer order.
    pub classes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Wardrobe {
    /// Templates in the order of [`GARMENT_CLASSES`].
    pub templates: Vec<Garment>,
    pub subjects: Vec<Subject>,
}

impl Wardrobe {
    pub fn template(&self, class: &str) -> Option<&Garment> {
        self.templates.iter().find(|g| g.class == class)
    }
}

fn smooth_scalar(field: &mut Vec<f64>, adjacency: &[Vec<usize>], rounds: usize) {
    for _ in 0..rounds {
        let next: Vec<f64> = field
            .iter()
            .zip(adjacency)
            .map(|(&x, nb)| {
                if nb.is_empty() {
                    x
                } else {
                    0.5 * x + 0.5 * nb.iter().map(|&j| field[j]).sum::<f64>() / nb.len() as f64
                }
            })
            .collect();
        *field = next;
    }
}

/// Ground-truth garment displacements on a body of shape `beta`: an outward
/// normal offset with smooth variation, so the garment stays off the skin.
pub fn sample_displacements(model: &BodyModel, garment: &Garment, beta: &[f64], rng: &mut Rng) -> Result<Vec<Vec3>> {
    let region = class_region(&garment.class).map(|r| r.looseness).unwrap_or(0.006);
    let zero = vec![Vec3::ZERO; model.n_joints()];
    let body = model
        .template
        .with_vertices(model.shaped_template(beta, &zero, None)?)?;
    let normals = body.vertex_normals();
    let adjacency = garment.mesh.vertex_adjacency();
    let mut bumps: Vec<f64> = (0..garment.vertex_count()).map(|_| rng.uniform()).collect();
    smooth_scalar(&mut bumps, &adjacency, 15);
    let (lo, hi) = bumps
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let scale = rng.range(0.8, 1.5);
    let rest: Vec<Vec3> = garment
        .indicator
        .iter()
        .zip(&bumps)
        .map(|(&i, &b)| {
            let extra = TEMPLATE_OFFSET + region * scale + 0.003 * (b - lo) / span;
            body.vertices[i] + normals[i] * extra
        })
        .collect();
    garment_displacements(model, garment, &rest, beta)
}

/// Random body parameters: shape in `[-1.5, 1.5]`, a small root turn about
/// the vertical and joint rotations of at most `max_angle` radians. On the
/// 16-joint humanoid, hips and knees stay in ranges that keep the legs apart.
pub fn sample_params(model: &BodyModel, rng: &mut Rng, max_angle: f64) -> BodyParams {
    let mut p = BodyParams::zeros(model);
    for b in p.beta.iter_mut() {
        *b = rng.range(-1.5, 1.5);
    }
    let humanoid = model.n_joints() >= 16;
    for (k, w) in p.theta.iter_mut().enumerate() {
        *w = match k {
            0 => Vec3::new(0.0, rng.range(-0.3, 0.3), 0.0),
            10 | 13 if humanoid => {
                let side = if k == 10 { 1.0 } else { -1.0 };
                Vec3::new(
                    rng.range(-max_angle, max_angle),
                    0.0,
                    side * rng.range(0.0, 0.5 * max_angle),
                )
            }
            11 | 14 if humanoid => Vec3::new(rng.range(0.0, max_angle), 0.0, 0.0),
            _ => rng.vec3_in_cube(1.0).normalized() * rng.range(0.0, max_angle),
        };
        let a = w.norm();
        if a > max_angle {
            *w = *w * (max_angle / a);
        }
    }
    p.trans = Vec3::new(rng.range(-0.1, 0.1), 0.0, rng.range(-0.1, 0.1));
    p
}

/// Templates for all five classes and `subjects` dressed figures, each
/// wearing pants under an upper garment.
pub fn generate_wardrobe(model: &BodyModel, seed: u64, subjects: usize) -> Result<Wardrobe> {
    let templates: Vec<Garment> = GARMENT_CLASSES
        .iter()
        .map(|c| garment_template(model, c))
        .collect::<Result<_>>()?;
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(subjects);
    for s in 0..subjects {
        let params = sample_params(model, &mut rng, 0.35);
        let upper = ["shirt", "t-shirt", "coat"][s % 3];
        let lower = ["short-pants", "long-pants"][(s / 3 + s) % 2];
        let mut figure = DressedFigure::naked(model, &params);
        let mut classes = Vec::new();
        for class in [lower, upper] {
            let g = templates.iter().find(|t| t.class == class).expect("template");
            let d = sample_displacements(model, g, &params.beta, &mut rng)?;
            figure.garments.push(DressedGarment {
                garment: g.clone(),
                displacements: d,
            });
            classes.push(String::from(class));
        }
        out.push(Subject { figure, classes });
    }
    Ok(Wardrobe {
        templates,
        subjects: out,
    })
}

/// Removes the outer `fraction` of each sleeve of a T-pose upper garment,
/// cutting along the vertex ring nearest the requested length. Returns the
/// trimmed mesh and its boundary loops ordered like the garment's loops.
pub fn trim_sleeves(garment: &Garment, vertices: &[Vec3], fraction: f64) -> Result<(TriMesh, Vec<Vec<Vec3>>)> {
    let shoulder = 0.2;
    let reach = vertices.iter().map(|v| v.x.abs()).fold(0.0, f64::max);
    if reach <= shoulder {
        return Err(Error::InvalidInput(format!("{} has no sleeves to trim", garment.class)));
    }
    let want = reach - fraction * (reach - shoulder);
    let mut ring_x: Vec<f64> = vertices.iter().map(|v| v.x.abs()).filter(|&x| x > shoulder).collect();
    ring_x.sort_by(f64::total_cmp);
    let cut = ring_x
        .iter()
        .copied()
        .min_by(|a, b| (a - want).abs().total_cmp(&(b - want).abs()))
        .unwrap_or(want);
    let mesh = garment.mesh.with_vertices(vertices.to_vec())?;
    let mut mask: Vec<bool> = mesh
        .faces
        .iter()
        .map(|f| f.iter().all(|&v| vertices[v].x.abs() <= cut + 1e-9))
        .collect();
    clean_selection(&mesh, &mut mask);
    let (trimmed, _) = mesh.submesh(&mask);
    let trimmed = TriMesh::new(trimmed.vertices, trimmed.faces)?;
    let loops: Vec<Vec<Vec3>> = trimmed
        .boundary_loops()
        .into_iter()
        .map(|l| l.into_iter().map(|i| trimmed.vertices[i]).collect())
        .collect();
    let ordered = order_loops_by_centroid(
        &garment
            .boundary_loops
            .iter()
            .map(|l| l.iter().map(|&i| vertices[i]).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        loops,
    )?;
    Ok((trimmed, ordered))
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().fold(Vec3::ZERO, |a, &p| a + p) / points.len().max(1) as f64
}

/// Reorders `targets` so target `i` is the one whose centroid is nearest
/// reference loop `i`, assigning greedily by increasing distance.
pub fn order_loops_by_centroid(reference: &[Vec<Vec3>], targets: Vec<Vec<Vec3>>) -> Result<Vec<Vec<Vec3>>> {
    if reference.len() != targets.len() {
        return Err(Error::LoopCountMismatch {
            template: reference.len(),
            target: targets.len(),
        });
    }
    let rc: Vec<Vec3> = reference.iter().map(|l| centroid(l)).collect();
    let tc: Vec<Vec3> = targets.iter().map(|l| centroid(l)).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in rc.iter().enumerate() {
        for (j, b) in tc.iter().enumerate() {
            pairs.push((a.distance(*b), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut slot: Vec<Option<usize>> = vec![None; rc.len()];
    let mut used = vec![false; tc.len()];
    for (_, i, j) in pairs {
        if slot[i].is_none() && !used[j] {
            slot[i] = Some(j);
            used[j] = true;
        }
    }
    let mut targets: Vec<Option<Vec<Vec3>>> = targets.into_iter().map(Some).collect();
    Ok(slot
        .into_iter()
        .map(|j| {
            targets[j.expect("complete assignment")]
                .take()
                .expect("each target used once")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::make_synthetic_body;
    use crate::mesh::SurfaceBvh;

    #[test]
    fn templates_have_expected_boundaries() {
        let m = make_synthetic_body(0, 4, 16);
        let expected = [
            ("shirt", 4),
            ("t-shirt", 4),
            ("coat", 5),
            ("short-pants", 3),
            ("long-pants", 3),
        ];
        for (class, loops) in expected {
            let g = garment_template(&m, class).unwrap();
            assert_eq!(g.boundary_loops.len(), loops, "{class}");
            assert_eq!(g.mesh.connected_components().1, 1, "{class}");
            assert!(g.vertex_count() > 100, "{class} has {}", g.vertex_count());
            g.validate_for(&m).unwrap();
        }
    }

    #[test]
    fn templates_sit_outside_the_body() {
        let m = make_synthetic_body(0, 4, 16);
        let bvh = SurfaceBvh::new(&m.template).unwrap();
        for class in GARMENT_CLASSES {
            let g = garment_template(&m, class).unwrap();
            for v in &g.mesh.vertices {
                let c = bvh.closest_point(*v);
                assert!(!c.inside, "{class}");
                assert!(c.distance > 0.001 && c.distance < 0.004, "{class}: {}", c.distance);
            }
        }
    }

    #[test]
    fn wardrobe_is_deterministic() {
        let m = make_synthetic_body(0, 4, 16);
        let a = generate_wardrobe(&m, 5, 3).unwrap();
        let b = generate_wardrobe(&m, 5, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.subjects[0].classes, ["short-pants", "shirt"]);
    }

    #[test]
    fn subject_garments_do_not_penetrate_at_rest() {
        let m = make_synthetic_body(0, 4, 16);
        let w = generate_wardrobe(&m, 1, 3).unwrap();
        for s in &w.subjects {
            let rest = crate::garment::dress_rest(&m, &s.figure).unwrap();
            let bvh = SurfaceBvh::new(&rest.meshes[0]).unwrap();
            for layer in &rest.meshes[1..] {
                assert!(layer.vertices.iter().all(|v| !bvh.closest_point(*v).inside));
            }
        }
    }

    #[test]
    fn sleeve_trim_keeps_loop_order() {
        let m = make_synthetic_body(0, 2, 16);
        let g = garment_template(&m, "shirt").unwrap();
        let (t, loops) = trim_sleeves(&g, &g.mesh.vertices, 0.2).unwrap();
        assert_eq!(loops.len(), 4);
        assert!(t.vertex_count() < g.vertex_count());
        for (l, tl) in g.boundary_loops.iter().zip(&loops) {
            let a = centroid(&l.iter().map(|&i| g.mesh.vertices[i]).collect::<Vec<_>>());
            let b = centroid(tl);
            if a.x.abs() > 0.3 {
                assert!(b.x.abs() < a.x.abs() - 0.05);
                assert!(a.x * b.x > 0.0);
            } else {
                assert!(a.distance(b) < 1e-12);
            }
        }
    }
}
