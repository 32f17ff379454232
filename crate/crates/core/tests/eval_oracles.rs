use drape_core::body::make_synthetic_body;
use drape_core::eval::{rasterize_labels, rasterize_layers, surface_error, Camera};
use drape_core::mesh::bvh::closest_point_on_triangle;
use drape_core::mesh::primitives::icosphere;
use drape_core::mesh::TriMesh;
use drape_core::rng::Rng;
use drape_core::wardrobe::generate_wardrobe;
use drape_core::{Mat3, Vec3};

fn brute_directed(from: &TriMesh, to: &TriMesh) -> f64 {
    let sum: f64 = from
        .vertices
        .iter()
        .map(|&p| {
            (0..to.face_count())
                .map(|f| {
                    let [a, b, c] = to.face_points(f);
                    p.distance(closest_point_on_triangle(p, a, b, c).0)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    sum / from.vertex_count() as f64
}

#[test]
fn surface_error_matches_all_pairs_oracle_and_is_symmetric() {
    let mut rng = Rng::new(3);
    let a = icosphere(2, 1.0);
    let moved: Vec<Vec3> = a.vertices.iter().map(|&p| p * 1.05 + rng.vec3_in_cube(0.02)).collect();
    let b = a.with_vertices(moved).unwrap();
    let e = surface_error(&a, &b).unwrap();
    let oracle = brute_directed(&a, &b) + brute_directed(&b, &a);
    assert!((e - oracle).abs() < 1e-12);
    assert!((e - surface_error(&b, &a).unwrap()).abs() < 1e-15);
}

fn front_camera(w: usize, h: usize) -> Camera {
    let mut cam = Camera::default_for(w, h);
    cam.rotation = Mat3::from_rows([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]);
    cam.translation = cam.rotation.mul_vec(-Vec3::new(0.0, 0.9, 3.0));
    cam
}

#[test]
fn face_order_does_not_change_the_image() {
    let m = make_synthetic_body(0, 4, 16);
    let w = generate_wardrobe(&m, 0, 1).unwrap();
    let fig = &w.subjects[0].figure;
    let cam = front_camera(96, 96);
    let img = rasterize_labels(&m, fig, 0, &cam, 96, 96).unwrap();
    assert!(img.labels.contains(&1) && img.labels.iter().any(|&l| l >= 2));
    let d = drape_core::garment::dress(&m, fig, 0).unwrap();
    let mut rng = Rng::new(5);
    let shuffled: Vec<TriMesh> = d
        .meshes
        .iter()
        .map(|mesh| {
            let mut faces = mesh.faces.clone();
            rng.shuffle(&mut faces);
            TriMesh::new(mesh.vertices.clone(), faces).unwrap()
        })
        .collect();
    let layers: Vec<(u32, &TriMesh)> = shuffled.iter().zip(&d.labels).map(|(m, &l)| (l + 1, m)).collect();
    let again = rasterize_layers(&layers, &cam, 96, 96).unwrap();
    assert_eq!(img.labels, again.labels);
}
