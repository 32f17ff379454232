use drape_core::body::{make_synthetic_body, BodyModel, BodyParams};
use drape_core::garment::{dress, garment_displacements, pose_garment, Garment};
use drape_core::mesh::{graph_laplacian, SurfaceBvh, TriMesh};
use drape_core::registration::*;
use drape_core::rng::Rng;
use drape_core::wardrobe::{garment_template, generate_wardrobe, order_loops_by_centroid, sample_params, trim_sleeves};
use drape_core::Vec3;

fn template_displacements(m: &BodyModel, g: &Garment) -> Vec<Vec3> {
    garment_displacements(m, g, &g.mesh.vertices, &vec![0.0; m.n_betas()]).unwrap()
}

fn scan_with(body: &TriMesh, garment: &TriMesh) -> (TriMesh, Vec<u32>) {
    let scan = TriMesh::stack(&[body, garment]);
    let mut labels = vec![0u32; body.vertex_count()];
    labels.extend(vec![1u32; garment.vertex_count()]);
    (scan, labels)
}

fn monotone(r: &Registration) -> bool {
    r.diagnostics.energies.windows(2).all(|w| w[1].total <= w[0].total)
}

#[test]
fn template_scan_is_a_fixed_point() {
    let m = make_synthetic_body(0, 4, 16);
    let g = garment_template(&m, "shirt").unwrap();
    let fit = sample_params(&m, &mut Rng::new(3), 0.35);
    let d = template_displacements(&m, &g);
    let posed = pose_garment(&m, &fit, &d, &g).unwrap();
    let body = m.posed_mesh(&fit, None).unwrap();
    let (scan, labels) = scan_with(&body, &g.mesh.with_vertices(posed.clone()).unwrap());
    let loops: Vec<Vec<Vec3>> = g
        .boundary_loops
        .iter()
        .map(|l| l.iter().map(|&i| posed[i]).collect())
        .collect();
    let target = RegistrationTarget {
        fit: &fit,
        fit_skin: None,
        mesh: &scan,
        labels: &labels,
        label: 1,
        boundaries: &loops,
    };
    let r = register_garment(&m, &g, target, &RegistrationConfig::default()).unwrap();
    let err = r
        .displacements
        .iter()
        .zip(&d)
        .map(|(a, b)| a.distance(*b))
        .fold(0.0, f64::max);
    assert!(err < 1e-4, "{err}");
    assert!(monotone(&r));
}

#[test]
fn trimmed_sleeves_initialize_close_to_boundaries() {
    let m = make_synthetic_body(0, 4, 16);
    let g = garment_template(&m, "shirt").unwrap();
    let rest = BodyParams::zeros(&m);
    let (trimmed, loops) = trim_sleeves(&g, &g.mesh.vertices, 0.2).unwrap();
    let (scan, labels) = scan_with(&m.template, &trimmed);
    let cfg = RegistrationConfig::default();
    let target = RegistrationTarget {
        fit: &rest,
        fit_skin: None,
        mesh: &scan,
        labels: &labels,
        label: 1,
        boundaries: &loops,
    };
    let r = register_garment(&m, &g, target, &cfg).unwrap();
    assert!(r.diagnostics.init_boundary_residual < 0.005);

    // naive snapping moves matched vertices onto their samples and nothing else
    let corr = match_boundaries(&g.mesh.vertices, &g.boundary_loops, &loops, cfg.boundary_weight).unwrap();
    let mut snap = g.mesh.vertices.clone();
    let mut acc = vec![(Vec3::ZERO, 0usize); snap.len()];
    for (q, &j) in corr.scan_points.iter().zip(&corr.template_indices) {
        acc[j].0 += *q;
        acc[j].1 += 1;
    }
    for (j, (s, c)) in acc.iter().enumerate() {
        if *c > 0 {
            snap[j] = *s / *c as f64;
        }
    }
    let lap = graph_laplacian(&g.mesh);
    let residual = |x: &[Vec3]| {
        let diff: Vec<Vec3> = x.iter().zip(&g.mesh.vertices).map(|(a, b)| *a - *b).collect();
        lap.mul_points(&diff)
            .iter()
            .map(|v| v.norm_squared())
            .sum::<f64>()
            .sqrt()
    };
    assert!(residual(&r.initialized) <= 0.5 * residual(&snap));
    assert!(monotone(&r));
    let bvh = SurfaceBvh::new(&m.template).unwrap();
    assert_eq!(interpenetration_energy(&r.posed, &bvh, INTERP_WEIGHT).1, 0);
}

#[test]
fn wardrobe_subjects_register_without_interpenetration() {
    let m = make_synthetic_body(0, 4, 16);
    let w = generate_wardrobe(&m, 0, 3).unwrap();
    for s in &w.subjects {
        let params = s.figure.params(0).unwrap();
        let dr = dress(&m, &s.figure, 0).unwrap();
        let (scan, labels) = dr.stacked();
        let bvh = SurfaceBvh::new(&dr.meshes[0]).unwrap();
        for (gi, dg) in s.figure.garments.iter().enumerate() {
            let label = gi as u32 + 1;
            let tpl = w.template(&dg.garment.class).unwrap();
            let tposed = pose_garment(&m, &params, &template_displacements(&m, tpl), tpl).unwrap();
            let reference: Vec<Vec<Vec3>> = tpl
                .boundary_loops
                .iter()
                .map(|l| l.iter().map(|&i| tposed[i]).collect())
                .collect();
            let loops = order_loops_by_centroid(&reference, label_boundaries(&scan, &labels, label)).unwrap();
            let target = RegistrationTarget {
                fit: &params,
                fit_skin: None,
                mesh: &scan,
                labels: &labels,
                label,
                boundaries: &loops,
            };
            let r = register_garment(&m, tpl, target, &RegistrationConfig::default()).unwrap();
            assert!(monotone(&r), "{}", dg.garment.class);
            assert_eq!(
                interpenetration_energy(&r.posed, &bvh, INTERP_WEIGHT).1,
                0,
                "{}",
                dg.garment.class
            );
            let err = r
                .displacements
                .iter()
                .zip(&dg.displacements)
                .map(|(a, b)| a.distance(*b))
                .fold(0.0, f64::max);
            assert!(err < 0.05, "{} {err}", dg.garment.class);
        }
    }
}
