use drape_core::rng::Rng;
use drape_core::shape_space::fit_pca;
use drape_core::Vec3;
use nalgebra::{DMatrix, SymmetricEigen};

fn samples(seed: u64, count: usize, m: usize) -> Vec<Vec<Vec3>> {
    let mut rng = Rng::new(seed);
    let base: Vec<Vec3> = (0..m).map(|_| rng.vec3_in_cube(1.0)).collect();
    (0..count)
        .map(|_| base.iter().map(|p| *p + rng.vec3_in_cube(0.05)).collect())
        .collect()
}

#[test]
fn spectrum_and_directions_match_covariance_eigendecomposition() {
    let s = samples(11, 10, 12);
    let fit = fit_pca("shirt", &s, 9).unwrap().space;
    let dim = 36;
    let mut x = DMatrix::zeros(s.len(), dim);
    for (i, g) in s.iter().enumerate() {
        for (k, (p, a)) in g.iter().zip(&fit.mean).enumerate() {
            let d = *p - *a;
            for c in 0..3 {
                x[(i, 3 * k + c)] = d[c];
            }
        }
    }
    let cov = x.transpose() * &x;
    let eig = SymmetricEigen::new(cov);
    let mut pairs: Vec<(f64, usize)> = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (c, &(lambda, i)) in pairs.iter().take(9).enumerate() {
        let sigma = fit.singular_values[c];
        assert!((sigma * sigma - lambda).abs() < 1e-10 * lambda.max(1.0), "{c}");
        let v = eig.eigenvectors.column(i);
        let d: f64 = fit.basis[c].iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        assert!((d.abs() - 1.0).abs() < 1e-8, "{c} {d}");
    }
}

#[test]
fn full_rank_reconstructs_training_samples() {
    let s = samples(12, 8, 30);
    let fit = fit_pca("coat", &s, 7).unwrap().space;
    for g in &s {
        let (_, r) = fit.project(g).unwrap();
        assert!(r.iter().all(|v| v.norm() <= 1e-9));
    }
}

#[test]
fn reconstruction_error_does_not_increase_with_components() {
    let s = samples(13, 9, 25);
    let fit = fit_pca("long-pants", &s, 8).unwrap().space;
    let probe = samples(14, 1, 25).pop().unwrap();
    let mut last = f64::INFINITY;
    for n in 0..=8 {
        let (_, r) = fit.truncated(n).project(&probe).unwrap();
        let e: f64 = r.iter().map(|v| v.norm_squared()).sum();
        assert!(e <= last + 1e-15);
        last = e;
    }
}
