use drape_core::mesh::primitives::{grid, icosphere};
use drape_core::mesh::TriMesh;
use drape_core::rng::Rng;
use drape_core::segmentation::{build_prior, solve_mrf, MrfProblem};

fn exhaustive(p: &MrfProblem) -> f64 {
    let n = p.vertex_count();
    let mut labels = vec![0u32; n];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(p.energy(&labels));
        let mut k = 0;
        loop {
            if k == n {
                return best;
            }
            labels[k] += 1;
            if labels[k] < 3 {
                break;
            }
            labels[k] = 0;
            k += 1;
        }
    }
}

fn fixtures() -> Vec<TriMesh> {
    vec![
        grid(3, 2, 1.0, 1.0),
        grid(2, 1, 1.0, 1.0),
        icosphere(0, 1.0),
        grid(1, 4, 0.5, 1.0),
    ]
}

#[test]
fn icm_matches_exhaustive_minimum_on_small_fixtures() {
    let mut rng = Rng::new(21);
    let mut misses = Vec::new();
    let mut total = 0;
    for (fi, mesh) in fixtures().iter().enumerate() {
        let n = mesh.vertex_count();
        assert!(n <= 12);
        for trial in 0..25 {
            let unaries: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.range(0.0, 2.0)).collect()).collect();
            let a = rng.below(n);
            let b = (a + 1 + rng.below(n - 1)) % n;
            let priors = vec![
                build_prior(mesh, 1, &[a], 0.5).unwrap(),
                build_prior(mesh, 2, &[b], 0.5).unwrap(),
            ];
            let mut p = MrfProblem::new(mesh, unaries, priors);
            p.pair_weight = rng.range(0.0, 1.0);
            let s = solve_mrf(&p).unwrap();
            let opt = exhaustive(&p);
            total += 1;
            if (s.energy - opt).abs() > 1e-12 {
                misses.push((fi, trial, s.energy, opt));
            }
        }
    }
    println!("{} / {total} misses {:?}", misses.len(), misses);
    assert!(misses.is_empty());
}

#[test]
fn heavy_smoothing_picks_the_best_single_label() {
    let mesh = grid(4, 1, 1.0, 1.0);
    let mut rng = Rng::new(5);
    let n = mesh.vertex_count();
    let unaries: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.uniform()).collect()).collect();
    let totals: Vec<f64> = (0..3).map(|l| unaries.iter().map(|r| r[l]).sum()).collect();
    let winner = (0..3).min_by(|&a, &b| totals[a].total_cmp(&totals[b])).unwrap() as u32;
    let mut p = MrfProblem::new(&mesh, unaries, Vec::new());
    p.pair_weight = 100.0;
    let s = solve_mrf(&p).unwrap();
    assert!(s.labels.iter().all(|&l| l == winner));
    assert!((s.energy - exhaustive(&p)).abs() < 1e-12);
}
