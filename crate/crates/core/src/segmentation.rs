//! Garment priors from geodesic distance to region boundaries, a Potts MRF
//! over the body vertex graph and label transfer to scans.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mesh::{HeatGeodesics, SurfaceBvh, TriMesh};

pub const SKIN: u32 = 0;
pub const UPPER_CLOTHES: u32 = 1;
pub const PANTS: u32 = 2;
pub const LABEL_NAMES: [&str; 3] = ["skin", "upper-clothes", "pants"];

pub const DEFAULT_KAPPA: f64 = 1.0;
pub const DEFAULT_PRIOR_WEIGHT: f64 = 1.0;
pub const DEFAULT_PAIR_WEIGHT: f64 = 0.5;
/// Scan vertices farther than this from the body are flagged, in meters.
pub const TRANSFER_FLAG_DISTANCE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct GarmentPrior {
    /// Garment label the region belongs to.
    pub label: u32,
    pub region: Vec<bool>,
    /// Cost of labeling a vertex outside the region with `label`.
    pub cost_out: Vec<f64>,
    /// Cost of labeling a vertex inside the region with anything else.
    pub cost_in: Vec<f64>,
}

/// Region vertices with at least one neighbor outside the region.
pub fn region_boundary(mesh: &TriMesh, region: &[bool]) -> Vec<usize> {
    let adj = mesh.vertex_adjacency();
    (0..mesh.vertex_count())
        .filter(|&v| region[v] && adj[v].iter().any(|&u| !region[u]))
        .collect()
}

pub fn build_prior(mesh: &TriMesh, label: u32, region: &[usize], kappa: f64) -> Result<GarmentPrior> {
    build_prior_with(&HeatGeodesics::new(mesh)?, mesh, label, region, kappa)
}

/// [`build_prior`] reusing a prepared geodesic solver for `mesh`.
pub fn build_prior_with(
    geo: &HeatGeodesics,
    mesh: &TriMesh,
    label: u32,
    region: &[usize],
    kappa: f64,
) -> Result<GarmentPrior> {
    let n = mesh.vertex_count();
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Error::InvalidInput("prior scale must be finite and nonnegative".into()));
    }
    if region.is_empty() {
        return Err(Error::InvalidRegion(format!("region for label {label} is empty")));
    }
    let mut mask = vec![false; n];
    for &v in region {
        if v >= n {
            return Err(Error::InvalidRegion(format!("vertex {v} out of range ({n} vertices)")));
        }
        mask[v] = true;
    }
    let boundary = region_boundary(mesh, &mask);
    if boundary.is_empty() {
        return Err(Error::InvalidRegion(format!(
            "region for label {label} has no boundary (covers its whole component)"
        )));
    }
    let dist = geo.distance(&boundary)?;
    let on_boundary: BTreeSet<usize> = boundary.into_iter().collect();
    let mut cost_out = vec![0.0; n];
    let mut cost_in = vec![0.0; n];
    for v in 0..n {
        if on_boundary.contains(&v) {
            continue;
        }
        // vertices on components without a boundary get an unbounded cost
        let d = if dist[v].is_finite() {
            dist[v].max(0.0)
        } else {
            f64::MAX
        };
        let c = if kappa == 0.0 { 0.0 } else { kappa * d };
        if mask[v] {
            cost_in[v] = c;
        } else {
            cost_out[v] = c;
        }
    }
    Ok(GarmentPrior {
        label,
        region: mask,
        cost_out,
        cost_in,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MrfProblem {
    pub edges: Vec<(usize, usize)>,
    pub n_labels: usize,
    /// `unaries[v][l]`.
    pub unaries: Vec<Vec<f64>>,
    pub priors: Vec<GarmentPrior>,
    pub prior_weight: f64,
    pub pair_weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MrfSolution {
    pub labels: Vec<u32>,
    pub energy: f64,
    /// Final energy reached from each initialization, in order all-skin,
    /// unary argmin, prior argmin.
    pub start_energies: Vec<f64>,
}

impl MrfProblem {
    pub fn new(mesh: &TriMesh, unaries: Vec<Vec<f64>>, priors: Vec<GarmentPrior>) -> Self {
        let n_labels = unaries.first().map_or(LABEL_NAMES.len(), |r| r.len());
        MrfProblem {
            edges: mesh.edges(),
            n_labels,
            unaries,
            priors,
            prior_weight: DEFAULT_PRIOR_WEIGHT,
            pair_weight: DEFAULT_PAIR_WEIGHT,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.unaries.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.unaries.len();
        if self.n_labels == 0 {
            return Err(Error::InvalidInput("MRF needs at least one label".into()));
        }
        for (v, row) in self.unaries.iter().enumerate() {
            if row.len() != self.n_labels {
                return Err(Error::DimensionMismatch {
                    what: "unary row",
                    expected: self.n_labels,
                    found: row.len(),
                });
            }
            if row.iter().any(|c| c.is_nan()) {
                return Err(Error::InvalidInput(format!("unary row {v} contains NaN")));
            }
        }
        for &(a, b) in &self.edges {
            if a >= n || b >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({a}, {b}) out of range ({n} vertices)"
                )));
            }
        }
        for p in &self.priors {
            if p.region.len() != n || p.cost_in.len() != n || p.cost_out.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "garment prior",
                    expected: n,
                    found: p.region.len(),
                });
            }
            if p.label as usize >= self.n_labels {
                return Err(Error::InvalidInput(format!(
                    "prior label {} has no unary column",
                    p.label
                )));
            }
        }
        let w = [self.prior_weight, self.pair_weight];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidInput("MRF weights must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Prior cost of giving vertex `v` label `l`, unweighted.
    pub fn prior_cost(&self, v: usize, l: u32) -> f64 {
        self.priors
            .iter()
            .map(|p| if p.label == l { p.cost_out[v] } else { p.cost_in[v] })
            .sum()
    }

    fn local_cost(&self, v: usize, l: u32) -> f64 {
        let mut c = self.unaries[v][l as usize];
        if self.prior_weight != 0.0 {
            c += self.prior_weight * self.prior_cost(v, l);
        }
        c
    }

    pub fn energy(&self, labels: &[u32]) -> f64 {
        let unary: f64 = (0..labels.len()).map(|v| self.local_cost(v, labels[v])).sum();
        let cut = self.edges.iter().filter(|&&(a, b)| labels[a] != labels[b]).count();
        unary + self.pair_weight * cut as f64
    }

    fn argmin(&self, cost: impl Fn(u32) -> f64) -> u32 {
        let mut best = (f64::INFINITY, 0u32);
        for l in 0..self.n_labels as u32 {
            let c = cost(l);
            if c < best.0 {
                best = (c, l);
            }
        }
        best.1
    }

    fn cost_at(&self, adj: &[Vec<usize>], labels: &[u32], v: usize, l: u32) -> f64 {
        let cut = adj[v].iter().filter(|&&u| labels[u] != l).count();
        self.local_cost(v, l) + self.pair_weight * cut as f64
    }

    /// Single-vertex sweeps in index order until no vertex improves.
    fn icm(&self, adj: &[Vec<usize>], labels: &mut [u32]) -> bool {
        let mut any = false;
        loop {
            let mut changed = false;
            for v in 0..labels.len() {
                let current = labels[v];
                let here = self.cost_at(adj, labels, v, current);
                let best = self.argmin(|l| self.cost_at(adj, labels, v, l));
                if best != current && self.cost_at(adj, labels, v, best) < here {
                    labels[v] = best;
                    changed = true;
                }
            }
            if !changed {
                return any;
            }
            any = true;
        }
    }

    /// Best expansion move toward label `alpha`: every vertex either keeps
    /// its label or switches to `alpha`, chosen jointly by a minimum cut.
    fn expand(&self, labels: &mut [u32], alpha: u32) -> bool {
        let n = labels.len();
        let (src, sink) = (n, n + 1);
        let mut net = FlowNetwork::new(n + 2);
        let mut unary: Vec<f64> = (0..n)
            .map(|v| {
                if labels[v] == alpha {
                    0.0
                } else {
                    self.local_cost(v, alpha) - self.local_cost(v, labels[v])
                }
            })
            .collect();
        let w = self.pair_weight;
        for &(u, v) in &self.edges {
            let potts = |a: u32, b: u32| if a == b { 0.0 } else { w };
            let (lu, lv) = (labels[u], labels[v]);
            let e00 = potts(lu, lv);
            let e01 = potts(lu, alpha);
            let e10 = potts(alpha, lv);
            unary[u] += e10 - e00;
            unary[v] -= e10;
            let c = e01 + e10 - e00;
            if c > 0.0 {
                net.add_edge(u, v, c);
            }
        }
        for (v, &a) in unary.iter().enumerate() {
            if labels[v] == alpha {
                // already alpha: keeping and switching are the same label
                net.add_edge(v, sink, f64::INFINITY);
            }
            if a > 0.0 {
                net.add_edge(src, v, a);
            } else if a < 0.0 {
                net.add_edge(v, sink, -a);
            }
        }
        net.max_flow(src, sink);
        let keep = net.source_side(src);
        let before = self.energy(labels);
        let old: Vec<u32> = labels.to_vec();
        for v in 0..n {
            if !keep[v] {
                labels[v] = alpha;
            }
        }
        if self.energy(labels) < before - 1e-12 {
            true
        } else {
            labels.copy_from_slice(&old);
            false
        }
    }

    fn descend(&self, adj: &[Vec<usize>], mut labels: Vec<u32>) -> Vec<u32> {
        self.icm(adj, &mut labels);
        loop {
            let mut moved = false;
            for alpha in 0..self.n_labels as u32 {
                moved |= self.expand(&mut labels, alpha);
            }
            moved |= self.icm(adj, &mut labels);
            if !moved {
                return labels;
            }
        }
    }
}

/// Residual network for Dinic's maximum flow.
struct FlowNetwork {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        FlowNetwork {
            head: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, a: usize, b: usize, c: f64) {
        self.head[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(c);
        self.head[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(0.0);
    }

    fn levels(&self, s: usize) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.head.len()];
        level[s] = 0;
        let mut queue = alloc::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > FLOW_EPS && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level
    }

    fn push(&mut self, u: usize, t: usize, limit: f64, level: &[usize], next: &mut [usize]) -> f64 {
        if u == t {
            return limit;
        }
        while next[u] < self.head[u].len() {
            let e = self.head[u][next[u]];
            let v = self.to[e];
            if self.cap[e] > FLOW_EPS && level[v] == level[u] + 1 {
                let f = self.push(v, t, limit.min(self.cap[e]), level, next);
                if f > 0.0 {
                    self.cap[e] -= f;
                    self.cap[e ^ 1] += f;
                    return f;
                }
            }
            next[u] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) {
        loop {
            let level = self.levels(s);
            if level[t] == usize::MAX {
                return;
            }
            let mut next = vec![0usize; self.head.len()];
            while self.push(s, t, f64::INFINITY, &level, &mut next) > 0.0 {}
        }
    }

    /// Nodes reachable from `s` in the residual network.
    fn source_side(&self, s: usize) -> Vec<bool> {
        self.levels(s).iter().map(|&l| l != usize::MAX).collect()
    }
}

const FLOW_EPS: f64 = 1e-15;

/// Local search from three deterministic starts; the lowest final energy
/// wins, earlier starts on ties. Each start runs iterated conditional modes,
/// then alternates label expansion moves with further sweeps until no move
/// lowers the energy.
pub fn solve_mrf(problem: &MrfProblem) -> Result<MrfSolution> {
    problem.validate()?;
    let n = problem.vertex_count();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &problem.edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let starts = [
        vec![SKIN; n],
        (0..n)
            .map(|v| problem.argmin(|l| problem.unaries[v][l as usize]))
            .collect(),
        (0..n)
            .map(|v| problem.argmin(|l| problem.prior_cost(v, l)))
            .collect::<Vec<u32>>(),
    ];
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut start_energies = Vec::with_capacity(starts.len());
    for s in starts {
        let labels = problem.descend(&adj, s);
        let e = problem.energy(&labels);
        start_energies.push(e);
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, labels));
        }
    }
    let (energy, labels) = best.unwrap_or_default();
    Ok(MrfSolution {
        labels,
        energy,
        start_energies,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelTransfer {
    pub labels: Vec<u32>,
    pub distances: Vec<f64>,
    /// Scan vertices farther than [`TRANSFER_FLAG_DISTANCE`] from the body.
    pub flagged: Vec<usize>,
}

/// Each scan vertex takes the label of the body vertex with the largest
/// barycentric weight at its closest body-surface point.
pub fn transfer_labels(body: &TriMesh, body_labels: &[u32], scan: &TriMesh) -> Result<LabelTransfer> {
    if body_labels.len() != body.vertex_count() {
        return Err(Error::DimensionMismatch {
            what: "body labels",
            expected: body.vertex_count(),
            found: body_labels.len(),
        });
    }
    if scan.vertices.is_empty() {
        return Err(Error::InvalidInput("scan has no vertices".into()));
    }
    let bvh = SurfaceBvh::new(body)?;
    let mut out = LabelTransfer {
        labels: Vec::with_capacity(scan.vertex_count()),
        distances: Vec::with_capacity(scan.vertex_count()),
        flagged: Vec::new(),
    };
    for (i, &p) in scan.vertices.iter().enumerate() {
        let c = bvh.closest_point(p);
        let f = body.faces[c.face];
        let mut best = (f64::INFINITY, f[0]);
        for &v in &f {
            let d = body.vertices[v].distance_squared(c.point);
            if d < best.0 || (d == best.0 && v < best.1) {
                best = (d, v);
            }
        }
        out.labels.push(body_labels[best.1]);
        out.distances.push(c.distance);
        if c.distance > TRANSFER_FLAG_DISTANCE {
            out.flagged.push(i);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::mesh::primitives::{grid, icosphere};
    use crate::rng::Rng;

    #[test]
    fn boundary_vertices_have_zero_cost() {
        let m = icosphere(3, 1.0);
        let region: Vec<usize> = (0..m.vertex_count()).filter(|&v| m.vertices[v].y > 0.2).collect();
        let p = build_prior(&m, 1, &region, 1.0).unwrap();
        let mut mask = vec![false; m.vertex_count()];
        region.iter().for_each(|&v| mask[v] = true);
        for v in region_boundary(&m, &mask) {
            assert_eq!((p.cost_in[v], p.cost_out[v]), (0.0, 0.0));
        }
        for v in 0..m.vertex_count() {
            assert!(p.cost_in[v] >= 0.0 && p.cost_out[v] >= 0.0);
            if mask[v] {
                assert_eq!(p.cost_out[v], 0.0);
            } else {
                assert_eq!(p.cost_in[v], 0.0);
            }
        }
        // farther from the cap means costlier
        let low = (0..m.vertex_count())
            .min_by(|&a, &b| m.vertices[a].y.total_cmp(&m.vertices[b].y))
            .unwrap();
        assert!(p.cost_out[low] > 1.5);
    }

    #[test]
    fn zero_scale_gives_zero_costs() {
        let m = icosphere(2, 1.0);
        let p = build_prior(&m, 2, &[0, 1, 2], 0.0).unwrap();
        assert!(p.cost_in.iter().chain(&p.cost_out).all(|&c| c == 0.0));
    }

    #[test]
    fn whole_mesh_region_is_rejected() {
        let m = icosphere(1, 1.0);
        let all: Vec<usize> = (0..m.vertex_count()).collect();
        assert!(matches!(build_prior(&m, 1, &all, 1.0), Err(Error::InvalidRegion(_))));
        assert!(build_prior(&m, 1, &[], 1.0).is_err());
    }

    #[test]
    fn zero_weights_give_unary_argmin() {
        let m = grid(5, 5, 1.0, 1.0);
        let mut rng = Rng::new(4);
        let unaries: Vec<Vec<f64>> = (0..m.vertex_count())
            .map(|_| (0..3).map(|_| rng.uniform()).collect())
            .collect();
        let mut p = MrfProblem::new(&m, unaries.clone(), Vec::new());
        p.pair_weight = 0.0;
        p.prior_weight = 0.0;
        let s = solve_mrf(&p).unwrap();
        for (v, row) in unaries.iter().enumerate() {
            let best = (0..3).min_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(s.labels[v], best as u32);
        }
    }

    #[test]
    fn prior_dominated_problem_follows_regions() {
        let m = icosphere(2, 1.0);
        let upper: Vec<usize> = (0..m.vertex_count()).filter(|&v| m.vertices[v].y > 0.3).collect();
        let lower: Vec<usize> = (0..m.vertex_count()).filter(|&v| m.vertices[v].y < -0.3).collect();
        let priors = vec![
            build_prior(&m, 1, &upper, 100.0).unwrap(),
            build_prior(&m, 2, &lower, 100.0).unwrap(),
        ];
        let unaries = vec![vec![0.0; 3]; m.vertex_count()];
        let mut p = MrfProblem::new(&m, unaries, priors);
        p.pair_weight = 0.0;
        let s = solve_mrf(&p).unwrap();
        let mut decided = 0;
        for v in 0..m.vertex_count() {
            let c: Vec<f64> = (0..3).map(|l| p.prior_cost(v, l)).collect();
            let expect = if upper.contains(&v) {
                1
            } else if lower.contains(&v) {
                2
            } else {
                0
            };
            assert_eq!(c[expect], 0.0);
            if (0..3).all(|l| l == expect || c[l] > 0.0) {
                assert_eq!(s.labels[v], expect as u32);
                decided += 1;
            }
        }
        assert!(decided > m.vertex_count() / 2);
    }

    #[test]
    fn result_is_no_worse_than_any_start() {
        let m = icosphere(1, 1.0);
        let mut rng = Rng::new(8);
        let unaries: Vec<Vec<f64>> = (0..m.vertex_count())
            .map(|_| (0..3).map(|_| rng.uniform()).collect())
            .collect();
        let s = solve_mrf(&MrfProblem::new(&m, unaries, Vec::new())).unwrap();
        assert!(s.start_energies.iter().all(|&e| s.energy <= e));
    }

    #[test]
    fn transfer_to_identical_and_offset_scans() {
        let m = icosphere(2, 1.0);
        let labels: Vec<u32> = m.vertices.iter().map(|p| if p.y > 0.0 { 1 } else { 0 }).collect();
        let t = transfer_labels(&m, &labels, &m).unwrap();
        assert_eq!(t.labels, labels);
        let normals = m.vertex_normals();
        let off: Vec<Vec3> = m.vertices.iter().zip(&normals).map(|(p, n)| *p + *n * 0.001).collect();
        let scan = m.with_vertices(off).unwrap();
        assert_eq!(transfer_labels(&m, &labels, &scan).unwrap().labels, labels);
        let mut far = m.clone();
        far.vertices[0] = far.vertices[0] * 1.5;
        let t = transfer_labels(&m, &labels, &far).unwrap();
        assert_eq!(t.flagged, vec![0]);
    }
}
