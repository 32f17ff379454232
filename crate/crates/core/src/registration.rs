//! Garment registration: Laplacian boundary-matching initialization followed
//! by first-order refinement of data, Laplacian, interpenetration and
//! unpose-preservation energies.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::body::{BodyModel, BodyParams};
use crate::error::{Error, Result};
use crate::garment::{garment_displacements, Garment};
use crate::math::{Affine, Vec3};
use crate::mesh::solve::Cholesky;
use crate::mesh::{graph_laplacian, ClosestPoint, SparseMatrix, SurfaceBvh, TriMesh};

/// Weight of the inside branch of the interpenetration distance.
pub const INTERP_WEIGHT: f64 = 25.0;

/// Target boundary samples paired with template vertex ids.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCorrespondence {
    pub scan_points: Vec<Vec3>,
    pub template_indices: Vec<usize>,
    pub weight: f64,
}

impl BoundaryCorrespondence {
    pub fn len(&self) -> usize {
        self.scan_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scan_points.is_empty()
    }

    /// Largest distance between a scan point and its template vertex.
    pub fn max_residual(&self, vertices: &[Vec3]) -> f64 {
        self.scan_points
            .iter()
            .zip(&self.template_indices)
            .map(|(q, &j)| q.distance(vertices[j]))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationConfig {
    pub boundary_weight: f64,
    pub data_weight: f64,
    pub laplacian_weight: f64,
    pub interp_weight: f64,
    pub unpose_weight: f64,
    pub max_iterations: usize,
    /// Relative energy change that ends refinement.
    pub tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            boundary_weight: 10.0,
            data_weight: 1.0,
            laplacian_weight: 0.5,
            interp_weight: INTERP_WEIGHT,
            unpose_weight: 0.1,
            max_iterations: 300,
            tolerance: 1e-6,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.boundary_weight,
            self.data_weight,
            self.laplacian_weight,
            self.interp_weight,
            self.unpose_weight,
            self.tolerance,
            self.armijo,
        ];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidInput(
                "registration weights must be finite and nonnegative".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("registration needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// For each target sample, the nearest vertex of the paired template
/// boundary loop. Loops pair by position in the two lists.
pub fn match_boundaries(
    template_vertices: &[Vec3],
    template_loops: &[Vec<usize>],
    target_loops: &[Vec<Vec3>],
    weight: f64,
) -> Result<BoundaryCorrespondence> {
    if template_loops.len() != target_loops.len() {
        return Err(Error::LoopCountMismatch {
            template: template_loops.len(),
            target: target_loops.len(),
        });
    }
    let mut corr = BoundaryCorrespondence {
        scan_points: Vec::new(),
        template_indices: Vec::new(),
        weight,
    };
    for (tl, target) in template_loops.iter().zip(target_loops) {
        if tl.is_empty() {
            return Err(Error::InvalidInput("empty template boundary loop".into()));
        }
        for &s in target {
            let mut best = (f64::INFINITY, usize::MAX);
            for &j in tl {
                let d = s.distance_squared(template_vertices[j]);
                if d < best.0 || (d == best.0 && j < best.1) {
                    best = (d, j);
                }
            }
            corr.scan_points.push(s);
            corr.template_indices.push(best.1);
        }
    }
    Ok(corr)
}

/// Solves `min ||L G - L G_init||^2 + w^2 ||S G - q||^2` through its normal
/// equations.
pub fn laplacian_init(g_init: &[Vec3], lap: &SparseMatrix, corr: &BoundaryCorrespondence) -> Result<Vec<Vec3>> {
    let m = g_init.len();
    if lap.rows() != m || lap.cols() != m {
        return Err(Error::DimensionMismatch {
            what: "garment Laplacian",
            expected: m,
            found: lap.rows(),
        });
    }
    if corr.is_empty() || corr.weight <= 0.0 {
        return Err(Error::Underconstrained("no boundary constraints".into()));
    }
    if let Some(&j) = corr.template_indices.iter().find(|&&j| j >= m) {
        return Err(Error::InvalidInput(format!(
            "boundary index {j} out of range ({m} vertices)"
        )));
    }
    let w2 = corr.weight * corr.weight;
    let lt = lap.transpose();
    let ltl = lt.matmul(lap);
    let sel: Vec<(usize, usize, f64)> = corr.template_indices.iter().map(|&j| (j, j, w2)).collect();
    let a = ltl.add_scaled(&SparseMatrix::from_triplets(m, m, &sel)?, 1.0);
    let delta = lap.mul_points(g_init);
    let mut rhs = lt.mul_points(&delta);
    for (q, &j) in corr.scan_points.iter().zip(&corr.template_indices) {
        rhs[j] += *q * w2;
    }
    let chol = Cholesky::factor(&a).map_err(|e| match e {
        Error::NotPositiveDefinite(v) => Error::Underconstrained(format!(
            "boundary constraints leave vertex {v} free (a garment component has no constraint)"
        )),
        other => other,
    })?;
    let mut g = chol.solve_points(&rhs);
    let rhs_norm = points_norm(&rhs).max(f64::MIN_POSITIVE);
    for _ in 0..3 {
        let ag = a.mul_points(&g);
        let r: Vec<Vec3> = rhs.iter().zip(&ag).map(|(b, x)| *b - *x).collect();
        if points_norm(&r) <= 1e-12 * rhs_norm {
            break;
        }
        let dx = chol.solve_points(&r);
        g.iter_mut().zip(&dx).for_each(|(x, d)| *x += *d);
    }
    Ok(g)
}

fn points_norm(p: &[Vec3]) -> f64 {
    libm::sqrt(p.iter().map(|v| v.norm_squared()).sum())
}

/// `(sum of piecewise distances, strictly-inside count)`: zero outside,
/// `w |x - y|` inside.
pub fn interpenetration_energy(vertices: &[Vec3], body: &SurfaceBvh, w: f64) -> (f64, usize) {
    let mut e = 0.0;
    let mut count = 0;
    for &x in vertices {
        let c = body.closest_point(x);
        if c.inside {
            e += w * c.distance;
            count += 1;
        }
    }
    (e, count)
}

/// `sum_k (d(v_k, S) - d(v0_k, S0))^2` with unsigned distances.
pub fn unpose_energy(
    garment_now: &[Vec3],
    body_now: &SurfaceBvh,
    garment_unposed: &[Vec3],
    body_unposed: &SurfaceBvh,
) -> Result<f64> {
    if garment_now.len() != garment_unposed.len() {
        return Err(Error::DimensionMismatch {
            what: "unposed garment vertices",
            expected: garment_now.len(),
            found: garment_unposed.len(),
        });
    }
    Ok(garment_now
        .iter()
        .zip(garment_unposed)
        .map(|(&v, &v0)| {
            let d = body_now.distance(v) - body_unposed.distance(v0);
            d * d
        })
        .sum())
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyTerms {
    pub data: f64,
    pub laplacian: f64,
    pub interpenetration: f64,
    pub unpose: f64,
    pub total: f64,
    /// Garment vertices strictly inside the body.
    pub inside: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Relative energy change fell below the tolerance.
    Converged,
    /// No step length gave sufficient decrease.
    LineSearchStalled,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    /// Energies of the initial state followed by one entry per accepted step.
    pub energies: Vec<EnergyTerms>,
    pub termination: Termination,
    /// Largest scan-point to template-vertex distance after initialization.
    pub init_boundary_residual: f64,
    pub boundary_pairs: usize,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Registration {
    /// Registered garment in the pose of the body fit.
    pub posed: Vec<Vec3>,
    /// Registered garment unposed to zero pose.
    pub unposed: Vec<Vec3>,
    pub displacements: Vec<Vec3>,
    /// Laplacian-initialized vertices, before refinement.
    pub initialized: Vec<Vec3>,
    pub diagnostics: Diagnostics,
}

/// Body fit, target surface and the label of the garment to register.
#[derive(Clone, Copy, Debug)]
pub struct RegistrationTarget<'a> {
    pub fit: &'a BodyParams,
    pub fit_skin: Option<&'a [Vec3]>,
    pub mesh: &'a TriMesh,
    pub labels: &'a [u32],
    pub label: u32,
    /// Target boundary loops in the order of the template's loops.
    pub boundaries: &'a [Vec<Vec3>],
}

/// Boundary loops of the faces whose three vertices carry `label`.
pub fn label_boundaries(mesh: &TriMesh, labels: &[u32], label: u32) -> Vec<Vec<Vec3>> {
    let (sub, _) = label_submesh(mesh, labels, label);
    sub.boundary_loops()
        .into_iter()
        .map(|l| l.into_iter().map(|i| sub.vertices[i]).collect())
        .collect()
}

pub(crate) fn label_submesh(mesh: &TriMesh, labels: &[u32], label: u32) -> (TriMesh, Vec<usize>) {
    let mask: Vec<bool> = mesh
        .faces
        .iter()
        .map(|f| f.iter().all(|&i| labels.get(i) == Some(&label)))
        .collect();
    mesh.submesh(&mask)
}

struct Problem<'a> {
    cfg: &'a RegistrationConfig,
    lap: &'a SparseMatrix,
    g_init: &'a [Vec3],
    target: SurfaceBvh,
    body: SurfaceBvh,
    body_rest: SurfaceBvh,
    unpose_maps: Vec<Affine>,
}

/// Closest points found while evaluating the energy, reused for the gradient.
struct Evaluation {
    terms: EnergyTerms,
    lap_residual: Vec<Vec3>,
    unposed: Vec<Vec3>,
    target: Vec<ClosestPoint>,
    body: Vec<ClosestPoint>,
    body_rest: Vec<ClosestPoint>,
}

fn unit(v: Vec3) -> Vec3 {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Vec3::ZERO
    }
}

impl Problem<'_> {
    fn unposed(&self, x: &[Vec3]) -> Vec<Vec3> {
        x.iter().zip(&self.unpose_maps).map(|(&p, a)| a.apply(p)).collect()
    }

    fn evaluate(&self, x: &[Vec3]) -> Evaluation {
        let c = self.cfg;
        let mut t = EnergyTerms::default();
        let diff: Vec<Vec3> = x.iter().zip(self.g_init).map(|(a, b)| *a - *b).collect();
        let lap_residual = self.lap.mul_points(&diff);
        t.laplacian = c.laplacian_weight * lap_residual.iter().map(|v| v.norm_squared()).sum::<f64>();
        let unposed = self.unposed(x);
        let target: Vec<ClosestPoint> = x.iter().map(|&p| self.target.closest_point(p)).collect();
        let body: Vec<ClosestPoint> = x.iter().map(|&p| self.body.closest_point(p)).collect();
        let body_rest: Vec<ClosestPoint> = unposed.iter().map(|&p| self.body_rest.closest_point(p)).collect();
        for k in 0..x.len() {
            t.data += c.data_weight * target[k].distance * target[k].distance;
            if body[k].inside {
                t.interpenetration += c.interp_weight * body[k].distance;
                t.inside += 1;
            }
            let r = body[k].distance - body_rest[k].distance;
            t.unpose += c.unpose_weight * r * r;
        }
        t.total = t.data + t.laplacian + t.interpenetration + t.unpose;
        Evaluation {
            terms: t,
            lap_residual,
            unposed,
            target,
            body,
            body_rest,
        }
    }

    fn gradient(&self, x: &[Vec3], e: &Evaluation) -> Vec<Vec3> {
        let c = self.cfg;
        let ll = self.lap.mul_points(&e.lap_residual);
        (0..x.len())
            .map(|k| {
                let p = x[k];
                let mut g = ll[k] * (2.0 * c.laplacian_weight);
                g += (p - e.target[k].point) * (2.0 * c.data_weight);
                let b = &e.body[k];
                let db = unit(p - b.point);
                if b.inside {
                    g += db * c.interp_weight;
                }
                let b0 = &e.body_rest[k];
                let db0 = self.unpose_maps[k]
                    .linear
                    .transpose()
                    .mul_vec(unit(e.unposed[k] - b0.point));
                g += (db - db0) * (2.0 * c.unpose_weight * (b.distance - b0.distance));
                g
            })
            .collect()
    }
}

/// Full registration of `template` to the target surface: pose the template
/// with the body fit, match boundaries, Laplacian initialization, refinement,
/// then unpose and extract displacements against the fit's shape.
pub fn register_garment(
    model: &BodyModel,
    template: &Garment,
    target: RegistrationTarget<'_>,
    cfg: &RegistrationConfig,
) -> Result<Registration> {
    cfg.validate()?;
    template.validate_for(model)?;
    if target.labels.len() != target.mesh.vertex_count() {
        return Err(Error::DimensionMismatch {
            what: "target labels",
            expected: target.mesh.vertex_count(),
            found: target.labels.len(),
        });
    }
    let fit = target.fit;
    let (target_sub, _) = label_submesh(target.mesh, target.labels, target.label);
    if target_sub.faces.is_empty() {
        return Err(Error::GarmentAbsent(target.label));
    }

    let zero_beta = vec![0.0; model.n_betas()];
    let d_template = garment_displacements(model, template, &template.mesh.vertices, &zero_beta)?;
    let g_init = crate::garment::pose_garment(model, fit, &d_template, template)?;

    let corr = match_boundaries(
        &g_init,
        &template.boundary_loops,
        target.boundaries,
        cfg.boundary_weight,
    )?;
    let lap = graph_laplacian(&template.mesh);
    let initialized = laplacian_init(&g_init, &lap, &corr)?;
    let init_boundary_residual = corr.max_residual(&initialized);

    let transforms = model.joint_transforms(fit)?;
    let weights = model.weights_for(&template.indicator)?;
    let pose_offsets = model.pose_offsets(&fit.theta)?;
    let mut unpose_maps = Vec::with_capacity(weights.len());
    for (k, w) in weights.iter().enumerate() {
        let mut a = Affine::ZERO;
        for (t, &wk) in transforms.iter().zip(w) {
            if wk != 0.0 {
                a.add_scaled(t, wk);
            }
        }
        a.translation += fit.trans;
        let det = a.linear.determinant();
        let inv = a
            .inverse()
            .filter(|_| det.abs() > crate::body::MIN_UNPOSE_DET)
            .ok_or(Error::SingularTransform { point: k, det })?;
        let off = pose_offsets[template.indicator[k]];
        unpose_maps.push(Affine::new(inv.linear, inv.translation - off));
    }

    let body_posed = model.posed_mesh(fit, target.fit_skin)?;
    let zero_theta = vec![Vec3::ZERO; model.n_joints()];
    let body_rest = model
        .template
        .with_vertices(model.shaped_template(&fit.beta, &zero_theta, target.fit_skin)?)?;
    let problem = Problem {
        cfg,
        lap: &lap,
        g_init: &g_init,
        target: SurfaceBvh::new(&target_sub)?,
        body: SurfaceBvh::new(&body_posed)?,
        body_rest: SurfaceBvh::new(&body_rest)?,
        unpose_maps,
    };

    // diagonal scaling of the quadratic terms keeps the Laplacian's stiff
    // modes from dictating the step length
    let lap_diag: Vec<f64> = {
        let mut d = vec![0.0; lap.rows()];
        for (r, _, v) in lap.triplets() {
            d[r] += v * v;
        }
        d
    };
    let precond: Vec<f64> = lap_diag
        .iter()
        .map(|&d| 1.0 / (2.0 * cfg.data_weight + 2.0 * cfg.laplacian_weight * d + 2.0 * cfg.unpose_weight + 1e-12))
        .collect();

    let mut x = initialized.clone();
    let mut eval = problem.evaluate(&x);
    let mut energies = vec![eval.terms];
    let mut step = 1.0;
    let mut termination = Termination::MaxIterations;
    for _ in 0..cfg.max_iterations {
        let e = eval.terms;
        if e.total == 0.0 {
            termination = Termination::Converged;
            break;
        }
        let g = problem.gradient(&x, &eval);
        let dir: Vec<Vec3> = g.iter().zip(&precond).map(|(v, &p)| *v * p).collect();
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a.dot(*b)).sum();
        if !(slope > 0.0) {
            termination = Termination::Converged;
            break;
        }
        let mut accepted = None;
        let mut alpha = step;
        for _ in 0..cfg.max_backtracks {
            let trial: Vec<Vec3> = x.iter().zip(&dir).map(|(p, d)| *p - *d * alpha).collect();
            let te = problem.evaluate(&trial);
            if te.terms.total <= e.total - cfg.armijo * alpha * slope {
                accepted = Some((trial, te));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, te)) = accepted else {
            termination = Termination::LineSearchStalled;
            break;
        };
        let rel = (e.total - te.terms.total) / e.total.max(f64::MIN_POSITIVE);
        x = trial;
        eval = te;
        energies.push(eval.terms);
        step = (alpha * 2.0).min(1.0);
        if rel < cfg.tolerance {
            termination = Termination::Converged;
            break;
        }
    }

    let unposed = eval.unposed;
    let displacements = garment_displacements(model, template, &unposed, &fit.beta)?;
    let warning = match termination {
        Termination::Converged => None,
        Termination::LineSearchStalled => Some(format!(
            "line search stalled after {} steps; relative change had not reached {}",
            energies.len() - 1,
            cfg.tolerance
        )),
        Termination::MaxIterations => Some(format!("not converged after {} iterations", cfg.max_iterations)),
    };
    Ok(Registration {
        posed: x,
        unposed,
        displacements,
        initialized,
        diagnostics: Diagnostics {
            energies,
            termination,
            init_boundary_residual,
            boundary_pairs: corr.len(),
            warning,
        },
    })
}
