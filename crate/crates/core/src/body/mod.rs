//! Parametric body: blend shapes, joint regression and linear blend skinning.
//!
//! The rest-pose surface is
//! `T(beta, theta, D) = T_bar + B_s beta + B_p vec(R(theta) - I) + D`,
//! with the pose feature taken over the non-root joints. Joints regress from
//! the shape-only surface `T(beta, 0, 0)`, so displacements never move the
//! skeleton. Posing blends per-joint rigid transforms with the skinning
//! weights and adds the global translation last.

mod synthetic;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{floor, Affine, Mat3, Vec3};
use crate::mesh::{SparseMatrix, TriMesh};

pub use synthetic::{make_sphere_body, make_synthetic_body, JOINT_NAMES};

const TAU: f64 = core::f64::consts::TAU;

/// Smallest blended-transform determinant accepted when unposing.
pub const MIN_UNPOSE_DET: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct BodyModel {
    pub template: TriMesh,
    /// One displacement field per shape coefficient, meters per unit.
    pub shape_basis: Vec<Vec<Vec3>>,
    /// One displacement field per pose-feature element, `9 * (K - 1)` fields.
    pub pose_basis: Vec<Vec<Vec3>>,
    /// `K x n`.
    pub joint_regressor: SparseMatrix,
    /// `n` rows of `K` weights.
    pub weights: Vec<Vec<f64>>,
    /// Parent of each joint; `None` only for the root, joint 0.
    pub parents: Vec<Option<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BodyParams {
    pub beta: Vec<f64>,
    /// Axis-angle rotation per joint, radians.
    pub theta: Vec<Vec3>,
    pub trans: Vec3,
}

impl BodyParams {
    pub fn zeros(model: &BodyModel) -> Self {
        BodyParams {
            beta: vec![0.0; model.n_betas()],
            theta: vec![Vec3::ZERO; model.n_joints()],
            trans: Vec3::ZERO,
        }
    }

    pub fn with_beta(mut self, beta: Vec<f64>) -> Self {
        self.beta = beta;
        self
    }

    /// Same parameters at zero pose and zero translation.
    pub fn rest(&self) -> Self {
        BodyParams {
            beta: self.beta.clone(),
            theta: vec![Vec3::ZERO; self.theta.len()],
            trans: Vec3::ZERO,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.beta.iter().all(|b| b.is_finite()) && self.theta.iter().all(|t| t.is_finite()) && self.trans.is_finite()
    }

    /// Wraps every axis-angle vector to a magnitude below `2 pi`. The
    /// rotations are unchanged.
    pub fn normalize(&mut self) {
        for w in self.theta.iter_mut() {
            let angle = w.norm();
            if angle >= TAU && angle.is_finite() {
                let wrapped = angle - TAU * floor(angle / TAU);
                *w = *w * (wrapped / angle);
            }
        }
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, found })
    }
}

impl BodyModel {
    /// Assembles and validates a model.
    pub fn new(
        template: TriMesh,
        shape_basis: Vec<Vec<Vec3>>,
        pose_basis: Vec<Vec<Vec3>>,
        joint_regressor: SparseMatrix,
        weights: Vec<Vec<f64>>,
        parents: Vec<Option<usize>>,
    ) -> Result<Self> {
        let model = BodyModel {
            template,
            shape_basis,
            pose_basis,
            joint_regressor,
            weights,
            parents,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertex_count();
        let k = self.parents.len();
        if k == 0 {
            return Err(Error::InvalidInput("body model has no joints".into()));
        }
        self.template.validate()?;
        for field in &self.shape_basis {
            check_len("shape basis field", n, field.len())?;
        }
        check_len("pose basis size", 9 * (k - 1), self.pose_basis.len())?;
        for field in &self.pose_basis {
            check_len("pose basis field", n, field.len())?;
        }
        check_len("joint regressor rows", k, self.joint_regressor.rows())?;
        check_len("joint regressor cols", n, self.joint_regressor.cols())?;
        check_len("weight rows", n, self.weights.len())?;
        for (v, row) in self.weights.iter().enumerate() {
            check_len("weight row", k, row.len())?;
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(alloc::format!(
                    "skinning weights of vertex {v} must be nonnegative and sum to 1 (sum {sum})"
                )));
            }
        }
        if self.parents[0].is_some() {
            return Err(Error::InvalidInput("joint 0 must be the root".into()));
        }
        for (j, p) in self.parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < j => {}
                _ => {
                    return Err(Error::InvalidInput(alloc::format!(
                        "joint {j} needs a parent with a smaller index"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.template.vertex_count()
    }

    pub fn n_betas(&self) -> usize {
        self.shape_basis.len()
    }

    pub fn n_joints(&self) -> usize {
        self.parents.len()
    }

    fn check_params(&self, params: &BodyParams) -> Result<()> {
        check_len("beta", self.n_betas(), params.beta.len())?;
        check_len("theta", self.n_joints(), params.theta.len())?;
        if !params.is_finite() {
            return Err(Error::NonFinite("body parameters"));
        }
        Ok(())
    }

    /// `B_s beta`.
    pub fn shape_offsets(&self, beta: &[f64]) -> Result<Vec<Vec3>> {
        check_len("beta", self.n_betas(), beta.len())?;
        let mut out = vec![Vec3::ZERO; self.vertex_count()];
        for (field, &b) in self.shape_basis.iter().zip(beta) {
            if b != 0.0 {
                for (o, &d) in out.iter_mut().zip(field) {
                    *o += d * b;
                }
            }
        }
        Ok(out)
    }

    /// `vec(R(theta_j) - I)` over joints `1..K`, row-major per joint.
    pub fn pose_feature(&self, theta: &[Vec3]) -> Result<Vec<f64>> {
        check_len("theta", self.n_joints(), theta.len())?;
        let mut feat = Vec::with_capacity(9 * theta.len().saturating_sub(1));
        for &w in &theta[1..] {
            if !w.is_finite() {
                return Err(Error::NonFinite("joint rotation"));
            }
            let r = Mat3::from_axis_angle(w);
            for i in 0..3 {
                for j in 0..3 {
                    feat.push(r.rows[i][j] - if i == j { 1.0 } else { 0.0 });
                }
            }
        }
        Ok(feat)
    }

    /// `B_p vec(R(theta) - I)`.
    pub fn pose_offsets(&self, theta: &[Vec3]) -> Result<Vec<Vec3>> {
        let feat = self.pose_feature(theta)?;
        let mut out = vec![Vec3::ZERO; self.vertex_count()];
        for (field, &f) in self.pose_basis.iter().zip(&feat) {
            if f != 0.0 {
                for (o, &d) in out.iter_mut().zip(field) {
                    *o += d * f;
                }
            }
        }
        Ok(out)
    }

    /// `T_bar + B_s beta + B_p vec(R(theta) - I) + D`.
    pub fn shaped_template(&self, beta: &[f64], theta: &[Vec3], displacements: Option<&[Vec3]>) -> Result<Vec<Vec3>> {
        let shape = self.shape_offsets(beta)?;
        let pose = self.pose_offsets(theta)?;
        if let Some(d) = displacements {
            check_len("displacements", self.vertex_count(), d.len())?;
        }
        Ok((0..self.vertex_count())
            .map(|v| {
                let mut p = self.template.vertices[v] + shape[v] + pose[v];
                if let Some(d) = displacements {
                    p += d[v];
                }
                p
            })
            .collect())
    }

    /// Joint locations regressed from `T(beta, 0, 0)`.
    pub fn joints(&self, beta: &[f64]) -> Result<Vec<Vec3>> {
        let shape = self.shape_offsets(beta)?;
        let rest: Vec<Vec3> = self
            .template
            .vertices
            .iter()
            .zip(&shape)
            .map(|(&t, &s)| t + s)
            .collect();
        Ok(self.joint_regressor.mul_points(&rest))
    }

    /// Per-joint skinning transforms: the world transform of each joint
    /// composed with the translation taking its rest location to the origin.
    /// The global translation is not included.
    pub fn joint_transforms(&self, params: &BodyParams) -> Result<Vec<Affine>> {
        self.check_params(params)?;
        let joints = self.joints(&params.beta)?;
        let mut world: Vec<Affine> = Vec::with_capacity(self.n_joints());
        for (k, &w) in params.theta.iter().enumerate() {
            let rot = Mat3::from_axis_angle(w);
            let g = match self.parents[k] {
                None => Affine::new(rot, joints[k]),
                Some(p) => world[p].compose(&Affine::new(rot, joints[k] - joints[p])),
            };
            world.push(g);
        }
        Ok(world
            .iter()
            .zip(&joints)
            .map(|(g, &j)| Affine::new(g.linear, g.translation - g.linear.mul_vec(j)))
            .collect())
    }

    fn blend(transforms: &[Affine], weights: &[f64], trans: Vec3) -> Affine {
        let mut a = Affine::ZERO;
        for (t, &w) in transforms.iter().zip(weights) {
            if w != 0.0 {
                a.add_scaled(t, w);
            }
        }
        a.translation += trans;
        a
    }

    fn check_weights(&self, weights: &[Vec<f64>], count: usize) -> Result<()> {
        check_len("per-point weights", count, weights.len())?;
        for row in weights {
            check_len("per-point weight row", self.n_joints(), row.len())?;
        }
        Ok(())
    }

    /// Linear blend skinning of arbitrary rest-pose points with their own
    /// weight rows, followed by the global translation.
    pub fn skin_points(&self, params: &BodyParams, rest: &[Vec3], weights: &[Vec<f64>]) -> Result<Vec<Vec3>> {
        self.check_weights(weights, rest.len())?;
        let transforms = self.joint_transforms(params)?;
        Ok(rest
            .iter()
            .zip(weights)
            .map(|(&p, w)| Self::blend(&transforms, w, params.trans).apply(p))
            .collect())
    }

    /// Posed body vertices `W(T(beta, theta, D), J(beta), theta, W) + trans`.
    pub fn pose_mesh(&self, params: &BodyParams, displacements: Option<&[Vec3]>) -> Result<Vec<Vec3>> {
        self.check_params(params)?;
        let rest = self.shaped_template(&params.beta, &params.theta, displacements)?;
        self.skin_points(params, &rest, &self.weights)
    }

    /// Posed body as a mesh sharing the template connectivity.
    pub fn posed_mesh(&self, params: &BodyParams, displacements: Option<&[Vec3]>) -> Result<TriMesh> {
        let v = self.pose_mesh(params, displacements)?;
        self.template.with_vertices(v)
    }

    /// Weight rows gathered through a vertex association.
    pub fn weights_for(&self, indicator: &[usize]) -> Result<Vec<Vec<f64>>> {
        indicator
            .iter()
            .map(|&i| {
                self.weights.get(i).cloned().ok_or_else(|| {
                    Error::InvalidInput(alloc::format!(
                        "associated body vertex {i} out of range ({} vertices)",
                        self.vertex_count()
                    ))
                })
            })
            .collect()
    }

    /// Inverts the blended skinning transform of each posed point. With an
    /// association, the pose blend shape of the associated body vertex is
    /// then removed, giving zero-pose coordinates.
    pub fn unpose_vertices(
        &self,
        params: &BodyParams,
        posed: &[Vec3],
        weights: &[Vec<f64>],
        associated: Option<&[usize]>,
    ) -> Result<Vec<Vec3>> {
        self.check_weights(weights, posed.len())?;
        let transforms = self.joint_transforms(params)?;
        let pose = match associated {
            Some(idx) => {
                check_len("associated vertices", posed.len(), idx.len())?;
                if let Some(&bad) = idx.iter().find(|&&i| i >= self.vertex_count()) {
                    return Err(Error::InvalidInput(alloc::format!(
                        "associated body vertex {bad} out of range ({} vertices)",
                        self.vertex_count()
                    )));
                }
                Some(self.pose_offsets(&params.theta)?)
            }
            None => None,
        };
        let mut out = Vec::with_capacity(posed.len());
        for (i, (&p, w)) in posed.iter().zip(weights).enumerate() {
            let a = Self::blend(&transforms, w, params.trans);
            let det = a.linear.determinant();
            if !(det.abs() > MIN_UNPOSE_DET) {
                return Err(Error::SingularTransform { point: i, det });
            }
            let inv = a.inverse().ok_or(Error::SingularTransform { point: i, det })?;
            let mut x = inv.apply(p);
            if let (Some(pose), Some(idx)) = (&pose, associated) {
                x -= pose[idx[i]];
            }
            out.push(x);
        }
        Ok(out)
    }

    /// Inverse of [`BodyModel::pose_mesh`] for the body's own vertices.
    pub fn unpose_body(&self, params: &BodyParams, posed: &[Vec3]) -> Result<Vec<Vec3>> {
        let idx: Vec<usize> = (0..self.vertex_count()).collect();
        self.unpose_vertices(params, posed, &self.weights, Some(&idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_params(model: &BodyModel, rng: &mut Rng, max_angle: f64) -> BodyParams {
        BodyParams {
            beta: (0..model.n_betas()).map(|_| rng.range(-1.5, 1.5)).collect(),
            theta: (0..model.n_joints())
                .map(|_| {
                    let axis = rng.vec3_in_cube(1.0).normalized();
                    axis * rng.range(0.0, max_angle)
                })
                .collect(),
            trans: rng.vec3_in_cube(0.5),
        }
    }

    #[test]
    fn zero_parameters_give_template_exactly() {
        let m = make_synthetic_body(1, 4, 16);
        let p = BodyParams::zeros(&m);
        assert_eq!(m.shaped_template(&p.beta, &p.theta, None).unwrap(), m.template.vertices);
        for (a, b) in m.pose_mesh(&p, None).unwrap().iter().zip(&m.template.vertices) {
            assert!((*a - *b).norm() < 1e-12);
        }
    }

    #[test]
    fn first_beta_adds_first_shape_field() {
        let m = make_synthetic_body(2, 3, 16);
        let mut beta = vec![0.0; 3];
        beta[0] = 1.0;
        let theta = vec![Vec3::ZERO; 16];
        let v = m.shaped_template(&beta, &theta, None).unwrap();
        for i in 0..m.vertex_count() {
            assert_eq!(v[i], m.template.vertices[i] + m.shape_basis[0][i]);
        }
    }

    #[test]
    fn shaped_template_is_sum_of_terms() {
        let m = make_synthetic_body(3, 5, 16);
        let mut rng = Rng::new(9);
        let p = random_params(&m, &mut rng, 1.0);
        let d: Vec<Vec3> = (0..m.vertex_count()).map(|_| rng.vec3_in_cube(0.01)).collect();
        let got = m.shaped_template(&p.beta, &p.theta, Some(&d)).unwrap();
        // term-by-term with explicit rotation matrices
        let mut feat = Vec::new();
        for w in &p.theta[1..] {
            let r = Mat3::from_axis_angle(*w);
            for i in 0..3 {
                for j in 0..3 {
                    feat.push(r.rows[i][j] - (i == j) as u8 as f64);
                }
            }
        }
        for v in 0..m.vertex_count() {
            let mut s = Vec3::ZERO;
            for (c, b) in p.beta.iter().enumerate() {
                s += m.shape_basis[c][v] * *b;
            }
            let mut q = Vec3::ZERO;
            for (c, f) in feat.iter().enumerate() {
                q += m.pose_basis[c][v] * *f;
            }
            let want = m.template.vertices[v] + s + q + d[v];
            assert!((got[v] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_pose_is_translation() {
        let m = make_synthetic_body(4, 4, 16);
        let mut rng = Rng::new(1);
        let mut p = random_params(&m, &mut rng, 0.0);
        p.theta = vec![Vec3::ZERO; 16];
        let rest = m.shaped_template(&p.beta, &p.theta, None).unwrap();
        let posed = m.pose_mesh(&p, None).unwrap();
        for (a, b) in rest.iter().zip(&posed) {
            assert!((*a + p.trans - *b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_joint_quarter_turn() {
        let template = crate::mesh::primitives::cube(1.0);
        let n = template.vertex_count();
        let reg = SparseMatrix::from_triplets(1, n, &[(0, 0, 1.0)]).unwrap();
        let m = BodyModel::new(template.clone(), vec![], vec![], reg, vec![vec![1.0]; n], vec![None]).unwrap();
        let c = template.vertices[0];
        let p = BodyParams {
            beta: vec![],
            theta: vec![Vec3::new(0.0, 0.0, core::f64::consts::FRAC_PI_2)],
            trans: Vec3::ZERO,
        };
        let posed = m.pose_mesh(&p, None).unwrap();
        for (v, q) in template.vertices.iter().zip(&posed) {
            let r = *v - c;
            let want = c + Vec3::new(-r.y, r.x, r.z);
            assert!((want - *q).norm() < 1e-15);
        }
    }

    #[test]
    fn one_hot_weights_move_rigidly() {
        let mut m = make_synthetic_body(5, 2, 16);
        for row in m.weights.iter_mut() {
            let best = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                .unwrap();
            row.iter_mut()
                .enumerate()
                .for_each(|(k, w)| *w = (k == best) as u8 as f64);
        }
        for f in m.pose_basis.iter_mut() {
            f.iter_mut().for_each(|d| *d = Vec3::ZERO);
        }
        let mut rng = Rng::new(5);
        let p = random_params(&m, &mut rng, 1.0);
        let a = m.joint_transforms(&p).unwrap();
        let rest = m.shaped_template(&p.beta, &p.theta, None).unwrap();
        let posed = m.pose_mesh(&p, None).unwrap();
        for v in 0..m.vertex_count() {
            let k = m.weights[v].iter().position(|&w| w == 1.0).unwrap();
            assert!((a[k].apply(rest[v]) + p.trans - posed[v]).norm() < 1e-12);
        }
        let back = m.unpose_body(&p, &posed).unwrap();
        for (b, r) in back
            .iter()
            .zip(&m.shaped_template(&p.beta, &p.rest().theta, None).unwrap())
        {
            assert!((*b - *r).norm() < 1e-12);
        }
    }

    #[test]
    fn global_rotation_is_equivariant() {
        let m = make_synthetic_body(6, 3, 16);
        let mut rng = Rng::new(6);
        let mut p = random_params(&m, &mut rng, 0.0);
        p.trans = Vec3::ZERO;
        let w = Vec3::new(0.3, -0.8, 0.2);
        let base = m.pose_mesh(&p, None).unwrap();
        let mut q = p.clone();
        q.theta[0] = w;
        let rotated = m.pose_mesh(&q, None).unwrap();
        let r = Mat3::from_axis_angle(w);
        let root = m.joints(&p.beta).unwrap()[0];
        for (b, x) in base.iter().zip(&rotated) {
            let want = root + r.mul_vec(*b - root);
            assert!((want - *x).norm() < 1e-9);
        }
    }

    #[test]
    fn unpose_inverts_pose() {
        let m = make_synthetic_body(7, 4, 16);
        let mut rng = Rng::new(7);
        for _ in 0..5 {
            let p = random_params(&m, &mut rng, core::f64::consts::FRAC_PI_3);
            let d: Vec<Vec3> = (0..m.vertex_count()).map(|_| rng.vec3_in_cube(0.01)).collect();
            let posed = m.pose_mesh(&p, Some(&d)).unwrap();
            let back = m.unpose_body(&p, &posed).unwrap();
            let want = m.shaped_template(&p.beta, &p.rest().theta, Some(&d)).unwrap();
            for (a, b) in back.iter().zip(&want) {
                assert!((*a - *b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn singular_blend_is_reported() {
        let template = crate::mesh::primitives::cube(1.0);
        let n = template.vertex_count();
        let reg = SparseMatrix::from_triplets(2, n, &[(0, 0, 1.0), (1, 7, 1.0)]).unwrap();
        let m = BodyModel::new(
            template,
            vec![],
            vec![vec![Vec3::ZERO; n]; 9],
            reg,
            vec![vec![0.5, 0.5]; n],
            vec![None, Some(0)],
        )
        .unwrap();
        // opposite half turns about z average to a rank-one linear part
        let p = BodyParams {
            beta: vec![],
            theta: vec![Vec3::ZERO, Vec3::new(0.0, 0.0, core::f64::consts::PI)],
            trans: Vec3::ZERO,
        };
        let err = m.unpose_vertices(&p, &[Vec3::ZERO; 3], &vec![vec![0.5, 0.5]; 3], None);
        assert!(matches!(err, Err(Error::SingularTransform { point: 0, .. })));
    }

    #[test]
    fn normalize_wraps_large_angles() {
        let mut p = BodyParams {
            beta: vec![],
            theta: vec![Vec3::new(0.0, 0.0, TAU + 0.5)],
            trans: Vec3::ZERO,
        };
        let before = Mat3::from_axis_angle(p.theta[0]);
        p.normalize();
        assert!((p.theta[0].z - 0.5).abs() < 1e-12);
        let after = Mat3::from_axis_angle(p.theta[0]);
        for i in 0..3 {
            for j in 0..3 {
                assert!((before.rows[i][j] - after.rows[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = make_synthetic_body(0, 2, 16);
        assert!(matches!(
            m.shaped_template(&[0.0], &vec![Vec3::ZERO; 16], None),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
