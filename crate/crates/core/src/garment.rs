//! Garment templates tied to the body through a per-vertex association, and
//! the dressing function that stacks skin and garment layers.
//!
//! A garment vertex `k` follows body vertex `indicator[k]`: in rest space
//! `G = I T(beta, theta, 0) + D`, and it is posed with that body vertex's
//! skinning weights.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::body::{BodyModel, BodyParams};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mesh::TriMesh;

/// Garment classes of the synthetic wardrobe.
pub const GARMENT_CLASSES: [&str; 5] = ["shirt", "t-shirt", "coat", "short-pants", "long-pants"];

/// Texture reference: an image path and the UV layout it is mapped with.
#[derive(Clone, Debug, PartialEq)]
pub struct Texture {
    pub image: String,
    pub uvs: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Garment {
    pub class: String,
    pub mesh: TriMesh,
    /// Associated body vertex per garment vertex.
    pub indicator: Vec<usize>,
    /// Closed vertex rings of the mesh boundary, in declared order.
    pub boundary_loops: Vec<Vec<usize>>,
    pub texture: Option<Texture>,
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, found })
    }
}

impl Garment {
    /// Garment with boundary loops taken from the mesh.
    pub fn new(class: impl Into<String>, mesh: TriMesh, indicator: Vec<usize>) -> Result<Self> {
        let boundary_loops = mesh.boundary_loops();
        let g = Garment {
            class: class.into(),
            mesh,
            indicator,
            boundary_loops,
            texture: None,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    pub fn validate(&self) -> Result<()> {
        self.mesh.validate()?;
        check_len("indicator", self.vertex_count(), self.indicator.len())?;
        let edges: BTreeSet<(usize, usize)> = self.mesh.edges().into_iter().collect();
        for (li, ring) in self.boundary_loops.iter().enumerate() {
            if ring.len() < 3 {
                return Err(Error::InvalidInput(format!(
                    "boundary loop {li} has fewer than 3 vertices"
                )));
            }
            for k in 0..ring.len() {
                let (a, b) = (ring[k], ring[(k + 1) % ring.len()]);
                if !edges.contains(&(a.min(b), a.max(b))) {
                    return Err(Error::InvalidInput(format!(
                        "boundary loop {li} is not an edge cycle at ({a}, {b})"
                    )));
                }
            }
        }
        if let Some(t) = &self.texture {
            check_len("texture uvs", self.vertex_count(), t.uvs.len())?;
        }
        Ok(())
    }

    /// Checks the association against a body model.
    pub fn validate_for(&self, model: &BodyModel) -> Result<()> {
        self.validate()?;
        let n = model.vertex_count();
        if let Some((k, &i)) = self.indicator.iter().enumerate().find(|(_, &i)| i >= n) {
            return Err(Error::InvalidInput(format!(
                "indicator of garment vertex {k} is {i}, body has {n} vertices"
            )));
        }
        Ok(())
    }

    /// Copy with new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        let mut g = self.clone();
        g.mesh = self.mesh.with_vertices(vertices)?;
        Ok(g)
    }

    fn gather(&self, body: &[Vec3]) -> Vec<Vec3> {
        self.indicator.iter().map(|&i| body[i]).collect()
    }
}

/// `D = G - I T(beta, 0, 0)` for garment vertices in zero-pose space.
pub fn garment_displacements(
    model: &BodyModel,
    garment: &Garment,
    unposed: &[Vec3],
    beta: &[f64],
) -> Result<Vec<Vec3>> {
    garment.validate_for(model)?;
    check_len("garment vertices", garment.vertex_count(), unposed.len())?;
    let zero = vec![Vec3::ZERO; model.n_joints()];
    let body = model.shaped_template(beta, &zero, None)?;
    Ok(unposed.iter().zip(garment.gather(&body)).map(|(&g, b)| g - b).collect())
}

/// `I T(beta, theta, 0) + D`.
pub fn unposed_garment_shape(
    model: &BodyModel,
    beta: &[f64],
    theta: &[Vec3],
    displacements: &[Vec3],
    garment: &Garment,
) -> Result<Vec<Vec3>> {
    garment.validate_for(model)?;
    check_len("garment displacements", garment.vertex_count(), displacements.len())?;
    let body = model.shaped_template(beta, theta, None)?;
    Ok(garment
        .gather(&body)
        .into_iter()
        .zip(displacements)
        .map(|(b, &d)| b + d)
        .collect())
}

/// Skins the unposed garment with the weights of the associated body vertices.
pub fn pose_garment(
    model: &BodyModel,
    params: &BodyParams,
    displacements: &[Vec3],
    garment: &Garment,
) -> Result<Vec<Vec3>> {
    let rest = unposed_garment_shape(model, &params.beta, &params.theta, displacements, garment)?;
    let weights = model.weights_for(&garment.indicator)?;
    model.skin_points(params, &rest, &weights)
}

/// Brings posed garment vertices back to zero-pose space.
pub fn unpose_garment(model: &BodyModel, params: &BodyParams, posed: &[Vec3], garment: &Garment) -> Result<Vec<Vec3>> {
    garment.validate_for(model)?;
    let weights = model.weights_for(&garment.indicator)?;
    model.unpose_vertices(params, posed, &weights, Some(&garment.indicator))
}

/// Copies the texture of `source` onto `target`. Both must share class,
/// faces and UV layout.
pub fn transfer_texture(source: &Garment, target: &Garment) -> Result<Garment> {
    if source.class != target.class {
        return Err(Error::TopologyMismatch(format!(
            "cannot transfer texture from class {} to class {}",
            source.class, target.class
        )));
    }
    if source.mesh.faces != target.mesh.faces || source.vertex_count() != target.vertex_count() {
        return Err(Error::TopologyMismatch("garment face lists differ".into()));
    }
    if source.mesh.uvs != target.mesh.uvs {
        return Err(Error::TopologyMismatch("garment UV layouts differ".into()));
    }
    let mut out = target.clone();
    out.texture = source.texture.clone();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DressedGarment {
    pub garment: Garment,
    pub displacements: Vec<Vec3>,
}

/// Body parameters over one or more frames plus skin and garment
/// displacement fields.
#[derive(Clone, Debug, PartialEq)]
pub struct DressedFigure {
    pub beta: Vec<f64>,
    /// Joint rotations per frame.
    pub poses: Vec<Vec<Vec3>>,
    pub trans: Vec3,
    pub skin_displacements: Vec<Vec3>,
    pub garments: Vec<DressedGarment>,
}

impl DressedFigure {
    /// Undressed single-frame figure.
    pub fn naked(model: &BodyModel, params: &BodyParams) -> Self {
        DressedFigure {
            beta: params.beta.clone(),
            poses: vec![params.theta.clone()],
            trans: params.trans,
            skin_displacements: vec![Vec3::ZERO; model.vertex_count()],
            garments: Vec::new(),
        }
    }

    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }

    pub fn params(&self, frame: usize) -> Result<BodyParams> {
        let theta = self
            .poses
            .get(frame)
            .ok_or_else(|| Error::InvalidInput(format!("frame {frame} out of range ({} frames)", self.poses.len())))?;
        Ok(BodyParams {
            beta: self.beta.clone(),
            theta: theta.clone(),
            trans: self.trans,
        })
    }

    pub fn validate(&self, model: &BodyModel) -> Result<()> {
        if self.poses.is_empty() {
            return Err(Error::InvalidInput("figure has no frames".into()));
        }
        check_len(
            "skin displacements",
            model.vertex_count(),
            self.skin_displacements.len(),
        )?;
        for dg in &self.garments {
            dg.garment.validate_for(model)?;
            check_len(
                "garment displacements",
                dg.garment.vertex_count(),
                dg.displacements.len(),
            )?;
            if dg.displacements.iter().any(|d| !d.is_finite()) {
                return Err(Error::NonFinite("garment displacements"));
            }
        }
        Ok(())
    }
}

/// Posed layers: skin first (label 0), then garments in listed order
/// (labels 1..=L).
#[derive(Clone, Debug, PartialEq)]
pub struct Dressed {
    pub meshes: Vec<TriMesh>,
    pub labels: Vec<u32>,
}

impl Dressed {
    /// Single mesh of all layers with a label per vertex.
    pub fn stacked(&self) -> (TriMesh, Vec<u32>) {
        let parts: Vec<&TriMesh> = self.meshes.iter().collect();
        let labels = self
            .meshes
            .iter()
            .zip(&self.labels)
            .flat_map(|(m, &l)| core::iter::repeat_n(l, m.vertex_count()))
            .collect();
        (TriMesh::stack(&parts), labels)
    }

    /// Mesh of the layer carrying `label`.
    pub fn layer(&self, label: u32) -> Option<&TriMesh> {
        self.labels.iter().position(|&l| l == label).map(|i| &self.meshes[i])
    }
}

/// Evaluates the dressing function at one frame.
pub fn dress(model: &BodyModel, figure: &DressedFigure, frame: usize) -> Result<Dressed> {
    figure.validate(model)?;
    let params = figure.params(frame)?;
    let skin = model.posed_mesh(&params, Some(&figure.skin_displacements))?;
    let mut meshes = vec![skin];
    let mut labels = vec![0];
    for (g, dg) in figure.garments.iter().enumerate() {
        let v = pose_garment(model, &params, &dg.displacements, &dg.garment)?;
        meshes.push(dg.garment.mesh.with_vertices(v)?);
        labels.push(g as u32 + 1);
    }
    Ok(Dressed { meshes, labels })
}

/// Same as [`dress`] at zero pose and zero translation.
pub fn dress_rest(model: &BodyModel, figure: &DressedFigure) -> Result<Dressed> {
    let mut rest = figure.clone();
    rest.poses = vec![vec![Vec3::ZERO; model.n_joints()]];
    rest.trans = Vec3::ZERO;
    dress(model, &rest, 0)
}
