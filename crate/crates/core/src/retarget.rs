//! Moving garments from one dressed body to another, either by reusing the
//! displacement field directly or by re-anchoring each vertex to its nearest
//! body vertex in unposed space.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::body::{BodyModel, BodyParams};
use crate::error::{Error, Result};
use crate::garment::{garment_displacements, pose_garment, unposed_garment_shape, DressedFigure, DressedGarment};
use crate::math::Vec3;
use crate::mesh::SurfaceBvh;
use crate::registration::{interpenetration_energy, INTERP_WEIGHT};
use crate::wardrobe::nearest_vertices;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Naive,
    BodyAware,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::BodyAware => "body-aware",
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        match s {
            "naive" => Some(Strategy::Naive),
            "body-aware" => Some(Strategy::BodyAware),
            _ => None,
        }
    }
}

/// Body the garment moves onto: parameters plus per-vertex skin detail.
#[derive(Clone, Copy, Debug)]
pub struct TargetBody<'a> {
    pub params: &'a BodyParams,
    pub skin: Option<&'a [Vec3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Retargeted {
    pub garment: DressedGarment,
    /// Garment vertices posed on the target.
    pub posed: Vec<Vec3>,
}

fn source_garment(source: &DressedFigure, index: usize) -> Result<&DressedGarment> {
    let dg = source
        .garments
        .get(index)
        .ok_or(Error::GarmentAbsent(index as u32 + 1))?;
    if dg.displacements.len() != dg.garment.vertex_count() {
        return Err(Error::DimensionMismatch {
            what: "garment displacements",
            expected: dg.garment.vertex_count(),
            found: dg.displacements.len(),
        });
    }
    Ok(dg)
}

/// Keeps the source displacements and evaluates them on the target body.
pub fn retarget_naive(
    model: &BodyModel,
    source: &DressedFigure,
    index: usize,
    target_params: &BodyParams,
) -> Result<Retargeted> {
    let dg = source_garment(source, index)?;
    let posed = pose_garment(model, target_params, &dg.displacements, &dg.garment)?;
    Ok(Retargeted {
        garment: dg.clone(),
        posed,
    })
}

/// Zero-pose body surface including skin displacements.
fn unposed_body(model: &BodyModel, beta: &[f64], skin: Option<&[Vec3]>) -> Result<Vec<Vec3>> {
    model.shaped_template(beta, &vec![Vec3::ZERO; model.n_joints()], skin)
}

/// Moves every unposed garment vertex with its nearest source body vertex,
/// `v_t = v_s - S_s[i] + S_t[i]`, then re-extracts displacements against
/// the target shape. Posing keeps the template association.
pub fn retarget_body_aware(
    model: &BodyModel,
    source: &DressedFigure,
    index: usize,
    target: TargetBody<'_>,
) -> Result<Retargeted> {
    let dg = source_garment(source, index)?;
    let zero = vec![Vec3::ZERO; model.n_joints()];
    let unposed = unposed_garment_shape(model, &source.beta, &zero, &dg.displacements, &dg.garment)?;
    let body_s = unposed_body(model, &source.beta, Some(&source.skin_displacements))?;
    let body_t = unposed_body(model, &target.params.beta, target.skin)?;
    let nearest = nearest_vertices(&unposed, &body_s);
    let moved: Vec<Vec3> = unposed
        .iter()
        .zip(&nearest)
        .map(|(&v, &i)| v - body_s[i] + body_t[i])
        .collect();
    let displacements = garment_displacements(model, &dg.garment, &moved, &target.params.beta)?;
    let posed = pose_garment(model, target.params, &displacements, &dg.garment)?;
    Ok(Retargeted {
        garment: DressedGarment {
            garment: dg.garment.clone(),
            displacements,
        },
        posed,
    })
}

pub fn retarget(
    model: &BodyModel,
    source: &DressedFigure,
    index: usize,
    target: TargetBody<'_>,
    strategy: Strategy,
) -> Result<Retargeted> {
    match strategy {
        Strategy::Naive => retarget_naive(model, source, index, target.params),
        Strategy::BodyAware => retarget_body_aware(model, source, index, target),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GarmentDiagnostics {
    pub class: String,
    /// Interpenetration energy against the target body at its first frame.
    pub interpenetration: f64,
    pub inside_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetargetReport {
    pub strategy: Strategy,
    pub garments: Vec<GarmentDiagnostics>,
}

/// Dresses `target` in every garment of `source`. A retargeted garment
/// replaces the target garment of the same class in place; the others are
/// appended in source order. Target garments of other classes stay.
pub fn retarget_pipeline(
    model: &BodyModel,
    source: &DressedFigure,
    target: &DressedFigure,
    strategy: Strategy,
) -> Result<(DressedFigure, RetargetReport)> {
    source.validate(model)?;
    target.validate(model)?;
    let params = target.params(0)?;
    let body = model.posed_mesh(&params, Some(&target.skin_displacements))?;
    let bvh = SurfaceBvh::new(&body)?;
    let tb = TargetBody {
        params: &params,
        skin: Some(&target.skin_displacements),
    };
    let mut out = target.clone();
    let mut report = RetargetReport {
        strategy,
        garments: Vec::new(),
    };
    for index in 0..source.garments.len() {
        let r = retarget(model, source, index, tb, strategy)?;
        let (e, inside) = interpenetration_energy(&r.posed, &bvh, INTERP_WEIGHT);
        report.garments.push(GarmentDiagnostics {
            class: r.garment.garment.class.clone(),
            interpenetration: e,
            inside_count: inside,
        });
        match out
            .garments
            .iter()
            .position(|g| g.garment.class == r.garment.garment.class)
        {
            Some(slot) => out.garments[slot] = r.garment,
            None => out.garments.push(r.garment),
        }
    }
    Ok((out, report))
}
