//! Surface error, vertex and parameter losses, and label-image comparison.

mod raster;

pub use raster::{rasterize_labels, rasterize_layers, Camera, LabelImage};

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::body::BodyModel;
use crate::error::{Error, Result};
use crate::garment::{dress, dress_rest, Dressed, DressedFigure};
use crate::math::Vec3;
use crate::mesh::{SurfaceBvh, TriMesh};

/// Mean distance from the vertices of `from` to the surface of `to`.
pub fn directed_surface_error(from: &TriMesh, to: &TriMesh) -> Result<f64> {
    if from.vertices.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let bvh = SurfaceBvh::new(to)?;
    let sum: f64 = from.vertices.iter().map(|&p| bvh.distance(p)).sum();
    Ok(sum / from.vertices.len() as f64)
}

/// `mean(pred -> gt) + mean(gt -> pred)` for one pair of surfaces.
pub fn surface_error(pred: &TriMesh, gt: &TriMesh) -> Result<f64> {
    Ok(directed_surface_error(pred, gt)? + directed_surface_error(gt, pred)?)
}

/// Per-garment error averaged over instances. `label` indexes the layers of
/// each [`Dressed`] (skin is 0).
pub fn symmetric_error(pred: &[Dressed], gt: &[Dressed], label: u32) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            what: "evaluation instances",
            expected: gt.len(),
            found: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::InvalidInput("no evaluation instances".into()));
    }
    let mut total = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        let a = p.layer(label).ok_or(Error::GarmentAbsent(label))?;
        let b = g.layer(label).ok_or(Error::GarmentAbsent(label))?;
        total += surface_error(a, b)?;
    }
    Ok(total / gt.len() as f64)
}

/// Error per garment label found in the first ground-truth instance, and
/// their mean. Skin is not evaluated.
pub fn garment_errors(pred: &[Dressed], gt: &[Dressed]) -> Result<(BTreeMap<u32, f64>, f64)> {
    let labels: Vec<u32> = gt
        .first()
        .map_or(Vec::new(), |d| d.labels.iter().copied().filter(|&l| l != 0).collect());
    let mut out = BTreeMap::new();
    for l in labels {
        out.insert(l, symmetric_error(pred, gt, l)?);
    }
    let mean = if out.is_empty() {
        0.0
    } else {
        out.values().sum::<f64>() / out.len() as f64
    };
    Ok((out, mean))
}

fn stacked_vertices(d: &Dressed) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let (m, _) = d.stacked();
    (m.vertices, m.faces)
}

fn squared_difference(a: &Dressed, b: &Dressed) -> Result<f64> {
    let (va, fa) = stacked_vertices(a);
    let (vb, fb) = stacked_vertices(b);
    if va.len() != vb.len() || fa != fb {
        return Err(Error::TopologyMismatch(
            "dressed figures have different topology".into(),
        ));
    }
    Ok(va.iter().zip(&vb).map(|(p, q)| p.distance_squared(*q)).sum())
}

/// Sum of squared vertex differences of the dressed figures at zero pose.
pub fn loss_3d_tpose(model: &BodyModel, pred: &DressedFigure, gt: &DressedFigure) -> Result<f64> {
    squared_difference(&dress_rest(model, pred)?, &dress_rest(model, gt)?)
}

/// Sum over frames of squared vertex differences of the posed figures.
pub fn loss_3d_posed(model: &BodyModel, pred: &DressedFigure, gt: &DressedFigure) -> Result<f64> {
    if pred.frame_count() != gt.frame_count() {
        return Err(Error::DimensionMismatch {
            what: "frames",
            expected: gt.frame_count(),
            found: pred.frame_count(),
        });
    }
    let mut total = 0.0;
    for f in 0..gt.frame_count() {
        total += squared_difference(&dress(model, pred, f)?, &dress(model, gt, f)?)?;
    }
    Ok(total)
}

/// Predicted or reference parameters: per-frame poses, shape and one shape
/// space code per garment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    pub poses: Vec<Vec<Vec3>>,
    pub beta: Vec<f64>,
    pub codes: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntermediateLosses {
    pub pose: f64,
    pub shape: f64,
    pub garment: f64,
}

fn sq_sum(a: &[f64], b: &[f64], what: &'static str) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what,
            expected: b.len(),
            found: a.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Squared differences of axis-angle poses, shape coefficients and garment
/// codes.
pub fn intermediate_losses(pred: &ParameterSet, gt: &ParameterSet) -> Result<IntermediateLosses> {
    let mut out = IntermediateLosses {
        shape: sq_sum(&pred.beta, &gt.beta, "shape coefficients")?,
        ..Default::default()
    };
    if pred.poses.len() != gt.poses.len() {
        return Err(Error::DimensionMismatch {
            what: "frames",
            expected: gt.poses.len(),
            found: pred.poses.len(),
        });
    }
    for (a, b) in pred.poses.iter().zip(&gt.poses) {
        let fa: Vec<f64> = a.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let fb: Vec<f64> = b.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        out.pose += sq_sum(&fa, &fb, "joint rotations")?;
    }
    if pred.codes.len() != gt.codes.len() {
        return Err(Error::DimensionMismatch {
            what: "garment codes",
            expected: gt.codes.len(),
            found: pred.codes.len(),
        });
    }
    for (a, b) in pred.codes.iter().zip(&gt.codes) {
        out.garment += sq_sum(a, b, "garment code")?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationComparison {
    /// Squared difference of one-hot label planes: 2 per mismatched pixel.
    pub loss: f64,
    pub mismatched: usize,
    /// Intersection over union per label present in either image.
    pub iou: BTreeMap<u32, f64>,
}

pub fn segmentation_loss(rendered: &LabelImage, input: &LabelImage) -> Result<SegmentationComparison> {
    if (rendered.width, rendered.height) != (input.width, input.height) {
        return Err(Error::DimensionMismatch {
            what: "label image pixels",
            expected: input.width * input.height,
            found: rendered.width * rendered.height,
        });
    }
    let mut counts: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    let mut mismatched = 0;
    for (&a, &b) in rendered.labels.iter().zip(&input.labels) {
        if a == b {
            counts.entry(a).or_default().0 += 1;
            counts.entry(a).or_default().1 += 1;
        } else {
            mismatched += 1;
            counts.entry(a).or_default().1 += 1;
            counts.entry(b).or_default().1 += 1;
        }
    }
    let iou = counts.into_iter().map(|(l, (i, u))| (l, i as f64 / u as f64)).collect();
    Ok(SegmentationComparison {
        loss: 2.0 * mismatched as f64,
        mismatched,
        iou,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{make_synthetic_body, BodyParams};
    use crate::mesh::primitives::grid;
    use crate::rng::Rng;
    use crate::wardrobe::generate_wardrobe;

    fn plane_at(z: f64) -> TriMesh {
        let g = grid(6, 6, 1.0, 1.0);
        let v = g.vertices.iter().map(|p| Vec3::new(p.x, p.y, z)).collect();
        g.with_vertices(v).unwrap()
    }

    fn dressed(m: TriMesh) -> Dressed {
        Dressed {
            meshes: alloc::vec![plane_at(-1.0), m],
            labels: alloc::vec![0, 1],
        }
    }

    #[test]
    fn parallel_planes_sum_both_directions() {
        let e = symmetric_error(&[dressed(plane_at(0.005))], &[dressed(plane_at(0.0))], 1).unwrap();
        assert!((e - 0.01).abs() < 1e-9);
        let same = symmetric_error(&[dressed(plane_at(0.0))], &[dressed(plane_at(0.0))], 1).unwrap();
        assert_eq!(same, 0.0);
        assert!(matches!(
            symmetric_error(&[dressed(plane_at(0.0))], &[dressed(plane_at(0.0))], 2),
            Err(Error::GarmentAbsent(2))
        ));
    }

    #[test]
    fn vertex_losses() {
        let m = make_synthetic_body(0, 4, 16);
        let w = generate_wardrobe(&m, 0, 1).unwrap();
        let fig = &w.subjects[0].figure;
        assert_eq!(loss_3d_tpose(&m, fig, fig).unwrap(), 0.0);
        assert_eq!(loss_3d_posed(&m, fig, fig).unwrap(), 0.0);
        let mut moved = fig.clone();
        moved.garments[0].displacements[5].x += 0.001;
        assert!((loss_3d_tpose(&m, &moved, fig).unwrap() - 1e-6).abs() < 1e-15);
        let naked = crate::garment::DressedFigure::naked(&m, &BodyParams::zeros(&m));
        assert!(loss_3d_tpose(&m, &naked, fig).is_err());
    }

    #[test]
    fn parameter_losses() {
        let mut rng = Rng::new(1);
        let gt = ParameterSet {
            poses: alloc::vec![(0..4).map(|_| rng.vec3_in_cube(1.0)).collect()],
            beta: alloc::vec![0.1, 0.2],
            codes: alloc::vec![alloc::vec![0.5; 3]],
        };
        assert_eq!(intermediate_losses(&gt, &gt).unwrap(), IntermediateLosses::default());
        let mut p = gt.clone();
        p.beta[1] += 1.0;
        let l = intermediate_losses(&p, &gt).unwrap();
        assert!((l.shape - 1.0).abs() < 1e-15);
        assert_eq!((l.pose, l.garment), (0.0, 0.0));
    }

    fn image(labels: Vec<u32>, w: usize) -> LabelImage {
        LabelImage {
            width: w,
            height: labels.len() / w,
            labels,
            camera: Camera::default_for(w, 1),
        }
    }

    #[test]
    fn segmentation_loss_counts_mismatches() {
        let a = image(alloc::vec![0, 1, 2, 1], 2);
        assert_eq!(segmentation_loss(&a, &a).unwrap().loss, 0.0);
        let b = image(alloc::vec![0, 1, 2, 2], 2);
        let c = segmentation_loss(&a, &b).unwrap();
        assert_eq!(c.loss, 2.0);
        assert_eq!(c.iou[&1], 0.5);
        assert_eq!(c.iou[&2], 0.5);
        let checker: Vec<u32> = (0..16).map(|i| ((i % 4 + i / 4) % 2) as u32).collect();
        let inverse: Vec<u32> = checker.iter().map(|l| 1 - l).collect();
        assert_eq!(
            segmentation_loss(&image(checker, 4), &image(inverse, 4)).unwrap().loss,
            32.0
        );
    }
}
