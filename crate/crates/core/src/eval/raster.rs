//! Z-buffered label rasterization through a pinhole camera.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::body::BodyModel;
use crate::error::{Error, Result};
use crate::garment::{dress, DressedFigure};
use crate::math::{ceil, floor, Mat3, Vec3};
use crate::mesh::TriMesh;

/// Points closer than this to the camera plane are not drawn.
const NEAR: f64 = 1e-6;

/// Pinhole camera looking down its +z axis; image `u` grows with camera x,
/// `v` with camera y.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub focal: f64,
    pub principal: [f64; 2],
    /// World-to-camera rotation.
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Camera {
    /// Identity pose with focal length equal to the image height and the
    /// principal point at the image center.
    pub fn default_for(width: usize, height: usize) -> Camera {
        Camera {
            focal: height as f64,
            principal: [width as f64 * 0.5, height as f64 * 0.5],
            rotation: Mat3::IDENTITY,
            translation: Vec3::ZERO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(Error::DegenerateCamera(format!(
                "focal length {} must be positive",
                self.focal
            )));
        }
        if !(self.principal.iter().all(|c| c.is_finite()) && self.translation.is_finite()) {
            return Err(Error::DegenerateCamera("non-finite camera parameters".into()));
        }
        let r = &self.rotation;
        let rtr = r.transpose().mul_mat(r);
        let mut off = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                off = off.max((rtr.rows[i][j] - e).abs());
            }
        }
        if !(off < 1e-6 && r.determinant() > 0.0) {
            return Err(Error::DegenerateCamera(
                "rotation is not a proper orthonormal matrix".into(),
            ));
        }
        Ok(())
    }

    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation.mul_vec(p) + self.translation
    }

    /// `(u, v, depth)` of a camera-space point.
    pub fn project(&self, c: Vec3) -> (f64, f64, f64) {
        (
            self.focal * c.x / c.z + self.principal[0],
            self.focal * c.y / c.z + self.principal[1],
            c.z,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelImage {
    pub width: usize,
    pub height: usize,
    /// Row-major labels: 0 background, 1 skin, `g + 1` for garment `g`.
    pub labels: Vec<u32>,
    pub camera: Camera,
}

impl LabelImage {
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Draws labeled meshes. A pixel takes the label of the nearest surface at
/// its center; equal depths go to the higher label.
pub fn rasterize_layers(
    layers: &[(u32, &TriMesh)],
    camera: &Camera,
    width: usize,
    height: usize,
) -> Result<LabelImage> {
    camera.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::DegenerateCamera(format!("image size {width}x{height}")));
    }
    let mut labels = vec![0u32; width * height];
    let mut depth = vec![f64::INFINITY; width * height];
    for &(label, mesh) in layers {
        let cam: Vec<Vec3> = mesh.vertices.iter().map(|&p| camera.to_camera(p)).collect();
        for f in &mesh.faces {
            let c = [cam[f[0]], cam[f[1]], cam[f[2]]];
            if c.iter().any(|p| !(p.z > NEAR)) {
                continue;
            }
            let s: Vec<(f64, f64, f64)> = c.iter().map(|&p| camera.project(p)).collect();
            let (a, b, d) = ((s[0].0, s[0].1), (s[1].0, s[1].1), (s[2].0, s[2].1));
            let area = edge(a, b, d);
            if area == 0.0 {
                continue;
            }
            let lo_u = s.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi_u = s.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let lo_v = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let hi_v = s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            // pixel i covers [i, i + 1) with its center at i + 0.5
            let x0 = ceil(lo_u - 0.5).max(0.0);
            let x1 = floor(hi_u - 0.5).min(width as f64 - 1.0);
            let y0 = ceil(lo_v - 0.5).max(0.0);
            let y1 = floor(hi_v - 0.5).min(height as f64 - 1.0);
            if x0 > x1 || y0 > y1 {
                continue;
            }
            let inv = [1.0 / s[0].2, 1.0 / s[1].2, 1.0 / s[2].2];
            for y in y0 as usize..=y1 as usize {
                for x in x0 as usize..=x1 as usize {
                    let p = (x as f64 + 0.5, y as f64 + 0.5);
                    let w0 = edge(b, d, p) / area;
                    let w1 = edge(d, a, p) / area;
                    let w2 = edge(a, b, p) / area;
                    if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                        continue;
                    }
                    // screen-space barycentrics interpolate inverse depth
                    let z = 1.0 / (w0 * inv[0] + w1 * inv[1] + w2 * inv[2]);
                    let k = y * width + x;
                    if z < depth[k] || (z == depth[k] && label > labels[k]) {
                        depth[k] = z;
                        labels[k] = label;
                    }
                }
            }
        }
    }
    Ok(LabelImage {
        width,
        height,
        labels,
        camera: camera.clone(),
    })
}

/// Label image of a dressed figure at one frame.
pub fn rasterize_labels(
    model: &BodyModel,
    figure: &DressedFigure,
    frame: usize,
    camera: &Camera,
    width: usize,
    height: usize,
) -> Result<LabelImage> {
    camera.validate()?;
    let d = dress(model, figure, frame)?;
    let layers: Vec<(u32, &TriMesh)> = d.meshes.iter().zip(&d.labels).map(|(m, &l)| (l + 1, m)).collect();
    rasterize_layers(&layers, camera, width, height)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(points: [Vec3; 3]) -> TriMesh {
        TriMesh::new(points.to_vec(), vec![[0, 1, 2]]).unwrap()
    }

    fn quad(z: f64, half: f64) -> TriMesh {
        let v = vec![
            Vec3::new(-half, -half, z),
            Vec3::new(half, -half, z),
            Vec3::new(half, half, z),
            Vec3::new(-half, half, z),
        ];
        TriMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    #[test]
    fn right_triangle_covers_the_analytic_pixel_set() {
        // u = 16 x + 8: x = -0.375 maps to u = 2, x = 0.125 maps to u = 10
        let cam = Camera::default_for(16, 16);
        let t = tri([
            Vec3::new(-0.375, -0.375, 1.0),
            Vec3::new(0.125, -0.375, 1.0),
            Vec3::new(-0.375, 0.125, 1.0),
        ]);
        let img = rasterize_layers(&[(2, &t)], &cam, 16, 16).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
                let inside = u >= 2.0 && v >= 2.0 && u + v <= 12.0;
                assert_eq!(img.get(x, y), if inside { 2 } else { 0 }, "{x} {y}");
            }
        }
    }

    #[test]
    fn nearer_layer_wins_and_ties_go_up() {
        let cam = Camera::default_for(8, 8);
        let skin = quad(2.0, 1.2);
        let coat = quad(1.0, 0.1);
        let img = rasterize_layers(&[(3, &coat), (1, &skin)], &cam, 8, 8).unwrap();
        assert_eq!(img.get(4, 4), 3);
        assert_eq!(img.get(0, 0), 1);
        let same = quad(2.0, 1.2);
        let img = rasterize_layers(&[(2, &same), (1, &skin)], &cam, 8, 8).unwrap();
        assert!(img.labels.iter().all(|&l| l == 2));
    }

    #[test]
    fn empty_scene_and_behind_camera_are_background() {
        let cam = Camera::default_for(4, 4);
        let img = rasterize_layers(&[], &cam, 4, 4).unwrap();
        assert!(img.labels.iter().all(|&l| l == 0));
        let back = quad(-1.0, 1.0);
        let img = rasterize_layers(&[(1, &back)], &cam, 4, 4).unwrap();
        assert!(img.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn degenerate_cameras_are_rejected() {
        let mut cam = Camera::default_for(4, 4);
        cam.focal = 0.0;
        assert!(matches!(
            rasterize_layers(&[], &cam, 4, 4),
            Err(Error::DegenerateCamera(_))
        ));
        let mut cam = Camera::default_for(4, 4);
        cam.rotation = cam.rotation.scaled(2.0);
        assert!(cam.validate().is_err());
        assert!(rasterize_layers(&[], &Camera::default_for(4, 4), 0, 4).is_err());
    }
}
