//! Linear garment shape spaces fitted on unposed registrations, with a
//! capped high-frequency residual per vertex.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::error::{Error, Result};
use crate::math::{sqrt, Vec3};

pub const DEFAULT_COMPONENTS: usize = 35;
/// Largest allowed norm of a residual row, in meters.
pub const RESIDUAL_CAP: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaShapeSpace {
    pub class: String,
    pub mean: Vec<Vec3>,
    /// Orthonormal columns of length `3 * mean.len()`, flattened x, y, z per vertex.
    pub basis: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub residual_cap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaFit {
    pub space: PcaShapeSpace,
    /// Set when the requested component count was clamped.
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoding {
    pub z: Vec<f64>,
    /// Residual rows after clamping to the cap.
    pub residual: Vec<Vec3>,
    /// Rows whose norm exceeded the cap.
    pub clipped: usize,
}

fn flatten(points: &[Vec3]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Columns of `a` rotated until mutually orthogonal (one-sided Jacobi).
/// Returns the rotated columns; their norms are the singular values.
fn jacobi_orthogonalize(mut cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = cols.len();
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = dot(&cols[i], &cols[i]);
                let beta = dot(&cols[j], &cols[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(j);
                for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                    let (a, b) = (*x, *y);
                    *x = c * a - s * b;
                    *y = s * a + c * b;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    cols
}

/// Orthonormal vector orthogonal to `basis`, taken from the first coordinate
/// axis that is not already spanned.
fn complete(basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    for axis in 0..dim {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        for _ in 0..2 {
            for b in basis {
                let d = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = sqrt(dot(&v, &v));
        if n > 0.5 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
    vec![0.0; dim]
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (k, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = k;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Mean-centered PCA of garment vertex sets sharing one topology.
pub fn fit_pca(class: &str, samples: &[Vec<Vec3>], n_components: usize) -> Result<PcaFit> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "PCA needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let m = samples[0].len();
    if m == 0 {
        return Err(Error::EmptyMesh);
    }
    for s in samples {
        if s.len() != m {
            return Err(Error::TopologyMismatch(format!(
                "sample has {} vertices, expected {m}",
                s.len()
            )));
        }
        if !s.iter().all(|p| p.is_finite()) {
            return Err(Error::NonFinite("PCA sample"));
        }
    }
    let count = samples.len() as f64;
    let mut mean = vec![Vec3::ZERO; m];
    for s in samples {
        mean.iter_mut().zip(s).for_each(|(a, p)| *a += *p);
    }
    mean.iter_mut().for_each(|a| *a = *a / count);

    let mut warning = None;
    let max_c = samples.len() - 1;
    let n_c = if n_components > max_c {
        warning = Some(format!(
            "requested {n_components} components but {} samples support at most {max_c}; using {max_c}",
            samples.len()
        ));
        max_c
    } else {
        n_components
    };

    let centered: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            s.iter()
                .zip(&mean)
                .flat_map(|(p, a)| {
                    let d = *p - *a;
                    [d.x, d.y, d.z]
                })
                .collect()
        })
        .collect();
    let rotated = jacobi_orthogonalize(centered);
    let mut order: Vec<(f64, usize)> = rotated.iter().enumerate().map(|(k, c)| (sqrt(dot(c, c)), k)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    // singular values below this are rounding noise of the centering
    let scale = sqrt(samples.iter().flatten().map(|p| p.norm_squared()).sum::<f64>());
    let floor = 1e-12 * order.first().map_or(0.0, |o| o.0).max(scale);
    let dim = 3 * m;

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_c);
    let mut singular_values = Vec::with_capacity(n_c);
    for &(sigma, k) in order.iter().take(n_c) {
        let mut v = if sigma > floor {
            let mut v: Vec<f64> = rotated[k].iter().map(|x| x / sigma).collect();
            // re-orthogonalize against earlier columns to absorb rounding
            for b in &basis {
                let d = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
            let n = sqrt(dot(&v, &v));
            v.iter_mut().for_each(|x| *x /= n);
            singular_values.push(sigma);
            v
        } else {
            singular_values.push(0.0);
            complete(&basis, dim)
        };
        fix_sign(&mut v);
        basis.push(v);
    }
    Ok(PcaFit {
        space: PcaShapeSpace {
            class: class.into(),
            mean,
            basis,
            singular_values,
            residual_cap: RESIDUAL_CAP,
        },
        warning,
    })
}

impl PcaShapeSpace {
    pub fn n_components(&self) -> usize {
        self.basis.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = 3 * self.mean.len();
        if let Some(c) = self.basis.iter().find(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch {
                what: "shape basis column",
                expected: dim,
                found: c.len(),
            });
        }
        if self.singular_values.len() != self.basis.len() {
            return Err(Error::DimensionMismatch {
                what: "singular values",
                expected: self.basis.len(),
                found: self.singular_values.len(),
            });
        }
        if !(self.residual_cap.is_finite() && self.residual_cap >= 0.0) {
            return Err(Error::InvalidInput(
                "residual cap must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Same space truncated to its first `n` components.
    pub fn truncated(&self, n: usize) -> PcaShapeSpace {
        let n = n.min(self.basis.len());
        PcaShapeSpace {
            class: self.class.clone(),
            mean: self.mean.clone(),
            basis: self.basis[..n].to_vec(),
            singular_values: self.singular_values[..n].to_vec(),
            residual_cap: self.residual_cap,
        }
    }

    fn check_topology(&self, vertices: usize) -> Result<()> {
        if vertices != self.mean.len() {
            return Err(Error::TopologyMismatch(format!(
                "garment has {vertices} vertices, shape space has {}",
                self.mean.len()
            )));
        }
        Ok(())
    }

    /// Projection onto the basis and the residual, uncapped.
    pub fn project(&self, garment: &[Vec3]) -> Result<(Vec<f64>, Vec<Vec3>)> {
        self.check_topology(garment.len())?;
        let diff: Vec<Vec3> = garment.iter().zip(&self.mean).map(|(g, a)| *g - *a).collect();
        let flat = flatten(&diff);
        let z: Vec<f64> = self.basis.iter().map(|b| dot(b, &flat)).collect();
        let recon = self.decode(&z, None)?;
        let residual = garment.iter().zip(&recon).map(|(g, r)| *g - *r).collect();
        Ok((z, residual))
    }

    pub fn encode(&self, garment: &[Vec3]) -> Result<Encoding> {
        let (z, mut residual) = self.project(garment)?;
        let mut clipped = 0;
        for r in residual.iter_mut() {
            let n = r.norm();
            if n > self.residual_cap {
                *r = *r * (self.residual_cap / n);
                clipped += 1;
            }
        }
        Ok(Encoding { z, residual, clipped })
    }

    pub fn decode(&self, z: &[f64], residual: Option<&[Vec3]>) -> Result<Vec<Vec3>> {
        if z.len() != self.basis.len() {
            return Err(Error::DimensionMismatch {
                what: "shape coefficients",
                expected: self.basis.len(),
                found: z.len(),
            });
        }
        let mut out = self.mean.clone();
        for (b, &c) in self.basis.iter().zip(z) {
            if c == 0.0 {
                continue;
            }
            for (p, chunk) in out.iter_mut().zip(b.chunks_exact(3)) {
                *p += Vec3::new(chunk[0], chunk[1], chunk[2]) * c;
            }
        }
        if let Some(r) = residual {
            self.check_topology(r.len())?;
            out.iter_mut().zip(r).for_each(|(p, d)| *p += *d);
        }
        Ok(out)
    }
}
