//! JSON, TOML and text formats exchanged by the commands.

use std::fs;
use std::path::{Path, PathBuf};

use drape_core::body::{BodyModel, BodyParams};
use drape_core::eval::Camera;
use drape_core::garment::{DressedFigure, DressedGarment, Garment, Texture};
use drape_core::mesh::{SparseMatrix, TriMesh};
use drape_core::registration::RegistrationConfig;
use drape_core::shape_space::PcaShapeSpace;
use drape_core::{Mat3, Vec3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, Context};
use crate::obj::{load_obj, save_obj};

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::at(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::at(path, e))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::at(path, e))
}

/// Parses JSON, naming the offending field on failure.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        if field == "." {
            CliError::at(path, e.into_inner())
        } else {
            CliError::at(path, format!("field {field}: {}", e.into_inner()))
        }
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::at(path, e))?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    toml::from_str(&read_text(path)?).map_err(|e| CliError::at(path, e))
}

/// `rel` resolved against the directory of `base`.
pub fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new("")).join(p)
    }
}

/// `target` written relative to the directory of `base` when possible.
pub fn relative_to(base: &Path, target: &Path) -> String {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let dir = abs(base).parent().map(Path::to_path_buf).unwrap_or_default();
    let rel = pathdiff::diff_paths(abs(target), dir).unwrap_or_else(|| target.to_path_buf());
    rel.to_string_lossy().replace('\\', "/")
}

fn v3(p: &[f64; 3]) -> Vec3 {
    Vec3::new(p[0], p[1], p[2])
}

fn a3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn points(p: &[[f64; 3]]) -> Vec<Vec3> {
    p.iter().map(v3).collect()
}

fn arrays(p: &[Vec3]) -> Vec<[f64; 3]> {
    p.iter().map(a3).collect()
}

fn mismatch(path: &Path, field: &str, expected: usize, found: usize) -> CliError {
    CliError::at(
        path,
        format!("field {field}: expected {expected} entries, found {found}"),
    )
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshJson {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

/// Body model with dense arrays: `shape_basis` is n x 3 x shape count,
/// `pose_basis` n x 3 x pose-feature count, `joint_regressor` K x n,
/// `weights` n x K and `parents` uses -1 for the root.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyModelJson {
    pub template: MeshJson,
    pub shape_basis: Vec<[Vec<f64>; 3]>,
    pub pose_basis: Vec<[Vec<f64>; 3]>,
    pub joint_regressor: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub parents: Vec<i64>,
}

fn basis_to_json(fields: &[Vec<Vec3>], n: usize) -> Vec<[Vec<f64>; 3]> {
    (0..n)
        .map(|v| {
            let mut row: [Vec<f64>; 3] = Default::default();
            for f in fields {
                for (c, r) in row.iter_mut().enumerate() {
                    r.push(f[v][c]);
                }
            }
            row
        })
        .collect()
}

fn basis_from_json(path: &Path, field: &str, rows: &[[Vec<f64>; 3]], n: usize) -> CliResult<Vec<Vec<Vec3>>> {
    if rows.len() != n {
        return Err(mismatch(path, field, n, rows.len()));
    }
    let count = rows.first().map_or(0, |r| r[0].len());
    let mut out = vec![vec![Vec3::ZERO; n]; count];
    for (v, row) in rows.iter().enumerate() {
        for (c, comp) in row.iter().enumerate() {
            if comp.len() != count {
                return Err(mismatch(path, &format!("{field}[{v}][{c}]"), count, comp.len()));
            }
            for (k, &x) in comp.iter().enumerate() {
                out[k][v][c] = x;
            }
        }
    }
    Ok(out)
}

pub fn body_model_to_json(m: &BodyModel) -> BodyModelJson {
    let n = m.vertex_count();
    let k = m.n_joints();
    let mut reg = vec![vec![0.0; n]; k];
    for (r, c, x) in m.joint_regressor.triplets() {
        reg[r][c] = x;
    }
    BodyModelJson {
        template: MeshJson {
            vertices: arrays(&m.template.vertices),
            faces: m.template.faces.clone(),
        },
        shape_basis: basis_to_json(&m.shape_basis, n),
        pose_basis: basis_to_json(&m.pose_basis, n),
        joint_regressor: reg,
        weights: m.weights.clone(),
        parents: m.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
    }
}

pub fn load_body_model(path: &Path) -> CliResult<BodyModel> {
    let j: BodyModelJson = read_json(path)?;
    let template = TriMesh::new(points(&j.template.vertices), j.template.faces).in_file(path)?;
    let n = template.vertex_count();
    let shape = basis_from_json(path, "shape_basis", &j.shape_basis, n)?;
    let pose = basis_from_json(path, "pose_basis", &j.pose_basis, n)?;
    let k = j.parents.len();
    if j.joint_regressor.len() != k {
        return Err(mismatch(path, "joint_regressor", k, j.joint_regressor.len()));
    }
    let mut trip = Vec::new();
    for (r, row) in j.joint_regressor.iter().enumerate() {
        if row.len() != n {
            return Err(mismatch(path, &format!("joint_regressor[{r}]"), n, row.len()));
        }
        trip.extend(
            row.iter()
                .enumerate()
                .filter(|(_, &x)| x != 0.0)
                .map(|(c, &x)| (r, c, x)),
        );
    }
    let reg = SparseMatrix::from_triplets(k, n, &trip).in_file(path)?;
    let parents = j
        .parents
        .iter()
        .enumerate()
        .map(|(i, &p)| match p {
            -1 => Ok(None),
            p if p >= 0 => Ok(Some(p as usize)),
            _ => Err(CliError::at(
                path,
                format!("field parents[{i}]: {p} is not a joint index or -1"),
            )),
        })
        .collect::<CliResult<_>>()?;
    BodyModel::new(template, shape, pose, reg, j.weights, parents).in_file(path)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyParamsJson {
    pub beta: Vec<f64>,
    pub theta: Vec<[f64; 3]>,
    #[serde(default)]
    pub trans: [f64; 3],
}

pub fn params_to_json(p: &BodyParams) -> BodyParamsJson {
    BodyParamsJson {
        beta: p.beta.clone(),
        theta: arrays(&p.theta),
        trans: a3(&p.trans),
    }
}

pub fn load_params(path: &Path, model: &BodyModel) -> CliResult<BodyParams> {
    let j: BodyParamsJson = read_json(path)?;
    if j.beta.len() != model.n_betas() {
        return Err(mismatch(path, "beta", model.n_betas(), j.beta.len()));
    }
    if j.theta.len() != model.n_joints() {
        return Err(mismatch(path, "theta", model.n_joints(), j.theta.len()));
    }
    let p = BodyParams {
        beta: j.beta,
        theta: points(&j.theta),
        trans: v3(&j.trans),
    };
    if !p.is_finite() {
        return Err(CliError::at(path, "non-finite body parameters"));
    }
    Ok(p)
}

/// Texture image path, optionally with its own UV layout. A bare path uses
/// the UVs of the mesh file.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
pub enum TextureJson {
    Image(String),
    WithUvs { image: String, uvs: Vec<[f64; 2]> },
}

/// Garment file: the mesh lives in an OBJ next to it.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarmentJson {
    pub class: String,
    pub mesh: String,
    pub indicator: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_loops: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture: Option<TextureJson>,
}

pub fn load_garment(path: &Path) -> CliResult<Garment> {
    let j: GarmentJson = read_json(path)?;
    let mesh = load_obj(&resolve(path, &j.mesh))?;
    if j.indicator.len() != mesh.vertex_count() {
        return Err(mismatch(path, "indicator", mesh.vertex_count(), j.indicator.len()));
    }
    let mut g = Garment::new(j.class, mesh, j.indicator).in_file(path)?;
    if let Some(loops) = j.boundary_loops {
        g.boundary_loops = loops;
    }
    g.texture = match j.texture {
        None => None,
        Some(TextureJson::WithUvs { image, uvs }) => Some(Texture { image, uvs }),
        Some(TextureJson::Image(image)) => match g.mesh.uvs.clone() {
            Some(uvs) => Some(Texture { image, uvs }),
            None => return Err(CliError::at(path, "field texture: the mesh has no UVs")),
        },
    };
    g.validate().in_file(path)?;
    Ok(g)
}

/// Writes `<path>` and the mesh as `<path stem>.obj` beside it.
pub fn save_garment(g: &Garment, path: &Path) -> CliResult<()> {
    let obj = path.with_extension("obj");
    save_obj(&g.mesh, &obj)?;
    let j = GarmentJson {
        class: g.class.clone(),
        mesh: relative_to(path, &obj),
        indicator: g.indicator.clone(),
        boundary_loops: Some(g.boundary_loops.clone()),
        texture: g.texture.as_ref().map(|t| {
            if g.mesh.uvs.as_ref() == Some(&t.uvs) {
                TextureJson::Image(t.image.clone())
            } else {
                TextureJson::WithUvs {
                    image: t.image.clone(),
                    uvs: t.uvs.clone(),
                }
            }
        }),
    };
    write_json(path, &j)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureGarmentJson {
    /// Path of a garment file, relative to the figure file.
    pub garment: String,
    pub displacements: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureJson {
    pub beta: Vec<f64>,
    pub poses: Vec<Vec<[f64; 3]>>,
    #[serde(default)]
    pub trans: [f64; 3],
    /// Zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skin_displacements: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub garments: Vec<FigureGarmentJson>,
}

/// A figure together with the files its garments came from.
#[derive(Clone, Debug)]
pub struct FigureFile {
    pub figure: DressedFigure,
    pub garment_paths: Vec<PathBuf>,
}

pub fn load_figure(path: &Path, model: &BodyModel) -> CliResult<FigureFile> {
    let j: FigureJson = read_json(path)?;
    let n = model.vertex_count();
    let skin = match j.skin_displacements {
        Some(s) if s.len() != n => return Err(mismatch(path, "skin_displacements", n, s.len())),
        Some(s) => points(&s),
        None => vec![Vec3::ZERO; n],
    };
    let mut garments = Vec::new();
    let mut garment_paths = Vec::new();
    for (i, fg) in j.garments.iter().enumerate() {
        let gp = resolve(path, &fg.garment);
        let garment = load_garment(&gp)?;
        if fg.displacements.len() != garment.vertex_count() {
            return Err(mismatch(
                path,
                &format!("garments[{i}].displacements"),
                garment.vertex_count(),
                fg.displacements.len(),
            ));
        }
        garments.push(DressedGarment {
            garment,
            displacements: points(&fg.displacements),
        });
        garment_paths.push(gp);
    }
    let figure = DressedFigure {
        beta: j.beta,
        poses: j.poses.iter().map(|p| points(p)).collect(),
        trans: v3(&j.trans),
        skin_displacements: skin,
        garments,
    };
    figure.validate(model).in_file(path)?;
    Ok(FigureFile { figure, garment_paths })
}

pub fn save_figure(f: &FigureFile, path: &Path) -> CliResult<()> {
    let fig = &f.figure;
    let skin = if fig.skin_displacements.iter().all(|d| *d == Vec3::ZERO) {
        None
    } else {
        Some(arrays(&fig.skin_displacements))
    };
    let j = FigureJson {
        beta: fig.beta.clone(),
        poses: fig.poses.iter().map(|p| arrays(p)).collect(),
        trans: a3(&fig.trans),
        skin_displacements: skin,
        garments: fig
            .garments
            .iter()
            .zip(&f.garment_paths)
            .map(|(g, p)| FigureGarmentJson {
                garment: relative_to(path, p),
                displacements: arrays(&g.displacements),
            })
            .collect(),
    };
    write_json(path, &j)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpaceJson {
    pub class: String,
    pub mean: Vec<[f64; 3]>,
    /// Column-major `3m x n_c` matrix.
    pub basis: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub n_c: usize,
    pub residual_cap: f64,
}

pub fn shape_space_to_json(s: &PcaShapeSpace) -> ShapeSpaceJson {
    ShapeSpaceJson {
        class: s.class.clone(),
        mean: arrays(&s.mean),
        basis: s.basis.concat(),
        singular_values: s.singular_values.clone(),
        n_c: s.n_components(),
        residual_cap: s.residual_cap,
    }
}

pub fn load_shape_space(path: &Path) -> CliResult<PcaShapeSpace> {
    let j: ShapeSpaceJson = read_json(path)?;
    let dim = 3 * j.mean.len();
    if j.basis.len() != dim * j.n_c {
        return Err(mismatch(path, "basis", dim * j.n_c, j.basis.len()));
    }
    let s = PcaShapeSpace {
        class: j.class,
        mean: points(&j.mean),
        basis: if dim == 0 {
            Vec::new()
        } else {
            j.basis.chunks(dim).map(<[f64]>::to_vec).collect()
        },
        singular_values: j.singular_values,
        residual_cap: j.residual_cap,
    };
    s.validate().in_file(path)?;
    Ok(s)
}

/// Camera file. Missing intrinsics default to focal = image height and the
/// image center; missing extrinsics to the identity.
#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CameraJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principal: Option<[f64; 2]>,
    /// World-to-camera rotation, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<[f64; 3]>,
}

pub fn camera_from_json(j: &CameraJson, width: usize, height: usize) -> Camera {
    let mut c = Camera::default_for(width, height);
    if let Some(f) = j.focal {
        c.focal = f;
    }
    if let Some(p) = j.principal {
        c.principal = p;
    }
    if let Some(r) = j.rotation {
        c.rotation = Mat3::from_rows(r);
    }
    if let Some(t) = j.translation {
        c.translation = v3(&t);
    }
    c
}

pub fn camera_to_json(c: &Camera) -> CameraJson {
    CameraJson {
        focal: Some(c.focal),
        principal: Some(c.principal),
        rotation: Some(c.rotation.rows),
        translation: Some(a3(&c.translation)),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionJson {
    pub label: u32,
    pub vertices: Vec<usize>,
}

/// Garment regions and solver weights for `segment`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsJson {
    pub regions: Vec<RegionJson>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_prior_weight")]
    pub prior_weight: f64,
    #[serde(default = "default_pair_weight")]
    pub pair_weight: f64,
}

fn default_kappa() -> f64 {
    drape_core::segmentation::DEFAULT_KAPPA
}

fn default_prior_weight() -> f64 {
    drape_core::segmentation::DEFAULT_PRIOR_WEIGHT
}

fn default_pair_weight() -> f64 {
    drape_core::segmentation::DEFAULT_PAIR_WEIGHT
}

/// Registration settings; absent keys keep their defaults.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationToml {
    pub boundary_weight: f64,
    pub data_weight: f64,
    pub laplacian_weight: f64,
    pub interp_weight: f64,
    pub unpose_weight: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for RegistrationToml {
    fn default() -> Self {
        let c = RegistrationConfig::default();
        RegistrationToml {
            boundary_weight: c.boundary_weight,
            data_weight: c.data_weight,
            laplacian_weight: c.laplacian_weight,
            interp_weight: c.interp_weight,
            unpose_weight: c.unpose_weight,
            max_iterations: c.max_iterations,
            tolerance: c.tolerance,
            armijo: c.armijo,
            max_backtracks: c.max_backtracks,
        }
    }
}

impl From<RegistrationToml> for RegistrationConfig {
    fn from(t: RegistrationToml) -> Self {
        RegistrationConfig {
            boundary_weight: t.boundary_weight,
            data_weight: t.data_weight,
            laplacian_weight: t.laplacian_weight,
            interp_weight: t.interp_weight,
            unpose_weight: t.unpose_weight,
            max_iterations: t.max_iterations,
            tolerance: t.tolerance,
            armijo: t.armijo,
            max_backtracks: t.max_backtracks,
        }
    }
}

/// Settings of `gen-wardrobe`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WardrobeToml {
    pub subjects: usize,
    pub betas: usize,
    pub joints: usize,
}

impl Default for WardrobeToml {
    fn default() -> Self {
        WardrobeToml {
            subjects: 4,
            betas: 10,
            joints: 16,
        }
    }
}

/// One integer per line.
pub fn read_labels(path: &Path) -> CliResult<Vec<u32>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| CliError::at(path, format!("line {}: {:?} is not a label", i + 1, l.trim())))
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &[u32]) -> CliResult<()> {
    let mut s = String::with_capacity(labels.len() * 2);
    for l in labels {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    write_file(path, s.as_bytes())
}

/// Whitespace-separated rows of numbers, one row per vertex.
pub fn read_table(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in read_text(path)?.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| CliError::at(path, format!("line {}: {t:?} is not a number", i + 1)))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use drape_core::body::make_synthetic_body;

    #[test]
    fn body_model_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let m = make_synthetic_body(0, 3, 16);
        let p = dir.path().join("body.json");
        write_json(&p, &body_model_to_json(&m)).unwrap();
        let back = load_body_model(&p).unwrap();
        assert_eq!(back.template, m.template);
        assert_eq!(back.shape_basis, m.shape_basis);
        assert_eq!(back.pose_basis, m.pose_basis);
        assert_eq!(back.weights, m.weights);
        assert_eq!(back.parents, m.parents);
        assert_eq!(back.joint_regressor.to_dense(), m.joint_regressor.to_dense());
    }

    #[test]
    fn schema_errors_name_file_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("params.json");
        write_file(&p, br#"{"beta": [0.0], "theta": [[0, 0, "x"]]}"#).unwrap();
        let m = make_synthetic_body(0, 1, 2);
        let e = load_params(&p, &m).unwrap_err().to_string();
        assert!(e.contains("params.json") && e.contains("theta[0]"), "{e}");
    }

    #[test]
    fn texture_may_be_a_bare_path() {
        let dir = tempfile::tempdir().unwrap();
        let m = make_synthetic_body(0, 2, 16);
        let mut g = drape_core::wardrobe::garment_template(&m, "t-shirt").unwrap();
        let uvs: Vec<[f64; 2]> = (0..g.vertex_count()).map(|i| [i as f64 / 1024.0, 0.5]).collect();
        g.mesh.uvs = Some(uvs.clone());
        g.texture = Some(Texture {
            image: "tee.png".into(),
            uvs,
        });
        let p = dir.path().join("tee.json");
        save_garment(&g, &p).unwrap();
        assert!(read_text(&p).unwrap().contains("\"texture\": \"tee.png\""));
        assert_eq!(load_garment(&p).unwrap(), g);
    }

    #[test]
    fn relative_paths_resolve_back() {
        let dir = tempfile::tempdir().unwrap();
        let fig = dir.path().join("a/b/fig.json");
        let g = dir.path().join("t/shirt.json");
        write_file(&fig, b"{}").unwrap();
        write_file(&g, b"{}").unwrap();
        let rel = relative_to(&fig, &g);
        assert_eq!(rel, "../../t/shirt.json");
        assert_eq!(resolve(&fig, &rel).canonicalize().unwrap(), g.canonicalize().unwrap());
    }
}
