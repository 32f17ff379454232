//! Wavefront OBJ reading and writing (`v`, `vt` and `f` records).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use drape_core::mesh::TriMesh;
use drape_core::{Error, Vec3};

use crate::error::{CliError, CliResult};

/// The index as written and its 0-based position.
fn parse_index(token: &str, count: usize, line: usize) -> Result<Option<(i64, i64)>, String> {
    if token.is_empty() {
        return Ok(None);
    }
    let raw: i64 = token
        .parse()
        .map_err(|_| format!("line {line}: malformed index {token:?}"))?;
    // negative indices count back from the latest record
    Ok(Some((raw, if raw < 0 { count as i64 + raw } else { raw - 1 })))
}

/// Parses OBJ text. Polygons are fan-triangulated; UVs are kept per vertex,
/// taken from the first face corner that names one.
pub fn parse_obj(text: &str) -> Result<TriMesh, String> {
    let mut vertices = Vec::new();
    let mut tex: Vec<[f64; 2]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut corner_uv: Vec<Option<usize>> = Vec::new();
    let mut any_uv = false;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut parts = content.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let nums = |parts: std::str::SplitWhitespace<'_>, want: usize| -> Result<Vec<f64>, String> {
            let v: Vec<f64> = parts
                .take(want)
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| format!("line {line}: malformed number {t:?}"))
                })
                .collect::<Result<_, _>>()?;
            if v.len() < want {
                return Err(format!("line {line}: expected {want} coordinates"));
            }
            Ok(v)
        };
        match tag {
            "v" => {
                let c = nums(parts, 3)?;
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            "vt" => {
                let c = nums(parts, 2)?;
                tex.push([c[0], c[1]]);
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in parts {
                    let mut fields = tok.split('/');
                    let (written, v) = parse_index(fields.next().unwrap_or(""), vertices.len(), line)?
                        .ok_or_else(|| format!("line {line}: face corner {tok:?} has no vertex index"))?;
                    let t = parse_index(fields.next().unwrap_or(""), tex.len(), line)?.map(|(_, t)| t);
                    let face = faces.len();
                    if v < 0 || v as usize >= vertices.len() {
                        let e = Error::IndexOutOfRange {
                            face,
                            index: written,
                            len: vertices.len(),
                        };
                        return Err(format!("line {line}: {e}"));
                    }
                    if let Some(t) = t {
                        if t < 0 || t as usize >= tex.len() {
                            return Err(format!("line {line}: texture index out of range"));
                        }
                    }
                    corners.push((v as usize, t.map(|t| t as usize)));
                }
                if corners.len() < 3 {
                    return Err(format!("line {line}: face needs at least 3 corners"));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    faces.push([tri[0].0, tri[1].0, tri[2].0]);
                    for (v, t) in tri {
                        if corner_uv.len() < vertices.len() {
                            corner_uv.resize(vertices.len(), None);
                        }
                        if let Some(t) = t {
                            any_uv = true;
                            corner_uv[v].get_or_insert(t);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    let mut mesh = TriMesh::new(vertices, faces).map_err(|e| e.to_string())?;
    if any_uv {
        corner_uv.resize(mesh.vertex_count(), None);
        let uvs = corner_uv.iter().map(|t| t.map_or([0.0, 0.0], |t| tex[t])).collect();
        mesh = mesh.with_uvs(uvs).map_err(|e| e.to_string())?;
    }
    Ok(mesh)
}

pub fn format_obj(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(mesh.vertex_count() * 48 + mesh.face_count() * 24);
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    if let Some(uvs) = &mesh.uvs {
        for t in uvs {
            let _ = writeln!(s, "vt {} {}", t[0], t[1]);
        }
        for f in &mesh.faces {
            let _ = writeln!(s, "f {0}/{0} {1}/{1} {2}/{2}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
    } else {
        for f in &mesh.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
    }
    s
}

pub fn load_obj(path: &Path) -> CliResult<TriMesh> {
    let text = fs::read_to_string(path).map_err(|e| CliError::at(path, e))?;
    parse_obj(&text).map_err(|e| CliError::at(path, e))
}

pub fn save_obj(mesh: &TriMesh, path: &Path) -> CliResult<()> {
    crate::formats::write_file(path, format_obj(mesh).as_bytes())
}
