//! Plain-text file formats: OBJ meshes, headerless CSV matrices, edge lists,
//! part files, solver traces and model directories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::VertexGraph;
use crate::shape::{devectorize, vectorize, DeformationModel};
use crate::solver::SolverTrace;

/// Version written to every JSON file produced by this crate.
pub const FORMAT_VERSION: u32 = 1;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_f64(tok: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("not a number: {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

fn parse_usize(tok: &str, path: &Path, line: usize) -> Result<usize> {
    tok.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("not an index: {tok:?}")))
}

/// `%.9g`-style formatting: nine significant digits, trailing zeros removed.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        return format!("{m}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parses the `v` and `f` lines of an OBJ file. Polygons are fan-triangulated;
/// texture and normal indices (`f 1/2/3`) are ignored.
pub fn parse_obj(text: &str, path: &Path) -> Result<(DMatrix<f64>, Vec<[usize; 3]>)> {
    let mut coords = Vec::new();
    let mut raw_faces: Vec<(usize, Vec<usize>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let ln = idx + 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let xyz: Vec<f64> = toks.take(3).map(|t| parse_f64(t, path, ln)).collect::<Result<_>>()?;
                if xyz.len() != 3 {
                    return Err(parse_err(path, ln, "vertex needs three coordinates"));
                }
                coords.push([xyz[0], xyz[1], xyz[2]]);
            }
            Some("f") => {
                let ids: Vec<usize> = toks
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let i = parse_usize(first, path, ln)?;
                        if i == 0 {
                            return Err(parse_err(path, ln, "face indices are 1-based"));
                        }
                        Ok(i - 1)
                    })
                    .collect::<Result<_>>()?;
                if ids.len() < 3 {
                    return Err(parse_err(path, ln, "face needs at least three vertices"));
                }
                raw_faces.push((ln, ids));
            }
            _ => {}
        }
    }
    let n = coords.len();
    let mut faces = Vec::new();
    for (ln, ids) in raw_faces {
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(parse_err(path, ln, format!("vertex {} out of range", bad + 1)));
        }
        for w in 1..ids.len() - 1 {
            faces.push([ids[0], ids[w], ids[w + 1]]);
        }
    }
    let v = DMatrix::from_fn(n, 3, |i, d| coords[i][d]);
    Ok((v, faces))
}

pub fn read_obj(path: &Path) -> Result<(DMatrix<f64>, Vec<[usize; 3]>)> {
    parse_obj(&read_text(path)?, path)
}

/// OBJ text with nine significant digits per coordinate.
pub fn format_obj(vertices: &DMatrix<f64>, faces: &[[usize; 3]]) -> String {
    let mut s = String::new();
    for r in vertices.row_iter() {
        let _ = writeln!(
            s,
            "v {} {} {}",
            format_significant(r[0], 9),
            format_significant(r[1], 9),
            format_significant(r[2], 9)
        );
    }
    for f in faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

pub fn write_obj(path: &Path, vertices: &DMatrix<f64>, faces: &[[usize; 3]]) -> Result<()> {
    write_text(path, &format_obj(vertices, faces))
}

/// Headerless CSV, one matrix row per line. Values use the shortest
/// representation that parses back to the same number.
pub fn format_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for r in m.row_iter() {
        let mut first = true;
        for v in r.iter() {
            if !first {
                s.push(',');
            }
            first = false;
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_matrix_csv(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| parse_f64(t, path, idx + 1))
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    idx + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix_csv(&read_text(path)?, path)
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_text(path, &format_matrix_csv(m))
}

pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix_csv(path)?;
    if m.ncols() != 1 {
        return Err(parse_err(path, 1, "expected a single column"));
    }
    Ok(m.column(0).into_owned())
}

pub fn write_vector_csv(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_matrix_csv(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

/// `i,j,weight` with a header line and 0-based vertex indices.
pub fn format_edges_csv(graph: &VertexGraph) -> String {
    let mut s = String::from("i,j,weight\n");
    for (&(i, j), w) in graph.edges().iter().zip(graph.weights()) {
        let _ = writeln!(s, "{i},{j},{w}");
    }
    s
}

pub fn write_edges_csv(path: &Path, graph: &VertexGraph) -> Result<()> {
    write_text(path, &format_edges_csv(graph))
}

/// Reads an edge list; the header line is optional.
pub fn read_edges_csv(path: &Path, vertex_count: usize) -> Result<VertexGraph> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with('i')) {
            continue;
        }
        let t: Vec<&str> = line.split(',').collect();
        if t.len() != 3 {
            return Err(parse_err(path, idx + 1, "expected i,j,weight"));
        }
        edges.push((parse_usize(t[0], path, idx + 1)?, parse_usize(t[1], path, idx + 1)?));
        weights.push(parse_f64(t[2], path, idx + 1)?);
    }
    VertexGraph::new(vertex_count, edges, weights)
}

/// One part per line, space-separated 0-based vertex indices.
pub fn read_parts(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, l)| l.split_whitespace().map(|t| parse_usize(t, path, idx + 1)).collect())
        .collect()
}

pub fn format_trace_csv(trace: &SolverTrace) -> String {
    let mut s = String::from("iteration,objective,sparsity,seconds\n");
    for (i, ((o, sp), t)) in trace
        .objectives
        .iter()
        .zip(&trace.sparsity)
        .zip(&trace.seconds)
        .enumerate()
    {
        let _ = writeln!(s, "{i},{o},{sp},{t}");
    }
    s
}

/// Metadata stored next to the model matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelInfo {
    pub format_version: u32,
    pub vertex_count: usize,
    pub shape_count: usize,
    pub factor_count: usize,
    pub scale: f64,
    pub method: String,
    pub seed: u64,
    pub iterations: usize,
    pub final_objective: Option<f64>,
    pub weights: Option<crate::prox::RegularizerWeights>,
    pub bandwidth: Option<f64>,
}

/// File names inside a model directory.
pub struct ModelPaths {
    pub factors: PathBuf,
    pub coefficients: PathBuf,
    pub mean: PathBuf,
    pub info: PathBuf,
    pub mean_obj: PathBuf,
    pub trace: PathBuf,
    pub edges: PathBuf,
}

impl ModelPaths {
    pub fn new(dir: &Path) -> Self {
        ModelPaths {
            factors: dir.join("factors.csv"),
            coefficients: dir.join("coefficients.csv"),
            mean: dir.join("mean.csv"),
            info: dir.join("model.json"),
            mean_obj: dir.join("mean.obj"),
            trace: dir.join("trace.csv"),
            edges: dir.join("edges.csv"),
        }
    }
}

/// Writes `factors.csv` (3N × M), `coefficients.csv` (M × K), `mean.csv`
/// (3N), `model.json` and `mean.obj`.
pub fn save_model(dir: &Path, model: &DeformationModel, info: &ModelInfo, faces: &[[usize; 3]]) -> Result<()> {
    let p = ModelPaths::new(dir);
    write_matrix_csv(&p.factors, &model.factors)?;
    write_matrix_csv(&p.coefficients, &model.coefficients)?;
    write_vector_csv(&p.mean, &model.mean)?;
    let json = serde_json::to_string_pretty(info).expect("model info serializes");
    write_text(&p.info, &(json + "\n"))?;
    write_obj(&p.mean_obj, &devectorize(&model.mean)?, faces)
}

/// Loads a model directory written by [`save_model`], with the faces of its
/// mean mesh.
pub fn load_model(dir: &Path) -> Result<(DeformationModel, ModelInfo, Vec<[usize; 3]>)> {
    let p = ModelPaths::new(dir);
    let info: ModelInfo = serde_json::from_str(&read_text(&p.info)?).map_err(|source| Error::Config {
        path: p.info.clone(),
        source,
    })?;
    if info.format_version != FORMAT_VERSION {
        return Err(Error::invalid(
            "format_version",
            format!("unsupported version {}", info.format_version),
        ));
    }
    let factors = read_matrix_csv(&p.factors)?;
    let coefficients = read_matrix_csv(&p.coefficients)?;
    let mean = read_vector_csv(&p.mean)?;
    let faces = if p.mean_obj.exists() {
        read_obj(&p.mean_obj)?.1
    } else {
        Vec::new()
    };
    let factors = if factors.nrows() == 0 {
        DMatrix::zeros(mean.len(), 0)
    } else {
        factors
    };
    let model = DeformationModel::new(mean, factors, coefficients, info.scale)?;
    Ok((model, info, faces))
}

/// Raw training shapes of a data directory: `shapes.csv` (3N × K, raw
/// coordinates) if present, otherwise every `*.obj` file in name order. Faces
/// come from `mesh.obj` or the first shape OBJ.
pub fn read_shapes(dir: &Path) -> Result<(Vec<DMatrix<f64>>, Vec<[usize; 3]>)> {
    let csv = dir.join("shapes.csv");
    let mesh = dir.join("mesh.obj");
    if csv.exists() {
        let raw = read_matrix_csv(&csv)?;
        if raw.nrows() % 3 != 0 {
            return Err(parse_err(&csv, 1, "row count is not a multiple of 3"));
        }
        let shapes = raw
            .column_iter()
            .map(|c| devectorize(&c.into_owned()))
            .collect::<Result<_>>()?;
        let faces = if mesh.exists() { read_obj(&mesh)?.1 } else { Vec::new() };
        return Ok((shapes, faces));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "obj") && p.file_name() != Some("mesh.obj".as_ref()))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(
            "data",
            format!("{} has neither shapes.csv nor OBJ shapes", dir.display()),
        ));
    }
    let mut shapes = Vec::with_capacity(files.len());
    let mut faces = Vec::new();
    for (k, f) in files.iter().enumerate() {
        let (v, fc) = read_obj(f)?;
        if k == 0 {
            faces = fc;
        }
        shapes.push(v);
    }
    if mesh.exists() {
        faces = read_obj(&mesh)?.1;
    }
    Ok((shapes, faces))
}

/// Writes the raw shapes as `shapes.csv`.
pub fn write_shapes_csv(path: &Path, shapes: &[DMatrix<f64>]) -> Result<()> {
    let cols: Vec<DVector<f64>> = shapes.iter().map(vectorize).collect();
    write_matrix_csv(path, &DMatrix::from_columns(&cols))
}

/// Boolean masks as a `rows × N` matrix of 0/1.
pub fn write_masks_csv(path: &Path, masks: &[Vec<bool>]) -> Result<()> {
    let n = masks.first().map_or(0, Vec::len);
    let m = DMatrix::from_fn(masks.len(), n, |r, i| if masks[r][i] { 1.0 } else { 0.0 });
    write_matrix_csv(path, &m)
}

pub fn read_masks_csv(path: &Path) -> Result<Vec<Vec<bool>>> {
    let m = read_matrix_csv(path)?;
    Ok(m.row_iter().map(|r| r.iter().map(|&v| v != 0.0).collect()).collect())
}
