//! JSON problem files: `systems[] = {A, W, Sigma0, T}`,
//! `links[i][j] = {C, V, kappa}`, plus per-sensor and per-system
//! constraint modes. Matrices are row-major arrays of arrays.

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use sensched_core::{ConstraintMode, SchedulingProblem, SensorLink, SystemModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    #[serde(rename = "Sigma0")]
    pub sigma0: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkSpec {
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    pub kappa: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub systems: Vec<SystemSpec>,
    pub links: Vec<Vec<LinkSpec>>,
    pub sensor_mode: Vec<String>,
    pub system_mode: Vec<String>,
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        bail!("{what}: empty matrix");
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        bail!("{what}: empty matrix row");
    }
    if rows.iter().any(|r| r.len() != ncols) {
        bail!("{what}: ragged rows");
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn parse_mode(s: &str, what: &str) -> Result<ConstraintMode> {
    match s {
        "at-most-one" => Ok(ConstraintMode::AtMostOne),
        "exactly-one" => Ok(ConstraintMode::ExactlyOne),
        other => bail!("{what}: unknown mode {other:?} (expected \"at-most-one\" or \"exactly-one\")"),
    }
}

pub fn mode_name(mode: ConstraintMode) -> &'static str {
    match mode {
        ConstraintMode::AtMostOne => "at-most-one",
        ConstraintMode::ExactlyOne => "exactly-one",
    }
}

/// Builds the in-memory problem from a parsed file, naming the offending
/// system/sensor pair on any structural error.
pub fn build_problem(file: &ProblemFile) -> Result<SchedulingProblem> {
    let mut systems = Vec::with_capacity(file.systems.len());
    for (i, s) in file.systems.iter().enumerate() {
        let sys = SystemModel::new(
            to_matrix(&s.a, &format!("systems[{i}].A"))?,
            to_matrix(&s.w, &format!("systems[{i}].W"))?,
            to_matrix(&s.sigma0, &format!("systems[{i}].Sigma0"))?,
            to_matrix(&s.t, &format!("systems[{i}].T"))?,
        )
        .with_context(|| format!("systems[{i}]"))?;
        systems.push(sys);
    }
    let mut links = Vec::with_capacity(file.links.len());
    for (i, row) in file.links.iter().enumerate() {
        let mut out_row = Vec::with_capacity(row.len());
        for (j, l) in row.iter().enumerate() {
            let link = SensorLink::new(
                to_matrix(&l.c, &format!("links[{i}][{j}].C"))?,
                to_matrix(&l.v, &format!("links[{i}][{j}].V"))?,
                l.kappa,
            )
            .with_context(|| format!("links[{i}][{j}]"))?;
            out_row.push(link);
        }
        links.push(out_row);
    }
    let sensor_modes = file
        .sensor_mode
        .iter()
        .enumerate()
        .map(|(j, s)| parse_mode(s, &format!("sensor_mode[{j}]")))
        .collect::<Result<Vec<_>>>()?;
    let system_modes = file
        .system_mode
        .iter()
        .enumerate()
        .map(|(i, s)| parse_mode(s, &format!("system_mode[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    SchedulingProblem::new(systems, links, sensor_modes, system_modes)
        .map_err(anyhow::Error::from)
}

/// Parses a problem from JSON text (error messages carry line/column and
/// key context).
pub fn parse_problem(json: &str) -> Result<SchedulingProblem> {
    let file: ProblemFile = serde_json::from_str(json).context("malformed problem file")?;
    build_problem(&file)
}

pub fn load_problem(path: &std::path::Path) -> Result<SchedulingProblem> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading problem file {}", path.display()))?;
    parse_problem(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Serializes the in-memory model back to the file schema. Floats render
/// in shortest round-trip form, so re-parsing reproduces the model
/// bit-for-bit.
pub fn problem_to_file(p: &SchedulingProblem) -> ProblemFile {
    ProblemFile {
        systems: p
            .systems()
            .iter()
            .map(|s| SystemSpec {
                a: from_matrix(&s.a),
                w: from_matrix(&s.w),
                sigma0: from_matrix(&s.sigma0),
                t: from_matrix(&s.t_weight),
            })
            .collect(),
        links: (0..p.n_systems())
            .map(|i| {
                (0..p.n_sensors())
                    .map(|j| {
                        let l = p.link(i, j);
                        LinkSpec { c: from_matrix(&l.c), v: from_matrix(&l.v), kappa: l.kappa }
                    })
                    .collect()
            })
            .collect(),
        sensor_mode: p.sensor_modes().iter().map(|&m| mode_name(m).to_string()).collect(),
        system_mode: p.system_modes().iter().map(|&m| mode_name(m).to_string()).collect(),
    }
}
