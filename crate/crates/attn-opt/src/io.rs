//! Problem files, JSON encodings of results and CSV tables.
//!
//! Infinite values are written as the string `"inf"` so that standard JSON
//! parsers can read every output. Floats round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::binary_choice::DpGrid;
use crate::error::{invalid, Error, Result};
use crate::gaussian::Problem;
use crate::news::NewsGameParams;
use crate::sim::{SimConfig, SimMode};
use crate::stages::{Stage, StagePath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    /// Row-major prior covariance; may be omitted for `news-eq`.
    #[serde(default)]
    pub sigma: Vec<Vec<f64>>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_choice: Option<BinaryChoiceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub news_game: Option<NewsGameBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manipulation: Option<ManipulationBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryChoiceBlock {
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<DpGridBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpGridBlock {
    #[serde(default)]
    pub n_half: Option<usize>,
    #[serde(default)]
    pub y_range: Option<f64>,
    #[serde(default)]
    pub truncation: Option<f64>,
}

impl DpGridBlock {
    pub fn to_grid(&self) -> DpGrid {
        let d = DpGrid::default();
        DpGrid {
            n_half: self.n_half.unwrap_or(d.n_half),
            y_range: self.y_range.unwrap_or(d.y_range),
            truncation: self.truncation.unwrap_or(d.truncation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewsGameBlock {
    pub sigma_omega: f64,
    pub sigma_b: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub r: f64,
    /// Points per axis of the deviation grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
}

impl NewsGameBlock {
    pub fn params(&self) -> Result<NewsGameParams> {
        NewsGameParams::new(self.sigma_omega, self.sigma_b, self.lambda, self.kappa, self.r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManipulationBlock {
    #[serde(rename = "T")]
    pub duration: f64,
    /// Grid in `a:b:step` form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<SimMode>,
}

impl SimBlock {
    pub fn config(&self, seed: Option<u64>) -> SimConfig {
        SimConfig {
            dt: self.dt,
            horizon: self.horizon,
            n_paths: self.n_paths,
            seed: seed.or(self.seed).unwrap_or(0),
            mode: self.mode.unwrap_or(SimMode::ContinuousEuler),
        }
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("problem file: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn from_problem(p: &Problem) -> Self {
        Self {
            sigma: matrix_rows(p.sigma()),
            alpha: p.alpha().as_slice().to_vec(),
            mu: Some(p.mu().as_slice().to_vec()),
            binary_choice: None,
            news_game: None,
            manipulation: None,
            sim: None,
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let k = self.sigma.len();
        if k == 0 || self.sigma.iter().any(|r| r.len() != k) {
            return Err(Error::WrongDimension("sigma must be a square array of rows".into()));
        }
        let s = DMatrix::from_fn(k, k, |i, j| self.sigma[i][j]);
        let mu = self.mu.as_ref().map(|m| DVector::from_column_slice(m));
        Problem::new(s, DVector::from_column_slice(&self.alpha), mu)
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// A float that may be infinite, written as `"inf"` in that case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Extended {
    Finite(f64),
    Text(String),
}

impl Extended {
    fn from_end(t: Option<f64>) -> Self {
        match t {
            Some(x) => Extended::Finite(x),
            None => Extended::Text("inf".into()),
        }
    }

    fn to_end(&self) -> Result<Option<f64>> {
        match self {
            Extended::Finite(x) => Ok(Some(*x)),
            Extended::Text(s) if s == "inf" => Ok(None),
            Extended::Text(s) => Err(invalid(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageJson {
    t_start: f64,
    t_end: Extended,
    support: Vec<usize>,
    mixture: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StagePathJson {
    sigma: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    mu: Vec<f64>,
    switch_times: Vec<f64>,
    stages: Vec<StageJson>,
}

/// JSON value for a stage path, including the problem it solves.
pub fn stage_path_value(path: &StagePath) -> serde_json::Value {
    let p = path.problem();
    let doc = StagePathJson {
        sigma: matrix_rows(p.sigma()),
        alpha: p.alpha().as_slice().to_vec(),
        mu: p.mu().as_slice().to_vec(),
        switch_times: path.switch_times(),
        stages: path
            .stages()
            .iter()
            .map(|s| StageJson {
                t_start: s.t_start,
                t_end: Extended::from_end(s.t_end),
                support: s.support.clone(),
                mixture: s.mixture.clone(),
            })
            .collect(),
    };
    serde_json::to_value(doc).expect("stage paths always serialize")
}

pub fn emit_stage_path(path: &StagePath) -> String {
    serde_json::to_string_pretty(&stage_path_value(path)).expect("stage paths always serialize")
}

pub fn parse_stage_path(text: &str) -> Result<StagePath> {
    let doc: StagePathJson = serde_json::from_str(text).map_err(|e| invalid(format!("stage path: {e}")))?;
    let file = ProblemFile {
        sigma: doc.sigma,
        alpha: doc.alpha,
        mu: Some(doc.mu),
        binary_choice: None,
        news_game: None,
        manipulation: None,
        sim: None,
    };
    let stages = doc
        .stages
        .into_iter()
        .map(|s| {
            Ok(Stage { t_start: s.t_start, t_end: s.t_end.to_end()?, support: s.support, mixture: s.mixture })
        })
        .collect::<Result<Vec<_>>>()?;
    StagePath::from_parts(file.problem()?, stages)
}

/// Parses `a:b:step` into `a, a + step, …` up to `b` inclusive.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || invalid(format!("grid must look like a:b:step, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if !(a.is_finite() && b.is_finite() && step.is_finite() && step > 0.0 && b >= a) {
        return Err(bad());
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    if n > 10_000_000 {
        return Err(invalid("grid has too many points"));
    }
    Ok((0..=n).map(|i| a + i as f64 * step).collect())
}

/// Decimal text with 17 significant digits; infinities as `inf`.
pub fn format_number(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn csv_string(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", format_number(*x));
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    fs::write(path, csv_string(header, rows)).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

/// Rows `(t, n(t), β(t))` sampled on `grid`.
pub fn policy_table(path: &StagePath, grid: &[f64]) -> (Vec<String>, Vec<Vec<f64>>) {
    let k = path.problem().dim();
    let mut header = vec!["t".to_string()];
    header.extend((0..k).map(|i| format!("n_{i}")));
    header.extend((0..k).map(|i| format!("beta_{i}")));
    let rows = grid
        .iter()
        .map(|&t| {
            let mut row = vec![t];
            row.extend_from_slice(path.n_of_t(t).as_slice());
            row.extend(path.beta_of_t(t));
            row
        })
        .collect();
    (header, rows)
}
