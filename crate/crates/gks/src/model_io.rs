//! JSON model files.
//!
//! Matrices are nested arrays of rows. Sequences hold one matrix per step:
//! `A_seq[t]`, `B_seq[t]`, `Q_seq[t]` and `u_seq[t]` for `t = 0..N`, and
//! `C_seq[t]`, `R_seq[t]`, `S_seq[t]`, `y_seq[t]` for measurement `t + 1`.

use std::path::Path;

use gks_core::statespace::LtvModel;
use gks_core::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::BenchError;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "N")]
    pub horizon: usize,
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub p: usize,
    #[serde(rename = "A_seq")]
    pub a: Vec<Rows>,
    #[serde(rename = "B_seq", default)]
    pub b: Option<Vec<Rows>>,
    #[serde(rename = "C_seq")]
    pub c: Vec<Rows>,
    #[serde(rename = "Q_seq")]
    pub q: Vec<Rows>,
    #[serde(rename = "R_seq")]
    pub r: Vec<Rows>,
    #[serde(rename = "S_seq", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<Rows>>,
    pub mu: Vec<f64>,
    #[serde(rename = "Pi")]
    pub pi: Rows,
    #[serde(rename = "u_seq", default)]
    pub u: Option<Vec<Vec<f64>>>,
    #[serde(rename = "y_seq")]
    pub y: Vec<Vec<f64>>,
}

fn to_matrix(rows: &Rows, nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>, BenchError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(BenchError::Config(format!("{what} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn seq(
    items: &[Rows],
    horizon: usize,
    nrows: usize,
    ncols: usize,
    name: &str,
) -> Result<Vec<DMatrix<f64>>, BenchError> {
    if items.len() != horizon {
        return Err(BenchError::Config(format!("{name} has {} entries, expected {horizon}", items.len())));
    }
    items.iter().enumerate().map(|(t, m)| to_matrix(m, nrows, ncols, &format!("{name}[{t}]"))).collect()
}

fn vectors(items: &[Vec<f64>], horizon: usize, len: usize, name: &str) -> Result<Vec<DVector<f64>>, BenchError> {
    if items.len() != horizon || items.iter().any(|v| v.len() != len) {
        return Err(BenchError::Config(format!("{name} must hold {horizon} vectors of length {len}")));
    }
    Ok(items.iter().map(|v| DVector::from_column_slice(v)).collect())
}

impl ModelFile {
    pub fn to_model(&self) -> Result<LtvModel, BenchError> {
        let (h, n, m) = (self.horizon, self.n, self.m);
        // Without inputs (p = 0) a single zero input column stands in.
        let p = self.p.max(1);
        let b = match (&self.b, self.p) {
            (Some(b), p) if p > 0 => seq(b, h, n, p, "B_seq")?,
            (None, p) if p > 0 => return Err(BenchError::Config("B_seq is required when p > 0".into())),
            _ => vec![DMatrix::zeros(n, p); h],
        };
        let u = match (&self.u, self.p) {
            (Some(u), p) if p > 0 => vectors(u, h, p, "u_seq")?,
            _ => vec![DVector::zeros(p); h],
        };
        if self.mu.len() != n {
            return Err(BenchError::Config(format!("mu must have length {n}")));
        }
        Ok(LtvModel {
            a: seq(&self.a, h, n, n, "A_seq")?,
            b,
            c: seq(&self.c, h, m, n, "C_seq")?,
            q: seq(&self.q, h, n, n, "Q_seq")?,
            r: seq(&self.r, h, m, m, "R_seq")?,
            s: self.s.as_ref().map(|s| seq(s, h, n, m, "S_seq")).transpose()?,
            mu: DVector::from_column_slice(&self.mu),
            pi: to_matrix(&self.pi, n, n, "Pi")?,
            u,
            y: vectors(&self.y, h, m, "y_seq")?,
        })
    }

    pub fn from_model(model: &LtvModel) -> Self {
        let rows = |ms: &[DMatrix<f64>]| ms.iter().map(to_rows).collect::<Vec<_>>();
        let vecs = |vs: &[DVector<f64>]| vs.iter().map(|v| v.iter().copied().collect()).collect::<Vec<Vec<f64>>>();
        Self {
            horizon: model.horizon(),
            n: model.state_dim(),
            m: model.meas_dim(),
            p: model.input_dim(),
            a: rows(&model.a),
            b: Some(rows(&model.b)),
            c: rows(&model.c),
            q: rows(&model.q),
            r: rows(&model.r),
            s: model.s.as_ref().map(|s| rows(s)),
            mu: model.mu.iter().copied().collect(),
            pi: to_rows(&model.pi),
            u: Some(vecs(&model.u)),
            y: vecs(&model.y),
        }
    }
}

pub fn read_model(path: &Path) -> Result<LtvModel, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
    file.to_model()
}

pub fn write_model(path: &Path, model: &LtvModel) -> Result<(), BenchError> {
    let text = serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model serializes");
    std::fs::write(path, text)?;
    Ok(())
}
