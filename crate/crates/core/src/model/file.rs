//! JSON problem files.
//!
//! ```json
//! {
//!   "L": 3, "n": 1, "m1": 1, "m2": 1, "T": 1.0, "steps": 1000,
//!   "generator": [[-0.5, 0.3, 0.2], [0.2, -0.4, 0.2], [0.3, 0.2, -0.5]],
//!   "regimes": [
//!     { "A": [[-1]], "B1": [[1]], "B2": [[-1]], "C": [[1]], "D1": [[1]], "D2": [[-1]],
//!       "Q": [[-1]], "S1": [[1]], "S2": [[-2]], "R11": [[10]], "R12": [[8]], "R22": [[-12]],
//!       "G": [[-1]] },
//!     ...
//!   ]
//! }
//! ```
//!
//! Matrices are row-major nested arrays. Any per-regime coefficient may
//! instead be an array of `steps` matrices (vectors), one per grid cell.
//! The inhomogeneous terms `b`, `sigma`, `q`, `rho1`, `rho2` and `g` are
//! optional and default to zero; everything else is required. Unknown
//! fields are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CellCoefficients, GameModel, RegimeData, TimeGrid};
use crate::chain::Generator;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatField {
    Constant(Rows),
    PerCell(Vec<Rows>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VecField {
    Constant(Vec<f64>),
    PerCell(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeFile {
    #[serde(rename = "A")]
    pub a: MatField,
    #[serde(rename = "B1")]
    pub b1: MatField,
    #[serde(rename = "B2")]
    pub b2: MatField,
    #[serde(rename = "C")]
    pub c: MatField,
    #[serde(rename = "D1")]
    pub d1: MatField,
    #[serde(rename = "D2")]
    pub d2: MatField,
    #[serde(rename = "Q")]
    pub q: MatField,
    #[serde(rename = "S1")]
    pub s1: MatField,
    #[serde(rename = "S2")]
    pub s2: MatField,
    #[serde(rename = "R11")]
    pub r11: MatField,
    #[serde(rename = "R12")]
    pub r12: MatField,
    #[serde(rename = "R22")]
    pub r22: MatField,
    #[serde(rename = "G")]
    pub terminal: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<VecField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<VecField>,
    #[serde(default, rename = "q", skip_serializing_if = "Option::is_none")]
    pub q_lin: Option<VecField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<VecField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho2: Option<VecField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "L")]
    pub regime_count: usize,
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
    pub generator: Rows,
    pub regimes: Vec<RegimeFile>,
}

fn to_mat(field: &str, rows: &Rows, cols_if_empty: usize) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(cols_if_empty, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Parse(format!("{field}: ragged rows")));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

fn from_mat(m: &Mat) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl MatField {
    fn cells(&self) -> Option<usize> {
        match self {
            MatField::Constant(_) => None,
            MatField::PerCell(v) => Some(v.len()),
        }
    }

    fn get(&self, field: &str, cell: usize, cols_if_empty: usize) -> Result<Mat> {
        match self {
            MatField::Constant(rows) => to_mat(field, rows, cols_if_empty),
            MatField::PerCell(cells) => to_mat(field, &cells[cell], cols_if_empty),
        }
    }
}

impl VecField {
    fn cells(&self) -> Option<usize> {
        match self {
            VecField::Constant(_) => None,
            VecField::PerCell(v) => Some(v.len()),
        }
    }

    fn get(&self, cell: usize) -> Vector {
        match self {
            VecField::Constant(v) => Vector::from_column_slice(v),
            VecField::PerCell(cells) => Vector::from_column_slice(&cells[cell]),
        }
    }
}

impl RegimeFile {
    fn mat_fields(&self) -> [(&'static str, &MatField); 12] {
        [
            ("A", &self.a),
            ("B1", &self.b1),
            ("B2", &self.b2),
            ("C", &self.c),
            ("D1", &self.d1),
            ("D2", &self.d2),
            ("Q", &self.q),
            ("S1", &self.s1),
            ("S2", &self.s2),
            ("R11", &self.r11),
            ("R12", &self.r12),
            ("R22", &self.r22),
        ]
    }

    fn vec_fields(&self) -> [(&'static str, &Option<VecField>); 5] {
        [
            ("b", &self.b),
            ("sigma", &self.sigma),
            ("q", &self.q_lin),
            ("rho1", &self.rho1),
            ("rho2", &self.rho2),
        ]
    }

    fn into_regime(&self, index: usize, n: usize, m1: usize, m2: usize, steps: usize) -> Result<RegimeData> {
        let per_cell = self
            .mat_fields()
            .iter()
            .map(|(name, f)| (*name, f.cells()))
            .chain(self.vec_fields().iter().map(|(name, f)| (*name, f.as_ref().and_then(VecField::cells))))
            .filter_map(|(name, c)| c.map(|c| (name, c)))
            .collect::<Vec<_>>();
        for (name, c) in &per_cell {
            if *c != steps {
                return Err(Error::Parse(format!(
                    "regime {}: {name} has {c} cells, grid has {steps}",
                    index + 1
                )));
            }
        }
        let cells = if per_cell.is_empty() { 1 } else { steps };
        let vec_or_zero = |f: &Option<VecField>, len: usize, k: usize| match f {
            Some(f) => f.get(k),
            None => Vector::zeros(len),
        };
        let mut out = Vec::with_capacity(cells);
        for k in 0..cells {
            out.push(CellCoefficients {
                a: self.a.get("A", k, n)?,
                b1: self.b1.get("B1", k, m1)?,
                b2: self.b2.get("B2", k, m2)?,
                c: self.c.get("C", k, n)?,
                d1: self.d1.get("D1", k, m1)?,
                d2: self.d2.get("D2", k, m2)?,
                drift: vec_or_zero(&self.b, n, k),
                vol: vec_or_zero(&self.sigma, n, k),
                q: self.q.get("Q", k, n)?,
                s1: self.s1.get("S1", k, n)?,
                s2: self.s2.get("S2", k, n)?,
                r11: self.r11.get("R11", k, m1)?,
                r12: self.r12.get("R12", k, m2)?,
                r22: self.r22.get("R22", k, m2)?,
                q_lin: vec_or_zero(&self.q_lin, n, k),
                rho1: vec_or_zero(&self.rho1, m1, k),
                rho2: vec_or_zero(&self.rho2, m2, k),
            });
        }
        Ok(RegimeData {
            cells: out,
            terminal: to_mat("G", &self.terminal, n)?,
            terminal_lin: self.g.as_ref().map_or_else(|| Vector::zeros(n), |g| Vector::from_column_slice(g)),
        })
    }

    fn from_regime(r: &RegimeData) -> Self {
        // A field identical in every cell is written once. This also keeps
        // empty matrices unambiguous: `[[], []]` would read back as 2x0.
        let mat = |get: fn(&CellCoefficients) -> &Mat| {
            if r.cells.iter().all(|c| get(c) == get(&r.cells[0])) {
                MatField::Constant(from_mat(get(&r.cells[0])))
            } else {
                MatField::PerCell(r.cells.iter().map(|c| from_mat(get(c))).collect())
            }
        };
        let vector = |get: fn(&CellCoefficients) -> &Vector| {
            if r.cells.iter().all(|c| get(c).iter().all(|x| *x == 0.0)) {
                None
            } else if r.cells.iter().all(|c| get(c) == get(&r.cells[0])) {
                Some(VecField::Constant(get(&r.cells[0]).iter().copied().collect()))
            } else {
                Some(VecField::PerCell(r.cells.iter().map(|c| get(c).iter().copied().collect()).collect()))
            }
        };
        Self {
            a: mat(|c| &c.a),
            b1: mat(|c| &c.b1),
            b2: mat(|c| &c.b2),
            c: mat(|c| &c.c),
            d1: mat(|c| &c.d1),
            d2: mat(|c| &c.d2),
            q: mat(|c| &c.q),
            s1: mat(|c| &c.s1),
            s2: mat(|c| &c.s2),
            r11: mat(|c| &c.r11),
            r12: mat(|c| &c.r12),
            r22: mat(|c| &c.r22),
            terminal: from_mat(&r.terminal),
            b: vector(|c| &c.drift),
            sigma: vector(|c| &c.vol),
            q_lin: vector(|c| &c.q_lin),
            rho1: vector(|c| &c.rho1),
            rho2: vector(|c| &c.rho2),
            g: (!r.terminal_lin.iter().all(|x| *x == 0.0)).then(|| r.terminal_lin.iter().copied().collect()),
        }
    }
}

impl ProblemFile {
    pub fn into_model(&self) -> Result<GameModel> {
        if self.regimes.len() != self.regime_count {
            return Err(Error::Parse(format!(
                "L = {} but {} regimes given",
                self.regime_count,
                self.regimes.len()
            )));
        }
        let grid = TimeGrid::new(self.horizon, self.steps).map_err(|e| Error::Parse(e.to_string()))?;
        let regimes = self
            .regimes
            .iter()
            .enumerate()
            .map(|(i, r)| r.into_regime(i, self.n, self.m1, self.m2, self.steps))
            .collect::<Result<Vec<_>>>()?;
        Ok(GameModel {
            n: self.n,
            m1: self.m1,
            m2: self.m2,
            generator: Generator::unchecked(to_mat("generator", &self.generator, self.regime_count)?),
            grid,
            regimes,
        })
    }

    pub fn from_model(model: &GameModel) -> Self {
        Self {
            regime_count: model.regime_count(),
            n: model.n,
            m1: model.m1,
            m2: model.m2,
            horizon: model.horizon(),
            steps: model.grid.steps(),
            generator: from_mat(model.generator.matrix()),
            regimes: model.regimes.iter().map(RegimeFile::from_regime).collect(),
        }
    }
}

/// Strict parse of a problem document. Does not validate invariants.
pub fn from_json_str(text: &str) -> Result<GameModel> {
    let file: ProblemFile = serde_json::from_str(text)?;
    file.into_model()
}

pub fn load(path: impl AsRef<Path>) -> Result<GameModel> {
    from_json_str(&std::fs::read_to_string(path)?)
}

pub fn to_json_string(model: &GameModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ProblemFile::from_model(model))?)
}
