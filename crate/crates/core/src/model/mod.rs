//! Problem data for the regime-switching game, its validation, and the
//! stacked two-player views used by the Riccati machinery.

mod file;

use serde::Serialize;

use crate::chain::Generator;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

pub use file::{from_json_str, load, to_json_string, ProblemFile};

/// Absolute tolerance for symmetry of user-supplied weights.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A regime of the Markov chain. Stored zero-based; displayed one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegimeIndex(usize);

impl RegimeIndex {
    /// From the one-based label used in files and on the command line.
    pub fn new(value: usize, count: usize) -> Result<Self> {
        if value == 0 || value > count {
            return Err(Error::RegimeOutOfRange { value, count });
        }
        Ok(Self(value - 1))
    }

    pub fn from_index(index: usize, count: usize) -> Result<Self> {
        Self::new(index + 1, count)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn one_based(self) -> usize {
        self.0 + 1
    }
}

/// Uniform grid `t_k = k T / K` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidModel(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidModel("grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.node(k))
    }

    /// Cell `[t_k, t_{k+1})` containing `t`; `T` itself maps to the last cell.
    pub fn cell_of(&self, t: f64) -> usize {
        let k = (t / self.horizon * self.steps as f64).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.steps - 1)
        }
    }

    /// Same horizon with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self { horizon: self.horizon, steps: self.steps * factor.max(1) }
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::new(self.horizon, steps)
    }
}

/// All coefficients of one regime on one grid cell.
///
/// Matrix names follow the usual LQ convention; the inhomogeneous terms
/// `b, σ, q, ρ₁, ρ₂` carry descriptive names so they do not clash with the
/// matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCoefficients {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c: Mat,
    pub d1: Mat,
    pub d2: Mat,
    /// Drift offset `b`.
    pub drift: Vector,
    /// Diffusion offset `σ`.
    pub vol: Vector,
    pub q: Mat,
    pub s1: Mat,
    pub s2: Mat,
    pub r11: Mat,
    /// Cross weight `R12`; `R21 = R12ᵀ` is never stored.
    pub r12: Mat,
    pub r22: Mat,
    /// Linear state weight `q`.
    pub q_lin: Vector,
    pub rho1: Vector,
    pub rho2: Vector,
}

impl CellCoefficients {
    /// All-zero coefficients of the given dimensions.
    pub fn zeros(n: usize, m1: usize, m2: usize) -> Self {
        Self {
            a: Mat::zeros(n, n),
            b1: Mat::zeros(n, m1),
            b2: Mat::zeros(n, m2),
            c: Mat::zeros(n, n),
            d1: Mat::zeros(n, m1),
            d2: Mat::zeros(n, m2),
            drift: Vector::zeros(n),
            vol: Vector::zeros(n),
            q: Mat::zeros(n, n),
            s1: Mat::zeros(m1, n),
            s2: Mat::zeros(m2, n),
            r11: Mat::zeros(m1, m1),
            r12: Mat::zeros(m1, m2),
            r22: Mat::zeros(m2, m2),
            q_lin: Vector::zeros(n),
            rho1: Vector::zeros(m1),
            rho2: Vector::zeros(m2),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        [&self.drift, &self.vol, &self.q_lin, &self.rho1, &self.rho2]
            .iter()
            .all(|v| v.iter().all(|x| *x == 0.0))
    }
}

/// Per-regime data: coefficients (one entry if time-constant, otherwise one
/// per grid cell) and terminal weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeData {
    pub cells: Vec<CellCoefficients>,
    /// Terminal weight `G(i)`.
    pub terminal: Mat,
    /// Terminal linear weight `g(i)`.
    pub terminal_lin: Vector,
}

impl RegimeData {
    pub fn constant(coeffs: CellCoefficients, terminal: Mat, terminal_lin: Vector) -> Self {
        Self { cells: vec![coeffs], terminal, terminal_lin }
    }
}

/// Complete game data. Immutable once built; call [`GameModel::validate`]
/// before handing it to the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct GameModel {
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
    pub generator: Generator,
    pub grid: TimeGrid,
    pub regimes: Vec<RegimeData>,
}

/// One failed invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    /// One-based regime, when the violation belongs to one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.field)?;
        if let Some(i) = self.regime {
            write!(f, " [regime {i}]")?;
        }
        if let Some(k) = self.cell {
            write!(f, " [cell {k}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Both players' coefficients concatenated: `B = [B1 | B2]`,
/// `D = [D1 | D2]`, `S = [S1; S2]`, `R = [[R11, R12], [R12ᵀ, R22]]`,
/// `ρ = [ρ1; ρ2]`. `m1` marks where player 2's block starts.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedView {
    pub m1: usize,
    pub b: Mat,
    pub d: Mat,
    pub s: Mat,
    pub r: Mat,
    pub rho: Vector,
}

/// Which controls enter a Riccati equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Players {
    Both,
    /// Player 1 alone (minimizer, the other control frozen at zero).
    First,
    /// Player 2 alone (maximizer).
    Second,
}

impl StackedView {
    pub fn of(coeffs: &CellCoefficients, players: Players) -> Self {
        let c = coeffs;
        match players {
            Players::Both => Self {
                m1: c.r11.nrows(),
                b: linalg::hcat(&c.b1, &c.b2),
                d: linalg::hcat(&c.d1, &c.d2),
                s: linalg::vcat(&c.s1, &c.s2),
                r: linalg::vcat(
                    &linalg::hcat(&c.r11, &c.r12),
                    &linalg::hcat(&c.r12.transpose(), &c.r22),
                ),
                rho: linalg::vcat_vec(&c.rho1, &c.rho2),
            },
            Players::First => Self {
                m1: c.r11.nrows(),
                b: c.b1.clone(),
                d: c.d1.clone(),
                s: c.s1.clone(),
                r: c.r11.clone(),
                rho: c.rho1.clone(),
            },
            Players::Second => Self {
                m1: 0,
                b: c.b2.clone(),
                d: c.d2.clone(),
                s: c.s2.clone(),
                r: c.r22.clone(),
                rho: c.rho2.clone(),
            },
        }
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub fn m2(&self) -> usize {
        self.m() - self.m1
    }

    /// Player blocks `(B1, B2)` read back out of `B`.
    pub fn split_b(&self) -> (Mat, Mat) {
        let n = self.b.nrows();
        (
            self.b.view((0, 0), (n, self.m1)).into_owned(),
            self.b.view((0, self.m1), (n, self.m2())).into_owned(),
        )
    }

    pub fn split_d(&self) -> (Mat, Mat) {
        let n = self.d.nrows();
        (
            self.d.view((0, 0), (n, self.m1)).into_owned(),
            self.d.view((0, self.m1), (n, self.m2())).into_owned(),
        )
    }

    pub fn split_s(&self) -> (Mat, Mat) {
        let n = self.s.ncols();
        (
            self.s.view((0, 0), (self.m1, n)).into_owned(),
            self.s.view((self.m1, 0), (self.m2(), n)).into_owned(),
        )
    }

    /// `(R11, R12, R22)`.
    pub fn split_r(&self) -> (Mat, Mat, Mat) {
        let (m1, m2) = (self.m1, self.m2());
        (
            self.r.view((0, 0), (m1, m1)).into_owned(),
            self.r.view((0, m1), (m1, m2)).into_owned(),
            self.r.view((m1, m1), (m2, m2)).into_owned(),
        )
    }

    pub fn split_rho(&self) -> (Vector, Vector) {
        (self.rho.rows(0, self.m1).into_owned(), self.rho.rows(self.m1, self.m2()).into_owned())
    }
}

impl GameModel {
    pub fn regime_count(&self) -> usize {
        self.regimes.len()
    }

    pub fn m(&self) -> usize {
        self.m1 + self.m2
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    /// Coefficients of regime `i` on model cell `cell` (time-constant data
    /// ignores the cell).
    pub fn cell(&self, cell: usize, i: usize) -> &CellCoefficients {
        let cells = &self.regimes[i].cells;
        &cells[cell.min(cells.len() - 1)]
    }

    /// Right-continuous coefficients at time `t`.
    pub fn at(&self, t: f64, i: usize) -> &CellCoefficients {
        self.cell(self.grid.cell_of(t), i)
    }

    pub fn terminal(&self, i: usize) -> &Mat {
        &self.regimes[i].terminal
    }

    pub fn is_time_constant(&self) -> bool {
        self.regimes.iter().all(|r| r.cells.len() == 1)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.regimes.iter().all(|r| {
            r.cells.iter().all(CellCoefficients::is_homogeneous)
                && r.terminal_lin.iter().all(|x| *x == 0.0)
        })
    }

    /// Same problem on a grid with `steps` cells. Only time-constant models
    /// can be regridded.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        if steps == self.grid.steps() {
            return Ok(self.clone());
        }
        if !self.is_time_constant() {
            return Err(Error::InvalidModel(
                "cannot change the grid of a model with per-cell coefficients".into(),
            ));
        }
        let mut out = self.clone();
        out.grid = self.grid.with_steps(steps)?;
        Ok(out)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon() });
        }
        Ok(())
    }

    /// Stacked view of both players at `(t, i)`.
    pub fn stack(&self, t: f64, i: RegimeIndex) -> Result<StackedView> {
        self.check_time(t)?;
        if i.index() >= self.regime_count() {
            return Err(Error::RegimeOutOfRange { value: i.one_based(), count: self.regime_count() });
        }
        Ok(StackedView::of(self.at(t, i.index()), Players::Both))
    }

    /// Every violated invariant, with its location. Empty means valid.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        let l = self.regime_count();
        let (n, m1, m2) = (self.n, self.m1, self.m2);
        let push = |v: &mut Vec<Violation>, field: &str, regime: Option<usize>, cell: Option<usize>, msg: String| {
            v.push(Violation { field: field.to_string(), regime: regime.map(|i| i + 1), cell, message: msg })
        };

        if l == 0 {
            push(&mut v, "regimes", None, None, "at least one regime required".into());
        }
        let pi = self.generator.matrix();
        if pi.nrows() != l || pi.ncols() != l {
            push(
                &mut v,
                "generator",
                None,
                None,
                format!("expected {l}x{l}, got {}x{}", pi.nrows(), pi.ncols()),
            );
        } else {
            for msg in self.generator.problems() {
                push(&mut v, "generator", None, None, msg);
            }
        }

        for (i, regime) in self.regimes.iter().enumerate() {
            let cells = regime.cells.len();
            if cells != 1 && cells != self.grid.steps() {
                push(
                    &mut v,
                    "cells",
                    Some(i),
                    None,
                    format!("expected 1 or {} coefficient cells, got {cells}", self.grid.steps()),
                );
            }
            if cells == 0 {
                continue;
            }
            for (k, c) in regime.cells.iter().enumerate() {
                let cell = (cells > 1).then_some(k);
                let mats: [(&str, &Mat, (usize, usize)); 12] = [
                    ("A", &c.a, (n, n)),
                    ("B1", &c.b1, (n, m1)),
                    ("B2", &c.b2, (n, m2)),
                    ("C", &c.c, (n, n)),
                    ("D1", &c.d1, (n, m1)),
                    ("D2", &c.d2, (n, m2)),
                    ("Q", &c.q, (n, n)),
                    ("S1", &c.s1, (m1, n)),
                    ("S2", &c.s2, (m2, n)),
                    ("R11", &c.r11, (m1, m1)),
                    ("R12", &c.r12, (m1, m2)),
                    ("R22", &c.r22, (m2, m2)),
                ];
                for (name, m, shape) in mats {
                    check_matrix(&mut v, name, Some(i), cell, m, shape);
                }
                let vecs: [(&str, &Vector, usize); 5] = [
                    ("b", &c.drift, n),
                    ("sigma", &c.vol, n),
                    ("q", &c.q_lin, n),
                    ("rho1", &c.rho1, m1),
                    ("rho2", &c.rho2, m2),
                ];
                for (name, x, len) in vecs {
                    check_vector(&mut v, name, Some(i), cell, x, len);
                }
                for (name, m) in [("Q", &c.q), ("R11", &c.r11), ("R22", &c.r22)] {
                    check_symmetric(&mut v, name, Some(i), cell, m);
                }
            }
            check_matrix(&mut v, "G", Some(i), None, &regime.terminal, (n, n));
            check_symmetric(&mut v, "G", Some(i), None, &regime.terminal);
            check_vector(&mut v, "g", Some(i), None, &regime.terminal_lin, n);
        }
        ValidationReport { violations: v }
    }
}

fn check_matrix(
    v: &mut Vec<Violation>,
    name: &str,
    regime: Option<usize>,
    cell: Option<usize>,
    m: &Mat,
    shape: (usize, usize),
) {
    let mut bad = |msg: String| {
        v.push(Violation { field: name.into(), regime: regime.map(|i| i + 1), cell, message: msg })
    };
    if m.shape() != shape {
        bad(format!("expected {}x{}, got {}x{}", shape.0, shape.1, m.nrows(), m.ncols()));
    } else if !linalg::all_finite(m) {
        bad("non-finite entry".into());
    }
}

fn check_vector(
    v: &mut Vec<Violation>,
    name: &str,
    regime: Option<usize>,
    cell: Option<usize>,
    x: &Vector,
    len: usize,
) {
    let mut bad = |msg: String| {
        v.push(Violation { field: name.into(), regime: regime.map(|i| i + 1), cell, message: msg })
    };
    if x.len() != len {
        bad(format!("expected length {len}, got {}", x.len()));
    } else if !x.iter().all(|e| e.is_finite()) {
        bad("non-finite entry".into());
    }
}

fn check_symmetric(v: &mut Vec<Violation>, name: &str, regime: Option<usize>, cell: Option<usize>, m: &Mat) {
    if !m.is_square() || !linalg::all_finite(m) {
        return;
    }
    let asym = linalg::max_asymmetry(m);
    if asym > SYMMETRY_TOL {
        v.push(Violation {
            field: name.into(),
            regime: regime.map(|i| i + 1),
            cell,
            message: format!("not symmetric (max |M - Mᵀ| entry {asym:e})"),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn builtin_model_is_valid() {
        let model = builtin::three_regime();
        let report = model.validate();
        assert!(report.is_valid(), "{:?}", report.violations);
    }

    #[test]
    fn generator_row_sum_is_reported_once() {
        let mut model = builtin::three_regime();
        let mut pi = model.generator.matrix().clone();
        pi[(0, 1)] += 0.1;
        model.generator = Generator::unchecked(pi);
        let report = model.validate();
        assert_eq!(report.violations.len(), 1, "{:?}", report.violations);
        assert_eq!(report.violations[0].field, "generator");
        assert!(report.violations[0].message.contains("row 1"));
    }

    #[test]
    fn asymmetric_r11_is_reported_once() {
        let mut c = CellCoefficients::zeros(1, 2, 1);
        c.r11 = Mat::identity(2, 2);
        c.r22 = Mat::from_row_slice(1, 1, &[-1.0]);
        let regime = RegimeData::constant(c.clone(), Mat::zeros(1, 1), Vector::zeros(1));
        let mut model = GameModel {
            n: 1,
            m1: 2,
            m2: 1,
            generator: Generator::unchecked(Mat::zeros(2, 2)),
            grid: TimeGrid::new(1.0, 10).unwrap(),
            regimes: vec![regime.clone(), regime],
        };
        assert!(model.validate().is_valid(), "{:?}", model.validate().violations);
        model.regimes[1].cells[0].r11[(0, 1)] = 1e-6;
        let report = model.validate();
        assert_eq!(report.violations.len(), 1, "{:?}", report.violations);
        assert_eq!(report.violations[0].field, "R11");
        assert_eq!(report.violations[0].regime, Some(2));
        model.regimes.clear();
        assert!(!model.validate().is_valid());
    }

    #[test]
    fn dimension_and_finiteness_errors_are_located() {
        let mut model = builtin::three_regime();
        model.regimes[2].cells[0].a = Mat::zeros(2, 2);
        model.regimes[1].cells[0].vol = Vector::from_vec(vec![f64::NAN]);
        let report = model.validate();
        let fields: Vec<_> = report.violations.iter().map(|v| (v.field.as_str(), v.regime)).collect();
        assert!(fields.contains(&("A", Some(3))));
        assert!(fields.contains(&("sigma", Some(2))));
    }

    #[test]
    fn validate_is_idempotent() {
        let mut model = builtin::three_regime();
        model.regimes[0].terminal = Mat::from_row_slice(1, 1, &[f64::INFINITY]);
        let before = model.clone();
        assert_eq!(model.validate(), model.validate());
        assert_eq!(model, before);
    }

    #[test]
    fn stack_regime_one_of_builtin() {
        let model = builtin::three_regime();
        let s = model.stack(0.3, RegimeIndex::new(1, 3).unwrap()).unwrap();
        assert_eq!(s.b, Mat::from_row_slice(1, 2, &[1.0, -1.0]));
        assert_eq!(s.d, Mat::from_row_slice(1, 2, &[1.0, -1.0]));
        assert_eq!(s.r, Mat::from_row_slice(2, 2, &[10.0, 8.0, 8.0, -12.0]));
        let s3 = model.stack(1.0, RegimeIndex::new(3, 3).unwrap()).unwrap();
        assert_eq!(s3.s, Mat::from_row_slice(2, 1, &[0.0, 1.0]));
        assert_eq!(s3.rho, Vector::zeros(2));
    }

    #[test]
    fn stack_rejects_out_of_range() {
        let model = builtin::three_regime();
        assert!(model.stack(1.5, RegimeIndex::new(1, 3).unwrap()).is_err());
        assert!(RegimeIndex::new(4, 3).is_err());
        assert!(RegimeIndex::new(0, 3).is_err());
        let bogus = RegimeIndex::new(5, 9).unwrap();
        assert!(model.stack(0.0, bogus).is_err());
    }

    #[test]
    fn stack_without_second_player_is_player_one_data() {
        let mut c = CellCoefficients::zeros(2, 1, 0);
        c.b1 = Mat::from_row_slice(2, 1, &[1.0, 2.0]);
        c.d1 = Mat::from_row_slice(2, 1, &[0.5, -1.0]);
        c.s1 = Mat::from_row_slice(1, 2, &[3.0, 4.0]);
        c.r11 = Mat::from_row_slice(1, 1, &[2.0]);
        c.rho1 = Vector::from_vec(vec![7.0]);
        let s = StackedView::of(&c, Players::Both);
        assert_eq!(s.b, c.b1);
        assert_eq!(s.d, c.d1);
        assert_eq!(s.s, c.s1);
        assert_eq!(s.r, c.r11);
        assert_eq!(s.rho, c.rho1);
    }

    #[test]
    fn grid_nodes_and_cells() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(4), 1.0);
        assert_eq!(g.step(), 0.25);
        assert_eq!(g.cell_of(0.0), 0);
        assert_eq!(g.cell_of(0.25), 1);
        assert_eq!(g.cell_of(0.3), 1);
        assert_eq!(g.cell_of(1.0), 3);
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }
}
