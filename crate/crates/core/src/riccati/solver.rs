use serde::Serialize;

use super::{assemble_cell, rhs_cell};
use crate::error::{Block, Error, IndefinitenessError, Result};
use crate::linalg::{self, Mat};
use crate::model::{GameModel, Players, TimeGrid};
use crate::ode::{rk4_step, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Required slack in `λ_min(N11) ≥ δ` and `λ_max(N22) ≤ -δ` at every node.
    pub delta_min: f64,
    /// Spectral-norm bound beyond which the solution counts as exploding.
    pub p_max: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { delta_min: 1e-6, p_max: 1e6 }
    }
}

/// Outcome of a backward integration. Constraint violation and blow-up are
/// results, not errors: they say the game has no solution of this kind on
/// the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Solved,
    ConstraintViolated {
        t: f64,
        /// One-based regime.
        regime: usize,
        /// 1 for `N11`, 2 for `N22` (or its Schur complement).
        player: u8,
        margin: f64,
    },
    BlowUp {
        t: f64,
    },
}

/// Backward solution on a uniform grid, `p[k][i] = P(t_k, i)`.
///
/// Nodes before `first_valid` were never reached (their entries are NaN).
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub players: Players,
    pub p: Vec<Vec<Mat>>,
    /// `λ_min(N11)` per node and regime.
    pub delta1: Vec<Vec<f64>>,
    /// `-λ_max(N22)` per node and regime.
    pub delta2: Vec<Vec<f64>>,
    pub status: Status,
    pub first_valid: usize,
    /// Largest integral-form residual `‖P(t_k) - G + ∫ Ṗ‖` when solved.
    pub residual: Option<f64>,
}

impl RiccatiSolution {
    pub fn is_solved(&self) -> bool {
        self.status == Status::Solved
    }

    pub fn regime_count(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    pub fn at(&self, k: usize, i: usize) -> &Mat {
        &self.p[k][i]
    }

    /// Smallest `(δ1, δ2)` over the computed nodes.
    pub fn min_margins(&self) -> (f64, f64) {
        let fold = |d: &Vec<Vec<f64>>| {
            d[self.first_valid..].iter().flatten().copied().fold(f64::INFINITY, f64::min)
        };
        (fold(&self.delta1), fold(&self.delta2))
    }

    pub(crate) fn require_solved(&self) -> Result<()> {
        if self.is_solved() {
            Ok(())
        } else {
            Err(Error::Unsolved(format!("{:?}", self.status)))
        }
    }
}

/// Two-player constrained equations.
pub fn solve_cdre(model: &GameModel, grid: &TimeGrid, opts: &SolveOptions) -> RiccatiSolution {
    solve_with(model, grid, opts, Players::Both)
}

/// Player `k`'s own equations (`k` = 1 or 2), the other control frozen at
/// zero. Player 1 needs `N11 ≥ δ`, player 2 needs `N22 ≤ -δ`.
pub fn solve_single_player(model: &GameModel, k: u8, grid: &TimeGrid, opts: &SolveOptions) -> Result<RiccatiSolution> {
    let players = match k {
        1 => Players::First,
        2 => Players::Second,
        _ => return Err(Error::InvalidModel(format!("player must be 1 or 2, got {k}"))),
    };
    Ok(solve_with(model, grid, opts, players))
}

fn margins_of(model: &GameModel, cell: usize, pall: &[Mat], players: Players) -> Vec<(f64, f64)> {
    (0..model.regime_count())
        .map(|i| {
            let (d1, d2) = assemble_cell(model, model.cell(cell, i), i, pall, players).margins();
            match players {
                Players::Both => (d1, d2),
                // The lone block sits in the N11 slot for player 1 ...
                Players::First => (d1, f64::INFINITY),
                // ... and, with m1 = 0, in the N22 slot for player 2.
                Players::Second => (f64::INFINITY, d2),
            }
        })
        .collect()
}

fn violation(t: f64, margins: &[(f64, f64)], delta_min: f64) -> Option<Status> {
    for (i, &(d1, d2)) in margins.iter().enumerate() {
        if !(d1 >= delta_min) {
            return Some(Status::ConstraintViolated { t, regime: i + 1, player: 1, margin: d1 });
        }
        if !(d2 >= delta_min) {
            return Some(Status::ConstraintViolated { t, regime: i + 1, player: 2, margin: d2 });
        }
    }
    None
}

fn indefinite_status(e: &IndefinitenessError, t: f64) -> Status {
    let player = match e.block {
        Block::Leading => 1,
        Block::Schur => 2,
    };
    let margin = if player == 1 { e.eigenvalue } else { -e.eigenvalue };
    Status::ConstraintViolated { t, regime: e.regime.map_or(0, |i| i + 1), player, margin }
}

/// Backward RK4 from `P(T, i) = G(i)` on `grid`, for the chosen players.
pub fn solve_with(model: &GameModel, grid: &TimeGrid, opts: &SolveOptions, players: Players) -> RiccatiSolution {
    let l = model.regime_count();
    let steps = grid.steps();
    let h = grid.step();
    let nan = Mat::from_element(model.n, model.n, f64::NAN);
    let mut p = vec![vec![nan; l]; steps + 1];
    let mut delta1 = vec![vec![f64::NAN; l]; steps + 1];
    let mut delta2 = vec![vec![f64::NAN; l]; steps + 1];
    let mut status = Status::Solved;

    p[steps] = (0..l).map(|i| linalg::symmetrize(model.terminal(i))).collect();
    let record = |k: usize, p: &[Mat], d1: &mut Vec<Vec<f64>>, d2: &mut Vec<Vec<f64>>| {
        let m = margins_of(model, model.grid.cell_of(grid.node(k)), p, players);
        d1[k] = m.iter().map(|x| x.0).collect();
        d2[k] = m.iter().map(|x| x.1).collect();
        violation(grid.node(k), &m, opts.delta_min)
    };
    let mut first_valid = steps;
    if let Some(s) = record(steps, &p[steps], &mut delta1, &mut delta2) {
        status = s;
    }

    if status == Status::Solved {
        for k in (0..steps).rev() {
            let (t0, t1) = (grid.node(k), grid.node(k + 1));
            let cell = model.grid.cell_of(0.5 * (t0 + t1));
            let stepped = rk4_step(&p[k + 1], -h, |_, y: &Vec<Mat>| rhs_cell(model, cell, y, players));
            let next = match stepped {
                Ok(v) => v,
                Err(e) => {
                    status = indefinite_status(&e, t1);
                    break;
                }
            };
            let next: Vec<Mat> = next.iter().map(linalg::symmetrize).collect();
            if next.iter().any(|m| !linalg::all_finite(m) || linalg::sym_norm(m) > opts.p_max) {
                status = Status::BlowUp { t: t0 };
                break;
            }
            p[k] = next;
            first_valid = k;
            if let Some(s) = record(k, &p[k], &mut delta1, &mut delta2) {
                status = s;
                break;
            }
        }
    }

    let mut sol = RiccatiSolution { grid: *grid, players, p, delta1, delta2, status, first_valid, residual: None };
    if sol.is_solved() {
        sol.residual = integral_residual(model, &sol).ok();
    }
    sol
}

/// `max_k,i ‖P(t_k,i) - G(i) + ∫_{t_k}^T Ṗ(s,i) ds‖_F` with the integral
/// taken by Simpson's rule per cell; the midpoint state comes from an
/// independent half-step RK4 from `t_{k+1}`.
fn integral_residual(model: &GameModel, sol: &RiccatiSolution) -> Result<f64, IndefinitenessError> {
    let grid = &sol.grid;
    let h = grid.step();
    let l = model.regime_count();
    let players = sol.players;
    let mut integral = vec![Mat::zeros(model.n, model.n); l];
    let mut worst = 0.0_f64;
    for k in (0..grid.steps()).rev() {
        let (t0, t1) = (grid.node(k), grid.node(k + 1));
        let cell = model.grid.cell_of(0.5 * (t0 + t1));
        let f = |y: &[Mat]| rhs_cell(model, cell, y, players);
        let mid = rk4_step(&sol.p[k + 1], -0.5 * h, |_: Stage, y: &Vec<Mat>| f(y))?;
        let (f0, fm, f1) = (f(&sol.p[k])?, f(&mid)?, f(&sol.p[k + 1])?);
        for i in 0..l {
            integral[i] += (&f0[i] + &fm[i] * 4.0 + &f1[i]) * (h / 6.0);
            let r = (&sol.p[k][i] - model.terminal(i) + &integral[i]).norm();
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `min λ_min(P - P1)` over nodes and regimes.
    pub lower_margin: f64,
    /// `min λ_min(P2 - P)`.
    pub upper_margin: f64,
    /// `(t, regime)` of the two minima, regimes one-based.
    pub lower_at: (f64, usize),
    pub upper_at: (f64, usize),
    pub pass: bool,
}

pub const COMPARISON_TOL: f64 = 1e-7;

/// Checks `P1 ≤ P ≤ P2` in the Loewner order at every node.
pub fn comparison_check(p: &RiccatiSolution, p1: &RiccatiSolution, p2: &RiccatiSolution) -> Result<ComparisonReport> {
    for (name, s) in [("P1", p1), ("P2", p2)] {
        if s.grid != p.grid || s.regime_count() != p.regime_count() {
            return Err(Error::GridMismatch(format!("{name} is on a different grid")));
        }
    }
    for s in [p, p1, p2] {
        s.require_solved()?;
    }
    let mut lower = (f64::INFINITY, (0.0, 0));
    let mut upper = (f64::INFINITY, (0.0, 0));
    for k in 0..=p.grid.steps() {
        let t = p.grid.node(k);
        for i in 0..p.regime_count() {
            let lo = linalg::min_eigenvalue(&(&p.p[k][i] - &p1.p[k][i]));
            let hi = linalg::min_eigenvalue(&(&p2.p[k][i] - &p.p[k][i]));
            if lo < lower.0 {
                lower = (lo, (t, i + 1));
            }
            if hi < upper.0 {
                upper = (hi, (t, i + 1));
            }
        }
    }
    Ok(ComparisonReport {
        lower_margin: lower.0,
        upper_margin: upper.0,
        lower_at: lower.1,
        upper_at: upper.1,
        pass: lower.0 >= -COMPARISON_TOL && upper.0 >= -COMPARISON_TOL,
    })
}
