//! The offset equation for `η`, the feedback offset `ν̂`, and the value.
//!
//! With inhomogeneous terms that depend only on `(t, regime)` the offset
//! process is `η(t) = η̄(t, α(t))`, its Brownian part vanishes, and its jump
//! parts are `η̄(t, j) - η̄(t, i)`. What is left is a linear system of ODEs,
//! one `n`-vector per regime, solved backward on the Riccati grid.

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{CellCoefficients, GameModel, Players, RegimeIndex, StackedView, TimeGrid};
use crate::ode::{rk4_step, Stage};
use crate::riccati::{assemble_cell, RiccatiCoefficients, RiccatiSolution};

/// `η̄(t_k, i)` on the Riccati grid, indexed `[node][regime]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaSolution {
    pub grid: TimeGrid,
    pub eta: Vec<Vec<Vector>>,
}

impl EtaSolution {
    pub fn at(&self, k: usize, i: usize) -> &Vector {
        &self.eta[k][i]
    }

    /// Jump coefficients `η̄(t_k, j) - η̄(t_k, i)` for every target `j`.
    pub fn jump_terms(&self, k: usize, i: usize) -> Vec<Vector> {
        self.eta[k].iter().map(|e| e - &self.eta[k][i]).collect()
    }
}

/// `ρ̃ = Bᵀη + DᵀPσ + ρ` and `ν̂ = -N⁻¹ρ̃` per node and regime.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackOffset {
    pub grid: TimeGrid,
    pub rho_tilde: Vec<Vec<Vector>>,
    pub nu: Vec<Vec<Vector>>,
    /// `max ‖N ν̂ + ρ̃‖` over nodes and regimes.
    pub residual: f64,
}

/// Per-regime `(P, L N⁻¹)` at one time.
struct Frozen {
    p: Vec<Mat>,
    gain: Vec<Mat>,
}

fn coefficients(model: &GameModel, cell: usize, pall: &[Mat]) -> Vec<RiccatiCoefficients> {
    (0..model.regime_count())
        .map(|i| assemble_cell(model, model.cell(cell, i), i, pall, Players::Both))
        .collect()
}

fn freeze(model: &GameModel, cell: usize, pall: Vec<Mat>, t: f64) -> Result<Frozen> {
    let gain = coefficients(model, cell, &pall)
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let ninv = c.n_inverse().map_err(|e| Error::Indefinite(e.at(t, i)))?;
            Ok(&c.l * ninv)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Frozen { p: pall, gain })
}

fn eta_rhs(model: &GameModel, cell: usize, frozen: &Frozen, eta: &[Vector]) -> Vec<Vector> {
    (0..model.regime_count())
        .map(|i| {
            let c: &CellCoefficients = model.cell(cell, i);
            let v = StackedView::of(c, Players::Both);
            let (p, k) = (&frozen.p[i], &frozen.gain[i]);
            let mut drift = (c.a.transpose() - k * v.b.transpose()) * &eta[i]
                + (c.c.transpose() - k * v.d.transpose()) * (p * &c.vol)
                - k * &v.rho
                + p * &c.drift
                + &c.q_lin;
            for (j, ej) in eta.iter().enumerate() {
                let rate = model.generator.rate(i, j);
                if j != i && rate != 0.0 {
                    drift += (ej - &eta[i]) * rate;
                }
            }
            -drift
        })
        .collect()
}

/// Backward RK4 for `η̄` from `η̄(T, i) = g(i)`. Riccati values inside a
/// step are linearly interpolated between the stored nodes.
pub fn solve_eta(model: &GameModel, riccati: &RiccatiSolution) -> Result<EtaSolution> {
    riccati.require_solved()?;
    let grid = riccati.grid;
    let (l, steps, h) = (model.regime_count(), grid.steps(), grid.step());
    let mut eta = vec![vec![Vector::zeros(model.n); l]; steps + 1];
    eta[steps] = model.regimes.iter().map(|r| r.terminal_lin.clone()).collect();

    let homogeneous = model.is_homogeneous();
    for k in (0..steps).rev() {
        if homogeneous {
            continue;
        }
        let (t0, t1) = (grid.node(k), grid.node(k + 1));
        let tm = 0.5 * (t0 + t1);
        let cell = model.grid.cell_of(tm);
        let mid: Vec<Mat> = (0..l).map(|i| (&riccati.p[k][i] + &riccati.p[k + 1][i]) * 0.5).collect();
        let start = freeze(model, cell, riccati.p[k + 1].clone(), t1)?;
        let middle = freeze(model, cell, mid, tm)?;
        let end = freeze(model, cell, riccati.p[k].clone(), t0)?;
        eta[k] = rk4_step(&eta[k + 1], -h, |stage, y: &Vec<Vector>| {
            let frozen = match stage {
                Stage::Start => &start,
                Stage::Middle => &middle,
                Stage::End => &end,
            };
            Ok::<_, Error>(eta_rhs(model, cell, frozen, y))
        })?;
    }
    Ok(EtaSolution { grid, eta })
}

fn check_grids(riccati: &RiccatiSolution, eta: &EtaSolution) -> Result<()> {
    if riccati.grid != eta.grid {
        return Err(Error::GridMismatch("Riccati and offset solutions use different grids".into()));
    }
    Ok(())
}

/// `ρ̃` and `ν̂` at every node, coefficients taken at `t_k`.
pub fn feedback_offset(model: &GameModel, riccati: &RiccatiSolution, eta: &EtaSolution) -> Result<FeedbackOffset> {
    riccati.require_solved()?;
    check_grids(riccati, eta)?;
    let grid = riccati.grid;
    let mut rho_tilde = Vec::with_capacity(grid.steps() + 1);
    let mut nu = Vec::with_capacity(grid.steps() + 1);
    let mut residual = 0.0_f64;
    for k in 0..=grid.steps() {
        let t = grid.node(k);
        let cell = model.grid.cell_of(t);
        let coeffs = coefficients(model, cell, &riccati.p[k]);
        let mut rt_row = Vec::with_capacity(coeffs.len());
        let mut nu_row = Vec::with_capacity(coeffs.len());
        for (i, c) in coeffs.iter().enumerate() {
            let cc = model.cell(cell, i);
            let v = StackedView::of(cc, Players::Both);
            let rt = v.b.transpose() * &eta.eta[k][i] + v.d.transpose() * (&riccati.p[k][i] * &cc.vol) + &v.rho;
            let ninv = c.n_inverse().map_err(|e| Error::Indefinite(e.at(t, i)))?;
            let n_hat = -(&ninv * &rt);
            residual = residual.max((&c.n * &n_hat + &rt).norm());
            rt_row.push(rt);
            nu_row.push(n_hat);
        }
        rho_tilde.push(rt_row);
        nu.push(nu_row);
    }
    Ok(FeedbackOffset { grid, rho_tilde, nu, residual })
}

/// Regime probabilities `p(t_k)` from `p' = pΠ`, `p(0) = e_i`.
pub fn regime_probabilities(model: &GameModel, grid: &TimeGrid, i: RegimeIndex) -> Vec<Vector> {
    let l = model.regime_count();
    let pit = model.generator.matrix().transpose();
    let mut p = Vector::zeros(l);
    p[i.index()] = 1.0;
    let mut out = Vec::with_capacity(grid.steps() + 1);
    out.push(p.clone());
    for _ in 0..grid.steps() {
        p = rk4_step(&p, grid.step(), |_, y: &Vector| Ok::<_, ()>(&pit * y)).expect("infallible");
        out.push(p.clone());
    }
    out
}

/// Game value `V(x, i)`: the quadratic and linear parts at time zero plus
/// the expected running correction, averaged over regimes with the forward
/// Kolmogorov probabilities and integrated by the trapezoid rule.
pub fn value(model: &GameModel, riccati: &RiccatiSolution, eta: &EtaSolution, x: &Vector, i: RegimeIndex) -> Result<f64> {
    riccati.require_solved()?;
    check_grids(riccati, eta)?;
    if x.len() != model.n {
        return Err(Error::Dimension(format!("initial state has length {}, expected {}", x.len(), model.n)));
    }
    if i.index() >= model.regime_count() {
        return Err(Error::RegimeOutOfRange { value: i.one_based(), count: model.regime_count() });
    }
    let p0 = &riccati.p[0][i.index()];
    let quadratic = x.dot(&(p0 * x)) + 2.0 * eta.eta[0][i.index()].dot(x);
    if model.is_homogeneous() {
        return Ok(quadratic);
    }

    let grid = riccati.grid;
    let offset = feedback_offset(model, riccati, eta)?;
    let probs = regime_probabilities(model, &grid, i);
    let integrand: Vec<f64> = (0..=grid.steps())
        .map(|k| {
            let cell = model.grid.cell_of(grid.node(k));
            (0..model.regime_count())
                .map(|j| {
                    let c = model.cell(cell, j);
                    let sigma = &c.vol;
                    // -⟨N⁻¹ρ̃, ρ̃⟩ = ⟨ν̂, ρ̃⟩.
                    let f = sigma.dot(&(&riccati.p[k][j] * sigma))
                        + 2.0 * eta.eta[k][j].dot(&c.drift)
                        + offset.nu[k][j].dot(&offset.rho_tilde[k][j]);
                    probs[k][j] * f
                })
                .sum()
        })
        .collect();
    let h = grid.step();
    let running: f64 = integrand.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
    Ok(quadratic + running)
}
