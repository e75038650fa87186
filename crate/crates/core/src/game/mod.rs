//! Closed-loop saddle strategy and the checks around it.

mod certificate;
pub(crate) mod cost;
mod residual;
mod saddle;

pub use certificate::{ucc_certificate, ucc_tables, CertificateOptions, PlayerBound, UccCertificate, UccTables};
pub use cost::{cost, trajectory_cost};
pub use residual::{fbsde_residual, StationarityResidual};
pub use saddle::{
    arm_differences, saddle_probe, seeded_perturbations, ArmResult, Perturbations, SaddleConfig, SaddleReport,
};

use crate::affine::FeedbackOffset;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{GameModel, Players, TimeGrid};
use crate::riccati::{assemble_cell, RiccatiSolution};

/// `u = Θ̂(t, α) X + ν̂(t, α)` tabulated on the grid, `[node][regime]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackStrategy {
    pub grid: TimeGrid,
    pub m1: usize,
    /// `Θ̂`, `m × n`; player 1 owns the first `m1` rows.
    pub gains: Vec<Vec<Mat>>,
    /// `ν̂`, length `m`.
    pub offsets: Vec<Vec<Vector>>,
    /// `max ‖N Θ̂ + Lᵀ‖` over nodes and regimes.
    pub gain_residual: f64,
}

impl FeedbackStrategy {
    fn rows(&self, player: Players) -> (usize, usize) {
        let m = self.gains[0][0].nrows();
        match player {
            Players::First => (0, self.m1),
            Players::Second => (self.m1, m - self.m1),
            Players::Both => (0, m),
        }
    }

    /// Player `player`'s block of `Θ̂(t_k, i)`.
    pub fn gain_of(&self, player: Players, k: usize, i: usize) -> Mat {
        let (start, len) = self.rows(player);
        self.gains[k][i].rows(start, len).into_owned()
    }

    /// Same strategy with `shift` added to every entry of one player's gain.
    pub fn with_gain_shift(&self, player: Players, shift: f64) -> Self {
        let (start, len) = self.rows(player);
        let mut out = self.clone();
        for g in out.gains.iter_mut().flatten() {
            g.rows_mut(start, len).add_scalar_mut(shift);
        }
        out
    }

    /// Same strategy with `shift` added to `ν̂` everywhere.
    pub fn with_offset_shift(&self, shift: &Vector) -> Self {
        let mut out = self.clone();
        for v in out.offsets.iter_mut().flatten() {
            *v += shift;
        }
        out
    }
}

/// `Θ̂ = -N⁻¹Lᵀ` at every node, with `ν̂` taken from `offset`.
pub fn build_strategy(model: &GameModel, riccati: &RiccatiSolution, offset: &FeedbackOffset) -> Result<FeedbackStrategy> {
    riccati.require_solved()?;
    if offset.grid != riccati.grid {
        return Err(Error::GridMismatch("offset and Riccati solutions use different grids".into()));
    }
    let grid = riccati.grid;
    let mut gains = Vec::with_capacity(grid.steps() + 1);
    let mut residual = 0.0_f64;
    for k in 0..=grid.steps() {
        let t = grid.node(k);
        let cell = model.grid.cell_of(t);
        let row = (0..model.regime_count())
            .map(|i| {
                let c = assemble_cell(model, model.cell(cell, i), i, &riccati.p[k], Players::Both);
                let ninv = c.n_inverse().map_err(|e| Error::Indefinite(e.at(t, i)))?;
                let theta = -(ninv * c.l.transpose());
                residual = residual.max((&c.n * &theta + c.l.transpose()).norm());
                Ok(theta)
            })
            .collect::<Result<Vec<_>>>()?;
        gains.push(row);
    }
    Ok(FeedbackStrategy { grid, m1: model.m1, gains, offsets: offset.nu.clone(), gain_residual: residual })
}
