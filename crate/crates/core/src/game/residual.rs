//! First-order condition along a simulated closed-loop path, with the
//! adjoint pair rebuilt from the decoupling `Y = P X + η`,
//! `Z = P (C X + D u + σ)`.

use serde::Serialize;

use super::FeedbackStrategy;
use crate::affine::EtaSolution;
use crate::chain::ChainPath;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{GameModel, Players, RegimeIndex, StackedView};
use crate::riccati::RiccatiSolution;
use crate::sim::{simulate, ControlLaw, NoisePath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityResidual {
    /// `max_k ‖BᵀY + DᵀZ + S X + R u + ρ‖`.
    pub max_residual: f64,
    /// `max_k |X_k|_∞`.
    pub state_sup: f64,
}

impl StationarityResidual {
    /// Whether the residual is below `tol · (1 + sup|X|)`.
    pub fn within(&self, tol: f64) -> bool {
        self.max_residual <= tol * (1.0 + self.state_sup)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn fbsde_residual(
    model: &GameModel,
    riccati: &RiccatiSolution,
    eta: &EtaSolution,
    strategy: &FeedbackStrategy,
    path: &ChainPath,
    noise: &NoisePath,
    x: &Vector,
    i: RegimeIndex,
) -> Result<StationarityResidual> {
    riccati.require_solved()?;
    if eta.grid != riccati.grid || strategy.grid != riccati.grid || riccati.grid != model.grid {
        return Err(Error::GridMismatch("residual inputs live on different grids".into()));
    }
    let traj = simulate(model, &ControlLaw::feedback(strategy), path, noise, x, i)?;
    let mut worst = 0.0_f64;
    for (k, u) in traj.u.iter().enumerate() {
        let r = traj.regimes[k];
        let c = model.at(model.grid.node(k), r);
        let v = StackedView::of(c, Players::Both);
        let p = &riccati.p[k][r];
        let xk = &traj.x[k];
        let y = p * xk + &eta.eta[k][r];
        let z = p * (&c.c * xk + &v.d * u + &c.vol);
        let res = v.b.transpose() * y + v.d.transpose() * z + &v.s * xk + &v.r * u + &v.rho;
        worst = worst.max(res.norm());
    }
    Ok(StationarityResidual { max_residual: worst, state_sup: traj.sup_norm() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::solve_eta;
    use crate::builtin;
    use crate::chain::Generator;
    use crate::game::tests_support::builtin_strategy;
    use crate::linalg::Mat;
    use crate::riccati::{solve_cdre, SolveOptions};
    use crate::sim::scenario;

    fn residual_for(model: &GameModel, strategy: &FeedbackStrategy, seed: u64) -> StationarityResidual {
        let p = solve_cdre(model, &model.grid, &SolveOptions::default());
        let eta = solve_eta(model, &p).unwrap();
        let i = RegimeIndex::new(1, model.regime_count()).unwrap();
        let (path, noise) = scenario(model, i, seed, 0);
        fbsde_residual(model, &p, &eta, strategy, &path, &noise, &Vector::from_element(model.n, 1.0), i).unwrap()
    }

    #[test]
    fn zero_model_has_zero_residual() {
        let model = builtin::zero_game(1, 1, 1, Generator::new(Mat::zeros(1, 1)).unwrap(), vec![Mat::zeros(1, 1)], 50);
        let s = builtin_strategy(&model);
        assert_eq!(residual_for(&model, &s, 1).max_residual, 0.0);
    }

    #[test]
    fn builtin_saddle_is_stationary() {
        let model = builtin::three_regime();
        let s = builtin_strategy(&model);
        for seed in 0..5 {
            let r = residual_for(&model, &s, seed);
            assert!(r.within(1e-6), "{r:?}");
        }
    }

    #[test]
    fn shifted_offset_shows_up_as_n_times_shift() {
        let model = builtin::three_regime();
        let s = builtin_strategy(&model);
        let shift = Vector::from_vec(vec![0.2, -0.1]);
        let p = solve_cdre(&model, &model.grid, &SolveOptions::default());
        let eta = solve_eta(&model, &p).unwrap();
        let i = RegimeIndex::new(1, 3).unwrap();
        let path = ChainPath::constant(0, 1.0);
        let noise = NoisePath::zero(&model.grid);
        let x = Vector::zeros(1);
        let r = fbsde_residual(&model, &p, &eta, &s.with_offset_shift(&shift), &path, &noise, &x, i).unwrap();
        // N u + LᵀX + ρ̃ = N c whatever the state, so the residual is the
        // largest ‖N c‖ over the cells.
        let expected = (0..1000)
            .map(|k| {
                let c = crate::riccati::assemble(&model, model.grid.node(k), i, &p.p[k]).unwrap();
                (&c.n * &shift).norm()
            })
            .fold(0.0, f64::max);
        assert!((r.max_residual - expected).abs() <= 1e-6 * expected, "{} vs {expected}", r.max_residual);
    }
}
