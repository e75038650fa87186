//! Monte-Carlo probe of the saddle inequalities
//! `J(u1*, u2* + δ2) ≤ J(u1*, u2*) ≤ J(u1* + δ1, u2*)`.
//!
//! The center run uses the feedback strategy and records the realized
//! open-loop controls `u*`. Each arm then replays `u*` with one player's
//! control shifted by a perturbation, on the same chain path and Brownian
//! increments. Arms are judged on paired differences, whose standard error
//! is much smaller than that of the costs themselves.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::cost::{path_cost, CostAccumulator};
use super::FeedbackStrategy;
use crate::chain::stream_rng;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{GameModel, RegimeIndex};
use crate::sim::{par_map, scenario, ControlLaw, ControlPath, Estimate, Observer, Stepper};

/// Width of the acceptance band, in standard errors.
pub const SIGMA_BAND: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddleConfig {
    pub paths: usize,
    pub seed: u64,
    pub workers: usize,
    /// Perturbations per player.
    pub perturbations: usize,
    /// Standard deviation of each perturbation level.
    pub amplitude: f64,
    /// Number of constant pieces per perturbation.
    pub pieces: usize,
}

impl Default for SaddleConfig {
    fn default() -> Self {
        Self { paths: 10_000, seed: 2024, workers: 1, perturbations: 8, amplitude: 0.2, pieces: 4 }
    }
}

/// Open-loop deviations for each player.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbations {
    pub first: Vec<ControlPath>,
    pub second: Vec<ControlPath>,
}

/// `count` piecewise-constant deviations per player, drawn in `±` pairs so
/// that first-order effects cancel on average across each pair.
pub fn seeded_perturbations(model: &GameModel, count: usize, amplitude: f64, pieces: usize, seed: u64) -> Perturbations {
    let steps = model.grid.steps();
    let pieces = pieces.clamp(1, steps);
    let draw = |dim: usize, stream: u64| {
        let mut rng = stream_rng(seed, stream);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let levels: Vec<f64> = (0..pieces * dim).map(|_| amplitude * rng.sample::<f64, _>(StandardNormal)).collect();
            let mut plus = ControlPath::zeros(dim, steps);
            for k in 0..steps {
                let piece = k * pieces / steps;
                plus.row_mut(k).copy_from_slice(&levels[piece * dim..(piece + 1) * dim]);
            }
            let minus = ControlPath::zeros(dim, steps).plus_scaled(-1.0, &plus);
            out.push(plus);
            if out.len() < count {
                out.push(minus);
            }
        }
        out
    };
    Perturbations { first: draw(model.m1, u64::MAX), second: draw(model.m2, u64::MAX - 1) }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmResult {
    pub player: u8,
    pub index: usize,
    /// Estimated cost of the arm.
    pub cost: Estimate,
    /// Paired difference `J(arm) - J(center)`.
    pub difference: Estimate,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleReport {
    pub paths: usize,
    pub seed: u64,
    pub x: Vec<f64>,
    /// One-based initial regime.
    pub regime: usize,
    pub center: Estimate,
    pub arms: Vec<ArmResult>,
    pub pass: bool,
}

impl SaddleReport {
    /// `|center - value| ≤ 3 SE`.
    pub fn center_agrees_with(&self, value: f64) -> bool {
        (self.center.mean - value).abs() <= SIGMA_BAND * self.center.std_error
    }

    /// Whether some arm of `player` improves on the center by more than
    /// the band (cheaper for player 1, dearer for player 2).
    pub fn improvable_by(&self, player: u8) -> bool {
        self.arms.iter().any(|a| a.player == player && !a.pass)
    }
}

/// Records the realized controls while accumulating the cost.
struct Center<'m> {
    cost: CostAccumulator<'m>,
    m1: usize,
    u1: ControlPath,
    u2: ControlPath,
}

impl Observer for Center<'_> {
    fn step(&mut self, k: usize, regime: usize, x: &Vector, u: &Vector) {
        self.cost.step(k, regime, x, u);
        let (a, b) = u.as_slice().split_at(self.m1);
        self.u1.row_mut(k).copy_from_slice(a);
        self.u2.row_mut(k).copy_from_slice(b);
    }

    fn finish(&mut self, regime: usize, x: &Vector) {
        self.cost.finish(regime, x);
    }
}

fn check_inputs(model: &GameModel, x: &Vector, i: RegimeIndex, paths: usize) -> Result<()> {
    if paths < 2 {
        return Err(Error::InvalidModel(format!("need at least 2 paths, got {paths}")));
    }
    if x.len() != model.n {
        return Err(Error::Dimension(format!("initial state has length {}, expected {}", x.len(), model.n)));
    }
    if i.index() >= model.regime_count() {
        return Err(Error::RegimeOutOfRange { value: i.one_based(), count: model.regime_count() });
    }
    Ok(())
}

/// Per path: the center cost followed by the cost of every arm in `arms`
/// (`(player, δ, scale)`).
fn paired_costs(
    model: &GameModel,
    strategy: &FeedbackStrategy,
    x: &Vector,
    i: RegimeIndex,
    cfg: &SaddleConfig,
    arms: &[(u8, &ControlPath, f64)],
) -> Result<Vec<Vec<f64>>> {
    let stepper = Stepper::new(model);
    let steps = model.grid.steps();
    par_map(cfg.paths, cfg.workers, |k| {
        let (path, noise) = scenario(model, i, cfg.seed, k as u64);
        let mut center = Center {
            cost: CostAccumulator::new(model),
            m1: model.m1,
            u1: ControlPath::zeros(model.m1, steps),
            u2: ControlPath::zeros(model.m2, steps),
        };
        stepper.run(&ControlLaw::feedback(strategy), &path, &noise, x, i.index(), &mut center)?;
        let mut out = Vec::with_capacity(arms.len() + 1);
        out.push(center.cost.total());
        for &(player, delta, scale) in arms {
            let cost = if player == 1 {
                let u1 = center.u1.plus_scaled(scale, delta);
                path_cost(&stepper, &ControlLaw::explicit(&u1, &center.u2), &path, &noise, x, i.index())?
            } else {
                let u2 = center.u2.plus_scaled(scale, delta);
                path_cost(&stepper, &ControlLaw::explicit(&center.u1, &u2), &path, &noise, x, i.index())?
            };
            out.push(cost);
        }
        Ok(out)
    })
}

/// Center estimate and the saddle check of every perturbation.
pub fn saddle_probe(
    model: &GameModel,
    strategy: &FeedbackStrategy,
    x: &Vector,
    i: RegimeIndex,
    cfg: &SaddleConfig,
    perturbations: &Perturbations,
) -> Result<SaddleReport> {
    check_inputs(model, x, i, cfg.paths)?;
    let arms: Vec<(u8, &ControlPath, f64)> = perturbations
        .first
        .iter()
        .map(|d| (1, d, 1.0))
        .chain(perturbations.second.iter().map(|d| (2, d, 1.0)))
        .collect();
    let rows = paired_costs(model, strategy, x, i, cfg, &arms)?;
    let column = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    let centers = column(0);
    let center = Estimate::of(&centers);

    let mut results = Vec::with_capacity(arms.len());
    let mut counters = [0usize; 2];
    for (j, &(player, _, _)) in arms.iter().enumerate() {
        let costs = column(j + 1);
        let diffs: Vec<f64> = costs.iter().zip(&centers).map(|(a, c)| a - c).collect();
        let difference = Estimate::of(&diffs);
        let band = SIGMA_BAND * difference.std_error;
        let pass = if player == 1 { difference.mean >= -band } else { difference.mean <= band };
        let index = counters[(player - 1) as usize];
        counters[(player - 1) as usize] += 1;
        results.push(ArmResult { player, index, cost: Estimate::of(&costs), difference, pass });
    }
    let pass = results.iter().all(|a| a.pass);
    Ok(SaddleReport {
        paths: cfg.paths,
        seed: cfg.seed,
        x: x.iter().copied().collect(),
        regime: i.one_based(),
        center,
        arms: results,
        pass,
    })
}

/// Paired differences `J(u* + s δ) - J(u*)` for each `s` in `scales`, with
/// `δ` applied to `player`'s control.
#[allow(clippy::too_many_arguments)]
pub fn arm_differences(
    model: &GameModel,
    strategy: &FeedbackStrategy,
    x: &Vector,
    i: RegimeIndex,
    cfg: &SaddleConfig,
    player: u8,
    delta: &ControlPath,
    scales: &[f64],
) -> Result<Vec<Estimate>> {
    check_inputs(model, x, i, cfg.paths)?;
    if player != 1 && player != 2 {
        return Err(Error::InvalidModel(format!("player must be 1 or 2, got {player}")));
    }
    let arms: Vec<_> = scales.iter().map(|&s| (player, delta, s)).collect();
    let rows = paired_costs(model, strategy, x, i, cfg, &arms)?;
    Ok((0..scales.len())
        .map(|j| Estimate::of(&rows.iter().map(|r| r[j + 1] - r[0]).collect::<Vec<_>>()))
        .collect())
}
