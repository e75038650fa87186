//! Pathwise performance functional: left-endpoint quadrature of the running
//! cost along the Euler-Maruyama grid plus the terminal term.

use crate::chain::ChainPath;
use crate::error::Result;
use crate::linalg::{Mat, Vector};
use crate::model::{GameModel, RegimeIndex};
use crate::sim::{ControlLaw, NoisePath, Observer, Stepper, Trajectory};

/// `leftᵀ M right` without temporaries.
fn bilinear(m: &Mat, left: &[f64], right: &[f64]) -> f64 {
    let mut s = 0.0;
    for (j, r) in right.iter().enumerate() {
        let mut col = 0.0;
        for (i, l) in left.iter().enumerate() {
            col += l * m[(i, j)];
        }
        s += col * r;
    }
    s
}

fn dot(a: &Vector, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) struct CostAccumulator<'m> {
    model: &'m GameModel,
    running: f64,
    terminal: f64,
}

impl<'m> CostAccumulator<'m> {
    pub fn new(model: &'m GameModel) -> Self {
        Self { model, running: 0.0, terminal: 0.0 }
    }

    pub fn total(&self) -> f64 {
        self.running * self.model.grid.step() + self.terminal
    }
}

impl Observer for CostAccumulator<'_> {
    fn step(&mut self, k: usize, regime: usize, x: &Vector, u: &Vector) {
        let model = self.model;
        let c = model.at(model.grid.node(k), regime);
        let (xs, us) = (x.as_slice(), u.as_slice());
        let (u1, u2) = us.split_at(model.m1);
        self.running += bilinear(&c.q, xs, xs)
            + 2.0 * bilinear(&c.s1, u1, xs)
            + 2.0 * bilinear(&c.s2, u2, xs)
            + bilinear(&c.r11, u1, u1)
            + 2.0 * bilinear(&c.r12, u1, u2)
            + bilinear(&c.r22, u2, u2)
            + 2.0 * dot(&c.q_lin, xs)
            + 2.0 * dot(&c.rho1, u1)
            + 2.0 * dot(&c.rho2, u2);
    }

    fn finish(&mut self, regime: usize, x: &Vector) {
        let r = &self.model.regimes[regime];
        let xs = x.as_slice();
        self.terminal = bilinear(&r.terminal, xs, xs) + 2.0 * dot(&r.terminal_lin, xs);
    }
}

pub(crate) fn path_cost(
    stepper: &Stepper<'_>,
    law: &ControlLaw<'_>,
    path: &ChainPath,
    noise: &NoisePath,
    x: &Vector,
    i: usize,
) -> Result<f64> {
    let mut acc = CostAccumulator::new(stepper.model);
    stepper.run(law, path, noise, x, i, &mut acc)?;
    Ok(acc.total())
}

/// Cost of one scenario under `law`.
pub fn cost(
    model: &GameModel,
    law: &ControlLaw<'_>,
    path: &ChainPath,
    noise: &NoisePath,
    x: &Vector,
    i: RegimeIndex,
) -> Result<f64> {
    path_cost(&Stepper::new(model), law, path, noise, x, i.index())
}

/// Cost of an already simulated trajectory.
pub fn trajectory_cost(model: &GameModel, traj: &Trajectory) -> f64 {
    let mut acc = CostAccumulator::new(model);
    for (k, u) in traj.u.iter().enumerate() {
        acc.step(k, traj.regimes[k], &traj.x[k], u);
    }
    let last = traj.x.len() - 1;
    acc.finish(traj.regimes[last], &traj.x[last]);
    acc.total()
}
