//! Euler-Maruyama simulation of the switching state equation and the
//! Monte-Carlo driver built on it.
//!
//! The chain is sampled exactly, then frozen at the left end of every grid
//! cell. Each Monte-Carlo path `k` owns two ChaCha streams (`2k` for the
//! chain, `2k + 1` for the Brownian increments), so estimates do not depend
//! on how paths are spread over workers.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{sample_path_with, stream_rng, ChainPath};
use crate::error::{Error, Result};
use crate::game::{cost, FeedbackStrategy};
use crate::linalg::Vector;
use crate::model::{GameModel, Players, RegimeIndex, StackedView, TimeGrid};

/// Brownian increments `ΔW_k ~ N(0, h)`, one per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub increments: Vec<f64>,
}

impl NoisePath {
    pub fn sample<R: Rng + ?Sized>(grid: &TimeGrid, rng: &mut R) -> Self {
        let sd = grid.step().sqrt();
        let increments = (0..grid.steps()).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        Self { increments }
    }

    pub fn from_seed(grid: &TimeGrid, seed: u64) -> Self {
        Self::sample(grid, &mut stream_rng(seed, 1))
    }

    pub fn zero(grid: &TimeGrid) -> Self {
        Self { increments: vec![0.0; grid.steps()] }
    }
}

/// Open-loop control values `u_k`, one row per grid cell, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    dim: usize,
    values: Vec<f64>,
}

impl ControlPath {
    pub fn zeros(dim: usize, steps: usize) -> Self {
        Self { dim, values: vec![0.0; dim * steps] }
    }

    pub fn from_rows(dim: usize, rows: &[Vector]) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension(format!("control row of length {}, expected {dim}", r.len())));
        }
        Ok(Self { dim, values: rows.iter().flat_map(|r| r.iter().copied()).collect() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        if self.dim == 0 {
            usize::MAX
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// `self + s · other`.
    pub fn plus_scaled(&self, s: f64, other: &ControlPath) -> ControlPath {
        assert_eq!(self.values.len(), other.values.len(), "control paths differ in shape");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        ControlPath { dim: self.dim, values }
    }
}

/// How one player chooses its control.
#[derive(Debug, Clone, Copy)]
pub enum PlayerLaw<'a> {
    /// `u_k = Θ̂(t_k, α) X_k + ν̂(t_k, α)`, this player's rows.
    Feedback(&'a FeedbackStrategy),
    Explicit(&'a ControlPath),
}

#[derive(Debug, Clone, Copy)]
pub struct ControlLaw<'a> {
    pub first: PlayerLaw<'a>,
    pub second: PlayerLaw<'a>,
}

impl<'a> ControlLaw<'a> {
    pub fn feedback(strategy: &'a FeedbackStrategy) -> Self {
        Self { first: PlayerLaw::Feedback(strategy), second: PlayerLaw::Feedback(strategy) }
    }

    pub fn explicit(first: &'a ControlPath, second: &'a ControlPath) -> Self {
        Self { first: PlayerLaw::Explicit(first), second: PlayerLaw::Explicit(second) }
    }
}

/// State at every node, control and regime on every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<Vector>,
    pub u: Vec<Vector>,
    /// Zero-based `α(t_k)` for `k = 0..=K`.
    pub regimes: Vec<usize>,
}

impl Trajectory {
    /// Player `k`'s realized controls as an explicit path.
    pub fn controls_of(&self, m1: usize, player: Players) -> ControlPath {
        let rows: Vec<Vector> = self
            .u
            .iter()
            .map(|u| match player {
                Players::First => u.rows(0, m1).into_owned(),
                Players::Second => u.rows(m1, u.len() - m1).into_owned(),
                Players::Both => u.clone(),
            })
            .collect();
        let dim = rows.first().map_or(0, Vector::len);
        ControlPath::from_rows(dim, &rows).expect("uniform rows")
    }

    pub fn sup_norm(&self) -> f64 {
        self.x.iter().map(|x| x.amax()).fold(0.0, f64::max)
    }
}

/// What the stepping loop reports.
pub(crate) trait Observer {
    /// State `x` and control `u` on cell `k`, regime `regime`.
    fn step(&mut self, k: usize, regime: usize, x: &Vector, u: &Vector);
    fn finish(&mut self, regime: usize, x: &Vector);
}

/// Stacked coefficient views per model cell and regime, computed once.
pub(crate) struct Stepper<'m> {
    pub model: &'m GameModel,
    views: Vec<Vec<StackedView>>,
}

impl<'m> Stepper<'m> {
    pub fn new(model: &'m GameModel) -> Self {
        let cells = model.regimes.iter().map(|r| r.cells.len()).max().unwrap_or(1);
        let views = (0..cells)
            .map(|c| (0..model.regime_count()).map(|i| StackedView::of(model.cell(c, i), Players::Both)).collect())
            .collect();
        Self { model, views }
    }

    fn view(&self, cell: usize, i: usize) -> &StackedView {
        let row = &self.views[cell.min(self.views.len() - 1)];
        &row[i]
    }

    fn check(&self, law: &ControlLaw<'_>, path: &ChainPath, noise: &NoisePath, x: &Vector, i: usize) -> Result<()> {
        let model = self.model;
        let steps = model.grid.steps();
        if x.len() != model.n {
            return Err(Error::Dimension(format!("initial state has length {}, expected {}", x.len(), model.n)));
        }
        if i >= model.regime_count() {
            return Err(Error::RegimeOutOfRange { value: i + 1, count: model.regime_count() });
        }
        if path.initial != i {
            return Err(Error::InvalidModel(format!(
                "chain path starts in regime {} but the run starts in {}",
                path.initial + 1,
                i + 1
            )));
        }
        if (path.horizon - model.horizon()).abs() > 1e-12 * model.horizon() {
            return Err(Error::GridMismatch(format!("chain path horizon {} != {}", path.horizon, model.horizon())));
        }
        if noise.increments.len() != steps {
            return Err(Error::GridMismatch(format!("{} noise increments for {steps} cells", noise.increments.len())));
        }
        for (player, dim) in [(&law.first, model.m1), (&law.second, model.m2)] {
            match player {
                PlayerLaw::Feedback(s) => {
                    if s.grid.steps() != steps || s.m1 != model.m1 || s.gains[0].len() != model.regime_count() {
                        return Err(Error::GridMismatch("feedback strategy does not fit the model grid".into()));
                    }
                }
                PlayerLaw::Explicit(c) => {
                    if c.dim() != dim || (dim > 0 && c.steps() != steps) {
                        return Err(Error::Dimension(format!(
                            "explicit control is {} x {}, expected {steps} x {dim}",
                            c.steps(),
                            c.dim()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Runs one path, reporting every step to `obs`.
    pub fn run<O: Observer>(
        &self,
        law: &ControlLaw<'_>,
        path: &ChainPath,
        noise: &NoisePath,
        x0: &Vector,
        i: usize,
        obs: &mut O,
    ) -> Result<()> {
        self.check(law, path, noise, x0, i)?;
        let model = self.model;
        let grid = model.grid;
        let (m1, m) = (model.m1, model.m());
        let h = grid.step();
        let mut x = x0.clone();
        let mut next = Vector::zeros(model.n);
        let mut u = Vector::zeros(m);
        for k in 0..grid.steps() {
            let t = grid.node(k);
            let regime = path.regime_at(t);
            let cell = model.grid.cell_of(t);
            let c = model.cell(cell, regime);
            let v = self.view(cell, regime);

            let feedback = [law.first, law.second].iter().find_map(|p| match p {
                PlayerLaw::Feedback(s) => Some(*s),
                PlayerLaw::Explicit(_) => None,
            });
            if let Some(s) = feedback {
                u.copy_from(&s.offsets[k][regime]);
                u.gemv(1.0, &s.gains[k][regime], &x, 1.0);
            }
            if let PlayerLaw::Explicit(cp) = law.first {
                u.rows_mut(0, m1).copy_from_slice(cp.row(k));
            }
            if let PlayerLaw::Explicit(cp) = law.second {
                u.rows_mut(m1, m - m1).copy_from_slice(cp.row(k));
            }
            obs.step(k, regime, &x, &u);

            let dw = noise.increments[k];
            next.copy_from(&x);
            next.gemv(h, &c.a, &x, 1.0);
            next.gemv(h, &v.b, &u, 1.0);
            next.axpy(h, &c.drift, 1.0);
            next.gemv(dw, &c.c, &x, 1.0);
            next.gemv(dw, &v.d, &u, 1.0);
            next.axpy(dw, &c.vol, 1.0);
            if !next.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { t: grid.node(k + 1) });
            }
            std::mem::swap(&mut x, &mut next);
        }
        obs.finish(path.regime_at(grid.horizon()), &x);
        Ok(())
    }
}

struct Recorder {
    traj: Trajectory,
}

impl Observer for Recorder {
    fn step(&mut self, _k: usize, regime: usize, x: &Vector, u: &Vector) {
        self.traj.x.push(x.clone());
        self.traj.u.push(u.clone());
        self.traj.regimes.push(regime);
    }

    fn finish(&mut self, regime: usize, x: &Vector) {
        self.traj.x.push(x.clone());
        self.traj.regimes.push(regime);
    }
}

/// Euler-Maruyama path of the state under `law`, started at `(x, i)` with
/// `path.initial == i`.
pub fn simulate(
    model: &GameModel,
    law: &ControlLaw<'_>,
    path: &ChainPath,
    noise: &NoisePath,
    x: &Vector,
    i: RegimeIndex,
) -> Result<Trajectory> {
    let steps = model.grid.steps();
    let mut rec = Recorder {
        traj: Trajectory {
            x: Vec::with_capacity(steps + 1),
            u: Vec::with_capacity(steps),
            regimes: Vec::with_capacity(steps + 1),
        },
    };
    Stepper::new(model).run(law, path, noise, x, i.index(), &mut rec)?;
    Ok(rec.traj)
}

/// Monte-Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub paths: usize,
    pub seed: u64,
    /// Worker threads. Does not affect results.
    pub workers: usize,
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Mean and `sd / √n` of `values`, summed in index order.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, std_error: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Self { mean, std_error: f64::NAN };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { mean, std_error: (var / n).sqrt() }
    }
}

/// Chain path and noise of Monte-Carlo path `index`.
pub fn scenario(model: &GameModel, i: RegimeIndex, seed: u64, index: u64) -> (ChainPath, NoisePath) {
    let path = sample_path_with(&model.generator, i.index(), model.horizon(), &mut stream_rng(seed, 2 * index));
    let noise = NoisePath::sample(&model.grid, &mut stream_rng(seed, 2 * index + 1));
    (path, noise)
}

/// `f(0), …, f(paths - 1)` evaluated on `workers` threads, returned in
/// index order.
pub fn par_map<T, F>(paths: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidModel(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..paths).into_par_iter().map(f).collect())
}

/// Mean cost of `law` over `cfg.paths` independent scenarios.
pub fn mc_estimate(model: &GameModel, law: &ControlLaw<'_>, x: &Vector, i: RegimeIndex, cfg: &McConfig) -> Result<Estimate> {
    if cfg.paths < 2 {
        return Err(Error::InvalidModel(format!("need at least 2 paths, got {}", cfg.paths)));
    }
    let stepper = Stepper::new(model);
    let costs = par_map(cfg.paths, cfg.workers, |k| {
        let (path, noise) = scenario(model, i, cfg.seed, k as u64);
        cost::path_cost(&stepper, law, &path, &noise, x, i.index())
    })?;
    Ok(Estimate::of(&costs))
}
