use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use mjgame_core::affine::{feedback_offset, solve_eta, value, EtaSolution};
use mjgame_core::game::{
    build_strategy, fbsde_residual, saddle_probe, seeded_perturbations, ucc_certificate, FeedbackStrategy,
    SaddleConfig, SaddleReport, UccCertificate,
};
use mjgame_core::linalg::Vector;
use mjgame_core::model::{self, Players, ValidationReport};
use mjgame_core::output::{self, to_json};
use mjgame_core::riccati::{
    comparison_check, solve_cdre, solve_single_player, ComparisonReport, RiccatiSolution, SolveOptions, Status,
};
use mjgame_core::sim::{par_map, scenario, simulate, ControlLaw};
use mjgame_core::{builtin, Error, GameModel, RegimeIndex};
use serde::Serialize;
use thiserror::Error;

use crate::config::{CommandKind, RunConfig};
use crate::tables;

/// Stationarity tolerance, relative to `1 + sup|X|`.
pub const RESIDUAL_TOL: f64 = 1e-6;
/// Closed-loop paths checked for stationarity.
pub const RESIDUAL_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Failed = 1,
    Input = 2,
    Constraint = 3,
    BlowUp = 4,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn from_pass(pass: bool) -> Self {
        if pass {
            Exit::Ok
        } else {
            Exit::Failed
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit(&self) -> Exit {
        match self {
            CliError::Core(Error::Indefinite(_)) => Exit::Constraint,
            CliError::Core(Error::NonFinite { .. }) => Exit::BlowUp,
            _ => Exit::Input,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses, checks and runs one command, printing its report to `out`.
pub fn run(kind: CommandKind, cfg: &RunConfig, out: &mut dyn Write) -> CliResult<Exit> {
    cfg.check(kind).map_err(CliError::Config)?;
    match kind {
        CommandKind::Validate => cmd_validate(cfg, out),
        CommandKind::Solve => cmd_solve(cfg, out),
        CommandKind::Certify => cmd_certify(cfg, out),
        CommandKind::SaddleCheck => cmd_saddle_check(cfg, out),
        CommandKind::Example => cmd_example(cfg, out),
    }
}

fn print(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .map_err(|source| CliError::Write { path: "<stdout>".into(), source })
}

fn load(cfg: &RunConfig) -> CliResult<(String, GameModel)> {
    let (name, model) = match &cfg.problem {
        Some(p) => (p.display().to_string(), model::load(p)?),
        None => ("builtin:three-regime".to_string(), builtin::three_regime()),
    };
    let model = match cfg.steps {
        Some(k) => model.with_steps(k)?,
        None => model,
    };
    Ok((name, model))
}

fn initial(cfg: &RunConfig, model: &GameModel) -> CliResult<(Vector, RegimeIndex)> {
    let x = match &cfg.x {
        Some(v) if v.len() != model.n => {
            return Err(CliError::Config(format!("--x has {} entries, the state has {}", v.len(), model.n)))
        }
        Some(v) => Vector::from_column_slice(v),
        None => Vector::from_element(model.n, 1.0),
    };
    Ok((x, RegimeIndex::new(cfg.regime, model.regime_count())?))
}

struct Artifacts<'a> {
    dir: &'a Path,
}

impl<'a> Artifacts<'a> {
    fn create(dir: &'a Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_path_buf(), source })?;
        Ok(Self { dir })
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Write { path, source })
    }
}

pub fn cmd_validate(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<Exit> {
    let (name, model) = load(cfg)?;
    let report = model.validate();
    print(out, &tables::validation(&name, &report))?;
    Ok(Exit::from_pass(report.is_valid()))
}

pub fn cmd_certify(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<Exit> {
    let (_, model) = load(cfg)?;
    if let Some(exit) = reject_invalid(&model, out)? {
        return Ok(exit);
    }
    let cert = ucc_certificate(&model, &cfg.certificate);
    print(out, &to_json(&cert)?)?;
    Ok(Exit::from_pass(cert.certified()))
}

fn reject_invalid(model: &GameModel, out: &mut dyn Write) -> CliResult<Option<Exit>> {
    let report = model.validate();
    if report.is_valid() {
        return Ok(None);
    }
    print(out, &tables::validation("problem", &report))?;
    Ok(Some(Exit::Failed))
}

#[derive(Debug, Clone, Serialize)]
pub struct RiccatiSummary {
    #[serde(flatten)]
    pub status: Status,
    pub min_delta1: f64,
    pub min_delta2: f64,
    /// Largest integral-form residual, when solved.
    pub residual: Option<f64>,
}

impl RiccatiSummary {
    fn of(sol: &RiccatiSolution) -> Self {
        let (d1, d2) = sol.min_margins();
        Self { status: sol.status.clone(), min_delta1: d1, min_delta2: d2, residual: sol.residual }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub steps: usize,
    pub horizon: f64,
    pub regimes: usize,
    pub options: SolveOptions,
    pub game: RiccatiSummary,
    /// Player 1 alone, then player 2 alone.
    pub single_player: Vec<RiccatiSummary>,
    pub comparison: Option<ComparisonReport>,
    /// `max ‖N ν̂ + ρ̃‖`.
    pub offset_residual: Option<f64>,
    /// `max ‖N Θ̂ + Lᵀ‖`.
    pub gain_residual: Option<f64>,
    pub pass: bool,
}

/// Solution objects downstream stages need.
pub struct Solved {
    pub riccati: RiccatiSolution,
    pub eta: EtaSolution,
    pub strategy: FeedbackStrategy,
}

/// Outcome of the solve stage. The Riccati solution is kept even when it
/// stops early, so its partial table can still be written.
pub enum Solution {
    Solved(Solved),
    Stopped(RiccatiSolution),
}

impl Solution {
    pub fn riccati(&self) -> &RiccatiSolution {
        match self {
            Solution::Solved(s) => &s.riccati,
            Solution::Stopped(r) => r,
        }
    }

    pub fn solved(&self) -> Option<&Solved> {
        match self {
            Solution::Solved(s) => Some(s),
            Solution::Stopped(_) => None,
        }
    }
}

/// Riccati system, both single-player problems, the comparison check, the
/// affine part and the strategy.
pub fn solve_stage(model: &GameModel, opts: &SolveOptions) -> CliResult<(SolveSummary, Solution)> {
    let riccati = solve_cdre(model, &model.grid, opts);
    let mut summary = SolveSummary {
        steps: model.grid.steps(),
        horizon: model.horizon(),
        regimes: model.regime_count(),
        options: *opts,
        game: RiccatiSummary::of(&riccati),
        single_player: Vec::new(),
        comparison: None,
        offset_residual: None,
        gain_residual: None,
        pass: false,
    };
    if !riccati.is_solved() {
        return Ok((summary, Solution::Stopped(riccati)));
    }
    let singles = [1, 2].map(|k| solve_single_player(model, k, &model.grid, opts));
    let [p1, p2] = singles;
    let (p1, p2) = (p1?, p2?);
    summary.single_player = vec![RiccatiSummary::of(&p1), RiccatiSummary::of(&p2)];
    summary.comparison = comparison_check(&riccati, &p1, &p2).ok();

    let eta = solve_eta(model, &riccati)?;
    let offset = feedback_offset(model, &riccati, &eta)?;
    let strategy = build_strategy(model, &riccati, &offset)?;
    summary.offset_residual = Some(offset.residual);
    summary.gain_residual = Some(strategy.gain_residual);
    summary.pass = summary.comparison.as_ref().is_some_and(|c| c.pass);
    Ok((summary, Solution::Solved(Solved { riccati, eta, strategy })))
}

fn status_exit(status: &Status) -> Exit {
    match status {
        Status::Solved => Exit::Ok,
        Status::ConstraintViolated { .. } => Exit::Constraint,
        Status::BlowUp { .. } => Exit::BlowUp,
    }
}

fn write_solution(dir: &Artifacts<'_>, solution: &Solution) -> CliResult<()> {
    dir.write("riccati.csv", &output::riccati_csv(solution.riccati()))?;
    if let Some(s) = solution.solved() {
        dir.write("eta.csv", &output::eta_csv(&s.eta))?;
        dir.write("gains.csv", &output::gains_csv(&s.strategy))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveDocument<'a> {
    problem: &'a str,
    solve: &'a SolveSummary,
}

pub fn cmd_solve(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<Exit> {
    let (name, model) = load(cfg)?;
    if let Some(exit) = reject_invalid(&model, out)? {
        return Ok(exit);
    }
    let (summary, solution) = solve_stage(&model, &cfg.solve)?;
    let dir = Artifacts::create(&cfg.out)?;
    write_solution(&dir, &solution)?;
    dir.write("summary.json", &to_json(&SolveDocument { problem: &name, solve: &summary })?)?;
    print(out, &tables::solve(&summary))?;
    Ok(match status_exit(&summary.game.status) {
        Exit::Ok => Exit::from_pass(summary.pass),
        e => e,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleSummary {
    pub gain_shift: f64,
    pub perturbations: usize,
    pub amplitude: f64,
    pub pieces: usize,
    /// `V(x, i)` from the value formula.
    pub value: f64,
    pub center_agrees: bool,
    pub report: SaddleReport,
    pub pass: bool,
}

fn saddle_stage(model: &GameModel, cfg: &RunConfig, solved: &Solved) -> CliResult<SaddleSummary> {
    let (x, i) = initial(cfg, model)?;
    let strategy = shifted(cfg, &solved.strategy);
    let perts = seeded_perturbations(model, cfg.perturbations, cfg.amplitude, cfg.pieces, cfg.mc.seed);
    let sc = SaddleConfig {
        paths: cfg.mc.paths,
        seed: cfg.mc.seed,
        workers: cfg.mc.workers,
        perturbations: cfg.perturbations,
        amplitude: cfg.amplitude,
        pieces: cfg.pieces,
    };
    let report = saddle_probe(model, &strategy, &x, i, &sc, &perts)?;
    let v = value(model, &solved.riccati, &solved.eta, &x, i)?;
    let center_agrees = report.center_agrees_with(v);
    Ok(SaddleSummary {
        gain_shift: cfg.gain_shift,
        perturbations: cfg.perturbations,
        amplitude: cfg.amplitude,
        pieces: cfg.pieces,
        value: v,
        center_agrees,
        pass: report.pass && center_agrees,
        report,
    })
}

fn shifted(cfg: &RunConfig, strategy: &FeedbackStrategy) -> FeedbackStrategy {
    if cfg.gain_shift == 0.0 {
        strategy.clone()
    } else {
        strategy.with_gain_shift(Players::First, cfg.gain_shift)
    }
}

fn dump_trajectories(dir: &Artifacts<'_>, model: &GameModel, cfg: &RunConfig, solved: &Solved) -> CliResult<()> {
    let Some(count) = cfg.dump_trajectories else {
        return Ok(());
    };
    let (x, i) = initial(cfg, model)?;
    let strategy = shifted(cfg, &solved.strategy);
    let mut text = String::new();
    for k in 0..count {
        let (path, noise) = scenario(model, i, cfg.mc.seed, k as u64);
        let traj = simulate(model, &ControlLaw::feedback(&strategy), &path, &noise, &x, i)?;
        output::trajectory_csv(&mut text, k, &model.grid, &traj, k == 0);
    }
    dir.write("trajectories.csv", &text)
}

#[derive(Serialize)]
struct SaddleDocument<'a> {
    problem: &'a str,
    solve: &'a SolveSummary,
    saddle: Option<&'a SaddleSummary>,
    pass: bool,
}

pub fn cmd_saddle_check(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<Exit> {
    let (name, model) = load(cfg)?;
    if let Some(exit) = reject_invalid(&model, out)? {
        return Ok(exit);
    }
    let (summary, solution) = solve_stage(&model, &cfg.solve)?;
    let dir = Artifacts::create(&cfg.out)?;
    write_solution(&dir, &solution)?;
    let Some(solved) = solution.solved() else {
        dir.write("summary.json", &to_json(&SaddleDocument { problem: &name, solve: &summary, saddle: None, pass: false })?)?;
        print(out, &tables::solve(&summary))?;
        return Ok(status_exit(&summary.game.status));
    };
    let saddle = saddle_stage(&model, cfg, solved)?;
    dump_trajectories(&dir, &model, cfg, solved)?;
    let doc = SaddleDocument { problem: &name, solve: &summary, saddle: Some(&saddle), pass: saddle.pass };
    dir.write("summary.json", &to_json(&doc)?)?;
    print(out, &tables::saddle(&saddle))?;
    Ok(Exit::from_pass(saddle.pass))
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualSummary {
    pub paths: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Largest `residual / (1 + sup|X|)` over the paths.
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Stationarity residual of the saddle strategy on `RESIDUAL_PATHS` seeded
/// closed-loop paths.
pub fn residual_stage(model: &GameModel, cfg: &RunConfig, solved: &Solved) -> CliResult<ResidualSummary> {
    let (x, i) = initial(cfg, model)?;
    let ratios = par_map(RESIDUAL_PATHS, cfg.mc.workers, |k| {
        let (path, noise) = scenario(model, i, cfg.mc.seed, k as u64);
        let r = fbsde_residual(model, &solved.riccati, &solved.eta, &solved.strategy, &path, &noise, &x, i)?;
        Ok(r.max_residual / (1.0 + r.state_sup))
    })?;
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    Ok(ResidualSummary {
        paths: RESIDUAL_PATHS,
        seed: cfg.mc.seed,
        tolerance: RESIDUAL_TOL,
        worst_ratio: worst,
        pass: worst <= RESIDUAL_TOL,
    })
}

#[derive(Serialize)]
struct ExampleDocument<'a> {
    problem: &'a str,
    validation: &'a ValidationReport,
    certificate: &'a UccCertificate,
    solve: &'a SolveSummary,
    residual: Option<&'a ResidualSummary>,
    saddle: Option<&'a SaddleSummary>,
    pass: bool,
}

/// validate, certify, solve, residual and saddle check on the built-in
/// game. Exit 0 iff every stage passes.
pub fn cmd_example(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<Exit> {
    let cfg = RunConfig { problem: None, ..cfg.clone() };
    let (name, model) = load(&cfg)?;
    let validation = model.validate();
    print(out, &tables::validation(&name, &validation))?;
    if !validation.is_valid() {
        return Ok(Exit::Failed);
    }
    let certificate = ucc_certificate(&model, &cfg.certificate);
    print(out, &tables::certificate(&certificate))?;

    let (summary, solution) = solve_stage(&model, &cfg.solve)?;
    print(out, &tables::solve(&summary))?;
    let dir = Artifacts::create(&cfg.out)?;
    write_solution(&dir, &solution)?;
    let (residual, saddle) = match solution.solved() {
        Some(s) => {
            let residual = residual_stage(&model, &cfg, s)?;
            print(out, &tables::residual(&residual))?;
            let saddle = saddle_stage(&model, &cfg, s)?;
            print(out, &tables::saddle(&saddle))?;
            dump_trajectories(&dir, &model, &cfg, s)?;
            (Some(residual), Some(saddle))
        }
        None => (None, None),
    };
    let pass = certificate.certified()
        && summary.pass
        && residual.as_ref().is_some_and(|r| r.pass)
        && saddle.as_ref().is_some_and(|s| s.pass);
    let doc = ExampleDocument {
        problem: &name,
        validation: &validation,
        certificate: &certificate,
        solve: &summary,
        residual: residual.as_ref(),
        saddle: saddle.as_ref(),
        pass,
    };
    dir.write("summary.json", &to_json(&doc)?)?;
    print(out, if pass { "example: all stages passed\n" } else { "example: FAILED\n" })?;
    if solution.solved().is_none() {
        return Ok(status_exit(&summary.game.status));
    }
    Ok(Exit::from_pass(pass))
}
