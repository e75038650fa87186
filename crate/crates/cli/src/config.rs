use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mjgame_core::game::CertificateOptions;
use mjgame_core::riccati::SolveOptions;
use mjgame_core::sim::McConfig;

pub const MIN_STEPS: usize = 10;
pub const MIN_SADDLE_PATHS: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "mjgame", version, about = "Zero-sum LQ games with Markov regime switching: solve and verify")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Validate,
    Solve,
    Certify,
    SaddleCheck,
    Example,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a problem file against the model invariants.
    Validate(RunArgs),
    /// Integrate the Riccati system and build the saddle strategy.
    Solve(RunArgs),
    /// Uniform convexity-concavity certificate as JSON.
    Certify(RunArgs),
    /// Monte-Carlo check of the saddle inequalities.
    SaddleCheck(RunArgs),
    /// Full pipeline on the built-in three-regime game.
    Example(RunArgs),
}

impl Command {
    pub fn split(self) -> (CommandKind, RunArgs) {
        match self {
            Command::Validate(a) => (CommandKind::Validate, a),
            Command::Solve(a) => (CommandKind::Solve, a),
            Command::Certify(a) => (CommandKind::Certify, a),
            Command::SaddleCheck(a) => (CommandKind::SaddleCheck, a),
            Command::Example(a) => (CommandKind::Example, a),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Problem file (JSON).
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Override the number of grid steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Required margin in the sign constraints.
    #[arg(long, default_value_t = SolveOptions::default().delta_min)]
    pub delta_min: f64,
    /// Norm beyond which the Riccati solution counts as exploding.
    #[arg(long, default_value_t = SolveOptions::default().p_max)]
    pub p_max: f64,
    /// Monte-Carlo paths.
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Perturbations per player.
    #[arg(long, default_value_t = 8)]
    pub perturbations: usize,
    /// Standard deviation of each perturbation level.
    #[arg(long, default_value_t = 0.2)]
    pub amplitude: f64,
    /// Initial state, comma separated. Defaults to all ones.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Option<Vec<f64>>,
    /// One-based initial regime.
    #[arg(long, default_value_t = 1)]
    pub regime: usize,
    /// Add this to every entry of player 1's feedback gain.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub gain_shift: f64,
    /// Young weight of the certificate.
    #[arg(long, default_value_t = 1.0)]
    pub weight: f64,
    /// Growth rate to use in the certificate instead of the computed one.
    #[arg(long, allow_negative_numbers = true)]
    pub growth_rate: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Write the first N closed-loop paths to trajectories.csv.
    #[arg(long, num_args = 0..=1, default_missing_value = "10")]
    pub dump_trajectories: Option<usize>,
}

/// Everything a command needs, after parsing.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: Option<PathBuf>,
    pub steps: Option<usize>,
    pub solve: SolveOptions,
    pub mc: McConfig,
    pub perturbations: usize,
    pub amplitude: f64,
    pub pieces: usize,
    pub x: Option<Vec<f64>>,
    pub regime: usize,
    pub gain_shift: f64,
    pub certificate: CertificateOptions,
    pub out: PathBuf,
    pub dump_trajectories: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: None,
            steps: None,
            solve: SolveOptions::default(),
            mc: McConfig { paths: 10_000, seed: 2024, workers: 1 },
            perturbations: 8,
            amplitude: 0.2,
            pieces: 4,
            x: None,
            regime: 1,
            gain_shift: 0.0,
            certificate: CertificateOptions::default(),
            out: PathBuf::from("out"),
            dump_trajectories: None,
        }
    }
}

impl From<RunArgs> for RunConfig {
    fn from(a: RunArgs) -> Self {
        Self {
            problem: a.problem,
            steps: a.steps,
            solve: SolveOptions { delta_min: a.delta_min, p_max: a.p_max },
            mc: McConfig { paths: a.paths, seed: a.seed, workers: a.workers },
            perturbations: a.perturbations,
            amplitude: a.amplitude,
            x: a.x,
            regime: a.regime,
            gain_shift: a.gain_shift,
            certificate: CertificateOptions { weight: a.weight, forced_growth: a.growth_rate },
            out: a.out,
            dump_trajectories: a.dump_trajectories,
            ..Self::default()
        }
    }
}

impl RunConfig {
    /// Rejects settings `kind` cannot run with.
    pub fn check(&self, kind: CommandKind) -> Result<(), String> {
        if let Some(k) = self.steps {
            if k < MIN_STEPS {
                return Err(format!("--steps must be at least {MIN_STEPS}, got {k}"));
            }
        }
        if kind != CommandKind::Example && self.problem.is_none() {
            return Err("--problem is required".into());
        }
        if !(self.solve.delta_min >= 0.0) || !(self.solve.p_max > 0.0) {
            return Err("--delta-min must be non-negative and --p-max positive".into());
        }
        if !(self.certificate.weight > 0.0) {
            return Err("--weight must be positive".into());
        }
        if matches!(kind, CommandKind::SaddleCheck | CommandKind::Example) {
            if self.mc.paths < MIN_SADDLE_PATHS {
                return Err(format!("--paths must be at least {MIN_SADDLE_PATHS}, got {}", self.mc.paths));
            }
            if self.mc.workers == 0 {
                return Err("--workers must be at least 1".into());
            }
            if self.perturbations == 0 || !(self.amplitude > 0.0) {
                return Err("need at least one perturbation with positive amplitude".into());
            }
        }
        if self.regime == 0 {
            return Err("--regime is one-based".into());
        }
        Ok(())
    }
}
