use std::fmt;

use thiserror::Error;

/// Which part of the indefinite block matrix failed its sign requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// Player-1 block `N11`, required positive definite.
    Leading,
    /// Schur complement `N22 - N12ᵀ N11⁻¹ N12`, required negative definite.
    Schur,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::Leading => write!(f, "N11"),
            Block::Schur => write!(f, "Schur complement"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{block} has wrong sign: extreme eigenvalue {eigenvalue:e}{}", location(*.t, *.regime))]
pub struct IndefinitenessError {
    pub block: Block,
    pub eigenvalue: f64,
    pub t: Option<f64>,
    /// Zero-based regime.
    pub regime: Option<usize>,
}

fn location(t: Option<f64>, regime: Option<usize>) -> String {
    match (t, regime) {
        (Some(t), Some(i)) => format!(" at t={t}, regime {}", i + 1),
        (Some(t), None) => format!(" at t={t}"),
        (None, Some(i)) => format!(" in regime {}", i + 1),
        (None, None) => String::new(),
    }
}

impl IndefinitenessError {
    pub fn at(mut self, t: f64, regime: usize) -> Self {
        self.t = Some(t);
        self.regime = Some(regime);
        self
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("regime {value} outside 1..={count}")]
    RegimeOutOfRange { value: usize, count: usize },
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("invalid generator: {0}")]
    Generator(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("problem file: {0}")]
    Parse(String),
    #[error("riccati solution is not usable: {0}")]
    Unsolved(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("state became non-finite at t={t}")]
    NonFinite { t: f64 },
    #[error("lifted state is not block diagonal")]
    NotBlockDiagonal,
    #[error(transparent)]
    Indefinite(#[from] IndefinitenessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
