//! Two-person zero-sum stochastic linear-quadratic differential games whose
//! coefficients switch with a continuous-time Markov chain.
//!
//! The crate integrates the constrained coupled differential Riccati
//! equations backward in time, builds the closed-loop saddle strategy
//! `u = Θ̂(t, α) X + ν̂`, and ships the numerical checks around it: saddle
//! inequalities by Monte-Carlo, comparison bracketing against the two
//! single-player problems, the stationarity residual along simulated paths,
//! and a Gronwall-type certificate for uniform convexity-concavity.
//!
//! Regimes are zero-based inside the crate. Files and user-facing output
//! number them from 1.

pub mod affine;
pub mod builtin;
pub mod chain;
mod error;
pub mod game;
pub mod linalg;
pub mod model;
mod ode;
pub mod output;
pub mod riccati;
pub mod sim;

pub use error::{Block, Error, IndefinitenessError, Result};
pub use model::{GameModel, RegimeIndex, TimeGrid};
