//! Ready-made problems: the three-regime scalar game used throughout the
//! tests and by `mjgame example`, plus two tiny analytic cases.

use crate::chain::Generator;
use crate::linalg::{Mat, Vector};
use crate::model::{self, CellCoefficients, GameModel, RegimeData, TimeGrid};

/// Three regimes, scalar state, one scalar control per player, `T = 1`,
/// time-constant coefficients, no inhomogeneous terms.
pub const THREE_REGIME_JSON: &str = include_str!("../data/three_regime.json");

pub fn three_regime() -> GameModel {
    model::from_json_str(THREE_REGIME_JSON).expect("embedded problem parses")
}

/// Single regime, scalar, `A = C = D1 = Q = 0`, `B1 = R11 = 1`, no second
/// player, `G = 1` on `[0, 1]`. The Riccati equation is `Ṗ = P²` with
/// `P(t) = 1 / (2 - t)`.
pub fn scalar_quadratic(steps: usize) -> GameModel {
    let mut c = CellCoefficients::zeros(1, 1, 0);
    c.b1 = Mat::from_element(1, 1, 1.0);
    c.r11 = Mat::from_element(1, 1, 1.0);
    GameModel {
        n: 1,
        m1: 1,
        m2: 0,
        generator: Generator::unchecked(Mat::zeros(1, 1)),
        grid: TimeGrid::new(1.0, steps).expect("positive steps"),
        regimes: vec![RegimeData::constant(c, Mat::from_element(1, 1, 1.0), Vector::zeros(1))],
    }
}

/// Zero dynamics and zero cost except `R = diag(I, -I)`; terminal weights
/// `G(i)` as given. The Riccati solution is `P ≡ G`.
pub fn zero_game(n: usize, m1: usize, m2: usize, generator: Generator, terminals: Vec<Mat>, steps: usize) -> GameModel {
    let mut c = CellCoefficients::zeros(n, m1, m2);
    c.r11 = Mat::identity(m1, m1);
    c.r22 = -Mat::identity(m2, m2);
    GameModel {
        n,
        m1,
        m2,
        generator,
        grid: TimeGrid::new(1.0, steps).expect("positive steps"),
        regimes: terminals.into_iter().map(|g| RegimeData::constant(c.clone(), g, Vector::zeros(n))).collect(),
    }
}
